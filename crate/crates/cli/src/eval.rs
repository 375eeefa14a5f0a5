//! `dcr eval`.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use concept_reasoner::analysis::{
    explain_misclassifications, extract_rules, mean_rule_length, rule_error_rate, ConceptSource, RuleErrorReport,
};
use concept_reasoner::datasets::{LabeledDataset, SplitTag};
use concept_reasoner::evaluation::{
    accuracy, baseline_logreg, baseline_tree, counterfactual_report, flip_all_falsifies, roc_auc_macro, sensitivity,
    tau_sweep, BaselineData, ConceptInputs, LogRegConfig, SensitivityConfig,
};
use concept_reasoner::pipeline::ConceptModel;
use concept_reasoner::reasoner::Inference;
use concept_reasoner::rules::{aggregate_global, AggregationMode, RuleRecord, DEFAULT_THRESHOLD};
use concept_reasoner::training::Checkpoint;
use concept_reasoner::Error;
use serde::Serialize;
use serde_json::json;

use crate::output::{self, CliError, Reporter};
use crate::KindArg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Auc,
    Rules,
    Errors,
    Sensitivity,
    Counterfactual,
    TauSweep,
    Baselines,
}

impl Which {
    fn token(self) -> &'static str {
        match self {
            Which::Auc => "auc",
            Which::Rules => "rules",
            Which::Errors => "errors",
            Which::Sensitivity => "sensitivity",
            Which::Counterfactual => "counterfactual",
            Which::TauSweep => "tau-sweep",
            Which::Baselines => "baselines",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for SplitTag {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitTag::Train,
            SplitArg::Val => SplitTag::Val,
            SplitArg::Test => SplitTag::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(value_enum)]
    which: Which,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Dataset family, for comparisons against its known rules.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Split the report is computed on.
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Role and relevance threshold for Booleanization.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Temperature grid for `tau-sweep`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 1.0, 10.0, 100.0])]
    taus: Vec<f64>,
    /// Grid points trained concurrently in `tau-sweep`.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Perturbations per sample and radius for `sensitivity`.
    #[arg(long, default_value_t = 10)]
    n_perturb: usize,
    /// Depth limit of the tree baseline; defaults to the number of concepts.
    #[arg(long)]
    max_depth: Option<usize>,
    /// Output directory; defaults to `<output-dir>/eval`.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Context {
    model: ConceptModel<f64>,
    checkpoint: Checkpoint,
    ds: LabeledDataset,
    rows: Vec<usize>,
    inference: Inference<f64>,
}

impl Context {
    fn labels(&self) -> Vec<usize> {
        self.ds.gather_labels(&self.rows)
    }
}

struct Report {
    json: serde_json::Value,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    /// Extra CSV files, by name suffix.
    extra: Vec<(&'static str, Vec<&'static str>, Vec<Vec<String>>)>,
}

fn bits(v: &[bool]) -> String {
    v.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn rule_error_json(report: &RuleErrorReport) -> serde_json::Value {
    json!({
        "source": report.source,
        "overall_rate": report.overall_rate(),
        "max_group_rate": report.max_group_rate(),
        "groups": report.groups.iter().map(|g| json!({
            "reference": g.reference.as_ref().map(ToString::to_string),
            "samples": g.samples,
            "errors": g.errors,
            "error_rate": g.error_rate(),
            "modal_rule": g.modal_rule().map(ToString::to_string),
            "agreement": g.agreement(),
        })).collect::<Vec<_>>(),
        "unmatched": { "samples": report.unmatched.samples, "errors": report.unmatched.errors },
    })
}

fn auc_report(ctx: &Context) -> Result<Report, CliError> {
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for tag in [SplitTag::Train, SplitTag::Val, SplitTag::Test] {
        let split_rows = ctx.ds.splits.get(tag);
        if split_rows.is_empty() {
            continue;
        }
        let (_, inf) = ctx.model.infer_rows(&ctx.ds, split_rows)?;
        let labels = ctx.ds.gather_labels(split_rows);
        let auc = roc_auc_macro(&inf.scores, &labels, ctx.ds.n_classes).ok();
        let acc = accuracy(&inf.predictions(), &labels);
        println!("{}: accuracy {acc:.4}, AUC {}", tag.token(), auc.map_or("undefined".into(), |a| format!("{a:.4}")));
        rows.push(vec![
            tag.token().to_string(),
            split_rows.len().to_string(),
            auc.map_or(String::new(), |a| a.to_string()),
            acc.to_string(),
        ]);
        entries.push(json!({ "split": tag.token(), "samples": split_rows.len(), "auc": auc, "accuracy": acc }));
    }
    Ok(Report {
        json: json!({ "splits": entries }),
        header: vec!["split", "samples", "auc", "accuracy"],
        rows,
        extra: Vec::new(),
    })
}

fn rules_report(ctx: &Context, args: &EvalArgs) -> Result<Report, CliError> {
    let rules = extract_rules(&ctx.inference, None, AggregationMode::Predicted, args.threshold)?;
    let mean_len = mean_rule_length(&rules);
    let global = aggregate_global(rules);
    for line in global.render() {
        println!("{line}");
    }
    println!("mean rule length {mean_len:.3}");
    let records: Vec<RuleRecord> = global.records();
    let rows = records
        .iter()
        .map(|r| vec![r.class.to_string(), r.rule.to_string(), r.count.to_string()])
        .collect();
    let mut errors = Vec::new();
    if let Some(reference) = args.kind.and_then(|k| concept_reasoner::datasets::DatasetKind::from(k).ground_truth_rules()) {
        let concepts = ctx.ds.gather_concepts(&ctx.rows);
        for source in [ConceptSource::Predicted, ConceptSource::GroundTruth] {
            let report = rule_error_rate(&ctx.inference, &concepts, &reference, source, args.threshold)?;
            println!(
                "rule error rate ({}): overall {:.4}, worst rule {:.4}",
                match source {
                    ConceptSource::Predicted => "predicted concepts",
                    ConceptSource::GroundTruth => "ground-truth concepts",
                },
                report.overall_rate(),
                report.max_group_rate()
            );
            errors.push(rule_error_json(&report));
        }
    }
    Ok(Report {
        json: json!({
            "mean_rule_length": mean_len,
            "rendered": global.render(),
            "rules": records,
            "rule_errors": errors,
        }),
        header: vec!["class", "rule", "count"],
        rows,
        extra: Vec::new(),
    })
}

fn errors_report(ctx: &Context, args: &EvalArgs) -> Result<Report, CliError> {
    let mistakes = explain_misclassifications(&ctx.inference, &ctx.labels(), args.threshold)?;
    for m in &mistakes {
        println!("{m}");
    }
    println!("{} misclassified of {}", mistakes.len(), ctx.rows.len());
    let rows = mistakes
        .iter()
        .map(|m| {
            vec![
                ctx.rows[m.sample].to_string(),
                bits(&m.concepts),
                m.rule.to_string(),
                m.predicted.to_string(),
                m.label.to_string(),
            ]
        })
        .collect();
    Ok(Report {
        json: json!({ "samples": ctx.rows.len(), "misclassified": mistakes }),
        header: vec!["row", "concepts", "rule", "predicted", "label"],
        rows,
        extra: Vec::new(),
    })
}

fn sensitivity_report(ctx: &Context, args: &EvalArgs) -> Result<Report, CliError> {
    let cfg = SensitivityConfig {
        n_perturb: args.n_perturb,
        seed: ctx.checkpoint.config.seed,
        ..SensitivityConfig::standardized(&ctx.ds)
    };
    let features = ctx.ds.gather_features(&ctx.rows);
    let report = sensitivity(&ctx.model, &features, &cfg)?;
    println!("sensitivity AUC {:.4} ({} samples skipped)", report.auc, report.skipped);
    let rows = report
        .radii
        .iter()
        .zip(&report.distances)
        .map(|(r, d)| vec![r.to_string(), d.to_string()])
        .collect();
    Ok(Report {
        json: json!({ "config": cfg, "report": report }),
        header: vec!["radius", "distance"],
        rows,
        extra: Vec::new(),
    })
}

fn counterfactual_csv(ctx: &Context, args: &EvalArgs) -> Result<Report, CliError> {
    let semantics = ctx.model.reasoner.semantics();
    let report = counterfactual_report(&ctx.inference, semantics, args.threshold)?;
    let mut holds = 0;
    for rec in &report.records {
        if flip_all_falsifies(&rec.rule, &rec.row.old_concepts)? {
            holds += 1;
        }
    }
    let flip_all = holds as f64 / report.records.len().max(1) as f64;
    println!(
        "confidence AUC {:.4}, prediction changed for {:.1}% of samples, flipping all literals falsifies the rule for {:.1}%",
        report.auc,
        100.0 * report.changed_fraction,
        100.0 * flip_all
    );
    for rec in report.records.iter().take(5) {
        println!("{}", rec.row);
    }
    let rows = report
        .records
        .iter()
        .map(|r| {
            vec![
                ctx.rows[r.sample].to_string(),
                r.row.to_string(),
                r.rule.to_string(),
                r.flipped.len().to_string(),
                r.confidences.last().copied().unwrap_or(f64::NAN).to_string(),
            ]
        })
        .collect();
    let curve = report
        .xs
        .iter()
        .zip(&report.curve)
        .map(|(x, c)| vec![x.to_string(), c.to_string()])
        .collect();
    Ok(Report {
        json: json!({ "flip_all_falsifies": flip_all, "report": report }),
        header: vec!["row", "counterfactual", "rule", "flips", "confidence"],
        rows,
        extra: vec![("curve", vec!["flip_fraction", "confidence"], curve)],
    })
}

fn sweep_report(ctx: &Context, args: &EvalArgs) -> Result<Report, CliError> {
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let rows = tau_sweep(&ctx.model.encoder, &ctx.ds, &ctx.checkpoint.config, &args.taus, args.jobs)?;
    for r in &rows {
        println!("tau {}: mean rule length {:.3}, test AUC {:.4}", r.temperature, r.mean_rule_length, r.test_auc);
    }
    let csv = rows
        .iter()
        .map(|r| vec![r.temperature.to_string(), r.mean_rule_length.to_string(), r.test_auc.to_string()])
        .collect();
    Ok(Report {
        json: json!({ "rows": rows }),
        header: vec!["temperature", "mean_rule_length", "test_auc"],
        rows: csv,
        extra: Vec::new(),
    })
}

#[derive(Serialize)]
struct BaselineEntry {
    model: &'static str,
    inputs: ConceptInputs,
    test_auc: f64,
    detail: serde_json::Value,
}

fn baselines_report(ctx: &Context, args: &EvalArgs) -> Result<Report, CliError> {
    let train_rows = ctx.ds.splits.get(SplitTag::Train);
    if train_rows.is_empty() {
        return Err(Error::Config("baselines need a training split".into()).into());
    }
    let (_, train_inf) = ctx.model.infer_rows(&ctx.ds, train_rows)?;
    let train_y = ctx.ds.gather_labels(train_rows);
    let test_y = ctx.labels();
    let depth = args.max_depth.unwrap_or(ctx.ds.n_concepts);
    let dcr_auc = roc_auc_macro(&ctx.inference.scores, &test_y, ctx.ds.n_classes)?;
    let mut entries = vec![BaselineEntry {
        model: "dcr",
        inputs: ConceptInputs::Degrees,
        test_auc: dcr_auc,
        detail: json!({ "mean_rule_length": mean_rule_length(&extract_rules(&ctx.inference, None, AggregationMode::Predicted, args.threshold)?) }),
    }];
    for inputs in [ConceptInputs::Degrees, ConceptInputs::Hardened] {
        let (train_x, test_x) = (inputs.prepare(&train_inf.truth), inputs.prepare(&ctx.inference.truth));
        let data = BaselineData {
            train_x: &train_x,
            train_y: &train_y,
            test_x: &test_x,
            test_y: &test_y,
            n_inputs: ctx.ds.n_concepts,
            n_classes: ctx.ds.n_classes,
        };
        let (lr, lr_auc) = baseline_logreg(data, &LogRegConfig::default())?;
        entries.push(BaselineEntry {
            model: "logistic_regression",
            inputs,
            test_auc: lr_auc,
            detail: json!({ "weights": lr.weights, "bias": lr.bias }),
        });
        let (tree, tree_auc) = baseline_tree(data, depth)?;
        entries.push(BaselineEntry {
            model: "decision_tree",
            inputs,
            test_auc: tree_auc,
            detail: json!({ "max_depth": depth, "depth": tree.depth(), "leaves": tree.n_leaves(), "rules": tree.rules() }),
        });
    }
    for e in &entries {
        println!("{:<20} {:<9} test AUC {:.4}", e.model, format!("{:?}", e.inputs).to_lowercase(), e.test_auc);
    }
    let rows = entries
        .iter()
        .map(|e| vec![e.model.to_string(), format!("{:?}", e.inputs).to_lowercase(), e.test_auc.to_string()])
        .collect();
    Ok(Report {
        json: json!({ "baselines": entries }),
        header: vec!["model", "inputs", "test_auc"],
        rows,
        extra: Vec::new(),
    })
}

pub fn run(output_dir: &Path, args: &EvalArgs) -> Result<(), CliError> {
    let reporter = Reporter::new("eval");
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        return Err(CliError::Usage(format!("--threshold {} must lie in (0, 1)", args.threshold)));
    }
    let checkpoint = output::load_checkpoint(&args.checkpoint)?;
    if !checkpoint.has_prefix("dcr.") {
        return Err(Error::Contract(format!("{} is an encoder-only checkpoint", args.checkpoint.display())).into());
    }
    let model = ConceptModel::<f64>::from_checkpoint(&checkpoint)?;
    let ds = output::load_dataset(&args.data)?;
    model.check_dataset(&ds)?;
    let tag = SplitTag::from(args.split);
    let rows = ds.splits.get(tag).to_vec();
    if rows.is_empty() {
        return Err(Error::Config(format!("the dataset has no {} split", tag.token())).into());
    }
    let (_, inference) = model.infer_rows(&ds, &rows)?;
    let ctx = Context {
        model,
        checkpoint,
        ds,
        rows,
        inference,
    };

    let report = reporter.time(args.which.token(), || match args.which {
        Which::Auc => auc_report(&ctx),
        Which::Rules => rules_report(&ctx, args),
        Which::Errors => errors_report(&ctx, args),
        Which::Sensitivity => sensitivity_report(&ctx, args),
        Which::Counterfactual => counterfactual_csv(&ctx, args),
        Which::TauSweep => sweep_report(&ctx, args),
        Which::Baselines => baselines_report(&ctx, args),
    })?;

    let out = args.out.clone().unwrap_or_else(|| output_dir.join("eval"));
    let name = args.which.token();
    let mut manifest = reporter.manifest();
    manifest.config = Some(ctx.checkpoint.config.clone());
    manifest.seed = Some(ctx.checkpoint.config.seed);
    manifest.artifacts.insert("checkpoint".into(), args.checkpoint.clone());
    manifest.artifacts.insert("dataset".into(), args.data.clone());

    let json_path = out.join(format!("{name}.json"));
    output::write_json(&json_path, &report.json)?;
    let csv_path = out.join(format!("{name}.csv"));
    output::write_csv(&csv_path, &report.header, &report.rows)?;
    manifest.artifacts.insert(format!("{name}.json"), json_path);
    manifest.artifacts.insert(format!("{name}.csv"), csv_path);
    for (suffix, header, rows) in &report.extra {
        let path = out.join(format!("{name}_{suffix}.csv"));
        output::write_csv(&path, header, rows)?;
        manifest.artifacts.insert(format!("{name}_{suffix}.csv"), path);
    }
    manifest.finish(&out.join(format!("{name}.manifest.json")))
}
