//! Shared training runs and reporting for the acceptance suite.

use std::io::Write;
use std::sync::OnceLock;

use concept_reasoner::datasets::{split, DatasetKind, LabeledDataset, SplitTag};
use concept_reasoner::pipeline::{fit, TrainedModel};
use concept_reasoner::reasoner::Inference;
use concept_reasoner::training::TrainConfig;

pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const N_SAMPLES: usize = 3000;
pub const EMBEDDING_SIZE: usize = 32;

/// One trained seed with its split inferences.
pub struct Run {
    pub seed: u64,
    pub dataset: LabeledDataset,
    pub config: TrainConfig,
    pub trained: TrainedModel<f64>,
    pub train: Inference<f64>,
    pub test: Inference<f64>,
}

impl Run {
    pub fn rows(&self, tag: SplitTag) -> &[usize] {
        self.dataset.splits.get(tag)
    }

    pub fn labels(&self, tag: SplitTag) -> Vec<usize> {
        self.dataset.gather_labels(self.rows(tag))
    }

    pub fn concepts(&self, tag: SplitTag) -> Vec<bool> {
        self.dataset.gather_concepts(self.rows(tag))
    }
}

pub fn config(seed: u64) -> TrainConfig {
    TrainConfig {
        embedding_size: EMBEDDING_SIZE,
        seed,
        ..TrainConfig::default()
    }
}

fn train(kind: DatasetKind, seed: u64) -> Run {
    let mut dataset = kind.generate(N_SAMPLES, seed).expect("dataset");
    split(&mut dataset, seed);
    let config = config(seed);
    let trained = fit::<f64>(&dataset, &config).unwrap_or_else(|e| panic!("{kind} seed {seed}: {e}"));
    let infer = |tag| trained.model.infer_rows(&dataset, dataset.splits.get(tag)).expect("inference").1;
    let (train, test) = (infer(SplitTag::Train), infer(SplitTag::Test));
    Run {
        seed,
        dataset,
        config,
        trained,
        train,
        test,
    }
}

/// All seeds of one dataset, trained once per process.
pub fn runs(kind: DatasetKind) -> &'static [Run] {
    static XOR: OnceLock<Vec<Run>> = OnceLock::new();
    static TRIG: OnceLock<Vec<Run>> = OnceLock::new();
    static DOT: OnceLock<Vec<Run>> = OnceLock::new();
    let cell = match kind {
        DatasetKind::Xor => &XOR,
        DatasetKind::Trig => &TRIG,
        DatasetKind::Dot => &DOT,
    };
    cell.get_or_init(|| {
        let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
        let mut out = Vec::with_capacity(SEEDS.len());
        for chunk in SEEDS.chunks(jobs) {
            std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|&seed| s.spawn(move || train(kind, seed))).collect();
                out.extend(handles.into_iter().map(|h| h.join().expect("training thread")));
            });
        }
        out
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

pub fn fmt_all(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

/// Verdict line of one criterion, written to the raw stdout handle that the
/// test harness leaves uncaptured.
pub fn verdict(criterion: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[{tag}] criterion {criterion}: {detail}");
    let _ = out.flush();
}

/// Informational line that never decides a verdict.
pub fn note(criterion: &str, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "       criterion {criterion} (info): {detail}");
    let _ = out.flush();
}
