//! Seeded synthetic benchmarks with known concept structure.
//!
//! * `xor`: two uniform inputs, concepts are `x_i > 0.5`, label is their XOR.
//! * `trig`: three latent normals seen through `sin(h)+h`, `cos(h)+h` and
//!   `‖h‖²`; concepts are `h_i > 0`, label is `h_0 + h_1 > 0`.
//! * `dot`: two planar vectors seen through their sum and difference; the
//!   label `v_0·v_1 > 0` is not a function of the concepts.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::{BooleanRule, Literal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Xor,
    Trig,
    Dot,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 3] = [DatasetKind::Xor, DatasetKind::Trig, DatasetKind::Dot];

    pub fn token(self) -> &'static str {
        match self {
            DatasetKind::Xor => "xor",
            DatasetKind::Trig => "trig",
            DatasetKind::Dot => "dot",
        }
    }

    pub fn generate(self, n_samples: usize, seed: u64) -> Result<LabeledDataset> {
        match self {
            DatasetKind::Xor => gen_xor(n_samples, seed),
            DatasetKind::Trig => gen_trig(n_samples, seed),
            DatasetKind::Dot => gen_vector(n_samples, seed),
        }
    }

    /// Ground-truth rules, where the label is a function of the concepts.
    pub fn ground_truth_rules(self) -> Option<Vec<BooleanRule>> {
        let rule = |class, lits: Vec<Literal>| BooleanRule::new(class, lits).expect("distinct concepts");
        match self {
            DatasetKind::Xor => Some(vec![
                rule(0, vec![Literal::neg(0), Literal::neg(1)]),
                rule(0, vec![Literal::pos(0), Literal::pos(1)]),
                rule(1, vec![Literal::neg(0), Literal::pos(1)]),
                rule(1, vec![Literal::pos(0), Literal::neg(1)]),
            ]),
            DatasetKind::Trig => Some(vec![
                rule(0, (0..3).map(Literal::neg).collect()),
                rule(1, (0..3).map(Literal::pos).collect()),
            ]),
            DatasetKind::Dot => None,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| Error::Config(format!("unknown dataset `{s}` (expected xor, trig or dot)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn token(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

impl FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            _ => Err(Error::Parse(format!("unknown split tag `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, tag: SplitTag) -> &[usize] {
        match tag {
            SplitTag::Train => &self.train,
            SplitTag::Val => &self.val,
            SplitTag::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major features, binary concepts and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub kind: Option<DatasetKind>,
    pub n_features: usize,
    pub n_concepts: usize,
    pub n_classes: usize,
    pub features: Vec<f64>,
    pub concepts: Vec<bool>,
    pub labels: Vec<usize>,
    pub splits: Splits,
}

impl LabeledDataset {
    pub fn new(
        n_features: usize,
        n_concepts: usize,
        n_classes: usize,
        features: Vec<f64>,
        concepts: Vec<bool>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 || n_features == 0 || n_concepts == 0 || n_classes < 2 {
            return Err(Error::Config("dataset needs samples, features, concepts and two classes".into()));
        }
        if features.len() != n * n_features || concepts.len() != n * n_concepts {
            return Err(Error::shape(format!(
                "{n} labels but {} feature and {} concept values",
                features.len(),
                concepts.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::contract(format!("label {y} outside {n_classes} classes")));
        }
        Ok(Self {
            kind: None,
            n_features,
            n_concepts,
            n_classes,
            features,
            concepts,
            labels,
            splits: Splits::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn concept_row(&self, i: usize) -> &[bool] {
        &self.concepts[i * self.n_concepts..(i + 1) * self.n_concepts]
    }

    pub fn ground_truth_rules(&self) -> Option<Vec<BooleanRule>> {
        self.kind.and_then(DatasetKind::ground_truth_rules)
    }

    pub fn gather_features(&self, rows: &[usize]) -> Vec<f64> {
        rows.iter().flat_map(|&r| self.feature_row(r).iter().copied()).collect()
    }

    pub fn gather_concepts(&self, rows: &[usize]) -> Vec<bool> {
        rows.iter().flat_map(|&r| self.concept_row(r).iter().copied()).collect()
    }

    pub fn gather_labels(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&r| self.labels[r]).collect()
    }

    /// Per-feature standard deviation over `rows`.
    pub fn feature_std(&self, rows: &[usize]) -> Vec<f64> {
        let n = rows.len().max(1) as f64;
        (0..self.n_features)
            .map(|f| {
                let mean = rows.iter().map(|&r| self.feature_row(r)[f]).sum::<f64>() / n;
                let var = rows.iter().map(|&r| (self.feature_row(r)[f] - mean).powi(2)).sum::<f64>() / n;
                var.sqrt()
            })
            .collect()
    }

    pub fn split_of(&self, sample: usize) -> Option<SplitTag> {
        [SplitTag::Train, SplitTag::Val, SplitTag::Test]
            .into_iter()
            .find(|&t| self.splits.get(t).contains(&sample))
    }

    /// Writes `x_*, c_*, y, split` columns.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut tags = vec![""; self.len()];
        for tag in [SplitTag::Train, SplitTag::Val, SplitTag::Test] {
            for &i in self.splits.get(tag) {
                tags[i] = tag.token();
            }
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.n_features).map(|i| format!("x_{i}")).collect();
        header.extend((0..self.n_concepts).map(|i| format!("c_{i}")));
        header.push("y".into());
        header.push("split".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.feature_row(i).iter().map(f64::to_string).collect();
            rec.extend(self.concept_row(i).iter().map(|&c| u8::from(c).to_string()));
            rec.push(self.labels[i].to_string());
            rec.push(tags[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let n_features = header.iter().filter(|h| h.starts_with("x_")).count();
        let n_concepts = header.iter().filter(|h| h.starts_with("c_")).count();
        let expected = n_features + n_concepts + 2;
        if header.len() != expected || header.get(expected - 2) != Some("y") || header.get(expected - 1) != Some("split") {
            return Err(Error::Parse("dataset header must be x_*, c_*, y, split".into()));
        }
        let (mut features, mut concepts, mut labels) = (Vec::new(), Vec::new(), Vec::new());
        let mut splits = Splits::default();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or_default();
            for i in 0..n_features {
                features.push(
                    field(i)
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {row}, x_{i}: {e}")))?,
                );
            }
            for i in 0..n_concepts {
                concepts.push(match field(n_features + i) {
                    "0" => false,
                    "1" => true,
                    other => return Err(Error::Parse(format!("row {row}, c_{i}: `{other}` is not 0/1"))),
                });
            }
            labels.push(
                field(expected - 2)
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("row {row}, y: {e}")))?,
            );
            match field(expected - 1) {
                "" => {}
                tag => match tag.parse::<SplitTag>()? {
                    SplitTag::Train => splits.train.push(row),
                    SplitTag::Val => splits.val.push(row),
                    SplitTag::Test => splits.test.push(row),
                },
            }
        }
        let n_classes = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
        let mut ds = LabeledDataset::new(n_features, n_concepts, n_classes, features, concepts, labels)?;
        ds.splits = splits;
        Ok(ds)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Seeded 70/10/20 split; validation and test sizes round down.
pub fn split(dataset: &mut LabeledDataset, seed: u64) {
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = n / 10;
    let n_test = n / 5;
    let n_train = n - n_val - n_test;
    dataset.splits = Splits {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    };
}

fn check_n(n_samples: usize) -> Result<()> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    Ok(())
}

fn finish(kind: DatasetKind, n_features: usize, n_concepts: usize, parts: (Vec<f64>, Vec<bool>, Vec<usize>)) -> Result<LabeledDataset> {
    let (features, concepts, labels) = parts;
    let mut ds = LabeledDataset::new(n_features, n_concepts, 2, features, concepts, labels)?;
    ds.kind = Some(kind);
    Ok(ds)
}

pub fn xor_sample(x: [f64; 2]) -> ([bool; 2], usize) {
    let c = [x[0] > 0.5, x[1] > 0.5];
    (c, usize::from(c[0] ^ c[1]))
}

pub fn gen_xor(n_samples: usize, seed: u64) -> Result<LabeledDataset> {
    check_n(n_samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n_samples {
        let x = [rng.random::<f64>(), rng.random::<f64>()];
        let (c, y) = xor_sample(x);
        parts.0.extend(x);
        parts.1.extend(c);
        parts.2.push(y);
    }
    finish(DatasetKind::Xor, 2, 2, parts)
}

pub fn trig_sample(h: [f64; 3]) -> ([f64; 7], [bool; 3], usize) {
    let x = [
        h[0].sin() + h[0],
        h[1].sin() + h[1],
        h[2].sin() + h[2],
        h[0].cos() + h[0],
        h[1].cos() + h[1],
        h[2].cos() + h[2],
        h.iter().map(|v| v * v).sum(),
    ];
    (x, [h[0] > 0.0, h[1] > 0.0, h[2] > 0.0], usize::from(h[0] + h[1] > 0.0))
}

pub fn gen_trig(n_samples: usize, seed: u64) -> Result<LabeledDataset> {
    check_n(n_samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 2.0).expect("valid std");
    let mut parts = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n_samples {
        let h = [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)];
        let (x, c, y) = trig_sample(h);
        parts.0.extend(x);
        parts.1.extend(c);
        parts.2.push(y);
    }
    finish(DatasetKind::Trig, 7, 3, parts)
}

pub fn dot_sample(v1: [f64; 2], v2: [f64; 2]) -> ([f64; 4], [bool; 2], usize) {
    let w = std::f64::consts::FRAC_1_SQRT_2;
    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
    let x = [v1[0] + v2[0], v1[1] + v2[1], v1[0] - v2[0], v1[1] - v2[1]];
    let c = [dot(v1, [w, w]) > 0.0, dot(v2, [-w, -w]) > 0.0];
    (x, c, usize::from(dot(v1, v2) > 0.0))
}

pub fn gen_vector(n_samples: usize, seed: u64) -> Result<LabeledDataset> {
    check_n(n_samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid std");
    let mut parts = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n_samples {
        let v1 = [normal.sample(&mut rng), normal.sample(&mut rng)];
        let v2 = [normal.sample(&mut rng), normal.sample(&mut rng)];
        let (x, c, y) = dot_sample(v1, v2);
        parts.0.extend(x);
        parts.1.extend(c);
        parts.2.push(y);
    }
    finish(DatasetKind::Dot, 4, 2, parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_examples() {
        assert_eq!(xor_sample([0.9, 0.2]), ([true, false], 1));
        assert_eq!(xor_sample([0.5 + 1e-9, 0.5 + 1e-9]), ([true, true], 0));
    }

    #[test]
    fn trig_examples() {
        let (x, c, y) = trig_sample([1.0, -0.5, 2.0]);
        assert_eq!((c, y), ([true, false, true], 1));
        assert!((x[6] - 5.25).abs() < 1e-12);
        let (_, c, y) = trig_sample([-1.0, -1.0, 1e-12]);
        assert_eq!((c, y), ([false, false, true], 0));
    }

    #[test]
    fn dot_examples() {
        let (x, c, y) = dot_sample([1.0, 0.0], [1.0, 0.0]);
        assert_eq!((c, y), ([true, false], 1));
        assert_eq!(x, [2.0, 0.0, 0.0, 0.0]);
        let (_, _, y) = dot_sample([0.3, -1.2], [-0.3, 1.2]);
        assert_eq!(y, 0);
    }

    #[test]
    fn split_sizes() {
        for (n, sizes) in [(3000, (2100, 300, 600)), (10, (7, 1, 2)), (1, (1, 0, 0))] {
            let mut ds = gen_xor(n, 0).unwrap();
            split(&mut ds, 4);
            let s = &ds.splits;
            assert_eq!((s.train.len(), s.val.len(), s.test.len()), sizes);
            let mut all: Vec<_> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn split_is_seeded() {
        let mut a = gen_xor(50, 0).unwrap();
        let mut b = a.clone();
        split(&mut a, 9);
        split(&mut b, 9);
        assert_eq!(a.splits, b.splits);
        split(&mut b, 10);
        assert_ne!(a.splits, b.splits);
    }

    #[test]
    fn zero_samples_rejected() {
        for kind in DatasetKind::ALL {
            assert!(kind.generate(0, 1).is_err());
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut ds = gen_trig(25, 3).unwrap();
        split(&mut ds, 3);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let mut back = LabeledDataset::read_csv(buf.as_slice()).unwrap();
        back.kind = ds.kind;
        let sorted = |mut v: Vec<usize>| {
            v.sort();
            v
        };
        assert_eq!(back.features, ds.features);
        assert_eq!(back.concepts, ds.concepts);
        assert_eq!(back.labels, ds.labels);
        assert_eq!(sorted(back.splits.train.clone()), sorted(ds.splits.train.clone()));
        assert_eq!(sorted(back.splits.test.clone()), sorted(ds.splits.test.clone()));
    }

    #[test]
    fn kind_tokens() {
        for kind in DatasetKind::ALL {
            assert_eq!(kind.token().parse::<DatasetKind>().unwrap(), kind);
        }
        assert!("mnist".parse::<DatasetKind>().is_err());
    }
}
