//! LIBSVM ingestion, seeded shuffles, train/cv/test splits and equal-load
//! worker shards.
//!
//! Feature indices are 1-based on disk and inside [`SparseVector`]; a
//! weight vector of length `d` stores feature `i` at position `i - 1`.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("input contains no samples")]
    Empty,
    #[error("feature index {index} exceeds dimension {dimension}")]
    DimensionOverflow { index: u32, dimension: usize },
    #[error("invalid split specification: {0}")]
    InvalidSplit(String),
    #[error("split `{which}` would be empty for {n} samples")]
    EmptySplit { which: &'static str, n: usize },
    #[error("cannot partition {n} samples across {k} workers")]
    Partition { n: usize, k: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Class label. Only the two SVM classes exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// `+1.0` or `-1.0`.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn from_sign(value: f64) -> Option<Label> {
        if value == 1.0 {
            Some(Label::Positive)
        } else if value == -1.0 {
            Some(Label::Negative)
        } else {
            None
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Positive => f.write_str("+1"),
            Label::Negative => f.write_str("-1"),
        }
    }
}

/// Sparse feature vector with strictly increasing 1-based indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vector from `(index, value)` pairs, rejecting indices that are
    /// zero or not strictly increasing.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let mut v = SparseVector::new();
        for (idx, val) in pairs {
            v.push(idx, val)?;
        }
        Ok(v)
    }

    fn push(&mut self, index: u32, value: f64) -> Result<(), String> {
        if index < 1 {
            return Err(format!("feature index {index} is not positive"));
        }
        if let Some(&last) = self.indices.last() {
            if index <= last {
                return Err(format!("non-increasing feature index {index} after {last}"));
            }
        }
        self.indices.push(index);
        self.values.push(value);
        Ok(())
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn max_index(&self) -> Option<u32> {
        self.indices.last().copied()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(zero_based_position, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize - 1, v))
    }

    /// Sparse inner product with a dense vector. The caller guarantees every
    /// index fits in `dense`.
    #[inline]
    pub fn dot(&self, dense: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (pos, v) in self.iter() {
            acc += dense[pos] * v;
        }
        acc
    }
}

/// One training point.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: SparseVector,
    pub label: Label,
}

impl Sample {
    pub fn new(features: SparseVector, label: Label) -> Self {
        Self { features, label }
    }
}

/// Immutable ordered collection of samples with a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dimension: usize,
}

impl Dataset {
    /// Fails if any sample has a feature index beyond `dimension`.
    pub fn new(samples: Vec<Sample>, dimension: usize) -> Result<Self, DatasetError> {
        for s in &samples {
            if let Some(max) = s.features.max_index() {
                if max as usize > dimension {
                    return Err(DatasetError::DimensionOverflow {
                        index: max,
                        dimension,
                    });
                }
            }
        }
        Ok(Self { samples, dimension })
    }

    /// A dataset with no samples; only useful as an objective baseline.
    pub fn empty(dimension: usize) -> Self {
        Self {
            samples: Vec::new(),
            dimension,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let pos = self
            .samples
            .iter()
            .filter(|s| s.label == Label::Positive)
            .count();
        pos as f64 / self.samples.len() as f64
    }

    /// Fraction of nonzero entries over `n * d`.
    pub fn density(&self) -> f64 {
        if self.samples.is_empty() || self.dimension == 0 {
            return 0.0;
        }
        let nnz: usize = self.samples.iter().map(|s| s.features.nnz()).sum();
        nnz as f64 / (self.samples.len() as f64 * self.dimension as f64)
    }

    fn select(&self, order: &[usize]) -> Dataset {
        Dataset {
            samples: order.iter().map(|&i| self.samples[i].clone()).collect(),
            dimension: self.dimension,
        }
    }

    /// Writes the dataset back out in LIBSVM text form.
    pub fn write_libsvm<W: Write>(&self, mut out: W) -> io::Result<()> {
        for s in &self.samples {
            write!(out, "{}", s.label)?;
            for (&i, &v) in s.features.indices().iter().zip(s.features.values()) {
                write!(out, " {i}:{v}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Accept `0` as the negative class.
    pub zero_as_negative: bool,
    /// Fixed dimension instead of the largest index seen.
    pub dimension: Option<usize>,
}

fn parse_line(line: &str, opts: &ParseOptions) -> Result<Option<Sample>, String> {
    let data = match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    };
    let mut tokens = data.split_ascii_whitespace();
    let Some(label_tok) = tokens.next() else {
        return Ok(None);
    };
    let raw: f64 = label_tok
        .parse()
        .map_err(|_| format!("label `{label_tok}` is not numeric"))?;
    let label = match Label::from_sign(raw) {
        Some(l) => l,
        None if raw == 0.0 && opts.zero_as_negative => Label::Negative,
        None if raw == 0.0 => {
            return Err("label 0 requires --zero-as-negative".to_string());
        }
        None => return Err(format!("label `{label_tok}` is not +1 or -1")),
    };

    let mut features = SparseVector::new();
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| format!("token `{tok}` is not an index:value pair"))?;
        let idx: u32 = idx
            .parse()
            .map_err(|_| format!("feature index `{idx}` is not a positive integer"))?;
        let val: f64 = val
            .parse()
            .map_err(|_| format!("feature value `{val}` is not numeric"))?;
        if !val.is_finite() {
            return Err(format!("feature value `{val}` is not finite"));
        }
        features.push(idx, val)?;
    }
    Ok(Some(Sample::new(features, label)))
}

/// Parses LIBSVM text (`label idx:val idx:val ...`). Blank lines and `#`
/// comments are skipped; sample order follows the input.
pub fn parse_libsvm<R: BufRead>(reader: R, opts: &ParseOptions) -> Result<Dataset, DatasetError> {
    let mut samples = Vec::new();
    let mut max_index = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let parsed = parse_line(&line, opts).map_err(|reason| DatasetError::Parse {
            line: i + 1,
            reason,
        })?;
        if let Some(sample) = parsed {
            if let Some(m) = sample.features.max_index() {
                max_index = max_index.max(m as usize);
            }
            samples.push(sample);
        }
    }
    if samples.is_empty() {
        return Err(DatasetError::Empty);
    }
    let dimension = opts.dimension.unwrap_or(max_index);
    Dataset::new(samples, dimension)
}

pub fn parse_libsvm_str(text: &str, opts: &ParseOptions) -> Result<Dataset, DatasetError> {
    parse_libsvm(text.as_bytes(), opts)
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for the optional per-epoch reshuffle.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    mix_seed(seed, epoch as u64 + 1)
}

/// Permutation of `0..n` determined only by `(seed, n)`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

pub fn shuffle(dataset: &Dataset, seed: u64) -> Dataset {
    dataset.select(&permutation(dataset.len(), seed))
}

/// Fractions for a three-way split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub cv: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, cv: f64, test: f64, seed: u64) -> Result<Self, DatasetError> {
        let spec = Self {
            train,
            cv,
            test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        for f in [self.train, self.cv, self.test] {
            if !(f > 0.0 && f < 1.0) {
                return Err(DatasetError::InvalidSplit(format!(
                    "fraction {f} outside (0, 1)"
                )));
            }
        }
        let sum = self.train + self.cv + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidSplit(format!(
                "fractions sum to {sum}, not 1"
            )));
        }
        Ok(())
    }

    /// `(train, cv, test)` sizes for `n` samples.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon absorbs representation error such as 0.2 * 35000.
        let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let cv = floor(self.cv);
        let test = floor(self.test);
        (n - cv - test, cv, test)
    }
}

impl FromStr for SplitSpec {
    type Err = DatasetError;

    /// Parses `60/20/20` (percentages) or `0.6/0.2/0.2`. The seed is left at 0.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split('/')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| DatasetError::InvalidSplit(format!("`{s}` is not of the form a/b/c")))?;
        if parts.len() != 3 {
            return Err(DatasetError::InvalidSplit(format!(
                "`{s}` must have three parts"
            )));
        }
        let total: f64 = parts.iter().sum();
        let scale = if total > 1.0 + 1e-9 { 100.0 } else { 1.0 };
        SplitSpec::new(parts[0] / scale, parts[1] / scale, parts[2] / scale, 0)
    }
}

/// Train, cross-validation and test views of one dataset.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub cv: Dataset,
    pub test: Dataset,
}

/// Seeded shuffle followed by contiguous `train | cv | test` assignment.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Splits, DatasetError> {
    spec.validate()?;
    let n = dataset.len();
    let (n_train, n_cv, n_test) = spec.sizes(n);
    for (which, size) in [("train", n_train), ("cv", n_cv), ("test", n_test)] {
        if size == 0 {
            return Err(DatasetError::EmptySplit { which, n });
        }
    }
    let order = permutation(n, spec.seed);
    Ok(Splits {
        train: dataset.select(&order[..n_train]),
        cv: dataset.select(&order[n_train..n_train + n_cv]),
        test: dataset.select(&order[n_train + n_cv..]),
    })
}

fn shard_range(n: usize, k: usize, rank: usize) -> Result<std::ops::Range<usize>, DatasetError> {
    if k == 0 || k > n {
        return Err(DatasetError::Partition { n, k });
    }
    let size = n / k;
    Ok(rank * size..(rank + 1) * size)
}

/// Equal-size shards after a seeded shuffle; the trailing `n mod k` samples
/// are dropped.
pub fn partition(train: &Dataset, k: usize, seed: u64) -> Result<Vec<Dataset>, DatasetError> {
    shard_range(train.len(), k, 0)?;
    let order = permutation(train.len(), seed);
    (0..k)
        .map(|rank| Ok(train.select(&order[shard_range(train.len(), k, rank)?])))
        .collect()
}

/// The single shard `partition(train, k, seed)[rank]` without building the others.
pub fn partition_shard(
    train: &Dataset,
    k: usize,
    seed: u64,
    rank: usize,
) -> Result<Dataset, DatasetError> {
    let range = shard_range(train.len(), k, rank)?;
    if rank >= k {
        return Err(DatasetError::Partition { n: train.len(), k });
    }
    let order = permutation(train.len(), seed);
    Ok(train.select(&order[range]))
}

/// Per-worker shard size, or `None` when `k` is invalid for `n`.
pub fn shard_size(n: usize, k: usize) -> Option<usize> {
    (k >= 1 && k <= n).then(|| n / k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn opts() -> ParseOptions {
        ParseOptions::default()
    }

    fn toy(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| {
                let label = if i % 2 == 0 {
                    Label::Positive
                } else {
                    Label::Negative
                };
                Sample::new(SparseVector::from_pairs([(1, i as f64)]).unwrap(), label)
            })
            .collect();
        Dataset::new(samples, 1).unwrap()
    }

    fn ids(d: &Dataset) -> Vec<i64> {
        d.samples()
            .iter()
            .map(|s| s.features.values()[0] as i64)
            .collect()
    }

    #[test]
    fn parses_basic_line() {
        let ds = parse_libsvm_str("+1 1:0.5 3:2.0\n", &opts()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dimension(), 3);
        let s = &ds.samples()[0];
        assert_eq!(s.label, Label::Positive);
        assert_eq!(s.features.indices(), &[1, 3]);
        assert_eq!(s.features.values(), &[0.5, 2.0]);
    }

    #[test]
    fn featureless_sample_is_legal() {
        let ds = parse_libsvm_str("-1\n", &opts()).unwrap();
        assert_eq!(ds.samples()[0].label, Label::Negative);
        assert!(ds.samples()[0].features.is_empty());
        assert_eq!(ds.dimension(), 0);
    }

    #[test]
    fn rejects_non_increasing_index() {
        match parse_libsvm_str("+1 3:1.0 2:1.0", &opts()) {
            Err(DatasetError::Parse { line, reason }) => {
                assert_eq!(line, 1);
                assert!(reason.contains("non-increasing"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_tokens_with_line_numbers() {
        let cases = [
            ("+1 1:1\n-1 0:1\n", 2),
            ("+1 1:1\n+1 1:x\n", 2),
            ("abc 1:1\n", 1),
            ("+1 1:1\n\n+1 2\n", 3),
            ("+1 2:1 2:3\n", 1),
            ("2 1:1\n", 1),
            ("+1 1:nan\n", 1),
        ];
        for (text, expected_line) in cases {
            match parse_libsvm_str(text, &opts()) {
                Err(DatasetError::Parse { line, .. }) => assert_eq!(line, expected_line, "{text:?}"),
                other => panic!("{text:?}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_libsvm_str("", &opts()), Err(DatasetError::Empty)));
        assert!(matches!(
            parse_libsvm_str("\n  \n# comment\n", &opts()),
            Err(DatasetError::Empty)
        ));
    }

    #[test]
    fn label_variants() {
        let ds = parse_libsvm_str("1 1:1\n+1 1:1\n-1 1:1\n1.0 1:1\n", &opts()).unwrap();
        let labels: Vec<_> = ds.samples().iter().map(|s| s.label).collect();
        assert_eq!(
            labels,
            [Label::Positive, Label::Positive, Label::Negative, Label::Positive]
        );
        assert!(parse_libsvm_str("0 1:1\n", &opts()).is_err());
        let zo = ParseOptions {
            zero_as_negative: true,
            ..opts()
        };
        let ds = parse_libsvm_str("0 1:1\n1 1:1\n", &zo).unwrap();
        assert_eq!(ds.samples()[0].label, Label::Negative);
        assert_eq!(ds.samples()[1].label, Label::Positive);
    }

    #[test]
    fn dimension_override() {
        let o = ParseOptions {
            dimension: Some(10),
            ..opts()
        };
        assert_eq!(parse_libsvm_str("+1 3:1\n", &o).unwrap().dimension(), 10);
        let o = ParseOptions {
            dimension: Some(2),
            ..opts()
        };
        assert!(matches!(
            parse_libsvm_str("+1 3:1\n", &o),
            Err(DatasetError::DimensionOverflow { index: 3, dimension: 2 })
        ));
    }

    #[test]
    fn comments_are_ignored() {
        let ds = parse_libsvm_str("# header\n+1 1:1 # trailing\n", &opts()).unwrap();
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn split_sizes() {
        let s: SplitSpec = "60/20/20".parse().unwrap();
        assert_eq!(s.sizes(35000), (21000, 7000, 7000));
        assert_eq!(s.sizes(10), (6, 2, 2));
        let s: SplitSpec = "80/10/10".parse().unwrap();
        assert_eq!(s.sizes(35000), (28000, 3500, 3500));
        let s: SplitSpec = "0.6/0.2/0.2".parse().unwrap();
        assert_eq!(s.sizes(10), (6, 2, 2));
    }

    #[test]
    fn split_rejects_bad_specs() {
        assert!("60/20".parse::<SplitSpec>().is_err());
        assert!("60/30/20".parse::<SplitSpec>().is_err());
        assert!("a/b/c".parse::<SplitSpec>().is_err());
        assert!(SplitSpec::new(1.0, 0.0, 0.0, 1).is_err());
        let spec: SplitSpec = "60/20/20".parse().unwrap();
        assert!(matches!(split(&toy(3), &spec), Err(DatasetError::EmptySplit { .. })));
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let ds = toy(10);
        let mut spec: SplitSpec = "60/20/20".parse().unwrap();
        spec.seed = 11;
        let a = split(&ds, &spec).unwrap();
        let b = split(&ds, &spec).unwrap();
        assert_eq!(ids(&a.train), ids(&b.train));
        assert_eq!((a.train.len(), a.cv.len(), a.test.len()), (6, 2, 2));
        let mut all: Vec<i64> = [ids(&a.train), ids(&a.cv), ids(&a.test)].concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let shuffled = ids(&shuffle(&ds, 11));
        assert_eq!([ids(&a.train), ids(&a.cv), ids(&a.test)].concat(), shuffled);
    }

    #[test]
    fn partition_examples() {
        let shards = partition(&toy(10), 3, 5).unwrap();
        assert_eq!(shards.iter().map(Dataset::len).collect::<Vec<_>>(), [3, 3, 3]);
        let whole = partition(&toy(10), 1, 5).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].len(), 10);
        assert_eq!(ids(&whole[0]), ids(&shuffle(&toy(10), 5)));
        assert!(matches!(partition(&toy(2), 3, 5), Err(DatasetError::Partition { .. })));
        assert!(partition(&toy(2), 0, 5).is_err());
        assert_eq!(shard_size(28000, 32), Some(875));
        assert_eq!(shard_size(3, 4), None);
    }

    #[test]
    fn partition_shard_matches_partition() {
        let ds = toy(23);
        let shards = partition(&ds, 4, 9).unwrap();
        for (rank, shard) in shards.iter().enumerate() {
            assert_eq!(ids(&partition_shard(&ds, 4, 9, rank).unwrap()), ids(shard));
        }
        assert!(partition_shard(&ds, 4, 9, 4).is_err());
    }

    #[test]
    fn shuffle_examples() {
        assert_eq!(ids(&shuffle(&toy(1), 1234)), vec![0]);
        assert_eq!(permutation(100, 7), permutation(100, 7));
        assert_ne!(permutation(100, 7), permutation(100, 8));
        assert_ne!(epoch_seed(7, 0), epoch_seed(7, 1));
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        let sample = (
            any::<bool>(),
            proptest::collection::btree_map(1u32..40, -1e6f64..1e6, 0..8),
        )
            .prop_map(|(pos, feats)| {
                let label = if pos { Label::Positive } else { Label::Negative };
                Sample::new(SparseVector::from_pairs(feats).unwrap(), label)
            });
        proptest::collection::vec(sample, 1..30).prop_map(|samples| {
            let d = samples
                .iter()
                .filter_map(|s| s.features.max_index())
                .max()
                .unwrap_or(0) as usize;
            Dataset::new(samples, d).unwrap()
        })
    }

    proptest! {
        #[test]
        fn libsvm_round_trip(ds in arb_dataset()) {
            let mut buf = Vec::new();
            ds.write_libsvm(&mut buf).unwrap();
            let back = parse_libsvm(&buf[..], &ParseOptions::default()).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn partition_shards_are_disjoint_and_equal(n in 1usize..200, k in 1usize..16, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let ds = toy(n);
            let shards = partition(&ds, k, seed).unwrap();
            let mut seen: Vec<i64> = shards.iter().flat_map(ids).collect();
            prop_assert!(shards.iter().all(|s| s.len() == n / k));
            prop_assert_eq!(seen.len(), k * (n / k));
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), k * (n / k));
        }

        #[test]
        fn split_partitions_the_dataset(n in 10usize..300, seed in any::<u64>()) {
            let ds = toy(n);
            let spec = SplitSpec { seed, ..SplitSpec::new(0.6, 0.2, 0.2, 0).unwrap() };
            let s = split(&ds, &spec).unwrap();
            prop_assert_eq!(s.train.len() + s.cv.len() + s.test.len(), n);
            let mut all: Vec<i64> = [ids(&s.train), ids(&s.cv), ids(&s.test)].concat();
            all.sort();
            prop_assert_eq!(all, (0..n as i64).collect::<Vec<_>>());
        }
    }
}
