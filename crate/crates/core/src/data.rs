//! Event sequences, the JSON-lines dataset format, splits and summary statistics.
//!
//! One sequence per line:
//!
//! ```text
//! {"seq_id":"a","t_end":10.0,"events":[{"t":1.0,"k":0},{"t":2.5,"k":2}]}
//! ```
//!
//! An optional `"split"` key (`"train"`, `"val"` or `"test"`) labels the
//! sequence; unlabeled sequences are treated as training data. Other keys are
//! ignored.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub k: usize,
}

impl Event {
    pub fn new(t: f64, k: usize) -> Self {
        Self { t, k }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    pub seq_id: String,
    pub t_end: f64,
    pub events: Vec<Event>,
}

impl EventSequence {
    pub fn new(seq_id: impl Into<String>, t_end: f64, events: Vec<Event>) -> Self {
        Self {
            seq_id: seq_id.into(),
            t_end,
            events,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks every sequence invariant. Returns the indices of events that share
    /// their timestamp with the previous event (accepted, but worth reporting).
    pub fn validate(&self, num_types: Option<usize>) -> Result<Vec<usize>> {
        if !self.t_end.is_finite() || self.t_end <= 0.0 {
            return Err(Error::invalid(
                &self.seq_id,
                format!("t_end must be finite and > 0, got {}", self.t_end),
            ));
        }
        let mut ties = Vec::new();
        let mut prev = f64::NEG_INFINITY;
        for (i, ev) in self.events.iter().enumerate() {
            if !ev.t.is_finite() || ev.t < 0.0 {
                return Err(Error::invalid(
                    &self.seq_id,
                    format!("event {i}: negative or non-finite time {}", ev.t),
                ));
            }
            if ev.t > self.t_end {
                return Err(Error::invalid(
                    &self.seq_id,
                    format!("event {i}: time {} is after t_end {}", ev.t, self.t_end),
                ));
            }
            if ev.t < prev {
                return Err(Error::invalid(
                    &self.seq_id,
                    format!("event {i}: unsorted times ({} after {})", ev.t, prev),
                ));
            }
            if ev.t == prev {
                ties.push(i);
            }
            if let Some(m) = num_types {
                if ev.k >= m {
                    return Err(Error::invalid(
                        &self.seq_id,
                        format!("event {i}: type {} out of range (num_types = {m})", ev.k),
                    ));
                }
            }
            prev = ev.t;
        }
        Ok(ties)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split {other:?} (expected train, val or test)"
            ))),
        }
    }
}

/// A validated collection of sequences over `num_types` event types, each
/// labeled with exactly one split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    sequences: Vec<EventSequence>,
    splits: Vec<Split>,
    num_types: usize,
}

/// Something odd but legal found while loading.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadWarning {
    pub line: usize,
    pub seq_id: String,
    pub message: String,
}

impl Dataset {
    /// Builds a dataset with every sequence labeled `Train`.
    pub fn new(sequences: Vec<EventSequence>, num_types: usize) -> Result<Self> {
        let splits = vec![Split::Train; sequences.len()];
        Self::with_splits(sequences, splits, num_types)
    }

    pub fn with_splits(
        sequences: Vec<EventSequence>,
        splits: Vec<Split>,
        num_types: usize,
    ) -> Result<Self> {
        if num_types == 0 {
            return Err(Error::InvalidArgument("num_types must be >= 1".into()));
        }
        if splits.len() != sequences.len() {
            return Err(Error::InvalidArgument(format!(
                "{} split labels for {} sequences",
                splits.len(),
                sequences.len()
            )));
        }
        for seq in &sequences {
            seq.validate(Some(num_types))?;
        }
        Ok(Self {
            sequences,
            splits,
            num_types,
        })
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn sequences(&self) -> &[EventSequence] {
        &self.sequences
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn num_events(&self) -> usize {
        self.sequences.iter().map(EventSequence::len).sum()
    }

    /// Sequences carrying the given label, in file order.
    pub fn split(&self, which: Split) -> Vec<&EventSequence> {
        self.sequences
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == which)
            .map(|(seq, _)| seq)
            .collect()
    }

    /// A new dataset holding only the sequences with the given label.
    pub fn subset(&self, which: Split) -> Dataset {
        let sequences: Vec<_> = self.split(which).into_iter().cloned().collect();
        let splits = vec![which; sequences.len()];
        Dataset {
            sequences,
            splits,
            num_types: self.num_types,
        }
    }

    pub fn into_sequences(self) -> Vec<EventSequence> {
        self.sequences
    }
}

#[derive(Deserialize)]
struct Record {
    seq_id: String,
    t_end: f64,
    events: Vec<Event>,
    #[serde(default)]
    split: Option<Split>,
}

#[derive(Serialize)]
struct RecordRef<'a> {
    seq_id: &'a str,
    t_end: f64,
    events: &'a [Event],
    split: Split,
}

/// Parses the JSON-lines format from any reader. Blank lines are skipped.
pub fn read_dataset<R: BufRead>(
    reader: R,
    expected_types: Option<usize>,
) -> Result<(Dataset, Vec<LoadWarning>)> {
    let mut sequences = Vec::new();
    let mut splits = Vec::new();
    let mut lines_of = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        sequences.push(EventSequence::new(rec.seq_id, rec.t_end, rec.events));
        splits.push(rec.split.unwrap_or(Split::Train));
        lines_of.push(line_no);
    }

    let observed = sequences
        .iter()
        .flat_map(|s| s.events.iter().map(|e| e.k + 1))
        .max()
        .unwrap_or(1);
    let num_types = match expected_types {
        Some(m) => m,
        None => observed,
    };

    let mut warnings = Vec::new();
    for (seq, &line) in sequences.iter().zip(&lines_of) {
        let ties = seq.validate(Some(num_types)).map_err(|e| match e {
            Error::InvalidSequence { seq_id, message } => Error::InvalidSequence {
                seq_id,
                message: format!("line {line}: {message}"),
            },
            other => other,
        })?;
        for i in ties {
            warnings.push(LoadWarning {
                line,
                seq_id: seq.seq_id.clone(),
                message: format!("event {i} shares its timestamp with event {}", i - 1),
            });
        }
    }
    let ds = Dataset::with_splits(sequences, splits, num_types)?;
    Ok((ds, warnings))
}

/// Loads and validates a dataset file, logging any warnings.
pub fn load_dataset(path: impl AsRef<Path>, expected_types: Option<usize>) -> Result<Dataset> {
    let (ds, warnings) = load_dataset_with_warnings(path, expected_types)?;
    for w in &warnings {
        log::warn!("line {} ({}): {}", w.line, w.seq_id, w.message);
    }
    Ok(ds)
}

pub fn load_dataset_with_warnings(
    path: impl AsRef<Path>,
    expected_types: Option<usize>,
) -> Result<(Dataset, Vec<LoadWarning>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), expected_types)
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut writer: W) -> Result<()> {
    for (seq, &split) in ds.sequences.iter().zip(&ds.splits) {
        let rec = RecordRef {
            seq_id: &seq.seq_id,
            t_end: seq.t_end,
            events: &seq.events,
            split,
        };
        serde_json::to_writer(&mut writer, &rec)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(ds, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Randomly relabels sequences into train/val/test.
///
/// Validation and test sizes are `round(fraction * n)`; training takes the
/// remainder. Deterministic given `seed`.
pub fn split_dataset(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    let (ftr, fva, fte) = fractions;
    if ds.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    if !(ftr > 0.0 && fva > 0.0 && fte > 0.0) || ((ftr + fva + fte) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive and sum to 1, got ({ftr}, {fva}, {fte})"
        )));
    }
    let n = ds.len();
    let n_val = ((fva * n as f64).round() as usize).min(n);
    let n_test = ((fte * n as f64).round() as usize).min(n - n_val);
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut splits = vec![Split::Train; n];
    for (rank, &idx) in order.iter().enumerate() {
        splits[idx] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(Dataset {
        sequences: ds.sequences.clone(),
        splits,
        num_types: ds.num_types,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_sequences: usize,
    pub num_events: usize,
    pub per_type_counts: Vec<usize>,
    pub mean_length: f64,
    pub max_length: usize,
    /// Absent when no sequence has two or more events.
    pub mean_gap: Option<f64>,
}

pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    stats_of(ds.sequences.iter(), ds.num_types)
}

pub fn stats_of<'a>(
    seqs: impl IntoIterator<Item = &'a EventSequence>,
    num_types: usize,
) -> DatasetStats {
    let mut per_type_counts = vec![0usize; num_types];
    let mut num_sequences = 0;
    let mut num_events = 0;
    let mut max_length = 0;
    let mut gap_sum = 0.0;
    let mut gap_count = 0usize;
    for seq in seqs {
        num_sequences += 1;
        num_events += seq.len();
        max_length = max_length.max(seq.len());
        for ev in &seq.events {
            if ev.k >= per_type_counts.len() {
                per_type_counts.resize(ev.k + 1, 0);
            }
            per_type_counts[ev.k] += 1;
        }
        for w in seq.events.windows(2) {
            gap_sum += w[1].t - w[0].t;
            gap_count += 1;
        }
    }
    DatasetStats {
        num_sequences,
        num_events,
        per_type_counts,
        mean_length: if num_sequences > 0 {
            num_events as f64 / num_sequences as f64
        } else {
            0.0
        },
        max_length,
        mean_gap: (gap_count > 0).then(|| gap_sum / gap_count as f64),
    }
}

/// Reads a vocabulary sidecar (`{"0": "label", ...}`) into one label per type.
/// Types missing from the file are labeled by their index.
pub fn load_vocab(path: impl AsRef<Path>, num_types: usize) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: BTreeMap<String, String> = serde_json::from_str(&text)?;
    Ok(vocab_from_map(&map, num_types))
}

pub fn vocab_from_map(map: &BTreeMap<String, String>, num_types: usize) -> Vec<String> {
    (0..num_types)
        .map(|k| map.get(&k.to_string()).cloned().unwrap_or_else(|| k.to_string()))
        .collect()
}

pub fn default_vocab(num_types: usize) -> Vec<String> {
    (0..num_types).map(|k| k.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<(Dataset, Vec<LoadWarning>)> {
        read_dataset(text.as_bytes(), None)
    }

    #[test]
    fn minimal_line() {
        let (ds, w) =
            parse(r#"{"seq_id":"a","t_end":10.0,"events":[{"t":1.0,"k":0}]}"#).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.sequences()[0].len(), 1);
        assert_eq!(ds.num_types(), 1);
        assert!(w.is_empty());
    }

    #[test]
    fn unsorted_rejected() {
        let err = parse(r#"{"seq_id":"a","t_end":10.0,"events":[{"t":2.0,"k":0},{"t":1.0,"k":0}]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("unsorted"), "{err}");
    }

    #[test]
    fn every_invariant_is_enforced() {
        let bad = [
            r#"{"seq_id":"a","t_end":10.0,"events":[{"t":-1.0,"k":0}]}"#,
            r#"{"seq_id":"a","t_end":10.0,"events":[{"t":11.0,"k":0}]}"#,
            r#"{"seq_id":"a","t_end":0.0,"events":[]}"#,
            r#"{"seq_id":"a","t_end":-3.0,"events":[]}"#,
        ];
        for line in bad {
            assert!(matches!(parse(line), Err(Error::InvalidSequence { .. })), "{line}");
        }
        let out_of_range = read_dataset(
            r#"{"seq_id":"a","t_end":10.0,"events":[{"t":1.0,"k":3}]}"#.as_bytes(),
            Some(2),
        );
        assert!(matches!(out_of_range, Err(Error::InvalidSequence { .. })));
        let negative_type = parse(r#"{"seq_id":"a","t_end":10.0,"events":[{"t":1.0,"k":-1}]}"#);
        assert!(matches!(negative_type, Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "{\"seq_id\":\"a\",\"t_end\":1.0,\"events\":[]}\n\n{not json}\n";
        match parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ties_warn_but_load() {
        let (ds, w) = parse(
            r#"{"seq_id":"x","t_end":5.0,"events":[{"t":1.0,"k":0},{"t":1.0,"k":1}],"extra":1}"#,
        )
        .unwrap();
        assert_eq!(ds.num_types(), 2);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].line, 1);
    }

    #[test]
    fn empty_sequences_allowed() {
        let (ds, _) = parse(r#"{"seq_id":"e","t_end":3.0,"events":[]}"#).unwrap();
        assert_eq!(ds.num_events(), 0);
        assert_eq!(ds.num_types(), 1);
    }

    #[test]
    fn split_labels_round_trip() {
        let seqs = (0..5)
            .map(|i| EventSequence::new(format!("s{i}"), 2.0, vec![Event::new(0.5, i % 2)]))
            .collect();
        let ds = split_dataset(&Dataset::new(seqs, 2).unwrap(), (0.6, 0.2, 0.2), 3).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let (back, _) = read_dataset(buf.as_slice(), Some(2)).unwrap();
        assert_eq!(back, ds);
    }

    fn n_sequences(n: usize) -> Dataset {
        let seqs = (0..n)
            .map(|i| EventSequence::new(format!("s{i}"), 1.0, vec![]))
            .collect();
        Dataset::new(seqs, 1).unwrap()
    }

    fn sizes(ds: &Dataset) -> (usize, usize, usize) {
        (
            ds.split(Split::Train).len(),
            ds.split(Split::Val).len(),
            ds.split(Split::Test).len(),
        )
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = n_sequences(10);
        let a = split_dataset(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(sizes(&a), (8, 1, 1));
        let b = split_dataset(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(a.splits(), b.splits());
    }

    #[test]
    fn split_sizes_large() {
        // 0.15 * 34432 = 5164.8 -> 5165 for val and test; train takes the rest.
        let ds = n_sequences(34_432);
        let s = split_dataset(&ds, (0.7, 0.15, 0.15), 1).unwrap();
        assert_eq!(sizes(&s), (24_102, 5_165, 5_165));
    }

    #[test]
    fn split_rejects_bad_input() {
        let empty = Dataset::new(vec![], 1).unwrap();
        assert!(split_dataset(&empty, (0.8, 0.1, 0.1), 0).is_err());
        assert!(split_dataset(&n_sequences(3), (0.5, 0.5, 0.1), 0).is_err());
        assert!(split_dataset(&n_sequences(3), (1.0, 0.0, 0.0), 0).is_err());
    }

    #[test]
    fn stats_basic() {
        let empty = Dataset::new(vec![], 2).unwrap();
        let s = dataset_stats(&empty);
        assert_eq!(s.num_events, 0);
        assert_eq!(s.mean_length, 0.0);
        assert_eq!(s.per_type_counts, vec![0, 0]);
        assert!(s.mean_gap.is_none());

        let one = Dataset::new(
            vec![EventSequence::new(
                "a",
                5.0,
                vec![Event::new(1.0, 0), Event::new(3.0, 1)],
            )],
            2,
        )
        .unwrap();
        let s = dataset_stats(&one);
        assert_eq!(s.mean_gap, Some(2.0));
        assert_eq!(s.per_type_counts, vec![1, 1]);
        assert_eq!(s.max_length, 2);
    }

    #[test]
    fn vocab_falls_back_to_index() {
        let mut map = BTreeMap::new();
        map.insert("1".to_string(), "fever".to_string());
        assert_eq!(vocab_from_map(&map, 3), vec!["0", "fever", "2"]);
    }
}
