//! Dataset ingestion, label spaces, and seeded dev/test/demonstration splits.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Ordered set of distinct label strings.
///
/// The order is first occurrence in the source file and is the tie-break
/// order for every argmax downstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    labels: Vec<String>,
}

impl LabelSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "label space needs at least 2 labels, found {} ({:?})",
                labels.len(),
                labels
            )));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.is_empty() {
                return Err(Error::InvalidDataset("empty label".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate label `{label}`")));
            }
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Random-guess accuracy, `1 / |labels|`.
    pub fn chance(&self) -> f64 {
        1.0 / self.labels.len() as f64
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        LabelSpace::new(labels)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.labels
    }
}

/// One classification instance. Pair tasks arrive already flattened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub input: String,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

impl DatasetFormat {
    /// Guesses the format from a file extension (`.jsonl`/`.json`/`.csv`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Some(Self::Jsonl),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub label_space: LabelSpace,
    pub examples: Vec<LabeledExample>,
}

/// Loads a dataset file. The dataset name is the file stem.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let source = path.display().to_string();
    let examples = match format {
        DatasetFormat::Jsonl => parse_jsonl(&text, &source)?,
        DatasetFormat::Csv => parse_csv(&text, &source)?,
    };
    from_examples(name, examples)
}

/// Builds a dataset from already-parsed rows, deriving the label space.
pub fn from_examples(name: impl Into<String>, examples: Vec<LabeledExample>) -> Result<Dataset> {
    let name = name.into();
    let mut ids = HashSet::new();
    let mut labels: Vec<String> = Vec::new();
    for ex in &examples {
        if !ids.insert(ex.id.as_str()) {
            return Err(Error::InvalidDataset(format!(
                "{name}: duplicate example id `{}`",
                ex.id
            )));
        }
        if !labels.contains(&ex.label) {
            labels.push(ex.label.clone());
        }
    }
    let label_space = LabelSpace::new(labels).map_err(|e| Error::InvalidDataset(format!("{name}: {e}")))?;
    Ok(Dataset {
        name,
        label_space,
        examples,
    })
}

fn check_row(ex: &LabeledExample, source: &str, line: usize) -> Result<()> {
    let missing = if ex.id.is_empty() {
        Some("id")
    } else if ex.input.is_empty() {
        Some("input")
    } else if ex.label.is_empty() {
        Some("label")
    } else {
        None
    };
    match missing {
        Some(field) => Err(Error::Parse {
            source_name: source.to_string(),
            line,
            message: format!("empty `{field}`"),
        }),
        None => Ok(()),
    }
}

pub fn parse_jsonl(text: &str, source: &str) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let ex: LabeledExample = serde_json::from_str(raw).map_err(|e| Error::Parse {
            source_name: source.to_string(),
            line,
            message: e.to_string(),
        })?;
        check_row(&ex, source, line)?;
        out.push(ex);
    }
    Ok(out)
}

pub fn parse_csv(text: &str, source: &str) -> Result<Vec<LabeledExample>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    for required in ["id", "input", "label"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Parse {
                source_name: source.to_string(),
                line: 1,
                message: format!("header lacks `{required}` column"),
            });
        }
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<LabeledExample>() {
        let ex = row.map_err(|e| Error::Parse {
            source_name: source.to_string(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        out.push(ex);
    }
    // csv positions are 1-based and include the header line
    for (i, ex) in out.iter().enumerate() {
        check_row(ex, source, i + 2)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub test_n: usize,
    pub dev_n: usize,
    /// Largest demonstration count that will be drawn from the train pool.
    pub k_max: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            test_n: 1000,
            dev_n: 300,
            k_max: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train_pool: Vec<LabeledExample>,
    pub dev: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub seed: u64,
}

/// Partitions `examples` into test, dev, and train pool.
///
/// A seeded shuffle picks the members of each part; inside each part the
/// original file order is kept.
pub fn make_split(dataset: &str, examples: &[LabeledExample], seed: u64, sizes: SplitSizes) -> Result<DatasetSplit> {
    let required = sizes.test_n + sizes.dev_n + sizes.k_max;
    if examples.len() < required {
        return Err(Error::Sizing {
            what: format!(
                "{dataset}: split of test {} + dev {} + demos {}",
                sizes.test_n, sizes.dev_n, sizes.k_max
            ),
            required,
            available: examples.len(),
        });
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng::stream(seed, &[dataset, "split"]));

    let take = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| examples[i].clone()).collect::<Vec<_>>()
    };
    let (test_idx, rest) = order.split_at(sizes.test_n);
    let (dev_idx, train_idx) = rest.split_at(sizes.dev_n);
    Ok(DatasetSplit {
        test: take(test_idx),
        dev: take(dev_idx),
        train_pool: take(train_idx),
        seed,
    })
}
