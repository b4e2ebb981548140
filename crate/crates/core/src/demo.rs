//! Demonstration sampling, label manipulation, and prompt rendering for the
//! gold, random, and abstract settings.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSpace, LabeledExample};
use crate::error::{Error, Result};
use crate::{ordmap, rng};

/// Joins an input to its label.
pub const PAIR_JOIN: &str = "\n";
/// Separates consecutive demonstrations (and the last one from the query).
pub const EXAMPLE_SEPARATOR: &str = "\n\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SettingKind {
    Gold,
    Random,
    Abstract,
}

impl SettingKind {
    pub const ALL: [SettingKind; 3] = [SettingKind::Gold, SettingKind::Random, SettingKind::Abstract];

    pub fn as_str(self) -> &'static str {
        match self {
            SettingKind::Gold => "gold",
            SettingKind::Random => "random",
            SettingKind::Abstract => "abstract",
        }
    }
}

impl fmt::Display for SettingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SettingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gold" => Ok(SettingKind::Gold),
            "random" => Ok(SettingKind::Random),
            "abstract" => Ok(SettingKind::Abstract),
            other => Err(Error::Config(format!("unknown setting `{other}`"))),
        }
    }
}

/// Token pool for the abstract setting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbstractPool {
    #[default]
    Symbols,
    Numbers,
    Letters,
}

const SYMBOLS: [&str; 16] = [
    "@", "#", "$", "%", "&", "*", "^", "~", "!", "?", "+", "=", "<", ">", "|", ";",
];

impl AbstractPool {
    pub const ALL: [AbstractPool; 3] = [AbstractPool::Symbols, AbstractPool::Numbers, AbstractPool::Letters];

    pub fn tokens(self) -> Vec<String> {
        match self {
            AbstractPool::Symbols => SYMBOLS.iter().map(|s| s.to_string()).collect(),
            AbstractPool::Numbers => (0..16).map(|i| i.to_string()).collect(),
            AbstractPool::Letters => (b'A'..=b'P').map(|c| (c as char).to_string()).collect(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AbstractPool::Symbols => "symbols",
            AbstractPool::Numbers => "numbers",
            AbstractPool::Letters => "letters",
        }
    }
}

impl FromStr for AbstractPool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symbols" => Ok(AbstractPool::Symbols),
            "numbers" => Ok(AbstractPool::Numbers),
            "letters" => Ok(AbstractPool::Letters),
            other => Err(Error::Config(format!("unknown abstract pool `{other}`"))),
        }
    }
}

/// A demonstration setting. The pool is only carried by the abstract kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    Gold,
    Random,
    Abstract(AbstractPool),
}

impl Setting {
    pub fn kind(self) -> SettingKind {
        match self {
            Setting::Gold => SettingKind::Gold,
            Setting::Random => SettingKind::Random,
            Setting::Abstract(_) => SettingKind::Abstract,
        }
    }

    pub fn abstract_pool(self) -> Option<AbstractPool> {
        match self {
            Setting::Abstract(pool) => Some(pool),
            _ => None,
        }
    }

    pub fn from_kind(kind: SettingKind, pool: AbstractPool) -> Self {
        match kind {
            SettingKind::Gold => Setting::Gold,
            SettingKind::Random => Setting::Random,
            SettingKind::Abstract => Setting::Abstract(pool),
        }
    }
}

/// Bijection from original labels to abstract tokens, in label-space order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LabelMapRepr", into = "LabelMapRepr")]
pub struct LabelMap {
    pairs: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct LabelMapRepr(#[serde(with = "ordmap")] Vec<(String, String)>);

impl TryFrom<LabelMapRepr> for LabelMap {
    type Error = Error;

    fn try_from(repr: LabelMapRepr) -> Result<Self> {
        LabelMap::new(repr.0)
    }
}

impl From<LabelMap> for LabelMapRepr {
    fn from(map: LabelMap) -> Self {
        LabelMapRepr(map.pairs)
    }
}

impl LabelMap {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut keys = HashSet::new();
        let mut values = HashSet::new();
        for (k, v) in &pairs {
            if !keys.insert(k.as_str()) {
                return Err(Error::Mapping(format!("label `{k}` mapped twice")));
            }
            if !values.insert(v.as_str()) {
                return Err(Error::Mapping(format!("token `{v}` used for two labels")));
            }
        }
        if let Some(k) = keys.iter().find(|k| values.contains(*k)) {
            return Err(Error::Mapping(format!("token `{k}` is also an original label")));
        }
        Ok(Self { pairs })
    }

    /// Draws a uniformly random bijection from `labels` into `pool`, skipping
    /// pool tokens that collide with an original label.
    pub fn random<R: Rng + ?Sized>(labels: &LabelSpace, pool: AbstractPool, rng: &mut R) -> Result<Self> {
        let mut tokens: Vec<String> = pool.tokens().into_iter().filter(|t| !labels.contains(t)).collect();
        if tokens.len() < labels.len() {
            return Err(Error::PoolExhausted {
                pool: pool.as_str().into(),
                required: labels.len(),
                available: tokens.len(),
            });
        }
        tokens.shuffle(rng);
        let pairs = labels.labels().iter().cloned().zip(tokens).collect::<Vec<_>>();
        LabelMap::new(pairs)
    }

    pub fn forward(&self, label: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == label).map(|(_, v)| v.as_str())
    }

    pub fn inverse(&self, token: &str) -> Option<&str> {
        self.pairs.iter().find(|(_, v)| v == token).map(|(k, _)| k.as_str())
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    /// Abstract tokens in label-space order.
    pub fn image(&self) -> Vec<String> {
        self.pairs.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Draws `k` distinct demonstrations from the train pool in seeded order.
pub fn sample_demos<R: Rng + ?Sized>(
    train_pool: &[LabeledExample],
    k: usize,
    rng: &mut R,
) -> Result<Vec<LabeledExample>> {
    if k > train_pool.len() {
        return Err(Error::Sizing {
            what: "demonstrations from train pool".into(),
            required: k,
            available: train_pool.len(),
        });
    }
    Ok(index::sample(rng, train_pool.len(), k)
        .into_iter()
        .map(|i| train_pool[i].clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAssignment {
    /// One displayed label per demonstration.
    pub displayed: Vec<String>,
    pub label_map: Option<LabelMap>,
}

/// Chooses the label shown next to each demonstration.
///
/// Gold keeps the true label; random draws each label uniformly and
/// independently from the label space; abstract maps every true label through
/// one seeded bijection into the abstract pool.
pub fn make_label_assignment<R: Rng + ?Sized>(
    demos: &[LabeledExample],
    setting: Setting,
    label_space: &LabelSpace,
    rng: &mut R,
) -> Result<LabelAssignment> {
    for d in demos {
        if !label_space.contains(&d.label) {
            return Err(Error::Contract(format!(
                "demo `{}` has label `{}` outside the label space",
                d.id, d.label
            )));
        }
    }
    match setting {
        Setting::Gold => Ok(LabelAssignment {
            displayed: demos.iter().map(|d| d.label.clone()).collect(),
            label_map: None,
        }),
        Setting::Random => {
            let labels = label_space.labels();
            let displayed = demos
                .iter()
                .map(|_| labels[rng.random_range(0..labels.len())].clone())
                .collect();
            Ok(LabelAssignment {
                displayed,
                label_map: None,
            })
        }
        Setting::Abstract(pool) => {
            let map = LabelMap::random(label_space, pool, rng)?;
            let displayed = demos
                .iter()
                .map(|d| map.forward(&d.label).map(str::to_string))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Mapping("label map does not cover a demo label".into()))?;
            Ok(LabelAssignment {
                displayed,
                label_map: Some(map),
            })
        }
    }
}

/// Renders demonstrations and a query with the minimal newline template.
pub fn render_prompt(demos: &[(&str, &str)], query_input: &str) -> Result<String> {
    if query_input.is_empty() {
        return Err(Error::Contract("empty query input".into()));
    }
    let mut prompt = String::new();
    for (input, label) in demos {
        if input.is_empty() || label.is_empty() {
            return Err(Error::Contract("empty demonstration input or label".into()));
        }
        prompt.push_str(input);
        prompt.push_str(PAIR_JOIN);
        prompt.push_str(label);
        prompt.push_str(EXAMPLE_SEPARATOR);
    }
    prompt.push_str(query_input);
    prompt.push_str(PAIR_JOIN);
    Ok(prompt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// A rendered prompt for one query, one line of the bundle JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub query_id: String,
    pub prompt: String,
    pub answer_space: Vec<String>,
    pub setting: SettingKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_map: Option<LabelMap>,
    pub dataset: String,
    pub split: Split,
    pub demo_ids: Vec<String>,
    pub gold_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstract_pool: Option<AbstractPool>,
}

impl PromptBundle {
    pub fn k(&self) -> usize {
        self.demo_ids.len()
    }

    /// Maps an answer back to the original label space.
    pub fn original_label<'a>(&'a self, answer: &'a str) -> Option<&'a str> {
        match &self.label_map {
            Some(map) => map.inverse(answer),
            None => self.answer_space.iter().find(|a| *a == answer).map(String::as_str),
        }
    }
}

/// Whether one demonstration set serves every query or each query gets its own.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoMode {
    #[default]
    Shared,
    PerExample,
}

impl FromStr for DemoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(DemoMode::Shared),
            "per_example" => Ok(DemoMode::PerExample),
            other => Err(Error::Config(format!("unknown demo mode `{other}`"))),
        }
    }
}

/// Builds bundles for one (dataset, seed). Demo selection never depends on
/// the setting, so bundles of different settings differ only in labels.
#[derive(Debug, Clone)]
pub struct BundleBuilder<'a> {
    pub dataset: &'a str,
    pub label_space: &'a LabelSpace,
    pub train_pool: &'a [LabeledExample],
    pub k: usize,
    pub seed: u64,
    pub mode: DemoMode,
}

impl BundleBuilder<'_> {
    fn demos_for(&self, scope: &str) -> Result<Vec<LabeledExample>> {
        let mut rng = rng::stream(self.seed, &[self.dataset, "demos", scope]);
        sample_demos(self.train_pool, self.k, &mut rng)
    }

    fn assignment_for(&self, demos: &[LabeledExample], setting: Setting, scope: &str) -> Result<LabelAssignment> {
        let purpose = match setting {
            Setting::Gold => "labels/gold".to_string(),
            Setting::Random => "labels/random".to_string(),
            Setting::Abstract(pool) => format!("labels/abstract/{}", pool.as_str()),
        };
        let mut rng = rng::stream(self.seed, &[self.dataset, &purpose, scope]);
        make_label_assignment(demos, setting, self.label_space, &mut rng)
    }

    pub fn build(&self, queries: &[LabeledExample], split: Split, setting: Setting) -> Result<Vec<PromptBundle>> {
        let shared = match self.mode {
            DemoMode::Shared => {
                let demos = self.demos_for("shared")?;
                let assignment = self.assignment_for(&demos, setting, "shared")?;
                Some((demos, assignment))
            }
            DemoMode::PerExample => None,
        };
        queries
            .iter()
            .map(|q| match &shared {
                Some((demos, assignment)) => self.bundle(q, split, setting, demos, assignment),
                None => {
                    let scope = format!("query/{}", q.id);
                    let demos = self.demos_for(&scope)?;
                    let assignment = self.assignment_for(&demos, setting, &scope)?;
                    self.bundle(q, split, setting, &demos, &assignment)
                }
            })
            .collect()
    }

    fn bundle(
        &self,
        query: &LabeledExample,
        split: Split,
        setting: Setting,
        demos: &[LabeledExample],
        assignment: &LabelAssignment,
    ) -> Result<PromptBundle> {
        if demos.iter().any(|d| d.id == query.id) {
            return Err(Error::Contract(format!(
                "query `{}` appears among its own demonstrations",
                query.id
            )));
        }
        let pairs: Vec<(&str, &str)> = demos
            .iter()
            .zip(&assignment.displayed)
            .map(|(d, l)| (d.input.as_str(), l.as_str()))
            .collect();
        let prompt = render_prompt(&pairs, &query.input)?;
        let (answer_space, gold_answer) = match &assignment.label_map {
            Some(map) => (
                map.image(),
                map.forward(&query.label)
                    .ok_or_else(|| Error::Mapping(format!("no token for label `{}`", query.label)))?
                    .to_string(),
            ),
            None => (self.label_space.labels().to_vec(), query.label.clone()),
        };
        Ok(PromptBundle {
            query_id: query.id.clone(),
            prompt,
            answer_space,
            setting: setting.kind(),
            seed: self.seed,
            label_map: assignment.label_map.clone(),
            dataset: self.dataset.to_string(),
            split,
            demo_ids: demos.iter().map(|d| d.id.clone()).collect(),
            gold_answer,
            abstract_pool: setting.abstract_pool(),
        })
    }
}
