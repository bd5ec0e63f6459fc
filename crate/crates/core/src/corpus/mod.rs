//! Sample data model, transcript/feature loading and synthetic data.

mod features;
mod synth;

pub use features::{hash_embed, FeatureArchive, FeatureProvider, FileBacked, HashEmbed, Modality};
pub use synth::{synth_generate, SynthConfig, SynthOutput};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Matrix;

/// Default model width and token budget.
pub const DEFAULT_DIM: usize = 768;
pub const DEFAULT_MAX_TOKENS: usize = 768;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("record {record}: {message}")]
    Schema { record: usize, message: String },
    #[error("record {record} ({sample_id}): {message}")]
    Dimension {
        record: usize,
        sample_id: String,
        message: String,
    },
    #[error("feature archive has no entry for key {key:?}")]
    MissingKey { key: String },
    #[error("feature archive: {0}")]
    Archive(String),
    #[error("sample {sample_id}: {message}")]
    Invalid { sample_id: String, message: String },
}

/// Prediction task; each is trained with its own parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Movement,
    Volatility,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Movement => "movement",
            Task::Volatility => "volatility",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "movement" => Ok(Task::Movement),
            "volatility" => Ok(Task::Volatility),
            _ => Err(format!("unknown task {s:?}; expected movement or volatility")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Asset {
    StockIndexSmall,
    StockIndexLarge,
    Gold,
    CurrencyExchangeRate,
    BondYield10Y,
    BondYield3M,
}

impl Asset {
    pub const ALL: [Asset; 6] = [
        Asset::StockIndexSmall,
        Asset::StockIndexLarge,
        Asset::Gold,
        Asset::CurrencyExchangeRate,
        Asset::BondYield10Y,
        Asset::BondYield3M,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Identifier used in label keys and record files.
    pub fn code(self) -> &'static str {
        match self {
            Asset::StockIndexSmall => "StockIndexSmall",
            Asset::StockIndexLarge => "StockIndexLarge",
            Asset::Gold => "Gold",
            Asset::CurrencyExchangeRate => "CurrencyExchangeRate",
            Asset::BondYield10Y => "BondYield10Y",
            Asset::BondYield3M => "BondYield3M",
        }
    }

    /// Human-readable name used in prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Asset::StockIndexSmall => "Stock Index (Small)",
            Asset::StockIndexLarge => "Stock Index (Large)",
            Asset::Gold => "Gold",
            Asset::CurrencyExchangeRate => "Currency Exchange Rate",
            Asset::BondYield10Y => "Long-term Bond Yield (10-years)",
            Asset::BondYield3M => "Short-term Bond Yield (3-months)",
        }
    }
}

impl fmt::Display for Asset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Asset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Asset::ALL
            .into_iter()
            .find(|a| a.code() == s || a.display_name() == s)
            .ok_or_else(|| format!("unknown asset {s:?}"))
    }
}

/// Days after the call at which a label is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Horizon {
    D1,
    D3,
    D7,
    D15,
}

impl Horizon {
    pub const ALL: [Horizon; 4] = [Horizon::D1, Horizon::D3, Horizon::D7, Horizon::D15];

    pub fn days(self) -> u32 {
        match self {
            Horizon::D1 => 1,
            Horizon::D3 => 3,
            Horizon::D7 => 7,
            Horizon::D15 => 15,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_days(days: u32) -> Option<Horizon> {
        Horizon::ALL.into_iter().find(|h| h.days() == days)
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.days())
    }
}

/// One (asset, horizon) cell of the 6x4 prediction grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskKey {
    pub asset: Asset,
    pub horizon: Horizon,
}

pub const N_KEYS: usize = 24;

impl TaskKey {
    pub fn all() -> impl Iterator<Item = TaskKey> {
        Asset::ALL.into_iter().flat_map(|asset| {
            Horizon::ALL
                .into_iter()
                .map(move |horizon| TaskKey { asset, horizon })
        })
    }

    pub fn index(self) -> usize {
        self.asset.index() * 4 + self.horizon.index()
    }

    pub fn from_index(i: usize) -> TaskKey {
        TaskKey {
            asset: Asset::ALL[i / 4],
            horizon: Horizon::ALL[i % 4],
        }
    }
}

impl fmt::Display for TaskKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.asset, self.horizon)
    }
}

impl FromStr for TaskKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, t) = s
            .split_once(':')
            .ok_or_else(|| format!("label key {s:?} is not <Asset>:<days>"))?;
        let asset = a.parse()?;
        let horizon = t
            .parse::<u32>()
            .ok()
            .and_then(Horizon::from_days)
            .ok_or_else(|| format!("label key {s:?} has an invalid horizon"))?;
        Ok(TaskKey { asset, horizon })
    }
}

/// A value for each of the 24 (asset, horizon) cells. Total by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T>(Vec<T>);

impl<T: Clone> Grid<T> {
    pub fn filled(v: T) -> Self {
        Grid(vec![v; N_KEYS])
    }
}

impl<T> Grid<T> {
    pub fn from_fn(mut f: impl FnMut(TaskKey) -> T) -> Self {
        Grid(TaskKey::all().map(&mut f).collect())
    }

    pub fn get(&self, key: TaskKey) -> &T {
        &self.0[key.index()]
    }

    pub fn set(&mut self, key: TaskKey, v: T) {
        self.0[key.index()] = v;
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (TaskKey, &T)> {
        self.0
            .iter()
            .enumerate()
            .map(|(i, v)| (TaskKey::from_index(i), v))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    /// `true` = increase.
    pub movement: Grid<bool>,
    pub volatility: Grid<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub call_date: NaiveDate,
    pub utterances: Vec<Vec<String>>,
    /// One row per utterance.
    pub video_feats: Matrix,
    pub audio_feats: Matrix,
    pub labels: Labels,
}

impl Sample {
    pub fn n_utterances(&self) -> usize {
        self.utterances.len()
    }

    pub fn n_tokens(&self) -> usize {
        self.utterances.iter().map(Vec::len).sum()
    }

    pub fn flat_tokens(&self) -> Vec<&str> {
        self.utterances
            .iter()
            .flat_map(|u| u.iter().map(String::as_str))
            .collect()
    }

    pub fn validate(&self, dim: usize, max_tokens: usize) -> Result<(), CorpusError> {
        let bad = |message: String| CorpusError::Invalid {
            sample_id: self.id.clone(),
            message,
        };
        let n = self.utterances.len();
        if n == 0 {
            return Err(bad("no utterances".into()));
        }
        if let Some(j) = self.utterances.iter().position(Vec::is_empty) {
            return Err(bad(format!("utterance {j} is empty")));
        }
        if self.n_tokens() > max_tokens {
            return Err(bad(format!(
                "{} tokens exceed the budget of {max_tokens}",
                self.n_tokens()
            )));
        }
        for (name, m) in [("video", &self.video_feats), ("audio", &self.audio_feats)] {
            if m.shape() != (n, dim) {
                return Err(bad(format!(
                    "{name} features are {:?}, expected {:?}",
                    m.shape(),
                    (n, dim)
                )));
            }
            if !m.is_finite() {
                return Err(bad(format!("{name} features contain non-finite values")));
            }
        }
        if let Some((k, v)) = self
            .labels
            .volatility
            .iter()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(bad(format!("volatility label {k} = {v} is not a finite non-negative number")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    pub dim: usize,
    pub max_tokens: usize,
    /// Seed for the placeholder features used when no archive is given.
    pub embed_seed: u64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            max_tokens: DEFAULT_MAX_TOKENS,
            embed_seed: 0,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawLabels {
    movement: BTreeMap<String, u8>,
    volatility: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    id: String,
    date: String,
    utterances: Vec<Vec<String>>,
    labels: RawLabels,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn grid_from_map<T: Copy, R: Copy>(
    record: usize,
    field: &str,
    raw: &BTreeMap<String, R>,
    convert: impl Fn(R) -> Option<T>,
) -> Result<Grid<T>, CorpusError> {
    let mut cells: Vec<Option<T>> = vec![None; N_KEYS];
    for (k, &v) in raw {
        let key: TaskKey = k.parse().map_err(|message| CorpusError::Schema { record, message })?;
        let value = convert(v).ok_or_else(|| CorpusError::Schema {
            record,
            message: format!("labels.{field}[{k}] has an invalid value"),
        })?;
        cells[key.index()] = Some(value);
    }
    let mut out = Vec::with_capacity(N_KEYS);
    for (i, c) in cells.into_iter().enumerate() {
        out.push(c.ok_or_else(|| CorpusError::Schema {
            record,
            message: format!("labels.{field} is missing key {}", TaskKey::from_index(i)),
        })?);
    }
    Ok(Grid(out))
}

/// Parses one transcript record without attaching features.
fn parse_record(record: usize, line: &str) -> Result<(RawRecord, NaiveDate, Labels), CorpusError> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| CorpusError::Schema {
        record,
        message: e.to_string(),
    })?;
    let date = NaiveDate::parse_from_str(&raw.date, "%Y-%m-%d").map_err(|e| CorpusError::Schema {
        record,
        message: format!("bad date {:?}: {e}", raw.date),
    })?;
    if raw.id.is_empty() {
        return Err(CorpusError::Schema {
            record,
            message: "empty id".into(),
        });
    }
    let movement = grid_from_map(record, "movement", &raw.labels.movement, |v| match v {
        0 => Some(false),
        1 => Some(true),
        _ => None,
    })?;
    let volatility = grid_from_map(record, "volatility", &raw.labels.volatility, |v: f64| {
        (v.is_finite() && v >= 0.0).then_some(v)
    })?;
    Ok((raw, date, Labels { movement, volatility }))
}

/// Loads line-delimited transcript records.
///
/// Video and audio rows come from `features` when given, otherwise from
/// [`hash_embed`] over the placeholder strings `vid:<id>:<j>` / `aud:<id>:<j>`.
/// Every sample is validated; violations are errors, never repaired.
pub fn load_dataset(
    transcripts: impl AsRef<Path>,
    features: Option<&FeatureArchive>,
    opts: &LoadOptions,
) -> Result<Vec<Sample>, CorpusError> {
    let path = transcripts.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_dataset(&text, features, opts)
}

pub fn parse_dataset(
    text: &str,
    features: Option<&FeatureArchive>,
    opts: &LoadOptions,
) -> Result<Vec<Sample>, CorpusError> {
    if let Some(archive) = features {
        if archive.dim() != opts.dim {
            return Err(CorpusError::Archive(format!(
                "archive dimension {} does not match configured dimension {}",
                archive.dim(),
                opts.dim
            )));
        }
    }
    let mut samples = Vec::new();
    for (record, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let (raw, date, labels) = parse_record(record, line)?;
        let n = raw.utterances.len();
        let (video_feats, audio_feats) = match features {
            Some(archive) => {
                for modality in [Modality::Video, Modality::Audio] {
                    let rows = archive.row_count(&raw.id, modality);
                    if rows != n {
                        return Err(CorpusError::Dimension {
                            record,
                            sample_id: raw.id.clone(),
                            message: format!(
                                "archive has {rows} {} rows but the record has {n} utterances",
                                modality.tag()
                            ),
                        });
                    }
                }
                (
                    archive.sample_matrix(&raw.id, Modality::Video, n)?,
                    archive.sample_matrix(&raw.id, Modality::Audio, n)?,
                )
            }
            None => (
                placeholder_features(&raw.id, Modality::Video, n, opts),
                placeholder_features(&raw.id, Modality::Audio, n, opts),
            ),
        };
        let sample = Sample {
            id: raw.id,
            call_date: date,
            utterances: raw.utterances,
            video_feats,
            audio_feats,
            labels,
        };
        sample
            .validate(opts.dim, opts.max_tokens)
            .map_err(|e| CorpusError::Schema {
                record,
                message: e.to_string(),
            })?;
        samples.push(sample);
    }
    Ok(samples)
}

pub(crate) fn placeholder_features(
    id: &str,
    modality: Modality,
    n: usize,
    opts: &LoadOptions,
) -> Matrix {
    let prefix = match modality {
        Modality::Video => "vid",
        Modality::Audio => "aud",
    };
    let mut data = Vec::with_capacity(n * opts.dim);
    for j in 0..n {
        data.extend(hash_embed(&format!("{prefix}:{id}:{j}"), opts.dim, opts.embed_seed));
    }
    Matrix::from_vec(n, opts.dim, data).expect("placeholder shape")
}

fn to_raw(sample: &Sample) -> RawRecord {
    RawRecord {
        id: sample.id.clone(),
        date: sample.call_date.format("%Y-%m-%d").to_string(),
        utterances: sample.utterances.clone(),
        labels: RawLabels {
            movement: sample
                .labels
                .movement
                .iter()
                .map(|(k, &v)| (k.to_string(), v as u8))
                .collect(),
            volatility: sample
                .labels
                .volatility
                .iter()
                .map(|(k, &v)| (k.to_string(), v))
                .collect(),
        },
    }
}

/// Writes samples in the transcript format. Features are not included; use
/// [`FeatureArchive::from_samples`] for those.
pub fn write_dataset(samples: &[Sample], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut out, &to_raw(s)).expect("record serializes");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&out).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record_json(id: &str, utterances: &[&[&str]]) -> String {
        let movement: BTreeMap<String, u8> =
            TaskKey::all().map(|k| (k.to_string(), (k.index() % 2) as u8)).collect();
        let volatility: BTreeMap<String, f64> =
            TaskKey::all().map(|k| (k.to_string(), k.index() as f64 * 0.5)).collect();
        serde_json::json!({
            "id": id,
            "date": "2020-01-15",
            "utterances": utterances,
            "labels": {"movement": movement, "volatility": volatility},
        })
        .to_string()
    }

    fn opts() -> LoadOptions {
        LoadOptions {
            dim: 8,
            max_tokens: 64,
            embed_seed: 0,
        }
    }

    #[test]
    fn key_grid_is_six_by_four() {
        let keys: Vec<_> = TaskKey::all().collect();
        assert_eq!(keys.len(), 24);
        for (i, k) in keys.iter().enumerate() {
            assert_eq!(k.index(), i);
            assert_eq!(TaskKey::from_index(i), *k);
            assert_eq!(k.to_string().parse::<TaskKey>().unwrap(), *k);
        }
        assert_eq!("Gold:3".parse::<TaskKey>().unwrap().horizon, Horizon::D3);
        assert!("Gold:2".parse::<TaskKey>().is_err());
        assert!("Silver:1".parse::<TaskKey>().is_err());
    }

    #[test]
    fn fallback_features_fill_rows() {
        let text = record_json("s1", &[&["rates", "rose"], &["inflation"]]);
        let samples = parse_dataset(&text, None, &opts()).unwrap();
        assert_eq!(samples.len(), 1);
        let s = &samples[0];
        assert_eq!(s.video_feats.shape(), (2, 8));
        assert_eq!(s.audio_feats.shape(), (2, 8));
        assert_eq!(s.video_feats.row(1), hash_embed("vid:s1:1", 8, 0).as_slice());
        assert!(s.labels.movement.get(TaskKey::from_index(1)));
        assert_eq!(*s.labels.volatility.get(TaskKey::from_index(4)), 2.0);
    }

    #[test]
    fn archive_row_mismatch_names_record() {
        let text = [
            record_json("ok", &[&["a"]]),
            record_json("bad", &[&["a"], &["b"]]),
        ]
        .join("\n");
        let mut archive = FeatureArchive::new(8);
        for j in 0..3 {
            archive.insert(&FeatureArchive::key("bad", Modality::Video, j), vec![0.5; 8]).unwrap();
        }
        for j in 0..2 {
            archive.insert(&FeatureArchive::key("bad", Modality::Audio, j), vec![0.5; 8]).unwrap();
        }
        archive.insert(&FeatureArchive::key("ok", Modality::Video, 0), vec![0.5; 8]).unwrap();
        archive.insert(&FeatureArchive::key("ok", Modality::Audio, 0), vec![0.5; 8]).unwrap();
        let err = parse_dataset(&text, Some(&archive), &opts()).unwrap_err();
        match err {
            CorpusError::Dimension { record, sample_id, .. } => {
                assert_eq!(record, 1);
                assert_eq!(sample_id, "bad");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn schema_violations_are_errors() {
        let o = opts();
        assert!(matches!(
            parse_dataset("{not json", None, &o),
            Err(CorpusError::Schema { record: 0, .. })
        ));
        let empty_utt = record_json("x", &[&[]]);
        assert!(parse_dataset(&empty_utt, None, &o).is_err());
        let no_utt = record_json("x", &[]);
        assert!(parse_dataset(&no_utt, None, &o).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&record_json("x", &[&["a"]])).unwrap();
        v["labels"]["movement"].as_object_mut().unwrap().remove("Gold:7");
        let err = parse_dataset(&v.to_string(), None, &o).unwrap_err();
        assert!(err.to_string().contains("Gold:7"), "{err}");
        let mut v: serde_json::Value = serde_json::from_str(&record_json("x", &[&["a"]])).unwrap();
        v["labels"]["volatility"]["Gold:7"] = serde_json::json!(-1.0);
        assert!(parse_dataset(&v.to_string(), None, &o).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&record_json("x", &[&["a"]])).unwrap();
        v["date"] = serde_json::json!("2020-02-30");
        assert!(parse_dataset(&v.to_string(), None, &o).is_err());
    }

    #[test]
    fn token_budget_enforced() {
        let o = LoadOptions {
            max_tokens: 2,
            ..opts()
        };
        let text = record_json("x", &[&["a", "b"], &["c"]]);
        assert!(parse_dataset(&text, None, &o).is_err());
    }

    #[test]
    fn archive_dimension_must_match() {
        let archive = FeatureArchive::new(4);
        let text = record_json("x", &[&["a"]]);
        assert!(matches!(
            parse_dataset(&text, Some(&archive), &opts()),
            Err(CorpusError::Archive(_))
        ));
    }

    #[test]
    fn missing_archive_key_is_key_error() {
        let mut archive = FeatureArchive::new(8);
        archive.insert(&FeatureArchive::key("x", Modality::Video, 0), vec![0.0; 8]).unwrap();
        let text = record_json("x", &[&["a"]]);
        let err = parse_dataset(&text, Some(&archive), &opts()).unwrap_err();
        assert!(matches!(err, CorpusError::Dimension { .. } | CorpusError::MissingKey { .. }));
    }

    #[test]
    fn asset_names() {
        assert_eq!("Gold".parse::<Asset>().unwrap(), Asset::Gold);
        assert_eq!(
            "Stock Index (Small)".parse::<Asset>().unwrap(),
            Asset::StockIndexSmall
        );
    }
}
