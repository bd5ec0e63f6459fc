//! Instruction-tuning records for downstream LLM fine-tuning.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Asset, Horizon, Sample, Task, TaskKey};
use crate::kg_store::{Direction, KnowledgeGraph};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0} pooled vectors given for {1} samples")]
    Pooled(usize, usize),
}

/// The fixed instruction template; `volatility` swaps in for "price movement".
pub fn render_prompt(task: Task, asset: Asset, horizon: Horizon, date: NaiveDate) -> String {
    let what = match task {
        Task::Movement => "price movement",
        Task::Volatility => "volatility",
    };
    format!(
        "Please predict the {what} of {} in {} days after the {} according to the input",
        asset.display_name(),
        horizon.days(),
        date.format("%Y-%m-%d")
    )
}

pub fn render_answer(task: Task, sample: &Sample, key: TaskKey) -> String {
    match task {
        Task::Movement => {
            if *sample.labels.movement.get(key) {
                "increase".to_string()
            } else {
                "decrease".to_string()
            }
        }
        Task::Volatility => format!("{:.6}", sample.labels.volatility.get(key)),
    }
}

/// Transcript text, one utterance per line, then one `(anchor, relation,
/// entity)` line per retrieved fact. Incoming facts keep their stored
/// orientation.
pub fn render_input(sample: &Sample, kg: &KnowledgeGraph, cap_per_anchor: usize) -> String {
    let mut out: Vec<String> = sample.utterances.iter().map(|u| u.join(" ")).collect();
    let view = kg.view(sample.call_date);
    let anchors = view.link_entities(&sample.flat_tokens());
    let pairs = view.retrieve_knowledge(&anchors, cap_per_anchor);
    if !pairs.is_empty() {
        out.push("Knowledge:".to_string());
    }
    for p in pairs {
        let (h, t) = match p.direction {
            Direction::Outgoing => (p.anchor, p.neighbor),
            Direction::Incoming => (p.neighbor, p.anchor),
        };
        out.push(format!(
            "({}, {}, {})",
            kg.entity_name(h),
            kg.relation_name(p.relation),
            kg.entity_name(t)
        ));
    }
    out.join("\n")
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct RecordMeta {
    pub sample_id: String,
    pub asset: String,
    pub tau: u32,
    pub date: String,
    pub task: String,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct InstructionRecord {
    pub instruction: String,
    pub input: String,
    pub answer: String,
    pub meta: RecordMeta,
    /// Pooled graph representation, when the exporter was given one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled: Option<Vec<f64>>,
}

/// The typed view of a parsed record's metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedRecord {
    pub sample_id: String,
    pub task: Task,
    pub key: TaskKey,
    pub date: NaiveDate,
    pub answer: String,
}

impl InstructionRecord {
    pub fn parsed(&self) -> Result<ParsedRecord, String> {
        let task: Task = self.meta.task.parse().map_err(|e| format!("{e}"))?;
        let asset: Asset = self.meta.asset.parse().map_err(|e| format!("{e}"))?;
        let horizon = Horizon::from_days(self.meta.tau).ok_or_else(|| format!("bad horizon {}", self.meta.tau))?;
        let date = NaiveDate::parse_from_str(&self.meta.date, "%Y-%m-%d").map_err(|e| format!("bad date: {e}"))?;
        let answer_ok = match task {
            Task::Movement => self.answer == "increase" || self.answer == "decrease",
            Task::Volatility => self.answer.parse::<f64>().is_ok(),
        };
        if !answer_ok {
            return Err(format!("answer {:?} does not fit task {task}", self.answer));
        }
        Ok(ParsedRecord {
            sample_id: self.meta.sample_id.clone(),
            task,
            key: TaskKey { asset, horizon },
            date,
            answer: self.answer.clone(),
        })
    }
}

/// One record per (sample, asset, horizon), samples in order and cells in
/// key order.
pub fn build_records(
    samples: &[Sample],
    kg: &KnowledgeGraph,
    task: Task,
    cap_per_anchor: usize,
    pooled: Option<&[Vec<f64>]>,
) -> Result<Vec<InstructionRecord>, ExportError> {
    if let Some(p) = pooled {
        if p.len() != samples.len() {
            return Err(ExportError::Pooled(p.len(), samples.len()));
        }
    }
    let mut out = Vec::with_capacity(samples.len() * 24);
    for (i, s) in samples.iter().enumerate() {
        let input = render_input(s, kg, cap_per_anchor);
        let date = s.call_date.format("%Y-%m-%d").to_string();
        for key in TaskKey::all() {
            out.push(InstructionRecord {
                instruction: render_prompt(task, key.asset, key.horizon, s.call_date),
                input: input.clone(),
                answer: render_answer(task, s, key),
                meta: RecordMeta {
                    sample_id: s.id.clone(),
                    asset: key.asset.code().to_string(),
                    tau: key.horizon.days(),
                    date: date.clone(),
                    task: task.name().to_string(),
                },
                pooled: pooled.map(|p| p[i].clone()),
            });
        }
    }
    Ok(out)
}

pub fn to_jsonl(records: &[InstructionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Writes the records for `samples` and returns how many were written.
pub fn export_jsonl(
    samples: &[Sample],
    kg: &KnowledgeGraph,
    task: Task,
    cap_per_anchor: usize,
    pooled: Option<&[Vec<f64>]>,
    out_path: impl AsRef<Path>,
) -> Result<usize, ExportError> {
    let path = out_path.as_ref();
    let io = |source| ExportError::Io {
        path: path.display().to_string(),
        source,
    };
    let records = build_records(samples, kg, task, cap_per_anchor, pooled)?;
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    w.write_all(to_jsonl(&records).as_bytes()).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(records.len())
}

pub fn parse_jsonl(text: &str) -> Result<Vec<InstructionRecord>, ExportError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let rec: InstructionRecord = serde_json::from_str(l).map_err(|e| ExportError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            rec.parsed().map_err(|message| ExportError::Parse { line: i + 1, message })?;
            Ok(rec)
        })
        .collect()
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<InstructionRecord>, ExportError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ExportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_jsonl(&text)
}
