#![allow(dead_code)]

use std::collections::HashMap;

use chrono::{Days, NaiveDate};
use manager_core::corpus::{Grid, Labels, Sample};
use manager_core::kg_store::{EntityId, KnowledgeGraph};
use manager_core::numerics::Matrix;
use rand::Rng;

/// Small vocabulary so random transcripts hit entity names often. Mixed case
/// on purpose: linking is case-insensitive.
pub const VOCAB: [&str; 10] = [
    "bank", "Rate", "policy", "euro", "Gold", "yield", "bond", "market", "inflation", "fed",
];

pub fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).unwrap()
}

pub fn date_in(rng: &mut impl Rng, span_days: u64) -> NaiveDate {
    base_date() + Days::new(rng.gen_range(0..span_days))
}

fn random_word(rng: &mut impl Rng) -> String {
    let w = VOCAB[rng.gen_range(0..VOCAB.len())];
    match rng.gen_range(0..3) {
        0 => w.to_lowercase(),
        1 => w.to_uppercase(),
        _ => w.to_string(),
    }
}

/// Entity surface forms of 1 to 3 vocabulary words; duplicates up to case
/// are allowed and exercise the smallest-id tie-break.
pub fn random_names(rng: &mut impl Rng, n: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(n);
    while out.len() < n {
        let len = rng.gen_range(1..=3);
        let name = (0..len).map(|_| random_word(rng)).collect::<Vec<_>>().join(" ");
        if !out.contains(&name) {
            out.push(name);
        }
    }
    out
}

/// Random facts among `names` dated inside `[base, base + span_days)`.
pub fn random_kg(rng: &mut impl Rng, names: &[String], n_triples: usize, span_days: u64) -> KnowledgeGraph {
    let mut kg = KnowledgeGraph::new();
    let relations = ["own", "impact", "relate_to"];
    for _ in 0..n_triples {
        let h = &names[rng.gen_range(0..names.len())];
        let t = &names[rng.gen_range(0..names.len())];
        let r = relations[rng.gen_range(0..relations.len())];
        kg.add_triple(h, r, t, date_in(rng, span_days)).unwrap();
    }
    kg
}

pub fn random_tokens(rng: &mut impl Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| random_word(rng)).collect()
}

pub fn random_labels(rng: &mut impl Rng) -> Labels {
    Labels {
        movement: Grid::from_fn(|_| rng.gen_bool(0.5)),
        volatility: Grid::from_fn(|_| rng.gen_range(0.0..3.0)),
    }
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// A sample whose utterance lengths are given explicitly.
pub fn random_sample(
    rng: &mut impl Rng,
    id: &str,
    utterance_lens: &[usize],
    dim: usize,
    call_date: NaiveDate,
) -> Sample {
    let n = utterance_lens.len();
    Sample {
        id: id.to_string(),
        call_date,
        utterances: utterance_lens.iter().map(|&l| random_tokens(rng, l)).collect(),
        video_feats: random_matrix(rng, n, dim),
        audio_feats: random_matrix(rng, n, dim),
        labels: random_labels(rng),
    }
}

/// Tries every span at every position and keeps the longest linkable one.
pub fn brute_force_links(kg: &KnowledgeGraph, cutoff: NaiveDate, tokens: &[String]) -> Vec<(EntityId, usize, usize)> {
    let mut earliest: HashMap<u32, NaiveDate> = HashMap::new();
    for t in kg.triples() {
        for e in [t.head.0, t.tail.0] {
            let d = earliest.entry(e).or_insert(t.timestamp);
            *d = (*d).min(t.timestamp);
        }
    }
    let mut forms: HashMap<String, u32> = HashMap::new();
    for e in 0..kg.n_entities() as u32 {
        if earliest.get(&e).is_some_and(|d| *d < cutoff) {
            let key = kg
                .entity_name(EntityId(e))
                .split_whitespace()
                .map(str::to_lowercase)
                .collect::<Vec<_>>()
                .join(" ");
            let slot = forms.entry(key).or_insert(e);
            *slot = (*slot).min(e);
        }
    }
    let lowered: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lowered.len() {
        let mut best = None;
        for j in i + 1..=lowered.len() {
            if let Some(&e) = forms.get(&lowered[i..j].join(" ")) {
                best = Some((EntityId(e), i, j));
            }
        }
        match best {
            Some(m) => {
                out.push(m);
                i = m.2;
            }
            None => i += 1,
        }
    }
    out
}
