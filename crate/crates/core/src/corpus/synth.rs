//! Reproducible synthetic calls with an optional planted knowledge signal.
//!
//! Entities are split into a signal pool and a distractor pool. Every signal
//! entity has an early `impact` fact pointing at one designated hub entity;
//! distractors never do before the call dates (they get a post-2023 fact to
//! the hub, which a leak-free pipeline must never see). Each call mentions one
//! pooled entity. With the signal planted, movement labels are a fixed
//! function of whether that mention is a hub-linked entity, so the text alone
//! only carries the signal through many unrelated surface forms while the
//! retrieved knowledge carries it through one shared neighbor.

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{placeholder_features, Grid, Labels, LoadOptions, Modality, Sample};
use crate::kg_store::KnowledgeGraph;

/// Surface form of the entity every signal entity points at.
pub const HUB_ENTITY: &str = "Tightening Cycle";

const RELATIONS: [&str; 15] = [
    "impact",
    "own",
    "operate_in",
    "control",
    "invest_in",
    "raise",
    "decrease",
    "announce",
    "has_leader",
    "negative_impact",
    "introduce",
    "participate_in",
    "relate_to",
    "produce",
    "compete_with",
];

const BACKGROUND: [&str; 12] = [
    "Stock Market",
    "U.S. Dollar",
    "Treasury Market",
    "Oil Prices",
    "Housing Market",
    "Labor Market",
    "Consumer Spending",
    "Credit Conditions",
    "Emerging Markets",
    "Bank Lending",
    "Supply Chains",
    "Corporate Earnings",
];

const FILLER: [&str; 32] = [
    "the", "committee", "decided", "to", "keep", "policy", "unchanged", "we", "expect",
    "inflation", "outlook", "remains", "uncertain", "growth", "has", "moderated", "our",
    "assessment", "of", "risks", "data", "suggests", "that", "conditions", "will", "continue",
    "monitor", "developments", "closely", "and", "appropriate", "today",
];

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "bra", "qui", "sel", "dor", "fen", "gar",
    "hul", "pex",
];

/// Per-asset volatility scale.
const VOL_SCALE: [f64; 6] = [1.6, 1.2, 0.9, 0.7, 0.4, 0.25];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_utterances: usize,
    pub tokens_per_utterance: usize,
    pub dim: usize,
    pub kg_size: usize,
    pub plant_knowledge_signal: bool,
    /// Seed of the placeholder video/audio features; matches
    /// [`LoadOptions::embed_seed`] so reloaded data is identical.
    pub embed_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            n_utterances: 2,
            tokens_per_utterance: 4,
            dim: 16,
            kg_size: 60,
            plant_knowledge_signal: true,
            embed_seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub samples: Vec<Sample>,
    pub kg: KnowledgeGraph,
    /// Whether each sample mentions a hub-linked entity.
    pub indicators: Vec<bool>,
    pub signal_entities: Vec<String>,
    pub distractor_entities: Vec<String>,
}

fn entity_name(i: usize) -> String {
    let mut s = String::new();
    let mut x = i;
    for _ in 0..3 {
        s.push_str(SYLLABLES[x % SYLLABLES.len()]);
        x /= SYLLABLES.len();
    }
    let mut name = s[..1].to_uppercase() + &s[1..];
    if i >= SYLLABLES.len().pow(3) {
        name.push_str(&format!(" {}", i / SYLLABLES.len().pow(3)));
    }
    name
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid literal date")
}

fn random_date(rng: &mut ChaCha8Rng, from: NaiveDate, to: NaiveDate) -> NaiveDate {
    let span = (to - from).num_days();
    from + Duration::days(rng.gen_range(0..=span))
}

/// Generates a dataset and its knowledge graph. Panics if any count is zero.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> SynthOutput {
    assert!(
        config.n_samples >= 1
            && config.n_utterances >= 1
            && config.tokens_per_utterance >= 1
            && config.dim >= 1
            && config.kg_size >= 1,
        "synthetic counts must be positive"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_signal = (config.kg_size / 2).max(1);
    let names: Vec<String> = (0..config.kg_size).map(entity_name).collect();
    let (signal, distractor) = names.split_at(n_signal.min(names.len()));

    let mut kg = KnowledgeGraph::new();
    let early = (date(1995, 1, 1), date(2008, 12, 31));
    let calls = (date(2009, 1, 1), date(2022, 12, 31));
    let future = (date(2023, 1, 1), date(2030, 12, 31));
    let add = |kg: &mut KnowledgeGraph, h: &str, r: &str, t: &str, d: NaiveDate| {
        kg.add_triple(h, r, t, d).expect("generated names are non-empty");
    };
    for s in signal {
        let d = random_date(&mut rng, early.0, early.1);
        add(&mut kg, s, "impact", HUB_ENTITY, d);
    }
    for e in signal.iter().chain(distractor) {
        let extra = rng.gen_range(1..=2);
        for _ in 0..extra {
            let rel = RELATIONS[rng.gen_range(1..RELATIONS.len())];
            let bg = BACKGROUND[rng.gen_range(0..BACKGROUND.len())];
            let d = random_date(&mut rng, early.0, early.1);
            if rng.gen_bool(0.5) {
                add(&mut kg, e, rel, bg, d);
            } else {
                add(&mut kg, bg, rel, e, d);
            }
        }
    }
    for e in distractor {
        let d = random_date(&mut rng, future.0, future.1);
        add(&mut kg, e, "impact", HUB_ENTITY, d);
    }

    let load_opts = LoadOptions {
        dim: config.dim,
        max_tokens: usize::MAX,
        embed_seed: config.embed_seed,
    };
    let mut samples = Vec::with_capacity(config.n_samples);
    let mut indicators = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let id = format!("synth-{seed}-{i:05}");
        let call_date = random_date(&mut rng, calls.0, calls.1);
        let indicator = distractor.is_empty() || rng.gen_bool(0.5);
        let mut utterances: Vec<Vec<String>> = (0..config.n_utterances)
            .map(|_| {
                (0..config.tokens_per_utterance)
                    .map(|_| FILLER.choose(&mut rng).unwrap().to_string())
                    .collect()
            })
            .collect();
        let mention = if indicator {
            signal.choose(&mut rng).unwrap()
        } else {
            distractor.choose(&mut rng).unwrap()
        };
        let u = rng.gen_range(0..config.n_utterances);
        let pos = rng.gen_range(0..=utterances[u].len());
        let words: Vec<String> = mention.split_whitespace().map(str::to_string).collect();
        utterances[u].splice(pos..pos, words);

        let movement = if config.plant_knowledge_signal {
            Grid::from_fn(|k| indicator ^ (k.asset.index() % 2 == 1))
        } else {
            Grid::from_fn(|_| rng.gen_bool(0.5))
        };
        let volatility = Grid::from_fn(|k| {
            let z: f64 = rng.sample(StandardNormal);
            z.abs() * VOL_SCALE[k.asset.index()]
        });

        let n = config.n_utterances;
        samples.push(Sample {
            video_feats: placeholder_features(&id, Modality::Video, n, &load_opts),
            audio_feats: placeholder_features(&id, Modality::Audio, n, &load_opts),
            id,
            call_date,
            utterances,
            labels: Labels {
                movement,
                volatility,
            },
        });
        indicators.push(indicator);
    }

    SynthOutput {
        samples,
        kg,
        indicators,
        signal_entities: signal.to_vec(),
        distractor_entities: distractor.to_vec(),
    }
}
