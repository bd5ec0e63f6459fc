//! `manager`: command-line front end for the multimodal earnings-call
//! forecasting pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use log::info;
use manager_core::corpus::{
    load_dataset, synth_generate, write_dataset, FeatureArchive, FeatureProvider, FileBacked, HashEmbed, LoadOptions,
    Sample, SynthConfig, Task, DEFAULT_DIM, DEFAULT_MAX_TOKENS,
};
use manager_core::evaluation::{
    ablation_run, build_graphs, check_disjoint, evaluate, parse_split, select_split, train_with_validation,
    write_text, EvalConfig, TrainConfig, TrainError,
};
use manager_core::graph_builder::{build_graph, Variant, DEFAULT_CAP_PER_ANCHOR};
use manager_core::instruct_export::export_jsonl;
use manager_core::kg_store::KnowledgeGraph;
use manager_core::model::{forward, gradient_check, ModelConfig, ModelError, ModelParams, DEFAULT_LAYERS};

/// Name of the feature archive `synth` writes next to its dataset; picked up
/// automatically when `--features` is not given.
const SIDECAR: &str = "features.mgrf";

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } | TrainError::Numerics(_) => CliError::Numerical(e.to_string()),
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Numerics(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "manager", version, about = "Knowledge-enhanced multimodal forecasting from earnings calls")]
#[command(args_override_self = true, propagate_version = true)]
struct Cli {
    /// `key = value` file of flags for the subcommand; explicit flags win
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a dataset and knowledge graph and print a summary
    Ingest(IngestArgs),
    /// Generate a synthetic dataset, knowledge graph and feature archive
    Synth(SynthArgs),
    /// Print the cross-modal graph of one or all samples
    BuildGraph(BuildGraphArgs),
    /// Train a model and write a checkpoint
    Train(TrainArgs),
    /// Evaluate a checkpoint and write per-cell metric records
    Evaluate(EvaluateArgs),
    /// Train and evaluate every ablation variant under one budget
    Ablate(AblateArgs),
    /// Write instruction-tuning records as JSON lines
    ExportInstructions(ExportArgs),
    /// Compare analytic gradients with finite differences on a random instance
    Gradcheck(GradcheckArgs),
}

fn positive_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{s} is not a positive number"))
    }
}

fn non_negative_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{s} is not a non-negative number"))
    }
}

fn positive_usize(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("{s} is not a positive integer")),
    }
}

fn fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{s} is not strictly between 0 and 1"))
    }
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Transcript dataset, one JSON record per line
    #[arg(long, default_value = "data.jsonl", value_name = "PATH")]
    data: PathBuf,
    /// Knowledge graph TSV (head, relation, tail, date)
    #[arg(long, default_value = "kg.tsv", value_name = "PATH")]
    kg: PathBuf,
    /// Video/audio feature archive [default: features.mgrf beside --data, if present]
    #[arg(long, value_name = "PATH")]
    features: Option<PathBuf>,
    /// Archive of text features under `txt/<token>`; hashed embeddings otherwise
    #[arg(long, value_name = "PATH")]
    text_features: Option<PathBuf>,
    /// Feature width [default: from the feature archive, else 768]
    #[arg(long, value_parser = positive_usize)]
    d: Option<usize>,
    /// Maximum tokens per transcript
    #[arg(long, default_value_t = DEFAULT_MAX_TOKENS, value_parser = positive_usize)]
    max_tokens: usize,
    /// Seed of the hashed placeholder embeddings
    #[arg(long, default_value_t = 0)]
    embed_seed: u64,
    /// Knowledge pairs kept per linked entity
    #[arg(long, default_value_t = DEFAULT_CAP_PER_ANCHOR)]
    cap_per_anchor: usize,
}

/// Everything a subcommand needs from disk.
struct Loaded {
    samples: Vec<Sample>,
    kg: KnowledgeGraph,
    provider: Box<dyn FeatureProvider>,
    dim: usize,
}

impl DataArgs {
    fn archive(&self) -> Result<Option<FeatureArchive>> {
        let path = match &self.features {
            Some(p) => p.clone(),
            None => {
                let beside = self.data.parent().unwrap_or(Path::new("")).join(SIDECAR);
                if !beside.is_file() {
                    return Ok(None);
                }
                info!("using feature archive {}", beside.display());
                beside
            }
        };
        FeatureArchive::load(&path).map(Some).map_err(data)
    }

    fn load(&self) -> Result<Loaded> {
        let archive = self.archive()?;
        let text = match &self.text_features {
            Some(p) => Some(FeatureArchive::load(p).map_err(data)?),
            None => None,
        };
        let dim = self
            .d
            .or(archive.as_ref().map(FeatureArchive::dim))
            .or(text.as_ref().map(FeatureArchive::dim))
            .unwrap_or(DEFAULT_DIM);
        let opts = LoadOptions {
            dim,
            max_tokens: self.max_tokens,
            embed_seed: self.embed_seed,
        };
        let samples = load_dataset(&self.data, archive.as_ref(), &opts).map_err(data)?;
        let kg = KnowledgeGraph::load(&self.kg).map_err(data)?;
        let provider: Box<dyn FeatureProvider> = match text {
            Some(a) if a.dim() != dim => {
                return Err(CliError::Data(format!("text features have width {} but D = {dim}", a.dim())))
            }
            Some(a) => Box::new(FileBacked::new(a)),
            None => Box::new(HashEmbed::new(dim, self.embed_seed)),
        };
        info!("loaded {} samples, {} triples, D = {dim}", samples.len(), kg.n_triples());
        Ok(Loaded {
            samples,
            kg,
            provider,
            dim,
        })
    }
}

fn read_split(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(parse_split(&text))
}

fn subset(samples: &[Sample], split: Option<&PathBuf>) -> Result<Vec<Sample>> {
    match split {
        Some(p) => select_split(samples, &read_split(p)?).map_err(data),
        None => Ok(samples.to_vec()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    write_text(path, text).map_err(CliError::from)
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Write the summary here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn run_ingest(a: &IngestArgs) -> Result<()> {
    let l = a.data.load()?;
    let (mut tokens, mut utterances, mut pairs, mut anchored) = (0, 0, 0, 0);
    for s in &l.samples {
        tokens += s.n_tokens();
        utterances += s.n_utterances();
        let view = l.kg.view(s.call_date);
        let anchors = view.link_entities(&s.flat_tokens());
        if !anchors.is_empty() {
            anchored += 1;
        }
        pairs += view.retrieve_knowledge(&anchors, a.data.cap_per_anchor).len();
    }
    let mut text = String::new();
    let _ = writeln!(text, "samples: {}", l.samples.len());
    let _ = writeln!(text, "utterances: {utterances}");
    let _ = writeln!(text, "tokens: {tokens}");
    if let (Some(first), Some(last)) = (
        l.samples.iter().map(|s| s.call_date).min(),
        l.samples.iter().map(|s| s.call_date).max(),
    ) {
        let _ = writeln!(text, "call dates: {first} .. {last}");
    }
    let _ = writeln!(text, "feature width: {}", l.dim);
    let _ = writeln!(
        text,
        "knowledge graph: {} entities, {} relations, {} triples",
        l.kg.n_entities(),
        l.kg.n_relations(),
        l.kg.n_triples()
    );
    let _ = writeln!(text, "samples with a linked entity: {anchored}");
    let _ = writeln!(text, "knowledge pairs retrieved: {pairs}");
    emit(a.out.as_ref(), &text)
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of samples
    #[arg(long, default_value_t = 200, value_parser = positive_usize)]
    n: usize,
    /// Make the movement labels depend on a knowledge-graph signal
    #[arg(long)]
    plant_knowledge: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature width
    #[arg(long, default_value_t = 16, value_parser = positive_usize)]
    d: usize,
    /// Approximate number of knowledge-graph entities
    #[arg(long, default_value_t = 60, value_parser = positive_usize)]
    kg_size: usize,
    #[arg(long, default_value_t = 2, value_parser = positive_usize)]
    utterances: usize,
    #[arg(long, default_value_t = 4, value_parser = positive_usize)]
    tokens_per_utterance: usize,
    /// Directory receiving data.jsonl, kg.tsv, features.mgrf and indicators.tsv
    #[arg(long, default_value = ".", value_name = "DIR")]
    out_dir: PathBuf,
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_samples: a.n,
        n_utterances: a.utterances,
        tokens_per_utterance: a.tokens_per_utterance,
        dim: a.d,
        kg_size: a.kg_size,
        plant_knowledge_signal: a.plant_knowledge,
        embed_seed: 0,
    };
    let out = synth_generate(&cfg, a.seed);
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::Data(format!("{}: {e}", a.out_dir.display())))?;
    write_dataset(&out.samples, a.out_dir.join("data.jsonl")).map_err(data)?;
    write_file(&a.out_dir.join("kg.tsv"), &out.kg.to_tsv())?;
    FeatureArchive::from_samples(&out.samples)
        .and_then(|arch| arch.save(a.out_dir.join(SIDECAR)))
        .map_err(data)?;
    let mut ind = String::new();
    for (s, &flag) in out.samples.iter().zip(&out.indicators) {
        let _ = writeln!(ind, "{}\t{}", s.id, u8::from(flag));
    }
    write_file(&a.out_dir.join("indicators.tsv"), &ind)?;
    println!(
        "wrote {} samples, {} triples (D = {}) to {}",
        out.samples.len(),
        out.kg.n_triples(),
        a.d,
        a.out_dir.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
struct BuildGraphArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Only this sample id
    #[arg(long)]
    sample: Option<String>,
    #[arg(long, default_value = "full")]
    variant: Variant,
    /// Write the dump here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn run_build_graph(a: &BuildGraphArgs) -> Result<()> {
    let l = a.data.load()?;
    let chosen: Vec<&Sample> = match &a.sample {
        Some(id) => vec![l
            .samples
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| CliError::Data(format!("no sample with id {id:?}")))?],
        None => l.samples.iter().collect(),
    };
    let mut text = String::new();
    for s in chosen {
        let g = build_graph(s, &l.kg.view(s.call_date), l.provider.as_ref(), a.variant, a.data.cap_per_anchor)
            .map_err(data)?;
        text.push_str(&g.dump(s, &l.kg));
    }
    emit(a.out.as_ref(), &text)
}

#[derive(Args, Debug, Clone)]
struct TrainingArgs {
    #[arg(long, default_value = "movement")]
    task: Task,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Learning rate of the graph layers
    #[arg(long, default_value_t = 1e-3, value_parser = positive_f64)]
    lr_gcn: f64,
    /// Learning rate of the task head [default: 1e-4 movement, 1e-3 volatility]
    #[arg(long, value_parser = positive_f64)]
    lr_task: Option<f64>,
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.01, value_parser = non_negative_f64)]
    weight_decay: f64,
    /// Seed for initialization and shuffling
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of graph convolution layers
    #[arg(long, default_value_t = DEFAULT_LAYERS, value_parser = positive_usize)]
    l: usize,
}

impl TrainingArgs {
    fn config(&self, dim: usize, variant: Variant, cap: usize) -> TrainConfig {
        let mut c = TrainConfig::new(self.task, dim);
        c.epochs = self.epochs;
        c.lr_gcn = self.lr_gcn;
        if let Some(lr) = self.lr_task {
            c.lr_task = lr;
        }
        c.batch_size = self.batch_size;
        c.weight_decay = self.weight_decay;
        c.seed = self.seed;
        c.layers = self.l;
        c.variant = variant;
        c.cap_per_anchor = cap;
        c
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    training: TrainingArgs,
    #[arg(long, default_value = "full")]
    variant: Variant,
    /// Train only on the sample ids listed in this file
    #[arg(long, value_name = "PATH")]
    split: Option<PathBuf>,
    /// Validation ids; keeps the epoch with the lowest validation loss
    #[arg(long, value_name = "PATH")]
    validation_split: Option<PathBuf>,
    /// Checkpoint path
    #[arg(long, default_value = "model.bin", value_name = "PATH")]
    out: PathBuf,
    /// Write the per-epoch training loss here
    #[arg(long, value_name = "PATH")]
    history: Option<PathBuf>,
    /// Worker threads for the final training-set evaluation
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    jobs: usize,
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let l = a.data.load()?;
    let train_set = subset(&l.samples, a.split.as_ref())?;
    let validation = match &a.validation_split {
        Some(p) => {
            let v = select_split(&l.samples, &read_split(p)?).map_err(data)?;
            check_disjoint(&[&train_set, &v]).map_err(data)?;
            Some(v)
        }
        None => None,
    };
    let cfg = a.training.config(l.dim, a.variant, a.data.cap_per_anchor);
    let outcome = train_with_validation(&train_set, validation.as_deref(), &l.kg, l.provider.as_ref(), &cfg)?;
    outcome.params.save(&a.out)?;
    if let Some(p) = &a.history {
        let mut text = String::from("epoch\ttrain_loss\tvalidation_loss\n");
        for (i, loss) in outcome.loss_history.iter().enumerate() {
            let v = outcome.validation_history.get(i).map_or(String::new(), |v| format!("{v:.9}"));
            let _ = writeln!(text, "{}\t{loss:.9}\t{v}", i + 1);
        }
        write_file(p, &text)?;
    }
    let mut ec = EvalConfig::from(&cfg);
    ec.jobs = a.jobs;
    let report = evaluate(&outcome.params, &train_set, &l.kg, l.provider.as_ref(), &ec)?;
    if let Some(last) = outcome.loss_history.last() {
        println!("final training loss: {last:.6}");
    }
    if validation.is_some() {
        println!("selected epoch: {}", outcome.selected_epoch);
    }
    match cfg.task {
        Task::Movement => println!("train F1: {:.4}", report.mean_value()),
        Task::Volatility => println!("train MSE: {:.6}", report.mean_value()),
    }
    println!("checkpoint: {}", a.out.display());
    Ok(())
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint to evaluate
    #[arg(long, default_value = "model.bin", value_name = "PATH")]
    model: PathBuf,
    #[arg(long, default_value = "movement")]
    task: Task,
    #[arg(long, default_value = "full")]
    variant: Variant,
    /// Evaluate only the sample ids listed in this file
    #[arg(long, value_name = "PATH")]
    split: Option<PathBuf>,
    /// Training ids; evaluation refuses to run if the splits overlap
    #[arg(long, value_name = "PATH")]
    train_split: Option<PathBuf>,
    /// Per-cell metric records, one JSON object per line
    #[arg(long, default_value = "metrics.jsonl", value_name = "PATH")]
    records: PathBuf,
    /// Write the text report here instead of stdout
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    jobs: usize,
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let l = a.data.load()?;
    let params = ModelParams::load(&a.model)?;
    if params.config.dim != l.dim {
        return Err(CliError::Data(format!(
            "{} has width {} but the data has D = {}",
            a.model.display(),
            params.config.dim,
            l.dim
        )));
    }
    let test = subset(&l.samples, a.split.as_ref())?;
    if let Some(p) = &a.train_split {
        let train_set = select_split(&l.samples, &read_split(p)?).map_err(data)?;
        check_disjoint(&[&train_set, &test]).map_err(data)?;
    }
    let ec = EvalConfig {
        task: a.task,
        variant: a.variant,
        cap_per_anchor: a.data.cap_per_anchor,
        jobs: a.jobs,
    };
    let report = evaluate(&params, &test, &l.kg, l.provider.as_ref(), &ec)?;
    write_file(&a.records, &report.records_jsonl())?;
    emit(a.report.as_ref(), &report.to_text())
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    training: TrainingArgs,
    /// Training ids [default: all but the last --test-fraction of samples]
    #[arg(long, value_name = "PATH")]
    train_split: Option<PathBuf>,
    /// Test ids [default: the last --test-fraction of samples]
    #[arg(long, value_name = "PATH")]
    test_split: Option<PathBuf>,
    /// Share of samples held out when no split files are given
    #[arg(long, default_value_t = 0.2, value_parser = fraction)]
    test_fraction: f64,
    /// Per-cell metric records for every variant
    #[arg(long, default_value = "ablation.jsonl", value_name = "PATH")]
    records: PathBuf,
    /// Write the text table here instead of stdout
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

fn run_ablate(a: &AblateArgs) -> Result<()> {
    let l = a.data.load()?;
    let (train_set, test_set) = match (&a.train_split, &a.test_split) {
        (Some(tr), Some(te)) => (subset(&l.samples, Some(tr))?, subset(&l.samples, Some(te))?),
        (None, None) => {
            let n_test = ((l.samples.len() as f64 * a.test_fraction).round() as usize).max(1);
            if n_test >= l.samples.len() {
                return Err(CliError::Data(format!("{} samples are too few to hold out a test set", l.samples.len())));
            }
            let cut = l.samples.len() - n_test;
            (l.samples[..cut].to_vec(), l.samples[cut..].to_vec())
        }
        _ => return Err(CliError::Usage("--train-split and --test-split go together".into())),
    };
    check_disjoint(&[&train_set, &test_set]).map_err(data)?;
    let base = a.training.config(l.dim, Variant::Full, a.data.cap_per_anchor);
    let table = ablation_run(&train_set, &test_set, &l.kg, l.provider.as_ref(), &base)?;
    write_file(&a.records, &table.records_jsonl())?;
    emit(a.report.as_ref(), &table.to_text())
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "movement")]
    task: Task,
    /// Export only the sample ids listed in this file
    #[arg(long, value_name = "PATH")]
    split: Option<PathBuf>,
    /// Attach each sample's pooled graph representation from this checkpoint
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Graph variant used for the pooled representation
    #[arg(long, default_value = "full")]
    variant: Variant,
    #[arg(long, default_value = "instructions.jsonl", value_name = "PATH")]
    out: PathBuf,
}

fn run_export(a: &ExportArgs) -> Result<()> {
    let l = a.data.load()?;
    let samples = subset(&l.samples, a.split.as_ref())?;
    let pooled = match &a.model {
        Some(p) => {
            let params = ModelParams::load(p)?;
            let graphs =
                build_graphs(&samples, &l.kg, l.provider.as_ref(), a.variant, a.data.cap_per_anchor).map_err(data)?;
            let mut rows = Vec::with_capacity(graphs.len());
            for g in &graphs {
                rows.push(forward(g, &params)?.cache.pooled().to_vec());
            }
            Some(rows)
        }
        None => None,
    };
    let n = export_jsonl(&samples, &l.kg, a.task, a.data.cap_per_anchor, pooled.as_deref(), &a.out).map_err(data)?;
    println!("wrote {n} records to {}", a.out.display());
    Ok(())
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature width of the random instance
    #[arg(long, default_value_t = 8, value_parser = positive_usize)]
    d: usize,
    /// Number of graph convolution layers
    #[arg(long, default_value_t = DEFAULT_LAYERS, value_parser = positive_usize)]
    l: usize,
    /// Central-difference step
    #[arg(long, default_value_t = 1e-5, value_parser = positive_f64)]
    h: f64,
    /// Pass threshold on the worst relative error
    #[arg(long, default_value_t = 1e-4, value_parser = positive_f64)]
    tolerance: f64,
}

/// Redraws allowed when the instance sits on a ReLU kink.
const MAX_REDRAWS: u64 = 100;

fn run_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let synth = SynthConfig {
        n_samples: 1,
        dim: a.d,
        kg_size: 8,
        ..SynthConfig::default()
    };
    let mut worst = 0.0f64;
    for redraw in 0..MAX_REDRAWS {
        let seed = a.seed.wrapping_add(redraw);
        let out = synth_generate(&synth, seed);
        let sample = &out.samples[0];
        let graph = build_graph(
            sample,
            &out.kg.view(sample.call_date),
            &HashEmbed::new(a.d, 0),
            Variant::Full,
            DEFAULT_CAP_PER_ANCHOR,
        )
        .map_err(data)?;
        let params = ModelParams::init(ModelConfig {
            layers: a.l,
            dim: a.d,
            seed,
        });
        let mut results = Vec::new();
        for task in [Task::Movement, Task::Volatility] {
            results.push((task, gradient_check(&graph, &params, &sample.labels, task, a.h)?));
        }
        if results.iter().any(|(_, r)| r.kink_coordinates > 0) {
            info!("seed {seed}: instance straddles a ReLU kink, redrawing");
            continue;
        }
        if redraw > 0 {
            println!("redrew {redraw} instance(s) that straddled a ReLU kink; used seed {seed}");
        }
        for (task, r) in &results {
            let per: Vec<String> = r.max_rel_error.iter().map(|e| format!("{e:.3e}")).collect();
            println!("{task}: max relative error {:.3e} (per tensor: {})", r.worst(), per.join(" "));
            worst = worst.max(r.worst());
        }
        println!("max relative error: {worst:.3e}");
        return if worst < a.tolerance {
            Ok(())
        } else {
            Err(CliError::Numerical(format!(
                "gradient check failed: {worst:.3e} exceeds {:.1e}",
                a.tolerance
            )))
        };
    }
    Err(CliError::Numerical(format!("every one of {MAX_REDRAWS} instances straddled a ReLU kink")))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => run_ingest(a),
        Command::Synth(a) => run_synth(a),
        Command::BuildGraph(a) => run_build_graph(a),
        Command::Train(a) => run_train(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Ablate(a) => run_ablate(a),
        Command::ExportInstructions(a) => run_export(a),
        Command::Gradcheck(a) => run_gradcheck(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MGR_LOG", "warn")).init();
    let argv = match config::expand(std::env::args().collect(), &Cli::command()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
