//! Command-line harness: data generation, training, Turn 1 evaluation, seed
//! sweeps with JSON/CSV reports, and demos.

pub mod config;
pub mod demo;
pub mod experiment;
pub mod output;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use nrr_core::dataset::{read_jsonl, write_jsonl, Episode, Label};
use nrr_core::kernel::Activation;
use nrr_core::models::{Checkpoint, Classifier, ModelKind};

use config::{parse_models, parse_seeds, Layer, RunConfig, SEED_ENV};
use experiment::{evaluate, run_sweep, train_model, Data, ExperimentReport};

// Stdout writes that surface errors, so a closed pipe ends the run quietly.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        write!(std::io::stdout(), $($t)*)?
    }};
}
macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        writeln!(std::io::stdout(), $($t)*)?
    }};
}

/// Error caused by the invocation rather than the run; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: anyhow::Error) -> anyhow::Error {
    UsageError(format!("{e:#}")).into()
}

#[derive(Parser, Debug)]
#[command(name = "nrr", version, about = "Ambiguity-preservation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write train.jsonl and eval.jsonl.
    GenData(GenDataArgs),
    /// Train one model and save a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on neutralized and contextual input.
    EvalTurn1(EvalArgs),
    /// Train every model under every seed and write the report.
    Sweep(SweepArgs),
    /// Constructed demonstrations.
    Demo(DemoArgs),
    /// Re-emit tables and plot data from an existing report.json.
    Report(ReportArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct ConfigArgs {
    /// JSON config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_eval: Option<usize>,
    /// Seed of the generated training and eval data.
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ActivationArg {
    Sigmoid,
    Tanh,
    Relu,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Sigmoid => Activation::Sigmoid,
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Relu => Activation::Relu,
        }
    }
}

impl ConfigArgs {
    fn flag_layer(&self) -> Result<Layer> {
        let mut l = Layer::new();
        l.set_opt(&["dataset", "n"], self.n_train)?;
        l.set_opt(&["n_eval"], self.n_eval)?;
        l.set_opt(&["dataset", "seed"], self.data_seed)?;
        l.set_opt(&["train", "epochs"], self.epochs)?;
        l.set_opt(&["train", "batch_size"], self.batch_size)?;
        l.set_opt(&["train", "optimizer", "lr"], self.lr)?;
        l.set_opt(&["model", "embed_dim"], self.embed_dim)?;
        l.set_opt(&["model", "hidden_dim"], self.hidden_dim)?;
        l.set_opt(&["model", "k"], self.k)?;
        l.set_opt(&["model", "activation"], self.activation.map(Activation::from))?;
        Ok(l)
    }

    /// Defaults, then `NRR_SEED`, then the config file, then `extra`, then
    /// these flags.
    fn resolve(&self, extra: Layer) -> Result<RunConfig> {
        let env = std::env::var(SEED_ENV).ok();
        let mut layers = vec![Layer::from_env_value(env.as_deref()).map_err(usage)?];
        if let Some(path) = &self.config {
            layers.push(Layer::from_file(path).map_err(usage)?);
        }
        layers.push(extra);
        layers.push(self.flag_layer()?);
        config::resolve(&layers).map_err(usage)
    }
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, default_value = "data")]
    pub out_dir: PathBuf,
    /// Training episodes.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub balance: Option<f64>,
    /// Data seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, default_value = "nrr-lite", value_parser = parse_model)]
    pub model: ModelKind,
    /// Run seed (initialization and shuffling); defaults to the first
    /// configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training JSONL; generated from the config when absent.
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    #[arg(long, default_value = "checkpoint.json")]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Eval JSONL; generated from the config when absent.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// Print the result as JSON.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Comma-separated model list.
    #[arg(long, value_parser = parse_model_list)]
    pub models: Option<ModelList>,
    /// Seeds as `0..4`, `0,1,2` or a single value.
    #[arg(long, value_parser = parse_seed_list)]
    pub seeds: Option<SeedList>,
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Concurrent training jobs; does not affect results.
    #[arg(long, default_value_t = default_jobs())]
    pub jobs: usize,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct DemoArgs {
    #[arg(value_enum)]
    pub which: DemoKind,
    /// Context threshold for the cit demo.
    #[arg(long, default_value_t = nrr_core::cit::DEFAULT_TAU)]
    pub tau: f64,
    /// Dominance thresholds for the resolve demo.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.6, 0.75, 0.9, 0.99])]
    pub theta: Vec<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DemoKind {
    Nca,
    Cit,
    Resolve,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long, default_value = "out/report.json")]
    pub input: PathBuf,
    /// Where to write the regenerated files; defaults to the report's directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: nrr_core::NrrError| e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelList(pub Vec<ModelKind>);

#[derive(Debug, Clone, PartialEq)]
pub struct SeedList(pub Vec<u64>);

fn parse_model_list(s: &str) -> std::result::Result<ModelList, String> {
    parse_models(s).map(ModelList).map_err(|e| e.to_string())
}

fn parse_seed_list(s: &str) -> std::result::Result<SeedList, String> {
    parse_seeds(s).map(SeedList).map_err(|e| e.to_string())
}

fn load_episodes(path: &Path, config: &RunConfig) -> Result<Vec<Episode>> {
    let vocab = config.dataset.vocab()?;
    read_jsonl(path, &vocab).with_context(|| format!("reading {}", path.display()))
}

fn label_counts(episodes: &[Episode]) -> (usize, usize) {
    let fin = episodes.iter().filter(|e| e.label == Label::Financial).count();
    (fin, episodes.len() - fin)
}

fn cmd_gen_data(args: &GenDataArgs) -> Result<()> {
    let mut extra = Layer::new();
    extra.set_opt(&["dataset", "n"], args.n)?;
    extra.set_opt(&["dataset", "balance"], args.balance)?;
    extra.set_opt(&["dataset", "seed"], args.seed)?;
    let config = args.config.resolve(extra)?;
    let data = Data::generate(&config)?;
    let vocab = config.dataset.vocab()?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    for (name, eps) in [("train.jsonl", &data.train), ("eval.jsonl", &data.eval)] {
        let path = args.out_dir.join(name);
        write_jsonl(eps, &vocab, &path)?;
        let (fin, riv) = label_counts(eps);
        outln!(
            "{}: {} episodes, FINANCIAL {fin} / RIVER {riv}",
            path.display(),
            eps.len()
        );
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut extra = Layer::new();
    extra.set_opt(&["seeds"], args.seed.map(|s| vec![s]))?;
    extra.set(&["models"], json!([args.model]));
    let config = args.config.resolve(extra)?;
    let seed = config.seeds[0];
    let episodes = match &args.train_data {
        Some(p) => load_episodes(p, &config)?,
        None => nrr_core::dataset::generate(&config.dataset)?,
    };
    let (model, outcome) = train_model(&config, args.model, seed, &episodes)?;
    let mut ck = Checkpoint::capture(&model);
    ck.train = Some(config.train);
    ck.seed = Some(seed);
    ck.save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    outln!(
        "trained {} (seed {seed}) on {} episodes: loss {:.6} → {:.6}; saved {}",
        args.model,
        episodes.len(),
        outcome.epoch_loss[0],
        outcome.final_loss(),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let config = args.config.resolve(Layer::new())?;
    let model = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?
        .restore()?;
    let eval = match &args.eval_data {
        Some(p) => load_episodes(p, &config)?,
        None => nrr_core::dataset::generate(&config.eval_spec())?,
    };
    let ev = evaluate(&model, &eval)?;
    if args.json {
        outln!("{}", serde_json::to_string_pretty(&ev)?);
    } else {
        outln!("model            {}", model.kind());
        outln!("episodes         {}", eval.len());
        outln!("turn1_entropy    {:.6}", ev.turn1_entropy_mean);
        match ev.gate_entropy_mean {
            Some(g) => outln!("gate_entropy     {g:.6}"),
            None => outln!("gate_entropy     -"),
        }
        outln!("context_accuracy {:.4}", ev.context_accuracy);
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let mut extra = Layer::new();
    extra.set_opt(&["models"], args.models.as_ref().map(|m| &m.0))?;
    extra.set_opt(&["seeds"], args.seeds.as_ref().map(|s| &s.0))?;
    let config = args.config.resolve(extra)?;
    let data = match (&args.train_data, &args.eval_data) {
        (None, None) => Data::generate(&config)?,
        (Some(t), Some(e)) => Data {
            train: load_episodes(t, &config)?,
            eval: load_episodes(e, &config)?,
        },
        _ => bail!(UsageError("--train-data and --eval-data go together".into())),
    };
    if args.jobs == 0 {
        bail!(UsageError("--jobs must be positive".into()));
    }
    let report = run_sweep(&config, &data, args.jobs)?;
    let written = output::write_all(&report, &args.out_dir)?;
    out!("{}", output::render_table(&report));
    for p in written {
        outln!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_demo(args: &DemoArgs) -> Result<()> {
    let text = match args.which {
        DemoKind::Nca => demo::nca()?,
        DemoKind::Cit => demo::cit(args.tau).map_err(usage)?,
        DemoKind::Resolve => demo::resolve_demo(&args.theta).map_err(usage)?,
    };
    out!("{text}");
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let report = ExperimentReport::from_json(&text)?;
    let dir = match &args.out_dir {
        Some(d) => d.clone(),
        None => args
            .input
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    out!("{}", output::render_table(&report));
    for p in output::write_all(&report, &dir)? {
        outln!("wrote {}", p.display());
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::EvalTurn1(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Demo(a) => cmd_demo(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code:
fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.downcast_ref::<std::io::Error>()
        .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

/// 0 on success, 1 on runtime failure, 2 on usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) if is_broken_pipe(&e) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}
