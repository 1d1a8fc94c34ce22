use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use pdrtune::aiger;
use pdrtune::coi::{self, CoiReport};
use pdrtune::features::{self, FeatureNormalizer, FEATURE_NAMES};
use pdrtune::graphdata::GraphData;
use pdrtune::model::{GraphTensor, LossConfig, PredictorNet};
use pdrtune::params::{ConfigSpace, PdrConfig};
use pdrtune::predict;
use pdrtune::runner::{self, RunOutcome, RunSpec};
use pdrtune::synth::{self, SynthConfig};
use pdrtune::train::{self, TrainConfig};

/// Predicts good PDR configurations for hardware circuits.
#[derive(Parser)]
#[command(name = "pdrtune", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Global {
    /// Seed for every stochastic choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Log filter, e.g. `info` or `pdrtune=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the 11 static features of circuits as CSV.
    Features {
        #[arg(required = true)]
        aigs: Vec<PathBuf>,
    },
    /// Dump the GNN graph of a circuit.
    Graph {
        aig: PathBuf,
        /// Directory receiving `edges.txt` and `nodes.csv`.
        #[arg(long)]
        out_dir: PathBuf,
        /// Build from the whole circuit instead of its cone of influence.
        #[arg(long)]
        no_coi: bool,
    },
    /// Cone-of-influence reduction statistics as CSV.
    Coi {
        #[arg(required = true)]
        aigs: Vec<PathBuf>,
        /// Also write each reduced circuit into this directory.
        #[arg(long)]
        write_reduced: Option<PathBuf>,
    },
    /// List the valid configurations.
    Space {
        #[arg(long, value_enum, default_value_t = SpaceFormat::Flags)]
        format: SpaceFormat,
    },
    /// Train the runtime predictor.
    Train(TrainArgs),
    /// Rank configurations for a circuit.
    Predict {
        aig: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Normalizer JSON; defaults to the statistics stored in the model.
        #[arg(long)]
        normalizer: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Output CSV (standard output when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an engine over circuits with predicted or given configurations.
    Run(RunArgs),
    /// Compare a method's results with a baseline.
    Evaluate {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        method: PathBuf,
        #[arg(long, default_value_t = runner::DEFAULT_WALL_LIMIT)]
        wall_limit: f64,
        /// Scatter CSV destination.
        #[arg(long)]
        scatter: Option<PathBuf>,
    },
    /// Permutation importance of the static features.
    Importance {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        aigs: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// Circuits whose feature columns are shuffled.
        #[arg(long, value_enum, default_value_t = Fold::Test)]
        fold: Fold,
    },
    /// Generate a synthetic corpus with planted runtimes.
    Synth {
        #[arg(long, default_value_t = 60)]
        n: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = runner::DEFAULT_WALL_LIMIT)]
        wall_limit: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Fold {
    Train,
    Val,
    Test,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceFormat {
    Flags,
    Bits,
}

#[derive(Args)]
struct TrainArgs {
    /// Runtime CSV `circuit,config_flags,seconds,outcome`.
    #[arg(long)]
    data: PathBuf,
    /// Directory holding `<circuit>.aig` or `<circuit>.aag`.
    #[arg(long)]
    aigs: PathBuf,
    /// Receives `model.ckpt`, `normalizer.json`, `metrics.csv`, `split.csv`.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long, default_value_t = 4)]
    batch_circuits: usize,
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
    /// Keep only circuits whose default run exceeds this many seconds.
    #[arg(long)]
    min_default_seconds: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(required = true)]
    aigs: Vec<PathBuf>,
    /// Engine command with `{aig}` and `{flags}` placeholders.
    #[arg(long, default_value = "abc -c \"read {aig}; pdr {flags}\"")]
    template: String,
    #[arg(long, default_value_t = runner::DEFAULT_WALL_LIMIT)]
    wall_limit: f64,
    #[arg(long, default_value_t = 1)]
    max_parallel: usize,
    /// Run the portfolio one configuration at a time.
    #[arg(long, conflicts_with = "max_parallel")]
    sequential: bool,
    /// Run every portfolio member at once.
    #[arg(long, conflicts_with_all = ["max_parallel", "sequential"])]
    parallel: bool,
    /// Stop the remaining configurations once one solves.
    #[arg(long)]
    early_cancel: bool,
    #[arg(long, default_value = runner::DEFAULT_SAFE_PATTERN)]
    safe_pattern: String,
    #[arg(long, default_value = runner::DEFAULT_UNSAFE_PATTERN)]
    unsafe_pattern: String,
    /// Checkpoint used to pick the top configurations.
    #[arg(long, conflicts_with_all = ["config", "baseline"])]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    top: usize,
    /// Explicit configuration such as `pdr -g -i`; repeatable.
    #[arg(long)]
    config: Vec<String>,
    /// Run the default configuration only.
    #[arg(long)]
    baseline: bool,
    #[arg(long, default_value = "runs")]
    log_dir: PathBuf,
    /// Results CSV (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.global.log_level).init();
    if cli.global.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli) {
        Ok(code) => code,
        // Output piped into `head` and the like.
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn read_aig(path: &Path) -> Result<aiger::Aig> {
    aiger::read_file(path).with_context(|| format!("reading {}", path.display()))
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let seed = cli.global.seed;
    match cli.command {
        Cmd::Features { aigs } => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "circuit,{}", FEATURE_NAMES.join(","))?;
            for path in aigs {
                let f = features::extract(&read_aig(&path)?);
                let row: Vec<String> = f.to_array().iter().map(|v| v.to_string()).collect();
                writeln!(out, "{},{}", runner::circuit_id(&path), row.join(","))?;
            }
        }
        Cmd::Graph { aig, out_dir, no_coi } => {
            let g = GraphData::build(&read_aig(&aig)?, !no_coi);
            std::fs::create_dir_all(&out_dir)?;
            g.write_edgelist(BufWriter::new(File::create(out_dir.join("edges.txt"))?))?;
            g.write_node_features(BufWriter::new(File::create(out_dir.join("nodes.csv"))?))?;
            println!("{} nodes, {} edges", g.num_nodes, g.edges.len());
        }
        Cmd::Coi { aigs, write_reduced } => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", CoiReport::CSV_HEADER)?;
            for path in aigs {
                let (reduced, report) = coi::reduce(&read_aig(&path)?).with_context(|| path.display().to_string())?;
                let id = runner::circuit_id(&path);
                writeln!(out, "{}", report.csv_row(&id))?;
                if let Some(dir) = &write_reduced {
                    std::fs::create_dir_all(dir)?;
                    std::fs::write(dir.join(format!("{id}.aig")), reduced.write_binary())?;
                }
            }
        }
        Cmd::Space { format } => {
            let mut out = std::io::stdout().lock();
            for c in &ConfigSpace::enumerate_valid() {
                match format {
                    SpaceFormat::Flags => writeln!(out, "{c}")?,
                    SpaceFormat::Bits => writeln!(out, "{}", c.to_bit_string())?,
                }
            }
        }
        Cmd::Train(args) => cmd_train(args, seed)?,
        Cmd::Predict { aig, model, normalizer, top, out } => {
            let (net, stored) = PredictorNet::load(&model).with_context(|| format!("loading {}", model.display()))?;
            let normalizer = load_normalizer(normalizer.as_deref(), stored)?;
            let ranking = rank_circuit(&net, &normalizer, &aig)?;
            let best = predict::top_k(&ranking, top)?;
            let mut w = output(out.as_deref())?;
            best.write_csv(&mut w)?;
            w.flush()?;
        }
        Cmd::Run(args) => return cmd_run(args),
        Cmd::Evaluate { baseline, method, wall_limit, scatter } => {
            let base = runner::read_results(File::open(&baseline).with_context(|| baseline.display().to_string())?)?;
            let meth = runner::read_results(File::open(&method).with_context(|| method.display().to_string())?)?;
            let eval = runner::evaluate(&base, &meth, wall_limit);
            eval.write_summary(std::io::stdout().lock())?;
            if let Some(p) = scatter {
                let mut w = output(Some(&p))?;
                eval.write_scatter(&mut w)?;
                w.flush()?;
            }
        }
        Cmd::Importance { data, aigs, model, repeats, fold } => {
            let records = train::load_dataset(&data)?;
            let split = train::split(&records, seed)?;
            let chosen: Vec<_> = match fold {
                Fold::Train => split.records(&records, &split.train).into_iter().cloned().collect(),
                Fold::Val => split.records(&records, &split.val).into_iter().cloned().collect(),
                Fold::Test => split.records(&records, &split.test).into_iter().cloned().collect(),
                Fold::All => records,
            };
            let (net, stored) = PredictorNet::load(&model)?;
            let normalizer = stored.context("model carries no normalizer")?;
            let mut samples = train::prepare_samples(&chosen, &aigs)?;
            train::normalize_samples(&mut samples, &normalizer);
            let imp = train::permutation_importance(&net, &samples, seed, repeats)?;
            println!("feature,delta_tau");
            for i in imp {
                println!("{},{}", i.feature, i.delta_tau);
            }
        }
        Cmd::Synth { n, out_dir, wall_limit } => {
            let data = synth::generate(&SynthConfig { n_circuits: n, seed, wall_limit })?;
            synth::write_to_dir(&data, &out_dir)?;
            println!("{} circuits, {} records in {}", data.circuits.len(), data.records.len(), out_dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load_normalizer(path: Option<&Path>, stored: Option<FeatureNormalizer>) -> Result<FeatureNormalizer> {
    match (path, stored) {
        (Some(p), _) => FeatureNormalizer::load(p).with_context(|| format!("loading {}", p.display())),
        (None, Some(n)) => Ok(n),
        (None, None) => bail!("model carries no normalizer; pass --normalizer"),
    }
}

fn rank_circuit(net: &PredictorNet, normalizer: &FeatureNormalizer, aig: &Path) -> Result<predict::TopK> {
    let circuit = read_aig(aig)?;
    let (raw, graph) = train::circuit_inputs(&circuit);
    Ok(predict::rank_configs(net, &GraphTensor::new(&graph), &normalizer.apply(&raw))?)
}

fn cmd_train(args: TrainArgs, seed: u64) -> Result<()> {
    let mut records = train::load_dataset(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    if let Some(t) = args.min_default_seconds {
        records = train::filter_nontrivial(&records, t);
        info!("{} records remain after the {t}s filter", records.len());
    }
    let samples = train::prepare_samples(&records, &args.aigs)?;
    let cfg = TrainConfig {
        max_epochs: args.epochs,
        lr: args.lr,
        patience: args.patience,
        batch_circuits: args.batch_circuits,
        seed,
        loss: LossConfig { alpha: args.alpha, margin: args.margin },
    };
    let fitted = train::fit(&records, samples, &cfg)?;
    std::fs::create_dir_all(&args.out_dir)?;
    fitted.outcome.net.save(Some(&fitted.normalizer), args.out_dir.join("model.ckpt"))?;
    fitted.normalizer.save(args.out_dir.join("normalizer.json"))?;
    train::write_metrics(BufWriter::new(File::create(args.out_dir.join("metrics.csv"))?), &fitted.outcome.history)?;
    let mut split = BufWriter::new(File::create(args.out_dir.join("split.csv"))?);
    writeln!(split, "circuit,fold")?;
    for (fold, ids) in [("train", &fitted.split.train), ("val", &fitted.split.val), ("test", &fitted.split.test)] {
        for id in ids {
            writeln!(split, "{id},{fold}")?;
        }
    }
    split.flush()?;
    println!(
        "best epoch {} (val tau {:.4}); test tau {:.4}, rho {:.4} over {} circuits",
        fitted.outcome.best_epoch,
        fitted.outcome.best_val_tau,
        fitted.test_metrics.kendall_tau,
        fitted.test_metrics.spearman_rho,
        fitted.test_metrics.per_circuit.len()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let parallel = match (args.sequential, args.parallel) {
        (true, _) => 1,
        (_, true) => usize::MAX,
        _ => args.max_parallel,
    };
    let mut spec =
        RunSpec::with_patterns(&args.template, args.wall_limit, parallel, &args.log_dir, &args.safe_pattern, &args.unsafe_pattern)?;
    spec.early_cancel = args.early_cancel;
    let model = match &args.model {
        Some(p) => {
            let (net, stored) = PredictorNet::load(p).with_context(|| format!("loading {}", p.display()))?;
            Some((net, load_normalizer(None, stored)?))
        }
        None => None,
    };
    let fixed: Vec<PdrConfig> = if args.baseline || (args.config.is_empty() && model.is_none()) {
        vec![PdrConfig::default()]
    } else {
        args.config.iter().map(|s| Ok(PdrConfig::from_flag_string(s)?.validate()?)).collect::<Result<_>>()?
    };
    let mut all = Vec::new();
    for aig in &args.aigs {
        let configs = match &model {
            Some((net, norm)) => predict::top_k(&rank_circuit(net, norm, aig)?, args.top)?.configs(),
            None => fixed.clone(),
        };
        let p = runner::run_portfolio(&spec, aig, &configs)?;
        info!("{}: {} in {:.2}s", p.best.circuit, p.best.outcome, p.best.wall_seconds);
        all.extend(p.all);
    }
    let mut w = output(args.out.as_deref())?;
    runner::write_results(&mut w, &all)?;
    w.flush()?;
    let errors = all.iter().filter(|r| r.outcome == RunOutcome::Error).count();
    if errors > 0 {
        eprintln!("{errors} run(s) ended in ERROR");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
