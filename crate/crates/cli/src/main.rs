use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use cdne::pipeline::{read_embeddings, write_run, SOURCE_EMBEDDING_FILE, TARGET_EMBEDDING_FILE};
use cdne::sae::gradcheck_suite;
use cdne::{
    evaluate_transfer, load_network, ppmi, predict_fuzzy_labels, run_cdne, synth_transfer_task, write_network,
    AttributedNetwork, CdneConfig, SynthParams, TransferTask,
};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "cdne", version, about = "Cross-network deep network embedding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic source/target task.
    Synth(SynthArgs),
    /// Dump both networks' PPMI matrices.
    Ppmi(RunArgs),
    /// Train both autoencoder stacks and write the embeddings.
    Embed(RunArgs),
    /// Dump the target's fuzzy pseudo-labels.
    Pseudo(RunArgs),
    /// Score stored embeddings over random label splits.
    Eval(EvalArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of target nodes whose labels are observed.
    #[arg(long, value_parser = parse_fraction)]
    label_fraction: Option<f64>,
    /// Zero one loss weight at every depth.
    #[arg(long, value_parser = ["alpha", "phi", "mu", "gamma"])]
    ablate: Vec<String>,
    /// Directory written by `synth`; a default synthetic task is generated
    /// when omitted.
    #[arg(long)]
    task: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Directory holding the embedding TSVs written by `embed`.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    splits: Option<u64>,
    /// Report directory; defaults to the embeddings directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 400)]
    n_s: usize,
    #[arg(long, default_value_t = 400)]
    n_t: usize,
    #[arg(long, default_value_t = 0.05)]
    p_in: f64,
    #[arg(long, default_value_t = 0.005)]
    p_out: f64,
    #[arg(long, default_value_t = 15)]
    attrs_per_class: usize,
    #[arg(long, default_value_t = 0.8)]
    attr_signal: f64,
    #[arg(long, default_value_t = 0.3)]
    noise_p: f64,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    instances: usize,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let f: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if f > 0.0 && f < 1.0 {
        Ok(f)
    } else {
        Err(format!("{f} is outside (0, 1)"))
    }
}

fn network_paths(dir: &Path, which: &str) -> [PathBuf; 3] {
    ["edges", "attrs", "labels"].map(|kind| dir.join(format!("{which}.{kind}.tsv")))
}

fn load_side(dir: &Path, which: &str) -> anyhow::Result<AttributedNetwork> {
    let [e, a, l] = network_paths(dir, which);
    Ok(load_network(&e, &a, &l)?)
}

fn resolve_config(common: &Common, splits: Option<usize>) -> anyhow::Result<CdneConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            CdneConfig::from_text(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => CdneConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.trainer.seed = seed;
    }
    if let Some(f) = common.label_fraction {
        config.eval.label_fraction = f;
    }
    if let Some(k) = splits {
        config.eval.splits = k;
    }
    for name in &common.ablate {
        config.ablations.enable(name)?;
    }
    config.validate()?;
    Ok(config)
}

fn load_task(common: &Common, config: &CdneConfig) -> anyhow::Result<TransferTask> {
    let fraction = config.eval.label_fraction;
    let seed = config.trainer.seed;
    match &common.task {
        Some(dir) => {
            let source = load_side(dir, "source")?;
            let target = load_side(dir, "target")?;
            Ok(TransferTask::new(source, target, fraction, seed)?)
        }
        None => Ok(synth_transfer_task(&SynthParams {
            label_fraction: fraction,
            seed,
            ..SynthParams::default()
        })?),
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: PathBuf, text: &str) -> anyhow::Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    let params = SynthParams {
        classes: args.classes,
        n_s: args.n_s,
        n_t: args.n_t,
        p_in: args.p_in,
        p_out: args.p_out,
        attrs_per_class: args.attrs_per_class,
        attr_signal: args.attr_signal,
        noise_p: args.noise_p,
        seed: args.seed,
        ..SynthParams::default()
    };
    let task = synth_transfer_task(&params)?;
    create_dir(&args.out)?;
    for (which, net) in [("source", &task.source), ("target", &task.target)] {
        let [e, a, l] = network_paths(&args.out, which);
        write_network(net, &e, &a, &l)?;
    }
    log::info!("wrote task with {} + {} nodes to {}", task.source.n(), task.target.n(), args.out.display());
    Ok(())
}

fn dump_ppmi(args: &RunArgs) -> anyhow::Result<()> {
    let config = resolve_config(&args.common, None)?;
    let task = load_task(&args.common, &config)?;
    create_dir(&args.out)?;
    for (which, net) in [("source", &task.source), ("target", &task.target)] {
        let x = ppmi(net, config.k)?;
        write(args.out.join(format!("{which}_ppmi.tsv")), &x.to_tsv())?;
    }
    Ok(())
}

fn embed(args: &RunArgs) -> anyhow::Result<()> {
    let config = resolve_config(&args.common, None)?;
    let task = load_task(&args.common, &config)?;
    let pair = run_cdne(&task, &config)?;
    write_run(&args.out, &task, &config, &pair)?;
    log::info!("embeddings written to {}", args.out.display());
    Ok(())
}

fn pseudo(args: &RunArgs) -> anyhow::Result<()> {
    let config = resolve_config(&args.common, None)?;
    let task = load_task(&args.common, &config)?;
    let fuzzy = predict_fuzzy_labels(&task, &config.pseudo_label())?;
    create_dir(&args.out)?;
    write(
        args.out.join(cdne::pipeline::FUZZY_LABEL_FILE),
        &fuzzy.to_tsv(task.target.node_ids(), task.labels.names()),
    )
}

fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let config = resolve_config(&args.common, args.splits.map(|k| k as usize))?;
    if config.eval.splits == 0 {
        bail!("splits must be at least 1");
    }
    let task = load_task(&args.common, &config)?;
    let h_s = read_embeddings(&args.embeddings.join(SOURCE_EMBEDDING_FILE), task.source.node_ids())?;
    let h_t = read_embeddings(&args.embeddings.join(TARGET_EMBEDDING_FILE), task.target.node_ids())?;
    let seeds: Vec<u64> = (0..config.eval.splits as u64)
        .map(|i| config.trainer.seed.wrapping_add(i))
        .collect();
    let report = evaluate_transfer(
        &task,
        h_s.view(),
        h_t.view(),
        &seeds,
        config.eval.label_fraction,
        config.eval.policy,
        config.logistic,
    )?;
    let out = args.out.as_ref().unwrap_or(&args.embeddings);
    create_dir(out)?;
    write(out.join("report.txt"), &report.to_text())?;
    write(out.join("splits.tsv"), &report.to_tsv())?;
    print!("{}", report.to_text());
    Ok(())
}

fn gradcheck(args: &GradcheckArgs) -> anyhow::Result<bool> {
    let summary = gradcheck_suite(args.instances, args.seed)?;
    println!("instances: {}", summary.instances);
    println!("parameters_checked: {}", summary.source.checked + summary.target.checked);
    println!("source_max_rel_error: {:e}", summary.source.max_rel_error);
    println!("target_max_rel_error: {:e}", summary.target.max_rel_error);
    println!("max_rel_error: {:e}", summary.max_rel_error());
    Ok(summary.max_rel_error() <= GRADCHECK_TOLERANCE)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Synth(a) => synth(a)?,
        Command::Ppmi(a) => dump_ppmi(a)?,
        Command::Embed(a) => embed(a)?,
        Command::Pseudo(a) => pseudo(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Gradcheck(a) => return gradcheck(a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("gradient check exceeded tolerance {GRADCHECK_TOLERANCE:e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
