use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use taco_core::expcli::{self, ExperimentConfig, RunDir, TransferReport};
use taco_core::paramspace::Checkpoint;
use taco_core::taskdist::{self, pca_project, EpsRule};
use taco_core::taskworld::{make_suite, make_task, Registry};
use taco_core::trainer::{run_pretraining, MaskTarget, RunLog, SamplingMode};
use taco_core::transfer::{run_scratch, run_transfer};
use taco_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DIVERGED: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "taco", version, about = "Compositional multi-task SAC experiments on the toy point-mass suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Multi-task pretraining of a parameter set on a suite.
    Pretrain {
        #[arg(long)]
        suite: String,
        #[command(flatten)]
        common: Common,
    },
    /// Transfer a pretrained parameter set to a new task.
    Transfer {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        common: Common,
    },
    /// Single-task SAC from scratch.
    Scratch {
        #[arg(long)]
        task: String,
        #[command(flatten)]
        common: Common,
    },
    /// Paired transfer and scratch runs on every seed, plus a report.
    Compare {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        common: Common,
    },
    /// PCA coordinates and density clusters of the pretrained tasks.
    Analyze {
        /// Pretraining run directory or checkpoint file.
        #[arg(long)]
        from: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        eps_scale: f64,
        #[arg(long, default_value_t = 1)]
        min_pts: usize,
        #[arg(long, value_delimiter = ',')]
        hidden_sizes: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate run logs into a transfer report CSV.
    Report {
        /// Run logs or directories searched for them.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        #[arg(long)]
        n_max: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-seed rows to this file.
        #[arg(long)]
        seeds_out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Source {
    /// Pretraining run directory or checkpoint file.
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    task: String,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML file with optional [train] and [transfer] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed of the jittered task features.
    #[arg(long, default_value_t = 0)]
    suite_seed: u64,
    /// Directory for run outputs (default: $TACO_RUN_ROOT or ./runs).
    #[arg(long)]
    run_root: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    transfer: TransferFlags,
}

#[derive(Args, Debug, Default)]
struct TrainFlags {
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    n_parallel_envs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    hidden_sizes: Option<Vec<usize>>,
    #[arg(long)]
    lr_policy: Option<f64>,
    #[arg(long)]
    lr_q: Option<f64>,
    #[arg(long)]
    lr_w: Option<f64>,
    #[arg(long)]
    lr_alpha: Option<f64>,
    #[arg(long)]
    discount: Option<f64>,
    #[arg(long)]
    warmup_steps: Option<u64>,
    #[arg(long)]
    replay_capacity: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// `critic` or `total`.
    #[arg(long)]
    mask_target: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    total_env_steps: Option<u64>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    init_temperature: Option<f64>,
    #[arg(long)]
    updates_per_step: Option<usize>,
    /// `uniform`, `group-balanced`, `preset` or `online`.
    #[arg(long)]
    sampling: Option<String>,
    #[arg(long, value_delimiter = ',')]
    preset_weights: Option<Vec<f64>>,
    #[arg(long)]
    eps_scale: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
    /// Repeat for several seeds.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
}

#[derive(Args, Debug, Default)]
struct TransferFlags {
    #[arg(long)]
    n_e: Option<u64>,
    #[arg(long)]
    n_max: Option<u64>,
    #[arg(long)]
    success_threshold: Option<f64>,
    #[arg(long)]
    freeze_phi: bool,
    #[arg(long)]
    no_early_stop: bool,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn resolve_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let f = &common.train;
    let t = &mut cfg.train;
    set(&mut t.batch_size, f.batch_size);
    set(&mut t.n_parallel_envs, f.n_parallel_envs);
    set(&mut t.hidden_sizes, f.hidden_sizes.clone());
    set(&mut t.lr_policy, f.lr_policy);
    set(&mut t.lr_q, f.lr_q);
    set(&mut t.lr_w, f.lr_w);
    set(&mut t.lr_alpha, f.lr_alpha);
    set(&mut t.discount, f.discount);
    set(&mut t.warmup_steps, f.warmup_steps);
    set(&mut t.replay_capacity, f.replay_capacity);
    set(&mut t.epsilon, f.epsilon);
    set(&mut t.k, f.k);
    set(&mut t.total_env_steps, f.total_env_steps);
    set(&mut t.eval_every, f.eval_every);
    set(&mut t.eval_episodes, f.eval_episodes);
    set(&mut t.tau, f.tau);
    set(&mut t.init_temperature, f.init_temperature);
    set(&mut t.updates_per_step, f.updates_per_step);
    if let Some(m) = &f.mask_target {
        t.mask_target = match m.as_str() {
            "critic" => MaskTarget::Critic,
            "total" => MaskTarget::Total,
            other => bail!(Error::Config(format!("unknown mask target `{other}`"))),
        };
    }
    let (eps, pts) = match &t.sampling {
        SamplingMode::Online { eps_scale, min_pts } => (*eps_scale, *min_pts),
        _ => (0.5, 1),
    };
    if let Some(s) = &f.sampling {
        t.sampling = match s.as_str() {
            "uniform" => SamplingMode::Uniform,
            "group-balanced" => SamplingMode::GroupBalanced,
            "preset" => SamplingMode::Preset {
                weights: f.preset_weights.clone().unwrap_or_default(),
            },
            "online" => SamplingMode::Online { eps_scale: eps, min_pts: pts },
            other => bail!(Error::Config(format!("unknown sampling mode `{other}`"))),
        };
    }
    match &mut t.sampling {
        SamplingMode::Online { eps_scale, min_pts } => {
            set(eps_scale, f.eps_scale);
            set(min_pts, f.min_pts);
        }
        SamplingMode::Preset { weights } => set(weights, f.preset_weights.clone()),
        _ => {}
    }
    if !f.seeds.is_empty() {
        t.seeds = f.seeds.clone();
        cfg.transfer.seeds = f.seeds.clone();
    }
    let tf = &common.transfer;
    let x = &mut cfg.transfer;
    set(&mut x.n_e, tf.n_e);
    set(&mut x.n_max, tf.n_max);
    set(&mut x.success_threshold, tf.success_threshold);
    if tf.freeze_phi {
        x.freeze_phi = true;
    }
    if tf.no_early_stop {
        x.stop_on_success = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn root(common: &Common) -> PathBuf {
    common.run_root.clone().unwrap_or_else(expcli::run_root)
}

fn summary(dir: &RunDir, log: &RunLog) {
    println!(
        "{}: final success {:.3}, best {:.3}",
        dir.path.display(),
        log.final_average_success().unwrap_or(0.0),
        log.best_average_success().unwrap_or(0.0)
    );
}

fn pretrain(suite: &str, common: &Common) -> Result<()> {
    let cfg = resolve_config(common)?;
    let tasks = make_suite(suite, common.suite_seed)?;
    let world = Registry::builtin().world();
    for &seed in &cfg.train.seeds {
        let dir = RunDir::under(&root(common), "pretrain", suite, seed);
        if dir.completed(&cfg) {
            println!("{}: already complete", dir.path.display());
            continue;
        }
        let out = run_pretraining(&cfg.train, &tasks, &world, seed)?;
        let mut ck = match out.best() {
            Some(b) => b.checkpoint.clone(),
            None => out.learner.to_checkpoint(),
        };
        for (entry, task) in ck.tasks.iter_mut().zip(&tasks) {
            entry.name = Some(task.name.clone());
        }
        dir.write(&cfg, &out.run.log, &ck)?;
        summary(&dir, &out.run.log);
    }
    Ok(())
}

fn transfer_runs(source: &Source, common: &Common, cfg: &ExperimentConfig) -> Result<Vec<RunLog>> {
    let pretrained = expcli::load_checkpoint(&source.from)
        .with_context(|| format!("loading pretrained parameters from {}", source.from.display()))?;
    let task = make_task(&source.task, common.suite_seed)?;
    let world = Registry::builtin().world();
    let kind = if cfg.transfer.freeze_phi { "transfer-fixed-phi" } else { "transfer" };
    let mut logs = Vec::new();
    for &seed in &cfg.transfer.seeds {
        let dir = RunDir::under(&root(common), kind, &source.task, seed);
        if dir.completed(cfg) {
            logs.push(dir.load_log()?);
            continue;
        }
        let out = run_transfer(&cfg.train, &cfg.transfer, &pretrained, &task, &world, seed)?;
        let ck = out.run.best.as_ref().map(|b| b.checkpoint.clone()).unwrap_or_else(|| out.agent.learner().to_checkpoint());
        dir.write(cfg, &out.run.log, &ck)?;
        summary(&dir, &out.run.log);
        logs.push(out.run.log);
    }
    Ok(logs)
}

fn scratch_runs(task_name: &str, common: &Common, cfg: &ExperimentConfig) -> Result<Vec<RunLog>> {
    let task = make_task(task_name, common.suite_seed)?;
    let world = Registry::builtin().world();
    let mut logs = Vec::new();
    for &seed in &cfg.transfer.seeds {
        let dir = RunDir::under(&root(common), "scratch", task_name, seed);
        if dir.completed(cfg) {
            logs.push(dir.load_log()?);
            continue;
        }
        let out = run_scratch(&cfg.train, &cfg.transfer, &task, &world, seed)?;
        let ck: Checkpoint = match &out.run.best {
            Some(b) => b.checkpoint.clone(),
            None => taco_core::trainer::Agent::checkpoint(&out.agent),
        };
        dir.write(cfg, &out.run.log, &ck)?;
        summary(&dir, &out.run.log);
        logs.push(out.run.log);
    }
    Ok(logs)
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn compare(source: &Source, common: &Common) -> Result<()> {
    let cfg = resolve_config(common)?;
    let transfer = transfer_runs(source, common, &cfg)?;
    let scratch = scratch_runs(&source.task, common, &cfg)?;
    let kind = if cfg.transfer.freeze_phi { "transfer-fixed-phi" } else { "transfer" };
    let report = TransferReport::from_logs(
        &source.task,
        kind,
        &transfer,
        &scratch,
        cfg.transfer.success_threshold,
        cfg.transfer.n_max,
    );
    let dir = root(common).join(format!("compare-{}", source.task));
    fs::create_dir_all(&dir)?;
    let reports = [report];
    fs::write(dir.join("report.csv"), expcli::reports_csv(&reports))?;
    fs::write(dir.join("seeds.csv"), expcli::seed_rows_csv(&reports))?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&reports[0])?)?;
    print!("{}", expcli::reports_csv(&reports));
    Ok(())
}

fn analyze(from: &Path, eps_scale: f64, min_pts: usize, hidden: Option<Vec<usize>>, out: Option<&Path>) -> Result<()> {
    let ck = expcli::load_checkpoint(from)?;
    let phi = ck.parameter_set()?;
    let w = ck.compositional_matrix()?;
    let names: Vec<String> = ck
        .tasks
        .iter()
        .map(|t| t.name.clone().unwrap_or_else(|| format!("task{}", t.task_id)))
        .collect();
    let policy = policy_range(from, &ck, hidden)?;
    let (groups, dist) = taskdist::online_adjust(&phi, &w, policy, EpsRule::MedianScale(eps_scale), min_pts)?;
    let proj = pca_project(&w, 2)?;
    let mut group_of = vec![0; w.num_tasks()];
    for (g, members) in groups.groups().iter().enumerate() {
        for &t in members {
            group_of[t] = g;
        }
    }
    let mut csv = String::from("task,name,pc1,pc2,group,probability\n");
    for (t, name) in names.iter().enumerate() {
        let c = &proj.coords[t];
        csv.push_str(&format!(
            "{t},{name},{:.6},{:.6},{},{:.6}\n",
            c[0],
            c.get(1).copied().unwrap_or(0.0),
            group_of[t],
            dist.probs()[t]
        ));
    }
    write_or_print(out, &csv)
}

/// Policy slice of a checkpoint, with the hidden sizes taken from the run
/// directory's configuration unless given explicitly.
fn policy_range(from: &Path, ck: &Checkpoint, hidden: Option<Vec<usize>>) -> Result<std::ops::Range<usize>> {
    let hidden = match hidden {
        Some(h) => h,
        None if from.is_dir() => ExperimentConfig::load(&RunDir::new(from).config_path())?.train.hidden_sizes,
        None => bail!(Error::Config("--hidden-sizes is required when analyzing a bare checkpoint file".into())),
    };
    let world = Registry::builtin().world();
    let layout = taco_core::neurals::NetworkLayout::new(world.state_dim, world.action_dim, &hidden)?;
    ck.check_layout(&layout.hash())?;
    Ok(layout.policy_range())
}

fn report(paths: &[PathBuf], threshold: f64, n_max: Option<u64>, out: Option<&Path>, seeds_out: Option<&Path>) -> Result<()> {
    let mut logs = Vec::new();
    for p in paths {
        for file in expcli::find_logs(p)? {
            logs.push(RunLog::load(&file).with_context(|| format!("reading {}", file.display()))?);
        }
    }
    if logs.is_empty() {
        bail!(Error::Config("no run logs found".into()));
    }
    let n_max = n_max.unwrap_or(u64::MAX);
    let reports = expcli::build_reports(&logs, threshold, n_max);
    write_or_print(out, &expcli::reports_csv(&reports))?;
    if let Some(p) = seeds_out {
        fs::write(p, expcli::seed_rows_csv(&reports))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Pretrain { suite, common } => pretrain(suite, common),
        Command::Transfer { source, common } => {
            let cfg = resolve_config(common)?;
            transfer_runs(source, common, &cfg).map(|_| ())
        }
        Command::Scratch { task, common } => {
            let cfg = resolve_config(common)?;
            scratch_runs(task, common, &cfg).map(|_| ())
        }
        Command::Compare { source, common } => compare(source, common),
        Command::Analyze {
            from,
            eps_scale,
            min_pts,
            hidden_sizes,
            out,
        } => analyze(from, *eps_scale, *min_pts, hidden_sizes.clone(), out.as_deref()),
        Command::Report {
            paths,
            threshold,
            n_max,
            out,
            seeds_out,
        } => report(paths, *threshold, *n_max, out.as_deref(), seeds_out.as_deref()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let diverged = err
        .chain()
        .filter_map(|e| e.downcast_ref::<Error>())
        .any(|e| matches!(e, Error::Diverged(_) | Error::NoValidTasks { .. }));
    if diverged {
        EXIT_DIVERGED
    } else {
        EXIT_USAGE
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
