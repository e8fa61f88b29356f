//! `hiergame`: solve strategic value tables, run highway scenarios, sweep
//! the follower's inverse temperature and export value heatmaps.

mod manifest;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use hiergame::game::{export_heatmap_slice, solve_with_progress, ActionGrid, GridSpec, HighwayGame, SolverParams};
use hiergame::sim::{
    evaluate, run_scenario_with, sweep_beta, HumanSpec, PlannerKind, ScenarioConfig, ScenarioName, SweepInputs,
    SweepRow, TableCache, CACHE_ENV,
};
use hiergame::{ModelTag, Player, RewardConfig, ValueTable, VehicleState};
use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "hiergame", version, about = "Hierarchical game-theoretic highway planning")]
struct Cli {
    /// Worker threads for the solver [default: available cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Where to write the run manifest [default: next to the main output].
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the strategic game and write a value table.
    Solve(SolveArgs),
    /// Run one closed-loop scenario.
    Run(RunArgs),
    /// Solve one table per inverse temperature and run a scenario with each.
    SweepBeta(SweepArgs),
    /// Export a 2-D slice of a value table as CSV and optionally PPM.
    Heatmap(HeatmapArgs),
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Strategic model: 3d or 4d.
    #[arg(long)]
    model: ModelTag,
    /// Follower inverse temperature.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// TOML file overriding `[grid]`, `[actions]` and `[solver]`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reward configuration TOML [default: built-in weights].
    #[arg(long)]
    rewards: Option<PathBuf>,
    /// Output value-table file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct RunArgs {
    /// easy_merge, hard_merge or overtaking.
    #[arg(long)]
    scenario: ScenarioName,
    /// tactical, hier3d, hier4d or long_horizon.
    #[arg(long)]
    planner: PlannerKind,
    /// Value table for the AV (required by hier3d and hier4d).
    #[arg(long)]
    value: Option<PathBuf>,
    /// Value table for the simulated human [default: the AV's].
    #[arg(long)]
    human_value: Option<PathBuf>,
    /// TOML file overriding scenario settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rewards: Option<PathBuf>,
    /// Include the influence term in the AV's gradient.
    #[arg(long)]
    influence: bool,
    /// Directory for episode.jsonl, episode.csv and metrics.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long, default_value = "overtaking")]
    scenario: ScenarioName,
    #[arg(long, default_value = "4d")]
    model: ModelTag,
    /// Comma-separated inverse temperatures.
    #[arg(long, value_delimiter = ',', required = true)]
    betas: Vec<f64>,
    /// Solver TOML as for `solve`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario TOML as for `run`.
    #[arg(long)]
    scenario_config: Option<PathBuf>,
    #[arg(long)]
    rewards: Option<PathBuf>,
    /// Directory caching solved tables.
    #[arg(long, env = CACHE_ENV)]
    cache_dir: Option<PathBuf>,
    /// Report CSV.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlayerArg {
    Av,
    Human,
}

#[derive(clap::Args)]
struct HeatmapArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value_t = 0)]
    stage: usize,
    #[arg(long, value_enum, default_value = "av")]
    player: PlayerArg,
    /// Dimension along rows.
    #[arg(long, default_value = "x_rel")]
    rows: String,
    /// Dimension along columns.
    #[arg(long, default_value = "y_av")]
    cols: String,
    /// Value of a non-free dimension, as `name=value`; repeatable.
    #[arg(long = "fix", value_parser = parse_fix)]
    fixed: Vec<(String, f64)>,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    ppm: Option<PathBuf>,
}

fn parse_fix(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v = value.trim().parse::<f64>().map_err(|e| format!("`{value}`: {e}"))?;
    Ok((name.trim().to_string(), v))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveFile {
    grid: Option<GridSpec>,
    actions: Option<ActionGrid>,
    solver: Option<SolverFile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverFile {
    horizon: Option<usize>,
    alpha: Option<f64>,
    dk: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    initial_av: Option<VehicleState>,
    initial_human: Option<VehicleState>,
    episode_length: Option<f64>,
    dt: Option<f64>,
    human: Option<HumanSpec>,
    influence_term: Option<bool>,
    seed: Option<u64>,
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_rewards(path: Option<&Path>) -> Result<RewardConfig> {
    let r = match path {
        Some(p) => RewardConfig::load(p)?,
        None => RewardConfig::default(),
    };
    r.validate()?;
    Ok(r)
}

fn sweep_inputs(model: ModelTag, config: Option<&Path>, rewards: RewardConfig) -> Result<SweepInputs> {
    if model == ModelTag::Custom {
        bail!("invalid configuration: field `model`: expected 3d or 4d");
    }
    let file: SolveFile = config.map(read_toml).transpose()?.unwrap_or_default();
    let mut inputs = SweepInputs::default_for(model);
    inputs.rewards = rewards;
    if let Some(g) = file.grid {
        inputs.grid = g;
    }
    if let Some(a) = file.actions {
        inputs.actions = a;
    }
    if let Some(s) = file.solver {
        inputs.solver.horizon = s.horizon.unwrap_or(inputs.solver.horizon);
        inputs.solver.alpha = s.alpha.unwrap_or(inputs.solver.alpha);
        inputs.solver.dk = s.dk.unwrap_or(inputs.solver.dk);
    }
    inputs.grid.validate()?;
    inputs.solver.validate()?;
    Ok(inputs)
}

fn scenario_config(
    name: ScenarioName,
    planner: PlannerKind,
    file: Option<&Path>,
    rewards: RewardConfig,
) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::new(name, planner);
    cfg.rewards = rewards;
    if let Some(path) = file {
        let f: ScenarioFile = read_toml(path)?;
        if let Some(s) = f.initial_av {
            cfg.initial.av = s;
        }
        if let Some(s) = f.initial_human {
            cfg.initial.human = s;
        }
        cfg.episode_length = f.episode_length.unwrap_or(cfg.episode_length);
        cfg.dt = f.dt.unwrap_or(cfg.dt);
        cfg.human = f.human.unwrap_or(cfg.human);
        cfg.influence_term = f.influence_term.unwrap_or(cfg.influence_term);
        cfg.seed = f.seed.unwrap_or(cfg.seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sha256(bytes: &[u8]) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).into()
}

fn manifest_path(cli: &Option<PathBuf>, default: PathBuf) -> PathBuf {
    cli.clone().unwrap_or(default)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_solve(args: &SolveArgs, manifest_out: &Option<PathBuf>) -> Result<()> {
    let mut m = RunManifest::start();
    let rewards = load_rewards(args.rewards.as_deref())?;
    let inputs = sweep_inputs(args.model, args.config.as_deref(), rewards)?;
    if !(args.beta >= 0.0 && args.beta.is_finite()) {
        bail!("invalid configuration: field `beta`: must be finite and non-negative");
    }
    m.config("rewards", inputs.rewards.hash());
    m.config("solve_inputs", sha256(inputs.cache_key(args.beta).as_bytes()));
    let params = SolverParams {
        beta: args.beta,
        ..inputs.solver
    };
    let game = HighwayGame::new(inputs.model, inputs.actions.clone(), inputs.rewards.clone(), &params)?;

    let dims: Vec<String> = inputs
        .grid
        .dims
        .iter()
        .map(|d| format!("{}[{}..{}]x{}", d.name, d.min, d.max, d.count))
        .collect();
    println!(
        "grid {} ({} cells), {} leader x {} follower actions, {} stages, beta {}",
        dims.join(" "),
        inputs.grid.cell_count(),
        inputs.actions.leader.len(),
        inputs.actions.follower.len(),
        params.horizon + 1,
        params.beta
    );
    let mut stage_times = Vec::new();
    let table = m.time("solve", || {
        solve_with_progress(&game, &inputs.grid, &params, |k, dt| {
            println!("stage {k:>3}: {:.3} s", dt.as_secs_f64());
            stage_times.push((k, dt.as_secs_f64()));
        })
    })?;
    for (k, s) in stage_times {
        m.timings.insert(format!("stage_{k}"), s);
    }
    m.time("save", || table.save(&args.out))?;
    println!("solved in {:.3} s, wrote {}", m.timings["solve"], args.out.display());
    m.table_file("output", &args.out)?;
    m.output(&args.out);
    m.save(&manifest_path(manifest_out, with_suffix(&args.out, ".manifest.json")))
}

fn cmd_run(args: &RunArgs, manifest_out: &Option<PathBuf>) -> Result<()> {
    let mut m = RunManifest::start();
    let rewards = load_rewards(args.rewards.as_deref())?;
    let mut cfg = scenario_config(args.scenario, args.planner, args.config.as_deref(), rewards)?;
    cfg.influence_term |= args.influence;
    cfg.av_value = args.value.clone();
    cfg.human_value = args.human_value.clone();
    m.config("rewards", cfg.rewards.hash());
    m.config("scenario", sha256(&serde_json::to_vec(&cfg)?));

    let tables = m.time("load_tables", || cfg.load_tables())?;
    for (role, p) in [("av", &args.value), ("human", &args.human_value)] {
        if let Some(p) = p {
            m.table_file(role, p)?;
        }
    }
    let log = m.time("episode", || run_scenario_with(&cfg, &tables))?;
    let metrics = evaluate(&log);

    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let jsonl = args.out_dir.join("episode.jsonl");
    let csv = args.out_dir.join("episode.csv");
    let metrics_csv = args.out_dir.join("metrics.csv");
    log.save_jsonl(&jsonl)?;
    log.save_csv(&csv)?;
    let f = std::fs::File::create(&metrics_csv).with_context(|| format!("creating {}", metrics_csv.display()))?;
    metrics.write_csv(std::io::BufWriter::new(f))?;
    for p in [jsonl, csv, metrics_csv] {
        m.output(p);
    }
    println!(
        "{} / {}: success={} collision={} time_to_merge={} final_gap={:.2} m max_speed={:.2} m/s ({:.2} s)",
        cfg.name,
        cfg.planner,
        metrics.success,
        metrics.collision,
        metrics.time_to_merge.map_or("-".to_string(), |t| format!("{t:.1} s")),
        metrics.final_gap,
        metrics.max_av_speed,
        m.timings["episode"]
    );
    m.save(&manifest_path(manifest_out, args.out_dir.join("manifest.json")))
}

fn cmd_sweep(args: &SweepArgs, manifest_out: &Option<PathBuf>) -> Result<()> {
    let mut m = RunManifest::start();
    let rewards = load_rewards(args.rewards.as_deref())?;
    let inputs = sweep_inputs(args.model, args.config.as_deref(), rewards.clone())?;
    let planner = if args.model == ModelTag::FourD {
        PlannerKind::Hier4d
    } else {
        PlannerKind::Hier3d
    };
    let scenario = scenario_config(args.scenario, planner, args.scenario_config.as_deref(), rewards)?;
    m.config("rewards", inputs.rewards.hash());
    m.config("scenario", sha256(&serde_json::to_vec(&scenario)?));
    for b in &args.betas {
        m.value_tables.insert(format!("beta={b}"), inputs.cache_key(*b));
    }
    let mut cache = match &args.cache_dir {
        Some(d) => TableCache::with_dir(d),
        None => TableCache::in_memory(),
    };
    let rows = m.time("sweep", || sweep_beta(&scenario, &args.betas, &inputs, &mut cache))?;
    let f = std::fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = std::io::BufWriter::new(f);
    SweepRow::write_csv(&rows, &mut w)?;
    w.flush()?;
    for r in &rows {
        println!(
            "beta {:<6} success={} final_gap={:.2} m max_speed={:.2} m/s solve={:.2} s{}",
            r.beta,
            r.metrics.success,
            r.metrics.final_gap,
            r.metrics.max_av_speed,
            r.solve_seconds,
            if r.cached { " (cached)" } else { "" }
        );
    }
    m.output(&args.out);
    m.save(&manifest_path(manifest_out, with_suffix(&args.out, ".manifest.json")))
}

fn cmd_heatmap(args: &HeatmapArgs, manifest_out: &Option<PathBuf>) -> Result<()> {
    let mut m = RunManifest::start();
    let table = Arc::new(ValueTable::load(&args.table)?);
    m.table_file("input", &args.table)?;
    let fixed: BTreeMap<String, f64> = args.fixed.iter().cloned().collect();
    let player = match args.player {
        PlayerArg::Av => Player::Av,
        PlayerArg::Human => Player::Human,
    };
    let slice = export_heatmap_slice(&table, args.stage, player, &fixed, [&args.rows, &args.cols])?;
    slice.save_csv(&args.csv)?;
    m.output(&args.csv);
    if let Some(p) = &args.ppm {
        slice.save_ppm(p)?;
        m.output(p);
    }
    let (r, c) = slice.shape();
    println!(
        "{} x {} slice ({} by {}) written to {}",
        r,
        c,
        args.rows,
        args.cols,
        args.csv.display()
    );
    m.save(&manifest_path(manifest_out, with_suffix(&args.csv, ".manifest.json")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            Cli::command()
                .error(clap::error::ErrorKind::InvalidValue, "--threads must be at least 1")
                .exit();
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    if let Command::Run(args) = &cli.command {
        if args.planner.model().is_some() && args.value.is_none() {
            Cli::command()
                .error(
                    clap::error::ErrorKind::MissingRequiredArgument,
                    format!("planner {} needs --value <TABLE>", args.planner),
                )
                .exit();
        }
    }
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a, &cli.manifest),
        Command::Run(a) => cmd_run(a, &cli.manifest),
        Command::SweepBeta(a) => cmd_sweep(a, &cli.manifest),
        Command::Heatmap(a) => cmd_heatmap(a, &cli.manifest),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
