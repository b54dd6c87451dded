//! `slbal` — trial runner, condition comparison, and parameter sweeps
//! for the SL balance-augmentation stack.
//!
//! Exit codes: 0 success, 1 comparison verdict failed, 2 usage or
//! configuration error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sl_balance::config::Config;
use sl_balance::metrics::{
    com_sup_series, condition_summary, cop_sup_series, force_ellipse, grf_series, mean_distance,
    write_summary_csv, Summary,
};
use sl_balance::plot::{distance_svg, grf_svg};
use sl_balance::sim::{run_trial, Condition, ScenarioKind, TrialLog};
use sl_balance::{Error, Result};

#[derive(Parser)]
#[command(name = "slbal", about = "Supernumerary-limb balance trials", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Frontal,
    Lateral,
}

impl ScenarioArg {
    fn kind(self) -> ScenarioKind {
        match self {
            ScenarioArg::Frontal => ScenarioKind::FrontalBow,
            ScenarioArg::Lateral => ScenarioKind::LateralBow,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConditionArg {
    Honly,
    Nocomp,
    Comp,
}

impl ConditionArg {
    fn condition(self) -> Condition {
        match self {
            ConditionArg::Honly => Condition::HOnly,
            ConditionArg::Nocomp => Condition::NoComp,
            ConditionArg::Comp => Condition::Comp,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Bow movement.
    #[arg(long, value_enum)]
    scenario: ScenarioArg,
    /// Key-value config file (see `docs/config.md` for the schema).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set planner.gamma=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// RNG seed; overrides `sim.seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trial and write its log.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Experimental condition.
        #[arg(long, value_enum)]
        condition: ConditionArg,
    },
    /// Run all three conditions and compare them.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Trials per condition (seeds seed, seed+1, ...).
        #[arg(long, default_value_t = 1)]
        trials: u64,
    },
    /// Re-run the comparison over a grid of one config key.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Config key to vary, e.g. `planner.gamma`.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `0.1,1,10`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { common, condition } => cmd_run(&common, condition.condition()),
        Command::Compare { common, trials } => cmd_compare(&common, trials),
        Command::Sweep { common, param, values } => cmd_sweep(&common, &param, &values),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    for spec in &common.set {
        cfg.apply_override(spec)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("sim.seed", seed as f64)?;
    }
    Ok(cfg)
}

fn run_one(cfg: &Config, kind: ScenarioKind, condition: Condition, seed: u64) -> Result<TrialLog> {
    let scenario = cfg.scenario(kind)?;
    let mut sim = cfg.sim_config()?;
    sim.seed = seed;
    run_trial(&scenario, condition, &sim, &cfg.hash())
}

fn write_log(out: &Path, log: &TrialLog) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out)?;
    let stem = format!(
        "{}_{}_seed{}",
        log.meta.scenario.as_str(),
        log.meta.condition.as_str(),
        log.meta.seed
    );
    let csv_path = out.join(format!("{stem}.csv"));
    let meta_path = out.join(format!("{stem}.meta.txt"));
    let mut csv = BufWriter::new(File::create(&csv_path)?);
    log.write_csv(&mut csv)?;
    csv.flush()?;
    let mut meta = BufWriter::new(File::create(&meta_path)?);
    log.write_meta(&mut meta)?;
    meta.flush()?;
    Ok((csv_path, meta_path))
}

fn cmd_run(common: &CommonArgs, condition: Condition) -> Result<bool> {
    let cfg = load_config(common)?;
    let log = run_one(&cfg, common.scenario.kind(), condition, cfg.seed()?)?;
    let (csv_path, _) = write_log(&common.out, &log)?;

    let com = mean_distance(&com_sup_series(&log, true)?)?;
    let cop = mean_distance(&cop_sup_series(&log)?)?;
    println!(
        "{} {} (seed {}, config {})",
        log.meta.scenario.as_str(),
        log.meta.condition.as_str(),
        log.meta.seed,
        log.meta.config_hash
    );
    println!("mean CoM-SUP distance: {com:.4} m");
    println!("mean CoP-SUP distance: {cop:.4} m");
    if log.meta.safe_stops > 0 {
        println!("note: {} solver safe-stop tick(s)", log.meta.safe_stops);
    }
    println!("log written to {}", csv_path.display());
    Ok(true)
}

/// Run all three conditions over `trials` seeds and summarize.
fn compare_logs(cfg: &Config, kind: ScenarioKind, trials: u64) -> Result<Vec<TrialLog>> {
    if trials == 0 {
        return Err(Error::Config("--trials must be at least 1".into()));
    }
    let base = cfg.seed()?;
    let mut logs = Vec::new();
    for condition in [Condition::HOnly, Condition::NoComp, Condition::Comp] {
        for i in 0..trials {
            logs.push(run_one(cfg, kind, condition, base + i)?);
        }
    }
    Ok(logs)
}

fn verdict_line(label: &str, holds: bool) -> String {
    format!("{label}: {}", if holds { "PASS" } else { "FAIL" })
}

fn print_summary(summary: &Summary) -> bool {
    for s in &summary.conditions {
        println!(
            "{:>6}: CoM-SUP {:.4} ± {:.4} m | CoP-SUP {:.4} ± {:.4} m ({} trial(s))",
            s.condition.as_str(),
            s.com_sup_mean,
            s.com_sup_sd,
            s.cop_sup_mean,
            s.cop_sup_sd,
            s.trials
        );
    }
    let comp_h = summary.ordering("com_sup", Condition::Comp, Condition::HOnly);
    let comp_n = summary.ordering("com_sup", Condition::Comp, Condition::NoComp);
    let h_n = summary.ordering("com_sup", Condition::HOnly, Condition::NoComp);
    println!("{}", verdict_line("Comp < HOnly < NoComp", comp_h && comp_n && h_n));
    println!(
        "{}",
        verdict_line(
            "CoP: Comp < NoComp",
            summary.ordering("cop_sup", Condition::Comp, Condition::NoComp)
        )
    );
    // Success criterion: active compensation beats both baselines.
    comp_h && comp_n
}

fn write_compare_artifacts(out: &Path, logs: &[TrialLog], summary: &Summary) -> Result<()> {
    std::fs::create_dir_all(out)?;
    for log in logs {
        write_log(out, log)?;
    }
    let scen = summary.scenario.as_str();

    let mut w = BufWriter::new(File::create(out.join(format!("summary_{scen}.csv")))?);
    write_summary_csv(summary, &mut w)?;
    w.flush()?;

    // Distance panel from the first trial of each condition.
    let mut series = Vec::new();
    for condition in [Condition::HOnly, Condition::NoComp, Condition::Comp] {
        let log = logs
            .iter()
            .find(|l| l.meta.condition == condition)
            .expect("all conditions were run");
        series.push(com_sup_series(log, true)?);
    }
    let refs: Vec<&_> = series.iter().collect();
    std::fs::write(
        out.join(format!("dist_{scen}.svg")),
        distance_svg(&format!("CoM-SUP distance, {scen} bow"), &refs),
    )?;

    // GRF panel over the pooled samples per condition.
    let mut clouds = Vec::new();
    for condition in [Condition::HOnly, Condition::NoComp, Condition::Comp] {
        let mut forces = Vec::new();
        for log in logs.iter().filter(|l| l.meta.condition == condition) {
            forces.extend(grf_series(log));
        }
        let ellipse = force_ellipse(&forces, 0.95)?;
        clouds.push((condition, forces, ellipse));
    }
    std::fs::write(
        out.join(format!("grf_{scen}.svg")),
        grf_svg(&format!("Horizontal GRF, {scen} bow"), &clouds),
    )?;
    Ok(())
}

fn cmd_compare(common: &CommonArgs, trials: u64) -> Result<bool> {
    let cfg = load_config(common)?;
    let kind = common.scenario.kind();
    let logs = compare_logs(&cfg, kind, trials)?;
    let summary = condition_summary(&logs)?;
    write_compare_artifacts(&common.out, &logs, &summary)?;
    println!("{} bow, {} trial(s) per condition, config {}", kind.as_str(), trials, cfg.hash());
    Ok(print_summary(&summary))
}

fn cmd_sweep(common: &CommonArgs, param: &str, values: &[f64]) -> Result<bool> {
    if values.is_empty() {
        return Err(Error::Config("--values must list at least one value".into()));
    }
    let base = load_config(common)?;
    // Validate the key up front so a typo fails before hours of trials.
    base.get(param)?;
    let kind = common.scenario.kind();

    std::fs::create_dir_all(&common.out)?;
    let table_path =
        common.out.join(format!("sweep_{}_{}.csv", kind.as_str(), param.replace('.', "_")));
    let mut table = BufWriter::new(File::create(&table_path)?);
    writeln!(
        table,
        "{param},com_sup_honly_m,com_sup_nocomp_m,com_sup_comp_m,cop_sup_comp_m,mean_u_norm,config_hash"
    )?;

    println!("sweep of {param} over {values:?} ({} bow)", kind.as_str());
    for &value in values {
        let mut cfg = base.clone();
        cfg.set(param, value)?;
        let logs = compare_logs(&cfg, kind, 1)?;
        let summary = condition_summary(&logs)?;
        let comp_log = logs
            .iter()
            .find(|l| l.meta.condition == Condition::Comp)
            .expect("comp trial present");
        let mean_u = comp_log.ticks.iter().map(|t| t.u.norm()).sum::<f64>()
            / comp_log.ticks.len() as f64;
        let h = summary.stats(Condition::HOnly).com_sup_mean;
        let n = summary.stats(Condition::NoComp).com_sup_mean;
        let c = summary.stats(Condition::Comp).com_sup_mean;
        let cop_c = summary.stats(Condition::Comp).cop_sup_mean;
        writeln!(table, "{value},{h},{n},{c},{cop_c},{mean_u},{}", cfg.hash())?;
        println!(
            "  {param} = {value}: CoM-SUP honly {h:.4}, nocomp {n:.4}, comp {c:.4} m; mean |u| {mean_u:.3}"
        );
    }
    table.flush()?;
    println!("table written to {}", table_path.display());
    Ok(true)
}
