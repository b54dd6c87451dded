//! Run one full frontal-bow trial with active compensation and inspect
//! the log: distance evolution, solver statistics, and the CSV/meta
//! artifact round-trip.

use std::io::BufReader;

use sl_balance::estimator::layout;
use sl_balance::metrics::{com_sup_series, cop_sup_series, mean_distance};
use sl_balance::sim::{run_trial, Condition, SimConfig, TrialLog, TrialScenario};

fn main() {
    let scenario = TrialScenario::frontal();
    let cfg = SimConfig::default();
    println!(
        "frontal bow, comp condition: {} s at {} Hz control / {} Hz observation, seed {}",
        scenario.duration, cfg.control_rate, cfg.obs_rate, cfg.seed
    );

    let log = run_trial(&scenario, Condition::Comp, &cfg, "example").unwrap();

    println!("\nCoM-SUP distance along the trial:");
    for tick in log.ticks.iter().step_by(1500) {
        let d = (layout::com_xy(&tick.truth) - layout::sup_xy(&tick.truth)).norm();
        println!(
            "  t = {:>4.1} s: {:.4} m (commanded CoM speed {:.3} m/s)",
            tick.time,
            d,
            tick.p_star_dot.norm()
        );
    }

    let com = mean_distance(&com_sup_series(&log, true).unwrap()).unwrap();
    let cop = mean_distance(&cop_sup_series(&log).unwrap()).unwrap();
    let mean_solve = log.ticks.iter().map(|t| t.solve_time).sum::<f64>() / log.ticks.len() as f64;
    println!("\nmean CoM-SUP {com:.4} m, mean CoP-SUP {cop:.4} m");
    println!(
        "QP: mean solve {:.2} ms, safe stops {}, joint-limit clips {}",
        mean_solve * 1e3,
        log.meta.safe_stops,
        log.meta.clip_total
    );

    // Artifacts round-trip losslessly through CSV + metadata sidecar.
    let mut csv = Vec::new();
    let mut meta = Vec::new();
    log.write_csv(&mut csv).unwrap();
    log.write_meta(&mut meta).unwrap();
    let back =
        TrialLog::read_files(BufReader::new(csv.as_slice()), BufReader::new(meta.as_slice()))
            .unwrap();
    assert_eq!(back.ticks.len(), log.ticks.len());
    assert_eq!(back.meta.config_hash, log.meta.config_hash);
    println!("\nCSV round-trip: {} ticks, {} observations, OK", back.ticks.len(), back.observations.len());
}
