//! The headline experiment: run both bow scenarios under all three
//! conditions (human only, passive arms, active compensation) and
//! reproduce the qualitative orderings — passive arms degrade balance,
//! active compensation more than recovers it.
//!
//! Uses a shortened trial so the example stays quick; run the `slbal`
//! binary for full-length trials and artifact output.

use sl_balance::metrics::{condition_summary, force_ellipse, grf_series};
use sl_balance::sim::{run_trial, Condition, SimConfig, TrialScenario};

fn main() {
    let mut cfg = SimConfig::default();
    cfg.noise_sigma = 1e-3;

    for mut scenario in [TrialScenario::frontal(), TrialScenario::lateral()] {
        scenario.duration = 6.0;
        println!("== {} bow ({} s)", scenario.kind.as_str(), scenario.duration);

        let mut logs = Vec::new();
        for condition in [Condition::HOnly, Condition::NoComp, Condition::Comp] {
            logs.push(run_trial(&scenario, condition, &cfg, "example").unwrap());
        }
        let summary = condition_summary(&logs).unwrap();
        for s in &summary.conditions {
            println!(
                "  {:>6}: mean CoM-SUP {:.4} m, mean CoP-SUP {:.4} m",
                s.condition.as_str(),
                s.com_sup_mean,
                s.cop_sup_mean
            );
        }
        println!(
            "  Comp < HOnly: {} | Comp < NoComp: {} | HOnly < NoComp: {}",
            summary.ordering("com_sup", Condition::Comp, Condition::HOnly),
            summary.ordering("com_sup", Condition::Comp, Condition::NoComp),
            summary.ordering("com_sup", Condition::HOnly, Condition::NoComp),
        );

        // Force asymmetry: the active condition re-centers the
        // horizontal GRF cloud.
        for condition in [Condition::NoComp, Condition::Comp] {
            let log = logs.iter().find(|l| l.meta.condition == condition).unwrap();
            let e = force_ellipse(&grf_series(log), 0.95).unwrap();
            println!(
                "  {:>6} GRF ellipse: center ({:>7.2}, {:>7.2}) N, semi-axes ({:.1}, {:.1}) N",
                condition.as_str(),
                e.center.x,
                e.center.y,
                e.semi_axes.x,
                e.semi_axes.y
            );
        }
        println!();
    }
}
