//! Post-hoc analysis of trial logs: zero-phase filtering, CoM-SUP and
//! CoP-SUP distance series, time-weighted means, ground-reaction force
//! ellipses and cross-condition summaries.
//!
//! Everything here is a pure function of the logs; nothing feeds back
//! into the control stack.

use std::io::Write;

use nalgebra::{Matrix2, Vector2};

use crate::estimator::layout;
use crate::sim::{Condition, ScenarioKind, TrialLog};
use crate::{Error, Result};

/// Cut-off used for all reported distance series, Hz.
pub const FILTER_CUTOFF_HZ: f64 = 2.0;

/// A scalar distance trace tagged with its provenance.
#[derive(Debug, Clone)]
pub struct DistanceSeries {
    pub times: Vec<f64>,
    /// Distances, m; non-negative and the same length as `times`.
    pub values: Vec<f64>,
    pub scenario: ScenarioKind,
    pub condition: Condition,
}

/// Covariance-quantile ellipse of a planar force cloud.
#[derive(Debug, Clone)]
pub struct ForceEllipse {
    /// Sample mean, N.
    pub center: Vector2<f64>,
    /// Semi-axis lengths, N, major first.
    pub semi_axes: Vector2<f64>,
    /// Angle of the major axis against +x, rad, in (-pi/2, pi/2].
    pub orientation: f64,
    /// Covariance was (numerically) rank deficient; the minor axis has
    /// been floored at machine scale.
    pub degenerate: bool,
}

/// First-order Butterworth low-pass (bilinear transform), applied
/// forward and backward for zero phase. DC gain is exactly 1; a sine at
/// the cut-off comes out with amplitude 1/2 (1/sqrt(2) per pass).
pub fn butterworth1_lowpass(series: &[f64], fc: f64, fs: f64) -> Result<Vec<f64>> {
    if !(fc > 0.0 && fs > 2.0 * fc) {
        return Err(Error::InvalidInput(format!(
            "filter rates must satisfy fs > 2*fc > 0 (got fc={fc}, fs={fs})"
        )));
    }
    if series.is_empty() {
        return Ok(Vec::new());
    }
    // Pre-warped bilinear transform of 1/(1 + s/wc):
    //   y[n] = b (x[n] + x[n-1]) + a y[n-1],  b = c/(1+c), a = (1-c)/(1+c)
    // with c = tan(pi fc / fs).
    let c = (std::f64::consts::PI * fc / fs).tan();
    let b = c / (1.0 + c);
    let a = (1.0 - c) / (1.0 + c);
    let pass = |x: &[f64]| -> Vec<f64> {
        let mut y = Vec::with_capacity(x.len());
        // Steady-state initialization: treat the first sample as the
        // level the signal has held forever.
        let mut prev_y = x[0];
        let mut prev_x = x[0];
        for &xi in x {
            let yi = b * (xi + prev_x) + a * prev_y;
            y.push(yi);
            prev_x = xi;
            prev_y = yi;
        }
        y
    };
    let mut fwd = pass(series);
    fwd.reverse();
    let mut back = pass(&fwd);
    back.reverse();
    Ok(back)
}

/// Central-difference acceleration of the true CoM, from the logged CoM
/// velocities. Endpoints use one-sided differences.
fn com_accel(log: &TrialLog) -> Vec<Vector2<f64>> {
    let n = log.ticks.len();
    let mut out = Vec::with_capacity(n);
    let vel = |i: usize| layout::com_vel(&log.ticks[i].truth);
    for i in 0..n {
        let a = if n < 2 {
            Vector2::zeros()
        } else if i == 0 {
            (vel(1) - vel(0)) / (log.ticks[1].time - log.ticks[0].time)
        } else if i == n - 1 {
            (vel(n - 1) - vel(n - 2)) / (log.ticks[n - 1].time - log.ticks[n - 2].time)
        } else {
            (vel(i + 1) - vel(i - 1)) / (log.ticks[i + 1].time - log.ticks[i - 1].time)
        };
        out.push(a);
    }
    out
}

fn finish_series(log: &TrialLog, raw: Vec<f64>) -> Result<DistanceSeries> {
    let filtered = butterworth1_lowpass(&raw, FILTER_CUTOFF_HZ, log.meta.control_rate)?;
    Ok(DistanceSeries {
        times: log.ticks.iter().map(|t| t.time).collect(),
        // Filter ringing can graze below zero near sharp transients;
        // distances are non-negative by definition.
        values: filtered.into_iter().map(|v| v.max(0.0)).collect(),
        scenario: log.meta.scenario,
        condition: log.meta.condition,
    })
}

/// Distance between the system CoM and the support center per tick,
/// low-pass filtered at [`FILTER_CUTOFF_HZ`]. `use_truth` selects the
/// simulator ground truth over the estimator state.
pub fn com_sup_series(log: &TrialLog, use_truth: bool) -> Result<DistanceSeries> {
    if log.ticks.is_empty() {
        return Err(Error::InvalidInput("trial log has no ticks".into()));
    }
    let raw: Vec<f64> = log
        .ticks
        .iter()
        .map(|t| {
            let x = if use_truth { &t.truth } else { &t.estimate };
            (layout::com_xy(x) - layout::sup_xy(x)).norm()
        })
        .collect();
    finish_series(log, raw)
}

/// Distance between the center of pressure (linear-inverted-pendulum
/// proxy) and the support center per tick, filtered like
/// [`com_sup_series`]. Always computed from ground truth: the proxy
/// needs the CoM acceleration, which only the simulator knows cleanly.
pub fn cop_sup_series(log: &TrialLog) -> Result<DistanceSeries> {
    if log.ticks.is_empty() {
        return Err(Error::InvalidInput("trial log has no ticks".into()));
    }
    let accel = com_accel(log);
    let mut raw = Vec::with_capacity(log.ticks.len());
    for (tick, a) in log.ticks.iter().zip(&accel) {
        let com = layout::com_xy(&tick.truth);
        let cop = crate::sim::cop_proxy(&com, a, tick.com_height)?;
        raw.push((cop - layout::sup_xy(&tick.truth)).norm());
    }
    finish_series(log, raw)
}

/// Horizontal ground-reaction force per tick (Newton on the total CoM).
pub fn grf_series(log: &TrialLog) -> Vec<Vector2<f64>> {
    com_accel(log)
        .iter()
        .map(|a| crate::sim::grf_proxy(a, log.meta.total_mass))
        .collect()
}

/// Time-weighted (trapezoidal) mean of a distance series.
pub fn mean_distance(series: &DistanceSeries) -> Result<f64> {
    let n = series.values.len();
    if n == 0 || series.times.len() != n {
        return Err(Error::InvalidInput("distance series is empty or inconsistent".into()));
    }
    if n == 1 {
        return Ok(series.values[0]);
    }
    let mut area = 0.0;
    for i in 0..n - 1 {
        let dt = series.times[i + 1] - series.times[i];
        area += 0.5 * (series.values[i] + series.values[i + 1]) * dt;
    }
    let span = series.times[n - 1] - series.times[0];
    if !(span > 0.0) {
        return Err(Error::InvalidInput("distance series spans zero time".into()));
    }
    Ok(area / span)
}

/// Fit a coverage-quantile ellipse to a planar force cloud: sample mean
/// plus covariance eigen-decomposition, scaled so the ellipse contains
/// the requested probability mass under a Gaussian model (chi-square
/// with 2 dof).
pub fn force_ellipse(forces: &[Vector2<f64>], coverage: f64) -> Result<ForceEllipse> {
    if forces.len() < 3 {
        return Err(Error::InvalidInput("force ellipse needs at least 3 samples".into()));
    }
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::InvalidInput("coverage must lie strictly in (0, 1)".into()));
    }
    let n = forces.len() as f64;
    let center = forces.iter().sum::<Vector2<f64>>() / n;
    let mut cov = Matrix2::zeros();
    for f in forces {
        let d = f - center;
        cov += d * d.transpose();
    }
    cov /= n - 1.0;

    let eig = cov.symmetric_eigen();
    // Order eigenpairs major-first.
    let (i_maj, i_min) =
        if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let scale = (-2.0 * (1.0 - coverage).ln()).sqrt();
    let lam_maj = eig.eigenvalues[i_maj].max(0.0);
    let lam_min = eig.eigenvalues[i_min].max(0.0);
    let degenerate = lam_min <= f64::EPSILON * lam_maj.max(1.0);
    let floor = f64::EPSILON * lam_maj.max(1.0).sqrt();
    let semi_axes = Vector2::new(
        (scale * lam_maj.sqrt()).max(floor),
        (scale * lam_min.sqrt()).max(floor),
    );
    let v = eig.eigenvectors.column(i_maj);
    let mut orientation = v[1].atan2(v[0]);
    // Canonical half-open range: an axis has no sign.
    if orientation <= -std::f64::consts::FRAC_PI_2 {
        orientation += std::f64::consts::PI;
    } else if orientation > std::f64::consts::FRAC_PI_2 {
        orientation -= std::f64::consts::PI;
    }
    Ok(ForceEllipse { center, semi_axes, orientation, degenerate })
}

/// Per-condition aggregate over one or more trials.
#[derive(Debug, Clone)]
pub struct ConditionStats {
    pub condition: Condition,
    pub trials: usize,
    pub com_sup_mean: f64,
    pub com_sup_sd: f64,
    pub cop_sup_mean: f64,
    pub cop_sup_sd: f64,
    /// Ellipse over the pooled GRF samples of all trials.
    pub ellipse: ForceEllipse,
}

/// A pairwise "mean(a) < mean(b)" comparison outcome.
#[derive(Debug, Clone)]
pub struct OrderingFlag {
    /// "com_sup" or "cop_sup".
    pub metric: &'static str,
    pub smaller: Condition,
    pub larger: Condition,
    pub holds: bool,
}

/// Cross-condition summary for one scenario.
#[derive(Debug, Clone)]
pub struct Summary {
    pub scenario: ScenarioKind,
    /// Always in the order HOnly, NoComp, Comp.
    pub conditions: Vec<ConditionStats>,
    pub orderings: Vec<OrderingFlag>,
}

impl Summary {
    pub fn stats(&self, c: Condition) -> &ConditionStats {
        self.conditions.iter().find(|s| s.condition == c).expect("all conditions present")
    }

    pub fn ordering(&self, metric: &str, smaller: Condition, larger: Condition) -> bool {
        self.orderings
            .iter()
            .find(|o| o.metric == metric && o.smaller == smaller && o.larger == larger)
            .map(|o| o.holds)
            .unwrap_or(false)
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate trial logs (all from the same scenario, at least one per
/// condition) into per-condition statistics and pairwise ordering
/// flags. Pure and invariant to the order of the input logs.
pub fn condition_summary(logs: &[TrialLog]) -> Result<Summary> {
    if logs.is_empty() {
        return Err(Error::InvalidInput("no trial logs given".into()));
    }
    let scenario = logs[0].meta.scenario;
    if logs.iter().any(|l| l.meta.scenario != scenario) {
        return Err(Error::InvalidInput("summary mixes scenarios".into()));
    }

    let mut conditions = Vec::new();
    for cond in [Condition::HOnly, Condition::NoComp, Condition::Comp] {
        let group: Vec<&TrialLog> = logs.iter().filter(|l| l.meta.condition == cond).collect();
        if group.is_empty() {
            return Err(Error::InvalidInput(format!(
                "summary needs at least one {} trial",
                cond.as_str()
            )));
        }
        let mut com_means = Vec::new();
        let mut cop_means = Vec::new();
        let mut forces = Vec::new();
        for log in &group {
            com_means.push(mean_distance(&com_sup_series(log, true)?)?);
            cop_means.push(mean_distance(&cop_sup_series(log)?)?);
            forces.extend(grf_series(log));
        }
        let (com_mean, com_sd) = mean_sd(&com_means);
        let (cop_mean, cop_sd) = mean_sd(&cop_means);
        conditions.push(ConditionStats {
            condition: cond,
            trials: group.len(),
            com_sup_mean: com_mean,
            com_sup_sd: com_sd,
            cop_sup_mean: cop_mean,
            cop_sup_sd: cop_sd,
            ellipse: force_ellipse(&forces, 0.95)?,
        });
    }

    let mut orderings = Vec::new();
    for (metric, pick) in [
        ("com_sup", (|s: &ConditionStats| s.com_sup_mean) as fn(&ConditionStats) -> f64),
        ("cop_sup", |s: &ConditionStats| s.cop_sup_mean),
    ] {
        for (a, b) in [
            (Condition::Comp, Condition::HOnly),
            (Condition::Comp, Condition::NoComp),
            (Condition::HOnly, Condition::NoComp),
        ] {
            let sa = conditions.iter().find(|s| s.condition == a).unwrap();
            let sb = conditions.iter().find(|s| s.condition == b).unwrap();
            orderings.push(OrderingFlag {
                metric,
                smaller: a,
                larger: b,
                holds: pick(sa) < pick(sb),
            });
        }
    }
    Ok(Summary { scenario, conditions, orderings })
}

/// Write a summary as CSV (one row per condition plus ordering rows).
pub fn write_summary_csv(summary: &Summary, w: &mut impl Write) -> Result<()> {
    writeln!(
        w,
        "scenario,condition,trials,com_sup_mean_m,com_sup_sd_m,cop_sup_mean_m,cop_sup_sd_m,\
         grf_center_x_n,grf_center_y_n,grf_semi_major_n,grf_semi_minor_n,grf_orientation_rad,\
         grf_degenerate"
    )?;
    for s in &summary.conditions {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            summary.scenario.as_str(),
            s.condition.as_str(),
            s.trials,
            s.com_sup_mean,
            s.com_sup_sd,
            s.cop_sup_mean,
            s.cop_sup_sd,
            s.ellipse.center.x,
            s.ellipse.center.y,
            s.ellipse.semi_axes.x,
            s.ellipse.semi_axes.y,
            s.ellipse.orientation,
            s.ellipse.degenerate
        )?;
    }
    writeln!(w)?;
    writeln!(w, "metric,smaller,larger,holds")?;
    for o in &summary.orderings {
        writeln!(w, "{},{},{},{}", o.metric, o.smaller.as_str(), o.larger.as_str(), o.holds)?;
    }
    Ok(())
}
