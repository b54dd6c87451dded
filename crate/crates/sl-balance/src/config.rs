//! Flat key-value configuration with dotted paths.
//!
//! The schema is a fixed list of documented numeric keys (see
//! [`config_keys`]). Files are plain `key = value` lines with `#`
//! comments — diff-friendly for parameter sweeps. Unknown keys are a
//! hard error, both in files and in `--set` overrides, so typos cannot
//! silently fall back to defaults. The canonical serialization of the
//! resolved configuration is hashed (SHA-256) and embedded in every
//! artifact for reproducibility.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::model::SlArmModel;
use crate::mpc::MpcConfig;
use crate::planner::sample_layout;
use crate::sim::{ScenarioKind, SimConfig, TrialScenario};
use crate::{Error, Result};

/// One schema entry: key, unit, description. Defaults are read off the
/// library's `Default` implementations so this table cannot drift from
/// the code.
pub struct KeyDoc {
    pub key: &'static str,
    pub unit: &'static str,
    pub doc: &'static str,
}

/// The complete configuration schema.
pub const fn config_keys() -> &'static [KeyDoc] {
    &[
        KeyDoc { key: "scenario.treadmill_speed", unit: "m/s", doc: "belt speed driving the bow angle" },
        KeyDoc { key: "scenario.duration", unit: "s", doc: "trial length" },
        KeyDoc { key: "sim.control_rate", unit: "Hz", doc: "control loop rate" },
        KeyDoc { key: "sim.obs_rate", unit: "Hz", doc: "observation (marker) rate; must divide the control rate" },
        KeyDoc { key: "sim.noise_sigma", unit: "m", doc: "marker noise standard deviation" },
        KeyDoc { key: "sim.seed", unit: "1", doc: "RNG seed (non-negative integer)" },
        KeyDoc { key: "anthro.body_mass", unit: "kg", doc: "human body mass" },
        KeyDoc { key: "anthro.body_height", unit: "m", doc: "human body height" },
        KeyDoc { key: "anthro.backpack_mass", unit: "kg", doc: "backpack (power supply and arm bases) mass" },
        KeyDoc { key: "planner.gamma", unit: "1", doc: "instability-cost weight on the CoM-SUP distance" },
        KeyDoc { key: "planner.zeta", unit: "1", doc: "damping weight on the commanded CoM velocity" },
        KeyDoc { key: "planner.step", unit: "s", doc: "one-step lookahead used by the CoM-shift law" },
        KeyDoc { key: "planner.v_max", unit: "m/s", doc: "commanded CoM speed clip" },
        KeyDoc { key: "mpc.horizon", unit: "s", doc: "prediction horizon" },
        KeyDoc { key: "mpc.n_steps", unit: "1", doc: "horizon discretization steps (positive integer)" },
        KeyDoc { key: "mpc.k0", unit: "1", doc: "Kalman-gain-norm scale of the weight adaptation" },
        KeyDoc { key: "mpc.epsilon_q", unit: "1", doc: "floor of the tracking-weight scale factor" },
        KeyDoc { key: "mpc.q_pos", unit: "1", doc: "task position tracking weight (diagonal)" },
        KeyDoc { key: "mpc.q_vel", unit: "1", doc: "task velocity tracking weight (diagonal)" },
        KeyDoc { key: "mpc.r", unit: "1", doc: "input (acceleration) weight (diagonal)" },
        KeyDoc { key: "mpc.w", unit: "1", doc: "input-rate (jerk) weight (diagonal)" },
    ]
}

/// Resolved configuration: every schema key bound to a value.
#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<&'static str, f64>,
}

fn lookup(key: &str) -> Result<&'static str> {
    config_keys()
        .iter()
        .map(|d| d.key)
        .find(|k| *k == key)
        .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))
}

impl Default for Config {
    fn default() -> Self {
        let sim = SimConfig::default();
        let scen = TrialScenario::frontal();
        let q_pos = sim.mpc.q0[(sample_layout::pos(0, 0), sample_layout::pos(0, 0))];
        let q_vel = sim.mpc.q0[(sample_layout::vel(0, 0), sample_layout::vel(0, 0))];
        let mut values = BTreeMap::new();
        for (key, value) in [
            ("scenario.treadmill_speed", scen.treadmill_speed),
            ("scenario.duration", scen.duration),
            ("sim.control_rate", sim.control_rate),
            ("sim.obs_rate", sim.obs_rate),
            ("sim.noise_sigma", sim.noise_sigma),
            ("sim.seed", sim.seed as f64),
            ("anthro.body_mass", sim.anthro.body_mass),
            ("anthro.body_height", sim.anthro.body_height),
            ("anthro.backpack_mass", sim.anthro.backpack_mass),
            ("planner.gamma", sim.planner.gamma),
            ("planner.zeta", sim.planner.zeta),
            ("planner.step", sim.planner.step),
            ("planner.v_max", sim.planner.v_max),
            ("mpc.horizon", sim.mpc.horizon),
            ("mpc.n_steps", sim.mpc.n_steps as f64),
            ("mpc.k0", sim.mpc.k0),
            ("mpc.epsilon_q", sim.mpc.epsilon_q),
            ("mpc.q_pos", q_pos),
            ("mpc.q_vel", q_vel),
            ("mpc.r", sim.mpc.r0[(0, 0)]),
            ("mpc.w", sim.mpc.w[(0, 0)]),
        ] {
            values.insert(lookup(key).expect("schema key"), value);
        }
        Self { values }
    }
}

impl Config {
    /// Load defaults overlaid with a config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Apply `key = value` lines (the file format).
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {line_no}: expected `key = value`, got `{line}`"
                )));
            };
            let key = key.trim();
            let value_str = value.trim();
            let column = raw.find('=').map(|c| c + 2).unwrap_or(1);
            let value: f64 = value_str.parse().map_err(|_| {
                Error::Config(format!(
                    "line {line_no}, column {column}: `{value_str}` is not a number"
                ))
            })?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {line_no}: {e}")))?;
        }
        Ok(())
    }

    /// Apply one `key=value` override (the `--set` flag).
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let Some((key, value)) = spec.split_once('=') else {
            return Err(Error::Config(format!("override `{spec}` must look like key=value")));
        };
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("override `{spec}`: value is not a number")))?;
        self.set(key.trim(), value)
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Config(format!("value for `{key}` must be finite")));
        }
        self.values.insert(lookup(key)?, value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        Ok(*self.values.get(lookup(key)?).expect("all schema keys populated"))
    }

    /// Canonical serialization: sorted `key = value` lines.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Short SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        let mut hex = String::with_capacity(16);
        for b in &digest[..8] {
            let _ = write!(hex, "{b:02x}");
        }
        hex
    }

    pub fn seed(&self) -> Result<u64> {
        let v = self.get("sim.seed")?;
        if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
            return Err(Error::Config(format!(
                "sim.seed must be a non-negative integer, got {v}"
            )));
        }
        Ok(v as u64)
    }

    /// Materialize the simulator configuration.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        cfg.control_rate = self.get("sim.control_rate")?;
        cfg.obs_rate = self.get("sim.obs_rate")?;
        cfg.noise_sigma = self.get("sim.noise_sigma")?;
        cfg.seed = self.seed()?;
        cfg.anthro.body_mass = self.get("anthro.body_mass")?;
        cfg.anthro.body_height = self.get("anthro.body_height")?;
        cfg.anthro.backpack_mass = self.get("anthro.backpack_mass")?;
        cfg.planner.gamma = self.get("planner.gamma")?;
        cfg.planner.zeta = self.get("planner.zeta")?;
        cfg.planner.step = self.get("planner.step")?;
        cfg.planner.v_max = self.get("planner.v_max")?;
        cfg.mpc = self.mpc_config(&cfg.arms)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn mpc_config(&self, arms: &[SlArmModel; 2]) -> Result<MpcConfig> {
        let mut mpc = MpcConfig::default_for_arms(arms);
        mpc.horizon = self.get("mpc.horizon")?;
        let n = self.get("mpc.n_steps")?;
        if n < 1.0 || n.fract() != 0.0 {
            return Err(Error::Config(format!(
                "mpc.n_steps must be a positive integer, got {n}"
            )));
        }
        mpc.n_steps = n as usize;
        mpc.k0 = self.get("mpc.k0")?;
        mpc.epsilon_q = self.get("mpc.epsilon_q")?;
        let q_pos = self.get("mpc.q_pos")?;
        let q_vel = self.get("mpc.q_vel")?;
        for arm in 0..2 {
            for point in 0..2 {
                let p = sample_layout::pos(arm, point);
                let v = sample_layout::vel(arm, point);
                for c in 0..3 {
                    mpc.q0[(p + c, p + c)] = q_pos;
                    mpc.q0[(v + c, v + c)] = q_vel;
                }
            }
        }
        mpc.r0 = nalgebra::SMatrix::identity() * self.get("mpc.r")?;
        mpc.w = nalgebra::SMatrix::identity() * self.get("mpc.w")?;
        mpc.validate()?;
        Ok(mpc)
    }

    /// Materialize the trial scenario for one movement kind.
    pub fn scenario(&self, kind: ScenarioKind) -> Result<TrialScenario> {
        let mut scen = match kind {
            ScenarioKind::FrontalBow => TrialScenario::frontal(),
            ScenarioKind::LateralBow => TrialScenario::lateral(),
        };
        scen.treadmill_speed = self.get("scenario.treadmill_speed")?;
        scen.duration = self.get("scenario.duration")?;
        scen.validate()?;
        Ok(scen)
    }
}
