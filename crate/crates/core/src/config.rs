//! Flat key/value run configuration (TOML syntax).
//!
//! Keys are spelled exactly like the command-line flags, so a file such as
//!
//! ```toml
//! distance-km = 1.5
//! depolar-rate-hz = 8000
//! beta = 0.3
//! ```
//!
//! and `--distance-km 1.5 --depolar-rate-hz 8000 --beta 0.3` mean the same.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ExperimentSpec, Sweep, SweepParam};

/// Every recognised key.
pub const CONFIG_KEYS: &[&str] = &[
    "epsilon",
    "delta",
    "alpha",
    "beta",
    "capacity",
    "distance-km",
    "depolar-rate-hz",
    "fiber-speed-km-per-s",
    "attenuation-length-km",
    "memory-depolar-rate-hz",
    "attempt-rate-hz",
    "classical-speed-km-per-s",
    "memory-capacity",
    "n",
    "repetitions",
    "seed",
    "jobs",
    "param",
    "values",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub capacity: Option<usize>,
    pub distance_km: Option<f64>,
    pub depolar_rate_hz: Option<f64>,
    pub fiber_speed_km_per_s: Option<f64>,
    pub attenuation_length_km: Option<f64>,
    pub memory_depolar_rate_hz: Option<f64>,
    pub attempt_rate_hz: Option<f64>,
    pub classical_speed_km_per_s: Option<f64>,
    pub memory_capacity: Option<usize>,
    pub n: Option<u64>,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub param: Option<String>,
    pub values: Option<Vec<f64>>,
}

macro_rules! overlay {
    ($self:ident, $other:ident; $($field:ident),*) => {
        $( if $other.$field.is_some() { $self.$field = $other.$field.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(&mut self, other: &RunConfig) {
        overlay!(self, other;
            epsilon, delta, alpha, beta, capacity, distance_km, depolar_rate_hz,
            fiber_speed_km_per_s, attenuation_length_km, memory_depolar_rate_hz,
            attempt_rate_hz, classical_speed_km_per_s, memory_capacity, n,
            repetitions, seed, jobs, param, values);
    }

    /// Baseline experiment with every set field applied.
    pub fn experiment_spec(&self) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::default();
        let net = &mut spec.network;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(net.distance_km, self.distance_km);
        set!(net.channel_depolar_rate_hz, self.depolar_rate_hz);
        set!(net.fiber_speed_km_per_s, self.fiber_speed_km_per_s);
        set!(net.attenuation_length_km, self.attenuation_length_km);
        set!(net.memory_depolar_rate_hz, self.memory_depolar_rate_hz);
        set!(net.attempt_rate_hz, self.attempt_rate_hz);
        set!(net.classical_speed_km_per_s, self.classical_speed_km_per_s);
        set!(net.memory_capacity, self.memory_capacity);
        set!(spec.capacity, self.capacity);
        set!(spec.beta, self.beta);
        set!(spec.alpha, self.alpha);
        set!(spec.delta, self.delta);
        set!(spec.repetitions, self.repetitions);
        set!(spec.seed, self.seed);
        if let Some(name) = &self.param {
            let param: SweepParam = name.parse()?;
            let values = self.values.clone().unwrap_or_else(|| param.default_grid());
            spec.sweep = Some(Sweep { param, values });
        }
        Ok(spec)
    }
}
