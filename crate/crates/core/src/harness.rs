//! Monte-Carlo experiments: repeated PEV runs over the simulated link,
//! adjudicated against the exact fidelity of the pairs left in memory.
//!
//! Error rates follow the formula definitions literally: FPR counts accepts
//! while `H1` holds, FNR counts rejects while `H0` holds, both over all
//! repetitions.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netsim::{Network, NetworkConfig, NetworkPairSource, Payload};
use crate::protocols::{verify_pev, FixedState, VerificationOutcome};
use crate::quantum::{entanglement_fidelity, DensityMatrix, Party};
use crate::teleport::{pauli_eigenstates, teleport_report};

/// Increment of the SplitMix64 generator, used to derive per-repetition seeds.
pub const SEED_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

const NETWORK_STREAM: u64 = 0x6E65_7477_6F72_6B00;
const MEASURE_STREAM: u64 = 0x6D65_6173_7572_6500;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of repetition `index` under base seed `seed`.
pub fn repetition_seed(seed: u64, index: u64) -> u64 {
    mix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(SEED_GAMMA)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Beta,
    Distance,
    DepolarRate,
    Alpha,
}

impl SweepParam {
    pub const ALL: [SweepParam; 4] = [
        SweepParam::Beta,
        SweepParam::Distance,
        SweepParam::DepolarRate,
        SweepParam::Alpha,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::Distance => "distance",
            SweepParam::DepolarRate => "depolar_rate",
            SweepParam::Alpha => "alpha",
        }
    }

    /// Allowed range of sweep values (inclusive).
    pub fn range(self) -> (f64, f64) {
        match self {
            SweepParam::Beta => (0.1, 0.7),
            SweepParam::Distance => (0.5, 3.0),
            SweepParam::DepolarRate => (1_000.0, 16_000.0),
            SweepParam::Alpha => (0.01, 0.20),
        }
    }

    /// Default experiment grid.
    pub fn default_grid(self) -> Vec<f64> {
        let steps = |start: f64, step: f64, count: usize| -> Vec<f64> {
            // Rounded so the grid prints cleanly.
            (0..count).map(|k| ((start + step * k as f64) * 1e6).round() / 1e6).collect()
        };
        match self {
            SweepParam::Beta => steps(0.1, 0.1, 7),
            SweepParam::Distance => steps(0.5, 0.5, 6),
            SweepParam::DepolarRate => steps(1_000.0, 1_000.0, 16),
            SweepParam::Alpha => steps(0.01, 0.01, 20),
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "beta" => Ok(SweepParam::Beta),
            "distance" | "distance_km" => Ok(SweepParam::Distance),
            "depolar_rate" | "depolar_rate_hz" => Ok(SweepParam::DepolarRate),
            "alpha" => Ok(SweepParam::Alpha),
            _ => Err(Error::UnknownParameter(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// One experiment: link settings, pair budget and test parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub network: NetworkConfig,
    /// Total pairs per repetition.
    pub capacity: usize,
    /// Fraction of the budget spent on verification.
    pub beta: f64,
    pub alpha: f64,
    pub delta: f64,
    pub repetitions: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            capacity: 10_000,
            beta: 0.3,
            alpha: 0.1,
            delta: 0.1,
            repetitions: 200,
            seed: 0,
            sweep: None,
        }
    }
}

impl ExperimentSpec {
    /// Pairs measured per CHSH setting: `⌊β·𝒞/4⌋`.
    pub fn n_per_setting(&self) -> u64 {
        (self.beta * self.capacity as f64 / 4.0).floor() as u64
    }

    pub fn remaining_pairs(&self) -> usize {
        self.capacity.saturating_sub(4 * self.n_per_setting() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::OutOfRange {
                name: "beta",
                value: self.beta,
                expected: "(0, 1)",
            });
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::OutOfRange {
                name: "alpha",
                value: self.alpha,
                expected: "(0, 1)",
            });
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::OutOfRange {
                name: "delta",
                value: self.delta,
                expected: "(0, 1)",
            });
        }
        if self.repetitions == 0 {
            return Err(Error::OutOfRange {
                name: "repetitions",
                value: 0.0,
                expected: ">= 1",
            });
        }
        if self.n_per_setting() == 0 {
            return Err(Error::DegenerateSplit(format!(
                "beta·capacity = {} < 4 leaves no verification samples",
                self.beta * self.capacity as f64
            )));
        }
        if self.remaining_pairs() == 0 {
            return Err(Error::DegenerateSplit("verification consumes every pair".into()));
        }
        if self.capacity > self.network.memory_capacity {
            return Err(Error::MemoryCapacity {
                capacity: self.network.memory_capacity,
            });
        }
        Ok(())
    }

    /// Copy of this spec with one parameter replaced.
    pub fn with_param(&self, param: SweepParam, value: f64) -> Self {
        let mut out = self.clone();
        out.sweep = None;
        match param {
            SweepParam::Beta => out.beta = value,
            SweepParam::Distance => out.network.distance_km = value,
            SweepParam::DepolarRate => out.network.channel_depolar_rate_hz = value,
            SweepParam::Alpha => out.alpha = value,
        }
        out
    }
}

/// Where a repetition's pairs come from.
#[derive(Debug, Clone, Default)]
pub enum Backend {
    /// The simulated link described by the spec's network config.
    #[default]
    Network,
    /// i.i.d. copies of one fixed state, bypassing the simulator.
    Fixed(DensityMatrix),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub verification: VerificationOutcome,
    pub ground_truth: Hypothesis,
    pub remaining_mean_fidelity: f64,
    /// Average post-teleportation fidelity; only computed on accept.
    pub post_teleport_fidelity: Option<f64>,
    #[serde(skip)]
    pub remaining_states: Vec<DensityMatrix>,
}

impl RunOutcome {
    pub fn correct(&self) -> bool {
        self.verification.decision.accepted() == (self.ground_truth == Hypothesis::H0)
    }
}

/// One repetition with the network backend.
pub fn run_once(spec: &ExperimentSpec, seed: u64) -> Result<RunOutcome> {
    run_once_on(spec, &Backend::Network, seed)
}

pub fn run_once_on(spec: &ExperimentSpec, backend: &Backend, seed: u64) -> Result<RunOutcome> {
    spec.validate()?;
    let n = spec.n_per_setting();
    let mut measure_rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ MEASURE_STREAM));
    let (verification, remaining_states) = match backend {
        Backend::Fixed(state) => {
            let mut source = FixedState::new(state.clone()).with_limit(spec.capacity as u64);
            let verification = verify_pev(&mut source, n, spec.alpha, &mut measure_rng)?;
            (verification, vec![state.clone(); spec.remaining_pairs()])
        }
        Backend::Network => {
            let network = Network::new(spec.network, mix64(seed ^ NETWORK_STREAM))?;
            let mut source = NetworkPairSource::new(network);
            let net = source.network_mut();
            net.generate_pairs(spec.capacity)?;
            net.send(Party::Alice, Payload::BasisChoices { n_per_setting: n })?;
            net.run_until_idle();
            let verification = verify_pev(&mut source, n, spec.alpha, &mut measure_rng)?;
            let net = source.network_mut();
            net.send(Party::Bob, Payload::Outcomes { count: 4 * n })?;
            net.run_until_idle();
            net.send(
                Party::Alice,
                Payload::Verdict {
                    decision: verification.decision,
                },
            )?;
            net.run_until_idle();
            let remaining = net.drain_pairs()?.into_iter().map(|p| p.state).collect();
            (verification, remaining)
        }
    };
    let remaining_mean_fidelity =
        remaining_states.iter().map(entanglement_fidelity).sum::<f64>() / remaining_states.len() as f64;
    let ground_truth = if remaining_mean_fidelity >= 1.0 - spec.alpha {
        Hypothesis::H0
    } else {
        Hypothesis::H1
    };
    let post_teleport_fidelity = if verification.decision.accepted() {
        Some(teleport_report(&remaining_states, &pauli_eigenstates())?.average_fidelity)
    } else {
        None
    };
    Ok(RunOutcome {
        verification,
        ground_truth,
        remaining_mean_fidelity,
        post_teleport_fidelity,
        remaining_states,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub success_rate: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub mean_remaining_fidelity: f64,
    /// Mean over accepted repetitions; `None` if nothing was accepted.
    pub mean_post_teleport_fidelity: Option<f64>,
    pub mean_s_bar: f64,
    pub accept_count: usize,
    pub reject_count: usize,
    pub h0_true_count: usize,
    pub repetitions: usize,
}

impl RunMetrics {
    /// Aggregates outcomes in the order given.
    pub fn from_outcomes(outcomes: &[RunOutcome]) -> Self {
        let reps = outcomes.len();
        let mut accepts = 0;
        let mut h0 = 0;
        let mut false_pos = 0;
        let mut false_neg = 0;
        let mut correct = 0;
        let mut teleport_sum = 0.0;
        for o in outcomes {
            let accepted = o.verification.decision.accepted();
            let is_h0 = o.ground_truth == Hypothesis::H0;
            accepts += usize::from(accepted);
            h0 += usize::from(is_h0);
            match (accepted, is_h0) {
                (true, false) => false_pos += 1,
                (false, true) => false_neg += 1,
                _ => correct += 1,
            }
            if let Some(f) = o.post_teleport_fidelity {
                teleport_sum += f;
            }
        }
        let r = reps as f64;
        Self {
            success_rate: correct as f64 / r,
            fpr: false_pos as f64 / r,
            fnr: false_neg as f64 / r,
            mean_remaining_fidelity: outcomes.iter().map(|o| o.remaining_mean_fidelity).sum::<f64>() / r,
            mean_post_teleport_fidelity: (accepts > 0).then(|| teleport_sum / accepts as f64),
            mean_s_bar: outcomes.iter().map(|o| o.verification.estimate.s_bar).sum::<f64>() / r,
            accept_count: accepts,
            reject_count: reps - accepts,
            h0_true_count: h0,
            repetitions: reps,
        }
    }
}

/// Runs every repetition of `spec` on the network backend.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunMetrics> {
    run_experiment_on(spec, &Backend::Network)
}

pub fn run_experiment_on(spec: &ExperimentSpec, backend: &Backend) -> Result<RunMetrics> {
    let outcomes = run_repetitions(spec, backend)?;
    Ok(RunMetrics::from_outcomes(&outcomes))
}

/// All outcomes of `spec`, in repetition order. Repetitions run in parallel.
pub fn run_repetitions(spec: &ExperimentSpec, backend: &Backend) -> Result<Vec<RunOutcome>> {
    spec.validate()?;
    (0..spec.repetitions as u64)
        .into_par_iter()
        .map(|i| {
            let mut o = run_once_on(spec, backend, repetition_seed(spec.seed, i))?;
            o.remaining_states = Vec::new();
            Ok(o)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub metrics: RunMetrics,
}

/// One experiment per grid value of `spec.sweep`, other parameters fixed.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepPoint>> {
    let sweep = spec
        .sweep
        .as_ref()
        .ok_or(Error::EmptyInput("spec has no sweep"))?;
    let (lo, hi) = sweep.param.range();
    if sweep.values.is_empty() {
        return Err(Error::EmptyInput("sweep grid is empty"));
    }
    for &v in &sweep.values {
        if !(v >= lo - 1e-12 && v <= hi + 1e-12) {
            return Err(Error::OutOfRange {
                name: "sweep value",
                value: v,
                expected: "within the parameter's experiment range",
            });
        }
    }
    let mut values = sweep.values.clone();
    values.sort_by(f64::total_cmp);
    values
        .into_iter()
        .map(|value| {
            let metrics = run_experiment(&spec.with_param(sweep.param, value))?;
            Ok(SweepPoint { value, metrics })
        })
        .collect()
}

/// Smallest swept `β` whose success rate reaches `1 − delta`.
pub fn find_optimal_beta(points: &[SweepPoint], delta: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.metrics.success_rate >= 1.0 - delta)
        .map(|p| p.value)
        .min_by(f64::total_cmp)
}

/// Runs `f` on a dedicated pool of `jobs` threads, or the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

pub const CSV_HEADER: &str =
    "param,value,success_rate,fpr,fnr,mean_fidelity,mean_teleport_fidelity,accepts,rejects,reps,seed";

/// Writes sweep rows under [`CSV_HEADER`]. Missing teleport fidelity is an
/// empty field.
pub fn write_sweep_csv<W: Write>(mut out: W, param: SweepParam, seed: u64, points: &[SweepPoint]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for p in points {
        let m = &p.metrics;
        let teleport = m.mean_post_teleport_fidelity.map(|f| f.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            param.name(),
            p.value,
            m.success_rate,
            m.fpr,
            m.fnr,
            m.mean_remaining_fidelity,
            teleport,
            m.accept_count,
            m.reject_count,
            m.repetitions,
            seed
        )?;
    }
    Ok(())
}

/// Provenance record written next to sweep output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub spec: ExperimentSpec,
    pub seed_gamma: String,
}

impl Manifest {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            spec: spec.clone(),
            seed_gamma: format!("{SEED_GAMMA:#018x}"),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }
}

/// Spearman rank correlation, ties given their average rank.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "spearman needs paired samples");
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                out[k] = avg;
            }
            i = j + 1;
        }
        out
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::bell_state_phi_plus;

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec {
            capacity: 2_000,
            repetitions: 8,
            seed: 11,
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn split_arithmetic() {
        let s = ExperimentSpec::default();
        assert_eq!(s.n_per_setting(), 750);
        assert_eq!(s.remaining_pairs(), 7_000);
        s.validate().unwrap();
    }

    #[test]
    fn degenerate_splits_are_rejected() {
        let s = ExperimentSpec {
            capacity: 10,
            beta: 0.3,
            ..ExperimentSpec::default()
        };
        assert!(matches!(s.validate(), Err(Error::DegenerateSplit(_))));
        let s = ExperimentSpec {
            capacity: 3,
            beta: 0.99,
            ..ExperimentSpec::default()
        };
        assert!(matches!(run_once(&s, 0), Err(Error::DegenerateSplit(_))));
        let s = ExperimentSpec {
            capacity: 20_000,
            ..ExperimentSpec::default()
        };
        assert!(matches!(s.validate(), Err(Error::MemoryCapacity { .. })));
    }

    #[test]
    fn noiseless_link_always_accepts() {
        let mut s = small_spec();
        s.network.channel_depolar_rate_hz = 0.0;
        let o = run_once(&s, 4).unwrap();
        assert_eq!(o.ground_truth, Hypothesis::H0);
        assert!((o.remaining_mean_fidelity - 1.0).abs() < 1e-12);
        assert!(o.verification.decision.accepted());
        assert!((o.post_teleport_fidelity.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_fixed_state_is_always_correct() {
        // Large enough n that S̄ sits several σ above the threshold.
        for beta in [0.3, 0.5] {
            let s = ExperimentSpec {
                beta,
                capacity: 10_000,
                ..small_spec()
            };
            let m = run_experiment_on(&s, &Backend::Fixed(bell_state_phi_plus())).unwrap();
            assert_eq!((m.success_rate, m.fpr, m.fnr), (1.0, 0.0, 0.0));
            assert_eq!(m.h0_true_count, s.repetitions);
        }
    }

    #[test]
    fn metrics_partition_and_reproduce() {
        let s = small_spec();
        let a = run_experiment(&s).unwrap();
        let b = with_jobs(Some(1), || run_experiment(&s)).unwrap();
        assert_eq!(a, b);
        assert!((a.success_rate + a.fpr + a.fnr - 1.0).abs() < 1e-12);
        assert_eq!(a.accept_count + a.reject_count, a.repetitions);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let mut s = small_spec();
        assert!(run_sweep(&s).is_err());
        s.sweep = Some(Sweep {
            param: SweepParam::Beta,
            values: vec![0.9],
        });
        assert!(run_sweep(&s).is_err());
        assert!(matches!("gamma".parse::<SweepParam>(), Err(Error::UnknownParameter(_))));
        assert_eq!("depolar-rate-hz".parse::<SweepParam>().unwrap(), SweepParam::DepolarRate);
    }

    #[test]
    fn default_grids_cover_ranges() {
        for p in SweepParam::ALL {
            let g = p.default_grid();
            let (lo, hi) = p.range();
            assert!((g[0] - lo).abs() < 1e-9 && (g[g.len() - 1] - hi).abs() < 1e-9, "{p}");
        }
    }

    #[test]
    fn csv_layout() {
        let metrics = RunMetrics {
            success_rate: 0.5,
            fpr: 0.25,
            fnr: 0.25,
            mean_remaining_fidelity: 0.9,
            mean_post_teleport_fidelity: None,
            mean_s_bar: 2.5,
            accept_count: 2,
            reject_count: 2,
            h0_true_count: 2,
            repetitions: 4,
        };
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, SweepParam::Alpha, 3, &[SweepPoint { value: 0.1, metrics }]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\nalpha,0.1,0.5,0.25,0.25,0.9,,2,2,4,3\n"));
    }

    #[test]
    fn spearman_basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&x, &[1.0, 1.0, 1.0, 1.0]), 0.0);
    }

    #[test]
    fn optimal_beta_picks_smallest_passing() {
        let mk = |value, success_rate| SweepPoint {
            value,
            metrics: RunMetrics {
                success_rate,
                fpr: 0.0,
                fnr: 1.0 - success_rate,
                mean_remaining_fidelity: 0.97,
                mean_post_teleport_fidelity: None,
                mean_s_bar: 2.7,
                accept_count: 0,
                reject_count: 0,
                h0_true_count: 0,
                repetitions: 1,
            },
        };
        let pts = [mk(0.1, 0.7), mk(0.2, 0.92), mk(0.3, 0.98)];
        assert_eq!(find_optimal_beta(&pts, 0.1), Some(0.2));
        assert_eq!(find_optimal_beta(&pts, 0.01), None);
    }
}
