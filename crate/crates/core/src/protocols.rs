//! CHSH estimation and the two threshold verification tests built on it.
//!
//! Both tests draw pairs from a [`PairSource`], so the same code runs against
//! an analytic i.i.d. state or the simulated network.

use std::f64::consts::SQRT_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::quantum::{standard_observables, DensityMatrix, JointMeasurement, MeasurementOutcome, Setting, TSIRELSON_BOUND};
use crate::stats::{ev_sample_size, SamplePlan};

/// Supplier of successive EPR pairs.
pub trait PairSource {
    /// Hands out the next pair. Each pair is handed out once.
    fn next_pair(&mut self) -> Result<DensityMatrix>;

    /// Number of pairs handed out so far.
    fn consumed(&self) -> u64;
}

impl<S: PairSource + ?Sized> PairSource for &mut S {
    fn next_pair(&mut self) -> Result<DensityMatrix> {
        (**self).next_pair()
    }

    fn consumed(&self) -> u64 {
        (**self).consumed()
    }
}

/// i.i.d. copies of one state, optionally with a finite budget.
#[derive(Debug, Clone)]
pub struct FixedState {
    state: DensityMatrix,
    limit: Option<u64>,
    consumed: u64,
}

impl FixedState {
    pub fn new(state: DensityMatrix) -> Self {
        Self {
            state,
            limit: None,
            consumed: 0,
        }
    }

    pub fn with_limit(mut self, limit: u64) -> Self {
        self.limit = Some(limit);
        self
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.state
    }

    pub fn remaining(&self) -> Option<u64> {
        self.limit.map(|l| l - self.consumed)
    }
}

impl PairSource for FixedState {
    fn next_pair(&mut self) -> Result<DensityMatrix> {
        if let Some(limit) = self.limit {
            if self.consumed >= limit {
                return Err(Error::SourceExhausted {
                    supplied: self.consumed,
                    requested: self.consumed + 1,
                });
            }
        }
        self.consumed += 1;
        Ok(self.state.clone())
    }

    fn consumed(&self) -> u64 {
        self.consumed
    }
}

/// Empirical CHSH value with its per-setting correlators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshEstimate {
    pub s_bar: f64,
    /// Means of `a·b` for settings (0,0), (1,0), (0,1), (1,1).
    pub terms: [f64; 4],
    pub n_per_setting: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome_log: Option<Vec<MeasurementOutcome>>,
}

impl ChshEstimate {
    pub fn term(&self, setting: Setting) -> f64 {
        let idx = Setting::ORDER.iter().position(|s| *s == setting).expect("valid setting");
        self.terms[idx]
    }
}

/// Runs the CHSH estimator: `n` pairs per setting, settings in the fixed
/// order, `4n` pairs in total.
pub fn estimate_chsh<S, R>(source: &mut S, n: u64, rng: &mut R) -> Result<ChshEstimate>
where
    S: PairSource + ?Sized,
    R: Rng + ?Sized,
{
    run_estimate(source, n, rng, false)
}

/// As [`estimate_chsh`] but keeps every outcome.
pub fn estimate_chsh_logged<S, R>(source: &mut S, n: u64, rng: &mut R) -> Result<ChshEstimate>
where
    S: PairSource + ?Sized,
    R: Rng + ?Sized,
{
    run_estimate(source, n, rng, true)
}

fn run_estimate<S, R>(source: &mut S, n: u64, rng: &mut R, log: bool) -> Result<ChshEstimate>
where
    S: PairSource + ?Sized,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(Error::OutOfRange {
            name: "n",
            value: 0.0,
            expected: ">= 1",
        });
    }
    let observables = standard_observables();
    let mut outcome_log = log.then(|| Vec::with_capacity((4 * n) as usize));
    let mut terms = [0.0; 4];
    let start = source.consumed();
    for (term, setting) in terms.iter_mut().zip(Setting::ORDER) {
        let measurement = JointMeasurement::standard(&observables, setting);
        let mut sum: i64 = 0;
        for _ in 0..n {
            let rho = source.next_pair().map_err(|e| match e {
                Error::SourceExhausted { .. } => Error::SourceExhausted {
                    supplied: source.consumed() - start,
                    requested: 4 * n,
                },
                other => other,
            })?;
            let outcome = measurement.sample(&rho, rng)?;
            sum += i64::from(outcome.product());
            if let Some(log) = outcome_log.as_mut() {
                log.push(outcome);
            }
        }
        *term = sum as f64 / n as f64;
    }
    let s_bar = Setting::ORDER
        .iter()
        .zip(terms)
        .map(|(s, t)| s.chsh_sign() * t)
        .sum();
    Ok(ChshEstimate {
        s_bar,
        terms,
        n_per_setting: n,
        outcome_log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AcceptH0,
    RejectH1,
}

impl Decision {
    pub fn accepted(self) -> bool {
        self == Decision::AcceptH0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ev,
    Pev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "lowercase")]
pub enum ProtocolParams {
    Ev { alpha: f64, delta: f64, plan: SamplePlan },
    Pev { alpha: f64, n: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub decision: Decision,
    pub threshold: f64,
    pub estimate: ChshEstimate,
    pub protocol: Protocol,
    pub params: ProtocolParams,
}

/// `2√2 − 5√2·α`, separating `F ≥ 1−α` from `F ≤ 1−3α`.
pub fn ev_threshold(alpha: f64) -> f64 {
    TSIRELSON_BOUND - 5.0 * SQRT_2 * alpha
}

/// `2√2 − (5√2/3)·α`.
pub fn pev_threshold(alpha: f64) -> f64 {
    TSIRELSON_BOUND - 5.0 * SQRT_2 / 3.0 * alpha
}

fn decide(s_bar: f64, threshold: f64) -> Decision {
    if s_bar >= threshold {
        Decision::AcceptH0
    } else {
        Decision::RejectH1
    }
}

/// Gapped test of `H0: F ≥ 1−α` against `H1: F ≤ 1−3α` at error ≤ δ.
pub fn verify_ev<S, R>(source: &mut S, alpha: f64, delta: f64, rng: &mut R) -> Result<VerificationOutcome>
where
    S: PairSource + ?Sized,
    R: Rng + ?Sized,
{
    let plan = ev_sample_size(alpha, delta)?;
    let estimate = estimate_chsh(source, plan.n_per_setting, rng)?;
    let threshold = ev_threshold(alpha);
    Ok(VerificationOutcome {
        decision: decide(estimate.s_bar, threshold),
        threshold,
        estimate,
        protocol: Protocol::Ev,
        params: ProtocolParams::Ev { alpha, delta, plan },
    })
}

/// Gap-free test of `H0: F ≥ 1−α` against `H1: F < 1−α` on `4n` pairs.
pub fn verify_pev<S, R>(source: &mut S, n: u64, alpha: f64, rng: &mut R) -> Result<VerificationOutcome>
where
    S: PairSource + ?Sized,
    R: Rng + ?Sized,
{
    check_range("alpha", alpha, alpha > 0.0 && alpha < 1.0, "(0, 1)")?;
    let estimate = estimate_chsh(source, n, rng)?;
    let threshold = pev_threshold(alpha);
    Ok(VerificationOutcome {
        decision: decide(estimate.s_bar, threshold),
        threshold,
        estimate,
        protocol: Protocol::Pev,
        params: ProtocolParams::Pev { alpha, n },
    })
}

/// Both closed-form bounds on the gapped test's error probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBounds {
    pub chebyshev: f64,
    pub hoeffding: f64,
}

impl ErrorBounds {
    pub fn best(&self) -> f64 {
        self.chebyshev.min(self.hoeffding)
    }
}

pub fn ev_error_bounds(n: u64, alpha: f64) -> Result<ErrorBounds> {
    check_range("alpha", alpha, alpha > 0.0 && alpha < 1.0 / 3.0, "(0, 1/3)")?;
    if n == 0 {
        return Err(Error::OutOfRange {
            name: "n",
            value: 0.0,
            expected: ">= 1",
        });
    }
    let x = n as f64 * alpha * alpha;
    let chebyshev = (3.0 / x).clamp(0.0, 1.0);
    let per_term = (1.0 - 2.0 * (-x / 16.0).exp()).max(0.0);
    let hoeffding = (2.0 * (1.0 - per_term.powi(4))).clamp(0.0, 1.0);
    Ok(ErrorBounds { chebyshev, hoeffding })
}

/// Smaller of the two error bounds for `n` copies per setting.
pub fn ev_error_bound(n: u64, alpha: f64) -> Result<f64> {
    ev_error_bounds(n, alpha).map(|b| b.best())
}
