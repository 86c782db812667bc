//! Closed-form analytics on the CHSH value: fidelity bounds, confidence
//! intervals and sample-size planning.

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::quantum::TSIRELSON_BOUND;

const FOUR_SQRT_2: f64 = 2.0 * TSIRELSON_BOUND;

/// Slack allowed on `|s| ≤ 2√2` before a CHSH value is rejected.
pub const TSIRELSON_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityBounds {
    pub lower: f64,
    pub upper: f64,
    pub s_value: f64,
}

/// Fidelity range implied by an exact CHSH value:
/// `s/(2√2) ≤ F ≤ s/(4√2) + 1/2`, clamped to `[0, 1]`.
pub fn fidelity_bounds_exact(s: f64) -> Result<FidelityBounds> {
    check_range(
        "s",
        s,
        s.abs() <= TSIRELSON_BOUND + TSIRELSON_SLACK,
        "|s| <= 2√2",
    )?;
    let lower = (s / TSIRELSON_BOUND).clamp(0.0, 1.0);
    let upper = (s / FOUR_SQRT_2 + 0.5).clamp(0.0, 1.0);
    Ok(FidelityBounds {
        lower,
        upper,
        s_value: s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub confidence: f64,
}

/// Fidelity interval from an estimate `s_bar` that is within `epsilon` of the
/// true CHSH value with probability `1 − delta`.
///
/// `epsilon = 0` is accepted as the zero-width limit.
pub fn fidelity_interval_from_estimate(s_bar: f64, epsilon: f64, delta: f64) -> Result<ConfidenceInterval> {
    check_range("s_bar", s_bar, s_bar.is_finite() && s_bar.abs() <= 4.0, "[-4, 4]")?;
    check_range(
        "epsilon",
        epsilon,
        (0.0..TSIRELSON_BOUND).contains(&epsilon),
        "[0, 2√2)",
    )?;
    check_range("delta", delta, delta > 0.0 && delta < 1.0, "(0, 1)")?;
    let lo = ((s_bar - epsilon) / TSIRELSON_BOUND).clamp(0.0, 1.0);
    let hi = ((s_bar + epsilon) / FOUR_SQRT_2 + 0.5).min(1.0).max(lo);
    Ok(ConfidenceInterval {
        lo,
        hi,
        confidence: 1.0 - delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Chebyshev,
    Hoeffding,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Chebyshev => "chebyshev",
            Method::Hoeffding => "hoeffding",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "chebyshev" => Ok(Method::Chebyshev),
            "hoeffding" => Ok(Method::Hoeffding),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// Number of copies per measurement setting, plus how it was derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub method: Method,
    pub n_per_setting: u64,
    pub total: u64,
    pub epsilon: f64,
    pub delta: f64,
}

impl SamplePlan {
    fn new(method: Method, bound: f64, epsilon: f64, delta: f64) -> Self {
        let n = ceil_count(bound);
        Self {
            method,
            n_per_setting: n,
            total: 4 * n,
            epsilon,
            delta,
        }
    }
}

/// Ceiling of a real-valued sufficiency bound.
///
/// Values within 1e-9 (relative) of an integer round to it, so 3/(δε²) at
/// δ = ε = 0.05 yields 24000 rather than 24001 after floating-point error.
pub fn ceil_count(x: f64) -> u64 {
    let nearest = x.round();
    let n = if (x - nearest).abs() <= 1e-9 * x.abs().max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    n.max(1.0) as u64
}

fn check_epsilon_delta(epsilon: f64, delta: f64) -> Result<()> {
    check_range(
        "epsilon",
        epsilon,
        epsilon > 0.0 && epsilon < TSIRELSON_BOUND,
        "(0, 2√2)",
    )?;
    check_range("delta", delta, delta > 0.0 && delta < 1.0, "(0, 1)")
}

/// Real-valued Chebyshev bound `c/(δε²)` with `c = 3` under the nonlocality
/// assumption `S ≥ 2`, else `c = 4`.
pub fn chebyshev_bound(epsilon: f64, delta: f64, assume_nonlocal: bool) -> f64 {
    let c = if assume_nonlocal { 3.0 } else { 4.0 };
    c / (delta * epsilon * epsilon)
}

/// Real-valued Hoeffding bound `(32/ε²)·ln(2/(1 − (1−δ)^{1/4}))`.
pub fn hoeffding_bound(epsilon: f64, delta: f64) -> f64 {
    // 1 − (1−δ)^{1/4} computed via expm1 to keep precision at small δ.
    let tail = -((0.25 * (-delta).ln_1p()).exp_m1());
    32.0 / (epsilon * epsilon) * (2.0 / tail).ln()
}

pub fn sample_size_chebyshev(epsilon: f64, delta: f64, assume_nonlocal: bool) -> Result<SamplePlan> {
    check_epsilon_delta(epsilon, delta)?;
    Ok(SamplePlan::new(
        Method::Chebyshev,
        chebyshev_bound(epsilon, delta, assume_nonlocal),
        epsilon,
        delta,
    ))
}

pub fn sample_size_hoeffding(epsilon: f64, delta: f64) -> Result<SamplePlan> {
    check_epsilon_delta(epsilon, delta)?;
    Ok(SamplePlan::new(
        Method::Hoeffding,
        hoeffding_bound(epsilon, delta),
        epsilon,
        delta,
    ))
}

/// The smaller of the Chebyshev (nonlocal) and Hoeffding plans; ties go to
/// Chebyshev.
pub fn sample_size_optimal(epsilon: f64, delta: f64) -> Result<SamplePlan> {
    let cheb = sample_size_chebyshev(epsilon, delta, true)?;
    let hoef = sample_size_hoeffding(epsilon, delta)?;
    Ok(if hoef.n_per_setting < cheb.n_per_setting {
        hoef
    } else {
        cheb
    })
}

/// Sample size for the gapped verification test:
/// `min{3/(δα²), (16/α²)·ln(2/(1 − (1−δ/2)^{1/4}))}`.
pub fn ev_sample_size(alpha: f64, delta: f64) -> Result<SamplePlan> {
    check_range("alpha", alpha, alpha > 0.0 && alpha < 1.0 / 3.0, "(0, 1/3)")?;
    check_range("delta", delta, delta > 0.0 && delta < 1.0, "(0, 1)")?;
    let cheb = 3.0 / (delta * alpha * alpha);
    // The Hoeffding branch equals the estimation bound at ε = √2·α, δ/2.
    let hoef = hoeffding_bound(std::f64::consts::SQRT_2 * alpha, delta / 2.0);
    let plan_cheb = SamplePlan::new(Method::Chebyshev, cheb, alpha, delta);
    let plan_hoef = SamplePlan::new(Method::Hoeffding, hoef, alpha, delta);
    Ok(if plan_hoef.n_per_setting < plan_cheb.n_per_setting {
        plan_hoef
    } else {
        plan_cheb
    })
}

/// The δ at which the Chebyshev and Hoeffding plans for `epsilon` cost the
/// same, found by bisection to 1e-8. Below it Hoeffding is cheaper.
pub fn crossover_delta(epsilon: f64) -> Result<f64> {
    check_range(
        "epsilon",
        epsilon,
        epsilon > 0.0 && epsilon < TSIRELSON_BOUND,
        "(0, 2√2)",
    )?;
    // ε² cancels, so the root is independent of ε; g < 0 where Hoeffding wins.
    let g = |d: f64| hoeffding_bound(epsilon, d) - chebyshev_bound(epsilon, d, true);
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
    if g(lo) >= 0.0 || g(hi) <= 0.0 {
        return Err(Error::EmptyInput("no Chebyshev/Hoeffding crossover in (0, 1)"));
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
