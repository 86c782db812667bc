//! Standard one-qubit teleportation through a (noisy) stored pair, computed
//! exactly as a sum over the four Bell-measurement branches.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantum::{
    entanglement_fidelity, pauli_x, pauli_z, trace_of_product2, validate_qubit, BellState, DensityMatrix, Mat2,
};
use num_complex::Complex64;

/// Combinations evaluated by [`teleport_report`] before it switches to an
/// evenly strided subset of the pairs.
pub const DEFAULT_MIN_COMBINATIONS: usize = 1_000;

/// A validated one-qubit state to be teleported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputQubit {
    entries: Mat2,
}

impl InputQubit {
    pub fn new(entries: Mat2) -> Result<Self> {
        validate_qubit(&entries)?;
        Ok(Self { entries })
    }

    /// `|ψ⟩⟨ψ|` for `|ψ⟩ = α|0⟩ + β|1⟩`, normalised.
    pub fn pure(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState("zero qubit ket".into()));
        }
        let (a, b) = (alpha / norm, beta / norm);
        Self::new(Mat2::new(
            a * a.conj(),
            a * b.conj(),
            b * a.conj(),
            b * b.conj(),
        ))
    }

    /// Point on the Bloch sphere, polar angle `theta`, azimuth `phi`.
    pub fn bloch(theta: f64, phi: f64) -> Result<Self> {
        Self::pure(
            Complex64::new((theta / 2.0).cos(), 0.0),
            Complex64::from_polar((theta / 2.0).sin(), phi),
        )
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.entries
    }

    pub fn is_pure(&self) -> bool {
        determinant(&self.entries).abs() < 1e-12
    }
}

/// `|0⟩, |1⟩, |+⟩, |−⟩, |+i⟩, |−i⟩`, uniformly weighted for average fidelity.
pub fn pauli_eigenstates() -> [InputQubit; 6] {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let build = |a, b| InputQubit::pure(a, b).expect("nonzero ket");
    [
        build(c(1.0, 0.0), c(0.0, 0.0)),
        build(c(0.0, 0.0), c(1.0, 0.0)),
        build(c(1.0, 0.0), c(1.0, 0.0)),
        build(c(1.0, 0.0), c(-1.0, 0.0)),
        build(c(1.0, 0.0), c(0.0, 1.0)),
        build(c(1.0, 0.0), c(0.0, -1.0)),
    ]
}

fn determinant(m: &Mat2) -> f64 {
    (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re
}

/// Uhlmann fidelity `(Tr√(√σ τ √σ))²` between one-qubit states, via the
/// closed form `Tr[στ] + 2√(det σ · det τ)`.
pub fn qubit_fidelity(sigma: &Mat2, tau: &Mat2) -> f64 {
    let overlap = trace_of_product2(sigma, tau).re;
    let dets = determinant(sigma).max(0.0) * determinant(tau).max(0.0);
    (overlap + 2.0 * dets.sqrt()).clamp(0.0, 1.0)
}

fn correction(outcome: BellState) -> Mat2 {
    match outcome {
        BellState::PhiPlus => Mat2::identity(),
        BellState::PhiMinus => pauli_z(),
        BellState::PsiPlus => pauli_x(),
        BellState::PsiMinus => pauli_z() * pauli_x(),
    }
}

/// Output of teleporting `sigma` with resource `rho`: Alice measures
/// (input, her half) in the Bell basis, Bob applies the matching Pauli
/// correction, branches are summed.
pub fn teleport_through(rho: &DensityMatrix, sigma: &InputQubit) -> Result<Mat2> {
    let r = rho.matrix();
    let s = sigma.matrix();
    let mut out = Mat2::zeros();
    for outcome in BellState::ALL {
        let ket = outcome.ket();
        // Bob's unnormalised conditional state for this branch.
        let mut branch = Mat2::zeros();
        for b in 0..2 {
            for bp in 0..2 {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..2 {
                    for a in 0..2 {
                        let left = ket[2 * c + a].conj();
                        if left == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        for cp in 0..2 {
                            for ap in 0..2 {
                                let right = ket[2 * cp + ap];
                                acc += left * s[(c, cp)] * r[(2 * a + b, 2 * ap + bp)] * right;
                            }
                        }
                    }
                }
                branch[(b, bp)] = acc;
            }
        }
        let u = correction(outcome);
        out += u * branch * u.adjoint();
    }
    validate_qubit(&out)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TeleportSample {
    pub pair_index: usize,
    pub input_index: usize,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeleportReport {
    pub per_input_fidelity: Vec<TeleportSample>,
    pub average_fidelity: f64,
    /// Mean `F(ρ)` over every supplied pair.
    pub channel_entanglement_fidelity: f64,
}

/// Teleports each input through the pairs and averages the output fidelity.
/// Large batches use an evenly strided subset of pairs giving at least
/// [`DEFAULT_MIN_COMBINATIONS`] combinations.
pub fn teleport_report(pairs: &[DensityMatrix], inputs: &[InputQubit]) -> Result<TeleportReport> {
    teleport_report_with_budget(pairs, inputs, Some(DEFAULT_MIN_COMBINATIONS))
}

/// As [`teleport_report`]; `None` evaluates every combination.
pub fn teleport_report_with_budget(
    pairs: &[DensityMatrix],
    inputs: &[InputQubit],
    min_combinations: Option<usize>,
) -> Result<TeleportReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("teleport report needs at least one pair"));
    }
    if inputs.is_empty() {
        return Err(Error::EmptyInput("teleport report needs at least one input state"));
    }
    let used = match min_combinations {
        Some(min) => min.div_ceil(inputs.len()).clamp(1, pairs.len()),
        None => pairs.len(),
    };
    let mut samples = Vec::with_capacity(used * inputs.len());
    for k in 0..used {
        // Evenly spaced, always including index 0.
        let pair_index = k * pairs.len() / used;
        for (input_index, sigma) in inputs.iter().enumerate() {
            let out = teleport_through(&pairs[pair_index], sigma)?;
            samples.push(TeleportSample {
                pair_index,
                input_index,
                fidelity: qubit_fidelity(sigma.matrix(), &out),
            });
        }
    }
    let average_fidelity = samples.iter().map(|s| s.fidelity).sum::<f64>() / samples.len() as f64;
    let channel_entanglement_fidelity =
        pairs.iter().map(entanglement_fidelity).sum::<f64>() / pairs.len() as f64;
    Ok(TeleportReport {
        per_input_fidelity: samples,
        average_fidelity,
        channel_entanglement_fidelity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::bell_state_phi_plus;

    fn max_diff(a: &Mat2, b: &Mat2) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn perfect_resource_is_identity_channel() {
        let phi = bell_state_phi_plus();
        for sigma in pauli_eigenstates() {
            let out = teleport_through(&phi, &sigma).unwrap();
            assert!(max_diff(&out, sigma.matrix()) < 1e-12);
        }
        let sigma = InputQubit::bloch(1.1, 0.4).unwrap();
        assert!(max_diff(&teleport_through(&phi, &sigma).unwrap(), sigma.matrix()) < 1e-12);
    }

    #[test]
    fn mixed_resource_gives_mixed_output() {
        let half = Mat2::identity() * Complex64::new(0.5, 0.0);
        for sigma in pauli_eigenstates() {
            let out = teleport_through(&DensityMatrix::maximally_mixed(), &sigma).unwrap();
            assert!(max_diff(&out, &half) < 1e-12);
        }
    }

    #[test]
    fn werner_average_fidelity_closed_form() {
        for w in [0.2, 0.5, 0.8, 0.95] {
            let rho = DensityMatrix::werner(w).unwrap();
            let f = w + (1.0 - w) / 4.0;
            let report = teleport_report(&[rho], &pauli_eigenstates()).unwrap();
            assert!((report.average_fidelity - (2.0 * f + 1.0) / 3.0).abs() < 1e-12);
            assert!((report.channel_entanglement_fidelity - f).abs() < 1e-12);
        }
    }

    #[test]
    fn single_input_through_werner() {
        let rho = DensityMatrix::werner(0.8).unwrap();
        let zero = pauli_eigenstates()[0];
        let report = teleport_report(&[rho], &[zero]).unwrap();
        assert_eq!(report.per_input_fidelity.len(), 1);
        assert!(report.average_fidelity >= 0.85);
    }

    #[test]
    fn qubit_fidelity_mixed_states() {
        let half = Mat2::identity() * Complex64::new(0.5, 0.0);
        assert!((qubit_fidelity(&half, &half) - 1.0).abs() < 1e-12);
        let zero = pauli_eigenstates()[0];
        assert!((qubit_fidelity(zero.matrix(), &half) - 0.5).abs() < 1e-12);
        assert!(zero.is_pure());
    }

    #[test]
    fn report_subsamples_large_batches() {
        let pairs = vec![bell_state_phi_plus(); 5000];
        let report = teleport_report(&pairs, &pauli_eigenstates()).unwrap();
        assert!(report.per_input_fidelity.len() >= DEFAULT_MIN_COMBINATIONS);
        assert!(report.per_input_fidelity.len() < 5000 * 6);
        assert!(report.per_input_fidelity.iter().all(|s| (s.fidelity - 1.0).abs() < 1e-12));
        assert!(teleport_report(&[], &pauli_eigenstates()).is_err());
        assert!(teleport_report(&pairs, &[]).is_err());
    }
}
