//! Two-qubit states, the fixed CHSH measurement settings, depolarizing noise
//! and Born-rule sampling.
//!
//! Qubit ordering is Alice first: basis index `2a + b` for Alice bit `a` and
//! Bob bit `b`. Every operator and partial trace in the crate follows it.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::fmt;

use nalgebra::{Cholesky, Matrix2, Matrix4, SMatrix, SymmetricEigen, Vector4};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};

pub type Mat2 = Matrix2<Complex64>;
pub type Mat4 = Matrix4<Complex64>;
pub type Ket4 = Vector4<Complex64>;

/// The quantum (Tsirelson) maximum of the CHSH value, `2√2`.
pub const TSIRELSON_BOUND: f64 = 2.0 * SQRT_2;

/// Slack for exact-algebra identities (Hermiticity, trace).
pub const EXACT_TOL: f64 = 1e-12;
/// Slack on the smallest eigenvalue before a matrix stops counting as PSD.
pub const PSD_TOL: f64 = 1e-10;
/// Largest negative Born probability that is silently clamped to zero.
pub const PROB_CLAMP_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn max_abs_diff4(a: &Mat4, b: &Mat4) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn max_abs_diff2(a: &Mat2, b: &Mat2) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `Tr[a · b]` without forming the product.
pub(crate) fn trace_of_product4(a: &Mat4, b: &Mat4) -> Complex64 {
    let mut acc = ZERO;
    for i in 0..4 {
        for j in 0..4 {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub(crate) fn trace_of_product2(a: &Mat2, b: &Mat2) -> Complex64 {
    a[(0, 0)] * b[(0, 0)] + a[(0, 1)] * b[(1, 0)] + a[(1, 0)] * b[(0, 1)] + a[(1, 1)] * b[(1, 1)]
}

/// Which side of the shared pair an operation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
}

/// A validated two-qubit density operator.
#[derive(Clone, PartialEq)]
pub struct DensityMatrix {
    entries: Mat4,
}

impl fmt::Debug for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityMatrix")
            .field("fidelity", &entanglement_fidelity(self))
            .field("entries", &self.entries)
            .finish()
    }
}

impl DensityMatrix {
    /// Checks Hermiticity, unit trace and positivity before wrapping `entries`.
    pub fn new(entries: Mat4) -> Result<Self> {
        validate_density(&entries)?;
        Ok(Self { entries })
    }

    /// `|ψ⟩⟨ψ|` for a nonzero ket; the ket is normalised first.
    pub fn from_ket(ket: &Ket4) -> Result<Self> {
        let norm = ket.norm();
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite ket".into()));
        }
        let ket = ket / real(norm);
        Self::new(ket * ket.adjoint())
    }

    pub fn bell(state: BellState) -> Self {
        Self {
            entries: state.projector(),
        }
    }

    pub fn maximally_mixed() -> Self {
        Self {
            entries: Mat4::identity() * real(0.25),
        }
    }

    /// `w |Φ⁺⟩⟨Φ⁺| + (1 − w) I/4` for `w ∈ [−1/3, 1]`.
    pub fn werner(w: f64) -> Result<Self> {
        check_range("w", w, (-1.0 / 3.0..=1.0).contains(&w), "[-1/3, 1]")?;
        let m = BellState::PhiPlus.projector() * real(w) + Mat4::identity() * real((1.0 - w) / 4.0);
        Self::new(m)
    }

    /// The Werner state whose entanglement fidelity is `fidelity`.
    pub fn werner_with_fidelity(fidelity: f64) -> Result<Self> {
        check_range("fidelity", fidelity, (0.0..=1.0).contains(&fidelity), "[0, 1]")?;
        Self::werner((4.0 * fidelity - 1.0) / 3.0)
    }

    /// `λ·self + (1 − λ)·other`.
    pub fn mix(&self, other: &Self, lambda: f64) -> Result<Self> {
        check_range("lambda", lambda, (0.0..=1.0).contains(&lambda), "[0, 1]")?;
        Self::new(self.entries * real(lambda) + other.entries * real(1.0 - lambda))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.entries
    }

    /// Smallest eigenvalue of the Hermitian matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.entries)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `Tr[ρ · op]`.
    pub fn expectation(&self, op: &Mat4) -> Complex64 {
        trace_of_product4(&self.entries, op)
    }

    /// `⟨ψ|ρ|ψ⟩` for a unit ket.
    pub fn overlap(&self, ket: &Ket4) -> f64 {
        (ket.adjoint() * self.entries * ket)[(0, 0)].re
    }

    /// The one-qubit state left on `keep` after tracing out the other side.
    pub fn reduced(&self, keep: Party) -> Mat2 {
        let m = &self.entries;
        let mut out = Mat2::zeros();
        for x in 0..2 {
            for y in 0..2 {
                out[(x, y)] = match keep {
                    Party::Alice => m[(2 * x, 2 * y)] + m[(2 * x + 1, 2 * y + 1)],
                    Party::Bob => m[(x, y)] + m[(2 + x, 2 + y)],
                };
            }
        }
        out
    }
}

/// Validates the density-operator invariants on a raw 4×4 matrix.
pub fn validate_density(m: &Mat4) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidState("non-finite entry".into()));
    }
    let herm = max_abs_diff4(m, &m.adjoint());
    if herm > EXACT_TOL {
        return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:e})")));
    }
    let tr = m.trace();
    if (tr - ONE).norm() > EXACT_TOL {
        return Err(Error::InvalidState(format!("trace {tr} is not 1")));
    }
    if !psd_with_slack(m) {
        let min = SymmetricEigen::new(*m)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        return Err(Error::InvalidState(format!(
            "not positive semidefinite (min eigenvalue {min:e})"
        )));
    }
    Ok(())
}

/// `m + PSD_TOL·I` admits a Cholesky factorisation. Done on the real
/// embedding `[[Re, −Im], [Im, Re]]`: complex square roots never fail, so a
/// complex Cholesky would not reject negative pivots.
fn psd_with_slack(m: &Mat4) -> bool {
    let mut embed = SMatrix::<f64, 8, 8>::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let z = m[(i, j)];
            embed[(i, j)] = z.re;
            embed[(i + 4, j + 4)] = z.re;
            embed[(i, j + 4)] = -z.im;
            embed[(i + 4, j)] = z.im;
        }
        embed[(i, i)] += PSD_TOL;
        embed[(i + 4, i + 4)] += PSD_TOL;
    }
    Cholesky::new(embed).is_some()
}

/// Validates a one-qubit density matrix.
pub fn validate_qubit(m: &Mat2) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidState("non-finite entry".into()));
    }
    if max_abs_diff2(m, &m.adjoint()) > EXACT_TOL {
        return Err(Error::InvalidState("qubit state not Hermitian".into()));
    }
    if (m.trace() - ONE).norm() > EXACT_TOL {
        return Err(Error::InvalidState("qubit state trace is not 1".into()));
    }
    // For Hermitian 2×2 with unit trace, PSD iff det ≥ 0.
    let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
    let min_eig = 0.5 - (0.25 - det).max(0.0).sqrt();
    if min_eig < -PSD_TOL {
        return Err(Error::InvalidState(format!(
            "qubit state not positive semidefinite (min eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

/// The Bell basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PhiMinus,
        BellState::PsiPlus,
        BellState::PsiMinus,
    ];

    pub fn ket(self) -> Ket4 {
        let h = real(FRAC_1_SQRT_2);
        match self {
            BellState::PhiPlus => Ket4::new(h, ZERO, ZERO, h),
            BellState::PhiMinus => Ket4::new(h, ZERO, ZERO, -h),
            BellState::PsiPlus => Ket4::new(ZERO, h, h, ZERO),
            BellState::PsiMinus => Ket4::new(ZERO, h, -h, ZERO),
        }
    }

    pub fn projector(self) -> Mat4 {
        let k = self.ket();
        k * k.adjoint()
    }
}

/// `|Φ⁺⟩⟨Φ⁺|`, the ideal EPR pair.
pub fn bell_state_phi_plus() -> DensityMatrix {
    DensityMatrix::bell(BellState::PhiPlus)
}

pub fn pauli_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> Mat2 {
    Mat2::new(ZERO, Complex64::new(0.0, -1.0), Complex64::new(0.0, 1.0), ZERO)
}

pub fn pauli_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// A dichotomic (±1-valued) one-qubit observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observable {
    entries: Mat2,
}

impl Observable {
    /// Accepts a Hermitian matrix that squares to the identity and is not ±I.
    pub fn new(entries: Mat2) -> Result<Self> {
        if max_abs_diff2(&entries, &entries.adjoint()) > EXACT_TOL {
            return Err(Error::InvalidObservable("not Hermitian".into()));
        }
        if max_abs_diff2(&(entries * entries), &Mat2::identity()) > EXACT_TOL {
            return Err(Error::InvalidObservable("does not square to the identity".into()));
        }
        // ±I squares to I as well but has a single eigenvalue.
        if entries.trace().norm() > EXACT_TOL {
            return Err(Error::InvalidObservable(
                "spectrum is not {+1, -1}".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.entries
    }

    /// Eigenprojector for outcome `+1` (`positive`) or `−1`.
    pub fn projector(&self, positive: bool) -> Mat2 {
        let sign = if positive { 1.0 } else { -1.0 };
        (Mat2::identity() + self.entries * real(sign)) * real(0.5)
    }

    /// Eigenvalues sorted descending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.entries).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        [ev[0], ev[1]]
    }
}

/// The four CHSH observables `A₀, A₁, B₀, B₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshObservables {
    pub a0: Observable,
    pub a1: Observable,
    pub b0: Observable,
    pub b1: Observable,
}

impl ChshObservables {
    pub fn alice(&self, i: usize) -> &Observable {
        if i == 0 {
            &self.a0
        } else {
            &self.a1
        }
    }

    pub fn bob(&self, j: usize) -> &Observable {
        if j == 0 {
            &self.b0
        } else {
            &self.b1
        }
    }
}

/// `A₀ = σx`, `A₁ = σz`, `B₀ = (σx + σz)/√2`, `B₁ = (σx − σz)/√2`.
pub fn standard_observables() -> ChshObservables {
    let x = pauli_x();
    let z = pauli_z();
    let h = real(FRAC_1_SQRT_2);
    let build = |m: Mat2| Observable::new(m).expect("standard observables are dichotomic");
    ChshObservables {
        a0: build(x),
        a1: build(z),
        b0: build((x + z) * h),
        b1: build((x - z) * h),
    }
}

pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    a.kronecker(b)
}

/// `Ŝ = A₀⊗B₀ + A₁⊗B₀ + A₀⊗B₁ − A₁⊗B₁` for the standard observables.
pub fn chsh_operator() -> Mat4 {
    let o = standard_observables();
    kron(o.a0.matrix(), o.b0.matrix()) + kron(o.a1.matrix(), o.b0.matrix())
        + kron(o.a0.matrix(), o.b1.matrix())
        - kron(o.a1.matrix(), o.b1.matrix())
}

/// `S(ρ) = Tr[Ŝρ]`.
pub fn chsh_expectation(rho: &DensityMatrix) -> f64 {
    let s = rho.expectation(&chsh_operator());
    debug_assert!(s.im.abs() <= PSD_TOL, "imaginary CHSH residue {}", s.im);
    s.re
}

/// `F(ρ) = ⟨Φ⁺|ρ|Φ⁺⟩`.
pub fn entanglement_fidelity(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    // Only the four corner entries contribute for |Φ⁺⟩.
    let f = 0.5 * (m[(0, 0)] + m[(0, 3)] + m[(3, 0)] + m[(3, 3)]).re;
    f.clamp(0.0, 1.0)
}

/// Depolarizes one side of the pair: `(1 − p)ρ + p · (Tr_which ρ) ⊗ I/2`.
pub fn depolarize_one_qubit(rho: &DensityMatrix, which: Party, p: f64) -> Result<DensityMatrix> {
    check_range("p", p, (0.0..=1.0).contains(&p), "[0, 1]")?;
    if p == 0.0 {
        return Ok(rho.clone());
    }
    let half_identity = Mat2::identity() * real(0.5);
    let replaced = match which {
        Party::Alice => kron(&half_identity, &rho.reduced(Party::Bob)),
        Party::Bob => kron(&rho.reduced(Party::Alice), &half_identity),
    };
    DensityMatrix::new(rho.entries * real(1.0 - p) + replaced * real(p))
}

/// A CHSH measurement setting `(i, j)`: Alice measures `A_i`, Bob `B_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Setting {
    pub alice: u8,
    pub bob: u8,
}

impl Setting {
    /// The fixed processing order `(0,0), (1,0), (0,1), (1,1)`.
    pub const ORDER: [Setting; 4] = [
        Setting { alice: 0, bob: 0 },
        Setting { alice: 1, bob: 0 },
        Setting { alice: 0, bob: 1 },
        Setting { alice: 1, bob: 1 },
    ];

    pub fn new(alice: u8, bob: u8) -> Self {
        assert!(alice < 2 && bob < 2, "setting indices are 0 or 1");
        Self { alice, bob }
    }

    /// Sign of this term in the CHSH combination.
    pub fn chsh_sign(self) -> f64 {
        if self.alice == 1 && self.bob == 1 {
            -1.0
        } else {
            1.0
        }
    }
}

/// One recorded measurement round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementOutcome {
    pub a: i8,
    pub b: i8,
    pub setting: Setting,
}

impl MeasurementOutcome {
    pub fn product(&self) -> i8 {
        self.a * self.b
    }
}

/// Outcome pairs in the order used by [`JointMeasurement::probabilities`].
pub const OUTCOME_PAIRS: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Joint projective measurement `A ⊗ B`, with its four product projectors
/// precomputed.
#[derive(Debug, Clone)]
pub struct JointMeasurement {
    setting: Setting,
    projectors: [Mat4; 4],
}

impl JointMeasurement {
    pub fn new(alice: &Observable, bob: &Observable, setting: Setting) -> Self {
        let projectors = OUTCOME_PAIRS.map(|(a, b)| kron(&alice.projector(a > 0), &bob.projector(b > 0)));
        Self {
            setting,
            projectors,
        }
    }

    /// The measurement for a standard CHSH setting.
    pub fn standard(observables: &ChshObservables, setting: Setting) -> Self {
        Self::new(
            observables.alice(setting.alice as usize),
            observables.bob(setting.bob as usize),
            setting,
        )
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    /// Born probabilities for `OUTCOME_PAIRS`, clamped and renormalised.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Result<[f64; 4]> {
        let mut probs = [0.0; 4];
        for (p, proj) in probs.iter_mut().zip(&self.projectors) {
            let v = rho.expectation(proj).re;
            if v < -PROB_CLAMP_TOL || !v.is_finite() {
                return Err(Error::Measurement(format!("outcome probability {v:e}")));
            }
            *p = v.max(0.0);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Measurement(format!("probabilities sum to {total}")));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(probs)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rho: &DensityMatrix, rng: &mut R) -> Result<MeasurementOutcome> {
        let probs = self.probabilities(rho)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = 3;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = k;
                break;
            }
        }
        let (a, b) = OUTCOME_PAIRS[pick];
        Ok(MeasurementOutcome {
            a,
            b,
            setting: self.setting,
        })
    }
}

/// Samples one joint outcome of `A_i ⊗ B_j` on `rho`.
pub fn sample_joint_outcome<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    alice: &Observable,
    bob: &Observable,
    setting: Setting,
    rng: &mut R,
) -> Result<MeasurementOutcome> {
    JointMeasurement::new(alice, bob, setting).sample(rho, rng)
}

/// `Tr[ρ (A ⊗ B)]`, the exact correlator.
pub fn correlator(rho: &DensityMatrix, alice: &Observable, bob: &Observable) -> f64 {
    rho.expectation(&kron(alice.matrix(), bob.matrix())).re
}
