mod common;

use chsh_verify::quantum::{entanglement_fidelity, validate_qubit, DensityMatrix, Mat2};
use chsh_verify::teleport::{pauli_eigenstates, teleport_report_with_budget, teleport_through, InputQubit};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input<R: Rng>(rng: &mut R) -> InputQubit {
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let pure = InputQubit::bloch(theta, phi).unwrap();
    let lambda: f64 = rng.random_range(0.0..1.0);
    let half = Mat2::identity() * Complex64::new(0.5, 0.0);
    InputQubit::new(pure.matrix() * Complex64::new(lambda, 0.0) + half * Complex64::new(1.0 - lambda, 0.0)).unwrap()
}

fn max_diff(a: &Mat2, b: &Mat2) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn output_is_a_valid_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..500 {
        let rho = common::ginibre_state(&mut rng);
        let sigma = random_input(&mut rng);
        let out = teleport_through(&rho, &sigma).unwrap();
        validate_qubit(&out).unwrap();
        assert!((out.trace().re - 1.0).abs() < 1e-12);
    }
}

#[test]
fn channel_is_linear_in_resource() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (x, y) = (common::ginibre_state(&mut rng), common::ginibre_state(&mut rng));
        let lambda = rng.random_range(0.0..1.0);
        let sigma = random_input(&mut rng);
        let mixed = teleport_through(&x.mix(&y, lambda).unwrap(), &sigma).unwrap();
        let l = Complex64::new(lambda, 0.0);
        let expected = teleport_through(&x, &sigma).unwrap() * l
            + teleport_through(&y, &sigma).unwrap() * (Complex64::new(1.0, 0.0) - l);
        assert!(max_diff(&mixed, &expected) < 1e-12);
    }
}

#[test]
fn average_fidelity_matches_entanglement_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let rho = common::ginibre_state(&mut rng);
        let report = teleport_report_with_budget(std::slice::from_ref(&rho), &pauli_eigenstates(), None).unwrap();
        let f = entanglement_fidelity(&rho);
        assert!((report.average_fidelity - (2.0 * f + 1.0) / 3.0).abs() < 1e-10);
    }
}

#[test]
fn full_budget_covers_every_combination() {
    let pairs: Vec<DensityMatrix> = [0.5, 0.7, 0.9].iter().map(|&w| DensityMatrix::werner(w).unwrap()).collect();
    let report = teleport_report_with_budget(&pairs, &pauli_eigenstates(), None).unwrap();
    assert_eq!(report.per_input_fidelity.len(), 18);
    let mean_f = pairs.iter().map(entanglement_fidelity).sum::<f64>() / 3.0;
    assert!((report.average_fidelity - (2.0 * mean_f + 1.0) / 3.0).abs() < 1e-12);
}
