//! Acceptance checks, one PASS/FAIL line each. Exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use chsh_verify::harness::{
    run_repetitions, run_once, run_sweep, spearman, Backend, ExperimentSpec, RunMetrics, Sweep,
    SweepParam,
};
use chsh_verify::protocols::{estimate_chsh, verify_ev, FixedState};
use chsh_verify::quantum::{
    bell_state_phi_plus, chsh_expectation, depolarize_one_qubit, entanglement_fidelity, DensityMatrix, Mat4, Party,
    TSIRELSON_BOUND,
};
use chsh_verify::stats::{
    crossover_delta, ev_sample_size, fidelity_bounds_exact, fidelity_interval_from_estimate, sample_size_chebyshev,
    sample_size_optimal,
};
use chsh_verify::teleport::{pauli_eigenstates, teleport_report_with_budget};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Check {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(id: u32, name: &'static str, f: impl FnOnce() -> (bool, String)) -> Check {
    let start = Instant::now();
    let (pass, detail) = f();
    let detail = format!("{detail} [{:.1}s]", start.elapsed().as_secs_f64());
    let line = Check { id, name, pass, detail };
    println!(
        "{} {:>2} {}: {}",
        if line.pass { "PASS" } else { "FAIL" },
        line.id,
        line.name,
        line.detail
    );
    line
}

fn ginibre_state<R: Rng>(rng: &mut R) -> DensityMatrix {
    let g = Mat4::from_fn(|_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let p = g * g.adjoint();
    let m = p / Complex64::new(p.trace().re, 0.0);
    DensityMatrix::new((m + m.adjoint()) * Complex64::new(0.5, 0.0)).expect("Gram matrix is a state")
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn sample_plans() -> (bool, String) {
    let a = sample_size_optimal(0.05, 0.05).unwrap();
    let b = sample_size_optimal(0.05, 0.01).unwrap();
    let cheb = sample_size_chebyshev(0.05, 0.05, true).unwrap();
    let pass = a.n_per_setting == 24_000 && cheb.n_per_setting == 24_000 && (85_400..=85_600).contains(&b.n_per_setting);
    (pass, format!("plan(0.05,0.05)={} plan(0.05,0.01)={}", a.n_per_setting, b.n_per_setting))
}

fn crossover() -> (bool, String) {
    let d = crossover_delta(0.05).unwrap();
    (d > 0.0149 && d < 0.0150, format!("delta*={d:.7}"))
}

fn interval() -> (bool, String) {
    let ci = fidelity_interval_from_estimate(TSIRELSON_BOUND - 0.03, 0.05, 0.05).unwrap();
    let pass = (ci.lo - 0.9717).abs() <= 5e-4 && ci.hi == 1.0;
    (pass, format!("[{:.6}, {}]", ci.lo, ci.hi))
}

fn sandwich() -> (bool, String) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..10_000 {
        let rho = ginibre_state(&mut rng);
        let b = fidelity_bounds_exact(chsh_expectation(&rho)).unwrap();
        let f = entanglement_fidelity(&rho);
        if f < b.lower - 1e-10 || f > b.upper + 1e-10 {
            violations += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (violations == 0 && secs < 5.0, format!("10000 states, {violations} violations"))
}

fn concentration() -> (bool, String) {
    let start = Instant::now();
    let n = 100_000u64;
    let ceiling = TSIRELSON_BOUND + 5.0 / (n as f64).sqrt();
    let (mut inside, mut above, mut worst) = (0, 0, 0.0f64);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut source = FixedState::new(bell_state_phi_plus());
        let s = estimate_chsh(&mut source, n, &mut rng).unwrap().s_bar;
        if (s - TSIRELSON_BOUND).abs() <= 0.02 {
            inside += 1;
        }
        if s > ceiling {
            above += 1;
        }
        worst = worst.max((s - TSIRELSON_BOUND).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = inside >= 99 && above == 0 && secs < 30.0;
    (pass, format!("{inside}/100 within 0.02, {above} above ceiling, max dev {worst:.4}"))
}

fn ev_guarantee() -> (bool, String) {
    let (alpha, delta, runs) = (0.1, 0.1, 500usize);
    let n = ev_sample_size(alpha, delta).unwrap().n_per_setting;
    let mut errors = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (fidelity, h0) in [(0.95, true), (0.70, false)] {
        let mut source = FixedState::new(DensityMatrix::werner_with_fidelity(fidelity).unwrap());
        for _ in 0..runs {
            let accepted = verify_ev(&mut source, alpha, delta, &mut rng).unwrap().decision.accepted();
            if accepted != h0 {
                errors += 1;
            }
        }
    }
    let total = 2 * runs;
    let rate = errors as f64 / total as f64;
    let limit = delta + 3.0 * binomial_se(delta, total);
    (rate <= limit, format!("N={n}/setting, error rate {rate:.4} <= {limit:.4}"))
}

fn baseline(metrics: &RunMetrics) -> (bool, String) {
    let f = metrics.mean_remaining_fidelity;
    let pass = (0.96..=0.98).contains(&f) && metrics.success_rate >= 0.9;
    (
        pass,
        format!(
            "remaining F {f:.4}, success {:.3} (fpr {:.3}, fnr {:.3}) over {} reps",
            metrics.success_rate, metrics.fpr, metrics.fnr, metrics.repetitions
        ),
    )
}

fn sweep_series(param: SweepParam) -> (Vec<f64>, Vec<f64>) {
    let spec = ExperimentSpec {
        sweep: Some(Sweep {
            param,
            values: param.default_grid(),
        }),
        ..ExperimentSpec::default()
    };
    let points = run_sweep(&spec).unwrap();
    points.iter().map(|p| (p.value, p.metrics.success_rate)).unzip()
}

fn trends() -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for (param, sign) in [
        (SweepParam::Beta, 1.0),
        (SweepParam::Distance, -1.0),
        (SweepParam::DepolarRate, -1.0),
        (SweepParam::Alpha, 1.0),
    ] {
        let (xs, ys) = sweep_series(param);
        let rho = spearman(&xs, &ys);
        pass &= rho * sign > 0.0;
        parts.push(format!("{} rho={rho:+.3}", param.name()));
        if param == SweepParam::Distance {
            let near: Vec<f64> = xs.iter().zip(&ys).filter(|(x, _)| **x <= 1.0).map(|(_, y)| *y).collect();
            let min = near.iter().copied().fold(1.0, f64::min);
            pass &= min >= 0.97;
            parts.push(format!("min success at L<=1km {min:.3}"));
        }
    }
    (pass, parts.join(", "))
}

fn teleport(outcomes: &[chsh_verify::harness::RunOutcome]) -> (bool, String) {
    let inputs = pauli_eigenstates();
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    let mut analytic = |rho: &DensityMatrix| {
        let r = teleport_report_with_budget(std::slice::from_ref(rho), &inputs, None).unwrap();
        let f = entanglement_fidelity(rho);
        if r.average_fidelity < f - 1e-12 {
            violations += 1;
        }
        worst = worst.max((r.average_fidelity - (2.0 * f + 1.0) / 3.0).abs());
    };
    for k in 5..=10 {
        analytic(&DensityMatrix::werner(f64::from(k) / 10.0).unwrap());
    }
    for k in 0..=20 {
        for party in [Party::Alice, Party::Bob] {
            analytic(&depolarize_one_qubit(&bell_state_phi_plus(), party, f64::from(k) / 20.0).unwrap());
        }
    }
    // Every pair of a few accepted baseline runs, evaluated individually.
    let spec = ExperimentSpec::default();
    let mut pairs_checked = 0;
    for seed in 0..3 {
        let o = run_once(&spec, seed).unwrap();
        if o.verification.decision.accepted() {
            for rho in &o.remaining_states {
                analytic(rho);
            }
            pairs_checked += o.remaining_states.len();
        }
    }
    let mut accepted = 0;
    for o in outcomes {
        if let Some(t) = o.post_teleport_fidelity {
            accepted += 1;
            if t < o.remaining_mean_fidelity {
                violations += 1;
            }
        }
    }
    let pass = violations == 0 && worst <= 1e-10 && pairs_checked > 0;
    (
        pass,
        format!("{violations} violations over {accepted} accepted runs and {pairs_checked} pairs, max |avg - (2F+1)/3| {worst:.1e}"),
    )
}

fn cli_determinism() -> (bool, String) {
    let bin = env!("CARGO_BIN_EXE_chsh-verify");
    let dir = std::env::temp_dir().join(format!("chsh-verify-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let invocations: Vec<(&str, Vec<&str>)> = vec![
        ("plan", vec!["plan", "--epsilon", "0.05", "--delta", "0.05"]),
        ("bounds", vec!["bounds", "--s-bar", "2.7", "--epsilon", "0.05", "--delta", "0.05"]),
        ("verify-pev", vec!["verify", "--n", "750", "--seed", "9"]),
        ("verify-ev", vec!["verify", "--alpha", "0.1", "--delta", "0.1", "--seed", "9"]),
        ("sweep", vec!["sweep", "--param", "beta", "--values", "0.1,0.3", "--repetitions", "20", "--seed", "9"]),
        ("fig2", vec!["figure", "fig2"]),
        ("fig7", vec!["figure", "fig7", "--values", "1,2", "--repetitions", "10", "--seed", "9"]),
    ];
    let mut mismatches = Vec::new();
    let mut files = 0;
    for (tag, args) in &invocations {
        let mut outputs = Vec::new();
        for round in 0..2 {
            let out = dir.join(format!("{tag}-{round}.out"));
            let status = Command::new(bin)
                .args(args)
                .arg("--out")
                .arg(&out)
                .status()
                .expect("binary runs");
            if status.code() != Some(0) && status.code() != Some(1) {
                mismatches.push(format!("{tag}: exit {status}"));
            }
            outputs.push(out);
        }
        let read = |p: &Path| std::fs::read(p).unwrap_or_default();
        if read(&outputs[0]) != read(&outputs[1]) || read(&outputs[0]).is_empty() {
            mismatches.push(tag.to_string());
        }
        files += 1;
        let manifests: Vec<_> = outputs
            .iter()
            .map(|p| {
                let mut s = p.as_os_str().to_owned();
                s.push(".manifest.json");
                std::path::PathBuf::from(s)
            })
            .collect();
        if manifests[0].exists() {
            files += 1;
            if read(&manifests[0]) != read(&manifests[1]) {
                mismatches.push(format!("{tag} manifest"));
            }
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    (
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{files} output files byte-identical across reruns")
        } else {
            format!("differing: {}", mismatches.join(", "))
        },
    )
}

fn main() {
    let baseline_spec = ExperimentSpec::default();
    let outcomes = run_repetitions(&baseline_spec, &Backend::Network).expect("baseline runs");
    let metrics = RunMetrics::from_outcomes(&outcomes);

    let checks = vec![
        check(1, "sample plans", sample_plans),
        check(2, "Chebyshev/Hoeffding crossover", crossover),
        check(3, "fidelity interval", interval),
        check(4, "fidelity sandwich on random states", sandwich),
        check(5, "estimator concentration at Tsirelson bound", concentration),
        check(6, "gapped test error guarantee", ev_guarantee),
        check(7, "baseline network reproduction", || baseline(&metrics)),
        check(8, "sweep trends", trends),
        check(9, "teleportation fidelity", || teleport(&outcomes)),
        check(10, "CLI determinism", cli_determinism),
    ];
    let failed: Vec<u32> = checks.iter().filter(|c| !c.pass).map(|c| c.id).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        checks.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({failed:?})") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
