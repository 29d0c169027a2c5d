mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_force_arc, diag_unitary, haar, haar_two, kron, second_schmidt, swap_type, CMat};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unidisc::compiler::{compile, evaluate_word, CompileTarget};
use unidisc::gates::{cnot, cz, identity, local, pauli_z, swap};
use unidisc::locality::{canonical_xx, classify, lemma5_extract, xx_generator, CanonicalXX, LocalityKind};
use unidisc::matrix::{expi_hermitian, haar_state, hermitian_from_params};
use unidisc::protocol::{build_protocol, identify, multi_discriminate, LoccProtocol};
use unidisc::sequential::{find_sequential_scheme, required_runs};
use unidisc::spectral::{discriminating_state, theta};
use unidisc::verify::verify;
use unidisc::{phase_distance, Config, Error, Tensor, Tolerances, UnitaryOperator};

struct Outcome {
    pass: bool,
    detail: String,
    artifact: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome {
        pass,
        detail,
        artifact: String::new(),
    }
}

fn rotated(phases: &[f64], seed: u64) -> UnitaryOperator {
    let q = haar(phases.len(), seed);
    let m = q.matrix() * diag_unitary(phases).matrix() * q.matrix().adjoint();
    UnitaryOperator::from_matrix(m).unwrap()
}

fn theta_oracle() -> Outcome {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let phases: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let got = theta(&diag_unitary(&phases), &tol).unwrap().theta;
        worst = worst.max((got - brute_force_arc(&phases)).abs());
    }
    outcome(worst <= 1e-12, format!("200 diagonal unitaries, max |theta - oracle| = {worst:.2e}"))
}

fn single_run() -> Outcome {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut accepted = 0;
    let mut refused = 0;
    for k in 0..100u64 {
        // evenly spread spectrum with jitter: every gap below pi
        let n = rng.random_range(3..=5);
        let start = rng.random_range(0.0..2.0 * PI);
        let phases: Vec<f64> = (0..n)
            .map(|j| start + 2.0 * PI * j as f64 / n as f64 + rng.random_range(-0.2..0.2))
            .collect();
        assert!(brute_force_arc(&phases) >= PI);
        let u = haar(n, 1000 + k);
        let v = u.compose(&rotated(&phases, 2000 + k)).unwrap();
        if let Ok(psi) = discriminating_state(&u, &v, &tol) {
            let overlap = u.apply(&psi).unwrap().inner(&v.apply(&psi).unwrap()).norm();
            worst = worst.max(overlap);
            accepted += 1;
        }
    }
    for k in 0..100u64 {
        let n = rng.random_range(2..=5);
        let width = rng.random_range(0.1..PI - 1e-3);
        let start = rng.random_range(0.0..2.0 * PI);
        let mut phases = vec![start, start + width];
        phases.extend((2..n).map(|_| start + rng.random_range(0.0..width)));
        let u = haar(n, 3000 + k);
        let v = u.compose(&rotated(&phases, 4000 + k)).unwrap();
        if matches!(
            discriminating_state(&u, &v, &tol),
            Err(Error::NotSingleRunDiscriminable { .. })
        ) {
            refused += 1;
        }
    }
    outcome(
        accepted == 100 && worst <= 1e-9 && refused == 100,
        format!("{accepted}/100 wide pairs solved (max overlap {worst:.2e}), {refused}/100 narrow pairs refused"),
    )
}

fn sequential_budget() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut artifact = String::new();
    for k in 2..=5usize {
        let start = Instant::now();
        let u = identity(2);
        let v = unidisc::gates::phase_diag(&[0.0, PI / k as f64]);
        let cfg = Config::with_seed(k as u64);
        let runs = required_runs(&u, &v, &cfg.tolerances).unwrap();
        let (overlap, aux) = match find_sequential_scheme(&u, &v, &cfg) {
            Ok(s) => {
                artifact.push_str(&format!("{s:?}\n"));
                let aux: Vec<&CMat> = s.aux_ops.iter().map(|x| x.matrix()).collect();
                let a = common::run_sequence(u.matrix(), &aux, s.input.amplitudes());
                let b = common::run_sequence(v.matrix(), &aux, s.input.amplitudes());
                (a.dotc(&b).norm(), s.aux_ops.len())
            }
            Err(e) => {
                artifact.push_str(&format!("{e:?}\n"));
                (f64::INFINITY, usize::MAX)
            }
        };
        let elapsed = start.elapsed();
        let ok = runs == k - 1 && aux == k - 1 && overlap <= 1e-6 && elapsed < Duration::from_secs(60);
        pass &= ok;
        parts.push(format!("k={k}: N={runs} aux={aux} overlap={overlap:.1e} {:.2}s", elapsed.as_secs_f64()));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
        artifact,
    }
}

fn classification() -> Outcome {
    let cfg = Config::default();
    let mut correct = 0;
    let mut total = 0;
    let mut worst: f64 = 0.0;
    for d in [2usize, 3] {
        for k in 0..100u64 {
            let s = 10_000 * d as u64 + k;
            let (a, b) = (haar(d, s), haar(d, s ^ 0xFF));
            for (kind, u) in [
                (LocalityKind::ProductLocal, kron(&a, &b)),
                (LocalityKind::SwapLocal, swap_type(&a, &b)),
                (LocalityKind::Imprimitive, haar_two(d, s ^ 0xF0F0)),
            ] {
                total += 1;
                let class = classify(&u, &cfg).unwrap();
                if class.kind != kind {
                    continue;
                }
                correct += 1;
                if let Some((fa, fb)) = class.factors {
                    worst = worst.max(phase_distance(&fa, &a).unwrap());
                    worst = worst.max(phase_distance(&fb, &b).unwrap());
                }
            }
        }
    }
    outcome(
        correct == total && worst <= 1e-6,
        format!("{correct}/{total} classified, max factor distance {worst:.2e}"),
    )
}

/// Hermitian perturbation of Frobenius norm `eps` orthogonal to `I`, `K`, `K^2`.
fn outside_span(d: usize, rng: &mut ChaCha8Rng, eps: f64) -> CMat {
    let n = d * d;
    let params: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut h = hermitian_from_params(&params, n);
    let k = xx_generator(d);
    let mut basis: Vec<CMat> = Vec::new();
    for mut b in [CMat::identity(n, n), k.clone(), &k * &k] {
        for e in &basis {
            let c: C64 = e.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
            b -= e * c;
        }
        let nb = b.norm();
        if nb > 1e-9 {
            basis.push(b / C64::from(nb));
        }
    }
    for e in &basis {
        let c: C64 = e.iter().zip(h.iter()).map(|(x, y)| x.conj() * y).sum();
        h -= e * c;
    }
    let nh = h.norm();
    h * C64::from(eps / nh)
}

fn canonical_form() -> Outcome {
    let tol = Tolerances::default();
    let cfg = Config::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut recovered = 0;
    let mut rejected = 0;
    for d in [2usize, 3, 4] {
        for _ in 0..50 {
            let x = rng.random_range(-PI..PI);
            if let Some(got) = lemma5_extract(&canonical_xx(x, d), &tol) {
                let gap = CanonicalXX::angle_gap(got.x, x, d).abs();
                worst = worst.max(gap);
                if gap <= 1e-8 {
                    recovered += 1;
                }
            }
        }
        for _ in 0..50 {
            let x = rng.random_range(-PI..PI);
            let h = outside_span(d, &mut rng, 1e-3);
            let m = canonical_xx(x, d).matrix() * expi_hermitian(&h);
            let u = UnitaryOperator::new(m, vec![d, d], 1e-9).unwrap();
            if lemma5_extract(&u, &tol).is_none() {
                rejected += 1;
            }
        }
    }
    // primitive operators keep products product; imprimitive ones entangle a witness
    let mut kept = 0;
    let mut entangled = 0;
    for k in 0..100u64 {
        let d = 2 + (k % 2) as usize;
        let (a, b) = (haar(d, 50_000 + k), haar(d, 60_000 + k));
        let u = if k % 4 < 2 { kron(&a, &b) } else { swap_type(&a, &b) };
        let psi = haar_state(d, &mut rng).tensor(&haar_state(d, &mut rng));
        if second_schmidt(u.apply(&psi).unwrap().amplitudes(), d) < 1e-12 {
            kept += 1;
        }
        let w = haar_two(d, 70_000 + k);
        let class = classify(&w, &cfg).unwrap();
        if let Some(witness) = class.witness {
            if witness.entanglement() < 1e-12 && second_schmidt(w.apply(&witness).unwrap().amplitudes(), d) > 1e-8 {
                entangled += 1;
            }
        }
    }
    outcome(
        recovered == 150 && rejected == 150 && kept == 100 && entangled == 100,
        format!(
            "{recovered}/150 angles recovered (max gap {worst:.1e}), {rejected}/150 perturbed rejected, \
             product preservation {kept}/100, entangling witness {entangled}/100"
        ),
    )
}

fn compiler_milestones() -> Outcome {
    let q = cnot();
    let mut pass = true;
    let mut parts = Vec::new();
    let mut artifact = String::new();
    let xx = expi_hermitian(&(xx_generator(2) * C64::from(0.3)));
    let milestones: [(&str, UnitaryOperator, usize, f64); 3] = [
        ("CZ", cz(), 1, 1e-8),
        ("exp(0.3i XX)", UnitaryOperator::two_qudit(xx, 2).unwrap(), 2, 1e-6),
        ("CNOT^dagger", q.adjoint(), 1, 1e-10),
    ];
    for (name, target, boxes, tol) in milestones {
        let start = Instant::now();
        let mut cfg = Config::with_seed(6);
        cfg.tolerances.compile = tol;
        let result = compile(&q, &CompileTarget::ExactMatrix(target.clone()), boxes, &cfg);
        let elapsed = start.elapsed();
        let (ok, note) = match result {
            Ok(word) => {
                artifact.push_str(&format!("{word:?}\n"));
                let err = phase_distance(&evaluate_word(&word, &q).unwrap(), &target).unwrap();
                (
                    err <= tol && word.box_uses <= boxes,
                    format!("{name}: {} box(es), error {err:.1e}", word.box_uses),
                )
            }
            Err(e) => {
                artifact.push_str(&format!("{e:?}\n"));
                (false, format!("{name}: {e}"))
            }
        };
        pass &= ok && elapsed < Duration::from_secs(120);
        parts.push(format!("{note} {:.2}s", elapsed.as_secs_f64()));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
        artifact,
    }
}

/// Builds and independently verifies; `Ok(None)` is an allowed compile failure.
fn certified(u: &UnitaryOperator, v: &UnitaryOperator, seed: u64) -> (Result<Option<LoccProtocol>, String>, String) {
    let tol = Tolerances::default();
    match build_protocol(u, v, &Config::with_seed(seed)) {
        Ok(p) => {
            let rep = verify(&p, u, v, &tol).unwrap();
            let claimed = p.passed();
            let artifact = format!("{p:?}\n");
            let product_input = p.input.0.tensor(&p.input.1).entanglement() == 0.0
                || p.input.0.tensor(&p.input.1).entanglement() < 1e-15;
            if rep.passed && claimed && product_input && rep.overlap <= 1e-5 && rep.schmidt_second_max <= 1e-5 {
                (Ok(Some(p)), artifact)
            } else {
                (
                    Err(format!(
                        "{:?} overlap {:.1e} schmidt {:.1e} claimed {claimed}",
                        p.case_path, rep.overlap, rep.schmidt_second_max
                    )),
                    artifact,
                )
            }
        }
        Err(e) if matches!(e.root(), Error::CompileFailed { .. }) => (Ok(None), format!("{e:?}\n")),
        Err(e) => (Err(format!("{e}")), format!("{e:?}\n")),
    }
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let families: [(&str, fn(u64) -> UnitaryOperator, fn(u64) -> UnitaryOperator); 5] = [
        ("prod/prod", |s| kron(&haar(2, s), &haar(2, s + 1)), |s| kron(&haar(2, s + 2), &haar(2, s + 3))),
        ("prod/swap", |s| kron(&haar(2, s), &haar(2, s + 1)), |s| swap_type(&haar(2, s + 2), &haar(2, s + 3))),
        ("swap/swap", |s| swap_type(&haar(2, s), &haar(2, s + 1)), |s| swap_type(&haar(2, s + 2), &haar(2, s + 3))),
        ("prod/haar", |s| kron(&haar(2, s), &haar(2, s + 1)), |s| haar_two(2, s + 2)),
        ("haar/haar", |s| haar_two(2, s), |s| haar_two(2, s + 1)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    let mut artifact = String::new();
    for (fi, (name, mk_u, mk_v)) in families.iter().enumerate() {
        let mut ok = 0;
        let mut compile_failed = 0;
        let mut errors = Vec::new();
        for k in 0..20u64 {
            let s = 100_000 * (fi as u64 + 1) + 10 * k;
            let (res, art) = certified(&mk_u(s), &mk_v(s), k);
            artifact.push_str(&art);
            match res {
                Ok(Some(_)) => ok += 1,
                Ok(None) => compile_failed += 1,
                Err(e) => errors.push(e),
            }
        }
        let imprimitive = fi >= 3;
        let allowed = if imprimitive { 2 } else { 0 };
        let family_ok = errors.is_empty() && compile_failed <= allowed;
        pass &= family_ok;
        let mut note = format!("{name} {ok}/20");
        if compile_failed > 0 {
            note.push_str(&format!(" ({compile_failed} CompileFailed)"));
        }
        if let Some(e) = errors.first() {
            note.push_str(&format!(" first failure: {e}"));
        }
        parts.push(note);
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(1800);
    Outcome {
        pass,
        detail: format!("{}; {:.1}s", parts.join(", "), elapsed.as_secs_f64()),
        artifact,
    }
}

fn identity_entry() -> Outcome {
    let id = UnitaryOperator::identity(vec![2, 2]);
    let mut ok = 0;
    let mut errors = Vec::new();
    for k in 0..20u64 {
        let s = 900_000 + 10 * k;
        let w = match k % 4 {
            0 => kron(&haar(2, s), &haar(2, s + 1)),
            1 => swap_type(&haar(2, s), &haar(2, s + 1)),
            2 => haar_two(2, s),
            _ => local(&haar(2, s), &haar(2, s + 1)).compose(&cnot()).unwrap(),
        };
        match certified(&id, &w, k).0 {
            Ok(Some(p)) if p.case_path[0] == unidisc::protocol::CaseLabel::IdentityVsOther => ok += 1,
            Ok(Some(p)) => errors.push(format!("entry label {:?}", p.case_path)),
            Ok(None) => errors.push("CompileFailed".to_string()),
            Err(e) => errors.push(e),
        }
    }
    let mut detail = format!("{ok}/20 identity-vs-other protocols certified");
    if let Some(e) = errors.first() {
        detail.push_str(&format!(", first failure: {e}"));
    }
    outcome(ok == 20, detail)
}

fn multi_hypothesis() -> Outcome {
    let start = Instant::now();
    let ops = [
        UnitaryOperator::identity(vec![2, 2]),
        swap(2),
        local(&pauli_z(), &identity(2)),
    ];
    let multi = match multi_discriminate(&ops, &Config::with_seed(9)) {
        Ok(m) => m,
        Err(e) => return outcome(false, format!("{e}")),
    };
    let mut identified = 0;
    for (k, op) in ops.iter().enumerate() {
        let dist = identify(&multi, op).unwrap();
        if dist.len() == 1 && dist[0].0 == k && (dist[0].1 - 1.0).abs() < 1e-6 {
            identified += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        identified == 3 && elapsed < Duration::from_secs(10),
        format!(
            "{identified}/3 identified, {} pairwise protocols, {} box uses on the longest path, {:.2}s",
            multi.protocols.len(),
            multi.box_uses,
            elapsed.as_secs_f64()
        ),
    )
}

fn determinism(first: &[&Outcome; 3]) -> Outcome {
    let again = [sequential_budget(), compiler_milestones(), end_to_end()];
    let same: Vec<bool> = first.iter().zip(&again).map(|(a, b)| a.artifact == b.artifact).collect();
    let bytes: usize = again.iter().map(|o| o.artifact.len()).sum();
    outcome(
        same.iter().all(|s| *s),
        format!("re-run artifacts identical for criteria 3, 6, 7: {same:?} ({bytes} bytes)"),
    )
}

fn report(n: usize, o: &Outcome, elapsed: Duration) -> bool {
    println!(
        "criterion {n:>2}: {} | {} [{:.2}s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
    o.pass
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let o = f();
    (o, start.elapsed())
}

fn main() -> ExitCode {
    println!("acceptance suite");
    let mut all = true;
    let (c1, t) = timed(theta_oracle);
    let c1 = Outcome {
        pass: c1.pass && t < Duration::from_secs(1),
        ..c1
    };
    all &= report(1, &c1, t);
    let (c2, t) = timed(single_run);
    let c2 = Outcome {
        pass: c2.pass && t < Duration::from_secs(5),
        ..c2
    };
    all &= report(2, &c2, t);
    let (c3, t) = timed(sequential_budget);
    all &= report(3, &c3, t);
    let (c4, t) = timed(classification);
    let c4 = Outcome {
        pass: c4.pass && t < Duration::from_secs(30),
        ..c4
    };
    all &= report(4, &c4, t);
    let (c5, t) = timed(canonical_form);
    all &= report(5, &c5, t);
    let (c6, t) = timed(compiler_milestones);
    all &= report(6, &c6, t);
    let (c7, t) = timed(end_to_end);
    all &= report(7, &c7, t);
    let (c8, t) = timed(identity_entry);
    all &= report(8, &c8, t);
    let (c9, t) = timed(multi_hypothesis);
    all &= report(9, &c9, t);
    let (c10, t) = timed(|| determinism(&[&c3, &c6, &c7]));
    all &= report(10, &c10, t);
    if all {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("some criteria failed");
        ExitCode::FAILURE
    }
}
