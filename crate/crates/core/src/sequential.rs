//! Sequential discrimination schemes `U X_N U ... X_1 U |psi>`.
//!
//! With `W_0 = U^dagger V` of arc `theta_0`, the run budget is
//! `N = ceil(pi / theta_0) - 1` auxiliary operations (`N + 1` uses of the box).
//! The synthesizer grows the arc of the effective operator
//!
//! ```text
//! W_k = (U X_k ... X_1 U)^dagger (V X_k ... X_1 V) = Y_k^dagger W_0 Y_k W_{k-1},
//! Y_k = X_k (U X_{k-1} ... X_1 U)
//! ```
//!
//! one auxiliary operation at a time until it reaches `pi`, then picks the
//! input with `discriminating_state` on `W_N`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, Config};
use crate::error::{Error, Result};
use crate::matrix::{
    check_same_dim, complete_basis, expi_hermitian, haar_state, haar_unitary,
    hermitian_from_params, CMat, CVec, PureState, Tolerances, UnitaryOperator, C64,
};
use crate::optimize::{best_of, NelderMead};
use crate::spectral::{
    ensure_distinct, relative, theta_of_matrix, zero_overlap_state, SpectralArc,
};

/// How an accepted scheme was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Greedy,
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialScheme {
    /// `X_1 ... X_N`, in order of application.
    pub aux_ops: Vec<UnitaryOperator>,
    pub input: PureState,
    /// `|<psi| (U X_N U ... X_1 U)^dagger (V X_N V ... X_1 V) |psi>|` at acceptance.
    pub overlap: f64,
    /// Black-box uses, `aux_ops.len() + 1`.
    pub uses: usize,
    /// `theta(W_k)` for `k = 0..=N` along the greedy pass.
    pub arcs: Vec<f64>,
    pub strategy: Strategy,
}

/// `N = ceil(pi / theta(U^dagger V)) - 1`.
pub fn required_runs(u: &UnitaryOperator, v: &UnitaryOperator, tol: &Tolerances) -> Result<usize> {
    ensure_distinct(u, v, tol)?;
    let (arc, _) = theta_of_matrix(&relative(u, v), tol)?;
    runs_for_theta(arc.theta, tol)
}

/// Run budget for a given arc; arcs within tolerance of `pi / k` count as `pi / k`.
pub fn runs_for_theta(theta: f64, tol: &Tolerances) -> Result<usize> {
    if theta <= tol.classification {
        return Err(Error::OperatorsEqual { distance: theta });
    }
    let ratio = (PI / theta) * (1.0 - tol.classification);
    Ok((ratio.ceil() as usize).max(1) - 1)
}

/// Recomputes the branch overlap by explicit simulation of both branches.
pub fn evaluate_scheme(
    scheme: &SequentialScheme,
    u: &UnitaryOperator,
    v: &UnitaryOperator,
) -> Result<f64> {
    check_same_dim(u.dim(), v.dim())?;
    check_same_dim(u.dim(), scheme.input.dim())?;
    for x in &scheme.aux_ops {
        check_same_dim(u.dim(), x.dim())?;
    }
    let aux: Vec<&CMat> = scheme.aux_ops.iter().map(|x| x.matrix()).collect();
    let a = run_branch(u.matrix(), &aux, scheme.input.amplitudes());
    let b = run_branch(v.matrix(), &aux, scheme.input.amplitudes());
    Ok(a.dotc(&b).norm())
}

fn run_branch(boxm: &CMat, aux: &[&CMat], input: &CVec) -> CVec {
    let mut state = boxm * input;
    for x in aux {
        state = boxm * (*x * state);
    }
    state
}

/// Synthesizes a scheme with exactly `required_runs(u, v)` auxiliary operations.
pub fn find_sequential_scheme(
    u: &UnitaryOperator,
    v: &UnitaryOperator,
    cfg: &Config,
) -> Result<SequentialScheme> {
    check_same_dim(u.dim(), v.dim())?;
    let tol = &cfg.tolerances;
    ensure_distinct(u, v, tol)?;
    let w0 = relative(u, v);
    let (arc0, _) = theta_of_matrix(&w0, tol)?;
    let budget = runs_for_theta(arc0.theta, tol)?;

    let greedy = greedy_pass(u, v, &w0, budget, cfg)?;
    if let Some(scheme) = greedy.accepted {
        return Ok(scheme);
    }
    joint_pass(u, v, budget, &greedy.aux, greedy.best_overlap, cfg)
}

struct GreedyOutcome {
    accepted: Option<SequentialScheme>,
    aux: Vec<CMat>,
    best_overlap: f64,
}

/// Score of a candidate step: the arc of `W_k`, capped at `pi`.
fn capped_arc(w: &CMat, tol: &Tolerances) -> f64 {
    theta_of_matrix(w, tol)
        .map(|(arc, _)| arc.theta.min(PI))
        .unwrap_or(0.0)
}

fn greedy_pass(
    u: &UnitaryOperator,
    v: &UnitaryOperator,
    w0: &CMat,
    budget: usize,
    cfg: &Config,
) -> Result<GreedyOutcome> {
    let tol = &cfg.tolerances;
    let n = u.dim();
    let (arc0, eig0) = theta_of_matrix(w0, tol)?;
    let extremes0 = (eig0.vector(arc0.start), eig0.vector(arc0.end));

    let mut branch_u = u.matrix().clone(); // U X_k ... X_1 U
    let mut w = w0.clone();
    let mut arcs = vec![arc0.theta.min(PI)];
    let mut aux: Vec<CMat> = Vec::with_capacity(budget);

    for step in 0..budget {
        if *arcs.last().expect("nonempty") >= PI - tol.classification {
            break;
        }
        let (arc_prev, eig_prev) = theta_of_matrix(&w, tol)?;
        let anchor_y = growth_rotation(&arc0, &extremes0, &arc_prev, &eig_prev, n);
        let anchor = anchor_y * branch_u.adjoint();

        let step_for = |x: &CMat| -> CMat {
            let y = x * &branch_u;
            y.adjoint() * w0 * y * &w
        };

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, step as u64]));
        let anchors: Vec<CMat> = std::iter::once(anchor)
            .chain((1..cfg.restarts.max(1)).map(|_| haar_unitary(n, &mut rng).into_matrix()))
            .collect();
        let nm = NelderMead {
            step: 0.2,
            max_evaluations: 400 * n * n,
            value_tol: 1e-14,
            target: -(PI - 1e-13),
        };
        let results = anchors.iter().map(|a| {
            nm.minimize(
                |p| {
                    let x = expi_hermitian(&hermitian_from_params(p, n)) * a;
                    -capped_arc(&step_for(&x), tol)
                },
                &vec![0.0; n * n],
            )
        });
        let (index, best) = best_of(results).expect("at least one restart");
        let x = expi_hermitian(&hermitian_from_params(&best.x, n)) * &anchors[index];
        let new_w = step_for(&x);
        let new_arc = capped_arc(&new_w, tol);

        if new_arc < arcs.last().copied().unwrap_or(0.0) - 1e-9 {
            // never accept a regression; hand over to the joint pass
            break;
        }
        branch_u = u.matrix() * &x * &branch_u;
        w = new_w;
        arcs.push(new_arc);
        aux.push(x);
    }

    let reached = aux.len() == budget && *arcs.last().expect("nonempty") >= PI - tol.classification;
    if !reached {
        let best_overlap = hull_distance(&w, tol);
        return Ok(GreedyOutcome {
            accepted: None,
            aux,
            best_overlap,
        });
    }

    let psi = zero_overlap_state(&w, tol)?;
    let input = PureState::normalized(psi, u.dims().to_vec())?;
    let mut scheme = SequentialScheme {
        aux_ops: aux
            .iter()
            .map(|x| UnitaryOperator::trusted(x.clone(), u.dims().to_vec()))
            .collect(),
        input,
        overlap: 0.0,
        uses: budget + 1,
        arcs,
        strategy: Strategy::Greedy,
    };
    scheme.overlap = evaluate_scheme(&scheme, u, v)?;
    if scheme.overlap <= tol.orthogonality {
        Ok(GreedyOutcome {
            accepted: Some(scheme),
            aux,
            best_overlap: 0.0,
        })
    } else {
        let best_overlap = scheme.overlap;
        Ok(GreedyOutcome {
            accepted: None,
            aux,
            best_overlap,
        })
    }
}

/// Distance from the origin to the eigenvalue hull of `w` (`cos(theta / 2)` below `pi`).
fn hull_distance(w: &CMat, tol: &Tolerances) -> f64 {
    theta_of_matrix(w, tol)
        .map(|(arc, _)| if arc.theta >= PI { 0.0 } else { (arc.theta / 2.0).cos() })
        .unwrap_or(1.0)
}

/// Step rotation `Y` mapping the extreme eigenvectors of `W_{k-1}` onto those of `W_0`.
///
/// While the arcs add up to less than `pi` the map aligns the extremes, so the
/// arc of `Y^dagger W_0 Y W_{k-1}` is the sum of both arcs. Otherwise `Y` tilts
/// the two-level rotation so the composite reaches exactly `pi`: on the two
/// extreme eigenvectors the factors are rotations by `a` and `b`, and with
/// axes at angle `phi` the composite angle `c` obeys
/// `cos(c/2) = cos(a/2) cos(b/2) - sin(a/2) sin(b/2) cos(phi)`.
fn growth_rotation(
    arc0: &SpectralArc,
    extremes0: &(CVec, CVec),
    arc_prev: &SpectralArc,
    eig_prev: &crate::matrix::UnitaryEigen,
    n: usize,
) -> CMat {
    let e = complete_basis(&[extremes0.0.clone(), extremes0.1.clone()], n);
    let f = complete_basis(&[eig_prev.vector(arc_prev.start), eig_prev.vector(arc_prev.end)], n);
    let (a, b) = (arc_prev.theta, arc0.theta);
    let mut block = CMat::identity(n, n);
    if a + b >= PI && n >= 2 {
        let cos_phi = (1.0 / ((a / 2.0).tan() * (b / 2.0).tan())).clamp(-1.0, 1.0);
        let phi = cos_phi.acos();
        let (c, s) = ((phi / 2.0).cos(), (phi / 2.0).sin());
        block[(0, 0)] = C64::from(c);
        block[(0, 1)] = C64::from(-s);
        block[(1, 0)] = C64::from(s);
        block[(1, 1)] = C64::from(c);
    }
    e * block * f.adjoint()
}

/// Joint minimization of the overlap over all auxiliary operations and the input.
fn joint_pass(
    u: &UnitaryOperator,
    v: &UnitaryOperator,
    budget: usize,
    greedy_aux: &[CMat],
    greedy_overlap: f64,
    cfg: &Config,
) -> Result<SequentialScheme> {
    let scheme = joint_optimize(u, v, budget, greedy_aux, cfg);
    match scheme {
        Some(s) if s.overlap <= cfg.tolerances.orthogonality => Ok(s),
        Some(s) => Err(Error::SynthesisFailed {
            runs: budget,
            best_overlap: s.overlap.min(greedy_overlap),
        }),
        None => Err(Error::SynthesisFailed {
            runs: budget,
            best_overlap: greedy_overlap,
        }),
    }
}

/// Multi-start minimization of `|<psi| A^dagger B |psi>|^2` over `X_1..X_N` and `psi`.
///
/// Restart 0 starts from `start_aux` (padded with identities), the others from
/// seeded Haar samples. Returns the best scheme found, accepted or not.
pub fn joint_optimize(
    u: &UnitaryOperator,
    v: &UnitaryOperator,
    budget: usize,
    start_aux: &[CMat],
    cfg: &Config,
) -> Option<SequentialScheme> {
    let n = u.dim();
    let tol = &cfg.tolerances;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2]));
    let mut starts: Vec<(Vec<CMat>, CVec)> = Vec::new();
    let mut first: Vec<CMat> = start_aux.iter().take(budget).cloned().collect();
    while first.len() < budget {
        first.push(CMat::identity(n, n));
    }
    starts.push((first, haar_state(n, &mut rng).amplitudes().clone()));
    for _ in 1..cfg.restarts.max(1) {
        let aux = (0..budget).map(|_| haar_unitary(n, &mut rng).into_matrix()).collect();
        starts.push((aux, haar_state(n, &mut rng).amplitudes().clone()));
    }

    let unpack = |p: &[f64], anchors: &[CMat], psi0: &CVec| -> (Vec<CMat>, CVec) {
        let xs = anchors
            .iter()
            .enumerate()
            .map(|(k, a)| expi_hermitian(&hermitian_from_params(&p[k * n * n..(k + 1) * n * n], n)) * a)
            .collect();
        let off = budget * n * n;
        let psi = CVec::from_fn(n, |i, _| psi0[i] + C64::new(p[off + 2 * i], p[off + 2 * i + 1]));
        (xs, psi)
    };
    let objective = |xs: &[CMat], psi: &CVec| -> f64 {
        let norm = psi.norm_squared();
        if norm < 1e-12 {
            return f64::INFINITY;
        }
        let refs: Vec<&CMat> = xs.iter().collect();
        let a = run_branch(u.matrix(), &refs, psi);
        let b = run_branch(v.matrix(), &refs, psi);
        a.dotc(&b).norm_sqr() / (norm * norm)
    };

    let dim = budget * n * n + 2 * n;
    let nm = NelderMead {
        step: 0.25,
        max_evaluations: 3000 * (budget + 1),
        value_tol: 1e-30,
        target: tol.orthogonality.powi(2) * 1e-6,
    };
    let results = starts.iter().map(|(anchors, psi0)| {
        let mut m = nm.minimize(
            |p| {
                let (xs, psi) = unpack(p, anchors, psi0);
                objective(&xs, &psi)
            },
            &vec![0.0; dim],
        );
        // one restart from the end point often escapes a collapsed simplex
        if m.value > nm.target {
            let again = nm.minimize(
                |p| {
                    let shifted: Vec<f64> = p.iter().zip(&m.x).map(|(a, b)| a + b).collect();
                    let (xs, psi) = unpack(&shifted, anchors, psi0);
                    objective(&xs, &psi)
                },
                &vec![0.0; dim],
            );
            if again.value < m.value {
                m.x = m.x.iter().zip(&again.x).map(|(a, b)| a + b).collect();
                m.value = again.value;
            }
        }
        m
    });
    let (index, best) = best_of(results)?;
    let (anchors, psi0) = &starts[index];
    let (xs, psi) = unpack(&best.x, anchors, psi0);
    let input = PureState::normalized(psi, u.dims().to_vec()).ok()?;
    let mut scheme = SequentialScheme {
        aux_ops: xs
            .into_iter()
            .map(|x| UnitaryOperator::trusted(crate::matrix::nearest_unitary(&x), u.dims().to_vec()))
            .collect(),
        input,
        overlap: 0.0,
        uses: budget + 1,
        arcs: Vec::new(),
        strategy: Strategy::Joint,
    };
    scheme.overlap = evaluate_scheme(&scheme, u, v).ok()?;
    Some(scheme)
}
