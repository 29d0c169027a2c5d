//! Spectral arc of a unitary and single-use discrimination.
//!
//! `theta(W)` is the length of the smallest closed arc of the unit circle
//! holding every eigenvalue of `W`. Two unitaries `U`, `V` can be told apart
//! with certainty in one use iff `theta(U^dagger V) >= pi`, i.e. iff the
//! origin lies in the convex hull of the eigenvalues of `U^dagger V`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    phase_distance, unitary_eig_mat, CMat, CVec, PureState, Tolerances, UnitaryEigen,
    UnitaryOperator, C64,
};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralArc {
    /// Eigenphases in `[0, 2 pi)`, ascending.
    pub eigenphases: Vec<f64>,
    /// Largest circular gap between distinct consecutive eigenphases.
    pub largest_gap: f64,
    /// Arc length, `2 pi - largest_gap` (0 for a single distinct phase).
    pub theta: f64,
    /// Index of the eigenphase where the arc starts (counterclockwise).
    pub start: usize,
    /// Index of the eigenphase where the arc ends.
    pub end: usize,
}

/// Arc of a list of eigenphases (any order, any range).
pub fn arc_from_phases(phases: &[f64], merge_tol: f64) -> SpectralArc {
    let mut sorted: Vec<f64> = phases.iter().map(|&p| p.rem_euclid(TWO_PI)).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite phases"));
    let n = sorted.len();
    if n == 0 {
        return SpectralArc {
            eigenphases: sorted,
            largest_gap: TWO_PI,
            theta: 0.0,
            start: 0,
            end: 0,
        };
    }

    // gap k runs from sorted[k] to sorted[k + 1] (wrapping)
    let gap = |k: usize| -> f64 {
        if k + 1 < n {
            sorted[k + 1] - sorted[k]
        } else {
            sorted[0] + TWO_PI - sorted[n - 1]
        }
    };
    let mut distinct_gaps = 0;
    let mut best = 0usize;
    for k in 0..n {
        if gap(k) > merge_tol {
            distinct_gaps += 1;
        }
        if gap(k) > gap(best) {
            best = k;
        }
    }
    let largest_gap = gap(best);
    let start = (best + 1) % n;
    let end = best;
    let theta = if distinct_gaps <= 1 {
        0.0
    } else {
        (TWO_PI - largest_gap).max(0.0)
    };
    SpectralArc {
        eigenphases: sorted,
        largest_gap,
        theta,
        start,
        end,
    }
}

/// Spectral arc of `u`, merging eigenphases closer than the classification tolerance.
pub fn theta(u: &UnitaryOperator, tol: &Tolerances) -> Result<SpectralArc> {
    let eig = crate::matrix::unitary_eig(u)?;
    Ok(arc_from_phases(&eig.phases, tol.classification))
}

pub(crate) fn theta_of_matrix(m: &CMat, tol: &Tolerances) -> Result<(SpectralArc, UnitaryEigen)> {
    let eig = unitary_eig_mat(m)?;
    let arc = arc_from_phases(&eig.phases, tol.classification);
    Ok((arc, eig))
}

pub(crate) fn ensure_distinct(u: &UnitaryOperator, v: &UnitaryOperator, tol: &Tolerances) -> Result<()> {
    let distance = phase_distance(u, v)?;
    if distance <= tol.classification {
        return Err(Error::OperatorsEqual { distance });
    }
    Ok(())
}

/// `U^dagger V` as a matrix.
pub(crate) fn relative(u: &UnitaryOperator, v: &UnitaryOperator) -> CMat {
    u.matrix().adjoint() * v.matrix()
}

pub fn single_run_discriminable(
    u: &UnitaryOperator,
    v: &UnitaryOperator,
    tol: &Tolerances,
) -> Result<bool> {
    ensure_distinct(u, v, tol)?;
    let (arc, _) = theta_of_matrix(&relative(u, v), tol)?;
    Ok(arc.theta >= PI - tol.classification)
}

/// Input state `|psi>` with `U|psi> _|_ V|psi>`.
pub fn discriminating_state(
    u: &UnitaryOperator,
    v: &UnitaryOperator,
    tol: &Tolerances,
) -> Result<PureState> {
    ensure_distinct(u, v, tol)?;
    let state = zero_overlap_state(&relative(u, v), tol)?;
    PureState::normalized(state, u.dims().to_vec())
}

/// A unit vector `psi` with `<psi|W|psi> = 0` for a unitary `W` whose arc reaches `pi`.
///
/// Finds at most three eigenvalues whose convex hull holds the origin and
/// weights their eigenvectors by the square roots of the barycentric
/// coordinates of the origin.
pub fn zero_overlap_state(w: &CMat, tol: &Tolerances) -> Result<CVec> {
    let (arc, eig) = theta_of_matrix(w, tol)?;
    if arc.theta < PI - tol.classification {
        return Err(Error::NotSingleRunDiscriminable { theta: arc.theta });
    }
    let lambdas = eig.eigenvalues();
    let weights = hull_weights(&lambdas, &arc, tol.classification);
    let n = w.nrows();
    let mut psi = CVec::zeros(n);
    for (j, p) in weights {
        psi += eig.vector(j) * C64::from(p.sqrt());
    }
    let norm = psi.norm();
    Ok(psi / C64::from(norm))
}

/// Convex weights `(index, p)` on eigenvalues with `sum p lambda ~ 0`.
pub(crate) fn hull_weights(lambdas: &[C64], arc: &SpectralArc, antipodal_tol: f64) -> Vec<(usize, f64)> {
    let n = lambdas.len();

    // Antipodal pair: the sparsest certificate.
    let mut best_pair: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (lambdas[i] + lambdas[j]).norm();
            if best_pair.map_or(true, |(_, _, g)| gap < g) {
                best_pair = Some((i, j, gap));
            }
        }
    }
    if let Some((i, j, gap)) = best_pair {
        if gap <= antipodal_tol {
            return pair_weights(lambdas, i, j);
        }
    }

    // Triangle containing the origin with the largest minimum weight.
    let cross = |p: C64, q: C64| p.re * q.im - p.im * q.re;
    let mut best: Option<([usize; 3], [f64; 3], f64)> = None;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let (a, b, c) = (lambdas[i], lambdas[j], lambdas[k]);
                let area = cross(a, b) + cross(b, c) + cross(c, a);
                if area.abs() < 1e-14 {
                    continue;
                }
                let w = [cross(b, c) / area, cross(c, a) / area, cross(a, b) / area];
                let margin = w.iter().cloned().fold(f64::INFINITY, f64::min);
                if margin >= 0.0 && best.as_ref().map_or(true, |(_, _, m)| margin > *m) {
                    best = Some(([i, j, k], w, margin));
                }
            }
        }
    }
    if let Some((idx, w, _)) = best {
        return idx.iter().copied().zip(w).filter(|(_, p)| *p > 0.0).collect();
    }

    // Origin on the hull boundary within tolerance: use the arc endpoints.
    pair_weights(lambdas, arc.start, arc.end)
}

/// Weights `p, 1 - p` minimizing `|p a + (1 - p) b|`.
fn pair_weights(lambdas: &[C64], i: usize, j: usize) -> Vec<(usize, f64)> {
    let (a, b) = (lambdas[i], lambdas[j]);
    let diff = a - b;
    let denom = diff.norm_sqr();
    let p = if denom > 0.0 {
        (-(diff.conj() * b).re / denom).clamp(0.0, 1.0)
    } else {
        0.5
    };
    vec![(i, p), (j, 1.0 - p)]
}
