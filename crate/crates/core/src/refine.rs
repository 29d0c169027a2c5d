//! Product-path refinement of protocol local layers.
//!
//! Keeps the run skeleton (box count and directions) and re-fits the local
//! layers so that, on both branches, the state after every run is a product
//! state and the final states are orthogonal. Residuals are the `2 x 2` minors
//! of each intermediate coefficient matrix (all vanish iff the state is a
//! product) plus the final inner product; they are driven to zero with
//! Levenberg-Marquardt steps on Hermitian generators around the current layers.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::compiler::Direction;
use crate::config::{derive_seed, Config};
use crate::locality::classify;
use crate::matrix::{
    coefficient_matrix, expi_hermitian, hermitian_from_params, nearest_unitary, CMat, CVec,
    UnitaryOperator,
};
use crate::protocol::{LoccProtocol, Run};
use crate::verify::apply_local;

const MAX_ITERATIONS: usize = 150;
const ATTEMPTS: usize = 4;
const FD_STEP: f64 = 1e-7;
/// Largest parameter count attempted.
pub const MAX_PARAMETERS: usize = 4000;

struct Problem<'a> {
    d: usize,
    boxes: [&'a CMat; 2],
    boxes_adj: [CMat; 2],
    dirs: Vec<Direction>,
    input: CVec,
}

impl Problem<'_> {
    fn box_for(&self, branch: usize, dir: Direction) -> &CMat {
        match dir {
            Direction::Forward => self.boxes[branch],
            Direction::Reverse => &self.boxes_adj[branch],
        }
    }

    /// States after each run on one branch, starting from `start` before run `from`.
    fn propagate(&self, layers: &[(CMat, CMat)], branch: usize, from: usize, start: &CVec, out: &mut Vec<CVec>) {
        out.clear();
        let mut psi = start.clone();
        for k in from..layers.len() {
            psi = self.box_for(branch, self.dirs[k]) * apply_local(&psi, &layers[k].0, &layers[k].1);
            out.push(psi.clone());
        }
    }

    fn minors(&self, psi: &CVec, out: &mut Vec<f64>) {
        let d = self.d;
        let c = coefficient_matrix(psi, d, d);
        for i in 0..d {
            for k in i + 1..d {
                for j in 0..d {
                    for l in j + 1..d {
                        let m = c[(i, j)] * c[(k, l)] - c[(i, l)] * c[(k, j)];
                        out.push(m.re);
                        out.push(m.im);
                    }
                }
            }
        }
    }

    fn residuals_from(&self, states: &[Vec<CVec>; 2]) -> Vec<f64> {
        let mut r = Vec::new();
        for branch_states in states {
            for psi in branch_states {
                self.minors(psi, &mut r);
            }
        }
        let n = states[0].len();
        let overlap = states[0][n - 1].dotc(&states[1][n - 1]);
        r.push(overlap.re);
        r.push(overlap.im);
        r
    }

    fn all_states(&self, layers: &[(CMat, CMat)]) -> [Vec<CVec>; 2] {
        let mut s = [Vec::new(), Vec::new()];
        for (branch, out) in s.iter_mut().enumerate() {
            self.propagate(layers, branch, 0, &self.input, out);
        }
        s
    }

    /// Forward-difference Jacobian; parameter `k * 2 d^2 + s * d^2 + p` perturbs
    /// party `s` of layer `k` by `exp(i H e_p)` on the left.
    fn jacobian(&self, layers: &[(CMat, CMat)], base: &[f64], states: &[Vec<CVec>; 2]) -> DMatrix<f64> {
        let d = self.d;
        let per_party = d * d;
        let n = layers.len();
        let p_count = n * 2 * per_party;
        let mut jac = DMatrix::<f64>::zeros(base.len(), p_count);
        let mut trial = layers.to_vec();
        let mut tail: [Vec<CVec>; 2] = [Vec::new(), Vec::new()];
        for k in 0..n {
            for side in 0..2 {
                for p in 0..per_party {
                    let mut params = vec![0.0; per_party];
                    params[p] = FD_STEP;
                    let g = expi_hermitian(&hermitian_from_params(&params, d));
                    let original = if side == 0 { layers[k].0.clone() } else { layers[k].1.clone() };
                    let moved = &g * &original;
                    if side == 0 {
                        trial[k].0 = moved;
                    } else {
                        trial[k].1 = moved;
                    }
                    let mut full = [Vec::new(), Vec::new()];
                    for branch in 0..2 {
                        let start = if k == 0 { self.input.clone() } else { states[branch][k - 1].clone() };
                        self.propagate(&trial, branch, k, &start, &mut tail[branch]);
                        let mut v = states[branch][..k].to_vec();
                        v.extend(tail[branch].iter().cloned());
                        full[branch] = v;
                    }
                    let r = self.residuals_from(&full);
                    let col = k * 2 * per_party + side * per_party + p;
                    for (row, (a, b)) in r.iter().zip(base).enumerate() {
                        jac[(row, col)] = (a - b) / FD_STEP;
                    }
                    if side == 0 {
                        trial[k].0 = original;
                    } else {
                        trial[k].1 = original;
                    }
                }
            }
        }
        jac
    }

    fn step(&self, layers: &[(CMat, CMat)], delta: &DVector<f64>) -> Vec<(CMat, CMat)> {
        let d = self.d;
        let per_party = d * d;
        layers
            .iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let off = k * 2 * per_party;
                let ga = expi_hermitian(&hermitian_from_params(delta.rows(off, per_party).as_slice(), d));
                let gb = expi_hermitian(&hermitian_from_params(
                    delta.rows(off + per_party, per_party).as_slice(),
                    d,
                ));
                (ga * a, gb * b)
            })
            .collect()
    }
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn max_abs(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Gauss-Newton step, solved in whichever of the two normal-equation
/// forms is smaller.
fn lm_step(jac: &DMatrix<f64>, r: &[f64], lambda: f64) -> Option<DVector<f64>> {
    let rv = DVector::from_column_slice(r);
    let (m, p) = jac.shape();
    if m <= p {
        let mut a = jac * jac.transpose();
        for i in 0..m {
            a[(i, i)] += lambda;
        }
        let y = a.cholesky()?.solve(&rv);
        Some(-(jac.transpose() * y))
    } else {
        let mut a = jac.transpose() * jac;
        for i in 0..p {
            a[(i, i)] += lambda;
        }
        let g = jac.transpose() * rv;
        Some(-a.cholesky()?.solve(&g))
    }
}

fn solve(problem: &Problem, mut layers: Vec<(CMat, CMat)>, target: f64) -> (Vec<(CMat, CMat)>, f64) {
    let mut states = problem.all_states(&layers);
    let mut r = problem.residuals_from(&states);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        if max_abs(&r) <= target {
            break;
        }
        let jac = problem.jacobian(&layers, &r, &states);
        let mut improved = false;
        for _ in 0..12 {
            let Some(delta) = lm_step(&jac, &r, lambda) else {
                lambda *= 10.0;
                continue;
            };
            let trial = problem.step(&layers, &delta);
            let trial_states = problem.all_states(&trial);
            let tr = problem.residuals_from(&trial_states);
            let tc = cost(&tr);
            if tc < c {
                layers = trial;
                states = trial_states;
                r = tr;
                c = tc;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    let m = max_abs(&r);
    (layers, m)
}

/// Local freedom per run against the product constraints per run: a
/// primitive box must leave a product state on the rank-one variety, which has
/// real codimension `2 (d - 1)^2`.
fn dimension_count_allows(u: &UnitaryOperator, v: &UnitaryOperator, d: usize, cfg: &Config) -> bool {
    let entangles = |w: &UnitaryOperator| classify(w, cfg).map_or(true, |c| !c.kind.is_primitive());
    let constrained = [u, v].into_iter().filter(|w| entangles(w)).count();
    let freedom = 2 * (d * d - 1);
    freedom > constrained * 2 * (d - 1) * (d - 1)
}

/// Re-fitted copy of `protocol`, or `None` if no product path was found.
pub fn refine_product_path(
    protocol: &LoccProtocol,
    u: &UnitaryOperator,
    v: &UnitaryOperator,
    cfg: &Config,
) -> Option<LoccProtocol> {
    let d = protocol.dim();
    let n = protocol.runs.len();
    if n == 0 || n * 2 * d * d > MAX_PARAMETERS {
        return None;
    }
    if !dimension_count_allows(u, v, d, cfg) {
        return None;
    }
    let problem = Problem {
        d,
        boxes: [u.matrix(), v.matrix()],
        boxes_adj: [u.matrix().adjoint(), v.matrix().adjoint()],
        dirs: protocol.runs.iter().map(|r| r.direction).collect(),
        input: protocol.input.0.amplitudes().kronecker(protocol.input.1.amplitudes()),
    };
    let start: Vec<(CMat, CMat)> = protocol
        .runs
        .iter()
        .map(|r| (r.pre_local.0.matrix().clone(), r.pre_local.1.matrix().clone()))
        .collect();
    // minors scale like the second Schmidt coefficient near a product state
    let target = cfg.tolerances.orthogonality * 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[17]));
    let mut best: Option<(Vec<(CMat, CMat)>, f64)> = None;
    for attempt in 0..ATTEMPTS {
        let init = if attempt == 0 {
            start.clone()
        } else {
            let scale = 0.3 * attempt as f64;
            let mut kick = |m: &CMat| -> CMat {
                let params: Vec<f64> = (0..d * d)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        scale * z
                    })
                    .collect();
                expi_hermitian(&hermitian_from_params(&params, d)) * m
            };
            start.iter().map(|(a, b)| (kick(a), kick(b))).collect()
        };
        let (layers, err) = solve(&problem, init, target);
        let better = best.as_ref().map_or(true, |(_, e)| err < *e);
        if better {
            best = Some((layers, err));
        }
        if err <= target {
            break;
        }
    }
    let (layers, _) = best?;
    let mut out = protocol.clone();
    out.runs = layers
        .into_iter()
        .zip(&protocol.runs)
        .map(|((a, b), run)| Run {
            pre_local: (
                UnitaryOperator::trusted(nearest_unitary(&a), vec![d]),
                UnitaryOperator::trusted(nearest_unitary(&b), vec![d]),
            ),
            direction: run.direction,
        })
        .collect();
    out.certificate = None;
    Some(out)
}
