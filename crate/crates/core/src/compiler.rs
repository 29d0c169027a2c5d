//! Circuit words over an imprimitive black box.
//!
//! A word `L_0 Q^{+-1} L_1 ... Q^{+-1} L_n` alternates local layers
//! `L_k = a_k (x) b_k` with uses of the box (forward or reverse). Items are
//! stored in matrix-product order: `items[0]` is the leftmost factor, i.e. the
//! last operation applied in time.
//!
//! Synthesis maximizes `|tr(T^dagger W)|` by alternating polar updates: with
//! every other factor fixed, the optimal single-qudit unitary is the polar
//! factor of a `d x d` environment matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, Config};
use crate::error::{Error, Result};
use crate::gates::z_d;
use crate::locality::canonical_xx;
use crate::matrix::{
    check_same_dim, haar_unitary, phase_distance_mat, svd, trace, CMat, UnitaryOperator, C64,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WordItem {
    LocalLayer(UnitaryOperator, UnitaryOperator),
    Box(Direction),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitWord {
    pub items: Vec<WordItem>,
    pub box_uses: usize,
    pub achieved_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompileTarget {
    ExactMatrix(UnitaryOperator),
    /// `|0><0| (x) I + (I - |0><0|) (x) Z_d`.
    ControlledForm,
    /// `e^{i u1 (x) u2}`.
    CanonicalXX,
}

impl CompileTarget {
    pub fn matrix(&self, d: usize) -> Result<CMat> {
        match self {
            CompileTarget::ExactMatrix(t) => {
                let td = t.require_two_party()?;
                check_same_dim(d, td)?;
                Ok(t.matrix().clone())
            }
            CompileTarget::ControlledForm => Ok(controlled_form(d)),
            CompileTarget::CanonicalXX => Ok(canonical_xx(1.0, d).into_matrix()),
        }
    }
}

/// `|0><0| (x) I + (I - |0><0|) (x) Z_d`.
pub fn controlled_form(d: usize) -> CMat {
    crate::gates::controlled(&z_d(d)).into_matrix()
}

/// Projector `I - |0><0|` of the control qudit, the branch where `Z_d` acts.
pub fn controlled_form_active(d: usize) -> CMat {
    let mut p = CMat::identity(d, d);
    p[(0, 0)] = C64::from(0.0);
    p
}

/// Required parity of the number of box uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parity {
    #[default]
    Any,
    Even,
}

impl CircuitWord {
    /// Word with one forward box between identity layers.
    pub fn single_box(d: usize) -> Self {
        let id = || UnitaryOperator::identity(vec![d]);
        CircuitWord {
            items: vec![
                WordItem::LocalLayer(id(), id()),
                WordItem::Box(Direction::Forward),
                WordItem::LocalLayer(id(), id()),
            ],
            box_uses: 1,
            achieved_error: 0.0,
        }
    }

    /// Word for the adjoint: reversed order, adjoint layers, flipped boxes.
    pub fn reverse_and_flip(&self) -> Self {
        let items = self
            .items
            .iter()
            .rev()
            .map(|item| match item {
                WordItem::LocalLayer(a, b) => WordItem::LocalLayer(a.adjoint(), b.adjoint()),
                WordItem::Box(dir) => WordItem::Box(dir.flip()),
            })
            .collect();
        CircuitWord {
            items,
            box_uses: self.box_uses,
            achieved_error: self.achieved_error,
        }
    }

    pub fn directions(&self) -> Vec<Direction> {
        self.items
            .iter()
            .filter_map(|item| match item {
                WordItem::Box(dir) => Some(*dir),
                _ => None,
            })
            .collect()
    }

    fn from_layers(layers: &[(CMat, CMat)], pattern: &[Direction], error: f64) -> Self {
        let d = layers[0].0.nrows();
        let op = |m: &CMat| UnitaryOperator::trusted(m.clone(), vec![d]);
        let mut items = Vec::with_capacity(2 * layers.len());
        for (k, (a, b)) in layers.iter().enumerate() {
            items.push(WordItem::LocalLayer(op(a), op(b)));
            if let Some(dir) = pattern.get(k) {
                items.push(WordItem::Box(*dir));
            }
        }
        CircuitWord {
            items,
            box_uses: pattern.len(),
            achieved_error: error,
        }
    }
}

/// Matrix product of the word with `q` substituted for forward boxes and
/// `q^dagger` for reverse boxes.
pub fn evaluate_word(word: &CircuitWord, q: &UnitaryOperator) -> Result<UnitaryOperator> {
    let d = q.require_two_party()?;
    let q_adj = q.matrix().adjoint();
    let mut out = CMat::identity(d * d, d * d);
    for item in &word.items {
        match item {
            WordItem::LocalLayer(a, b) => {
                check_same_dim(d, a.dim())?;
                check_same_dim(d, b.dim())?;
                out = &out * a.matrix().kronecker(b.matrix());
            }
            WordItem::Box(Direction::Forward) => out = &out * q.matrix(),
            WordItem::Box(Direction::Reverse) => out = &out * &q_adj,
        }
    }
    Ok(UnitaryOperator::trusted(out, vec![d, d]))
}

/// Direction patterns of length `n`, by reverse count then lexicographically,
/// at most `limit` of them.
pub fn direction_patterns(n: usize, limit: usize) -> Vec<Vec<Direction>> {
    let mut out = Vec::new();
    for reverses in 0..=n {
        let mut chosen: Vec<usize> = (0..reverses).collect();
        loop {
            if out.len() >= limit {
                return out;
            }
            let mut pattern = vec![Direction::Forward; n];
            for &i in &chosen {
                pattern[i] = Direction::Reverse;
            }
            out.push(pattern);
            if !next_combination(&mut chosen, n) {
                break;
            }
        }
    }
    out
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Direction patterns tried per depth.
pub const PATTERNS_PER_DEPTH: usize = 8;
const MAX_SWEEPS: usize = 400;
const POLISH_SWEEPS: usize = 4000;

pub fn compile(
    q: &UnitaryOperator,
    target: &CompileTarget,
    max_boxes: usize,
    cfg: &Config,
) -> Result<CircuitWord> {
    compile_with_parity(q, target, max_boxes, Parity::Any, cfg)
}

pub fn compile_with_parity(
    q: &UnitaryOperator,
    target: &CompileTarget,
    max_boxes: usize,
    parity: Parity,
    cfg: &Config,
) -> Result<CircuitWord> {
    let d = q.require_two_party()?;
    if max_boxes == 0 {
        return Err(Error::Validation("max_boxes must be at least 1".into()));
    }
    let t = target.matrix(d)?;
    let tol = cfg.tolerances.compile;
    let q_adj = q.matrix().adjoint();
    let mut best: Option<(f64, Vec<(CMat, CMat)>, Vec<Direction>)> = None;

    for n in 1..=max_boxes {
        if parity == Parity::Even && n % 2 == 1 {
            continue;
        }
        for (p_idx, pattern) in direction_patterns(n, PATTERNS_PER_DEPTH).into_iter().enumerate() {
            let boxes: Vec<&CMat> = pattern
                .iter()
                .map(|dir| match dir {
                    Direction::Forward => q.matrix(),
                    Direction::Reverse => &q_adj,
                })
                .collect();
            for restart in 0..cfg.restarts.max(1) {
                let mut layers = initial_layers(d, n, restart, derive_seed(cfg.seed, &[n as u64, p_idx as u64, restart as u64]));
                let mut err = sweep(&mut layers, &boxes, &t, MAX_SWEEPS, tol * 1e-3);
                if err <= tol {
                    err = sweep(&mut layers, &boxes, &t, POLISH_SWEEPS, 1e-14);
                    return Ok(CircuitWord::from_layers(&layers, &pattern, err));
                }
                if best.as_ref().map_or(true, |(e, _, _)| err < *e) {
                    best = Some((err, layers, pattern.clone()));
                }
            }
        }
    }
    let best_error = best.map_or(f64::INFINITY, |(e, _, _)| e);
    Err(Error::CompileFailed {
        max_boxes,
        best_error,
    })
}

fn initial_layers(d: usize, n: usize, restart: usize, seed: u64) -> Vec<(CMat, CMat)> {
    if restart == 0 {
        return vec![(CMat::identity(d, d), CMat::identity(d, d)); n + 1];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..=n)
        .map(|_| {
            (
                haar_unitary(d, &mut rng).into_matrix(),
                haar_unitary(d, &mut rng).into_matrix(),
            )
        })
        .collect()
}

fn word_matrix(layers: &[(CMat, CMat)], boxes: &[&CMat]) -> CMat {
    let mut out = layers[0].0.kronecker(&layers[0].1);
    for (k, b) in boxes.iter().enumerate() {
        out = out * *b * layers[k + 1].0.kronecker(&layers[k + 1].1);
    }
    out
}

/// Alternating polar sweeps; returns the final phase distance to `t`.
fn sweep(layers: &mut [(CMat, CMat)], boxes: &[&CMat], t: &CMat, max_sweeps: usize, stop: f64) -> f64 {
    let n = boxes.len();
    let dd = t.nrows();
    let t_adj = t.adjoint();
    let mut err = phase_distance_mat(&word_matrix(layers, boxes), t);
    let mut stalled = 0;
    for _ in 0..max_sweeps {
        if err <= stop {
            break;
        }
        // suffix[k] = B_{k+1} L_{k+1} ... B_n L_n
        let mut suffix = vec![CMat::identity(dd, dd); n + 1];
        for k in (0..n).rev() {
            let next = layers[k + 1].0.kronecker(&layers[k + 1].1);
            suffix[k] = boxes[k] * next * &suffix[k + 1];
        }
        let mut prefix = CMat::identity(dd, dd);
        for k in 0..=n {
            let env = &suffix[k] * &t_adj * &prefix;
            let (a, b) = &mut layers[k];
            *a = polar_left(&env, b);
            *b = polar_right(&env, a);
            if k < n {
                prefix = prefix * layers[k].0.kronecker(&layers[k].1) * boxes[k];
            }
        }
        let new_err = phase_distance_mat(&word_matrix(layers, boxes), t);
        if err - new_err < 1e-15 * (1.0 + err) {
            stalled += 1;
            if stalled >= 10 {
                err = new_err.min(err);
                break;
            }
        } else {
            stalled = 0;
        }
        err = new_err;
    }
    err
}

/// Unitary `a` maximizing `|tr((a (x) b) M)|` for fixed `b`.
fn polar_left(m: &CMat, b: &CMat) -> CMat {
    let d = b.nrows();
    let n = CMat::from_fn(d, d, |k, i| {
        let mut s = C64::from(0.0);
        for j in 0..d {
            for l in 0..d {
                s += b[(j, l)] * m[(k * d + l, i * d + j)];
            }
        }
        s
    });
    polar_max(&n)
}

/// Unitary `b` maximizing `|tr((a (x) b) M)|` for fixed `a`.
fn polar_right(m: &CMat, a: &CMat) -> CMat {
    let d = a.nrows();
    let n = CMat::from_fn(d, d, |l, j| {
        let mut s = C64::from(0.0);
        for i in 0..d {
            for k in 0..d {
                s += a[(i, k)] * m[(k * d + l, i * d + j)];
            }
        }
        s
    });
    polar_max(&n)
}

/// `argmax_U Re tr(U N)` over unitaries: `U = Y X^dagger` for `N = X S Y^dagger`.
fn polar_max(n: &CMat) -> CMat {
    let f = svd(n);
    f.v_adj.adjoint() * f.u.adjoint()
}

/// `|tr(T^dagger W)| / D`, the normalized fidelity of a word.
pub fn word_fidelity(w: &CMat, t: &CMat) -> f64 {
    trace(&(t.adjoint() * w)).norm() / t.nrows() as f64
}
