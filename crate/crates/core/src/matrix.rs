//! Dense complex matrices, unitary operators and pure states.
//!
//! Composite indices are row-major with the first factor most significant:
//! basis state `|i>|j>` of a `d (x) d` system sits at index `i * d + j`.
//! Every module in the crate uses this single convention.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Numerical thresholds shared by all modules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub unitarity: f64,
    pub orthogonality: f64,
    pub classification: f64,
    pub compile: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            unitarity: 1e-9,
            orthogonality: 1e-6,
            classification: 1e-8,
            compile: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("unitarity", self.unitarity),
            ("orthogonality", self.orthogonality),
            ("classification", self.classification),
            ("compile", self.compile),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value < 1e-2) {
                return Err(Error::Validation(format!(
                    "tolerance `{name}` must lie in (0, 1e-2), got {value}"
                )));
            }
        }
        Ok(())
    }
}

fn check_finite(m: &CMat) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation("matrix has non-finite entries".into()))
    }
}

/// `||M^dagger M - I||_F`.
pub fn unitarity_residual(m: &CMat) -> f64 {
    let n = m.ncols();
    (m.adjoint() * m - CMat::identity(n, n)).norm()
}

/// A square unitary matrix together with its subsystem dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOperator {
    matrix: CMat,
    dims: Vec<usize>,
    residual: f64,
}

impl UnitaryOperator {
    /// Validates squareness, finiteness, the dimension product and unitarity.
    pub fn new(matrix: CMat, dims: Vec<usize>, unitarity_tol: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Validation(format!(
                "matrix is {}x{}, expected square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        check_finite(&matrix)?;
        let product: usize = dims.iter().product();
        if dims.is_empty() || dims.contains(&0) || product != matrix.nrows() {
            return Err(Error::Validation(format!(
                "dims {:?} do not multiply to matrix size {}",
                dims,
                matrix.nrows()
            )));
        }
        let residual = unitarity_residual(&matrix);
        if residual > unitarity_tol {
            return Err(Error::Validation(format!(
                "unitarity residual {residual:.3e} exceeds tolerance {unitarity_tol:.1e}"
            )));
        }
        Ok(UnitaryOperator {
            matrix,
            dims,
            residual,
        })
    }

    /// Single-system operator with the default unitarity tolerance.
    pub fn from_matrix(matrix: CMat) -> Result<Self> {
        let n = matrix.nrows();
        Self::new(matrix, vec![n], Tolerances::default().unitarity)
    }

    /// Two-qudit operator on `d (x) d`.
    pub fn two_qudit(matrix: CMat, d: usize) -> Result<Self> {
        Self::new(matrix, vec![d, d], Tolerances::default().unitarity)
    }

    /// Internal constructor for products of already-validated operators.
    pub(crate) fn trusted(matrix: CMat, dims: Vec<usize>) -> Self {
        let residual = unitarity_residual(&matrix);
        UnitaryOperator {
            matrix,
            dims,
            residual,
        }
    }

    pub fn identity(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        UnitaryOperator {
            matrix: CMat::identity(n, n),
            dims,
            residual: 0.0,
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Local dimension `d` if this is a `d (x) d` operator.
    pub fn party_dim(&self) -> Option<usize> {
        match self.dims.as_slice() {
            [a, b] if a == b => Some(*a),
            _ => None,
        }
    }

    pub fn require_two_party(&self) -> Result<usize> {
        self.party_dim().ok_or_else(|| {
            Error::Validation(format!(
                "two-party operators require equal dimensions, got dims {:?}",
                self.dims
            ))
        })
    }

    pub fn adjoint(&self) -> Self {
        UnitaryOperator {
            matrix: self.matrix.adjoint(),
            dims: self.dims.clone(),
            residual: self.residual,
        }
    }

    /// Operator product `self * rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &UnitaryOperator) -> Result<Self> {
        check_same_dim(self.dim(), rhs.dim())?;
        Ok(Self::trusted(&self.matrix * &rhs.matrix, self.dims.clone()))
    }

    /// Multiplies by a global phase `e^{i phi}`.
    pub fn with_phase(&self, phi: f64) -> Self {
        UnitaryOperator {
            matrix: &self.matrix * C64::from_polar(1.0, phi),
            dims: self.dims.clone(),
            residual: self.residual,
        }
    }

    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        check_same_dim(self.dim(), state.dim())?;
        Ok(PureState {
            amplitudes: &self.matrix * &state.amplitudes,
            dims: state.dims.clone(),
        })
    }

    /// Reinterprets the subsystem split without touching the matrix.
    pub fn with_dims(mut self, dims: Vec<usize>) -> Result<Self> {
        if dims.iter().product::<usize>() != self.dim() {
            return Err(Error::Validation(format!(
                "dims {:?} do not multiply to {}",
                dims,
                self.dim()
            )));
        }
        self.dims = dims;
        Ok(self)
    }
}

pub(crate) fn check_same_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// A normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVec,
    dims: Vec<usize>,
}

impl PureState {
    pub fn new(amplitudes: CVec, dims: Vec<usize>) -> Result<Self> {
        if dims.iter().product::<usize>() != amplitudes.len() {
            return Err(Error::Validation(format!(
                "dims {:?} do not multiply to state length {}",
                dims,
                amplitudes.len()
            )));
        }
        if !amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Validation("state has non-finite amplitudes".into()));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("state norm {norm} is not 1")));
        }
        Ok(PureState { amplitudes, dims })
    }

    /// Normalizes `amplitudes` first; fails on the zero vector.
    pub fn normalized(amplitudes: CVec, dims: Vec<usize>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm < 1e-300 {
            return Err(Error::Validation("cannot normalize the zero vector".into()));
        }
        Self::new(amplitudes / C64::from(norm), dims)
    }

    pub fn basis(index: usize, dim: usize) -> Self {
        let mut v = CVec::zeros(dim);
        v[index] = ONE;
        PureState {
            amplitudes: v,
            dims: vec![dim],
        }
    }

    /// `(|0> + |1>) / sqrt(2)` embedded in dimension `dim >= 2`.
    pub fn plus(dim: usize) -> Self {
        let mut v = CVec::zeros(dim);
        v[0] = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        v[1] = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        PureState {
            amplitudes: v,
            dims: vec![dim],
        }
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amplitudes
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// Schmidt coefficients across the first cut `dims[0] | rest`, nonincreasing.
    pub fn schmidt_coefficients(&self) -> Vec<f64> {
        let a = self.dims[0];
        let b = self.dim() / a;
        schmidt_coefficients(&self.amplitudes, a, b)
    }

    /// Second Schmidt coefficient (0 for product states).
    pub fn entanglement(&self) -> f64 {
        self.schmidt_coefficients().get(1).copied().unwrap_or(0.0)
    }
}

/// Reshapes a bipartite vector into its `a x b` coefficient matrix.
pub fn coefficient_matrix(v: &CVec, a: usize, b: usize) -> CMat {
    CMat::from_fn(a, b, |i, j| v[i * b + j])
}

pub fn schmidt_coefficients(v: &CVec, a: usize, b: usize) -> Vec<f64> {
    svd(&coefficient_matrix(v, a, b)).values
}

/// Thin SVD `M = U diag(values) V^dagger`, values nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub values: Vec<f64>,
    pub v_adj: CMat,
}

impl Svd {
    pub fn recompose(&self) -> CMat {
        let k = self.values.len();
        let s = CMat::from_fn(k, k, |i, j| if i == j { C64::from(self.values[i]) } else { ZERO });
        &self.u * s * &self.v_adj
    }
}

fn raw_svd(m: &CMat) -> Option<Svd> {
    let svd = m.clone().try_svd(true, true, f64::EPSILON, 0)?;
    let u = svd.u?;
    let v_adj = svd.v_t?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| {
        svd.singular_values[y]
            .partial_cmp(&svd.singular_values[x])
            .unwrap_or(Ordering::Equal)
    });
    Some(Svd {
        u: CMat::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]),
        values: order.iter().map(|&j| svd.singular_values[j]).collect(),
        v_adj: CMat::from_fn(order.len(), v_adj.ncols(), |i, j| v_adj[(order[i], j)]),
    })
}

fn svd_error(m: &CMat, f: &Svd) -> f64 {
    let k = f.values.len();
    let id = CMat::identity(k, k);
    (f.recompose() - m).norm()
        + (f.u.adjoint() * &f.u - &id).norm()
        + (&f.v_adj * f.v_adj.adjoint() - &id).norm()
}

/// SVD with a reconstruction check.
///
/// The bidiagonal complex SVD in nalgebra occasionally returns a wrong
/// factorization for rank-deficient input; the adjoint and a fixed
/// column-rotated copy are tried in turn and the most accurate result kept.
pub fn svd(m: &CMat) -> Svd {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let accept = 1e-11 * (1.0 + scale);
    let mut best: Option<(f64, Svd)> = None;
    let consider = |f: Option<Svd>, best: &mut Option<(f64, Svd)>| -> bool {
        let Some(f) = f else { return false };
        let err = svd_error(m, &f);
        let ok = err <= accept;
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            *best = Some((err, f));
        }
        ok
    };
    if consider(raw_svd(m), &mut best) {
        return best.expect("accepted").1;
    }
    let flipped = raw_svd(&m.adjoint()).map(|f| Svd {
        u: f.v_adj.adjoint(),
        values: f.values,
        v_adj: f.u.adjoint(),
    });
    if consider(flipped, &mut best) {
        return best.expect("accepted").1;
    }
    for seed in 0..4 {
        let q = random_unitary(m.ncols(), 0x5EED + seed).into_matrix();
        let rotated = raw_svd(&(m * &q)).map(|f| Svd {
            u: f.u,
            values: f.values,
            v_adj: f.v_adj * q.adjoint(),
        });
        if consider(rotated, &mut best) {
            break;
        }
    }
    best.expect("at least one factorization").1
}

/// Kronecker product with concatenated subsystem dimensions.
pub trait Tensor: Sized {
    fn tensor(&self, other: &Self) -> Self;
}

impl Tensor for UnitaryOperator {
    fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        UnitaryOperator::trusted(self.matrix.kronecker(&other.matrix), dims)
    }
}

impl Tensor for PureState {
    fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        PureState {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
            dims,
        }
    }
}

pub fn tensor<T: Tensor>(a: &T, b: &T) -> T {
    a.tensor(b)
}

/// `min_phi ||U - e^{i phi} V||_F`.
///
/// The optimal phase is `arg tr(U^dagger V)`; the norm is then evaluated
/// directly rather than through `sqrt(2D - 2|tr(U^dagger V)|)`, which loses
/// half the significant digits near zero.
pub fn phase_distance(u: &UnitaryOperator, v: &UnitaryOperator) -> Result<f64> {
    check_same_dim(u.dim(), v.dim())?;
    Ok(phase_distance_mat(u.matrix(), v.matrix()))
}

pub fn phase_distance_mat(u: &CMat, v: &CMat) -> f64 {
    let t: C64 = u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
    let phase = if t.norm() > 0.0 { t.conj() / t.norm() } else { ONE };
    (u - v * phase).norm()
}

/// Eigen-decomposition of a unitary: `U = sum_j e^{i theta_j} |e_j><e_j|`.
#[derive(Debug, Clone)]
pub struct UnitaryEigen {
    /// Eigenphases in `[0, 2 pi)`, ascending.
    pub phases: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `phases`.
    pub vectors: CMat,
}

impl UnitaryEigen {
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.phases.iter().map(|&t| C64::from_polar(1.0, t)).collect()
    }

    pub fn vector(&self, j: usize) -> CVec {
        self.vectors.column(j).into_owned()
    }

    pub fn reconstruct(&self) -> CMat {
        let n = self.vectors.nrows();
        let mut out = CMat::zeros(n, n);
        for (j, &t) in self.phases.iter().enumerate() {
            let e = self.vectors.column(j);
            out += (&e * e.adjoint()) * C64::from_polar(1.0, t);
        }
        out
    }
}

pub fn canonical_phase(z: C64) -> f64 {
    let mut t = z.arg();
    if t < 0.0 {
        t += 2.0 * PI;
    }
    if t >= 2.0 * PI {
        t = 0.0;
    }
    t
}

/// Eigenphases and orthonormal eigenvectors of a unitary via complex Schur form.
///
/// For a normal matrix the Schur factor is diagonal, so the Schur vectors are
/// an orthonormal eigenbasis even inside degenerate eigenspaces.
pub fn unitary_eig(u: &UnitaryOperator) -> Result<UnitaryEigen> {
    unitary_eig_mat(u.matrix())
}

pub fn unitary_eig_mat(m: &CMat) -> Result<UnitaryEigen> {
    let n = m.nrows();
    if n == 0 {
        return Err(Error::Eigensolver("empty matrix".into()));
    }
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Eigensolver("complex Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let mut entries: Vec<(f64, CVec)> = (0..n)
        .map(|j| (canonical_phase(t[(j, j)]), q.column(j).into_owned()))
        .collect();

    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    // Tie-break numerically equal phases by eigenvector, for determinism.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && entries[end].0 - entries[start].0 <= 1e-12 {
            end += 1;
        }
        if end - start > 1 {
            entries[start..end].sort_by(|a, b| vector_order(&a.1, &b.1));
        }
        start = end;
    }

    let phases = entries.iter().map(|e| e.0).collect();
    let mut vectors = CMat::zeros(n, n);
    for (j, (_, v)) in entries.iter().enumerate() {
        vectors.set_column(j, v);
    }
    Ok(UnitaryEigen { phases, vectors })
}

/// Lexicographic order on the first significant component (by index, then magnitude).
fn vector_order(a: &CVec, b: &CVec) -> Ordering {
    let first = |v: &CVec| v.iter().position(|z| z.norm() > 1e-8).unwrap_or(v.len());
    let (ia, ib) = (first(a), first(b));
    ia.cmp(&ib).then_with(|| {
        let ma = a.get(ia).map(|z| z.norm()).unwrap_or(0.0);
        let mb = b.get(ib).map(|z| z.norm()).unwrap_or(0.0);
        mb.partial_cmp(&ma).unwrap_or(Ordering::Equal)
    })
}

/// Haar-random `d x d` unitary from a seeded Ginibre matrix and phase-fixed QR.
pub fn random_unitary(d: usize, seed: u64) -> UnitaryOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    haar_unitary(d, &mut rng)
}

pub fn haar_unitary<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> UnitaryOperator {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let g = CMat::from_fn(d, d, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re * scale, im * scale)
    });
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { ONE };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    UnitaryOperator::trusted(q, vec![d])
}

/// Haar-random pure state of dimension `d`.
pub fn haar_state<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> PureState {
    let v = CVec::from_fn(d, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    });
    PureState::normalized(v, vec![d]).expect("gaussian vector is nonzero")
}

/// `e^{iH}` for Hermitian `H`, via its Hermitian eigendecomposition.
pub fn expi_hermitian(h: &CMat) -> CMat {
    let herm = (h + h.adjoint()) * C64::from(0.5);
    let eig = herm.symmetric_eigen();
    let n = h.nrows();
    let mut phases = CMat::zeros(n, n);
    for j in 0..n {
        phases[(j, j)] = C64::from_polar(1.0, eig.eigenvalues[j]);
    }
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

/// Hermitian matrix from `n^2` real coordinates: diagonal, then real and
/// imaginary parts of the strict upper triangle.
pub fn hermitian_from_params(params: &[f64], n: usize) -> CMat {
    assert_eq!(params.len(), n * n, "need n^2 Hermitian coordinates");
    let mut h = CMat::zeros(n, n);
    let mut k = n;
    for i in 0..n {
        h[(i, i)] = C64::from(params[i]);
        for j in (i + 1)..n {
            let z = C64::new(params[k], params[k + 1]);
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
            k += 2;
        }
    }
    h
}

/// Closest unitary in Frobenius norm (unitary polar factor).
pub fn nearest_unitary(m: &CMat) -> CMat {
    let f = svd(m);
    f.u * f.v_adj
}

/// Basis completion: returns a unitary whose leading columns are `cols`
/// (assumed orthonormal).
pub fn complete_basis(cols: &[CVec], n: usize) -> CMat {
    let mut basis: Vec<CVec> = cols.to_vec();
    for k in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = CVec::zeros(n);
        v[k] = ONE;
        for b in &basis {
            let c = b.dotc(&v);
            v -= b * c;
        }
        // second pass for numerical orthogonality
        for b in &basis {
            let c = b.dotc(&v);
            v -= b * c;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.push(v / C64::from(norm));
        }
    }
    let mut out = CMat::zeros(n, n);
    for (j, b) in basis.iter().enumerate() {
        out.set_column(j, b);
    }
    out
}

pub fn frobenius(m: &CMat) -> f64 {
    m.norm()
}

pub fn trace(m: &CMat) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn diag(phases: &[f64]) -> CMat {
        let n = phases.len();
        CMat::from_fn(n, n, |i, j| if i == j { C64::from_polar(1.0, phases[i]) } else { ZERO })
    }

    #[test]
    fn rejects_non_unitary() {
        let mut m = CMat::identity(2, 2);
        m[(0, 0)] = C64::from(2.0);
        let err = UnitaryOperator::from_matrix(m).unwrap_err();
        assert!(err.to_string().contains("unitarity residual"));
    }

    #[test]
    fn rejects_bad_dims_and_shape() {
        assert!(UnitaryOperator::new(CMat::identity(4, 4), vec![2, 3], 1e-9).is_err());
        assert!(UnitaryOperator::new(CMat::zeros(2, 3), vec![2], 1e-9).is_err());
        let mut m = CMat::identity(2, 2);
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(UnitaryOperator::from_matrix(m).is_err());
    }

    #[test]
    fn two_party_dims() {
        let u = UnitaryOperator::identity(vec![2, 3]);
        assert_eq!(u.party_dim(), None);
        assert!(u.require_two_party().unwrap_err().to_string().contains("equal dimensions"));
        assert_eq!(UnitaryOperator::identity(vec![3, 3]).require_two_party().unwrap(), 3);
    }

    #[test]
    fn phase_distance_ignores_global_phase() {
        let u = random_unitary(3, 5);
        assert!(phase_distance(&u, &u.with_phase(1.3)).unwrap() < 1e-14);
        let v = random_unitary(3, 6);
        assert!(phase_distance(&u, &v).unwrap() > 1e-3);
    }

    #[test]
    fn phase_distance_small_perturbation_keeps_digits() {
        let eps = 1e-12;
        let a = diag(&[0.0, 0.0]);
        let b = diag(&[0.0, eps]);
        let d = phase_distance_mat(&a, &b);
        assert!((d - eps / 2f64.sqrt()).abs() < 1e-20, "{d:e}");
    }

    #[test]
    fn eig_of_diagonal() {
        let u = UnitaryOperator::from_matrix(diag(&[FRAC_PI_2, 0.0, PI])).unwrap();
        let e = unitary_eig(&u).unwrap();
        assert!((e.phases[0]).abs() < 1e-14);
        assert!((e.phases[1] - FRAC_PI_2).abs() < 1e-14);
        assert!((e.phases[2] - PI).abs() < 1e-14);
        assert!((e.reconstruct() - u.matrix()).norm() < 1e-13);
    }

    #[test]
    fn eig_reconstructs_haar() {
        for seed in 0..10 {
            let u = random_unitary(4, seed);
            let e = unitary_eig(&u).unwrap();
            assert!((e.reconstruct() - u.matrix()).norm() < 1e-12);
            assert!(unitarity_residual(&e.vectors) < 1e-12);
            assert!(e.phases.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn degenerate_eigenspace_is_orthonormal() {
        let q = random_unitary(4, 9).into_matrix();
        let m = &q * diag(&[0.3, 0.3, 0.3, 2.0]) * q.adjoint();
        let e = unitary_eig_mat(&m).unwrap();
        assert!(unitarity_residual(&e.vectors) < 1e-12);
        assert!((e.reconstruct() - m).norm() < 1e-12);
    }

    #[test]
    fn haar_sampler_is_seeded_and_unitary() {
        let a = random_unitary(5, 42);
        let b = random_unitary(5, 42);
        assert_eq!(a, b);
        assert!(a.residual() < 1e-13);
        assert_ne!(a, random_unitary(5, 43));
    }

    #[test]
    fn state_validation() {
        let v = CVec::from_vec(vec![ONE, ONE]);
        assert!(PureState::new(v.clone(), vec![2]).is_err());
        let s = PureState::normalized(v, vec![2]).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-15);
        assert!(PureState::normalized(CVec::zeros(2), vec![2]).is_err());
        assert!(PureState::new(CVec::from_vec(vec![ONE]), vec![2]).is_err());
    }

    #[test]
    fn schmidt_of_product_and_bell() {
        let p = PureState::plus(2).tensor(&PureState::basis(1, 2));
        assert!(p.entanglement() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = PureState::new(
            CVec::from_vec(vec![C64::from(h), ZERO, ZERO, C64::from(h)]),
            vec![2, 2],
        )
        .unwrap();
        let s = bell.schmidt_coefficients();
        assert!((s[0] - h).abs() < 1e-15 && (s[1] - h).abs() < 1e-15);
    }

    #[test]
    fn tensor_dims_concatenate() {
        let a = random_unitary(2, 1);
        let b = random_unitary(3, 2);
        let ab = tensor(&a, &b);
        assert_eq!(ab.dims(), &[2, 3]);
        assert_eq!(ab.dim(), 6);
        assert!(ab.residual() < 1e-13);
    }

    #[test]
    fn expi_of_pauli_x() {
        let x = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let t = 0.7;
        let e = expi_hermitian(&(&x * C64::from(t)));
        let expect = CMat::identity(2, 2) * C64::from(t.cos()) + &x * (I * t.sin());
        assert!((e - expect).norm() < 1e-14);
    }

    #[test]
    fn hermitian_params_roundtrip_shape() {
        let h = hermitian_from_params(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(h[(0, 0)], C64::from(1.0));
        assert_eq!(h[(1, 1)], C64::from(2.0));
        assert_eq!(h[(0, 1)], C64::new(3.0, 4.0));
        assert_eq!(h[(1, 0)], C64::new(3.0, -4.0));
    }

    #[test]
    fn nearest_unitary_fixes_scaled_unitary() {
        let u = random_unitary(3, 4).into_matrix();
        let n = nearest_unitary(&(&u * C64::from(1.7)));
        assert!((n - u).norm() < 1e-13);
    }

    #[test]
    fn completed_basis_is_unitary() {
        let a = PureState::plus(3).amplitudes().clone();
        let b = complete_basis(&[a.clone()], 3);
        assert!(unitarity_residual(&b) < 1e-13);
        assert!((b.column(0) - a).norm() < 1e-15);
    }

    #[test]
    fn tolerance_bounds() {
        assert!(Tolerances::default().validate().is_ok());
        let bad = Tolerances {
            compile: 0.0,
            ..Tolerances::default()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("compile"));
    }

    #[test]
    fn svd_survives_rank_one_complex_input() {
        // a rank-one matrix on which the plain bidiagonal SVD misfactors
        let s: u64 = 12475558861887638412;
        let a = random_unitary(3, s).into_matrix();
        let b = random_unitary(3, s ^ 5).into_matrix();
        let va = CMat::from_fn(9, 1, |i, _| a[(i / 3, i % 3)]);
        let vb = CMat::from_fn(1, 9, |_, j| b[(j / 3, j % 3)]);
        let r = va * vb;
        let f = svd(&r);
        assert!((f.recompose() - &r).norm() < 1e-12);
        assert!((f.values[0] - 3.0).abs() < 1e-12);
        assert!(f.values[1] < 1e-12);
    }

    #[test]
    fn svd_values_descend_and_factor() {
        for seed in 0..20 {
            let m = CMat::from_fn(4, 3, |i, j| C64::new((i * 3 + j) as f64 * 0.1, (seed as f64 + j as f64).sin()));
            let f = svd(&m);
            assert!(f.values.windows(2).all(|w| w[0] >= w[1]));
            assert!((f.recompose() - &m).norm() < 1e-12);
        }
    }

    #[test]
    fn canonical_phase_range() {
        assert_eq!(canonical_phase(C64::new(-1.0, -0.0)), PI);
        assert!((canonical_phase(C64::new(0.0, -1.0)) - 1.5 * PI).abs() < 1e-15);
        assert_eq!(canonical_phase(ONE), 0.0);
    }
}
