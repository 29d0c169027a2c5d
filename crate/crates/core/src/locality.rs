//! Locality classes of two-qudit unitaries.
//!
//! A two-qudit unitary maps every product state to a product state iff it is
//! `A (x) B` or `(A (x) B) P` with `P` the swap. Both tests run on the
//! operator Schmidt decomposition: `U` is a product operator iff the
//! realigned matrix `R_{(i,k),(j,l)} = U_{(i,j),(k,l)}` has rank one.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, Config};
use crate::error::{Error, Result};
use crate::gates::{embed_2x2, pauli_y_mat, pauli_z_mat, sigma_x_block, swap};
use crate::matrix::{
    haar_state, nearest_unitary, phase_distance, phase_distance_mat, svd, CMat, CVec, PureState,
    Tensor, Tolerances, UnitaryOperator, C64, I,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalityKind {
    ProductLocal,
    SwapLocal,
    Imprimitive,
}

impl LocalityKind {
    pub fn is_primitive(self) -> bool {
        self != LocalityKind::Imprimitive
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalityClass {
    pub kind: LocalityKind,
    /// `(A, B)` with `U ~ A (x) B` or `U ~ (A (x) B) P`.
    pub factors: Option<(UnitaryOperator, UnitaryOperator)>,
    /// Product input whose image is entangled.
    pub witness: Option<PureState>,
    /// Operator Schmidt coefficients of `U`, nonincreasing.
    pub schmidt_values: Vec<f64>,
}

/// `U = sum_m s_m A_m (x) B_m` with Frobenius-normalized factors.
#[derive(Debug, Clone)]
pub struct OperatorSchmidt {
    pub values: Vec<f64>,
    pub left: Vec<CMat>,
    pub right: Vec<CMat>,
}

impl OperatorSchmidt {
    pub fn reconstruct(&self) -> CMat {
        let d = self.left[0].nrows();
        let mut out = CMat::zeros(d * d, d * d);
        for ((s, a), b) in self.values.iter().zip(&self.left).zip(&self.right) {
            out += a.kronecker(b) * C64::from(*s);
        }
        out
    }

    /// Number of terms with `s_m / s_1` above `rel_tol`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let top = self.values.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            return 0;
        }
        self.values.iter().filter(|&&s| s / top > rel_tol).count()
    }
}

/// Realignment SVD of a `d (x) d` operator.
pub fn operator_schmidt(u: &UnitaryOperator) -> Result<OperatorSchmidt> {
    let d = u.require_two_party()?;
    Ok(operator_schmidt_mat(u.matrix(), d))
}

pub(crate) fn operator_schmidt_mat(m: &CMat, d: usize) -> OperatorSchmidt {
    let n = d * d;
    let mut r = CMat::zeros(n, n);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    r[(i * d + k, j * d + l)] = m[(i * d + j, k * d + l)];
                }
            }
        }
    }
    let f = svd(&r);
    let left = (0..n).map(|m_idx| CMat::from_fn(d, d, |i, k| f.u[(i * d + k, m_idx)])).collect();
    let right = (0..n).map(|m_idx| CMat::from_fn(d, d, |j, l| f.v_adj[(m_idx, j * d + l)])).collect();
    let values = f.values;
    OperatorSchmidt {
        values,
        left,
        right,
    }
}

/// Unitary factors `(A, B)` of a rank-one decomposition; the largest-magnitude
/// entry of `A` is made real positive and the phase moved into `B`.
fn product_factors(schmidt: &OperatorSchmidt) -> (CMat, CMat) {
    fix_phase(nearest_unitary(&schmidt.left[0]), nearest_unitary(&schmidt.right[0]))
}

fn fix_phase(mut a: CMat, mut b: CMat) -> (CMat, CMat) {
    let mut best = (0, 0);
    let mut mag = -1.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if a[(i, j)].norm() > mag + 1e-12 {
                mag = a[(i, j)].norm();
                best = (i, j);
            }
        }
    }
    let z = a[best];
    let phase = z / z.norm();
    a *= phase.conj();
    b *= phase;
    (a, b)
}

fn single(m: CMat) -> UnitaryOperator {
    let n = m.nrows();
    UnitaryOperator::trusted(m, vec![n])
}

pub fn classify(u: &UnitaryOperator, cfg: &Config) -> Result<LocalityClass> {
    let d = u.require_two_party()?;
    let tol = cfg.tolerances.classification;
    let schmidt = operator_schmidt_mat(u.matrix(), d);
    if schmidt.rank(tol) == 1 {
        let (a, b) = product_factors(&schmidt);
        return Ok(LocalityClass {
            kind: LocalityKind::ProductLocal,
            factors: Some((single(a), single(b))),
            witness: None,
            schmidt_values: schmidt.values,
        });
    }
    let swapped = u.matrix() * swap(d).matrix();
    let swapped_schmidt = operator_schmidt_mat(&swapped, d);
    if swapped_schmidt.rank(tol) == 1 {
        let (a, b) = product_factors(&swapped_schmidt);
        return Ok(LocalityClass {
            kind: LocalityKind::SwapLocal,
            factors: Some((single(a), single(b))),
            witness: None,
            schmidt_values: schmidt.values,
        });
    }
    let witness = imprimitivity_witness_scan(u, d, cfg)?;
    Ok(LocalityClass {
        kind: LocalityKind::Imprimitive,
        factors: None,
        witness: Some(witness),
        schmidt_values: schmidt.values,
    })
}

/// Product input whose image under `u` is entangled.
pub fn imprimitivity_witness(u: &UnitaryOperator, cfg: &Config) -> Result<PureState> {
    let class = classify(u, cfg)?;
    match class.kind {
        LocalityKind::Imprimitive => Ok(class.witness.expect("imprimitive class carries a witness")),
        kind => Err(Error::Precondition(format!(
            "operator is {kind:?}, no product input becomes entangled"
        ))),
    }
}

const RANDOM_WITNESS_PROBES: usize = 64;

/// Scan order: pairs from computational and Fourier basis vectors
/// (computational first), then seeded random product states.
fn imprimitivity_witness_scan(u: &UnitaryOperator, d: usize, cfg: &Config) -> Result<PureState> {
    let tol = cfg.tolerances.classification;
    let mut singles: Vec<PureState> = (0..d).map(|i| PureState::basis(i, d)).collect();
    for k in 0..d {
        let v = CVec::from_fn(d, |j, _| C64::from_polar(1.0 / (d as f64).sqrt(), 2.0 * PI * (j * k) as f64 / d as f64));
        singles.push(PureState::normalized(v, vec![d]).expect("unit vector"));
    }
    let mut scanned = 0;
    let entangles = |input: &PureState| -> bool {
        let out = u.apply(input).expect("dimensions checked");
        out.entanglement() > tol
    };
    for a in &singles {
        for b in &singles {
            scanned += 1;
            let input = a.tensor(b);
            if entangles(&input) {
                return Ok(input);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[3]));
    for _ in 0..RANDOM_WITNESS_PROBES {
        scanned += 1;
        let input = haar_state(d, &mut rng).tensor(&haar_state(d, &mut rng));
        if entangles(&input) {
            return Ok(input);
        }
    }
    Err(Error::WitnessNotFound { scanned })
}

/// `e^{i x u1 (x) u2}` with `u1 = u2 = sigma_x (+) 0_{d-2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalXX {
    /// Angle, reduced modulo the period of `x -> e^{i x u1 (x) u2}` up to phase.
    pub x: f64,
    /// `phase_distance(e^{i x u1 (x) u2}, U)`.
    pub residual: f64,
}

impl CanonicalXX {
    /// Period of `x` modulo global phase: `pi` for qubits (`u1 (x) u2` has
    /// spectrum `{1, -1}`), `2 pi` otherwise.
    pub fn period(d: usize) -> f64 {
        if d == 2 {
            PI
        } else {
            2.0 * PI
        }
    }

    /// Signed distance between two angles modulo the period, in `(-period/2, period/2]`.
    pub fn angle_gap(x: f64, y: f64, d: usize) -> f64 {
        let p = Self::period(d);
        let mut g = (x - y).rem_euclid(p);
        if g > p / 2.0 {
            g -= p;
        }
        g
    }
}

/// `u1 (x) u2` on `d (x) d`.
pub fn xx_generator(d: usize) -> CMat {
    let u = sigma_x_block(d);
    u.kronecker(&u)
}

/// `e^{i x u1 (x) u2}` in closed form: `K^3 = K` gives `I + (cos x - 1) K^2 + i sin x K`.
pub fn canonical_xx(x: f64, d: usize) -> UnitaryOperator {
    let k = xx_generator(d);
    let k2 = &k * &k;
    let n = d * d;
    let m = CMat::identity(n, n) + k2 * C64::from(x.cos() - 1.0) + k * (I * x.sin());
    UnitaryOperator::trusted(m, vec![d, d])
}

/// Single-qudit factors `(a, b)` of the four conjugators `(sigma_z (+) I) (x) I`,
/// `(sigma_y (+) I) (x) I`, `I (x) (sigma_z (+) I)`, `I (x) (sigma_y (+) I)`.
pub fn conjugator_factors(d: usize) -> [(CMat, CMat); 4] {
    let id = CMat::identity(d, d);
    let z = embed_2x2(&pauli_z_mat(), d);
    let y = embed_2x2(&pauli_y_mat(), d);
    [
        (z.clone(), id.clone()),
        (y.clone(), id.clone()),
        (id.clone(), z),
        (id, y),
    ]
}

pub fn lemma5_conjugators(d: usize) -> [UnitaryOperator; 4] {
    conjugator_factors(d).map(|(a, b)| UnitaryOperator::trusted(a.kronecker(&b), vec![d, d]))
}

/// Canonical form test: `U^dagger ~ A U A^dagger` for every conjugator, then
/// recovery of `x` from the `|omega, omega>` diagonal element.
///
/// All comparisons are modulo global phase. For `d >= 3` the phase reference is
/// `|d-1, d-1>`, a null vector of `u1 (x) u2`; for qubits it is
/// `|omega, omega-bar>` with eigenvalue `-1`, which fixes `x` modulo `pi`.
pub fn lemma5_extract(u: &UnitaryOperator, tol: &Tolerances) -> Option<CanonicalXX> {
    let d = u.party_dim()?;
    if d < 2 {
        return None;
    }
    let adj = u.matrix().adjoint();
    for a in lemma5_conjugators(d) {
        let conj = a.matrix() * u.matrix() * a.matrix().adjoint();
        if phase_distance_mat(&conj, &adj) > tol.classification {
            return None;
        }
    }

    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut omega = CVec::zeros(d);
    omega[0] = C64::from(h);
    omega[1] = C64::from(h);
    let ww = omega.kronecker(&omega);
    let top = ww.dotc(&(u.matrix() * &ww));
    let x = if d == 2 {
        let mut omega_bar = omega.clone();
        omega_bar[1] = C64::from(-h);
        let wb = omega.kronecker(&omega_bar);
        let reference = wb.dotc(&(u.matrix() * &wb));
        (top * reference.conj()).arg() / 2.0
    } else {
        let reference = u.matrix()[(d * d - 1, d * d - 1)];
        (top * reference.conj()).arg()
    };
    let residual = phase_distance(&canonical_xx(x, d), u).ok()?;
    (residual <= tol.classification).then_some(CanonicalXX { x, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::*;
    use crate::matrix::{expi_hermitian, random_unitary};

    fn cfg() -> Config {
        Config::default()
    }

    #[test]
    fn schmidt_of_product() {
        let u = random_unitary(3, 1).tensor(&random_unitary(3, 2));
        let s = operator_schmidt(&u).unwrap();
        assert!((s.values[0] - 3.0).abs() < 1e-10);
        assert!(s.values[1] < 1e-10);
        assert!((s.reconstruct() - u.matrix()).norm() < 1e-9);
    }

    #[test]
    fn schmidt_of_cnot_and_swap() {
        let s = operator_schmidt(&cnot()).unwrap();
        assert_eq!(s.rank(1e-8), 2);
        assert!((s.reconstruct() - cnot().matrix()).norm() < 1e-9);
        let p = operator_schmidt(&swap(2)).unwrap();
        for v in &p.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_product() {
        let u = pauli_x().tensor(&hadamard());
        let c = classify(&u, &cfg()).unwrap();
        assert_eq!(c.kind, LocalityKind::ProductLocal);
        let (a, b) = c.factors.unwrap();
        assert!(phase_distance(&a, &pauli_x()).unwrap() < 1e-10);
        assert!(phase_distance(&b, &hadamard()).unwrap() < 1e-10);
        assert!(phase_distance(&a.tensor(&b), &u).unwrap() < 1e-10);
    }

    #[test]
    fn classify_swap() {
        let c = classify(&swap(2), &cfg()).unwrap();
        assert_eq!(c.kind, LocalityKind::SwapLocal);
        let (a, b) = c.factors.unwrap();
        assert!(phase_distance(&a, &identity(2)).unwrap() < 1e-10);
        assert!(phase_distance(&b, &identity(2)).unwrap() < 1e-10);
    }

    #[test]
    fn phase_convention_on_factors() {
        let u = random_unitary(2, 5).tensor(&random_unitary(2, 6)).with_phase(0.9);
        let (a, _) = classify(&u, &cfg()).unwrap().factors.unwrap();
        let max = a.matrix().iter().max_by(|x, y| x.norm().partial_cmp(&y.norm()).unwrap()).unwrap();
        assert!(max.im.abs() < 1e-12 && max.re > 0.0);
    }

    #[test]
    fn cnot_witness_is_plus_zero() {
        let c = classify(&cnot(), &cfg()).unwrap();
        assert_eq!(c.kind, LocalityKind::Imprimitive);
        let w = c.witness.unwrap();
        let expected = PureState::plus(2).tensor(&PureState::basis(0, 2));
        assert!((w.inner(&expected).norm() - 1.0).abs() < 1e-12);
        let s = cnot().apply(&w).unwrap().schmidt_coefficients();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s[0] - h).abs() < 1e-12 && (s[1] - h).abs() < 1e-12);
    }

    #[test]
    fn cz_witness_is_plus_plus() {
        let w = imprimitivity_witness(&cz(), &cfg()).unwrap();
        let expected = PureState::plus(2).tensor(&PureState::plus(2));
        assert!((w.inner(&expected).norm() - 1.0).abs() < 1e-12);
        // CZ|+>|+> is maximally entangled
        let s = cz().apply(&w).unwrap().schmidt_coefficients();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s[0] - h).abs() < 1e-12 && (s[1] - h).abs() < 1e-12);
    }

    #[test]
    fn xx_quarter_turn_witness_is_zero_zero() {
        let u = UnitaryOperator::trusted(
            expi_hermitian(&(xx_generator(2) * C64::from(PI / 4.0))),
            vec![2, 2],
        );
        let w = imprimitivity_witness(&u, &cfg()).unwrap();
        assert!((w.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
        let out = u.apply(&w).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((out.amplitudes()[0] - C64::from(h)).norm() < 1e-12);
        assert!((out.amplitudes()[3] - I * h).norm() < 1e-12);
    }

    #[test]
    fn witness_refused_for_primitive() {
        assert!(matches!(
            imprimitivity_witness(&swap(3), &cfg()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn canonical_xx_matches_exponential() {
        for d in [2, 3, 4] {
            let direct = expi_hermitian(&(xx_generator(d) * C64::from(0.7)));
            assert!((canonical_xx(0.7, d).matrix() - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn canonical_form_recovers_angle() {
        let tol = Tolerances::default();
        let r = lemma5_extract(&canonical_xx(0.7, 3), &tol).unwrap();
        assert!((r.x - 0.7).abs() < 1e-12);
        assert!(r.residual <= 1e-9);
        let r = lemma5_extract(&canonical_xx(0.7, 2).with_phase(1.1), &tol).unwrap();
        assert!(CanonicalXX::angle_gap(r.x, 0.7, 2).abs() < 1e-12);
        let r = lemma5_extract(&UnitaryOperator::identity(vec![2, 2]), &tol).unwrap();
        assert!(r.x.abs() < 1e-12);
    }

    #[test]
    fn canonical_form_rejects_cnot() {
        assert!(lemma5_extract(&cnot(), &Tolerances::default()).is_none());
        // the sigma_y conjugation on Alice fails: it flips the control
        let a = &lemma5_conjugators(2)[1];
        let conj = a.matrix() * cnot().matrix() * a.matrix().adjoint();
        assert!(phase_distance_mat(&conj, &cnot().matrix().adjoint()) > 0.1);
    }

    #[test]
    fn canonical_form_rejects_local_phase_flip() {
        // passes every conjugation test up to phase, but is not canonical
        let u = pauli_z().tensor(&identity(2));
        assert!(lemma5_extract(&u, &Tolerances::default()).is_none());
    }
}
