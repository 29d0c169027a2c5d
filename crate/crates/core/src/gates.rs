//! Standard gates used throughout the crate and its tests.

use crate::matrix::{CMat, Tensor, UnitaryOperator, C64, I, ONE, ZERO};

fn single(m: CMat) -> UnitaryOperator {
    let n = m.nrows();
    UnitaryOperator::trusted(m, vec![n])
}

fn two(m: CMat, d: usize) -> UnitaryOperator {
    UnitaryOperator::trusted(m, vec![d, d])
}

pub fn pauli_x_mat() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y_mat() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z_mat() -> CMat {
    CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn identity(d: usize) -> UnitaryOperator {
    UnitaryOperator::identity(vec![d])
}

pub fn pauli_x() -> UnitaryOperator {
    single(pauli_x_mat())
}

pub fn pauli_y() -> UnitaryOperator {
    single(pauli_y_mat())
}

pub fn pauli_z() -> UnitaryOperator {
    single(pauli_z_mat())
}

pub fn hadamard() -> UnitaryOperator {
    let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    single(CMat::from_row_slice(2, 2, &[h, h, h, -h]))
}

/// `diag(e^{i phi_0}, e^{i phi_1}, ...)`.
pub fn phase_diag(phases: &[f64]) -> UnitaryOperator {
    let n = phases.len();
    let mut m = CMat::zeros(n, n);
    for (j, &p) in phases.iter().enumerate() {
        m[(j, j)] = C64::from_polar(1.0, p);
    }
    single(m)
}

/// `m (+) I_{d-2}` for a 2x2 block `m`.
pub fn embed_2x2(m: &CMat, d: usize) -> CMat {
    assert!(d >= 2 && m.nrows() == 2);
    let mut out = CMat::identity(d, d);
    out.view_mut((0, 0), (2, 2)).copy_from(m);
    out
}

/// `m (+) 0_{d-2}` for a 2x2 block `m`.
pub fn embed_2x2_zero(m: &CMat, d: usize) -> CMat {
    assert!(d >= 2 && m.nrows() == 2);
    let mut out = CMat::zeros(d, d);
    out.view_mut((0, 0), (2, 2)).copy_from(m);
    out
}

/// `sigma_x (+) 0_{d-2}`.
pub fn sigma_x_block(d: usize) -> CMat {
    embed_2x2_zero(&pauli_x_mat(), d)
}

/// `diag(-1, 1, ..., 1)`.
pub fn z_d(d: usize) -> UnitaryOperator {
    let mut m = CMat::identity(d, d);
    m[(0, 0)] = -ONE;
    single(m)
}

/// Swap on `d (x) d`: `P|x>|y> = |y>|x>`.
pub fn swap(d: usize) -> UnitaryOperator {
    let n = d * d;
    let mut m = CMat::zeros(n, n);
    for x in 0..d {
        for y in 0..d {
            m[(y * d + x, x * d + y)] = ONE;
        }
    }
    two(m, d)
}

pub fn cnot() -> UnitaryOperator {
    let mut m = CMat::zeros(4, 4);
    m[(0, 0)] = ONE;
    m[(1, 1)] = ONE;
    m[(2, 3)] = ONE;
    m[(3, 2)] = ONE;
    two(m, 2)
}

pub fn cz() -> UnitaryOperator {
    let mut m = CMat::identity(4, 4);
    m[(3, 3)] = -ONE;
    two(m, 2)
}

/// `|0><0| (x) I + (I - |0><0|) (x) target`.
pub fn controlled(target: &UnitaryOperator) -> UnitaryOperator {
    let d = target.dim();
    let mut p0 = CMat::zeros(d, d);
    p0[(0, 0)] = ONE;
    let p1 = CMat::identity(d, d) - &p0;
    two(p0.kronecker(&CMat::identity(d, d)) + p1.kronecker(target.matrix()), d)
}

/// `A (x) B` as a two-qudit operator.
pub fn local(a: &UnitaryOperator, b: &UnitaryOperator) -> UnitaryOperator {
    a.tensor(b)
}
