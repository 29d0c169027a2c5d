#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use unidisc::gates::swap;
use unidisc::{random_unitary, UnitaryOperator};

pub type CMat = DMatrix<C64>;

/// Smallest arc holding all phases: try every phase as the arc start.
pub fn brute_force_arc(phases: &[f64]) -> f64 {
    let tau = 2.0 * PI;
    phases
        .iter()
        .map(|&s| {
            phases
                .iter()
                .map(|&p| (p - s).rem_euclid(tau))
                .map(|g| if tau - g < 1e-13 { 0.0 } else { g })
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn diag_unitary(phases: &[f64]) -> UnitaryOperator {
    let n = phases.len();
    let m = CMat::from_fn(n, n, |i, j| {
        if i == j {
            C64::from_polar(1.0, phases[i])
        } else {
            C64::new(0.0, 0.0)
        }
    });
    UnitaryOperator::from_matrix(m).unwrap()
}

pub fn haar(d: usize, seed: u64) -> UnitaryOperator {
    random_unitary(d, seed)
}

pub fn haar_two(d: usize, seed: u64) -> UnitaryOperator {
    random_unitary(d * d, seed).with_dims(vec![d, d]).unwrap()
}

pub fn kron(a: &UnitaryOperator, b: &UnitaryOperator) -> UnitaryOperator {
    let d = a.dim();
    UnitaryOperator::new(a.matrix().kronecker(b.matrix()), vec![d, d], 1e-9).unwrap()
}

pub fn swap_type(a: &UnitaryOperator, b: &UnitaryOperator) -> UnitaryOperator {
    let d = a.dim();
    let m = a.matrix().kronecker(b.matrix()) * swap(d).matrix();
    UnitaryOperator::new(m, vec![d, d], 1e-9).unwrap()
}

/// `||U - e^{i phi} V||_F` minimized by a dense scan refined with golden section.
pub fn scan_phase_distance(u: &CMat, v: &CMat) -> f64 {
    let f = |phi: f64| (u - v * C64::from_polar(1.0, phi)).norm();
    let steps = 720;
    let (mut best, mut arg) = (f64::INFINITY, 0.0);
    for k in 0..steps {
        let phi = 2.0 * PI * k as f64 / steps as f64;
        let val = f(phi);
        if val < best {
            best = val;
            arg = phi;
        }
    }
    let h = 2.0 * PI / steps as f64;
    let (mut lo, mut hi) = (arg - h, arg + h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f((lo + hi) / 2.0).min(best)
}

/// `B_N ... B_1 B psi` for box `b` with aux ops applied between uses.
pub fn run_sequence(b: &CMat, aux: &[&CMat], psi: &nalgebra::DVector<C64>) -> nalgebra::DVector<C64> {
    let mut s = b * psi;
    for x in aux {
        s = b * (*x * s);
    }
    s
}

/// Second singular value of the `d x d` reshaping of `psi`.
pub fn second_schmidt(psi: &nalgebra::DVector<C64>, d: usize) -> f64 {
    let c = CMat::from_fn(d, d, |i, j| psi[i * d + j]);
    let mut s: Vec<f64> = c.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s.get(1).copied().unwrap_or(0.0)
}
