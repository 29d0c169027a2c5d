//! Independent simulation and certification of LOCC protocols.
//!
//! Nothing cached in a protocol is trusted: both branches are re-simulated
//! from the input, the product structure is checked after every run, and the
//! measurement plan is checked against the simulated outputs.

use serde::{Deserialize, Serialize};

use crate::compiler::Direction;
use crate::error::Result;
use crate::matrix::{
    check_same_dim, coefficient_matrix, schmidt_coefficients, CMat, CVec, PureState, Tensor,
    Tolerances, UnitaryOperator,
};
use crate::protocol::{LoccProtocol, MeasurementPlan, Party};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    U,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub run: usize,
    pub branch: Branch,
    pub second_schmidt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub overlap: f64,
    /// Max second Schmidt coefficient over both branches, the input and every run.
    pub schmidt_second_max: f64,
    /// Party whose marginal outputs are orthogonal (Alice checked first).
    pub measuring_party: Option<Party>,
    pub box_uses: usize,
    pub per_run: Vec<RunTrace>,
    /// Probability that the plan names the true hypothesis, for `U` then `V`.
    pub success_probabilities: [f64; 2],
    pub plan_valid: bool,
    pub passed: bool,
}

/// State after applying the protocol with `boxm` in the box.
pub fn simulate(protocol: &LoccProtocol, boxm: &UnitaryOperator) -> Result<PureState> {
    let (state, _) = trace_branch(protocol, boxm)?;
    Ok(state)
}

/// Final state and the second Schmidt coefficient after each run.
pub fn trace_branch(protocol: &LoccProtocol, boxm: &UnitaryOperator) -> Result<(PureState, Vec<f64>)> {
    let d = boxm.require_two_party()?;
    let (alice, bob) = &protocol.input;
    check_same_dim(d, alice.dim())?;
    check_same_dim(d, bob.dim())?;
    let q = boxm.matrix();
    let q_adj = q.adjoint();
    let mut state = alice.tensor(bob).amplitudes().clone();
    let mut trace = Vec::with_capacity(protocol.runs.len());
    for run in &protocol.runs {
        let (a, b) = &run.pre_local;
        check_same_dim(d, a.dim())?;
        check_same_dim(d, b.dim())?;
        state = apply_local(&state, a.matrix(), b.matrix());
        state = match run.direction {
            Direction::Forward => q * state,
            Direction::Reverse => &q_adj * state,
        };
        trace.push(second_schmidt(&state, d));
    }
    Ok((PureState::normalized(state, vec![d, d])?, trace))
}

/// `(a (x) b) psi` without forming the Kronecker product.
pub fn apply_local(psi: &CVec, a: &CMat, b: &CMat) -> CVec {
    let d = a.nrows();
    let c = coefficient_matrix(psi, d, d);
    let out = a * c * b.transpose();
    CVec::from_fn(d * d, |idx, _| out[(idx / d, idx % d)])
}

pub fn second_schmidt(psi: &CVec, d: usize) -> f64 {
    schmidt_coefficients(psi, d, d).get(1).copied().unwrap_or(0.0)
}

/// Reduced density matrix of one party.
pub fn marginal(psi: &CVec, d: usize, party: Party) -> CMat {
    let c = coefficient_matrix(psi, d, d);
    match party {
        Party::Alice => &c * c.adjoint(),
        Party::Bob => (c.adjoint() * &c).transpose(),
    }
}

/// `sqrt(tr(rho sigma))` of the two marginals; zero iff they have orthogonal supports.
pub fn marginal_overlap(psi: &CVec, phi: &CVec, d: usize, party: Party) -> f64 {
    let rho = marginal(psi, d, party);
    let sigma = marginal(phi, d, party);
    (rho * sigma).trace().re.max(0.0).sqrt()
}

/// First party (Alice, then Bob) whose marginal outputs are orthogonal.
pub fn orthogonal_party(psi: &CVec, phi: &CVec, d: usize, tol: f64) -> Option<Party> {
    [Party::Alice, Party::Bob]
        .into_iter()
        .find(|&p| marginal_overlap(psi, phi, d, p) <= tol)
}

/// Probability of each outcome of `plan` on `psi`.
pub fn outcome_probabilities(plan: &MeasurementPlan, psi: &CVec, d: usize) -> Vec<f64> {
    let rho = marginal(psi, d, plan.party);
    plan.basis
        .column_iter()
        .map(|b| {
            let b: CVec = b.into_owned();
            b.dotc(&(&rho * &b)).re.clamp(0.0, 1.0)
        })
        .collect()
}

fn success_probability(plan: &MeasurementPlan, psi: &CVec, d: usize, hypothesis: usize) -> f64 {
    outcome_probabilities(plan, psi, d)
        .into_iter()
        .zip(&plan.decision)
        .filter(|(_, h)| **h == Some(hypothesis))
        .map(|(p, _)| p)
        .sum()
}

/// Certificate for `protocol` separating `u` (hypothesis 0) from `v` (hypothesis 1).
pub fn verify(
    protocol: &LoccProtocol,
    u: &UnitaryOperator,
    v: &UnitaryOperator,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let d = u.require_two_party()?;
    check_same_dim(d, v.require_two_party()?)?;
    let (out_u, trace_u) = trace_branch(protocol, u)?;
    let (out_v, trace_v) = trace_branch(protocol, v)?;
    let (psi, phi) = (out_u.amplitudes(), out_v.amplitudes());

    let input = protocol.input.0.tensor(&protocol.input.1);
    let mut schmidt_max = second_schmidt(input.amplitudes(), d);
    let mut per_run = Vec::with_capacity(2 * protocol.runs.len());
    for (branch, trace) in [(Branch::U, &trace_u), (Branch::V, &trace_v)] {
        for (run, &s) in trace.iter().enumerate() {
            schmidt_max = schmidt_max.max(s);
            per_run.push(RunTrace {
                run,
                branch,
                second_schmidt: s,
            });
        }
    }
    let overlap = psi.dotc(phi).norm();
    let measuring_party = orthogonal_party(psi, phi, d, tol.orthogonality);

    let plan = &protocol.measurement;
    let basis_ok = plan.basis.nrows() == d
        && (plan.basis.adjoint() * &plan.basis - CMat::identity(plan.basis.ncols(), plan.basis.ncols()))
            .norm()
            <= 1e-10
        && plan.basis.ncols() == d
        && plan.decision.len() == d;
    let success = if basis_ok {
        [success_probability(plan, psi, d, 0), success_probability(plan, phi, d, 1)]
    } else {
        [0.0, 0.0]
    };
    let plan_valid = basis_ok && success.iter().all(|p| *p >= 1.0 - tol.orthogonality);

    Ok(VerificationReport {
        overlap,
        schmidt_second_max: schmidt_max,
        measuring_party,
        box_uses: protocol.runs.len(),
        per_run,
        success_probabilities: success,
        plan_valid,
        passed: overlap <= tol.orthogonality && schmidt_max <= tol.orthogonality,
    })
}

/// Measurement on `party` separating the two marginals: the leading
/// eigenvectors of both, completed to a basis.
pub fn plan_for(psi: &CVec, phi: &CVec, d: usize, party: Party) -> MeasurementPlan {
    let lead = |x: &CVec| -> CVec {
        let eig = marginal(x, d, party).symmetric_eigen();
        let (idx, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &l)| if l > acc.1 { (i, l) } else { acc });
        eig.eigenvectors.column(idx).into_owned()
    };
    let a = lead(psi);
    let mut b = lead(phi);
    b -= &a * a.dotc(&b);
    let b = b.normalize();
    let basis = crate::matrix::complete_basis(&[a, b], d);
    let mut decision = vec![None; d];
    decision[0] = Some(0);
    decision[1] = Some(1);
    MeasurementPlan {
        party,
        basis,
        decision,
    }
}
