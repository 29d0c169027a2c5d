//! LOCC discrimination protocols for two-qudit unitaries.
//!
//! A protocol feeds a product input `|a>|b>` through a flat list of runs, each
//! a local layer `A (x) B` followed by one use of the box (or its reverse), and
//! ends with a projective measurement by one party. The construction
//! dispatches on the locality classes of `U` and `V`:
//!
//! * `IA` both product: sequential scheme on the party whose factors differ;
//! * `IB` product vs swap-type: one run with a matched input;
//! * `IC` both swap-type: the wrapper `X (X1 (x) X2) X^dagger` reduces to `IA`;
//! * `IIA`/`IIB` one imprimitive: a compiled word turns it into a controlled
//!   unitary, the other into a product, and Bob runs a sequential scheme;
//! * `IIIA`, `IIIB_EQUAL`, `IIIB_SCALED` both imprimitive: a compiled word
//!   sends `U` to `e^{i u1 (x) u2}` and the image of `V` decides the reduction.
//!
//! Wrappers nest by substituting a circuit into every box slot of another.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compiler::{
    compile, compile_with_parity, CircuitWord, CompileTarget, Direction, Parity, WordItem,
};
use crate::config::{derive_seed, Config};
use crate::error::{Error, Result};
use crate::gates::{sigma_x_block, z_d};
use crate::locality::{classify, conjugator_factors, lemma5_extract, CanonicalXX, LocalityClass, LocalityKind};
use crate::matrix::{
    check_same_dim, expi_hermitian, haar_unitary, phase_distance_mat, CMat, CVec, PureState,
    UnitaryOperator, C64, ONE,
};
use crate::refine::refine_product_path;
use crate::sequential::{find_sequential_scheme, required_runs};
use crate::spectral::ensure_distinct;
use crate::verify::{self, VerificationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseLabel {
    #[serde(rename = "IA")]
    IA,
    #[serde(rename = "IB")]
    IB,
    #[serde(rename = "IC")]
    IC,
    #[serde(rename = "IIA")]
    IIA,
    #[serde(rename = "IIB")]
    IIB,
    /// Both imprimitive and `f(V)` is not of the canonical form (a primitive
    /// `f(V)` is reduced through case II).
    #[serde(rename = "IIIA")]
    IIIA,
    #[serde(rename = "IIIB_EQUAL")]
    IIIBEqual,
    #[serde(rename = "IIIB_SCALED")]
    IIIBScaled,
    #[serde(rename = "IDENTITY_VS_OTHER")]
    IdentityVsOther,
}

impl CaseLabel {
    pub fn name(self) -> &'static str {
        match self {
            CaseLabel::IA => "IA",
            CaseLabel::IB => "IB",
            CaseLabel::IC => "IC",
            CaseLabel::IIA => "IIA",
            CaseLabel::IIB => "IIB",
            CaseLabel::IIIA => "IIIA",
            CaseLabel::IIIBEqual => "IIIB_EQUAL",
            CaseLabel::IIIBScaled => "IIIB_SCALED",
            CaseLabel::IdentityVsOther => "IDENTITY_VS_OTHER",
        }
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub pre_local: (UnitaryOperator, UnitaryOperator),
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPlan {
    pub party: Party,
    /// Orthonormal basis of the measuring party's qudit, as columns.
    pub basis: CMat,
    /// Hypothesis named by each outcome (0 for `U`, 1 for `V`).
    pub decision: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoccProtocol {
    pub case_label: CaseLabel,
    /// Every case visited by the construction, outermost first.
    pub case_path: Vec<CaseLabel>,
    pub runs: Vec<Run>,
    pub input: (PureState, PureState),
    pub measurement: MeasurementPlan,
    pub box_uses: usize,
    /// Local layers were re-fitted to keep every intermediate state product.
    pub refined: bool,
    pub certificate: Option<VerificationReport>,
}

impl LoccProtocol {
    pub fn dim(&self) -> usize {
        self.input.0.dim()
    }

    pub fn passed(&self) -> bool {
        self.certificate.as_ref().is_some_and(|c| c.passed)
    }
}

/// Time-ordered circuit with box placeholders.
#[derive(Debug, Clone, Default)]
pub(crate) struct Circuit {
    steps: Vec<Step>,
}

#[derive(Debug, Clone)]
enum Step {
    Local(CMat, CMat),
    Box(Direction),
}

impl Circuit {
    fn single_box() -> Self {
        Circuit {
            steps: vec![Step::Box(Direction::Forward)],
        }
    }

    /// Words are stored leftmost-first; circuits run first-applied-first.
    fn from_word(word: &CircuitWord) -> Self {
        let steps = word
            .items
            .iter()
            .rev()
            .map(|item| match item {
                WordItem::LocalLayer(a, b) => Step::Local(a.matrix().clone(), b.matrix().clone()),
                WordItem::Box(dir) => Step::Box(*dir),
            })
            .collect();
        Circuit { steps }
    }

    fn local(&mut self, a: CMat, b: CMat) {
        self.steps.push(Step::Local(a, b));
    }

    fn boxed(&mut self, dir: Direction) {
        self.steps.push(Step::Box(dir));
    }

    fn adjoint(&self) -> Self {
        let steps = self
            .steps
            .iter()
            .rev()
            .map(|s| match s {
                Step::Local(a, b) => Step::Local(a.adjoint(), b.adjoint()),
                Step::Box(dir) => Step::Box(dir.flip()),
            })
            .collect();
        Circuit { steps }
    }

    /// Replaces each forward box by `inner` and each reverse box by its adjoint.
    fn substitute(&self, inner: &Circuit) -> Circuit {
        let inner_adj = inner.adjoint();
        let mut steps = Vec::new();
        for s in &self.steps {
            match s {
                Step::Box(Direction::Forward) => steps.extend(inner.steps.iter().cloned()),
                Step::Box(Direction::Reverse) => steps.extend(inner_adj.steps.iter().cloned()),
                local => steps.push(local.clone()),
            }
        }
        Circuit { steps }
    }

    fn matrix(&self, q: &CMat) -> CMat {
        let n = q.nrows();
        let q_adj = q.adjoint();
        let mut out = CMat::identity(n, n);
        for s in &self.steps {
            out = match s {
                Step::Local(a, b) => a.kronecker(b) * out,
                Step::Box(Direction::Forward) => q * out,
                Step::Box(Direction::Reverse) => &q_adj * out,
            };
        }
        out
    }

    /// Runs with adjacent local layers merged; a trailing layer is dropped
    /// since the measurement basis is fitted to the final states.
    fn runs(&self, d: usize) -> Vec<Run> {
        let mut runs = Vec::new();
        let mut acc = (CMat::identity(d, d), CMat::identity(d, d));
        for s in &self.steps {
            match s {
                Step::Local(a, b) => acc = (a * &acc.0, b * &acc.1),
                Step::Box(dir) => {
                    let (a, b) = std::mem::replace(&mut acc, (CMat::identity(d, d), CMat::identity(d, d)));
                    runs.push(Run {
                        pre_local: (single(a), single(b)),
                        direction: *dir,
                    });
                }
            }
        }
        runs
    }
}

fn single(m: CMat) -> UnitaryOperator {
    let n = m.nrows();
    UnitaryOperator::trusted(m, vec![n])
}

fn two(m: CMat, d: usize) -> UnitaryOperator {
    UnitaryOperator::trusted(m, vec![d, d])
}

fn basis_vec(i: usize, d: usize) -> CVec {
    let mut v = CVec::zeros(d);
    v[i] = ONE;
    v
}

/// `X (x) I` or `I (x) X` between box uses: `box, X_1, box, ..., X_N, box`.
fn sequential_circuit(aux: &[UnitaryOperator], party: Party, d: usize) -> Circuit {
    let mut c = Circuit::single_box();
    for x in aux {
        let (a, b) = match party {
            Party::Alice => (x.matrix().clone(), CMat::identity(d, d)),
            Party::Bob => (CMat::identity(d, d), x.matrix().clone()),
        };
        c.local(a, b);
        c.boxed(Direction::Forward);
    }
    c
}

struct Plan {
    circuit: Circuit,
    alice: CVec,
    bob: CVec,
    path: Vec<CaseLabel>,
}

impl Plan {
    fn wrap(self, label: CaseLabel, wrapper: &Circuit) -> Plan {
        let mut path = vec![label];
        path.extend(self.path);
        Plan {
            circuit: self.circuit.substitute(wrapper),
            alice: self.alice,
            bob: self.bob,
            path,
        }
    }
}

/// `|x - 1|` threshold (modulo the angle period) for the equal branch.
pub const EQUAL_ANGLE_TOL: f64 = 1e-8;
const MAX_DEPTH: usize = 4;
const X2_RETRIES: usize = 32;

struct Builder<'a> {
    cfg: &'a Config,
    d: usize,
}

impl Builder<'_> {
    fn sub_cfg(&self, depth: usize, stage: u64) -> Config {
        Config {
            seed: derive_seed(self.cfg.seed, &[depth as u64, stage]),
            ..self.cfg.clone()
        }
    }

    fn tol_class(&self) -> f64 {
        self.cfg.tolerances.classification
    }

    fn is_identity(&self, m: &CMat) -> bool {
        let n = m.nrows();
        phase_distance_mat(m, &CMat::identity(n, n)) <= self.tol_class()
    }

    fn build(&self, u: &CMat, v: &CMat, depth: usize) -> Result<Plan> {
        if depth > MAX_DEPTH {
            return Err(Error::Precondition("case recursion exceeded its depth bound".into()));
        }
        let d = self.d;
        let (uo, vo) = (two(u.clone(), d), two(v.clone(), d));
        ensure_distinct(&uo, &vo, &self.cfg.tolerances)?;
        let cu = classify(&uo, self.cfg)?;
        let cv = classify(&vo, self.cfg)?;
        use LocalityKind::*;
        let mut plan = match (cu.kind, cv.kind) {
            (ProductLocal, ProductLocal) => self.case_ia(&cu, &cv, depth)?,
            (ProductLocal, SwapLocal) => self.case_ib(&cu, &cv),
            (SwapLocal, ProductLocal) => self.case_ib(&cv, &cu),
            (SwapLocal, SwapLocal) => self.case_ic(u, v, &cu, &cv, depth)?,
            (Imprimitive, Imprimitive) => self.case_iii(u, v, depth)?,
            (Imprimitive, other) => self.case_ii(u, v, other, depth)?,
            (other, Imprimitive) => self.case_ii(v, u, other, depth)?,
        };
        if self.is_identity(u) || self.is_identity(v) {
            plan.path.insert(0, CaseLabel::IdentityVsOther);
        }
        Ok(plan)
    }

    fn case_ia(&self, cu: &LocalityClass, cv: &LocalityClass, depth: usize) -> Result<Plan> {
        let d = self.d;
        let (ua, ub) = cu.factors.as_ref().expect("product class has factors");
        let (va, vb) = cv.factors.as_ref().expect("product class has factors");
        let tol = &self.cfg.tolerances;
        let budget = |x: &UnitaryOperator, y: &UnitaryOperator| -> Option<usize> {
            if phase_distance_mat(x.matrix(), y.matrix()) > tol.classification {
                required_runs(x, y, tol).ok()
            } else {
                None
            }
        };
        let party = match (budget(ua, va), budget(ub, vb)) {
            (Some(a), Some(b)) if b < a => Party::Bob,
            (Some(_), _) => Party::Alice,
            (None, Some(_)) => Party::Bob,
            (None, None) => {
                return Err(Error::Precondition(
                    "product operators differ only below the classification tolerance".into(),
                ))
            }
        };
        let (x, y) = match party {
            Party::Alice => (ua, va),
            Party::Bob => (ub, vb),
        };
        let scheme = find_sequential_scheme(x, y, &self.sub_cfg(depth, 1))
            .map_err(|e| e.in_stage("case IA sequential scheme"))?;
        let circuit = sequential_circuit(&scheme.aux_ops, party, d);
        let input = scheme.input.amplitudes().clone();
        let (alice, bob) = match party {
            Party::Alice => (input, basis_vec(0, d)),
            Party::Bob => (basis_vec(0, d), input),
        };
        Ok(Plan {
            circuit,
            alice,
            bob,
            path: vec![CaseLabel::IA],
        })
    }

    /// `product` is `A (x) B`, `swapped` is `(C (x) D) P`; input `|0>, C^dagger A |1>`.
    fn case_ib(&self, product: &LocalityClass, swapped: &LocalityClass) -> Plan {
        let d = self.d;
        let (pa, _) = product.factors.as_ref().expect("product class has factors");
        let (sa, _) = swapped.factors.as_ref().expect("swap class has factors");
        let bob = sa.matrix().adjoint() * pa.matrix() * basis_vec(1, d);
        Plan {
            circuit: Circuit::single_box(),
            alice: basis_vec(0, d),
            bob,
            path: vec![CaseLabel::IB],
        }
    }

    fn case_ic(&self, u: &CMat, v: &CMat, cu: &LocalityClass, cv: &LocalityClass, depth: usize) -> Result<Plan> {
        let d = self.d;
        let (ua, ub) = cu.factors.as_ref().expect("swap class has factors");
        let (va, vb) = cv.factors.as_ref().expect("swap class has factors");
        // X (X1 (x) X2) X^dagger = U_A X2 U_A^dagger (x) U_B X1 U_B^dagger
        let alice_side = phase_distance_mat(ua.matrix(), va.matrix()) > self.tol_class();
        let (xu, xv) = if alice_side { (ua, va) } else { (ub, vb) };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, &[depth as u64, 2]));
        let mut chosen = None;
        for _ in 0..X2_RETRIES {
            let x = haar_unitary(d, &mut rng).into_matrix();
            let gu = xu.matrix() * &x * xu.matrix().adjoint();
            let gv = xv.matrix() * &x * xv.matrix().adjoint();
            if phase_distance_mat(&gu, &gv) > self.tol_class() {
                chosen = Some(x);
                break;
            }
        }
        let x = chosen.ok_or_else(|| {
            Error::Precondition("no local conjugation separates the swap-type operators".into())
        })?;
        let (x1, x2) = if alice_side {
            (CMat::identity(d, d), x)
        } else {
            (x, CMat::identity(d, d))
        };
        let mut f = Circuit::default();
        f.boxed(Direction::Reverse);
        f.local(x1, x2);
        f.boxed(Direction::Forward);
        let inner = self
            .build(&f.matrix(u), &f.matrix(v), depth + 1)
            .map_err(|e| e.in_stage("case IC reduction"))?;
        Ok(inner.wrap(CaseLabel::IC, &f))
    }

    /// `q` imprimitive, `r` primitive of kind `r_kind`.
    fn case_ii(&self, q: &CMat, r: &CMat, r_kind: LocalityKind, depth: usize) -> Result<Plan> {
        let d = self.d;
        let parity = if r_kind == LocalityKind::SwapLocal {
            Parity::Even
        } else {
            Parity::Any
        };
        let sub = self.sub_cfg(depth, 3);
        let word = compile_with_parity(
            &two(q.clone(), d),
            &CompileTarget::ControlledForm,
            sub.max_boxes_for(d),
            parity,
            &sub,
        )
        .map_err(|e| e.in_stage("case II compile"))?;
        let f = Circuit::from_word(&word);
        let fr = two(f.matrix(r), d);
        let class = classify(&fr, self.cfg)?;
        let (_, rb) = match (class.kind, class.factors) {
            (LocalityKind::ProductLocal, Some(factors)) => factors,
            _ => {
                return Err(Error::Precondition(
                    "compiled word does not map the primitive operator to a product".into(),
                ))
            }
        };

        // control |1> sees Z_d on Bob, control |0> sees the identity
        let tol = &self.cfg.tolerances;
        let zd = z_d(d);
        let idle = UnitaryOperator::identity(vec![d]);
        let budget = |x: &UnitaryOperator| -> Option<usize> {
            if phase_distance_mat(x.matrix(), rb.matrix()) > tol.classification {
                required_runs(x, &rb, tol).ok()
            } else {
                None
            }
        };
        let active = match (budget(&zd), budget(&idle)) {
            (Some(a), Some(i)) => a <= i,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => unreachable!("Z_d differs from the identity"),
        };
        let (control, bob_op) = if active { (1, &zd) } else { (0, &idle) };
        let scheme = find_sequential_scheme(bob_op, &rb, &self.sub_cfg(depth, 4))
            .map_err(|e| e.in_stage("case II sequential scheme"))?;
        let label = if r_kind == LocalityKind::SwapLocal {
            CaseLabel::IIB
        } else {
            CaseLabel::IIA
        };
        let plan = Plan {
            circuit: sequential_circuit(&scheme.aux_ops, Party::Bob, d),
            alice: basis_vec(control, d),
            bob: scheme.input.amplitudes().clone(),
            path: vec![],
        };
        Ok(plan.wrap(label, &f))
    }

    fn case_iii(&self, u: &CMat, v: &CMat, depth: usize) -> Result<Plan> {
        let d = self.d;
        let sub = self.sub_cfg(depth, 5);
        let word = compile(&two(u.clone(), d), &CompileTarget::CanonicalXX, sub.max_boxes_for(d), &sub)
            .map_err(|e| e.in_stage("case III compile"))?;
        let f = Circuit::from_word(&word);
        let fu = f.matrix(u);
        let fv = f.matrix(v);
        let fv_op = two(fv.clone(), d);
        if classify(&fv_op, self.cfg)?.kind.is_primitive() {
            let inner = self
                .build(&fu, &fv, depth + 1)
                .map_err(|e| e.in_stage("case III primitive image"))?;
            return Ok(inner.wrap(CaseLabel::IIIA, &f));
        }
        match lemma5_extract(&fv_op, &self.cfg.tolerances) {
            None => self.case_iiia(u, v, &f, depth),
            Some(xx) if CanonicalXX::angle_gap(xx.x, 1.0, d).abs() <= EQUAL_ANGLE_TOL => {
                self.case_iiib_equal(u, v, &f, &fu, depth)
            }
            Some(xx) => match self.case_iiib_scaled(xx.x, &f, depth)? {
                Some(plan) => Ok(plan),
                None => self.case_iiia(u, v, &f, depth),
            },
        }
    }

    /// `F(X) = A f(X) A^dagger f(X)` with the conjugator moving `F(V)` farthest from `I`.
    fn case_iiia(&self, u: &CMat, v: &CMat, f: &Circuit, depth: usize) -> Result<Plan> {
        let d = self.d;
        let mut best: Option<(f64, Circuit)> = None;
        for (a, b) in conjugator_factors(d) {
            let mut wrapper = Circuit::single_box();
            wrapper.local(a.adjoint(), b.adjoint());
            wrapper.boxed(Direction::Forward);
            wrapper.local(a, b);
            let big_f = wrapper.substitute(f);
            let dist = phase_distance_mat(&big_f.matrix(v), &CMat::identity(d * d, d * d));
            if best.as_ref().map_or(true, |(b, _)| dist > *b) {
                best = Some((dist, big_f));
            }
        }
        let (dist, big_f) = best.expect("four conjugators");
        if dist <= self.tol_class() {
            return Err(Error::Precondition(
                "no conjugator separates the images of U and V".into(),
            ));
        }
        let inner = self
            .build(&big_f.matrix(u), &big_f.matrix(v), depth + 1)
            .map_err(|e| e.in_stage("case IIIA reduction"))?;
        Ok(inner.wrap(CaseLabel::IIIA, &big_f))
    }

    /// `G(X) = X h(f(X))` with `h(f(U)) = U^dagger`.
    fn case_iiib_equal(&self, u: &CMat, v: &CMat, f: &Circuit, fu: &CMat, depth: usize) -> Result<Plan> {
        let d = self.d;
        let sub = self.sub_cfg(depth, 6);
        let target = CompileTarget::ExactMatrix(two(u.adjoint(), d));
        let h_word = compile(&two(fu.clone(), d), &target, sub.max_boxes_for(d), &sub)
            .map_err(|e| e.in_stage("case IIIB equal compile"))?;
        let mut g = Circuit::from_word(&h_word).substitute(f);
        g.boxed(Direction::Forward);
        let inner = self
            .build(&g.matrix(u), &g.matrix(v), depth + 1)
            .map_err(|e| e.in_stage("case IIIB equal reduction"))?;
        Ok(inner.wrap(CaseLabel::IIIBEqual, &g))
    }

    /// Bob holds the `+1` eigenvector of `u2`; Alice separates `e^{i u1}` from `e^{i x u1}`.
    fn case_iiib_scaled(&self, x: f64, f: &Circuit, depth: usize) -> Result<Option<Plan>> {
        let d = self.d;
        let u1 = sigma_x_block(d);
        let eu = single(expi_hermitian(&u1));
        let ev = single(expi_hermitian(&(&u1 * C64::from(x))));
        let tol = &self.cfg.tolerances;
        let (arc, _) = crate::spectral::theta_of_matrix(&(eu.matrix().adjoint() * ev.matrix()), tol)?;
        if arc.theta <= tol.classification {
            return Ok(None);
        }
        let scheme = find_sequential_scheme(&eu, &ev, &self.sub_cfg(depth, 7))
            .map_err(|e| e.in_stage("case IIIB scaled sequential scheme"))?;
        let mut omega = CVec::zeros(d);
        omega[0] = C64::from(FRAC_1_SQRT_2);
        omega[1] = C64::from(FRAC_1_SQRT_2);
        let plan = Plan {
            circuit: sequential_circuit(&scheme.aux_ops, Party::Alice, d),
            alice: scheme.input.amplitudes().clone(),
            bob: omega,
            path: vec![],
        };
        Ok(Some(plan.wrap(CaseLabel::IIIBScaled, f)))
    }
}

/// Builds and certifies a protocol telling `u` (hypothesis 0) from `v` (hypothesis 1).
pub fn build_protocol(u: &UnitaryOperator, v: &UnitaryOperator, cfg: &Config) -> Result<LoccProtocol> {
    cfg.tolerances.validate()?;
    let d = u.require_two_party()?;
    check_same_dim(d, v.require_two_party()?)?;
    ensure_distinct(u, v, &cfg.tolerances)?;
    let plan = Builder { cfg, d }.build(u.matrix(), v.matrix(), 0)?;
    let runs = plan.circuit.runs(d);
    let input = (
        PureState::normalized(plan.alice, vec![d])?,
        PureState::normalized(plan.bob, vec![d])?,
    );
    let mut protocol = LoccProtocol {
        case_label: plan.path[0],
        case_path: plan.path,
        box_uses: runs.len(),
        runs,
        input,
        measurement: MeasurementPlan {
            party: Party::Alice,
            basis: CMat::identity(d, d),
            decision: vec![None; d],
        },
        refined: false,
        certificate: None,
    };
    certify(&mut protocol, u, v, cfg)?;
    if !protocol.passed() {
        if let Some(mut refined) = refine_product_path(&protocol, u, v, cfg) {
            refined.refined = true;
            certify(&mut refined, u, v, cfg)?;
            if refined.passed() {
                return Ok(refined);
            }
        }
    }
    Ok(protocol)
}

/// Fits the measurement plan to the simulated outputs and attaches a fresh certificate.
pub fn certify(protocol: &mut LoccProtocol, u: &UnitaryOperator, v: &UnitaryOperator, cfg: &Config) -> Result<()> {
    let d = protocol.dim();
    let out_u = verify::simulate(protocol, u)?;
    let out_v = verify::simulate(protocol, v)?;
    let (psi, phi) = (out_u.amplitudes(), out_v.amplitudes());
    let party = verify::orthogonal_party(psi, phi, d, cfg.tolerances.orthogonality).unwrap_or_else(|| {
        if verify::marginal_overlap(psi, phi, d, Party::Alice) <= verify::marginal_overlap(psi, phi, d, Party::Bob) {
            Party::Alice
        } else {
            Party::Bob
        }
    });
    protocol.measurement = verify::plan_for(psi, phi, d, party);
    protocol.box_uses = protocol.runs.len();
    protocol.certificate = Some(verify::verify(protocol, u, v, &cfg.tolerances)?);
    Ok(())
}

/// Output of the controlled sequential circuit `f (I (x) X_N) f ... (I (x) X_1) f |alpha>|phi>`.
///
/// `f` must act on `|alpha> (x) H` as `|alpha> (x) M` for a single-qudit
/// unitary `M`; the result is checked against `|alpha> (x) M X_N M ... X_1 M |phi>`.
pub fn controlled_sequential(
    f_controlled: &UnitaryOperator,
    bob_aux: &[UnitaryOperator],
    alpha: &PureState,
    phi: &PureState,
) -> Result<PureState> {
    let d = f_controlled.require_two_party()?;
    check_same_dim(d, alpha.dim())?;
    check_same_dim(d, phi.dim())?;
    let a = alpha.amplitudes();
    let fm = f_controlled.matrix();
    // M_{jk} = (<alpha| (x) <j|) f (|alpha> (x) |k>)
    let lift = |k: usize| a.kronecker(&basis_vec(k, d));
    let m = CMat::from_fn(d, d, |j, k| lift(j).dotc(&(fm * lift(k))));
    for k in 0..d {
        let expect = a.kronecker(&m.column(k).into_owned());
        if (fm * lift(k) - expect).norm() > 1e-9 {
            return Err(Error::Precondition(
                "alpha does not select a controlled branch of the operator".into(),
            ));
        }
    }

    let mut state = fm * a.kronecker(phi.amplitudes());
    let mut bob = &m * phi.amplitudes();
    let id = CMat::identity(d, d);
    for x in bob_aux {
        check_same_dim(d, x.dim())?;
        state = fm * verify::apply_local(&state, &id, x.matrix());
        bob = &m * (x.matrix() * bob);
    }
    let expected = a.kronecker(&bob);
    if (&state - &expected).norm() > 1e-9 {
        return Err(Error::Precondition("controlled circuit left the selected branch".into()));
    }
    PureState::normalized(state, vec![d, d])
}

/// One pairwise protocol inside a multi-hypothesis decision tree.
#[derive(Debug, Clone, PartialEq)]
pub struct PairProtocol {
    pub pair: (usize, usize),
    pub protocol: LoccProtocol,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecisionNode {
    Leaf(usize),
    /// Runs `protocols[protocol]` on `(first, second)`; outcome "first"
    /// rules out `second` and vice versa, any other outcome rules out both.
    Test {
        protocol: usize,
        if_first: Box<DecisionNode>,
        if_second: Box<DecisionNode>,
        if_neither: Option<Box<DecisionNode>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiDiscrimination {
    pub protocols: Vec<PairProtocol>,
    pub tree: DecisionNode,
    /// Box uses along the longest path of the tree.
    pub box_uses: usize,
}

/// Elimination tree: each test rules out at least one candidate, so every
/// path runs at most `m - 1` pairwise protocols.
pub fn multi_discriminate(ops: &[UnitaryOperator], cfg: &Config) -> Result<MultiDiscrimination> {
    if ops.len() < 2 {
        return Err(Error::Validation("need at least two operators".into()));
    }
    let d = ops[0].require_two_party()?;
    for (i, a) in ops.iter().enumerate() {
        check_same_dim(d, a.require_two_party()?)?;
        for b in &ops[i + 1..] {
            ensure_distinct(a, b, &cfg.tolerances)?;
        }
    }
    let mut protocols: Vec<PairProtocol> = Vec::new();
    let candidates: Vec<usize> = (0..ops.len()).collect();
    let tree = grow(&candidates, ops, cfg, d, &mut protocols)?;
    let box_uses = longest_path(&tree, &protocols);
    Ok(MultiDiscrimination {
        protocols,
        tree,
        box_uses,
    })
}

fn grow(
    candidates: &[usize],
    ops: &[UnitaryOperator],
    cfg: &Config,
    d: usize,
    protocols: &mut Vec<PairProtocol>,
) -> Result<DecisionNode> {
    if candidates.len() == 1 {
        return Ok(DecisionNode::Leaf(candidates[0]));
    }
    let (i, j) = (candidates[0], candidates[1]);
    let idx = match protocols.iter().position(|p| p.pair == (i, j)) {
        Some(idx) => idx,
        None => {
            let pair_cfg = Config {
                seed: derive_seed(cfg.seed, &[i as u64, j as u64]),
                ..cfg.clone()
            };
            let protocol = build_protocol(&ops[i], &ops[j], &pair_cfg)
                .map_err(|e| e.in_stage(format!("pair ({i}, {j})")))?;
            protocols.push(PairProtocol { pair: (i, j), protocol });
            protocols.len() - 1
        }
    };
    let without = |drop: &[usize]| -> Vec<usize> {
        candidates.iter().copied().filter(|c| !drop.contains(c)).collect()
    };
    let if_first = grow(&without(&[j]), ops, cfg, d, protocols)?;
    let if_second = grow(&without(&[i]), ops, cfg, d, protocols)?;
    let if_neither = if d > 2 && candidates.len() > 2 {
        Some(Box::new(grow(&without(&[i, j]), ops, cfg, d, protocols)?))
    } else {
        None
    };
    Ok(DecisionNode::Test {
        protocol: idx,
        if_first: Box::new(if_first),
        if_second: Box::new(if_second),
        if_neither,
    })
}

fn longest_path(node: &DecisionNode, protocols: &[PairProtocol]) -> usize {
    match node {
        DecisionNode::Leaf(_) => 0,
        DecisionNode::Test {
            protocol,
            if_first,
            if_second,
            if_neither,
        } => {
            let below = [Some(if_first), Some(if_second), if_neither.as_ref()]
                .into_iter()
                .flatten()
                .map(|n| longest_path(n, protocols))
                .max()
                .unwrap_or(0);
            protocols[*protocol].protocol.box_uses + below
        }
    }
}

/// Distribution over reported hypotheses when `truth` is in the box, by
/// exhaustive simulation of every branch of the tree.
pub fn identify(multi: &MultiDiscrimination, truth: &UnitaryOperator) -> Result<Vec<(usize, f64)>> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    walk(&multi.tree, multi, truth, 1.0, &mut out)?;
    out.retain(|(_, p)| *p > 1e-12);
    out.sort_by_key(|(k, _)| *k);
    Ok(out)
}

fn walk(
    node: &DecisionNode,
    multi: &MultiDiscrimination,
    truth: &UnitaryOperator,
    weight: f64,
    out: &mut Vec<(usize, f64)>,
) -> Result<()> {
    match node {
        DecisionNode::Leaf(k) => {
            match out.iter_mut().find(|(j, _)| j == k) {
                Some(entry) => entry.1 += weight,
                None => out.push((*k, weight)),
            }
            Ok(())
        }
        DecisionNode::Test {
            protocol,
            if_first,
            if_second,
            if_neither,
        } => {
            let p = &multi.protocols[*protocol].protocol;
            let state = verify::simulate(p, truth)?;
            let probs = verify::outcome_probabilities(&p.measurement, state.amplitudes(), p.dim());
            let mut split = [0.0; 3];
            for (prob, decision) in probs.iter().zip(&p.measurement.decision) {
                match decision {
                    Some(0) => split[0] += prob,
                    Some(1) => split[1] += prob,
                    _ => split[2] += prob,
                }
            }
            if split[0] > 1e-12 {
                walk(if_first, multi, truth, weight * split[0], out)?;
            }
            if split[1] > 1e-12 {
                walk(if_second, multi, truth, weight * split[1], out)?;
            }
            if split[2] > 1e-12 {
                match if_neither {
                    Some(n) => walk(n, multi, truth, weight * split[2], out)?,
                    None => out.push((usize::MAX, weight * split[2])),
                }
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{cnot, cz, hadamard, identity, local, pauli_x, pauli_z, phase_diag, swap};
    use crate::matrix::Tensor;

    fn id4() -> UnitaryOperator {
        UnitaryOperator::identity(vec![2, 2])
    }

    fn cfg() -> Config {
        Config::with_seed(11)
    }

    fn assert_certified(p: &LoccProtocol) {
        let c = p.certificate.as_ref().expect("certificate attached");
        assert!(c.passed, "overlap {:.3e} schmidt {:.3e}", c.overlap, c.schmidt_second_max);
        assert!(c.plan_valid);
        assert_eq!(c.box_uses, p.runs.len());
    }

    #[test]
    fn identity_vs_swap_single_run() {
        let p = build_protocol(&id4(), &swap(2), &cfg()).unwrap();
        assert_eq!(p.case_path, vec![CaseLabel::IdentityVsOther, CaseLabel::IB]);
        assert_eq!(p.runs.len(), 1);
        assert!((p.input.0.inner(&PureState::basis(0, 2)).norm() - 1.0).abs() < 1e-12);
        assert!((p.input.1.inner(&PureState::basis(1, 2)).norm() - 1.0).abs() < 1e-12);
        let out = verify::simulate(&p, &swap(2)).unwrap();
        let expect = PureState::basis(1, 2).tensor(&PureState::basis(0, 2));
        assert!((out.inner(&expect).norm() - 1.0).abs() < 1e-12);
        assert_certified(&p);
        assert_eq!(p.certificate.unwrap().overlap, 0.0);
    }

    #[test]
    fn pauli_z_on_alice_needs_no_aux() {
        let zi = local(&pauli_z(), &identity(2));
        let p = build_protocol(&zi, &id4(), &cfg()).unwrap();
        assert_eq!(p.case_label, CaseLabel::IdentityVsOther);
        assert_eq!(p.case_path[1], CaseLabel::IA);
        assert_eq!(p.runs.len(), 1);
        assert!((p.input.0.inner(&PureState::plus(2)).norm() - 1.0).abs() < 1e-9);
        assert_eq!(p.measurement.party, Party::Alice);
        let c = p.certificate.as_ref().unwrap();
        assert_eq!(c.measuring_party, Some(Party::Alice));
        assert!(c.success_probabilities.iter().all(|s| *s > 1.0 - 1e-9));
        assert_certified(&p);
    }

    #[test]
    fn cnot_versus_cz() {
        let p = build_protocol(&cnot(), &cz(), &cfg()).unwrap();
        assert!(p.case_path.iter().any(|c| matches!(
            c,
            CaseLabel::IIIA | CaseLabel::IIIBEqual | CaseLabel::IIIBScaled
        )));
        assert_certified(&p);
        assert!(p.certificate.unwrap().overlap <= 1e-5);
    }

    #[test]
    fn product_versus_imprimitive() {
        let u = local(&pauli_x(), &hadamard());
        let p = build_protocol(&u, &cnot(), &cfg()).unwrap();
        assert!(p.case_path.contains(&CaseLabel::IIA));
        assert_certified(&p);
    }

    #[test]
    fn swap_type_pair_reduces_to_product() {
        let u = swap(2);
        let v = local(&pauli_z(), &identity(2)).compose(&swap(2)).unwrap();
        let p = build_protocol(&u, &v, &cfg()).unwrap();
        assert_eq!(p.case_label, CaseLabel::IC);
        assert_eq!(p.case_path[1], CaseLabel::IA);
        assert_certified(&p);
    }

    #[test]
    fn equal_operators_rejected() {
        let err = build_protocol(&cnot(), &cnot().with_phase(0.4), &cfg()).unwrap_err();
        assert_eq!(err.name(), "OperatorsEqual");
    }

    #[test]
    fn box_uses_count_reverse_runs() {
        let u = swap(2);
        let v = local(&pauli_z(), &identity(2)).compose(&swap(2)).unwrap();
        let p = build_protocol(&u, &v, &cfg()).unwrap();
        let reverse = p.runs.iter().filter(|r| r.direction == Direction::Reverse).count();
        assert!(reverse > 0);
        assert_eq!(p.box_uses, p.runs.len());
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build_protocol(&cnot(), &cz(), &cfg()).unwrap();
        let b = build_protocol(&cnot(), &cz(), &cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn controlled_branch_flips_target() {
        let out = controlled_sequential(&cnot(), &[], &PureState::basis(1, 2), &PureState::basis(0, 2)).unwrap();
        let expect = PureState::basis(1, 2).tensor(&PureState::basis(1, 2));
        assert!((out.inner(&expect).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn controlled_branch_with_hadamard_aux() {
        let alpha = PureState::basis(1, 2);
        let phi = PureState::basis(0, 2);
        let out = controlled_sequential(&cnot(), &[hadamard()], &alpha, &phi).unwrap();
        let x = pauli_x().into_matrix();
        let bob = &x * hadamard().matrix() * &x * phi.amplitudes();
        let expect = alpha.amplitudes().kronecker(&bob);
        assert!((out.amplitudes() - expect).norm() < 1e-12);
    }

    #[test]
    fn idle_branch_applies_aux_only() {
        let alpha = PureState::basis(0, 2);
        let phi = PureState::plus(2);
        let aux = [hadamard(), phase_diag(&[0.0, 0.7])];
        let out = controlled_sequential(&cnot(), &aux, &alpha, &phi).unwrap();
        let bob = aux[1].matrix() * aux[0].matrix() * phi.amplitudes();
        let expect = alpha.amplitudes().kronecker(&bob);
        assert!((out.amplitudes() - expect).norm() < 1e-12);
    }

    #[test]
    fn superposed_control_rejected() {
        let err = controlled_sequential(&cnot(), &[], &PureState::plus(2), &PureState::basis(0, 2)).unwrap_err();
        assert_eq!(err.name(), "PreconditionViolated");
    }

    #[test]
    fn two_hypotheses_give_one_protocol() {
        let ops = [id4(), swap(2)];
        let multi = multi_discriminate(&ops, &cfg()).unwrap();
        assert_eq!(multi.protocols.len(), 1);
        assert_eq!(multi.box_uses, 1);
        for (k, op) in ops.iter().enumerate() {
            let got = identify(&multi, op).unwrap();
            assert_eq!(got.len(), 1);
            assert_eq!(got[0].0, k);
        }
    }

    #[test]
    fn three_hypotheses_identified() {
        let ops = [id4(), swap(2), local(&pauli_z(), &identity(2))];
        let multi = multi_discriminate(&ops, &cfg()).unwrap();
        assert!(multi.protocols.iter().all(|p| p.protocol.passed()));
        for (k, op) in ops.iter().enumerate() {
            let got = identify(&multi, op).unwrap();
            assert_eq!(got.len(), 1, "{got:?}");
            assert_eq!(got[0].0, k);
            assert!((got[0].1 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn case_labels_print_in_report_form() {
        assert_eq!(CaseLabel::IIIBEqual.to_string(), "IIIB_EQUAL");
        assert_eq!(CaseLabel::IdentityVsOther.name(), "IDENTITY_VS_OTHER");
    }
}
