//! JSON file formats: operators, protocols and sequential schemes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use unidisc::compiler::Direction;
use unidisc::matrix::{CMat, CVec, C64};
use unidisc::protocol::{CaseLabel, LoccProtocol, MeasurementPlan, Party, Run};
use unidisc::sequential::{SequentialScheme, Strategy};
use unidisc::verify::VerificationReport;
use unidisc::{PureState, Tolerances, UnitaryOperator};

use crate::CliError;

pub type Entries = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorFile {
    pub dims: Vec<usize>,
    pub matrix: Entries,
}

pub fn encode_matrix(m: &CMat) -> Entries {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn decode_matrix(rows: &Entries, field: &str) -> Result<CMat, CliError> {
    let n = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::parse(format!("`{field}`: rows have different lengths")));
    }
    Ok(CMat::from_fn(n, cols, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

pub fn encode_vector(v: &CVec) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn decode_vector(v: &[[f64; 2]]) -> CVec {
    CVec::from_iterator(v.len(), v.iter().map(|z| C64::new(z[0], z[1])))
}

impl OperatorFile {
    pub fn to_operator(&self, unitarity_tol: f64) -> Result<UnitaryOperator, CliError> {
        let m = decode_matrix(&self.matrix, "matrix")?;
        let size: usize = self.dims.iter().product();
        if m.nrows() != size || m.ncols() != size {
            return Err(CliError::validation(format!(
                "`matrix` is {}x{} but `dims` {:?} require {size}x{size}",
                m.nrows(),
                m.ncols(),
                self.dims
            )));
        }
        UnitaryOperator::new(m, self.dims.clone(), unitarity_tol)
            .map_err(|e| CliError::validation(format!("`matrix`: {e}")))
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
}

pub fn load_operator(path: &Path, tol: &Tolerances) -> Result<UnitaryOperator, CliError> {
    let file: OperatorFile = read_json(path)?;
    file.to_operator(tol.unitarity)
        .map_err(|e| e.context(path.display().to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub alice: Entries,
    pub bob: Entries,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub party: Party,
    /// Basis vectors as columns.
    pub basis: Entries,
    pub decision: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoccBody {
    pub case_label: CaseLabel,
    pub case_path: Vec<CaseLabel>,
    pub input_alice: Vec<[f64; 2]>,
    pub input_bob: Vec<[f64; 2]>,
    pub runs: Vec<RunFile>,
    pub measurement: PlanFile,
    pub box_uses: usize,
    pub refined: bool,
    pub report: Option<VerificationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeBody {
    pub aux_ops: Vec<Entries>,
    pub input: Vec<[f64; 2]>,
    pub overlap: f64,
    pub uses: usize,
    pub arcs: Vec<f64>,
    /// `None` for a single-use scheme.
    pub strategy: Option<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Body {
    Locc(LoccBody),
    Sequential(SchemeBody),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolFile {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    #[serde(flatten)]
    pub body: Body,
}

impl ProtocolFile {
    pub fn new(seed: u64, tolerances: Tolerances, body: Body) -> Self {
        ProtocolFile {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            tolerances,
            body,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        read_json(path)
    }
}

impl LoccBody {
    pub fn from_protocol(p: &LoccProtocol) -> Self {
        LoccBody {
            case_label: p.case_label,
            case_path: p.case_path.clone(),
            input_alice: encode_vector(p.input.0.amplitudes()),
            input_bob: encode_vector(p.input.1.amplitudes()),
            runs: p
                .runs
                .iter()
                .map(|r| RunFile {
                    alice: encode_matrix(r.pre_local.0.matrix()),
                    bob: encode_matrix(r.pre_local.1.matrix()),
                    direction: r.direction,
                })
                .collect(),
            measurement: PlanFile {
                party: p.measurement.party,
                basis: encode_matrix(&p.measurement.basis),
                decision: p.measurement.decision.clone(),
            },
            box_uses: p.box_uses,
            refined: p.refined,
            report: p.certificate.clone(),
        }
    }

    pub fn to_protocol(&self, tol: &Tolerances) -> Result<LoccProtocol, CliError> {
        let d = self.input_alice.len();
        let state = |v: &[[f64; 2]], field: &str| {
            PureState::new(decode_vector(v), vec![v.len()])
                .map_err(|e| CliError::validation(format!("`{field}`: {e}")))
        };
        let single = |m: &Entries, field: &str| -> Result<UnitaryOperator, CliError> {
            let m = decode_matrix(m, field)?;
            let n = m.nrows();
            UnitaryOperator::new(m, vec![n], tol.unitarity)
                .map_err(|e| CliError::validation(format!("`{field}`: {e}")))
        };
        let runs = self
            .runs
            .iter()
            .enumerate()
            .map(|(k, r)| {
                Ok(Run {
                    pre_local: (
                        single(&r.alice, &format!("runs[{k}].alice"))?,
                        single(&r.bob, &format!("runs[{k}].bob"))?,
                    ),
                    direction: r.direction,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let input = (state(&self.input_alice, "input_alice")?, state(&self.input_bob, "input_bob")?);
        if input.1.dim() != d {
            return Err(CliError::validation("`input_bob` and `input_alice` differ in dimension"));
        }
        Ok(LoccProtocol {
            case_label: self.case_label,
            case_path: self.case_path.clone(),
            runs,
            input,
            measurement: MeasurementPlan {
                party: self.measurement.party,
                basis: decode_matrix(&self.measurement.basis, "measurement.basis")?,
                decision: self.measurement.decision.clone(),
            },
            box_uses: self.box_uses,
            refined: self.refined,
            certificate: self.report.clone(),
        })
    }
}

impl SchemeBody {
    pub fn from_scheme(s: &SequentialScheme) -> Self {
        SchemeBody {
            aux_ops: s.aux_ops.iter().map(|x| encode_matrix(x.matrix())).collect(),
            input: encode_vector(s.input.amplitudes()),
            overlap: s.overlap,
            uses: s.uses,
            arcs: s.arcs.clone(),
            strategy: Some(s.strategy),
        }
    }

    pub fn to_scheme(&self, tol: &Tolerances) -> Result<SequentialScheme, CliError> {
        let aux_ops = self
            .aux_ops
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let m = decode_matrix(m, &format!("aux_ops[{k}]"))?;
                let n = m.nrows();
                UnitaryOperator::new(m, vec![n], tol.unitarity)
                    .map_err(|e| CliError::validation(format!("`aux_ops[{k}]`: {e}")))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let input = PureState::new(decode_vector(&self.input), vec![self.input.len()])
            .map_err(|e| CliError::validation(format!("`input`: {e}")))?;
        Ok(SequentialScheme {
            aux_ops,
            input,
            overlap: self.overlap,
            uses: self.uses,
            arcs: self.arcs.clone(),
            strategy: self.strategy.unwrap_or(Strategy::Greedy),
        })
    }
}
