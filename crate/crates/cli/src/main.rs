//! `unidisc`: construct and check perfect-discrimination schemes from JSON operator files.

mod files;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use unidisc::locality::{classify, LocalityKind};
use unidisc::protocol::{build_protocol, CaseLabel, identify, multi_discriminate, DecisionNode};
use unidisc::sequential::{evaluate_scheme, find_sequential_scheme, SequentialScheme};
use unidisc::spectral::{discriminating_state, theta};
use unidisc::verify::verify;
use unidisc::{Config, Error, Tolerances, UnitaryOperator};

use files::{encode_matrix, encode_vector, load_operator, Body, Entries, LoccBody, ProtocolFile, SchemeBody};

const REPORT_MATCH_TOL: f64 = 1e-12;

#[derive(Debug)]
pub struct CliError {
    name: &'static str,
    message: String,
    code: u8,
}

impl CliError {
    pub fn parse(message: impl Into<String>) -> Self {
        CliError { name: "ParseError", message: message.into(), code: 1 }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        CliError { name: "ValidationError", message: message.into(), code: 1 }
    }

    fn failure(name: &'static str, message: impl Into<String>) -> Self {
        CliError { name, message: message.into(), code: 2 }
    }

    pub fn context(mut self, what: String) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::SynthesisFailed { .. }
            | Error::CompileFailed { .. }
            | Error::NotSingleRunDiscriminable { .. }
            | Error::WitnessNotFound { .. } => 2,
            _ => 1,
        };
        CliError { name: e.name(), message: e.to_string(), code }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "unidisc", version, about = "Perfect discrimination of unitary operations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Orthogonality tolerance for output overlaps.
    #[arg(long, global = true)]
    tol_ortho: Option<f64>,
    /// Tolerance for equality and locality decisions.
    #[arg(long, global = true)]
    tol_class: Option<f64>,
    /// Residual accepted from the gate compiler.
    #[arg(long, global = true)]
    tol_compile: Option<f64>,
    #[arg(long, global = true, env = "UNIDISC_SEED")]
    seed: Option<u64>,
    /// Box budget for compiled words.
    #[arg(long, global = true)]
    max_boxes: Option<usize>,
    /// Write the machine-readable artifact here.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spectral arc of an operator.
    Theta { op: PathBuf },
    /// Locality class of a two-qudit operator.
    Classify { op: PathBuf },
    /// Build a scheme separating two operators.
    Discriminate {
        #[arg(long, value_enum, default_value_t = Mode::Locc)]
        mode: Mode,
        u: PathBuf,
        v: PathBuf,
    },
    /// Decision tree over several two-qudit operators.
    Multi {
        #[arg(required = true, num_args = 2..)]
        ops: Vec<PathBuf>,
    },
    /// Re-simulate a saved protocol against its operators.
    Verify { protocol: PathBuf, u: PathBuf, v: PathBuf },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Single,
    Sequential,
    Locc,
}

impl Common {
    fn config(&self, base: Tolerances) -> CliResult<Config> {
        let tolerances = Tolerances {
            unitarity: base.unitarity,
            orthogonality: self.tol_ortho.unwrap_or(base.orthogonality),
            classification: self.tol_class.unwrap_or(base.classification),
            compile: self.tol_compile.unwrap_or(base.compile),
        };
        tolerances.validate()?;
        Ok(Config {
            tolerances,
            seed: self.seed.unwrap_or(0),
            max_boxes: self.max_boxes,
            ..Config::default()
        })
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

/// Non-protocol artifacts share this envelope.
#[derive(Serialize)]
struct Envelope<T: Serialize> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    tolerances: Tolerances,
    command: &'static str,
    result: T,
}

fn envelope<T: Serialize>(cfg: &Config, command: &'static str, result: T) -> Envelope<T> {
    Envelope {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        tolerances: cfg.tolerances.clone(),
        command,
        result,
    }
}

fn write_artifact<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let Some(path) = path else { return Ok(()) };
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::parse(format!("cannot serialize artifact: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::parse(format!("cannot write {}: {e}", path.display())))
}

fn two_party(u: &UnitaryOperator) -> CliResult<usize> {
    Ok(u.require_two_party()?)
}

/// Innermost case of the construction.
fn deciding_case(path: &[CaseLabel], label: CaseLabel) -> CaseLabel {
    path.last().copied().unwrap_or(label)
}

/// Exit status for a finished check.
fn status(passed: bool) -> u8 {
    if passed {
        0
    } else {
        2
    }
}

fn cmd_theta(common: &Common, op: &Path) -> CliResult<u8> {
    let cfg = common.config(Tolerances::default())?;
    let u = load_operator(op, &cfg.tolerances)?;
    let arc = theta(&u, &cfg.tolerances)?;
    common.say(format!("theta = {}", arc.theta));
    common.say(format!("largest gap = {}", arc.largest_gap));
    write_artifact(common.out.as_deref(), &envelope(&cfg, "theta", &arc))?;
    Ok(0)
}

#[derive(Serialize)]
struct ClassifyResult {
    kind: LocalityKind,
    schmidt_values: Vec<f64>,
    factors: Option<[Entries; 2]>,
    witness: Option<Vec<[f64; 2]>>,
}

fn cmd_classify(common: &Common, op: &Path) -> CliResult<u8> {
    let cfg = common.config(Tolerances::default())?;
    let u = load_operator(op, &cfg.tolerances)?;
    two_party(&u)?;
    let class = classify(&u, &cfg)?;
    common.say(format!("kind = {:?}", class.kind));
    common.say(format!("operator schmidt rank = {}", class.schmidt_values.iter().filter(|s| **s > cfg.tolerances.classification).count()));
    if let Some(w) = &class.witness {
        common.say(format!("witness = {:?}", encode_vector(w.amplitudes())));
    }
    let result = ClassifyResult {
        kind: class.kind,
        schmidt_values: class.schmidt_values.clone(),
        factors: class.factors.as_ref().map(|(a, b)| [encode_matrix(a.matrix()), encode_matrix(b.matrix())]),
        witness: class.witness.as_ref().map(|w| encode_vector(w.amplitudes())),
    };
    write_artifact(common.out.as_deref(), &envelope(&cfg, "classify", result))?;
    Ok(0)
}

fn scheme_report(common: &Common, scheme: &SequentialScheme, overlap: f64) {
    common.say(format!("N = {}", scheme.aux_ops.len()));
    common.say(format!("box uses = {}", scheme.uses));
    common.say(format!("overlap = {overlap:.3e}"));
}

fn cmd_discriminate(common: &Common, mode: Mode, u_path: &Path, v_path: &Path) -> CliResult<u8> {
    let cfg = common.config(Tolerances::default())?;
    let u = load_operator(u_path, &cfg.tolerances)?;
    let v = load_operator(v_path, &cfg.tolerances)?;
    match mode {
        Mode::Single => {
            let arc = theta(&u.adjoint().compose(&v)?, &cfg.tolerances)?;
            let input = discriminating_state(&u, &v, &cfg.tolerances)?;
            let scheme = SequentialScheme {
                aux_ops: Vec::new(),
                input,
                overlap: 0.0,
                uses: 1,
                arcs: vec![arc.theta],
                strategy: unidisc::sequential::Strategy::Greedy,
            };
            let overlap = evaluate_scheme(&scheme, &u, &v)?;
            let scheme = SequentialScheme { overlap, ..scheme };
            scheme_report(common, &scheme, overlap);
            let mut body = SchemeBody::from_scheme(&scheme);
            body.strategy = None;
            write_artifact(common.out.as_deref(), &ProtocolFile::new(cfg.seed, cfg.tolerances.clone(), Body::Sequential(body)))?;
            Ok(status(overlap <= cfg.tolerances.orthogonality))
        }
        Mode::Sequential => {
            let scheme = find_sequential_scheme(&u, &v, &cfg)?;
            let overlap = evaluate_scheme(&scheme, &u, &v)?;
            scheme_report(common, &scheme, overlap);
            let body = Body::Sequential(SchemeBody::from_scheme(&scheme));
            write_artifact(common.out.as_deref(), &ProtocolFile::new(cfg.seed, cfg.tolerances.clone(), body))?;
            Ok(status(overlap <= cfg.tolerances.orthogonality))
        }
        Mode::Locc => {
            two_party(&u)?;
            two_party(&v)?;
            let protocol = build_protocol(&u, &v, &cfg)?;
            let names: Vec<&str> = protocol.case_path.iter().map(|c| c.name()).collect();
            common.say(format!("case = {}", deciding_case(&protocol.case_path, protocol.case_label)));
            common.say(format!("case path = {}", names.join(" -> ")));
            common.say(format!("box uses = {}", protocol.box_uses));
            let passed = match &protocol.certificate {
                Some(r) => {
                    common.say(format!("overlap = {:.3e}", r.overlap));
                    common.say(format!("max second schmidt = {:.3e}", r.schmidt_second_max));
                    if let Some(p) = r.measuring_party {
                        common.say(format!("measuring party = {p:?}"));
                    }
                    r.passed
                }
                None => false,
            };
            common.say(format!("passed = {passed}"));
            let body = Body::Locc(LoccBody::from_protocol(&protocol));
            write_artifact(common.out.as_deref(), &ProtocolFile::new(cfg.seed, cfg.tolerances.clone(), body))?;
            Ok(status(passed))
        }
    }
}

#[derive(Serialize)]
struct PairEntry {
    pair: (usize, usize),
    protocol: LoccBody,
}

#[derive(Serialize)]
#[serde(rename_all = "lowercase")]
enum TreeNode {
    Leaf(usize),
    Test {
        protocol: usize,
        if_first: Box<TreeNode>,
        if_second: Box<TreeNode>,
        if_neither: Option<Box<TreeNode>>,
    },
}

impl From<&DecisionNode> for TreeNode {
    fn from(n: &DecisionNode) -> Self {
        match n {
            DecisionNode::Leaf(k) => TreeNode::Leaf(*k),
            DecisionNode::Test { protocol, if_first, if_second, if_neither } => TreeNode::Test {
                protocol: *protocol,
                if_first: Box::new(if_first.as_ref().into()),
                if_second: Box::new(if_second.as_ref().into()),
                if_neither: if_neither.as_ref().map(|n| Box::new(n.as_ref().into())),
            },
        }
    }
}

#[derive(Serialize)]
struct MultiResult {
    protocols: Vec<PairEntry>,
    tree: TreeNode,
    box_uses: usize,
    /// Reported-hypothesis distribution for each operator in the box.
    identification: Vec<Vec<(usize, f64)>>,
}

fn cmd_multi(common: &Common, paths: &[PathBuf]) -> CliResult<u8> {
    let cfg = common.config(Tolerances::default())?;
    let ops = paths
        .iter()
        .map(|p| {
            let u = load_operator(p, &cfg.tolerances)?;
            two_party(&u).map_err(|e| e.context(p.display().to_string()))?;
            Ok(u)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let multi = multi_discriminate(&ops, &cfg)?;
    let mut passed = true;
    for p in &multi.protocols {
        let ok = p.protocol.certificate.as_ref().is_some_and(|r| r.passed);
        passed &= ok;
        common.say(format!(
            "pair ({}, {}): case {}, box uses {}, passed = {ok}",
            p.pair.0,
            p.pair.1,
            deciding_case(&p.protocol.case_path, p.protocol.case_label),
            p.protocol.box_uses
        ));
    }
    common.say(format!("worst-case box uses = {}", multi.box_uses));
    let mut identification = Vec::new();
    for (k, u) in ops.iter().enumerate() {
        let dist = identify(&multi, u)?;
        let p = dist.iter().find(|(j, _)| *j == k).map_or(0.0, |(_, p)| *p);
        passed &= p >= 1.0 - cfg.tolerances.orthogonality;
        common.say(format!("operator {k}: identified with probability {p:.9}"));
        identification.push(dist);
    }
    common.say(format!("passed = {passed}"));
    let result = MultiResult {
        protocols: multi
            .protocols
            .iter()
            .map(|p| PairEntry { pair: p.pair, protocol: LoccBody::from_protocol(&p.protocol) })
            .collect(),
        tree: (&multi.tree).into(),
        box_uses: multi.box_uses,
        identification,
    };
    write_artifact(common.out.as_deref(), &envelope(&cfg, "multi", result))?;
    Ok(status(passed))
}

fn cmd_verify(common: &Common, protocol_path: &Path, u_path: &Path, v_path: &Path) -> CliResult<u8> {
    let mut file = ProtocolFile::load(protocol_path)?;
    let cfg = common.config(file.tolerances.clone())?;
    let u = load_operator(u_path, &cfg.tolerances)?;
    let v = load_operator(v_path, &cfg.tolerances)?;
    let (passed, overlap, embedded) = match &mut file.body {
        Body::Locc(body) => {
            two_party(&u)?;
            two_party(&v)?;
            let protocol = body.to_protocol(&cfg.tolerances).map_err(|e| e.context(protocol_path.display().to_string()))?;
            let report = verify(&protocol, &u, &v, &cfg.tolerances)?;
            common.say(format!("case = {}", deciding_case(&body.case_path, body.case_label)));
            common.say(format!("box uses = {}", report.box_uses));
            common.say(format!("overlap = {:.3e}", report.overlap));
            common.say(format!("max second schmidt = {:.3e}", report.schmidt_second_max));
            let embedded = body.report.as_ref().map(|r| (r.passed, r.overlap));
            let out = (report.passed, report.overlap, embedded);
            body.report = Some(report);
            out
        }
        Body::Sequential(body) => {
            let scheme = body.to_scheme(&cfg.tolerances).map_err(|e| e.context(protocol_path.display().to_string()))?;
            let overlap = evaluate_scheme(&scheme, &u, &v)?;
            scheme_report(common, &scheme, overlap);
            let embedded = Some((body.overlap <= file.tolerances.orthogonality, body.overlap));
            body.overlap = overlap;
            (overlap <= cfg.tolerances.orthogonality, overlap, embedded)
        }
    };
    common.say(format!("passed = {passed}"));
    if let Some((was_passed, was_overlap)) = embedded {
        if was_passed != passed || (was_overlap - overlap).abs() > REPORT_MATCH_TOL {
            return Err(CliError::failure(
                "ReportMismatch",
                format!("embedded report (passed = {was_passed}, overlap {was_overlap:.3e}) does not match recomputed (passed = {passed}, overlap {overlap:.3e})"),
            ));
        }
        common.say("embedded report reproduced");
    }
    file.seed = cfg.seed;
    file.tolerances = cfg.tolerances.clone();
    write_artifact(common.out.as_deref(), &file)?;
    Ok(status(passed))
}

fn run(cli: &Cli) -> CliResult<u8> {
    let common = &cli.common;
    match &cli.command {
        Command::Theta { op } => cmd_theta(common, op),
        Command::Classify { op } => cmd_classify(common, op),
        Command::Discriminate { mode, u, v } => cmd_discriminate(common, *mode, u, v),
        Command::Multi { ops } => cmd_multi(common, ops),
        Command::Verify { protocol, u, v } => cmd_verify(common, protocol, u, v),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
