//! Experiment configuration, suites and report files.
//!
//! Each suite writes its CSV files and a `summary.json` into the output
//! directory. Randomized suites draw from one ChaCha8 stream per suite,
//! seeded with `seed` plus a fixed per-suite offset.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{span_trace, Schedule, Scheme, StepPolicy, StepRecord};
use crate::error::{Error, Result};
use crate::gossip::{check_spectral_bound, verify_ct_sandwich, GossipParams, SandwichReport};
use crate::graphcore::{spectral_summary, Graph};
use crate::topologies::{random_supergraph_sequence, shrinking_sequence};
use crate::tvopt::{run_agm_tv, AgmRun, Certificate, CertificateRow, ConsensusSequence};
use crate::worstcase::ChainProblem;

/// Which suite to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Budgets,
    Flow,
    Span,
    Ct,
    Tvopt,
    Full,
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Budgets => "budgets",
            Suite::Flow => "flow",
            Suite::Span => "span",
            Suite::Ct => "ct",
            Suite::Tvopt => "tvopt",
            Suite::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Poly,
    Log,
    Const,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Slack on the `C_T` norm sandwich.
    pub ct_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { ct_slack: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: Suite,
    pub scheme: SchemeKind,
    pub d: usize,
    pub k: usize,
    pub t: usize,
    /// Node count of the consensus skeleton (a path).
    pub n: usize,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    /// Schedule rounds, graph sequence length or iterations, per suite.
    pub steps: Option<usize>,
    pub trials: usize,
    /// Columns of each random consensus input.
    pub cols: usize,
    /// Per-step extra edges on top of the skeleton (ct suite).
    pub extra_edges: usize,
    /// Initial extra edges of the shrinking sequence (tvopt suite).
    pub initial_extra_edges: usize,
    pub shrink_every: usize,
    /// Longest coordinate tracked by the span suite.
    pub max_m: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            suite: Suite::Full,
            scheme: SchemeKind::Poly,
            d: 4,
            k: 4,
            t: 3,
            n: 20,
            mu: 1.0,
            l: 10.0,
            steps: None,
            trials: 100,
            cols: 1,
            extra_edges: 3,
            initial_extra_edges: 30,
            shrink_every: 5,
            max_m: 8,
            seed: 0,
            out: None,
            tolerances: Tolerances::default(),
        }
    }
}

fn config_err(field: &str, detail: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        detail: detail.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            detail: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        ExperimentConfig::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("k", self.k),
            ("t", self.t),
            ("n", self.n),
            ("trials", self.trials),
            ("cols", self.cols),
            ("shrink_every", self.shrink_every),
            ("max_m", self.max_m),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(config_err(field, "must be positive"));
            }
        }
        if self.steps == Some(0) {
            return Err(config_err("steps", "must be positive"));
        }
        if !(self.mu > 0.0) {
            return Err(config_err("mu", "must be positive"));
        }
        if !(self.l > self.mu) {
            return Err(config_err("L", "must exceed mu"));
        }
        if self.n < 2 {
            return Err(config_err("n", "need at least two nodes"));
        }
        if !(self.tolerances.ct_slack >= 0.0) {
            return Err(config_err("tolerances.ct_slack", "must be nonnegative"));
        }
        if matches!(self.suite, Suite::Budgets | Suite::Flow | Suite::Span | Suite::Full) {
            scheme_of(self)
                .build()
                .map_err(|e| config_err("scheme", e.to_string()))?;
        }
        Ok(())
    }
}

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // 17 significant digits round-trip every f64
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

/// Writes a header row and `rows` with LF line endings.
pub fn emit_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::InvalidParams(format!(
                "row {i} has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of one invariant check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Hard checks decide the exit status; soft ones are reported only.
    pub hard: bool,
    pub pass: bool,
    pub measured: f64,
    pub bound: f64,
}

impl Check {
    fn hard(name: impl Into<String>, pass: bool, measured: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            hard: true,
            pass,
            measured,
            bound,
        }
    }

    fn soft(name: impl Into<String>, pass: bool, measured: f64, bound: f64) -> Self {
        Check {
            hard: false,
            ..Check::hard(name, pass, measured, bound)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub suite: Suite,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub pass: bool,
}

fn write_summary(dir: &Path, summary: &Summary) -> Result<()> {
    let mut f = fs::File::create(dir.join("summary.json"))?;
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Io(e.to_string()))?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Caps the global rayon pool at `TVLAB_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("TVLAB_THREADS") {
        let threads: usize = v
            .parse()
            .map_err(|_| config_err("TVLAB_THREADS", format!("not a thread count: {v}")))?;
        // a pool built earlier in the process stays in place
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Ok(())
}

pub fn scheme_of(cfg: &ExperimentConfig) -> Scheme {
    match cfg.scheme {
        SchemeKind::Poly => Scheme::Poly {
            d: cfg.d,
            k: cfg.k,
            t: cfg.t,
        },
        SchemeKind::Log => Scheme::Log { k: cfg.k },
        SchemeKind::Const => Scheme::Const { d: cfg.d, k: cfg.k },
    }
}

pub const SCHEDULE_HEADER: [&str; 5] = ["step", "delta", "bad_count", "phase", "t_flow"];

/// Runs `steps` rounds and returns the records with the flow known at each
/// round (0 until the first phase completes).
pub fn run_schedule(scheme: Scheme, steps: usize) -> Result<(Schedule, Vec<(StepRecord, usize)>)> {
    let mut s = Schedule::new(scheme)?;
    let mut flow = 0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let rec = s.advance()?;
        if let Some(t) = rec.completed_flow {
            flow = t;
        }
        out.push((rec, flow));
    }
    Ok((s, out))
}

pub fn schedule_row(rec: &StepRecord, flow: usize) -> Vec<Cell> {
    vec![
        rec.step.into(),
        rec.delta.into(),
        rec.bad.len().into(),
        rec.phase.into(),
        flow.into(),
    ]
}

fn suite_budgets(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<Check>> {
    let scheme = scheme_of(cfg);
    let (_, records) = run_schedule(scheme, cfg.steps.unwrap_or(500))?;
    let max_delta = records.iter().map(|(r, _)| r.delta).max().unwrap_or(0);
    let max_frontier = records.iter().map(|(r, _)| r.frontier).max().unwrap_or(0);
    let max_moving = records.iter().map(|(r, _)| r.moving).max().unwrap_or(0);
    if let Some(dir) = out {
        let mut header = SCHEDULE_HEADER.to_vec();
        header.extend(["frontier", "moving"]);
        let rows: Vec<_> = records
            .iter()
            .map(|(r, f)| {
                let mut row = schedule_row(r, *f);
                row.push(r.frontier.into());
                row.push(r.moving.into());
                row
            })
            .collect();
        emit_csv(&dir.join("budgets.csv"), &header, &rows)?;
    }
    let budget = scheme.edge_budget();
    let limit = scheme.frontier_limit();
    Ok(vec![
        Check::hard("edge_budget", max_delta <= budget, max_delta as f64, budget as f64),
        Check::hard("frontier_moving", max_moving <= limit, max_moving as f64, limit as f64),
        Check::soft("frontier_size", max_frontier <= limit, max_frontier as f64, limit as f64),
    ])
}

fn suite_flow(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<Check>> {
    let scheme = scheme_of(cfg);
    let mut s = Schedule::new(scheme)?;
    let floor = scheme.flow_floor(s.roles().w.len());
    let phases = cfg.steps.unwrap_or(2);
    let mut flows = Vec::with_capacity(phases);
    for _ in 0..phases {
        flows.push(s.information_flow()?);
    }
    if let Some(dir) = out {
        let rows: Vec<_> = flows
            .iter()
            .enumerate()
            .map(|(i, &t)| vec![i.into(), t.into(), floor.into(), (t >= floor).into()])
            .collect();
        emit_csv(&dir.join("flow.csv"), &["phase", "t_flow", "floor", "pass"], &rows)?;
    }
    let min_flow = flows.iter().copied().min().unwrap_or(0);
    let mut checks = vec![
        Check::hard("flow_floor", min_flow >= floor, min_flow as f64, floor as f64),
        Check::hard(
            "flow_symmetric",
            flows.iter().all(|&t| t == flows[0]),
            flows.iter().copied().max().unwrap_or(0) as f64,
            min_flow as f64,
        ),
    ];
    if let Scheme::Poly { k, t, .. } = scheme {
        let chi = spectral_summary(&s.graphs()[0])?.chi;
        let bound = (1.0 - 2.0 / t as f64) * chi / (2.0 * (k - 1) as f64);
        checks.push(Check::hard("flow_vs_chi", min_flow as f64 >= bound, min_flow as f64, bound));
    }
    Ok(checks)
}

fn suite_span(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<Check>> {
    let scheme = scheme_of(cfg);
    let mut s = Schedule::new(scheme)?;
    let flow = s.clone().information_flow()?;
    let budget = cfg.steps.unwrap_or(10 * flow);
    let dim = budget / flow + 4;
    let problem = ChainProblem::new(s.roles().clone(), cfg.mu, cfg.l, dim)?;
    let trace = span_trace(&mut s, &problem, StepPolicy::ALTERNATING, budget, cfg.max_m)?;
    let bound = |m: usize| (m - 1) * flow + m;
    if let Some(dir) = out {
        let rows: Vec<_> = trace
            .first_reach
            .iter()
            .enumerate()
            .map(|(i, &l)| vec![(i + 1).into(), l.into(), bound(i + 1).into(), (l >= bound(i + 1)).into()])
            .collect();
        emit_csv(&dir.join("span.csv"), &["m", "l_m", "bound", "pass"], &rows)?;
    }
    let slack = trace
        .first_reach
        .iter()
        .enumerate()
        .map(|(i, &l)| l as f64 - bound(i + 1) as f64)
        .fold(f64::INFINITY, f64::min);
    Ok(vec![
        Check::hard("span_lower_bound", trace.respects_flow(flow), slack, 0.0),
        Check::hard(
            "span_not_truncated",
            trace.max_reach + 1 < dim,
            trace.max_reach as f64,
            (dim - 1) as f64,
        ),
    ])
}

pub const CT_HEADER: [&str; 5] = ["trial", "input_norm", "output_norm", "ratio", "pass"];

pub fn trial_rows(report: &SandwichReport) -> Vec<Vec<Cell>> {
    report
        .trials
        .iter()
        .map(|r| {
            vec![
                r.trial.into(),
                r.input_norm.into(),
                r.output_norm.into(),
                r.ratio.into(),
                r.pass.into(),
            ]
        })
        .collect()
}

fn suite_ct(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let skeleton = Graph::path(cfg.n)?;
    let graphs = random_supergraph_sequence(&skeleton, cfg.steps.unwrap_or(300), cfg.extra_edges, &mut rng)?;
    let params = GossipParams::from_sequence(&graphs)?;
    check_spectral_bound(&graphs, params.rounds(), params.lambda_max)?;
    let report = verify_ct_sandwich(&graphs, &params, params.rounds(), cfg.trials, cfg.cols, cfg.tolerances.ct_slack, &mut rng)?;
    if let Some(dir) = out {
        emit_csv(&dir.join("ct.csv"), &CT_HEADER, &trial_rows(&report))?;
    }
    let slack = cfg.tolerances.ct_slack;
    Ok(vec![
        Check::hard("ct_lower", report.min_ratio >= report.lower - slack, report.min_ratio, report.lower),
        Check::hard("ct_upper", report.max_ratio <= report.upper + slack, report.max_ratio, report.upper),
    ])
}

pub const TRACE_HEADER: [&str; 7] = ["k", "f_gap", "dist_sq", "psi", "psi_monotone", "rate_bound", "rate_ok"];

pub fn certificate_rows(cert: &Certificate) -> Vec<Vec<Cell>> {
    cert.rows
        .iter()
        .map(|r| {
            vec![
                r.k.into(),
                r.f_gap.into(),
                r.dist_sq.into(),
                r.psi.into(),
                r.psi_monotone.into(),
                r.f_bound.into(),
                r.rate_ok.into(),
            ]
        })
        .collect()
}

/// Consensus run over a shrinking sequence on a path skeleton.
pub fn shrinking_consensus_run(cfg: &ExperimentConfig) -> Result<AgmRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let steps = cfg.steps.unwrap_or(200);
    let skeleton = Graph::path(cfg.n)?;
    let graphs = shrinking_sequence(&skeleton, cfg.initial_extra_edges, steps, cfg.shrink_every, &mut rng)?;
    let x0 = DVector::from_fn(cfg.n, |_, _| rng.gen_range(-1.0..1.0));
    let seq = ConsensusSequence::new(&graphs, &x0)?;
    run_agm_tv(&seq, &x0, steps, cfg.seed.wrapping_add(3))
}

fn suite_tvopt(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<Check>> {
    let run = shrinking_consensus_run(cfg)?;
    let cert = &run.certificate;
    if let Some(dir) = out {
        emit_csv(&dir.join("trace.csv"), &TRACE_HEADER, &certificate_rows(cert))?;
    }
    let ratio = |f: fn(&CertificateRow) -> (f64, f64)| {
        cert.rows
            .iter()
            .map(|r| {
                let (a, b) = f(r);
                a / b
            })
            .fold(0.0, f64::max)
    };
    let psi_growth = run
        .trace
        .psi
        .windows(2)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    Ok(vec![
        Check::hard("psi_monotone", run.trace.is_monotone(), psi_growth, 1.0),
        Check::hard(
            "rate_f_gap",
            cert.rows.iter().all(|r| r.rate_ok),
            ratio(|r| (r.f_gap, r.f_bound)),
            1.0,
        ),
        Check::hard(
            "rate_dist",
            cert.rows.iter().all(|r| r.rate_ok),
            ratio(|r| (r.dist_sq, r.dist_bound)),
            1.0,
        ),
    ])
}

fn run_suite(suite: Suite, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<Check>> {
    match suite {
        Suite::Budgets => suite_budgets(cfg, out),
        Suite::Flow => suite_flow(cfg, out),
        Suite::Span => suite_span(cfg, out),
        Suite::Ct => suite_ct(cfg, out),
        Suite::Tvopt => suite_tvopt(cfg, out),
        Suite::Full => {
            let mut all = Vec::new();
            for s in [Suite::Budgets, Suite::Flow, Suite::Span, Suite::Ct, Suite::Tvopt] {
                // the step count of one suite means something else in another
                let sub = ExperimentConfig {
                    suite: s,
                    steps: None,
                    ..cfg.clone()
                };
                for mut c in run_suite(s, &sub, out)? {
                    c.name = format!("{}.{}", s.name(), c.name);
                    all.push(c);
                }
            }
            Ok(all)
        }
    }
}

/// Validates `cfg`, runs its suite and writes the report files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    let out = cfg.out.as_deref();
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let checks = run_suite(cfg.suite, cfg, out)?;
    let summary = Summary {
        suite: cfg.suite,
        config: cfg.clone(),
        pass: checks.iter().all(|c| c.pass || !c.hard),
        checks,
    };
    if let Some(dir) = out {
        write_summary(dir, &summary)?;
    }
    Ok(summary)
}
