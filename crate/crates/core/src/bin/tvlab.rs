use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use tvlab::adversary::Scheme;
use tvlab::gossip::{center, chebyshev_static, plain_gossip, verify_ct_sandwich, GossipParams};
use tvlab::graphcore::{spectral_summary, Graph, SpectralSummary};
use tvlab::harness::{
    certificate_rows, configure_threads, emit_csv, run_experiment, run_schedule, schedule_row,
    shrinking_consensus_run, trial_rows, Cell, ExperimentConfig, SchemeKind, Suite, CT_HEADER,
    SCHEDULE_HEADER, TRACE_HEADER,
};
use tvlab::topologies::{bethe_tree, binary_tree, nested_path_tree, rotating_star, TreeKind};
use tvlab::tvopt::{run_agm_tv, QuadraticSequence};
use tvlab::{Error, Result};

#[derive(Parser)]
#[command(name = "tvlab", version, about = "Time-varying consensus lower bounds and accelerated gossip")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one generated topology as a graph file plus a JSON sidecar.
    Topo(TopoArgs),
    /// Run an adversarial schedule and dump every graph.
    Adversary(AdversaryArgs),
    /// Consensus operators over a static graph or a graph directory.
    Gossip(GossipArgs),
    /// Accelerated method over a time-varying function sequence.
    Tvopt(TvoptArgs),
    /// Edge-budget and frontier checks of a schedule.
    Budgets(SuiteArgs),
    /// Information flow per phase.
    Flow(SuiteArgs),
    /// First-reach times under the span model.
    Span(SuiteArgs),
    /// Norm sandwich of the accelerated gossip operator.
    Ct(SuiteArgs),
    /// All suites.
    Full(SuiteArgs),
    /// The suite named in the config file.
    Run(SuiteArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Bethe,
    Binary,
    Nested,
    Path,
    Complete,
    Star,
    RotatingStar,
}

#[derive(Args)]
struct TopoArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Rotation step of the rotating star.
    #[arg(long, default_value_t = 0)]
    step: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Poly,
    Log,
    Const,
}

impl From<SchemeArg> for SchemeKind {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Poly => SchemeKind::Poly,
            SchemeArg::Log => SchemeKind::Log,
            SchemeArg::Const => SchemeKind::Const,
        }
    }
}

#[derive(Args)]
struct AdversaryArgs {
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    t: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum GossipMode {
    Nrl,
    Chebyshev,
    Plain,
}

#[derive(Args)]
struct GossipArgs {
    #[arg(long, value_enum, default_value = "nrl")]
    mode: GossipMode,
    /// Directory of graph files, used in lexicographic order.
    #[arg(long, conflicts_with = "static_graph")]
    graphs: Option<PathBuf>,
    #[arg(long = "static", value_name = "FILE")]
    static_graph: Option<PathBuf>,
    /// Rounds or polynomial degree; derived from the spectrum when omitted.
    #[arg(long = "T")]
    rounds: Option<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    slack: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum TvoptMode {
    QuadraticSkeleton,
    Custom,
}

#[derive(Args)]
struct TvoptArgs {
    #[arg(long, value_enum, default_value = "quadratic-skeleton")]
    mode: TvoptMode,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 30)]
    extra_edges: usize,
    #[arg(long, default_value_t = 5)]
    shrink_every: usize,
    /// JSON file with `matrices`, `minimizer` and `x0` for custom mode.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Default)]
struct SuiteArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct TopoSidecar {
    family: String,
    kind: Option<TreeKind>,
    n: usize,
    edges: usize,
    diameter: Option<usize>,
    spectrum: Option<SpectralSummary>,
}

#[derive(Deserialize)]
struct CustomInput {
    matrices: Vec<Vec<Vec<f64>>>,
    minimizer: Vec<f64>,
    x0: Vec<f64>,
}

fn write_graph(path: &Path, g: &Graph) -> Result<()> {
    fs::write(path, g.to_text())?;
    Ok(())
}

fn cmd_topo(a: &TopoArgs) -> Result<bool> {
    let (g, kind) = match a.family {
        FamilyArg::Bethe => {
            let t = bethe_tree(a.d, a.k)?;
            (t.graph, Some(t.kind))
        }
        FamilyArg::Binary => {
            let t = binary_tree(a.k)?;
            (t.graph, Some(t.kind))
        }
        FamilyArg::Nested => {
            let t = nested_path_tree(a.d, a.k)?;
            (t.graph, Some(t.kind))
        }
        FamilyArg::Path => (Graph::path(a.n)?, None),
        FamilyArg::Complete => (Graph::complete(a.n)?, None),
        FamilyArg::Star => (Graph::star(a.n, 0)?, None),
        FamilyArg::RotatingStar => (rotating_star(a.n, a.step)?, None),
    };
    write_graph(&a.out, &g)?;
    let sidecar = TopoSidecar {
        family: a.family_name().to_string(),
        kind,
        n: g.n(),
        edges: g.num_edges(),
        diameter: g.diameter(),
        spectrum: spectral_summary(&g).ok(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(a.out.with_extension("json"), json + "\n")?;
    Ok(true)
}

impl TopoArgs {
    fn family_name(&self) -> &'static str {
        match self.family {
            FamilyArg::Bethe => "bethe",
            FamilyArg::Binary => "binary",
            FamilyArg::Nested => "nested",
            FamilyArg::Path => "path",
            FamilyArg::Complete => "complete",
            FamilyArg::Star => "star",
            FamilyArg::RotatingStar => "rotating-star",
        }
    }
}

fn cmd_adversary(a: &AdversaryArgs) -> Result<bool> {
    let scheme = match a.scheme {
        SchemeArg::Poly => Scheme::Poly { d: a.d, k: a.k, t: a.t },
        SchemeArg::Log => Scheme::Log { k: a.k },
        SchemeArg::Const => Scheme::Const { d: a.d, k: a.k },
    };
    let (schedule, records) = run_schedule(scheme, a.steps)?;
    fs::create_dir_all(&a.out)?;
    for (i, g) in schedule.graphs().iter().enumerate() {
        write_graph(&a.out.join(format!("graph_{i:06}.txt")), g)?;
    }
    let rows: Vec<_> = records.iter().map(|(r, f)| schedule_row(r, *f)).collect();
    emit_csv(&a.out.join("schedule.csv"), &SCHEDULE_HEADER, &rows)?;
    Ok(true)
}

fn read_graphs(a: &GossipArgs) -> Result<Vec<Graph>> {
    if let Some(file) = &a.static_graph {
        return Ok(vec![Graph::from_text(&fs::read_to_string(file)?)?]);
    }
    let dir = a
        .graphs
        .as_ref()
        .ok_or_else(|| Error::InvalidParams("pass --graphs DIR or --static FILE".into()))?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|f| Graph::from_text(&fs::read_to_string(f)?))
        .collect()
}

fn cmd_gossip(a: &GossipArgs) -> Result<bool> {
    let graphs = read_graphs(a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    if a.mode == GossipMode::Nrl {
        let params = GossipParams::from_sequence(&graphs)?;
        let rounds = a.rounds.unwrap_or(params.rounds());
        let report = verify_ct_sandwich(&graphs, &params, rounds, a.trials, 1, a.slack, &mut rng)?;
        emit_csv(&a.out, &CT_HEADER, &trial_rows(&report))?;
        return Ok(report.pass);
    }
    let g = &graphs[0];
    let s = spectral_summary(g)?;
    let n = g.n();
    let mut rows = Vec::new();
    let mut all = true;
    for trial in 0..a.trials {
        let x = center(&DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0)));
        let (out, bound) = match a.mode {
            GossipMode::Chebyshev => {
                let k = a.rounds.unwrap_or(s.chi.sqrt().ceil() as usize);
                (chebyshev_static(&x, g, k)?, chebyshev_bound(&s, k))
            }
            _ => {
                let k = a.rounds.unwrap_or(GossipParams::new(s.lambda_max, s.lambda_min_plus)?.rounds());
                let rate = 1.0 - s.lambda_min_plus / s.lambda_max;
                (plain_gossip(&x, g, k, 1.0 / s.lambda_max)?, rate.powi(k as i32))
            }
        };
        let (input_norm, output_norm) = (x.norm(), out.norm());
        let ratio = output_norm / input_norm;
        let pass = ratio <= bound + a.slack;
        all &= pass;
        rows.push(vec![
            Cell::from(trial),
            input_norm.into(),
            output_norm.into(),
            ratio.into(),
            pass.into(),
        ]);
    }
    emit_csv(&a.out, &CT_HEADER, &rows)?;
    Ok(all)
}

/// `1 / T_K(a)`, the largest residual factor of the normalized polynomial.
fn chebyshev_bound(s: &SpectralSummary, k: usize) -> f64 {
    let span = s.lambda_max - s.lambda_min_plus;
    if span <= 1e-12 * s.lambda_max {
        return 0.0;
    }
    let a = (s.lambda_max + s.lambda_min_plus) / span;
    1.0 / (k as f64 * a.acosh()).cosh()
}

fn cmd_tvopt(a: &TvoptArgs) -> Result<bool> {
    let run = match a.mode {
        TvoptMode::QuadraticSkeleton => {
            let cfg = ExperimentConfig {
                suite: Suite::Tvopt,
                n: a.n,
                steps: Some(a.steps),
                initial_extra_edges: a.extra_edges,
                shrink_every: a.shrink_every,
                seed: a.seed,
                ..ExperimentConfig::default()
            };
            cfg.validate()?;
            shrinking_consensus_run(&cfg)?
        }
        TvoptMode::Custom => {
            let path = a
                .input
                .as_ref()
                .ok_or_else(|| Error::InvalidParams("custom mode needs --input".into()))?;
            let input: CustomInput = serde_json::from_str(&fs::read_to_string(path)?)
                .map_err(|e| Error::Parse {
                    line: e.line(),
                    detail: e.to_string(),
                })?;
            let matrices = input
                .matrices
                .iter()
                .map(|rows| {
                    let dim = rows.len();
                    DMatrix::from_fn(dim, dim, |i, j| rows[i].get(j).copied().unwrap_or(f64::NAN))
                })
                .collect();
            let seq = QuadraticSequence::new(matrices, DVector::from_vec(input.minimizer))?;
            run_agm_tv(&seq, &DVector::from_vec(input.x0), a.steps, a.seed)?
        }
    };
    emit_csv(&a.out, &TRACE_HEADER, &certificate_rows(&run.certificate))?;
    Ok(run.certificate.all_ok())
}

fn cmd_suite(suite: Option<Suite>, a: &SuiteArgs) -> Result<bool> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = suite {
        cfg.suite = s;
    }
    if let Some(v) = a.scheme {
        cfg.scheme = v.into();
    }
    macro_rules! flag {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { cfg.$f = v; })* };
    }
    flag!(d, k, t, n, trials, seed);
    if a.steps.is_some() {
        cfg.steps = a.steps;
    }
    if a.out.is_some() {
        cfg.out = a.out.clone();
    }
    let summary = run_experiment(&cfg)?;
    for c in &summary.checks {
        println!(
            "{} {}: measured {} bound {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.bound
        );
    }
    Ok(summary.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Topo(a) => cmd_topo(a),
        Command::Adversary(a) => cmd_adversary(a),
        Command::Gossip(a) => cmd_gossip(a),
        Command::Tvopt(a) => cmd_tvopt(a),
        Command::Budgets(a) => cmd_suite(Some(Suite::Budgets), a),
        Command::Flow(a) => cmd_suite(Some(Suite::Flow), a),
        Command::Span(a) => cmd_suite(Some(Suite::Span), a),
        Command::Ct(a) => cmd_suite(Some(Suite::Ct), a),
        Command::Full(a) => cmd_suite(Some(Suite::Full), a),
        Command::Run(a) => cmd_suite(None, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
