mod docs;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flatsafe::conic::SolverOptions;
use flatsafe::planner::{plan, ZetaMode};
use flatsafe::scenario::{Scenario, BUNDLED};
use flatsafe::sim::simulate;
use flatsafe::tracker::certificates;
use flatsafe::verify::{verify_plan, verify_span_minima, DEFAULT_SAMPLES_PER_SPAN, PLAN_TOLERANCE};
use flatsafe::Error;

use docs::{Document, PlanDocument, TraceDocument, DOC_VERSION, PLAN_FORMAT, TRACE_FORMAT};

#[derive(Parser)]
#[command(
    name = "flatsafe",
    version,
    about = "Plan, track and verify quadcopter trajectories with safety certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the planning problem of a scenario and write the plan.
    Plan {
        /// scenario file, or `bundled:<name>`
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        /// override the scenario's zeta mode
        #[arg(long, value_enum)]
        zeta_mode: Option<ZetaArg>,
        /// solver feasibility and gap tolerance
        #[arg(long, env = "FLATSAFE_SOLVER_TOL")]
        tol: Option<f64>,
    },
    /// Fly a plan in closed loop through the safety filter.
    Track {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        /// run the nominal controller alone
        #[arg(long)]
        no_filter: bool,
    },
    /// Check every constraint of the scenario on a plan by dense sampling.
    Verify {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_SPAN)]
        samples_per_span: usize,
        /// also write the margins as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write samples of a plan or trace as CSV or JSON.
    Export {
        /// plan or trace document
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Columnar)]
        format: Format,
        /// plan sampling density
        #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_SPAN)]
        samples_per_span: usize,
    },
    /// List the bundled scenarios, or print one.
    Scenarios {
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ZetaArg {
    Vector,
    Scalar,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    /// CSV with a header line
    Columnar,
    /// JSON: the input document plus a `samples` table
    Document,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FailureKind {
    Parse,
    Infeasible,
    Solver,
    Verification,
    Runtime,
}

#[derive(Debug)]
pub struct Failure {
    kind: FailureKind,
    message: String,
}

impl Failure {
    fn new(kind: FailureKind, message: impl Into<String>) -> Self {
        Failure { kind, message: message.into() }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Failure::new(FailureKind::Parse, message)
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Failure::new(FailureKind::Runtime, message)
    }

    fn code(&self) -> u8 {
        match self.kind {
            FailureKind::Parse => 2,
            FailureKind::Infeasible => 3,
            FailureKind::Verification => 4,
            FailureKind::Solver | FailureKind::Runtime => 5,
        }
    }

    fn reason(&self) -> &'static str {
        match self.kind {
            FailureKind::Parse => "parse",
            FailureKind::Infeasible => "infeasible",
            FailureKind::Solver => "solver",
            FailureKind::Verification => "verification",
            FailureKind::Runtime => "runtime",
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::Infeasible(_) | Error::InfeasibleMargins(_) => FailureKind::Infeasible,
            Error::Solver(_) => FailureKind::Solver,
            Error::Scenario(_) | Error::InvalidArgument(_) | Error::Dimension(_) => FailureKind::Parse,
            _ => FailureKind::Runtime,
        };
        Failure::new(kind, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let line = serde_json::json!({ "error": f.reason(), "message": f.message });
            eprintln!("{line}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Plan { scenario, out, zeta_mode, tol } => cmd_plan(&scenario, &out, zeta_mode, tol),
        Command::Track { plan, scenario, out, no_filter } => cmd_track(&plan, &scenario, &out, no_filter),
        Command::Verify { plan, scenario, samples_per_span, out } => {
            cmd_verify(&plan, &scenario, samples_per_span, out.as_deref())
        }
        Command::Export { input, out, format, samples_per_span } => cmd_export(&input, &out, format, samples_per_span),
        Command::Scenarios { show } => cmd_scenarios(show.as_deref()),
    }
}

fn cmd_plan(spec: &str, out: &std::path::Path, zeta: Option<ZetaArg>, tol: Option<f64>) -> Result<(), Failure> {
    let s = docs::load_scenario(spec)?;
    let mut ps = s.planning.clone();
    if let Some(z) = zeta {
        ps.zeta_mode = match z {
            ZetaArg::Vector => ZetaMode::Vector,
            ZetaArg::Scalar => ZetaMode::Scalar,
        };
    }
    let mut opts = SolverOptions::default();
    if let Some(t) = tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(Failure::parse(format!("solver tolerance must lie in (0, 1), got {t}")));
        }
        opts.feas_tol = t;
        opts.obj_tol = t;
    }
    let p = plan(&ps, &opts)?;
    println!(
        "objective {:.9e}  snap {:.6e}  solve time {:.4} s  iterations {}",
        p.stats.objective, p.stats.snap, p.stats.solve_seconds, p.stats.iterations
    );
    let doc = PlanDocument {
        format: PLAN_FORMAT.into(),
        version: DOC_VERSION,
        scenario: ps.name.clone(),
        gravity: ps.gravity,
        plan: p,
    };
    docs::write_json(out, &doc)
}

fn consistent(doc: &PlanDocument, s: &Scenario) -> Result<(), Failure> {
    let k = s.planning.knots()?;
    if *doc.plan.curve.knots() != k {
        return Err(Failure::parse(format!(
            "plan knots do not match scenario {:?} (plan was made for {:?})",
            s.planning.name, doc.scenario
        )));
    }
    Ok(())
}

fn cmd_track(plan_path: &std::path::Path, spec: &str, out: &std::path::Path, no_filter: bool) -> Result<(), Failure> {
    let doc = docs::read_plan(plan_path)?;
    let s = docs::load_scenario(spec)?;
    consistent(&doc, &s)?;
    let ctrl = s
        .controller(if no_filter { Some(false) } else { None })
        .ok_or_else(|| Failure::parse(format!("scenario {:?} has no [tracking] section", s.planning.name)))?;
    let cfg = s.sim_config(&doc.plan)?;
    let trace = simulate(&doc.plan.curve, &ctrl, &cfg)?;
    let cert = certificates(&trace.ticks(), &ctrl.cbf);
    println!(
        "ticks {}  max tube error {:.4} (delta {})  min barrier {:+.4}  velocity error {:.4} (bound {:.4})  input deviation {:.4} (bound {:.4})",
        trace.records.len(),
        trace.max_position_error,
        ctrl.cbf.delta,
        trace.min_barrier,
        cert.max_velocity_error,
        cert.velocity_bound,
        cert.max_input_deviation,
        cert.input_bound
    );
    if trace.min_barrier < 0.0 {
        println!("barrier violated: min h = {:+.4}", trace.min_barrier);
    }
    let doc = TraceDocument {
        format: TRACE_FORMAT.into(),
        version: DOC_VERSION,
        scenario: s.planning.name.clone(),
        filter: ctrl.filter,
        certificates: cert,
        trace,
    };
    docs::write_json(out, &doc)
}

fn cmd_verify(
    plan_path: &std::path::Path,
    spec: &str,
    per_span: usize,
    out: Option<&std::path::Path>,
) -> Result<(), Failure> {
    let doc = docs::read_plan(plan_path)?;
    let s = docs::load_scenario(spec)?;
    consistent(&doc, &s)?;
    let mut report = verify_plan(&doc.plan, &s.planning, per_span)?;
    if let Some(w) = s.planning.effective_bounds()?.omega_max {
        let spans = verify_span_minima(&doc.plan, w, s.planning.gravity, per_span)?;
        let thrust = spans.iter().map(|m| m.thrust_margin).fold(f64::INFINITY, f64::min);
        let jerk = spans.iter().map(|m| m.jerk_margin).fold(f64::INFINITY, f64::min);
        for (class, unit, m) in [("span-thrust-floor", "m/s^2", thrust), ("span-jerk", "m/s^3", jerk)] {
            if m.is_finite() {
                report.margins.push(flatsafe::verify::Margin {
                    class: class.into(),
                    margin: m,
                    t: None,
                    samples: spans.len(),
                    unit: unit.into(),
                });
            }
        }
    }
    for m in &report.margins {
        let flag = if m.margin >= -PLAN_TOLERANCE { "ok" } else { "VIOLATED" };
        println!("{:<28} {:>+12.4e} {:<7} {}", m.class, m.margin, m.unit, flag);
    }
    if let Some(path) = out {
        docs::write_json(path, &report)?;
    }
    let bad: Vec<&str> = report.violations(PLAN_TOLERANCE).iter().map(|m| m.class.as_str()).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(FailureKind::Verification, format!("violated: {}", bad.join(", "))))
    }
}

fn cmd_export(input: &std::path::Path, out: &std::path::Path, format: Format, per_span: usize) -> Result<(), Failure> {
    let doc = docs::read_document(input)?;
    let table = match &doc {
        Document::Plan(p) => export::plan_table(&p.plan, p.gravity, per_span)?,
        Document::Trace(t) => export::trace_table(&t.trace),
    };
    match format {
        Format::Columnar => {
            let file = std::fs::File::create(out).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
            export::write_csv(&table, std::io::BufWriter::new(file)).map_err(|e| Failure::runtime(e.to_string()))
        }
        Format::Document => {
            let mut value = match &doc {
                Document::Plan(p) => serde_json::to_value(p),
                Document::Trace(t) => serde_json::to_value(t),
            }
            .map_err(|e| Failure::runtime(e.to_string()))?;
            value["samples"] = serde_json::to_value(&table).map_err(|e| Failure::runtime(e.to_string()))?;
            docs::write_json(out, &value)
        }
    }
}

fn cmd_scenarios(show: Option<&str>) -> Result<(), Failure> {
    match show {
        Some(name) => {
            let (_, text) = BUNDLED
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| Failure::parse(format!("no bundled scenario named {name:?}")))?;
            print!("{text}");
        }
        None => {
            for (name, _) in BUNDLED {
                let s = Scenario::bundled(name)?;
                println!("{name:<20} {}", s.description);
            }
        }
    }
    Ok(())
}
