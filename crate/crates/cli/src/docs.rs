//! JSON documents written and read by the commands.

use std::path::Path;

use flatsafe::planner::TrajectoryPlan;
use flatsafe::scenario::{Scenario, BUNDLED};
use flatsafe::sim::SimTrace;
use flatsafe::tracker::CertificateReport;
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const PLAN_FORMAT: &str = "flatsafe-plan";
pub const TRACE_FORMAT: &str = "flatsafe-trace";
pub const DOC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub format: String,
    pub version: u32,
    pub scenario: String,
    pub gravity: f64,
    pub plan: TrajectoryPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub format: String,
    pub version: u32,
    pub scenario: String,
    pub filter: bool,
    pub certificates: CertificateReport,
    pub trace: SimTrace,
}

pub enum Document {
    Plan(PlanDocument),
    Trace(TraceDocument),
}

/// `bundled:<name>` or a path to a scenario file.
pub fn load_scenario(spec: &str) -> Result<Scenario, Failure> {
    if let Some(name) = spec.strip_prefix("bundled:") {
        if !BUNDLED.iter().any(|(n, _)| *n == name) {
            return Err(Failure::parse(format!("no bundled scenario named {name:?}")));
        }
        return Scenario::bundled(name).map_err(|e| Failure::parse(e.to_string()));
    }
    let text = std::fs::read_to_string(spec).map_err(|e| Failure::parse(format!("{spec}: {e}")))?;
    Scenario::from_toml_str(&text).map_err(|e| Failure::parse(format!("{spec}: {e}")))
}

pub fn read_document(path: &Path) -> Result<Document, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    let format = value.get("format").and_then(|f| f.as_str()).unwrap_or_default().to_string();
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(DOC_VERSION as u64) {
        return Err(Failure::parse(format!("{}: unsupported document version {version:?}", path.display())));
    }
    let bad = |e: serde_json::Error| Failure::parse(format!("{}: {e}", path.display()));
    match format.as_str() {
        PLAN_FORMAT => Ok(Document::Plan(serde_json::from_value(value).map_err(bad)?)),
        TRACE_FORMAT => Ok(Document::Trace(serde_json::from_value(value).map_err(bad)?)),
        other => Err(Failure::parse(format!("{}: unknown document format {other:?}", path.display()))),
    }
}

pub fn read_plan(path: &Path) -> Result<PlanDocument, Failure> {
    match read_document(path)? {
        Document::Plan(p) => Ok(p),
        Document::Trace(_) => Err(Failure::parse(format!("{}: expected a plan, found a trace", path.display()))),
    }
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| Failure::runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}
