use std::path::Path;

use drscc_core::tightening::{ConnectivityIssue, TighteningError};
use drscc_core::PlanError;
use serde_json::{json, Value};

use crate::config::ConfigError;

pub const EXIT_OK: i32 = 0;
/// Config, corridor or other invariant error.
pub const EXIT_INVALID: i32 = 1;
/// Tightening crossed bounds, tightened corridor disconnected, or QP infeasible.
pub const EXIT_INFEASIBLE: i32 = 2;
/// Solver iteration cap or failure to write an output file.
pub const EXIT_RUNTIME: i32 = 3;

/// A failure with its exit code and a machine-readable record.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub class: &'static str,
    pub code: i32,
    pub message: String,
    pub details: Value,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn new(class: &'static str, code: i32, message: impl Into<String>) -> Self {
        Self { class, code, message: message.into(), details: Value::Null }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::new("io", EXIT_RUNTIME, format!("cannot write {}: {err}", path.display()))
            .with_details(json!({ "path": path.display().to_string() }))
    }

    /// Single-line JSON record for stderr.
    pub fn record(&self) -> String {
        let mut v = json!({ "error": self.class, "exit_code": self.code, "message": self.message });
        if !self.details.is_null() {
            v["details"] = self.details.clone();
        }
        v.to_string()
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let details = match &e {
            ConfigError::Interval { field, value, interval } => {
                json!({ "field": field, "value": value, "interval": interval })
            }
            ConfigError::Field { field, .. } => json!({ "field": field }),
            _ => Value::Null,
        };
        CliError::new("config", EXIT_INVALID, e.to_string()).with_details(details)
    }
}

pub(crate) fn connectivity_details(issues: &[ConnectivityIssue]) -> Value {
    Value::Array(
        issues
            .iter()
            .map(|i| match i {
                ConnectivityIssue::Disjoint { first } => json!({ "disjoint": [first + 1, first + 2] }),
                ConnectivityIssue::EndpointOutside { region, waypoint } => {
                    json!({ "endpoint_outside": { "region": region + 1, "waypoint": waypoint } })
                }
            })
            .collect(),
    )
}

impl From<TighteningError> for CliError {
    fn from(e: TighteningError) -> Self {
        match &e {
            TighteningError::Infeasible(report) => {
                let crossed: Vec<Value> = report
                    .crossed
                    .iter()
                    .map(|c| json!({ "region": c.region + 1, "dimension": c.dim + 1, "lower": c.lower, "upper": c.upper }))
                    .collect();
                CliError::new("tightening_infeasible", EXIT_INFEASIBLE, e.to_string())
                    .with_details(json!({ "crossed": crossed }))
            }
            _ => CliError::new("ambiguity", EXIT_INVALID, e.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        let msg = e.to_string();
        match e {
            PlanError::Corridor(_) | PlanError::MissingAmbiguity => CliError::new("config", EXIT_INVALID, msg),
            PlanError::InvalidCorridor(v) => CliError::new("invalid_corridor", EXIT_INVALID, msg)
                .with_details(Value::Array(v.iter().map(|x| Value::String(x.to_string())).collect())),
            PlanError::Tightening(t) => t.into(),
            PlanError::Disconnected(issues) => {
                CliError::new("disconnected", EXIT_INFEASIBLE, msg).with_details(connectivity_details(&issues))
            }
            PlanError::Assembly(_) => CliError::new("assembly", EXIT_INVALID, msg),
            PlanError::Infeasible(sol) => CliError::new("qp_infeasible", EXIT_INFEASIBLE, msg)
                .with_details(json!({ "certificate_rows": sol.infeasible_rows.len(), "iterations": sol.iterations })),
            PlanError::MaxIter(sol) => CliError::new("max_iter", EXIT_RUNTIME, msg)
                .with_details(json!({ "iterations": sol.iterations })),
            PlanError::Qp(_) | PlanError::Bezier(_) => CliError::new("internal", EXIT_INVALID, msg),
        }
    }
}
