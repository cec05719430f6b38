//! Command implementations and the HTTP service behind the `xcosw` binary.

pub mod service;

use std::path::Path;

use thiserror::Error;
use xcosw_core::{
    from_interchange_json, parse_xcos_xml, serialize_xcos_xml, to_interchange_json, Diagram,
    SchemaViolation, SimOptions, SolverKind, XmlError,
};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("XML: {0}")]
    Xml(#[from] XmlError),
    #[error("JSON: {0}")]
    Json(#[from] SchemaViolation),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagramFormat {
    Xml,
    Json,
}

/// Guesses the encoding from the first non-blank byte: `{` is JSON, anything else XML.
pub fn sniff(bytes: &[u8]) -> DiagramFormat {
    let text = bytes.strip_prefix(b"\xef\xbb\xbf").unwrap_or(bytes);
    match text.iter().find(|b| !b.is_ascii_whitespace()) {
        Some(b'{') => DiagramFormat::Json,
        _ => DiagramFormat::Xml,
    }
}

pub fn parse_diagram(bytes: &[u8]) -> Result<Diagram, LoadError> {
    Ok(match sniff(bytes) {
        DiagramFormat::Json => from_interchange_json(bytes)?,
        DiagramFormat::Xml => parse_xcos_xml(bytes)?,
    })
}

pub fn load_diagram(path: &Path) -> Result<Diagram, LoadError> {
    let bytes = std::fs::read(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_diagram(&bytes)
}

pub fn write_diagram(d: &Diagram, format: DiagramFormat) -> Vec<u8> {
    match format {
        DiagramFormat::Xml => serialize_xcos_xml(d),
        DiagramFormat::Json => {
            let mut out = to_interchange_json(d);
            out.push(b'\n');
            out
        }
    }
}

/// Per-run overrides of a diagram's stored settings; absent fields keep the stored value.
#[derive(Debug, Clone, Default, PartialEq, serde::Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct OptionOverrides {
    /// Start time in seconds
    #[arg(long)]
    pub t0: Option<f64>,
    /// Final time in seconds
    #[arg(long)]
    pub tf: Option<f64>,
    /// Integrator: rk4 (fixed step) or adaptive
    #[arg(long)]
    pub solver: Option<SolverKind>,
    /// Fixed step for rk4, seconds
    #[arg(long)]
    pub dt: Option<f64>,
    /// Relative tolerance for the adaptive solver
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Absolute tolerance for the adaptive solver
    #[arg(long)]
    pub atol: Option<f64>,
    /// Largest adaptive step, seconds
    #[arg(long)]
    pub max_step: Option<f64>,
}

impl OptionOverrides {
    pub fn apply(&self, base: &SimOptions) -> SimOptions {
        let mut o = base.clone();
        if let Some(v) = self.t0 {
            o.t0 = v;
        }
        if let Some(v) = self.tf {
            o.tf = v;
        }
        if let Some(v) = self.solver {
            o.solver = v;
        }
        if let Some(v) = self.dt {
            o.dt = v;
        }
        if let Some(v) = self.rtol {
            o.rtol = v;
        }
        if let Some(v) = self.atol {
            o.atol = v;
        }
        if self.max_step.is_some() {
            o.max_step = self.max_step;
        }
        o
    }
}
