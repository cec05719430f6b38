//! Loss-free JSON form of a [`Diagram`], used by the HTTP API and the editor.
//! The layout is described in `docs/interchange.md`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::BlockKind;
use crate::diagram::{Block, Diagram, DiagramError, Endpoint, Link, DEFAULT_BLOCK_SIZE};
use crate::solver::SimOptions;
use crate::xml::{is_attr_name, is_xml_text, BLOCK_STRUCTURAL_ATTRS, DIAGRAM_STRUCTURAL_ATTRS};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct SchemaViolation {
    /// Location of the offending field, e.g. `blocks[2].params.gain`.
    pub path: String,
    pub message: String,
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> SchemaViolation {
    SchemaViolation {
        path: path.into(),
        message: message.into(),
    }
}

fn default_format() -> u32 {
    FORMAT_VERSION
}

fn default_background() -> i64 {
    -1
}

fn default_size() -> (f64, f64) {
    DEFAULT_BLOCK_SIZE
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramDoc {
    #[serde(default = "default_format")]
    pub format: u32,
    #[serde(default)]
    pub title: String,
    #[serde(default = "default_background")]
    pub background: i64,
    #[serde(default)]
    pub settings: SimOptions,
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
    #[serde(default)]
    pub blocks: Vec<BlockDoc>,
    #[serde(default)]
    pub links: Vec<LinkDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDoc {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_out: Option<usize>,
    #[serde(default)]
    pub position: (f64, f64),
    #[serde(default = "default_size")]
    pub size: (f64, f64),
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointDoc {
    pub block: String,
    pub port: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub id: String,
    pub src: EndpointDoc,
    pub dst: EndpointDoc,
}

impl From<&Diagram> for DiagramDoc {
    fn from(d: &Diagram) -> Self {
        DiagramDoc {
            format: FORMAT_VERSION,
            title: d.title.clone(),
            background: d.background,
            settings: d.settings.clone(),
            attrs: d.attrs.clone(),
            blocks: d
                .blocks()
                .iter()
                .map(|b| BlockDoc {
                    id: b.id.clone(),
                    kind: b.kind.name().to_string(),
                    params: b
                        .params
                        .iter()
                        .map(|(k, v)| (k.clone(), v.raw().to_string()))
                        .collect(),
                    n_in: Some(b.n_in),
                    n_out: Some(b.n_out),
                    position: b.position,
                    size: b.size,
                    attrs: b.attrs.clone(),
                })
                .collect(),
            links: d
                .links()
                .iter()
                .map(|l| LinkDoc {
                    id: l.id.clone(),
                    src: EndpointDoc {
                        block: l.src.block.clone(),
                        port: l.src.port,
                    },
                    dst: EndpointDoc {
                        block: l.dst.block.clone(),
                        port: l.dst.port,
                    },
                })
                .collect(),
        }
    }
}

fn check_text(path: &str, s: &str) -> Result<(), SchemaViolation> {
    if is_xml_text(s) {
        Ok(())
    } else {
        Err(violation(path, "contains control characters"))
    }
}

fn check_attrs(
    path: &str,
    attrs: &BTreeMap<String, String>,
    reserved: &[&str],
) -> Result<(), SchemaViolation> {
    for (k, v) in attrs {
        let here = format!("{path}.{k}");
        if !is_attr_name(k) {
            return Err(violation(here, "not a valid attribute name"));
        }
        if reserved.contains(&k.as_str()) {
            return Err(violation(
                here,
                "reserved attribute; use the dedicated field",
            ));
        }
        check_text(&here, v)?;
    }
    Ok(())
}

impl DiagramDoc {
    /// Builds the diagram, checking everything the document schema alone cannot.
    pub fn into_diagram(self) -> Result<Diagram, SchemaViolation> {
        if self.format != FORMAT_VERSION {
            return Err(violation(
                "format",
                format!(
                    "unsupported format {}, expected {FORMAT_VERSION}",
                    self.format
                ),
            ));
        }
        check_text("title", &self.title)?;
        check_attrs("attrs", &self.attrs, &DIAGRAM_STRUCTURAL_ATTRS)?;
        let mut d = Diagram::new(self.title);
        d.background = self.background;
        d.settings = self.settings;
        d.attrs = self.attrs;

        for (i, b) in self.blocks.into_iter().enumerate() {
            let path = format!("blocks[{i}]");
            check_text(&format!("{path}.id"), &b.id)?;
            check_text(&format!("{path}.kind"), &b.kind)?;
            for (k, v) in &b.params {
                check_text(&format!("{path}.params.{k}"), k)?;
                check_text(&format!("{path}.params.{k}"), v)?;
            }
            check_attrs(&format!("{path}.attrs"), &b.attrs, &BLOCK_STRUCTURAL_ATTRS)?;
            for (field, v) in [
                ("position", [b.position.0, b.position.1]),
                ("size", [b.size.0, b.size.1]),
            ] {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(violation(format!("{path}.{field}"), "must be finite"));
                }
            }
            let mut block = Block::new(b.id, BlockKind::from_name(&b.kind), b.params);
            if let Some(n) = b.n_in {
                block.n_in = n;
            }
            if let Some(n) = b.n_out {
                block.n_out = n;
            }
            block.position = b.position;
            block.size = b.size;
            block.attrs = b.attrs;
            d.insert_block(block).map_err(|e| {
                let field = match e {
                    DiagramError::ArityMismatch { .. } => "n_in",
                    _ => "id",
                };
                violation(format!("{path}.{field}"), e.to_string())
            })?;
        }

        for (i, l) in self.links.into_iter().enumerate() {
            let path = format!("links[{i}]");
            check_text(&format!("{path}.id"), &l.id)?;
            let link = Link {
                id: l.id,
                src: Endpoint::new(l.src.block, l.src.port),
                dst: Endpoint::new(l.dst.block, l.dst.port),
            };
            let src_ok = d
                .block(&link.src.block)
                .is_some_and(|b| link.src.port < b.n_out);
            d.insert_link(link).map_err(|e| {
                let field = match e {
                    DiagramError::BadEndpoint(_) if !src_ok => ".src",
                    DiagramError::BadEndpoint(_) | DiagramError::PortOccupied { .. } => ".dst",
                    _ => ".id",
                };
                violation(format!("{path}{field}"), e.to_string())
            })?;
        }
        Ok(d)
    }
}

pub fn to_interchange_json(d: &Diagram) -> Vec<u8> {
    serde_json::to_vec_pretty(&DiagramDoc::from(d)).expect("diagram documents always serialize")
}

pub fn to_interchange_value(d: &Diagram) -> serde_json::Value {
    serde_json::to_value(DiagramDoc::from(d)).expect("diagram documents always serialize")
}

pub fn from_interchange_json(bytes: &[u8]) -> Result<Diagram, SchemaViolation> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let doc: DiagramDoc = serde_path_to_error::deserialize(&mut de).map_err(schema_error)?;
    de.end().map_err(|e| violation("", e.to_string()))?;
    doc.into_diagram()
}

pub fn from_interchange_value(v: serde_json::Value) -> Result<Diagram, SchemaViolation> {
    let doc: DiagramDoc = serde_path_to_error::deserialize(v).map_err(schema_error)?;
    doc.into_diagram()
}

fn schema_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> SchemaViolation {
    let path = e.path().to_string();
    let path = if path == "." { String::new() } else { path };
    violation(path, e.into_inner().to_string())
}
