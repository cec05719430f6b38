//! In-memory block diagram: blocks, links, simulation settings.
//!
//! A [`Diagram`] only changes through methods that keep its invariants:
//! unique ids, links between existing ports, and at most one driver per
//! input port.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::blocks::{self, parse_param_expr, BlockKind, ExprError, ParamShape, Parsed};
use crate::solver::SimOptions;

/// Ids of the two structural cells every persisted document carries.
pub const RESERVED_IDS: [&str; 2] = ["0", "1"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagramError {
    #[error("unknown block kind {0}")]
    UnknownKind(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("id {0} is reserved")]
    ReservedId(String),
    #[error("empty id")]
    EmptyId,
    #[error("no block with id {0}")]
    UnknownBlock(String),
    #[error("no link with id {0}")]
    UnknownLink(String),
    #[error("bad endpoint: {0}")]
    BadEndpoint(String),
    #[error("input {port} of block {block} is already driven by link {link}")]
    PortOccupied {
        block: String,
        port: usize,
        link: String,
    },
    #[error("block {block}: expected {expected:?} ports (in, out), found {found:?}")]
    ArityMismatch {
        block: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
}

/// Orders ids numerically when both are decimal integers, otherwise as text;
/// numeric ids sort first.
pub fn cmp_ids(a: &str, b: &str) -> Ordering {
    let num = |s: &str| {
        if !s.is_empty() && s.bytes().all(|c| c.is_ascii_digit()) {
            s.parse::<u128>().ok()
        } else {
            None
        }
    };
    match (num(a), num(b)) {
        (Some(x), Some(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamParse {
    Value(Parsed),
    Invalid(ExprError),
    /// No schema for this parameter (opaque block or surplus entry).
    Uninterpreted,
}

/// A parameter as entered, plus its parse under the palette's expected shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamValue {
    raw: String,
    parsed: ParamParse,
}

impl ParamValue {
    pub fn new(raw: impl Into<String>, shape: Option<ParamShape>) -> Self {
        let raw = raw.into();
        let parsed = match shape {
            Some(shape) => match parse_param_expr(&raw, shape) {
                Ok(v) => ParamParse::Value(v),
                Err(e) => ParamParse::Invalid(e),
            },
            None => ParamParse::Uninterpreted,
        };
        ParamValue { raw, parsed }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn parsed(&self) -> &ParamParse {
        &self.parsed
    }

    pub fn is_unset(&self) -> bool {
        matches!(self.parsed, ParamParse::Value(Parsed::Unset))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: String,
    pub kind: BlockKind,
    pub params: BTreeMap<String, ParamValue>,
    pub n_in: usize,
    pub n_out: usize,
    pub position: (f64, f64),
    pub size: (f64, f64),
    pub attrs: BTreeMap<String, String>,
}

pub const DEFAULT_BLOCK_SIZE: (f64, f64) = (40.0, 40.0);

impl Block {
    /// Builds a block, filling palette defaults for any parameter not given and
    /// taking port counts from the palette. Opaque kinds start with no ports.
    pub fn new(
        id: impl Into<String>,
        kind: BlockKind,
        params: impl IntoIterator<Item = (String, String)>,
    ) -> Block {
        let mut raw: BTreeMap<String, String> = params.into_iter().collect();
        if let Some(info) = kind.info() {
            for p in info.params {
                raw.entry(p.name.to_string())
                    .or_insert_with(|| p.default.to_string());
            }
        }
        let params = raw
            .into_iter()
            .map(|(name, raw)| {
                let shape = kind.info().and_then(|i| i.param(&name)).map(|p| p.shape);
                (name, ParamValue::new(raw, shape))
            })
            .collect();
        let mut block = Block {
            id: id.into(),
            kind,
            params,
            n_in: 0,
            n_out: 0,
            position: (0.0, 0.0),
            size: DEFAULT_BLOCK_SIZE,
            attrs: BTreeMap::new(),
        };
        if let Some((i, o)) = block.palette_arity() {
            block.n_in = i;
            block.n_out = o;
        }
        block
    }

    /// Port counts the palette prescribes for this block's kind and parameters.
    pub fn palette_arity(&self) -> Option<(usize, usize)> {
        blocks::arity(&self.kind, self.params.get("signs").map(|p| p.raw()))
    }

    pub fn param_raw(&self, name: &str) -> Option<&str> {
        self.params.get(name).map(ParamValue::raw)
    }

    pub fn set_param(&mut self, name: &str, raw: impl Into<String>) {
        let shape = self
            .kind
            .info()
            .and_then(|i| i.param(name))
            .map(|p| p.shape);
        self.params
            .insert(name.to_string(), ParamValue::new(raw, shape));
    }
}

/// Output or input port address.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub block: String,
    pub port: usize,
}

impl Endpoint {
    pub fn new(block: impl Into<String>, port: usize) -> Self {
        Endpoint {
            block: block.into(),
            port,
        }
    }
}

/// Directed connection from an output port to an input port.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: String,
    pub src: Endpoint,
    pub dst: Endpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagram {
    pub title: String,
    pub background: i64,
    pub settings: SimOptions,
    pub attrs: BTreeMap<String, String>,
    blocks: Vec<Block>,
    links: Vec<Link>,
}

impl Default for Diagram {
    fn default() -> Self {
        Diagram {
            title: String::new(),
            background: -1,
            settings: SimOptions::default(),
            attrs: BTreeMap::new(),
            blocks: Vec::new(),
            links: Vec::new(),
        }
    }
}

impl Diagram {
    pub fn new(title: impl Into<String>) -> Self {
        Diagram {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn block(&self, id: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.id == id)
    }

    pub fn link(&self, id: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.id == id)
    }

    /// Link currently driving input `port` of block `block`.
    pub fn driver(&self, block: &str, port: usize) -> Option<&Link> {
        self.links
            .iter()
            .find(|l| l.dst.block == block && l.dst.port == port)
    }

    fn id_taken(&self, id: &str) -> bool {
        self.blocks.iter().any(|b| b.id == id) || self.links.iter().any(|l| l.id == id)
    }

    fn check_new_id(&self, id: &str) -> Result<(), DiagramError> {
        if id.is_empty() {
            return Err(DiagramError::EmptyId);
        }
        if RESERVED_IDS.contains(&id) {
            return Err(DiagramError::ReservedId(id.to_string()));
        }
        if self.id_taken(id) {
            return Err(DiagramError::DuplicateId(id.to_string()));
        }
        Ok(())
    }

    /// Next decimal id above every numeric id in use (and above the reserved cells).
    pub fn fresh_id(&self) -> String {
        let max = self
            .blocks
            .iter()
            .map(|b| b.id.as_str())
            .chain(self.links.iter().map(|l| l.id.as_str()))
            .filter(|id| id.bytes().all(|c| c.is_ascii_digit()))
            .filter_map(|id| id.parse::<u64>().ok())
            .max()
            .unwrap_or(1)
            .max(1);
        (max + 1).to_string()
    }

    /// Appends a palette block under a fresh id.
    pub fn add_block(
        &mut self,
        kind: &str,
        params: impl IntoIterator<Item = (String, String)>,
        position: (f64, f64),
    ) -> Result<String, DiagramError> {
        let kind = BlockKind::from_name(kind);
        let info = kind
            .info()
            .ok_or_else(|| DiagramError::UnknownKind(kind.name().to_string()))?;
        let id = self.fresh_id();
        let mut block = Block::new(id.clone(), kind, params);
        block.position = position;
        let (block_type, sim_fn, sim_type) = info.desktop;
        for (k, v) in [
            ("blockType", block_type),
            ("simulationFunctionName", sim_fn),
            ("simulationFunctionType", sim_type),
            ("style", info.kind().name()),
        ] {
            block.attrs.insert(k.to_string(), v.to_string());
        }
        self.insert_block(block)?;
        Ok(id)
    }

    /// Inserts a fully formed block. Known kinds must carry palette port counts.
    pub fn insert_block(&mut self, block: Block) -> Result<(), DiagramError> {
        self.check_new_id(&block.id)?;
        if let Some(expected) = block.palette_arity() {
            if expected != (block.n_in, block.n_out) {
                return Err(DiagramError::ArityMismatch {
                    block: block.id.clone(),
                    expected,
                    found: (block.n_in, block.n_out),
                });
            }
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn remove_block(&mut self, id: &str) -> Result<Block, DiagramError> {
        let idx = self
            .blocks
            .iter()
            .position(|b| b.id == id)
            .ok_or_else(|| DiagramError::UnknownBlock(id.to_string()))?;
        self.links
            .retain(|l| l.src.block != id && l.dst.block != id);
        Ok(self.blocks.remove(idx))
    }

    /// Sets a parameter's raw text. For SUMMATION this can change the input
    /// count; shrinking below a connected port is rejected.
    pub fn set_param(&mut self, block: &str, name: &str, raw: &str) -> Result<(), DiagramError> {
        let idx = self
            .blocks
            .iter()
            .position(|b| b.id == block)
            .ok_or_else(|| DiagramError::UnknownBlock(block.to_string()))?;
        let mut updated = self.blocks[idx].clone();
        updated.set_param(name, raw);
        if let Some((n_in, n_out)) = updated.palette_arity() {
            if let Some(l) = self
                .links
                .iter()
                .find(|l| l.dst.block == block && l.dst.port >= n_in)
            {
                return Err(DiagramError::BadEndpoint(format!(
                    "link {} uses input {} which would no longer exist",
                    l.id, l.dst.port
                )));
            }
            updated.n_in = n_in;
            updated.n_out = n_out;
        }
        self.blocks[idx] = updated;
        Ok(())
    }

    pub fn set_position(&mut self, block: &str, position: (f64, f64)) -> Result<(), DiagramError> {
        let b = self
            .blocks
            .iter_mut()
            .find(|b| b.id == block)
            .ok_or_else(|| DiagramError::UnknownBlock(block.to_string()))?;
        b.position = position;
        Ok(())
    }

    /// Links an output port to an unconnected input port under a fresh id.
    pub fn connect(&mut self, src: Endpoint, dst: Endpoint) -> Result<String, DiagramError> {
        let id = self.fresh_id();
        self.insert_link(Link {
            id: id.clone(),
            src,
            dst,
        })?;
        Ok(id)
    }

    pub fn insert_link(&mut self, link: Link) -> Result<(), DiagramError> {
        self.check_new_id(&link.id)?;
        let src = self
            .block(&link.src.block)
            .ok_or_else(|| DiagramError::BadEndpoint(format!("no block {}", link.src.block)))?;
        if link.src.port >= src.n_out {
            return Err(DiagramError::BadEndpoint(format!(
                "block {} has {} outputs, port {} requested",
                src.id, src.n_out, link.src.port
            )));
        }
        let dst = self
            .block(&link.dst.block)
            .ok_or_else(|| DiagramError::BadEndpoint(format!("no block {}", link.dst.block)))?;
        if link.dst.port >= dst.n_in {
            return Err(DiagramError::BadEndpoint(format!(
                "block {} has {} inputs, port {} requested",
                dst.id, dst.n_in, link.dst.port
            )));
        }
        if let Some(existing) = self.driver(&link.dst.block, link.dst.port) {
            return Err(DiagramError::PortOccupied {
                block: link.dst.block.clone(),
                port: link.dst.port,
                link: existing.id.clone(),
            });
        }
        self.links.push(link);
        Ok(())
    }

    pub fn remove_link(&mut self, id: &str) -> Result<Link, DiagramError> {
        let idx = self
            .links
            .iter()
            .position(|l| l.id == id)
            .ok_or_else(|| DiagramError::UnknownLink(id.to_string()))?;
        Ok(self.links.remove(idx))
    }

    /// Same diagram with blocks and links in id order.
    pub fn canonicalize(&self) -> Diagram {
        let mut d = self.clone();
        d.blocks.sort_by(|a, b| cmp_ids(&a.id, &b.id));
        d.links.sort_by(|a, b| cmp_ids(&a.id, &b.id));
        d
    }
}

pub fn canonicalize(d: &Diagram) -> Diagram {
    d.canonicalize()
}
