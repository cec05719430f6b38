//! Reading and writing the Xcos XML diagram format.
//!
//! Recognized subset, all inside `XcosDiagram/mxGraphModel/root`:
//!
//! * `mxCell` 0 and 1, the structural root cells;
//! * any element carrying `interfaceFunctionName` is a block. Its parameters
//!   are the `data` entries of a `ScilabString as="exprs"` child, in palette
//!   order, and its geometry the `mxGeometry as="geometry"` child;
//! * `ExplicitInputPort` / `ExplicitOutputPort` cells whose parent is a block,
//!   numbered by their 1-based `ordering`;
//! * `ExplicitLink` cells whose `source` and `target` name port cells.
//!
//! Everything else in `root` takes part in id and parent checks and is then
//! dropped. Unrecognized attributes of the diagram and of blocks are kept
//! verbatim in `attrs`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

use crate::blocks::BlockKind;
use crate::diagram::{Block, Diagram, DiagramError, Endpoint, Link, DEFAULT_BLOCK_SIZE};
use crate::solver::{SimOptions, SolverKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum XmlError {
    #[error("malformed XML at byte {position}: {message}")]
    XmlSyntax { position: u64, message: String },
    #[error("document is not UTF-8: {0}")]
    Encoding(String),
    #[error("root element is <{0}>, expected <XcosDiagram>")]
    UnexpectedRoot(String),
    #[error("no <mxGraphModel as=\"model\"><root> element")]
    MissingModel,
    #[error("root cells \"0\" and \"1\" (parent \"0\") are required")]
    MissingRootCells,
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("cell {id} has parent {parent}, which does not lead to cell \"0\"")]
    UnknownParent { id: String, parent: String },
    #[error("link {link}: {message}")]
    BadEndpoint { link: String, message: String },
    #[error("<{element}> attribute {attr}=\"{value}\" is not valid")]
    BadValue {
        element: String,
        attr: String,
        value: String,
    },
    #[error(transparent)]
    Diagram(#[from] DiagramError),
}

/// Block attributes the serializer writes itself; they never appear in `attrs`.
pub const BLOCK_STRUCTURAL_ATTRS: [&str; 3] = ["id", "parent", "interfaceFunctionName"];

const TF_ATTR: &str = "finalIntegrationTime";
const ATOL_ATTR: &str = "integratorAbsTolerance";
const RTOL_ATTR: &str = "integratorRelTolerance";
const MAX_STEP_ATTR: &str = "maximumStepSize";
const T0_ATTR: &str = "xcoswStartTime";
const DT_ATTR: &str = "xcoswStepSize";
const SOLVER_ATTR: &str = "xcoswSolver";

/// Diagram attributes mapped to fields; they never appear in `attrs`.
pub const DIAGRAM_STRUCTURAL_ATTRS: [&str; 9] = [
    "background",
    "title",
    TF_ATTR,
    ATOL_ATTR,
    RTOL_ATTR,
    MAX_STEP_ATTR,
    T0_ATTR,
    DT_ATTR,
    SOLVER_ATTR,
];

/// Whether `s` can be written as an XML attribute name.
pub fn is_attr_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':'))
        && !s.to_ascii_lowercase().starts_with("xmlns")
}

/// Whether `s` only holds characters an XML 1.0 document can carry.
pub fn is_xml_text(s: &str) -> bool {
    s.chars().all(|c| {
        matches!(c, '\t' | '\n' | '\r')
            || ('\u{20}'..='\u{D7FF}').contains(&c)
            || ('\u{E000}'..='\u{FFFD}').contains(&c)
            || c >= '\u{10000}'
    })
}

const MAX_DEPTH: usize = 256;

#[derive(Debug)]
struct Element {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<Element>,
}

impl Element {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    fn child_as(&self, name: &str, role: &str) -> Option<&Element> {
        self.children
            .iter()
            .find(|c| c.name == name && c.attr("as") == Some(role))
    }
}

fn syntax(position: u64, message: impl Into<String>) -> XmlError {
    XmlError::XmlSyntax {
        position,
        message: message.into(),
    }
}

fn open(e: &BytesStart<'_>, position: u64) -> Result<Element, XmlError> {
    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
    let mut attrs = Vec::new();
    for a in e.attributes() {
        let a = a.map_err(|err| syntax(position, err.to_string()))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a
            .unescape_value()
            .map_err(|err| syntax(position, err.to_string()))?
            .into_owned();
        attrs.push((key, value));
    }
    Ok(Element {
        name,
        attrs,
        children: Vec::new(),
    })
}

fn read_tree(bytes: &[u8]) -> Result<Element, XmlError> {
    let text = std::str::from_utf8(bytes).map_err(|e| XmlError::Encoding(e.to_string()))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut reader = Reader::from_str(text);
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    loop {
        let pos = reader.buffer_position();
        let event = reader
            .read_event()
            .map_err(|e| syntax(reader.error_position(), e.to_string()))?;
        match event {
            Event::Decl(decl) => {
                if let Some(enc) = decl.encoding() {
                    let enc = enc.map_err(|e| syntax(pos, e.to_string()))?;
                    let enc = String::from_utf8_lossy(&enc).to_ascii_lowercase();
                    if enc != "utf-8" && enc != "utf8" {
                        return Err(XmlError::Encoding(format!("declared encoding {enc}")));
                    }
                }
            }
            Event::Start(e) => {
                if root.is_some() {
                    return Err(syntax(pos, "content after the root element"));
                }
                if stack.len() >= MAX_DEPTH {
                    return Err(syntax(pos, "elements nested too deeply"));
                }
                stack.push(open(&e, pos)?);
            }
            Event::Empty(e) => {
                if root.is_some() {
                    return Err(syntax(pos, "content after the root element"));
                }
                let el = open(&e, pos)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None => root = Some(el),
                }
            }
            Event::End(_) => {
                let el = stack
                    .pop()
                    .ok_or_else(|| syntax(pos, "unmatched end tag"))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None => root = Some(el),
                }
            }
            Event::Text(t) => {
                if stack.is_empty() && !t.iter().all(u8::is_ascii_whitespace) {
                    return Err(syntax(pos, "text outside the root element"));
                }
            }
            Event::CData(_) => {
                if stack.is_empty() {
                    return Err(syntax(pos, "text outside the root element"));
                }
            }
            Event::Eof => {
                if !stack.is_empty() {
                    return Err(syntax(pos, "unexpected end of document"));
                }
                break;
            }
            Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
        }
    }
    root.ok_or_else(|| syntax(0, "no root element"))
}

fn num_attr(el: &Element, attr: &str) -> Result<Option<f64>, XmlError> {
    let Some(raw) = el.attr(attr) else {
        return Ok(None);
    };
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(bad_value(el, attr, raw)),
    }
}

fn bad_value(el: &Element, attr: &str, value: &str) -> XmlError {
    XmlError::BadValue {
        element: el.name.clone(),
        attr: attr.to_string(),
        value: value.to_string(),
    }
}

fn read_settings(el: &Element) -> Result<SimOptions, XmlError> {
    let mut s = SimOptions::default();
    if let Some(v) = num_attr(el, T0_ATTR)? {
        s.t0 = v;
    }
    if let Some(v) = num_attr(el, TF_ATTR)? {
        s.tf = v;
    }
    if let Some(v) = num_attr(el, DT_ATTR)? {
        s.dt = v;
    }
    if let Some(v) = num_attr(el, RTOL_ATTR)? {
        s.rtol = v;
    }
    if let Some(v) = num_attr(el, ATOL_ATTR)? {
        s.atol = v;
    }
    if let Some(v) = num_attr(el, MAX_STEP_ATTR)? {
        // desktop files write 0 for "no limit"
        s.max_step = (v != 0.0).then_some(v);
    }
    if let Some(v) = el.attr(SOLVER_ATTR) {
        s.solver = v
            .parse::<SolverKind>()
            .map_err(|_| bad_value(el, SOLVER_ATTR, v))?;
    }
    Ok(s)
}

enum Dir {
    In,
    Out,
}

struct PortCell {
    block: String,
    dir: Dir,
    ordering: Option<usize>,
}

/// Parses an Xcos XML document.
pub fn parse_xcos_xml(bytes: &[u8]) -> Result<Diagram, XmlError> {
    let doc = read_tree(bytes)?;
    if doc.name != "XcosDiagram" {
        return Err(XmlError::UnexpectedRoot(doc.name));
    }
    let mut d = Diagram::new(doc.attr("title").unwrap_or(""));
    if let Some(raw) = doc.attr("background") {
        d.background = raw
            .trim()
            .parse()
            .map_err(|_| bad_value(&doc, "background", raw))?;
    }
    d.settings = read_settings(&doc)?;
    for (k, v) in &doc.attrs {
        if !DIAGRAM_STRUCTURAL_ATTRS.contains(&k.as_str()) {
            d.attrs.insert(k.clone(), v.clone());
        }
    }

    let root = doc
        .child_as("mxGraphModel", "model")
        .and_then(|m| m.children.iter().find(|c| c.name == "root"))
        .ok_or(XmlError::MissingModel)?;

    // ids and parents of every cell
    let mut parents: HashMap<&str, Option<&str>> = HashMap::new();
    for c in &root.children {
        if let Some(id) = c.attr("id") {
            if parents.insert(id, c.attr("parent")).is_some() {
                return Err(XmlError::DuplicateId(id.to_string()));
            }
        }
    }
    let has_roots = root
        .children
        .iter()
        .any(|c| c.name == "mxCell" && c.attr("id") == Some("0") && c.attr("parent").is_none())
        && root.children.iter().any(|c| {
            c.name == "mxCell" && c.attr("id") == Some("1") && c.attr("parent") == Some("0")
        });
    if !has_roots {
        return Err(XmlError::MissingRootCells);
    }
    for (&id, &parent) in &parents {
        let mut cur = parent;
        let mut hops = 0;
        while let Some(p) = cur {
            if p == "0" {
                break;
            }
            match parents.get(p) {
                Some(&next) if hops < parents.len() => {
                    cur = next;
                    hops += 1;
                }
                _ => {
                    return Err(XmlError::UnknownParent {
                        id: id.to_string(),
                        parent: parent.unwrap_or_default().to_string(),
                    })
                }
            }
        }
    }

    let block_els: Vec<&Element> = root
        .children
        .iter()
        .filter(|c| c.attr("interfaceFunctionName").is_some() && c.attr("id").is_some())
        .collect();
    let block_ids: BTreeSet<&str> = block_els.iter().filter_map(|b| b.attr("id")).collect();

    let mut ports: HashMap<&str, PortCell> = HashMap::new();
    let mut port_counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for c in &root.children {
        let dir = match c.name.as_str() {
            "ExplicitInputPort" => Dir::In,
            "ExplicitOutputPort" => Dir::Out,
            _ => continue,
        };
        let (Some(id), Some(parent)) = (c.attr("id"), c.attr("parent")) else {
            continue;
        };
        let Some(&block) = block_ids.get(parent) else {
            return Err(XmlError::UnknownParent {
                id: id.to_string(),
                parent: parent.to_string(),
            });
        };
        let ordering = match c.attr("ordering") {
            None => None,
            Some(raw) => match raw.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Some(n - 1),
                _ => return Err(bad_value(c, "ordering", raw)),
            },
        };
        let counts = port_counts.entry(block).or_default();
        let slot = match dir {
            Dir::In => &mut counts.0,
            Dir::Out => &mut counts.1,
        };
        let index = ordering.unwrap_or(*slot);
        *slot = (*slot).max(index + 1);
        ports.insert(
            id,
            PortCell {
                block: block.to_string(),
                dir,
                ordering: Some(index),
            },
        );
    }

    for el in &block_els {
        let block = read_block(el, port_counts.get(el.attr("id").unwrap_or_default()))?;
        d.insert_block(block)?;
    }

    for c in &root.children {
        if c.name != "ExplicitLink" {
            continue;
        }
        let id = c.attr("id").unwrap_or_default().to_string();
        let end = |attr: &str| -> Result<&PortCell, XmlError> {
            let target = c.attr(attr).ok_or_else(|| XmlError::BadEndpoint {
                link: id.clone(),
                message: format!("missing {attr}"),
            })?;
            ports.get(target).ok_or_else(|| XmlError::BadEndpoint {
                link: id.clone(),
                message: format!("{attr} {target} is not a port"),
            })
        };
        let (a, b) = (end("source")?, end("target")?);
        let (src, dst) = match (&a.dir, &b.dir) {
            (Dir::Out, Dir::In) => (a, b),
            (Dir::In, Dir::Out) => (b, a),
            _ => {
                return Err(XmlError::BadEndpoint {
                    link: id,
                    message: "must join an output port to an input port".into(),
                })
            }
        };
        let ep = |p: &PortCell| Endpoint::new(p.block.clone(), p.ordering.unwrap_or(0));
        d.insert_link(Link {
            id: id.clone(),
            src: ep(src),
            dst: ep(dst),
        })
        .map_err(|e| match e {
            DiagramError::BadEndpoint(message) => XmlError::BadEndpoint { link: id, message },
            other => other.into(),
        })?;
    }
    Ok(d)
}

fn read_block(el: &Element, ports: Option<&(usize, usize)>) -> Result<Block, XmlError> {
    let id = el.attr("id").unwrap_or_default();
    let kind = BlockKind::from_name(el.attr("interfaceFunctionName").unwrap_or_default());

    let mut exprs: Vec<(usize, usize, usize, &str)> = Vec::new();
    if let Some(s) = el.child_as("ScilabString", "exprs") {
        for (i, data) in s.children.iter().filter(|c| c.name == "data").enumerate() {
            let line = data.attr("line").and_then(|v| v.parse().ok()).unwrap_or(i);
            let col = data
                .attr("column")
                .and_then(|v| v.parse().ok())
                .unwrap_or(0);
            exprs.push((line, col, i, data.attr("value").unwrap_or_default()));
        }
    }
    exprs.sort();
    let names: Vec<&str> = kind
        .info()
        .map(|i| i.params.iter().map(|p| p.name).collect())
        .unwrap_or_default();
    let params: Vec<(String, String)> = exprs
        .iter()
        .enumerate()
        .map(|(i, &(_, _, _, value))| {
            let name = names
                .get(i)
                .map(|n| n.to_string())
                .unwrap_or_else(|| format!("expr{i}"));
            (name, value.to_string())
        })
        .collect();

    let mut block = Block::new(id, kind, params);
    if !block.kind.is_known() {
        let (i, o) = ports.copied().unwrap_or_default();
        block.n_in = i;
        block.n_out = o;
    }
    if let Some(g) = el.child_as("mxGeometry", "geometry") {
        block.position = (
            num_attr(g, "x")?.unwrap_or(0.0),
            num_attr(g, "y")?.unwrap_or(0.0),
        );
        block.size = (
            num_attr(g, "width")?.unwrap_or(DEFAULT_BLOCK_SIZE.0),
            num_attr(g, "height")?.unwrap_or(DEFAULT_BLOCK_SIZE.1),
        );
    }
    for (k, v) in &el.attrs {
        if !BLOCK_STRUCTURAL_ATTRS.contains(&k.as_str()) {
            block.attrs.insert(k.clone(), v.clone());
        }
    }
    Ok(block)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

fn write_attrs<'a>(out: &mut String, attrs: impl IntoIterator<Item = (&'a str, &'a str)>) {
    for (k, v) in attrs {
        let _ = write!(out, " {k}=\"{}\"", escape(v));
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Parameter order for persistence: palette parameters first, then the rest
/// (`exprN` by index, others by name).
fn ordered_params(block: &Block) -> Vec<&str> {
    let mut names: Vec<&str> = block
        .kind
        .info()
        .map(|i| i.params.iter().map(|p| p.name).collect())
        .unwrap_or_default();
    let mut rest: Vec<&str> = block
        .params
        .keys()
        .map(String::as_str)
        .filter(|k| !names.contains(k))
        .collect();
    let index = |k: &str| k.strip_prefix("expr").and_then(|n| n.parse::<usize>().ok());
    rest.sort_by(|a, b| match (index(a), index(b)) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(b),
    });
    names.extend(rest);
    names
}

/// Writes `d` as an Xcos XML document (UTF-8, two-space indentation).
pub fn serialize_xcos_xml(d: &Diagram) -> Vec<u8> {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<XcosDiagram");
    let s = &d.settings;
    let background = d.background.to_string();
    let fixed = [
        ("background", background),
        ("title", d.title.clone()),
        (T0_ATTR, num(s.t0)),
        (TF_ATTR, num(s.tf)),
        (SOLVER_ATTR, s.solver.as_str().to_string()),
        (DT_ATTR, num(s.dt)),
        (RTOL_ATTR, num(s.rtol)),
        (ATOL_ATTR, num(s.atol)),
        (MAX_STEP_ATTR, num(s.max_step.unwrap_or(0.0))),
    ];
    write_attrs(&mut out, fixed.iter().map(|(k, v)| (*k, v.as_str())));
    write_attrs(
        &mut out,
        d.attrs
            .iter()
            .filter(|(k, _)| !DIAGRAM_STRUCTURAL_ATTRS.contains(&k.as_str()))
            .map(|(k, v)| (k.as_str(), v.as_str())),
    );
    out.push_str(">\n  <mxGraphModel as=\"model\">\n    <root>\n");
    out.push_str("      <mxCell id=\"0\"/>\n      <mxCell id=\"1\" parent=\"0\"/>\n");

    let mut taken: BTreeSet<String> = d
        .blocks()
        .iter()
        .map(|b| b.id.clone())
        .chain(d.links().iter().map(|l| l.id.clone()))
        .collect();
    let mut port_ids: BTreeMap<(String, bool, usize), String> = BTreeMap::new();
    let mut port_id = |block: &str, input: bool, k: usize| -> String {
        port_ids
            .entry((block.to_string(), input, k))
            .or_insert_with(|| {
                let mut id = format!("{block}#{}{k}", if input { "in" } else { "out" });
                while taken.contains(&id) {
                    id.push('#');
                }
                taken.insert(id.clone());
                id
            })
            .clone()
    };

    for b in d.blocks() {
        out.push_str("      <BasicBlock");
        write_attrs(
            &mut out,
            [
                ("id", b.id.as_str()),
                ("parent", "1"),
                ("interfaceFunctionName", b.kind.name()),
            ],
        );
        write_attrs(
            &mut out,
            b.attrs
                .iter()
                .filter(|(k, _)| !BLOCK_STRUCTURAL_ATTRS.contains(&k.as_str()))
                .map(|(k, v)| (k.as_str(), v.as_str())),
        );
        out.push_str(">\n");
        let names = ordered_params(b);
        if !names.is_empty() {
            let _ = writeln!(
                out,
                "        <ScilabString as=\"exprs\" height=\"{}\" width=\"1\">",
                names.len()
            );
            for (i, name) in names.iter().enumerate() {
                let value = b.param_raw(name).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "          <data column=\"0\" line=\"{i}\" value=\"{}\"/>",
                    escape(value)
                );
            }
            out.push_str("        </ScilabString>\n");
        }
        let _ = writeln!(
            out,
            "        <mxGeometry as=\"geometry\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/>",
            num(b.position.0),
            num(b.position.1),
            num(b.size.0),
            num(b.size.1)
        );
        out.push_str("      </BasicBlock>\n");
        for (input, count) in [(true, b.n_in), (false, b.n_out)] {
            let tag = if input {
                "ExplicitInputPort"
            } else {
                "ExplicitOutputPort"
            };
            for k in 0..count {
                let _ = writeln!(
                    out,
                    "      <{tag} id=\"{}\" parent=\"{}\" ordering=\"{}\"/>",
                    escape(&port_id(&b.id, input, k)),
                    escape(&b.id),
                    k + 1
                );
            }
        }
    }
    for l in d.links() {
        let _ = writeln!(
            out,
            "      <ExplicitLink id=\"{}\" parent=\"1\" source=\"{}\" target=\"{}\"/>",
            escape(&l.id),
            escape(&port_id(&l.src.block, false, l.src.port)),
            escape(&port_id(&l.dst.block, true, l.dst.port))
        );
    }
    out.push_str("    </root>\n  </mxGraphModel>\n");
    out.push_str("  <mxCell id=\"1\" parent=\"0\" as=\"defaultParent\"/>\n</XcosDiagram>\n");
    out.into_bytes()
}
