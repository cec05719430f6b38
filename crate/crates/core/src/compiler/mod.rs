//! Validation and flattening of a [`Diagram`] into a [`CompiledSystem`].

mod graph;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::{feedthrough_graph, schedule, FeedthroughGraph};

use crate::blocks::{resolve, BlockError, BlockModel};
use crate::diagram::{cmp_ids, Diagram, Endpoint, ParamParse};
use crate::solver::SimError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("block {block} has unknown kind {kind}")]
    UnknownKind { block: String, kind: String },
    #[error("algebraic loop through blocks {}", fmt_cycles(.cycles))]
    AlgebraicLoop { cycles: Vec<Vec<String>> },
    #[error("diagram has {} error diagnostic(s)", .0.iter().filter(|d| d.is_error()).count())]
    NotValidated(Vec<Diagnostic>),
}

fn fmt_cycles(cycles: &[Vec<String>]) -> String {
    cycles
        .iter()
        .map(|c| format!("{{{}}}", c.join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagCode {
    UnsetParam,
    BadParam,
    DanglingInput,
    UnknownKind,
    AlgebraicLoop,
    UnusedOutput,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::UnsetParam => "UNSET_PARAM",
            DiagCode::BadParam => "BAD_PARAM",
            DiagCode::DanglingInput => "DANGLING_INPUT",
            DiagCode::UnknownKind => "UNKNOWN_KIND",
            DiagCode::AlgebraicLoop => "ALGEBRAIC_LOOP",
            DiagCode::UnusedOutput => "UNUSED_OUTPUT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagCode,
    pub blocks: Vec<String>,
    pub message: String,
}

impl Diagnostic {
    fn error(code: DiagCode, blocks: Vec<String>, message: String) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code,
            blocks,
            message,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

/// `severity code blocks: message`
impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let severity = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{severity} {} {}: {}",
            self.code.as_str(),
            self.blocks.join(","),
            self.message
        )
    }
}

/// Everything that would stop `d` from compiling, plus warnings. An empty
/// result means the diagram compiles cleanly.
pub fn validate(d: &Diagram) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut blocks: Vec<_> = d.blocks().iter().collect();
    blocks.sort_by(|a, b| cmp_ids(&a.id, &b.id));

    for b in &blocks {
        let Some(info) = b.kind.info() else {
            out.push(Diagnostic::error(
                DiagCode::UnknownKind,
                vec![b.id.clone()],
                format!("block kind {} is not in the palette", b.kind),
            ));
            continue;
        };
        let mut unset = Vec::new();
        let mut malformed = false;
        for p in info.params {
            match b.params.get(p.name).map(|v| v.parsed()) {
                None => unset.push(p.name),
                Some(ParamParse::Value(crate::blocks::Parsed::Unset)) => unset.push(p.name),
                Some(ParamParse::Invalid(e)) => {
                    malformed = true;
                    out.push(Diagnostic::error(
                        DiagCode::BadParam,
                        vec![b.id.clone()],
                        format!(
                            "parameter '{}' = \"{}\": {e}",
                            p.name,
                            b.params[p.name].raw()
                        ),
                    ));
                }
                Some(_) => {}
            }
        }
        if !unset.is_empty() {
            let names: Vec<String> = unset.iter().map(|n| format!("'{n}'")).collect();
            out.push(Diagnostic::error(
                DiagCode::UnsetParam,
                vec![b.id.clone()],
                format!(
                    "{} {} unset ({})",
                    names.join(", "),
                    if names.len() == 1 { "is" } else { "are" },
                    crate::blocks::expr::UNSET_PLACEHOLDER
                ),
            ));
        } else if !malformed {
            if let Err(BlockError::BadParam { param, message, .. }) = resolve(b) {
                out.push(Diagnostic::error(
                    DiagCode::BadParam,
                    vec![b.id.clone()],
                    format!("parameter '{param}': {message}"),
                ));
            }
        }
    }

    for b in &blocks {
        for port in 0..b.n_in {
            if d.driver(&b.id, port).is_none() {
                out.push(Diagnostic::error(
                    DiagCode::DanglingInput,
                    vec![b.id.clone()],
                    format!("input {port} is not connected"),
                ));
            }
        }
    }

    if let Ok(g) = feedthrough_graph(d) {
        for cycle in g.cycles() {
            out.push(Diagnostic::error(
                DiagCode::AlgebraicLoop,
                cycle.clone(),
                format!(
                    "algebraic loop through {}; break it with a block that has state",
                    cycle.join(" -> ")
                ),
            ));
        }
    }

    for b in &blocks {
        for port in 0..b.n_out {
            if !d
                .links()
                .iter()
                .any(|l| l.src.block == b.id && l.src.port == port)
            {
                out.push(Diagnostic {
                    severity: Severity::Warning,
                    code: DiagCode::UnusedOutput,
                    blocks: vec![b.id.clone()],
                    message: format!("output {port} is not connected"),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledBlock {
    pub id: String,
    pub model: BlockModel,
    /// Signal index feeding each input.
    pub inputs: Vec<usize>,
    pub outputs: Range<usize>,
    pub cstate: Range<usize>,
    pub dstate: Range<usize>,
}

/// Recorded signal: a scope block and the output port feeding it.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub id: String,
    pub source: Endpoint,
    pub signal: usize,
}

/// Flattened, executable form of a diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledSystem {
    blocks: Vec<CompiledBlock>,
    state_dim: usize,
    discrete_dim: usize,
    signal_count: usize,
    layout: BTreeMap<String, Range<usize>>,
    sample_grids: Vec<(String, f64)>,
    probes: Vec<Probe>,
}

pub fn compile(d: &Diagram) -> Result<CompiledSystem, CompileError> {
    let diags = validate(d);
    if diags.iter().any(Diagnostic::is_error) {
        return Err(CompileError::NotValidated(diags));
    }
    let order = schedule(&feedthrough_graph(d)?)?;

    let models: BTreeMap<&str, BlockModel> = d
        .blocks()
        .iter()
        .map(|b| {
            let m = resolve(b).expect("validated blocks resolve");
            (b.id.as_str(), m)
        })
        .collect();

    // signal slots in evaluation order
    let mut out_offset = BTreeMap::new();
    let mut signal_count = 0;
    for id in &order {
        out_offset.insert(id.as_str(), signal_count);
        signal_count += models[id.as_str()].n_out();
    }

    let mut blocks = Vec::with_capacity(order.len());
    let mut layout = BTreeMap::new();
    let (mut xc, mut xd) = (0, 0);
    let mut sample_grids = Vec::new();
    for id in &order {
        let model = models[id.as_str()].clone();
        let inputs = (0..model.n_in())
            .map(|port| {
                let l = d.driver(id, port).expect("validated inputs are driven");
                out_offset[l.src.block.as_str()] + l.src.port
            })
            .collect();
        let cstate = xc..xc + model.continuous_states();
        let dstate = xd..xd + model.discrete_states();
        xc = cstate.end;
        xd = dstate.end;
        if !cstate.is_empty() {
            layout.insert(id.clone(), cstate.clone());
        }
        if let Some(ts) = model.sample_time() {
            sample_grids.push((id.clone(), ts));
        }
        let start = out_offset[id.as_str()];
        blocks.push(CompiledBlock {
            id: id.clone(),
            outputs: start..start + model.n_out(),
            model,
            inputs,
            cstate,
            dstate,
        });
    }

    let mut probes: Vec<Probe> = blocks
        .iter()
        .filter(|b| matches!(b.model, BlockModel::Scope))
        .map(|b| {
            let l = d.driver(&b.id, 0).expect("validated inputs are driven");
            Probe {
                id: b.id.clone(),
                source: l.src.clone(),
                signal: b.inputs[0],
            }
        })
        .collect();
    probes.sort_by(|a, b| cmp_ids(&a.id, &b.id));

    Ok(CompiledSystem {
        blocks,
        state_dim: xc,
        discrete_dim: xd,
        signal_count,
        layout,
        sample_grids,
        probes,
    })
}

impl CompiledSystem {
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn discrete_dim(&self) -> usize {
        self.discrete_dim
    }

    pub fn signal_count(&self) -> usize {
        self.signal_count
    }

    pub fn blocks(&self) -> &[CompiledBlock] {
        &self.blocks
    }

    pub fn eval_order(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b.id.as_str()).collect()
    }

    pub fn layout(&self) -> &BTreeMap<String, Range<usize>> {
        &self.layout
    }

    pub fn sample_grids(&self) -> &[(String, f64)] {
        &self.sample_grids
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    /// Switching instants of step sources.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .filter_map(|b| b.model.breakpoints())
            .collect()
    }

    pub fn initial_state(&self) -> (Vec<f64>, Vec<f64>) {
        let mut xc = vec![0.0; self.state_dim];
        let mut xd = vec![0.0; self.discrete_dim];
        for b in &self.blocks {
            b.model.initial_continuous(&mut xc[b.cstate.clone()]);
            b.model.initial_discrete(&mut xd[b.dstate.clone()]);
        }
        (xc, xd)
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            signals: vec![0.0; self.signal_count],
            inputs: Vec::new(),
        }
    }

    fn block_outputs(
        &self,
        b: &CompiledBlock,
        t: f64,
        epoch: f64,
        xc: &[f64],
        xd: &[f64],
        ws: &mut Workspace,
    ) -> Result<(), SimError> {
        ws.inputs.clear();
        ws.inputs.extend(b.inputs.iter().map(|&i| ws.signals[i]));
        let Workspace { signals, inputs } = ws;
        let y = &mut signals[b.outputs.clone()];
        b.model.output(
            epoch,
            &xc[b.cstate.clone()],
            &xd[b.dstate.clone()],
            inputs,
            y,
        );
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite {
                t,
                block: b.id.clone(),
            });
        }
        Ok(())
    }

    /// Computes every block output into `ws.signals`.
    pub fn eval_outputs(
        &self,
        t: f64,
        epoch: f64,
        xc: &[f64],
        xd: &[f64],
        ws: &mut Workspace,
    ) -> Result<(), SimError> {
        for b in &self.blocks {
            self.block_outputs(b, t, epoch, xc, xd, ws)?;
        }
        Ok(())
    }

    /// Continuous state derivative at `t` for the segment starting at `epoch`.
    pub fn derivative(
        &self,
        t: f64,
        epoch: f64,
        xc: &[f64],
        xd: &[f64],
        ws: &mut Workspace,
        dx: &mut [f64],
    ) -> Result<(), SimError> {
        self.eval_outputs(t, epoch, xc, xd, ws)?;
        for b in &self.blocks {
            if b.cstate.is_empty() {
                continue;
            }
            ws.inputs.clear();
            ws.inputs.extend(b.inputs.iter().map(|&i| ws.signals[i]));
            let slot = &mut dx[b.cstate.clone()];
            b.model.derivative(&xc[b.cstate.clone()], &ws.inputs, slot);
            if slot.iter().any(|v| !v.is_finite()) {
                return Err(SimError::NonFinite {
                    t,
                    block: b.id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Derivative with every discrete block at its initial state.
    pub fn derivative_at(&self, t: f64, xc: &[f64]) -> Result<Vec<f64>, SimError> {
        let (_, xd) = self.initial_state();
        let mut ws = self.workspace();
        let mut dx = vec![0.0; self.state_dim];
        self.derivative(t, t, xc, &xd, &mut ws, &mut dx)?;
        Ok(dx)
    }

    /// Output pass at a sample instant: blocks in `hits` latch their new
    /// output before downstream blocks read it.
    pub fn eval_outputs_at_hit(
        &self,
        t: f64,
        xc: &[f64],
        xd: &mut [f64],
        hits: &[bool],
        ws: &mut Workspace,
    ) -> Result<(), SimError> {
        for (b, &hit) in self.blocks.iter().zip(hits) {
            if hit {
                ws.inputs.clear();
                ws.inputs.extend(b.inputs.iter().map(|&i| ws.signals[i]));
                b.model.latch(&mut xd[b.dstate.clone()], &ws.inputs);
            }
            self.block_outputs(b, t, t, xc, xd, ws)?;
        }
        Ok(())
    }

    /// State advance of the blocks in `hits`, using the inputs of the last output pass.
    pub fn commit_hits(&self, xd: &mut [f64], hits: &[bool], ws: &mut Workspace) {
        for (b, &hit) in self.blocks.iter().zip(hits) {
            if hit {
                ws.inputs.clear();
                ws.inputs.extend(b.inputs.iter().map(|&i| ws.signals[i]));
                b.model.commit(&mut xd[b.dstate.clone()], &ws.inputs);
            }
        }
    }

    pub fn probe_values<'a>(&'a self, ws: &'a Workspace) -> impl Iterator<Item = f64> + 'a {
        self.probes.iter().map(|p| ws.signals[p.signal])
    }
}

/// Scratch buffers for one simulation run.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub signals: Vec<f64>,
    inputs: Vec<f64>,
}
