//! Block-diagram model, compiler and solvers for Xcos-style diagrams.
//!
//! A [`Diagram`] is edited in memory, read from or written to `.xcos` XML
//! ([`parse_xcos_xml`], [`serialize_xcos_xml`]) or the JSON interchange
//! form, checked with [`validate`], flattened with [`compile`] and run with
//! [`simulate`].

pub mod blocks;
pub mod compiler;
pub mod diagram;
pub mod export;
pub mod interchange;
pub mod solver;
pub mod xml;

pub use blocks::{
    palette, parse_param_expr, tf_to_state_space, BlockKind, BlockSpec, ParamShape, Parsed,
    StateSpace, TransferFunction,
};
pub use compiler::{
    compile, feedthrough_graph, schedule, validate, CompileError, CompiledSystem, DiagCode,
    Diagnostic, FeedthroughGraph, Severity,
};
pub use diagram::{canonicalize, Block, Diagram, DiagramError, Endpoint, Link};
pub use export::{export_csv, export_json};
pub use interchange::{from_interchange_json, to_interchange_json, SchemaViolation};
pub use solver::{
    rk4_step, sample_schedule, simulate, simulate_adaptive, simulate_fixed, simulate_until,
    SimError, SimOptions, SimulationResult, SolverKind,
};
pub use xml::{parse_xcos_xml, serialize_xcos_xml, XmlError};

#[cfg(feature = "testing")]
pub mod testing;
