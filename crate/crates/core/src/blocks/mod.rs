//! The block palette: port counts, parameter schemas, feedthrough and state
//! information for every supported block kind, plus the per-kind numerics.

pub mod expr;
pub mod lti;
mod model;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use expr::{format_param, parse_param_expr, ExprError, ParamShape, Parsed, Rational};
pub use lti::{tf_to_state_space, StateSpace, TfError, TransferFunction};
pub use model::{
    block_derivative, block_discrete_update, block_output, resolve, BlockError, BlockModel,
};

/// Block kind, named by the Xcos interface function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum BlockKind {
    StepFunction,
    ConstM,
    GainBlk,
    Summation,
    Clr,
    IntegralF,
    Cscope,
    Dollar,
    SampHold,
    /// Unrecognized interface function; kept so imports survive, rejected at compile.
    Opaque(String),
}

impl BlockKind {
    pub const KNOWN: [BlockKind; 9] = [
        BlockKind::StepFunction,
        BlockKind::ConstM,
        BlockKind::GainBlk,
        BlockKind::Summation,
        BlockKind::Clr,
        BlockKind::IntegralF,
        BlockKind::Cscope,
        BlockKind::Dollar,
        BlockKind::SampHold,
    ];

    pub fn name(&self) -> &str {
        match self {
            BlockKind::StepFunction => "STEP_FUNCTION",
            BlockKind::ConstM => "CONST_m",
            BlockKind::GainBlk => "GAINBLK",
            BlockKind::Summation => "SUMMATION",
            BlockKind::Clr => "CLR",
            BlockKind::IntegralF => "INTEGRAL_f",
            BlockKind::Cscope => "CSCOPE",
            BlockKind::Dollar => "DOLLAR",
            BlockKind::SampHold => "SAMPHOLD",
            BlockKind::Opaque(name) => name,
        }
    }

    /// Maps an interface function name to a kind; unknown names become `Opaque`.
    pub fn from_name(name: &str) -> BlockKind {
        Self::KNOWN
            .iter()
            .find(|k| k.name() == name)
            .cloned()
            .unwrap_or_else(|| BlockKind::Opaque(name.to_string()))
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, BlockKind::Opaque(_))
    }

    pub fn info(&self) -> Option<&'static KindInfo> {
        KIND_TABLE.iter().find(|info| &info.kind() == self)
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<String> for BlockKind {
    fn from(s: String) -> Self {
        BlockKind::from_name(&s)
    }
}

impl From<BlockKind> for String {
    fn from(k: BlockKind) -> Self {
        k.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub shape: ParamShape,
    pub default: &'static str,
    pub unit: &'static str,
}

const fn param(
    name: &'static str,
    shape: ParamShape,
    default: &'static str,
    unit: &'static str,
) -> ParamSpec {
    ParamSpec {
        name,
        shape,
        default,
        unit,
    }
}

/// Static facts about a palette entry.
#[derive(Debug)]
pub struct KindInfo {
    name: &'static str,
    pub label: &'static str,
    pub n_in: usize,
    pub n_out: usize,
    /// Input count follows the length of the `signs` parameter.
    pub variable_inputs: bool,
    pub params: &'static [ParamSpec],
    /// Desktop attribute defaults: blockType, simulationFunctionName, simulationFunctionType.
    pub desktop: (&'static str, &'static str, &'static str),
}

impl KindInfo {
    pub fn kind(&self) -> BlockKind {
        BlockKind::from_name(self.name)
    }

    pub fn param(&self, name: &str) -> Option<&'static ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

use ParamShape::{RationalInS, Scalar, SignVector};

static KIND_TABLE: [KindInfo; 9] = [
    KindInfo {
        name: "STEP_FUNCTION",
        label: "Step",
        n_in: 0,
        n_out: 1,
        variable_inputs: false,
        params: &[
            param("step_time", Scalar, "1", "s"),
            param("initial", Scalar, "0", ""),
            param("final", Scalar, "1", ""),
        ],
        desktop: ("c", "csuper", "DEFAULT"),
    },
    KindInfo {
        name: "CONST_m",
        label: "Constant",
        n_in: 0,
        n_out: 1,
        variable_inputs: false,
        params: &[param("value", Scalar, "1", "")],
        desktop: ("d", "cstblk4_m", "C_OR_FORTRAN"),
    },
    KindInfo {
        name: "GAINBLK",
        label: "Gain",
        n_in: 1,
        n_out: 1,
        variable_inputs: false,
        params: &[param("gain", Scalar, "1", "")],
        desktop: ("c", "gainblk", "C_OR_FORTRAN"),
    },
    KindInfo {
        name: "SUMMATION",
        label: "Sum",
        n_in: 2,
        n_out: 1,
        variable_inputs: true,
        params: &[param("signs", SignVector, "[+1;-1]", "")],
        desktop: ("c", "summation", "C_OR_FORTRAN"),
    },
    KindInfo {
        name: "CLR",
        label: "Transfer function",
        n_in: 1,
        n_out: 1,
        variable_inputs: false,
        params: &[
            param("num", RationalInS, "1", ""),
            param("den", RationalInS, "1+s", ""),
        ],
        desktop: ("c", "csslti4", "C_OR_FORTRAN"),
    },
    KindInfo {
        name: "INTEGRAL_f",
        label: "Integrator",
        n_in: 1,
        n_out: 1,
        variable_inputs: false,
        params: &[param("x0", Scalar, "0", "")],
        desktop: ("c", "integr", "TYPE_0"),
    },
    KindInfo {
        name: "CSCOPE",
        label: "Scope",
        n_in: 1,
        n_out: 0,
        variable_inputs: false,
        params: &[],
        desktop: ("c", "cscope", "C_OR_FORTRAN"),
    },
    KindInfo {
        name: "DOLLAR",
        label: "Unit delay",
        n_in: 1,
        n_out: 1,
        variable_inputs: false,
        params: &[
            param("Ts", Scalar, "0.1", "s"),
            param("x0", Scalar, "0", ""),
        ],
        desktop: ("d", "dollar4", "C_OR_FORTRAN"),
    },
    KindInfo {
        name: "SAMPHOLD",
        label: "Sample and hold",
        n_in: 1,
        n_out: 1,
        variable_inputs: false,
        params: &[param("Ts", Scalar, "0.1", "s")],
        desktop: ("d", "samphold4", "C_OR_FORTRAN"),
    },
];

/// Palette entry as exported to clients; values are those of the default parameters.
#[derive(Debug, Clone, Serialize)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub label: &'static str,
    pub n_in: usize,
    pub n_out: usize,
    pub variable_inputs: bool,
    pub params: Vec<ParamSpec>,
    pub feedthrough: Vec<bool>,
    pub n_states: usize,
    pub sample_time: Option<f64>,
}

pub fn palette() -> Vec<BlockSpec> {
    KIND_TABLE
        .iter()
        .map(|info| {
            let model = BlockModel::from_raw_params(
                &info.kind(),
                info.params.iter().map(|p| (p.name, p.default)),
            )
            .expect("palette defaults resolve");
            BlockSpec {
                kind: info.kind(),
                label: info.label,
                n_in: model.n_in(),
                n_out: model.n_out(),
                variable_inputs: info.variable_inputs,
                params: info.params.to_vec(),
                feedthrough: model.feedthrough(),
                n_states: model.continuous_states(),
                sample_time: model.sample_time(),
            }
        })
        .collect()
}

/// Port counts for a known kind given its raw `signs` parameter (SUMMATION only).
pub fn arity(kind: &BlockKind, signs_raw: Option<&str>) -> Option<(usize, usize)> {
    let info = kind.info()?;
    if info.variable_inputs {
        if let Some(Ok(Parsed::Signs(s))) =
            signs_raw.map(|raw| parse_param_expr(raw, ParamShape::SignVector))
        {
            return Some((s.len(), info.n_out));
        }
    }
    Some((info.n_in, info.n_out))
}
