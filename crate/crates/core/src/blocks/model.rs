use std::collections::BTreeMap;

use thiserror::Error;

use super::expr::{parse_param_expr, ExprError, Parsed};
use super::lti::{tf_to_state_space, StateSpace, TransferFunction};
use super::BlockKind;
use crate::diagram::{Block, ParamParse, ParamValue};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlockError {
    #[error("block {block}: unknown kind {kind}")]
    UnknownKind { block: String, kind: String },
    #[error("block {block}: parameter '{param}' is unset")]
    UnsetParam { block: String, param: String },
    #[error("block {block}: parameter '{param}': {message}")]
    BadParam {
        block: String,
        param: String,
        message: String,
    },
    #[error("block {block}: expected {expected} inputs, got {found}")]
    InputCount {
        block: String,
        expected: usize,
        found: usize,
    },
    #[error("block {block}: expected {expected} state entries, got {found}")]
    StateCount {
        block: String,
        expected: usize,
        found: usize,
    },
    #[error("block {block}: t={t} is not a sample hit")]
    NotSampled { block: String, t: f64 },
}

/// A block with every parameter parsed into the numbers the simulator needs.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockModel {
    Step {
        step_time: f64,
        initial: f64,
        final_value: f64,
    },
    Const {
        value: f64,
    },
    Gain {
        gain: f64,
    },
    Sum {
        signs: Vec<f64>,
    },
    Lti {
        tf: TransferFunction,
        ss: StateSpace,
    },
    Integrator {
        x0: f64,
    },
    Scope,
    /// Discrete state is `[next, held]`.
    UnitDelay {
        period: f64,
        x0: f64,
    },
    /// Discrete state is `[held]`.
    SampleHold {
        period: f64,
    },
}

type Lookup<'a> = Box<dyn Fn(&str) -> Option<Result<Parsed, ExprError>> + 'a>;

struct Params<'a> {
    block: &'a str,
    lookup: Lookup<'a>,
}

impl Params<'_> {
    fn get(&self, name: &str) -> Result<Parsed, BlockError> {
        match (self.lookup)(name) {
            None | Some(Ok(Parsed::Unset)) => Err(BlockError::UnsetParam {
                block: self.block.to_string(),
                param: name.to_string(),
            }),
            Some(Ok(v)) => Ok(v),
            Some(Err(e)) => Err(self.bad(name, e.to_string())),
        }
    }

    fn bad(&self, name: &str, message: String) -> BlockError {
        BlockError::BadParam {
            block: self.block.to_string(),
            param: name.to_string(),
            message,
        }
    }

    fn scalar(&self, name: &str) -> Result<f64, BlockError> {
        match self.get(name)? {
            Parsed::Scalar(v) => Ok(v),
            other => Err(self.bad(name, format!("expected a scalar, got {other:?}"))),
        }
    }

    fn period(&self, name: &str) -> Result<f64, BlockError> {
        let ts = self.scalar(name)?;
        if ts > 0.0 {
            Ok(ts)
        } else {
            Err(self.bad(name, format!("sample period must be positive, got {ts}")))
        }
    }

    fn rational(&self, name: &str) -> Result<(Vec<f64>, Vec<f64>), BlockError> {
        match self.get(name)? {
            Parsed::Rational(r) => Ok((r.num, r.den)),
            Parsed::Scalar(v) => Ok((vec![v], vec![1.0])),
            other => Err(self.bad(name, format!("expected a rational in s, got {other:?}"))),
        }
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

impl BlockModel {
    fn build(kind: &BlockKind, p: &Params<'_>) -> Result<BlockModel, BlockError> {
        Ok(match kind {
            BlockKind::StepFunction => BlockModel::Step {
                step_time: p.scalar("step_time")?,
                initial: p.scalar("initial")?,
                final_value: p.scalar("final")?,
            },
            BlockKind::ConstM => BlockModel::Const {
                value: p.scalar("value")?,
            },
            BlockKind::GainBlk => BlockModel::Gain {
                gain: p.scalar("gain")?,
            },
            BlockKind::Summation => match p.get("signs")? {
                Parsed::Signs(s) => BlockModel::Sum {
                    signs: s.into_iter().map(f64::from).collect(),
                },
                other => return Err(p.bad("signs", format!("expected signs, got {other:?}"))),
            },
            BlockKind::Clr => {
                let (nn, nd) = p.rational("num")?;
                let (dn, dd) = p.rational("den")?;
                let tf = TransferFunction::new(poly_mul(&nn, &dd), poly_mul(&nd, &dn))
                    .map_err(|e| p.bad("den", e.to_string()))?;
                let ss = tf_to_state_space(&tf);
                BlockModel::Lti { tf, ss }
            }
            BlockKind::IntegralF => BlockModel::Integrator {
                x0: p.scalar("x0")?,
            },
            BlockKind::Cscope => BlockModel::Scope,
            BlockKind::Dollar => BlockModel::UnitDelay {
                period: p.period("Ts")?,
                x0: p.scalar("x0")?,
            },
            BlockKind::SampHold => BlockModel::SampleHold {
                period: p.period("Ts")?,
            },
            BlockKind::Opaque(name) => {
                return Err(BlockError::UnknownKind {
                    block: p.block.to_string(),
                    kind: name.clone(),
                })
            }
        })
    }

    pub fn from_params(
        kind: &BlockKind,
        block_id: &str,
        params: &BTreeMap<String, ParamValue>,
    ) -> Result<BlockModel, BlockError> {
        let lookup = move |name: &str| {
            params.get(name).and_then(|v| match v.parsed() {
                ParamParse::Value(p) => Some(Ok(p.clone())),
                ParamParse::Invalid(e) => Some(Err(e.clone())),
                ParamParse::Uninterpreted => None,
            })
        };
        Self::build(
            kind,
            &Params {
                block: block_id,
                lookup: Box::new(lookup),
            },
        )
    }

    pub fn from_raw_params<'a>(
        kind: &BlockKind,
        params: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<BlockModel, BlockError> {
        let raw: BTreeMap<&str, &str> = params.into_iter().collect();
        let info = kind.info();
        let lookup = move |name: &str| {
            let shape = info?.param(name)?.shape;
            raw.get(name).map(|r| parse_param_expr(r, shape))
        };
        Self::build(
            kind,
            &Params {
                block: "",
                lookup: Box::new(lookup),
            },
        )
    }

    pub fn n_in(&self) -> usize {
        match self {
            BlockModel::Step { .. } | BlockModel::Const { .. } => 0,
            BlockModel::Sum { signs } => signs.len(),
            _ => 1,
        }
    }

    pub fn n_out(&self) -> usize {
        match self {
            BlockModel::Scope => 0,
            _ => 1,
        }
    }

    pub fn continuous_states(&self) -> usize {
        match self {
            BlockModel::Lti { ss, .. } => ss.order(),
            BlockModel::Integrator { .. } => 1,
            _ => 0,
        }
    }

    pub fn discrete_states(&self) -> usize {
        match self {
            BlockModel::UnitDelay { .. } => 2,
            BlockModel::SampleHold { .. } => 1,
            _ => 0,
        }
    }

    pub fn sample_time(&self) -> Option<f64> {
        match self {
            BlockModel::UnitDelay { period, .. } | BlockModel::SampleHold { period } => {
                Some(*period)
            }
            _ => None,
        }
    }

    /// Whether each input reaches the output algebraically at the same instant.
    pub fn feedthrough(&self) -> Vec<bool> {
        match self {
            BlockModel::Lti { tf, .. } => vec![tf.is_biproper()],
            BlockModel::Integrator { .. } | BlockModel::UnitDelay { .. } => vec![false],
            _ => vec![true; self.n_in()],
        }
    }

    /// Time instants where a source changes value discontinuously.
    pub fn breakpoints(&self) -> Option<f64> {
        match self {
            BlockModel::Step { step_time, .. } => Some(*step_time),
            _ => None,
        }
    }

    pub fn initial_continuous(&self, x: &mut [f64]) {
        match self {
            BlockModel::Integrator { x0 } => x[0] = *x0,
            _ => x.fill(0.0),
        }
    }

    pub fn initial_discrete(&self, d: &mut [f64]) {
        match self {
            BlockModel::UnitDelay { x0, .. } => d.fill(*x0),
            _ => d.fill(0.0),
        }
    }

    /// Outputs for a segment starting at `epoch`. Step sources switch on the
    /// segment start, so a step taken up to a switching instant sees the
    /// value in force before it.
    pub fn output(&self, epoch: f64, xc: &[f64], xd: &[f64], u: &[f64], y: &mut [f64]) {
        match self {
            BlockModel::Step {
                step_time,
                initial,
                final_value,
            } => {
                y[0] = if epoch >= *step_time {
                    *final_value
                } else {
                    *initial
                }
            }
            BlockModel::Const { value } => y[0] = *value,
            BlockModel::Gain { gain } => y[0] = gain * u[0],
            BlockModel::Sum { signs } => y[0] = signs.iter().zip(u).map(|(s, u)| s * u).sum(),
            BlockModel::Lti { ss, .. } => y[0] = ss.output(xc, u[0]),
            BlockModel::Integrator { .. } => y[0] = xc[0],
            BlockModel::Scope => {}
            BlockModel::UnitDelay { .. } => y[0] = xd[1],
            BlockModel::SampleHold { .. } => y[0] = xd[0],
        }
    }

    pub fn derivative(&self, xc: &[f64], u: &[f64], dx: &mut [f64]) {
        match self {
            BlockModel::Lti { ss, .. } => ss.derivative(xc, u[0], dx),
            BlockModel::Integrator { .. } => dx[0] = u[0],
            _ => {}
        }
    }

    /// At a sample hit: update what the block outputs from this instant on.
    pub fn latch(&self, xd: &mut [f64], u: &[f64]) {
        match self {
            BlockModel::UnitDelay { .. } => xd[1] = xd[0],
            BlockModel::SampleHold { .. } => xd[0] = u[0],
            _ => {}
        }
    }

    /// At a sample hit, after outputs are recorded: advance internal state.
    pub fn commit(&self, xd: &mut [f64], u: &[f64]) {
        if let BlockModel::UnitDelay { .. } = self {
            xd[0] = u[0];
        }
    }

    pub fn is_sample_hit(&self, t: f64) -> bool {
        self.sample_time().is_some_and(|ts| {
            let k = (t / ts).round();
            (t - k * ts).abs() <= 1e-9 * ts.max(t.abs())
        })
    }
}

/// Parses the block's parameters into its simulation model.
pub fn resolve(block: &Block) -> Result<BlockModel, BlockError> {
    BlockModel::from_params(&block.kind, &block.id, &block.params)
}

fn check_io(
    block: &Block,
    model: &BlockModel,
    state: &[f64],
    n_state: usize,
    inputs: &[f64],
) -> Result<(), BlockError> {
    if inputs.len() != model.n_in() {
        return Err(BlockError::InputCount {
            block: block.id.clone(),
            expected: model.n_in(),
            found: inputs.len(),
        });
    }
    if state.len() != n_state {
        return Err(BlockError::StateCount {
            block: block.id.clone(),
            expected: n_state,
            found: state.len(),
        });
    }
    Ok(())
}

fn state_len(model: &BlockModel) -> usize {
    if model.discrete_states() > 0 {
        model.discrete_states()
    } else {
        model.continuous_states()
    }
}

/// Output values of `block` at time `t`. `state` is the continuous state for
/// dynamic kinds and the discrete state for sampled kinds.
pub fn block_output(
    block: &Block,
    state: &[f64],
    inputs: &[f64],
    t: f64,
) -> Result<Vec<f64>, BlockError> {
    let model = resolve(block)?;
    check_io(block, &model, state, state_len(&model), inputs)?;
    let mut y = vec![0.0; model.n_out()];
    let (xc, xd) = if model.discrete_states() > 0 {
        (&[][..], state)
    } else {
        (state, &[][..])
    };
    model.output(t, xc, xd, inputs, &mut y);
    Ok(y)
}

pub fn block_derivative(
    block: &Block,
    state: &[f64],
    inputs: &[f64],
    _t: f64,
) -> Result<Vec<f64>, BlockError> {
    let model = resolve(block)?;
    check_io(block, &model, state, model.continuous_states(), inputs)?;
    let mut dx = vec![0.0; state.len()];
    model.derivative(state, inputs, &mut dx);
    Ok(dx)
}

/// Discrete state after the sample hit at `t`.
pub fn block_discrete_update(
    block: &Block,
    state: &[f64],
    inputs: &[f64],
    t: f64,
) -> Result<Vec<f64>, BlockError> {
    let model = resolve(block)?;
    check_io(block, &model, state, model.discrete_states(), inputs)?;
    if !model.is_sample_hit(t) {
        return Err(BlockError::NotSampled {
            block: block.id.clone(),
            t,
        });
    }
    let mut next = state.to_vec();
    model.latch(&mut next, inputs);
    model.commit(&mut next, inputs);
    Ok(next)
}
