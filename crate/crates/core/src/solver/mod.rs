//! Time integration of a [`CompiledSystem`].
//!
//! The run is split into segments at sample hits, step-source switching
//! instants and `tf`. Within a segment the continuous state is integrated
//! either with fixed RK4 steps or adaptively with Dormand–Prince 5(4). At a
//! sample hit the discrete blocks latch their outputs, probes are recorded,
//! and then discrete states advance.

mod rk;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use rk::rk4_step;

use crate::compiler::{CompiledSystem, Workspace};
use rk::Stepper;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("non-finite value in block {block} at t={t}")]
    NonFinite { t: f64, block: String },
    #[error("step size underflow at t={t} (h={h})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("wall-clock budget exhausted at t={t}")]
    DeadlineExceeded { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Rk4,
    Adaptive,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Rk4 => "rk4",
            SolverKind::Adaptive => "adaptive",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rk4" => Ok(SolverKind::Rk4),
            "adaptive" => Ok(SolverKind::Adaptive),
            other => Err(format!(
                "unknown solver '{other}' (expected rk4 or adaptive)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub t0: f64,
    pub tf: f64,
    pub solver: SolverKind,
    /// Fixed step for `rk4`.
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Adaptive step ceiling; `(tf - t0) / 10` when absent.
    pub max_step: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            t0: 0.0,
            tf: 10.0,
            solver: SolverKind::Rk4,
            dt: 1e-3,
            rtol: 1e-6,
            atol: 1e-9,
            max_step: None,
        }
    }
}

/// Finite and strictly positive; false for NaN.
fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

/// Fixed-step runs longer than this are refused rather than allocated.
const MAX_FIXED_STEPS: f64 = 5e7;

impl SimOptions {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidOptions(m));
        if !self.t0.is_finite() || !self.tf.is_finite() {
            return bad("t0 and tf must be finite".into());
        }
        if self.t0 >= self.tf {
            return bad(format!(
                "t0 ({}) must be less than tf ({})",
                self.t0, self.tf
            ));
        }
        if !positive(self.dt) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !positive(self.rtol) || !positive(self.atol) {
            return bad("rtol and atol must be positive".into());
        }
        if let Some(m) = self.max_step {
            if !positive(m) {
                return bad(format!("max_step must be positive, got {m}"));
            }
        }
        if self.solver == SolverKind::Rk4 && (self.tf - self.t0) / self.dt > MAX_FIXED_STEPS {
            return bad(format!(
                "{} fixed steps requested; use a larger dt or the adaptive solver",
                ((self.tf - self.t0) / self.dt).ceil()
            ));
        }
        Ok(())
    }

    pub fn max_step(&self) -> f64 {
        self.max_step.unwrap_or((self.tf - self.t0) / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub probe: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub solver: SolverKind,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

/// Time grid plus one series per probe, in probe order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    pub signals: Vec<Signal>,
    pub metadata: RunStats,
}

impl SimulationResult {
    pub fn signal(&self, probe: &str) -> Option<&[f64]> {
        self.signals
            .iter()
            .find(|s| s.probe == probe)
            .map(|s| s.values.as_slice())
    }

    /// Value of `probe` at the recorded time closest to `t`.
    pub fn value_at(&self, probe: &str, t: f64) -> Option<f64> {
        let series = self.signal(probe)?;
        let idx = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some(series[idx])
    }
}

/// Sample hits grouped by instant, with which compiled blocks fire.
fn sample_events(sys: &CompiledSystem, t0: f64, tf: f64) -> Vec<(f64, Vec<usize>)> {
    let mut raw: Vec<(f64, f64, usize)> = Vec::new();
    for (idx, b) in sys.blocks().iter().enumerate() {
        let Some(ts) = b.model.sample_time() else {
            continue;
        };
        let kmin = (t0 / ts - 1e-9).ceil() as i64;
        let kmax = (tf / ts + 1e-9).floor() as i64;
        for k in kmin..=kmax {
            let t = (k as f64 * ts).clamp(t0, tf);
            raw.push((t, ts, idx));
        }
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64, Vec<usize>)> = Vec::new();
    for (t, ts, idx) in raw {
        match out.last_mut() {
            Some((prev, prev_ts, blocks)) if (t - *prev).abs() <= 1e-12 * ts.max(*prev_ts) => {
                if !blocks.contains(&idx) {
                    blocks.push(idx);
                }
            }
            _ => out.push((t, ts, vec![idx])),
        }
    }
    out.into_iter().map(|(t, _, b)| (t, b)).collect()
}

/// Sorted, deduplicated union of every discrete block's sample grid in `[t0, tf]`.
pub fn sample_schedule(sys: &CompiledSystem, t0: f64, tf: f64) -> Vec<f64> {
    sample_events(sys, t0, tf)
        .into_iter()
        .map(|(t, _)| t)
        .collect()
}

struct Stop {
    t: f64,
    hits: Vec<bool>,
}

fn stops(sys: &CompiledSystem, t0: f64, tf: f64) -> (Vec<bool>, Vec<Stop>) {
    let n = sys.blocks().len();
    let tol = 1e-12 * (tf - t0).abs().max(tf.abs());
    let mut all: Vec<Stop> = sample_events(sys, t0, tf)
        .into_iter()
        .map(|(t, blocks)| {
            let mut hits = vec![false; n];
            for b in blocks {
                hits[b] = true;
            }
            Stop { t, hits }
        })
        .collect();
    for t in sys.breakpoints().into_iter().chain([tf]) {
        if t > t0 && t <= tf {
            all.push(Stop {
                t,
                hits: vec![false; n],
            });
        }
    }
    all.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut first = vec![false; n];
    let mut merged: Vec<Stop> = Vec::new();
    for s in all {
        if (s.t - t0).abs() <= tol {
            for (f, h) in first.iter_mut().zip(&s.hits) {
                *f |= h;
            }
            continue;
        }
        match merged.last_mut() {
            Some(prev) if (s.t - prev.t).abs() <= tol => {
                for (p, h) in prev.hits.iter_mut().zip(&s.hits) {
                    *p |= h;
                }
                // snap to tf when it is one of the merged instants
                if s.t == tf {
                    prev.t = tf;
                }
            }
            _ => merged.push(s),
        }
    }
    (first, merged)
}

struct Recorder {
    times: Vec<f64>,
    series: Vec<Vec<f64>>,
}

impl Recorder {
    fn push(&mut self, t: f64, sys: &CompiledSystem, ws: &Workspace) {
        self.times.push(t);
        for (s, v) in self.series.iter_mut().zip(sys.probe_values(ws)) {
            s.push(v);
        }
    }
}

/// Runs `sys` with the solver selected in `opts`.
pub fn simulate(sys: &CompiledSystem, opts: &SimOptions) -> Result<SimulationResult, SimError> {
    simulate_until(sys, opts, None)
}

pub fn simulate_fixed(
    sys: &CompiledSystem,
    opts: &SimOptions,
) -> Result<SimulationResult, SimError> {
    let opts = SimOptions {
        solver: SolverKind::Rk4,
        ..opts.clone()
    };
    simulate_until(sys, &opts, None)
}

pub fn simulate_adaptive(
    sys: &CompiledSystem,
    opts: &SimOptions,
) -> Result<SimulationResult, SimError> {
    let opts = SimOptions {
        solver: SolverKind::Adaptive,
        ..opts.clone()
    };
    simulate_until(sys, &opts, None)
}

/// As [`simulate`], giving up with `DeadlineExceeded` once `deadline` passes.
pub fn simulate_until(
    sys: &CompiledSystem,
    opts: &SimOptions,
    deadline: Option<Instant>,
) -> Result<SimulationResult, SimError> {
    opts.validate()?;
    let (t0, tf) = (opts.t0, opts.tf);
    let (mut x, xd) = sys.initial_state();
    let mut stepper = Stepper::new(sys, xd);
    let mut rec = Recorder {
        times: Vec::new(),
        series: vec![Vec::new(); sys.probes().len()],
    };
    let mut stats = RunStats {
        solver: opts.solver,
        steps_accepted: 0,
        steps_rejected: 0,
    };

    let (first_hits, stops) = stops(sys, t0, tf);
    instant(sys, &mut stepper, &mut rec, t0, &x, &first_hits)?;

    let span = tf - t0;
    let mut h = opts.max_step().min(1e-3 * span);
    let mut t = t0;
    for stop in &stops {
        let epoch = t;
        stepper.invalidate();
        match opts.solver {
            SolverKind::Rk4 => {
                let n = (((stop.t - t) / opts.dt) - 1e-9).ceil().max(1.0) as u64;
                for i in 1..=n {
                    let ti = if i == n {
                        stop.t
                    } else {
                        epoch + i as f64 * opts.dt
                    };
                    stepper.rk4(t, epoch, ti - t, &mut x)?;
                    t = ti;
                    stats.steps_accepted += 1;
                    if i < n {
                        sys.eval_outputs(t, epoch, &x, &stepper.xd, &mut stepper.ws)?;
                        rec.push(t, sys, &stepper.ws);
                    }
                    check_deadline(deadline, stats.steps_accepted, t)?;
                }
            }
            SolverKind::Adaptive => {
                let n = x.len();
                let (mut next, mut err) = (vec![0.0; n], vec![0.0; n]);
                while t < stop.t {
                    let mut step = h.min(opts.max_step());
                    let last = t + step * (1.0 + 1e-8) >= stop.t;
                    if last {
                        step = stop.t - t;
                    }
                    stepper.dopri(t, epoch, step, &x, &mut next, &mut err)?;
                    let norm = error_norm(&x, &next, &err, opts.rtol, opts.atol);
                    let factor = if norm == 0.0 {
                        5.0
                    } else {
                        (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    if norm <= 1.0 {
                        stepper.accept();
                        x.copy_from_slice(&next);
                        t = if last { stop.t } else { t + step };
                        stats.steps_accepted += 1;
                        if !last || step >= h {
                            h = step * factor;
                        }
                        if !last {
                            sys.eval_outputs(t, epoch, &x, &stepper.xd, &mut stepper.ws)?;
                            rec.push(t, sys, &stepper.ws);
                        }
                    } else {
                        stats.steps_rejected += 1;
                        h = step * factor.min(1.0);
                        if h < 1e-14 * span {
                            return Err(SimError::StepUnderflow { t, h });
                        }
                    }
                    check_deadline(deadline, stats.steps_accepted + stats.steps_rejected, t)?;
                }
            }
        }
        instant(sys, &mut stepper, &mut rec, stop.t, &x, &stop.hits)?;
    }

    Ok(SimulationResult {
        times: rec.times,
        signals: sys
            .probes()
            .iter()
            .zip(rec.series)
            .map(|(p, values)| Signal {
                probe: p.id.clone(),
                values,
            })
            .collect(),
        metadata: stats,
    })
}

/// Output pass and recording at a segment boundary, then discrete updates.
fn instant(
    sys: &CompiledSystem,
    stepper: &mut Stepper<'_>,
    rec: &mut Recorder,
    t: f64,
    x: &[f64],
    hits: &[bool],
) -> Result<(), SimError> {
    let Stepper { ws, xd, .. } = stepper;
    if hits.iter().any(|&h| h) {
        sys.eval_outputs_at_hit(t, x, xd, hits, ws)?;
        rec.push(t, sys, ws);
        sys.commit_hits(xd, hits, ws);
    } else {
        sys.eval_outputs(t, t, x, xd, ws)?;
        rec.push(t, sys, ws);
    }
    Ok(())
}

fn error_norm(x: &[f64], next: &[f64], err: &[f64], rtol: f64, atol: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let sum: f64 = x
        .iter()
        .zip(next)
        .zip(err)
        .map(|((a, b), e)| {
            let scale = atol + rtol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / x.len() as f64).sqrt()
}

fn check_deadline(deadline: Option<Instant>, steps: usize, t: f64) -> Result<(), SimError> {
    if steps.is_multiple_of(256) {
        if let Some(d) = deadline {
            if Instant::now() >= d {
                return Err(SimError::DeadlineExceeded { t });
            }
        }
    }
    Ok(())
}
