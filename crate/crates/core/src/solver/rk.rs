//! Runge–Kutta steppers over a compiled system's derivative.

use crate::compiler::{CompiledSystem, Workspace};

use super::SimError;

/// State and scratch needed to take steps on one system.
pub(crate) struct Stepper<'a> {
    pub sys: &'a CompiledSystem,
    pub ws: Workspace,
    pub xd: Vec<f64>,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    /// `k[0]` holds the derivative at the current point.
    have_k0: bool,
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
    ],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus the embedded fourth-order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a CompiledSystem, xd: Vec<f64>) -> Self {
        let n = sys.state_dim();
        Stepper {
            sys,
            ws: sys.workspace(),
            xd,
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            have_k0: false,
        }
    }

    fn f(&mut self, slot: usize, t: f64, epoch: f64, x: &[f64]) -> Result<(), SimError> {
        let mut k = std::mem::take(&mut self.k[slot]);
        let r = self
            .sys
            .derivative(t, epoch, x, &self.xd, &mut self.ws, &mut k);
        self.k[slot] = k;
        r
    }

    fn stage_point(&mut self, x: &[f64], h: f64, weights: &[f64]) {
        for (i, (out, xi)) in self.tmp.iter_mut().zip(x).enumerate() {
            let acc: f64 = weights.iter().zip(&self.k).map(|(w, k)| w * k[i]).sum();
            *out = xi + h * acc;
        }
    }

    /// Forgets the cached derivative; needed whenever inputs may have jumped.
    pub fn invalidate(&mut self) {
        self.have_k0 = false;
    }

    /// Classical RK4 step, in place.
    pub fn rk4(&mut self, t: f64, epoch: f64, h: f64, x: &mut [f64]) -> Result<(), SimError> {
        self.have_k0 = false;
        self.f(0, t, epoch, x)?;
        self.stage_point(x, h, &[0.5]);
        let p = std::mem::take(&mut self.tmp);
        self.f(1, t + 0.5 * h, epoch, &p)?;
        self.tmp = p;
        self.stage_point(x, h, &[0.0, 0.5]);
        let p = std::mem::take(&mut self.tmp);
        self.f(2, t + 0.5 * h, epoch, &p)?;
        self.tmp = p;
        self.stage_point(x, h, &[0.0, 0.0, 1.0]);
        let p = std::mem::take(&mut self.tmp);
        self.f(3, t + h, epoch, &p)?;
        self.tmp = p;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi +=
                h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        Ok(())
    }

    /// One Dormand–Prince attempt from `x`; writes the fifth-order solution to
    /// `next` and the error estimate to `err`.
    pub fn dopri(
        &mut self,
        t: f64,
        epoch: f64,
        h: f64,
        x: &[f64],
        next: &mut [f64],
        err: &mut [f64],
    ) -> Result<(), SimError> {
        if !self.have_k0 {
            self.f(0, t, epoch, x)?;
            self.have_k0 = true;
        }
        for s in 1..7 {
            self.stage_point(x, h, A[s]);
            let p = std::mem::take(&mut self.tmp);
            let r = self.f(s, t + C[s] * h, epoch, &p);
            self.tmp = p;
            r?;
        }
        // stage 7 was evaluated at the fifth-order solution
        self.stage_point(x, h, A[6]);
        next.copy_from_slice(&self.tmp);
        for (i, e) in err.iter_mut().enumerate() {
            *e = h * (0..7).map(|j| E[j] * self.k[j][i]).sum::<f64>();
        }
        Ok(())
    }

    /// Marks the last attempt as accepted; its final stage (first-same-as-last)
    /// is the derivative at the new point.
    pub fn accept(&mut self) {
        self.k.swap(0, 6);
        self.have_k0 = true;
    }
}

/// One classical RK4 step of `sys` from state `x` at `t`, discrete blocks at
/// their initial state.
pub fn rk4_step(sys: &CompiledSystem, t: f64, h: f64, x: &[f64]) -> Result<Vec<f64>, SimError> {
    if h.is_nan() || h <= 0.0 {
        return Err(SimError::InvalidOptions(format!(
            "step must be positive, got {h}"
        )));
    }
    if x.len() != sys.state_dim() {
        return Err(SimError::InvalidOptions(format!(
            "state has {} entries, system has {}",
            x.len(),
            sys.state_dim()
        )));
    }
    let (_, xd) = sys.initial_state();
    let mut stepper = Stepper::new(sys, xd);
    let mut out = x.to_vec();
    stepper.rk4(t, t, h, &mut out)?;
    Ok(out)
}
