//! Backward integration of `w'(z) = (2/σ²)(γ + h(z) − π(w(z)))` from the
//! right truncation level with an embedded Dormand–Prince 5(4) pair.
//!
//! Perturbations of `w` decay when integrating towards smaller `z`
//! (`∂w'/∂w = (2/σ²)·μ(p_π(w)) > 0`), so the asymptotic start value only
//! has to be right to leading order.

use super::{ModelParams, SolverError, SolverOptions};
use crate::numeric::{brent, HermiteCell};

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Width of a relaxation layer, in units of `1/rate`.
const LAYER_WIDTH: f64 = 20.0;
/// Step cap inside the layer, in units of `1/rate`.
const LAYER_RESOLUTION: f64 = 0.008;

/// Step cap everywhere, in units of `1/rate`; beyond it the error in the
/// stiff mode shows up as an ODE residual near 1e-8.
const STIFF_RESOLUTION: f64 = 0.25;

const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Discretized `w` on a strictly increasing grid, with the ODE slope at
/// every node. Produced by backward integration; no band attached yet.
#[derive(Debug, Clone)]
pub struct Fragment {
    pub gamma: f64,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    /// `w'(z)` from the right-hand side at each node.
    pub slope: Vec<f64>,
    /// Indices of nodes where the integrator was forced to stop: `z = 0`
    /// and levels where the optimal price switches branch.
    pub kinks: Vec<usize>,
}

impl Fragment {
    /// Builds a fragment from raw samples; `z` must be strictly increasing.
    pub fn from_samples(gamma: f64, z: Vec<f64>, w: Vec<f64>, slope: Vec<f64>) -> Result<Self, SolverError> {
        if z.len() < 2 || z.len() != w.len() || z.len() != slope.len() {
            return Err(SolverError::InvalidInput("fragment needs >= 2 matching samples".into()));
        }
        if z.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(SolverError::InvalidInput("fragment grid must be strictly increasing".into()));
        }
        Ok(Self { gamma, z, w, slope, kinks: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn z_min(&self) -> f64 {
        self.z[0]
    }

    pub fn z_max(&self) -> f64 {
        self.z[self.z.len() - 1]
    }

    pub fn cell(&self, i: usize) -> HermiteCell {
        HermiteCell {
            x0: self.z[i],
            x1: self.z[i + 1],
            y0: self.w[i],
            y1: self.w[i + 1],
            d0: self.slope[i],
            d1: self.slope[i + 1],
        }
    }

    /// Index `i` of the cell `[z_i, z_{i+1}]` containing `z` (clamped to the grid).
    pub fn locate(&self, z: f64) -> usize {
        let i = self.z.partition_point(|&x| x <= z);
        i.saturating_sub(1).min(self.z.len() - 2)
    }

    pub fn contains(&self, z: f64) -> bool {
        z >= self.z_min() && z <= self.z_max()
    }

    /// Hermite-interpolated `w(z)`.
    pub fn value(&self, z: f64) -> Result<f64, SolverError> {
        if !self.contains(z) {
            return Err(SolverError::OutOfRange { z, lo: self.z_min(), hi: self.z_max() });
        }
        Ok(self.cell(self.locate(z)).value(z))
    }

    /// Root of `w(z) = level` inside cell `i`, using the monotone cubic.
    pub(crate) fn cell_root(&self, i: usize, level: f64) -> Result<f64, SolverError> {
        let cell = self.cell(i).monotone();
        let f = |z: f64| cell.value(z) - level;
        brent(f, cell.x0, cell.x1, cell.y0 - level, cell.y1 - level, 1e-14, 200)
            .map_err(|e| SolverError::Numerical(format!("level crossing in cell {i}: {e}")))
    }
}

/// Region `(until, ∞)` integrated with a reduced step cap.
struct Layer {
    width: f64,
    step: f64,
    /// Cap outside layers.
    coarse: f64,
    until: f64,
}

impl Layer {
    fn cap(&self, z: f64) -> f64 {
        if z > self.until {
            self.step
        } else {
            self.coarse
        }
    }
}

/// Stop reason of a backward sweep.
enum Sweep {
    Reached,
    Stopped,
}

/// Integrates the ODE backward from `(z_max, w_start)` towards `z_stop`,
/// stopping at `z = 0` on the way and whenever `stop(z, w, slope)` fires.
pub(crate) fn integrate_backward<S>(
    params: &ModelParams,
    gamma: f64,
    z_max: f64,
    w_start: f64,
    z_stop: f64,
    opts: &SolverOptions,
    mut stop: S,
) -> Result<Fragment, SolverError>
where
    S: FnMut(f64, f64, f64) -> bool,
{
    if !(z_stop < z_max) {
        return Err(SolverError::InvalidInput(format!("z_stop ({z_stop}) must be below z_max ({z_max})")));
    }
    let rhs = |z: f64, w: f64| params.rhs(gamma, z, w);
    let mut zs = vec![z_max];
    let mut ws = vec![w_start];
    let mut ds = vec![rhs(z_max, w_start)];
    let mut kinks = Vec::new();

    // The asymptotic start is only balanced to leading order, and the
    // solution picks up a fast mode ~exp(rate·z) below every kink and price
    // switch. Finer steps inside those layers keep the stored grid resolving
    // it.
    let rate = 2.0 / (params.sigma * params.sigma) * params.demand.mu(params.demand.p_min());
    let layer = Layer {
        width: LAYER_WIDTH / rate,
        step: opts.max_step.min(LAYER_RESOLUTION / rate),
        coarse: opts.max_step.min(STIFF_RESOLUTION / rate),
        until: 0.0,
    };
    let mut layer = Layer { until: z_max - layer.width, ..layer };

    let mut targets = Vec::with_capacity(2);
    if z_stop < 0.0 && z_max > 0.0 {
        targets.push(0.0);
    }
    targets.push(z_stop);

    let thresholds = params.demand.branch_thresholds();
    let mut h = -layer.step;
    'segments: for &target in &targets {
        match sweep(&rhs, &mut zs, &mut ws, &mut ds, &mut kinks, &thresholds, target, &mut h, &mut layer, opts, &mut stop)? {
            Sweep::Stopped => break 'segments,
            Sweep::Reached => {
                if target == 0.0 && target != z_stop {
                    kinks.push(zs.len() - 1);
                    layer.until = -layer.width;
                }
            }
        }
    }

    let n = zs.len();
    zs.reverse();
    ws.reverse();
    ds.reverse();
    let kinks = kinks.into_iter().map(|i| n - 1 - i).rev().collect();
    Ok(Fragment { gamma, z: zs, w: ws, slope: ds, kinks })
}

#[allow(clippy::too_many_arguments)]
fn sweep<F, S>(
    rhs: &F,
    zs: &mut Vec<f64>,
    ws: &mut Vec<f64>,
    ds: &mut Vec<f64>,
    kinks: &mut Vec<usize>,
    thresholds: &[f64],
    target: f64,
    h: &mut f64,
    layer: &mut Layer,
    opts: &SolverOptions,
    stop: &mut S,
) -> Result<Sweep, SolverError>
where
    F: Fn(f64, f64) -> f64,
    S: FnMut(f64, f64, f64) -> bool,
{
    let mut z = *zs.last().unwrap();
    let mut w = *ws.last().unwrap();
    let mut k1 = *ds.last().unwrap();
    // Step ending on a branch switch of the price, located by dense output.
    let mut event_step: Option<f64> = None;
    let mut after_event = false;
    while z > target {
        let mut last = false;
        let mut step = match event_step {
            Some(step) => step,
            None => h.max(-layer.cap(z)),
        };
        if z + step <= target || (z + step - target).abs() < 1e-12 * (1.0 + target.abs()) {
            step = target - z;
            last = true;
        }
        if step.abs() < opts.min_step {
            return Err(SolverError::StepUnderflow { z });
        }
        let mut k = [0.0f64; 7];
        k[0] = k1;
        for s in 1..7 {
            let mut acc = w;
            for (j, kj) in k.iter().enumerate().take(s) {
                acc += step * A[s][j] * kj;
            }
            k[s] = rhs(z + C[s] * step, acc);
        }
        // 7th stage is evaluated at the 5th-order solution (FSAL).
        let w_new = w + step * (0..6).map(|j| A[6][j] * k[j]).sum::<f64>();
        let err_abs = (step * (0..7).map(|j| E[j] * k[j]).sum::<f64>()).abs();
        let scale = opts.atol + opts.rtol * w.abs().max(w_new.abs());
        let err = err_abs / scale;
        if !err.is_finite() {
            event_step = None;
            *h = 0.25 * step;
            if h.abs() < opts.min_step {
                return Err(SolverError::StepUnderflow { z });
            }
            continue;
        }
        if err > 1.0 {
            event_step = None;
            *h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            if h.abs() < opts.min_step {
                return Err(SolverError::StepUnderflow { z });
            }
            continue;
        }
        let is_event = event_step.take().is_some();
        // the step leaving an event node may re-cross within the location error
        if !is_event && !after_event {
            if let Some(t) = crossed_threshold(thresholds, w, w_new) {
                let cell = HermiteCell { x0: z + step, x1: z, y0: w_new, y1: w, d0: k[6], d1: k1 };
                let at = brent(|x| cell.value(x) - t, z + step, z, w_new - t, w - t, 1e-15, 200)
                    .unwrap_or(z + 0.5 * step);
                let sub = at - z;
                if sub.abs() >= opts.min_step && (step - sub).abs() >= opts.min_step {
                    event_step = Some(sub);
                    continue;
                }
            }
        }
        after_event = is_event;
        z = if last { target } else { z + step };
        w = w_new;
        k1 = k[6];
        zs.push(z);
        ws.push(w);
        ds.push(k1);
        if is_event && !last {
            kinks.push(zs.len() - 1);
            layer.until = z - layer.width;
        }
        if w.abs() > opts.blow_up {
            return Err(SolverError::BlowUp { z, w });
        }
        let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        // keep the last full step size when a segment end or event clipped it
        if !last && !is_event {
            *h = step * grow;
        }
        if stop(z, w, k1) {
            return Ok(Sweep::Stopped);
        }
    }
    Ok(Sweep::Reached)
}

/// Threshold strictly crossed between `w0` and `w1`, ignoring one that `w0`
/// already sits on.
fn crossed_threshold(thresholds: &[f64], w0: f64, w1: f64) -> Option<f64> {
    thresholds.iter().copied().find(|&t| {
        let on = (w0 - t).abs() <= 1e-9 * (1.0 + t.abs());
        !on && (w0 - t) * (w1 - t) < 0.0
    })
}
