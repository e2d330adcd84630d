//! Small scalar numerics shared by the solver, verifier and oracle:
//! bracketed root finding, golden-section maximization, finite-difference
//! weights on arbitrary nodes and cubic Hermite cells.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("root not bracketed: f({a}) = {fa}, f({b}) = {fb}")]
    NotBracketed { a: f64, b: f64, fa: f64, fb: f64 },
    #[error("no convergence after {iterations} iterations (bracket width {width})")]
    NoConvergence { iterations: usize, width: f64 },
}

/// Brent's zero-in on `[a, b]` with `f(a)` and `f(b)` already known.
///
/// Stops when the bracket is narrower than `xtol` (plus a relative floor of
/// a few ulps) or an exact zero is hit.
pub fn brent<F>(mut f: F, a: f64, b: f64, fa: f64, fb: f64, xtol: f64, max_iter: usize) -> Result<f64, RootError>
where
    F: FnMut(f64) -> f64,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(RootError::NotBracketed { a, b, fa, fb });
    }
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(RootError::NoConvergence {
        iterations: max_iter,
        width: (c - b).abs(),
    })
}

/// Golden-section search for a maximizer of a unimodal `f` on `[a, b]`.
pub fn golden_max<F>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    // The interior probe can beat the midpoint once the bracket is tiny.
    [(x, fx), (x1, f1), (x2, f2)]
        .into_iter()
        .fold((x, fx), |best, cand| if cand.1 > best.1 { cand } else { best })
}

/// Weights `c` such that `f'(x0) ≈ Σ c_j f(nodes_j)` (Fornberg's recursion,
/// first derivative only). Nodes must be distinct.
pub fn first_derivative_weights(x0: f64, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    // c[j][m]: weight of node j for the m-th derivative, m in {0, 1}
    let mut c = vec![[0.0f64; 2]; n];
    if n == 0 {
        return Vec::new();
    }
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                c[i][1] = c1 * (c[i - 1][0] - c5 * c[i - 1][1]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            c[j][1] = (c4 * c[j][1] - c[j][0]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|w| w[1]).collect()
}

/// Derivative estimates at every node of `x` from samples `y`, computed
/// independently on each smooth piece `pieces[i] = (first, last)` (inclusive
/// index ranges). Uses up to `width` nodes per stencil, centred where the
/// piece allows. Nodes in pieces with fewer than `min_nodes` points are `None`.
pub fn piecewise_derivative(
    x: &[f64],
    y: &[f64],
    pieces: &[(usize, usize)],
    width: usize,
    min_nodes: usize,
) -> Vec<Option<f64>> {
    let mut out = vec![None; x.len()];
    for &(first, last) in pieces {
        let len = last + 1 - first;
        if len < min_nodes.max(2) {
            continue;
        }
        let m = width.min(len);
        for i in first..=last {
            let start = i.saturating_sub(m / 2).max(first).min(last + 1 - m);
            let nodes = &x[start..start + m];
            let weights = first_derivative_weights(x[i], nodes);
            let d = weights.iter().zip(&y[start..start + m]).map(|(c, v)| c * v).sum();
            // Pieces may share a boundary node; keep the first estimate.
            if out[i].is_none() {
                out[i] = Some(d);
            }
        }
    }
    out
}

/// One cell of a cubic Hermite interpolant.
#[derive(Debug, Clone, Copy)]
pub struct HermiteCell {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub d0: f64,
    pub d1: f64,
}

impl HermiteCell {
    pub fn value(&self, x: f64) -> f64 {
        let h = self.x1 - self.x0;
        let t = (x - self.x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.y0
            + (t3 - 2.0 * t2 + t) * h * self.d0
            + (-2.0 * t3 + 3.0 * t2) * self.y1
            + (t3 - t2) * h * self.d1
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let h = self.x1 - self.x0;
        let t = (x - self.x0) / h;
        let t2 = t * t;
        (6.0 * t2 - 6.0 * t) / h * self.y0
            + (3.0 * t2 - 4.0 * t + 1.0) * self.d0
            + (-6.0 * t2 + 6.0 * t) / h * self.y1
            + (3.0 * t2 - 2.0 * t) * self.d1
    }

    /// Integral of the interpolant over `[a, b] ⊂ [x0, x1]` (Simpson is exact on cubics).
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (self.value(a) + 4.0 * self.value(0.5 * (a + b)) + self.value(b))
    }

    /// Fritsch–Carlson limited copy: monotone whenever the data are.
    pub fn monotone(&self) -> HermiteCell {
        let secant = (self.y1 - self.y0) / (self.x1 - self.x0);
        let mut cell = *self;
        if secant == 0.0 {
            cell.d0 = 0.0;
            cell.d1 = 0.0;
            return cell;
        }
        if cell.d0.signum() != secant.signum() {
            cell.d0 = 0.0;
        }
        if cell.d1.signum() != secant.signum() {
            cell.d1 = 0.0;
        }
        let alpha = cell.d0 / secant;
        let beta = cell.d1 / secant;
        let r2 = alpha * alpha + beta * beta;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            cell.d0 = tau * alpha * secant;
            cell.d1 = tau * beta * secant;
        }
        cell
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let f = |x: f64| x * x * x - 2.0 * x - 5.0;
        let r = brent(f, 2.0, 3.0, f(2.0), f(3.0), 1e-14, 100).unwrap();
        assert!((r - 2.094_551_481_542_326_5).abs() < 1e-13);
    }

    #[test]
    fn brent_rejects_unbracketed() {
        let f = |x: f64| x * x + 1.0;
        assert!(matches!(
            brent(f, -1.0, 1.0, 2.0, 2.0, 1e-12, 50),
            Err(RootError::NotBracketed { .. })
        ));
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, fx) = golden_max(|p| -(p - 1.3) * (p - 1.3) + 2.0, 0.0, 4.0, 1e-10);
        // a flat peak pins the maximizer only to ~sqrt(machine epsilon)
        assert!((x - 1.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-14);
    }

    #[test]
    fn fornberg_five_point_uniform() {
        let w = first_derivative_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{w:?}");
        }
    }

    #[test]
    fn fornberg_exact_on_quartic_nonuniform() {
        let nodes = [0.0, 0.07, 0.2, 0.26, 0.41];
        let f = |x: f64| 3.0 * x.powi(4) - x * x + 0.5;
        let df = |x: f64| 12.0 * x.powi(3) - 2.0 * x;
        for &x0 in &[0.0, 0.2, 0.41] {
            let w = first_derivative_weights(x0, &nodes);
            let d: f64 = w.iter().zip(nodes).map(|(c, x)| c * f(x)).sum();
            assert!((d - df(x0)).abs() < 1e-11);
        }
    }

    #[test]
    fn piecewise_derivative_respects_pieces() {
        // |x| has a kink at 0; pieces that share the node at 0 give exact slopes.
        let x: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        let d = piecewise_derivative(&x, &y, &[(0, 10), (10, 20)], 5, 5);
        for (i, v) in d.iter().enumerate() {
            let expect = if i <= 10 { -1.0 } else { 1.0 };
            assert!((v.unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn hermite_reproduces_cubic() {
        let f = |x: f64| x * x * x - x;
        let df = |x: f64| 3.0 * x * x - 1.0;
        let cell = HermiteCell { x0: 0.5, x1: 1.5, y0: f(0.5), y1: f(1.5), d0: df(0.5), d1: df(1.5) };
        assert!((cell.value(0.9) - f(0.9)).abs() < 1e-14);
        assert!((cell.derivative(1.2) - df(1.2)).abs() < 1e-13);
        let exact = |x: f64| x.powi(4) / 4.0 - x * x / 2.0;
        assert!((cell.integral(0.6, 1.4) - (exact(1.4) - exact(0.6))).abs() < 1e-14);
    }

    #[test]
    fn monotone_limiter_keeps_monotone_data_monotone() {
        let cell = HermiteCell { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0, d0: 10.0, d1: 10.0 }.monotone();
        let mut prev = cell.value(0.0);
        for i in 1..=100 {
            let v = cell.value(i as f64 / 100.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }
}
