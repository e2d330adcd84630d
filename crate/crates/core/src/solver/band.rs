//! Reorder band extraction on a fragment: smooth-pasting levels and the
//! band area `∫_s^S (w − k) dz`.

use super::{Fragment, SolverError};

/// Reorder level, order-up-to level and turnover level of a fragment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub reorder_level: f64,
    pub order_up_to: f64,
    pub turnover_level: f64,
}

/// Locates the maximizer of `w` and the two crossings `w = k` around it.
pub fn find_reorder_levels(fragment: &Fragment, unit_cost: f64) -> Result<Band, SolverError> {
    let n = fragment.len();
    let (i_max, w_max) = fragment
        .w
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, w)| if w > best.1 { (i, w) } else { best });
    if w_max <= unit_cost {
        return Err(SolverError::NoBand { w_max, unit_cost });
    }
    if i_max == 0 || i_max == n - 1 {
        return Err(SolverError::BandNotBracketed(format!(
            "maximum of w sits at the fragment edge z = {}",
            fragment.z[i_max]
        )));
    }

    let turnover_level = turnover(fragment, i_max)?;

    let right = (i_max + 1..n).find(|&i| fragment.w[i] <= unit_cost).ok_or_else(|| {
        SolverError::BandNotBracketed(format!("w stays above k up to z_max = {}", fragment.z_max()))
    })?;
    let order_up_to = fragment.cell_root(right - 1, unit_cost)?;

    let left = (0..i_max).rev().find(|&i| fragment.w[i] <= unit_cost).ok_or_else(|| {
        SolverError::BandNotBracketed(format!("w stays above k down to z = {}", fragment.z_min()))
    })?;
    let reorder_level = fragment.cell_root(left, unit_cost)?;

    Ok(Band { reorder_level, order_up_to, turnover_level })
}

/// Zero of the interpolated slope in the cells adjacent to the maximal node.
fn turnover(fragment: &Fragment, i_max: usize) -> Result<f64, SolverError> {
    for i in [i_max - 1, i_max] {
        let cell = fragment.cell(i);
        let (d0, d1) = (cell.d0, cell.d1);
        if d0 >= 0.0 && d1 <= 0.0 {
            if d0 == 0.0 {
                return Ok(cell.x0);
            }
            if d1 == 0.0 {
                return Ok(cell.x1);
            }
            return crate::numeric::brent(|z| cell.derivative(z), cell.x0, cell.x1, d0, d1, 1e-14, 200)
                .map_err(|e| SolverError::Numerical(format!("turnover level: {e}")));
        }
    }
    // Slopes disagree with the sampled maximum only at roundoff level.
    Ok(fragment.z[i_max])
}

/// `∫_s^S (w(z) − k) dz` by Simpson on each (partial) cell of the fragment.
pub fn band_area(fragment: &Fragment, s: f64, big_s: f64, unit_cost: f64) -> Result<f64, SolverError> {
    for z in [s, big_s] {
        if !fragment.contains(z) {
            return Err(SolverError::OutOfRange { z, lo: fragment.z_min(), hi: fragment.z_max() });
        }
    }
    if s == big_s {
        return Ok(0.0);
    }
    if s > big_s {
        return Err(SolverError::InvalidInput(format!("band needs s < S (got {s}, {big_s})")));
    }
    let first = fragment.locate(s);
    let last = fragment.locate(big_s);
    let mut total = 0.0;
    for i in first..=last {
        let cell = fragment.cell(i);
        let a = cell.x0.max(s);
        let b = cell.x1.min(big_s);
        if b > a {
            total += cell.integral(a, b) - unit_cost * (b - a);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Fragment {
        let z: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let w = z.iter().map(|&x| f(x)).collect();
        let d = z.iter().map(|&x| df(x)).collect();
        Fragment::from_samples(0.0, z, w, d).unwrap()
    }

    #[test]
    fn empty_band_has_zero_area() {
        let f = synthetic(|_| 2.0, |_| 0.0, -1.0, 3.0, 11);
        assert_eq!(band_area(&f, 0.7, 0.7, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn rectangle_area() {
        let f = synthetic(|_| 2.0, |_| 0.0, -1.0, 3.0, 11);
        assert!((band_area(&f, 0.0, 2.0, 1.0).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn area_out_of_range() {
        let f = synthetic(|_| 2.0, |_| 0.0, -1.0, 3.0, 11);
        assert!(matches!(band_area(&f, -2.0, 1.0, 1.0), Err(SolverError::OutOfRange { .. })));
    }

    #[test]
    fn parabola_band() {
        // w = 3 − z² crosses k = 2 at ±1; area = ∫(1 − z²) = 4/3; turnover 0.
        let f = synthetic(|z| 3.0 - z * z, |z| -2.0 * z, -3.0, 3.0, 61);
        let band = find_reorder_levels(&f, 2.0).unwrap();
        assert!((band.reorder_level + 1.0).abs() < 1e-12);
        assert!((band.order_up_to - 1.0).abs() < 1e-12);
        assert!(band.turnover_level.abs() < 1e-12);
        let area = band_area(&f, band.reorder_level, band.order_up_to, 2.0).unwrap();
        assert!((area - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_band_when_max_below_cost() {
        let f = synthetic(|z| 0.5 - z * z, |z| -2.0 * z, -3.0, 3.0, 61);
        assert!(matches!(find_reorder_levels(&f, 1.0), Err(SolverError::NoBand { .. })));
    }
}
