//! Straight-line least squares over integer data.
//!
//! Normal-equation sums are accumulated exactly in `i128` and the two ratios
//! are converted to `f64` once, so the result depends only on the set of
//! points and not on summation order or on points that lie exactly on the line.
//! Sums that would overflow fall back to a centered `f64` fit.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
}

/// Least-squares line `y = intercept + slope * x`.
///
/// Needs at least two distinct `x` values; callers guarantee this.
pub fn fit_line(x: &[i64], y: &[i64]) -> LineFit {
    debug_assert_eq!(x.len(), y.len());
    exact(x, y).unwrap_or_else(|| centered(x, y))
}

fn exact(x: &[i64], y: &[i64]) -> Option<LineFit> {
    let n = x.len() as i128;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0i128, 0i128, 0i128, 0i128);
    for (&xi, &yi) in x.iter().zip(y) {
        let (xi, yi) = (xi as i128, yi as i128);
        sx = sx.checked_add(xi)?;
        sy = sy.checked_add(yi)?;
        sxx = sxx.checked_add(xi.checked_mul(xi)?)?;
        sxy = sxy.checked_add(xi.checked_mul(yi)?)?;
    }
    let den = n.checked_mul(sxx)?.checked_sub(sx.checked_mul(sx)?)?;
    if den == 0 {
        return None;
    }
    let slope_num = n.checked_mul(sxy)?.checked_sub(sx.checked_mul(sy)?)?;
    let icept_num = sy.checked_mul(sxx)?.checked_sub(sx.checked_mul(sxy)?)?;
    Some(LineFit {
        intercept: ratio(icept_num, den),
        slope: ratio(slope_num, den),
    })
}

/// `num / den` as f64 via an exact integer quotient plus a fractional part.
fn ratio(num: i128, den: i128) -> f64 {
    let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    q as f64 + r as f64 / den as f64
}

fn centered(x: &[i64], y: &[i64]) -> LineFit {
    let n = x.len() as f64;
    let x0 = x[0];
    let y0 = y[0];
    let mx = x.iter().map(|v| (v - x0) as f64).sum::<f64>() / n;
    let my = y.iter().map(|v| (v - y0) as f64).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = (xi - x0) as f64 - mx;
        let dy = (yi - y0) as f64 - my;
        sxx += dx * dx;
        sxy += dx * dy;
    }
    let slope = sxy / sxx;
    let intercept = (y0 as f64 + my) - slope * (x0 as f64 + mx);
    LineFit { intercept, slope }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered_exactly() {
        let x: Vec<i64> = vec![0, 1, 2, 4, 7, 9];
        let y: Vec<i64> = x.iter().map(|v| 2_000_000 + v * 33_333_333).collect();
        let f = fit_line(&x, &y);
        assert_eq!(f.slope, 33_333_333.0);
        assert_eq!(f.intercept, 2_000_000.0);
    }

    #[test]
    fn matches_float_fit_on_noisy_data() {
        let x: Vec<i64> = (0..50).collect();
        let y: Vec<i64> = x
            .iter()
            .map(|v| 1000 + 37 * v + if v % 3 == 0 { 5 } else { -2 })
            .collect();
        let a = exact(&x, &y).unwrap();
        let b = centered(&x, &y);
        assert!((a.slope - b.slope).abs() < 1e-9);
        assert!((a.intercept - b.intercept).abs() < 1e-7);
    }

    #[test]
    fn ratio_handles_signs() {
        assert_eq!(ratio(-7, 2), -3.5);
        assert_eq!(ratio(7, -2), -3.5);
        assert_eq!(ratio(6, 3), 2.0);
    }

    #[test]
    fn overflow_falls_back() {
        let x = vec![0i64, i64::MAX / 2];
        let y = vec![0i64, i64::MAX / 2];
        let f = fit_line(&x, &y);
        assert!((f.slope - 1.0).abs() < 1e-9);
    }
}
