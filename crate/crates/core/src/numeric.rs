//! Small numerical helpers shared by the energy, verification and solver code.

/// Neumaier-compensated accumulator.
///
/// Totals over 10^4..10^5 per-point terms are compared across solver sweeps at
/// the 1e-12 level, so plain left-to-right summation is not good enough.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

/// Compensated sum of an iterator, in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    acc.extend(values);
    acc.value()
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

/// Fits a line through `(x, y)` pairs. Returns `None` for fewer than two
/// points or when all abscissae coincide.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = compensated_sum(xs.iter().copied()) / nf;
    let my = compensated_sum(ys.iter().copied()) / nf;
    let sxx = compensated_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    if sxx <= 0.0 {
        return None;
    }
    let sxy = compensated_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss = compensated_sum(
        xs.iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2)),
    );
    Some(LineFit {
        intercept,
        slope,
        residual: (ss / nf).sqrt(),
    })
}

/// Linear-interpolated percentile (`q` in `[0, 100]`) of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut values = vec![1.0e16, 1.0, -1.0e16];
        values.extend(std::iter::repeat_n(1.0e-3, 1000));
        let s = compensated_sum(values);
        assert!((s - 2.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn line_fit_is_exact_on_lines() {
        let xs = [1.0, 2.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.intercept - 3.0).abs() < 1e-14);
        assert!((fit.slope + 0.5).abs() < 1e-14);
        assert!(fit.residual < 1e-14);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_none());
        assert!(fit_line(&[1.0], &[0.0]).is_none());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 5.0);
        assert_eq!(median(&v), 3.0);
        assert!((percentile(&v, 95.0) - 4.8).abs() < 1e-12);
    }
}
