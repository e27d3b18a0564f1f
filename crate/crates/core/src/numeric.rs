//! Small numeric helpers shared across modules.

/// `log(exp(a) + exp(b))` without overflow. `-inf` is the additive identity.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Max-shifted log-sum-exp of a slice. Empty input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    })
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// `n` equally spaced values on `[lo, hi]`, endpoints included exactly.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

/// Piecewise cubic Hermite interpolant on strictly increasing abscissae.
#[derive(Debug, Clone)]
pub struct CubicHermite {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl CubicHermite {
    /// Interpolant with given nodal derivatives.
    pub fn with_derivatives(xs: Vec<f64>, ys: Vec<f64>, ds: Vec<f64>) -> Self {
        debug_assert!(xs.len() >= 2 && xs.len() == ys.len() && ys.len() == ds.len());
        Self { xs, ys, ds }
    }

    /// Interpolant with three-point finite-difference slopes (second order on
    /// non-uniform grids, one-sided at the ends).
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        debug_assert!(n >= 2 && n == ys.len());
        let mut ds = vec![0.0; n];
        if n == 2 {
            let s = (ys[1] - ys[0]) / (xs[1] - xs[0]);
            ds[0] = s;
            ds[1] = s;
            return Self { xs, ys, ds };
        }
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            let s0 = (ys[i] - ys[i - 1]) / h0;
            let s1 = (ys[i + 1] - ys[i]) / h1;
            ds[i] = (h1 * s0 + h0 * s1) / (h0 + h1);
        }
        // one-sided three-point formulas
        let (h0, h1) = (xs[1] - xs[0], xs[2] - xs[1]);
        let (s0, s1) = ((ys[1] - ys[0]) / h0, (ys[2] - ys[1]) / h1);
        ds[0] = s0 - h0 * (s1 - s0) / (h0 + h1);
        let (h0, h1) = (xs[n - 2] - xs[n - 3], xs[n - 1] - xs[n - 2]);
        let (s0, s1) = ((ys[n - 2] - ys[n - 3]) / h0, (ys[n - 1] - ys[n - 2]) / h1);
        ds[n - 1] = s1 + h1 * (s1 - s0) / (h0 + h1);
        Self { xs, ys, ds }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.xs.len();
        let k = self.xs.partition_point(|&v| v <= x);
        k.clamp(1, n - 1) - 1
    }

    /// Value and first derivative at `x` (extrapolates with the end cubic).
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let i = self.locate(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (d0, d1) = (self.ds[i] * h, self.ds[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let value = h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1;
        let dh00 = 6.0 * t2 - 6.0 * t;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = -6.0 * t2 + 6.0 * t;
        let dh11 = 3.0 * t2 - 2.0 * t;
        let deriv = (dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1) / h;
        (value, deriv)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_exp_matches_direct() {
        let v = log_add_exp(1.0, 2.0);
        assert!((v - (1f64.exp() + 2f64.exp()).ln()).abs() < 1e-14);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
        // no overflow
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_shift_invariance() {
        let xs = [0.1, -3.0, 2.5, 7.0];
        let shifted: Vec<f64> = xs.iter().map(|x| x + 500.0).collect();
        assert!((log_sum_exp(&shifted) - log_sum_exp(&xs) - 500.0).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(-0.1, 0.1, 5);
        assert_eq!(v[0], -0.1);
        assert_eq!(v[4], 0.1);
        assert!((v[1] + 0.05).abs() < 1e-15);
    }

    #[test]
    fn hermite_reproduces_cubic() {
        let xs = vec![-1.0, -0.3, 0.2, 0.9, 1.5];
        let f = |x: f64| 0.5 * x * x * x - x + 2.0;
        let df = |x: f64| 1.5 * x * x - 1.0;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let ds: Vec<f64> = xs.iter().map(|&x| df(x)).collect();
        let h = CubicHermite::with_derivatives(xs, ys, ds);
        for &x in &[-0.9, 0.0, 0.77, 1.4] {
            let (v, d) = h.eval_with_derivative(x);
            assert!((v - f(x)).abs() < 1e-12);
            assert!((d - df(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn hermite_finite_difference_is_accurate_for_smooth_data() {
        let xs = linspace(0.0, 1.0, 201);
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin()).collect();
        let h = CubicHermite::new(xs, ys);
        for i in 0..50 {
            let x = 0.013 + i as f64 * 0.0197;
            assert!((h.eval(x) - (3.0 * x).sin()).abs() < 1e-7);
        }
    }
}
