use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::erf::erfc;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
const LENGTHSCALE_GRID: [f64; 7] = [0.1, 0.2, 0.3, 0.5, 0.8, 1.3, 2.0];
const DEFAULT_LENGTHSCALE: f64 = 0.5;

struct Fit {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    lengthscale: f64,
}

/// Gaussian-process surrogate with a squared-exponential kernel over
/// points in `[0, 1]^d`. Targets are standardized before fitting; the
/// lengthscale is picked by marginal likelihood over a fixed grid scaled by
/// `sqrt(d)`.
pub struct GpState {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    jitter: f64,
    fit: Option<Fit>,
}

impl Default for GpState {
    fn default() -> Self {
        Self::new()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kernel(a: &[f64], b: &[f64], ls: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * ls * ls)).exp()
}

impl GpState {
    pub fn new() -> Self {
        Self {
            xs: Vec::new(),
            ys: Vec::new(),
            y_mean: 0.0,
            y_scale: 1.0,
            jitter: JITTER_START,
            fit: None,
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.xs.iter().any(|p| p.as_slice() == x)
    }

    /// Lowest observed target.
    pub fn incumbent(&self) -> Option<f64> {
        self.ys.iter().copied().reduce(f64::min)
    }

    /// Standard deviation used to standardize targets.
    pub fn y_scale(&self) -> f64 {
        self.y_scale
    }

    pub fn lengthscale(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.lengthscale)
    }

    /// Adds an observation and refits. A repeated point keeps the lower
    /// target.
    pub fn observe(&mut self, x: Vec<f64>, y: f64) {
        match self.xs.iter().position(|p| *p == x) {
            Some(i) => self.ys[i] = self.ys[i].min(y),
            None => {
                self.xs.push(x);
                self.ys.push(y);
            }
        }
        self.refit();
    }

    fn standardized(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.ys.len(),
            self.ys.iter().map(|y| (y - self.y_mean) / self.y_scale),
        )
    }

    fn gram(&self, ls: f64, jitter: f64) -> DMatrix<f64> {
        let n = self.xs.len();
        DMatrix::from_fn(n, n, |i, j| {
            kernel(&self.xs[i], &self.xs[j], ls) + if i == j { jitter } else { 0.0 }
        })
    }

    /// Cholesky factor with escalating jitter.
    fn factor(&self, ls: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
        let mut jitter = self.jitter;
        while jitter <= JITTER_MAX {
            if let Some(c) = self.gram(ls, jitter).cholesky() {
                return Some((c, jitter));
            }
            jitter *= 10.0;
        }
        None
    }

    fn refit(&mut self) {
        let n = self.ys.len() as f64;
        self.y_mean = self.ys.iter().sum::<f64>() / n;
        let var = self
            .ys
            .iter()
            .map(|y| (y - self.y_mean).powi(2))
            .sum::<f64>()
            / n;
        self.y_scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let y = self.standardized();
        let dim = self.xs[0].len().max(1) as f64;
        let mut best: Option<(f64, Fit)> = None;
        for g in LENGTHSCALE_GRID {
            let ls = g * dim.sqrt();
            let Some((chol, _)) = self.factor(ls) else {
                continue;
            };
            let alpha = chol.solve(&y);
            let log_det: f64 = chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>()
                * 2.0;
            let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det;
            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                best = Some((
                    lml,
                    Fit {
                        chol,
                        alpha,
                        lengthscale: ls,
                    },
                ));
            }
        }
        self.fit = match best {
            Some((_, f)) => Some(f),
            None => {
                warn!("kernel matrix not positive definite at maximum jitter; resetting hyperparameters");
                let ls = DEFAULT_LENGTHSCALE * dim.sqrt();
                self.jitter = JITTER_MAX;
                self.factor(ls).map(|(chol, _)| {
                    let alpha = chol.solve(&y);
                    Fit {
                        chol,
                        alpha,
                        lengthscale: ls,
                    }
                })
            }
        };
    }

    /// Posterior mean and standard deviation at `x`, in target units.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let Some(fit) = &self.fit else {
            return (0.0, 1.0);
        };
        let k = DVector::from_iterator(
            self.xs.len(),
            self.xs.iter().map(|p| kernel(p, x, fit.lengthscale)),
        );
        let mean = k.dot(&fit.alpha);
        let v = fit
            .chol
            .l_dirty()
            .lower_triangle()
            .solve_lower_triangular(&k)
            .unwrap_or_else(|| DVector::zeros(k.len()));
        let var = (1.0 - v.dot(&v)).max(0.0);
        (self.y_mean + mean * self.y_scale, var.sqrt() * self.y_scale)
    }
}

/// Posterior mean and standard deviation; the prior `(0, 1)` before any
/// observation.
pub fn gp_posterior(s: &GpState, x: &[f64]) -> (f64, f64) {
    s.posterior(x)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Probability that a minimized objective improves on `incumbent` by more
/// than `xi`.
pub fn acquisition_pi(mean: f64, stdev: f64, incumbent: f64, xi: f64) -> f64 {
    if stdev <= 0.0 {
        return if mean + xi < incumbent { 1.0 } else { 0.0 };
    }
    normal_cdf((incumbent - mean - xi) / stdev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_without_data() {
        assert_eq!(gp_posterior(&GpState::new(), &[0.3, 0.7]), (0.0, 1.0));
    }

    #[test]
    fn interpolates_observations() {
        let mut gp = GpState::new();
        let pts = [
            (vec![0.1, 0.2], 3.0),
            (vec![0.8, 0.4], -1.0),
            (vec![0.5, 0.9], 2.5),
        ];
        for (x, y) in &pts {
            gp.observe(x.clone(), *y);
        }
        for (x, y) in &pts {
            let (m, s) = gp.posterior(x);
            assert!((m - y).abs() < 1e-6, "{m} vs {y}");
            assert!(s <= 1e-3);
        }
    }

    #[test]
    fn duplicates_keep_the_lower_target() {
        let mut gp = GpState::new();
        gp.observe(vec![0.5], 2.0);
        gp.observe(vec![0.5], 1.0);
        gp.observe(vec![0.5], 3.0);
        assert_eq!(gp.len(), 1);
        assert_eq!(gp.incumbent(), Some(1.0));
    }

    #[test]
    fn pi_examples() {
        assert!((acquisition_pi(5.0, 2.0, 6.0, 0.0) - 0.691462461274013).abs() < 1e-6);
        assert_eq!(acquisition_pi(4.0, 1.0, 4.5, 0.5), 0.5);
        assert_eq!(acquisition_pi(-100.0, 0.0, 0.0, 0.01), 1.0);
        assert_eq!(acquisition_pi(1.0, 0.0, 0.0, 0.01), 0.0);
        assert!(acquisition_pi(-100.0, 1e-9, 0.0, 0.01) > 1.0 - 1e-12);
    }
}
