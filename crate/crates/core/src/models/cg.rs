//! Nonlinear conjugate gradient (Polak–Ribière+, Powell restarts) with a
//! strong Wolfe line search.

/// Smooth objective over `R^dim`.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>);

    /// `α ↦ (f(x + α d), d·∇f(x + α d))`. Objectives can override this to
    /// reuse work across line-search trials.
    fn line<'a>(&'a self, x: &'a [f64], d: &'a [f64]) -> Box<dyn Fn(f64) -> (f64, f64) + 'a> {
        Box::new(move |alpha| {
            let trial: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
            let (f, g) = self.value_and_gradient(&trial);
            (f, dot(&g, d))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub armijo_c: f64,
    /// Strong Wolfe curvature constant.
    pub curvature_c: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            gradient_tolerance: 1e-6,
            max_iterations: 500,
            armijo_c: 1e-4,
            curvature_c: 0.1,
            backtrack: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when a finite starting point produced a non-finite value.
    pub non_finite: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bracketing and zooming on `φ(α) = f(x + α d)` until the strong Wolfe
/// conditions hold. Falls back to the best Armijo step seen when the trial
/// budget runs out.
fn wolfe_search(
    phi: &dyn Fn(f64) -> (f64, f64),
    f0: f64,
    slope: f64,
    alpha0: f64,
    options: &CgOptions,
) -> Option<f64> {
    let armijo = |a: f64, fa: f64| fa.is_finite() && fa <= f0 + options.armijo_c * a * slope;
    let wolfe = |da: f64| da.abs() <= -options.curvature_c * slope;
    // (step, value, derivative) at the low end, which always satisfies
    // Armijo, and at the high end of the bracket once one exists.
    let mut lo = (0.0, f0, slope);
    let mut hi: Option<(f64, f64, f64)> = None;
    let mut best: Option<(f64, f64)> = None;
    let mut a = alpha0;
    for _ in 0..options.max_backtracks {
        let (fa, da) = phi(a);
        if !fa.is_finite() || !da.is_finite() {
            hi = Some((a, f64::INFINITY, f64::NAN));
        } else if !armijo(a, fa) || fa >= lo.1 {
            hi = Some((a, fa, da));
        } else {
            if best.is_none_or(|(_, fb)| fa < fb) {
                best = Some((a, fa));
            }
            if wolfe(da) {
                return Some(a);
            }
            if da > 0.0 {
                hi = Some(lo);
            }
            lo = (a, fa, da);
        }
        a = match hi {
            None => {
                // Extrapolate along the derivative secant, at least doubling.
                let (a0, d0) = if lo.0 > 0.0 { (lo.0, lo.2) } else { (0.0, slope) };
                let secant = if da.is_finite() && da > d0 { a0 - d0 * (a - a0) / (da - d0) } else { f64::NAN };
                if secant.is_finite() && secant > 2.0 * a { secant.min(10.0 * a) } else { 2.0 * a }
            }
            Some((ah, _, dh)) => {
                let (al, dl) = (lo.0, lo.2);
                let width = ah - al;
                let secant = if dh.is_finite() && dh != dl { al - dl * width / (dh - dl) } else { f64::NAN };
                let (min, max) = if width > 0.0 { (al + 0.1 * width, ah - 0.1 * width) } else { (ah - 0.1 * width, al + 0.1 * width) };
                if secant.is_finite() && secant > min && secant < max {
                    secant
                } else if dh.is_nan() {
                    al + options.backtrack * width
                } else {
                    al + 0.5 * width
                }
            }
        };
        if !(a.is_finite() && a > 0.0) {
            break;
        }
    }
    best.map(|(a, _)| a)
}

pub fn minimize<O: Objective>(objective: &O, x0: Vec<f64>, options: &CgOptions) -> CgResult {
    let n = objective.dim();
    let mut x = x0;
    let (mut f, mut g) = objective.value_and_gradient(&x);
    let result = |x: Vec<f64>, f: f64, g: &[f64], it: usize, converged: bool| CgResult {
        gradient_norm: dot(g, g).sqrt(),
        non_finite: !f.is_finite(),
        x,
        value: f,
        iterations: it,
        converged,
    };
    if !f.is_finite() {
        return result(x, f, &g, 0, false);
    }
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut since_restart = 0usize;
    let mut prev_step: Option<(f64, f64)> = None; // (alpha, g·d)

    for it in 0..options.max_iterations {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < options.gradient_tolerance {
            return result(x, f, &g, it, true);
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
            since_restart = 0;
        }
        let first_step = 1.0 / dot(&d, &d).sqrt().max(1.0);
        let mut alpha = match prev_step {
            Some((a, s)) => a * s / slope,
            None => first_step,
        };
        if !alpha.is_finite() || alpha <= 0.0 {
            alpha = first_step;
        }

        let step = wolfe_search(&*objective.line(&x, &d), f, slope, alpha, options);
        let accepted = step.is_some();
        alpha = step.unwrap_or(alpha);
        if !accepted {
            if since_restart == 0 {
                // Steepest descent made no progress: numerically converged.
                return result(x, f, &g, it, false);
            }
            d = g.iter().map(|v| -v).collect();
            since_restart = 0;
            prev_step = None;
            continue;
        }

        let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
        let (f_new, g_new) = objective.value_and_gradient(&trial);
        if !f_new.is_finite() {
            return result(trial, f_new, &g_new, it + 1, false);
        }
        let gg = dot(&g, &g);
        // Powell restart when successive gradients lose orthogonality.
        let powell = dot(&g_new, &g).abs() >= 0.2 * dot(&g_new, &g_new);
        let beta = if powell {
            0.0
        } else if gg > 0.0 {
            let num: f64 = g_new.iter().zip(&g).map(|(a, b)| a * (a - b)).sum();
            (num / gg).max(0.0)
        } else {
            0.0
        };
        prev_step = Some((alpha, slope));
        x = trial;
        f = f_new;
        g = g_new;
        since_restart += 1;
        if since_restart >= n.max(1) || beta == 0.0 {
            d = g.iter().map(|v| -v).collect();
            since_restart = 0;
        } else {
            for i in 0..n {
                d[i] = -g[i] + beta * d[i];
            }
        }
    }
    let gnorm_converged = dot(&g, &g).sqrt() < options.gradient_tolerance;
    result(x, f, &g, options.max_iterations, gnorm_converged)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
            let g0 = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            let g1 = 200.0 * (x[1] - x[0] * x[0]);
            (self.value(x), vec![g0, g1])
        }
    }

    struct Quadratic(Vec<f64>);

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn value(&self, x: &[f64]) -> f64 {
            x.iter().zip(&self.0).map(|(v, a)| 0.5 * a * v * v - v).sum()
        }
        fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
            (self.value(x), x.iter().zip(&self.0).map(|(v, a)| a * v - 1.0).collect())
        }
    }

    #[test]
    fn solves_ill_conditioned_quadratic() {
        let q = Quadratic(vec![1.0, 10.0, 100.0, 1000.0]);
        let r = minimize(&q, vec![0.0; 4], &CgOptions::default());
        assert!(r.converged, "{r:?}");
        for (v, a) in r.x.iter().zip(&q.0) {
            assert!((v - 1.0 / a).abs() < 1e-6);
        }
    }

    #[test]
    fn descends_on_rosenbrock() {
        let opts = CgOptions { max_iterations: 5000, ..Default::default() };
        let r = minimize(&Rosenbrock, vec![-1.2, 1.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{r:?}");
    }
}
