//! Numerical optimisers: BFGS for smooth likelihoods, Powell's direction-set
//! method for simulation objectives, and a Newton solver for Poisson GLMs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Largest absolute parameter change that counts as converged.
    pub step_tol: f64,
    /// Relative objective change that counts as converged.
    pub rel_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 500, step_tol: 1e-6, rel_tol: 1e-9 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quasi-Newton minimisation. `f` returns the objective and writes the
/// gradient into its second argument.
pub fn bfgs<F>(mut f: F, x0: &[f64], opts: BfgsOptions) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() {
        return Err(Error::FitFailure { iterations: 0, reason: "objective not finite at start".into() });
    }
    // inverse Hessian approximation, row-major
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut scaled = false;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];

    for iter in 1..=opts.max_iter {
        for i in 0..n {
            dir[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            // lost descent: restart from steepest descent
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
                dir[i] = -g[i];
            }
            slope = -dot(&g, &g);
            scaled = false;
        }
        if slope == 0.0 {
            return Ok(Minimum { x, value: fx, iterations: iter, converged: true });
        }

        // backtracking line search with the Armijo condition
        let mut step = 1.0;
        let mut f_new;
        let mut tries = 0;
        loop {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                break;
            }
            step *= if f_new.is_finite() { 0.5 } else { 0.1 };
            tries += 1;
            if tries > 60 {
                let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if gnorm < 1e-4 * fx.abs().max(1.0) {
                    return Ok(Minimum { x, value: fx, iterations: iter, converged: true });
                }
                return Err(Error::FitFailure {
                    iterations: iter,
                    reason: format!("line search failed (objective {fx}, max |gradient| {gnorm:e})"),
                });
            }
        }

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let max_step = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rel_change = (fx - f_new).abs() / fx.abs().max(1e-300);
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if max_step < opts.step_tol && rel_change < opts.rel_tol {
            return Ok(Minimum { x, value: fx, iterations: iter, converged: true });
        }

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if !scaled {
                let scale = sy / dot(&y, &y);
                for i in 0..n {
                    for j in 0..n {
                        h[i * n + j] = if i == j { scale } else { 0.0 };
                    }
                }
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
    }
    Ok(Minimum { x, value: fx, iterations: opts.max_iter, converged: false })
}

/// Symmetrised Hessian from central differences of an analytic gradient.
pub fn hessian_from_gradient<G>(mut grad: G, x: &[f64]) -> DMatrix<f64>
where
    G: FnMut(&[f64], &mut [f64]),
{
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for j in 0..n {
        let h = 1e-5 * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        grad(&xp, &mut gp);
        xp[j] = x[j] - h;
        grad(&xp, &mut gm);
        xp[j] = x[j];
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    (hess.clone() + hess.transpose()) * 0.5
}

/// Inverse of a symmetric positive-definite matrix, `None` when singular or indefinite.
pub fn invert_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    let inv = chol.inverse();
    if inv.iter().all(|v| v.is_finite()) && (0..inv.nrows()).all(|i| inv[(i, i)] > 0.0) {
        Some(inv)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowellOptions {
    /// Stop once an iteration improves the objective by less than this relative amount.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Absolute tolerance of each line search along its direction.
    pub line_tol: f64,
    /// Initial bracket step for line searches.
    pub initial_step: f64,
}

impl Default for PowellOptions {
    fn default() -> Self {
        PowellOptions { rel_tol: 1e-8, max_iter: 200, line_tol: 1e-7, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowellResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Iterations that strictly lowered the objective.
    pub improving_iterations: usize,
    pub evaluations: usize,
}

struct Counted<'a, F: FnMut(&[f64]) -> f64> {
    f: &'a mut F,
    evals: usize,
    best_x: Vec<f64>,
    best: f64,
}

impl<F: FnMut(&[f64]) -> f64> Counted<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let v = (self.f)(x);
        self.evals += 1;
        if !v.is_finite() {
            return Err(Error::CalibrationFailure {
                reason: format!("objective not finite at {x:?}"),
                last: self.best_x.clone(),
            });
        }
        if v < self.best {
            self.best = v;
            self.best_x = x.to_vec();
        }
        Ok(v)
    }
}

const GOLD: f64 = 1.618_033_988_749_895;
const CGOLD: f64 = 0.381_966_011_250_105;

/// Minimises `f(x + t·d)` over `t`; returns `(t, value)`.
fn line_minimize<F: FnMut(&[f64]) -> f64>(
    c: &mut Counted<'_, F>,
    x: &[f64],
    d: &[f64],
    f0: f64,
    opts: &PowellOptions,
) -> Result<(f64, f64)> {
    let point = |t: f64| -> Vec<f64> { x.iter().zip(d).map(|(xi, di)| xi + t * di).collect() };
    let at = |c: &mut Counted<'_, F>, t: f64| c.eval(&point(t));

    // bracket a minimum by golden expansion
    let (mut a, mut fa) = (0.0, f0);
    let (mut b, mut fb) = (opts.initial_step, at(c, opts.initial_step)?);
    if fb > fa {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut cx = b + GOLD * (b - a);
    let mut fc = at(c, cx)?;
    let mut expansions = 0;
    while fb > fc {
        a = b;
        fa = fb;
        b = cx;
        fb = fc;
        cx = b + GOLD * (b - a);
        fc = at(c, cx)?;
        expansions += 1;
        if expansions > 60 {
            return Ok((b, fb));
        }
    }
    let _ = fa;

    // Brent's parabolic / golden-section search on [a, c]
    let (mut lo, mut hi) = if a < cx { (a, cx) } else { (cx, a) };
    let (mut xb, mut w, mut v) = (b, b, b);
    let (mut fxb, mut fw, mut fv) = (fb, fb, fb);
    let mut e: f64 = 0.0;
    let mut dstep: f64 = 0.0;
    for _ in 0..100 {
        let xm = 0.5 * (lo + hi);
        let tol1 = opts.line_tol * xb.abs() + 1e-10;
        let tol2 = 2.0 * tol1;
        if (xb - xm).abs() <= tol2 - 0.5 * (hi - lo) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (xb - w) * (fxb - fv);
            let mut q = (xb - v) * (fxb - fw);
            let mut p = (xb - v) * q - (xb - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = dstep;
            if !(p.abs() >= (0.5 * q * etemp).abs() || p <= q * (lo - xb) || p >= q * (hi - xb)) {
                dstep = p / q;
                let u = xb + dstep;
                if u - lo < tol2 || hi - u < tol2 {
                    dstep = tol1.copysign(xm - xb);
                }
                golden = false;
            }
        }
        if golden {
            e = if xb >= xm { lo - xb } else { hi - xb };
            dstep = CGOLD * e;
        }
        let u = if dstep.abs() >= tol1 { xb + dstep } else { xb + tol1.copysign(dstep) };
        let fu = at(c, u)?;
        if fu <= fxb {
            if u >= xb {
                lo = xb;
            } else {
                hi = xb;
            }
            v = w;
            fv = fw;
            w = xb;
            fw = fxb;
            xb = u;
            fxb = fu;
        } else {
            if u < xb {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == xb {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == xb || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok((xb, fxb))
}

/// Powell's conjugate-direction method with Brent line searches.
pub fn powell_minimize<F>(mut f: F, x0: &[f64], opts: PowellOptions) -> Result<PowellResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut c = Counted { f: &mut f, evals: 0, best_x: x0.to_vec(), best: f64::INFINITY };
    let mut x = x0.to_vec();
    let mut fx = c.eval(&x)?;
    let mut dirs: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut improving = 0;
    let mut iterations = 0;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let f_start = fx;
        let x_start = x.clone();
        let mut biggest = 0.0;
        let mut biggest_idx = 0;
        for (i, d) in dirs.iter().enumerate() {
            let before = fx;
            let (t, ft) = line_minimize(&mut c, &x, d, fx, &opts)?;
            if ft < fx {
                for k in 0..n {
                    x[k] += t * d[k];
                }
                fx = ft;
            }
            if before - fx > biggest {
                biggest = before - fx;
                biggest_idx = i;
            }
        }
        let improved = fx < f_start;
        if improved {
            improving += 1;
        }
        if 2.0 * (f_start - fx) <= opts.rel_tol * (f_start.abs() + fx.abs()) + 1e-300 {
            break;
        }
        // extrapolated point and possible new direction
        let new_dir: Vec<f64> = (0..n).map(|k| x[k] - x_start[k]).collect();
        let ext: Vec<f64> = (0..n).map(|k| 2.0 * x[k] - x_start[k]).collect();
        let fe = c.eval(&ext)?;
        if fe < f_start {
            let t =
                2.0 * (f_start - 2.0 * fx + fe) * (f_start - fx - biggest).powi(2) - biggest * (f_start - fe).powi(2);
            if t < 0.0 {
                let (tt, ft) = line_minimize(&mut c, &x, &new_dir, fx, &opts)?;
                if ft < fx {
                    for k in 0..n {
                        x[k] += tt * new_dir[k];
                    }
                    fx = ft;
                }
                dirs[biggest_idx] = dirs[n - 1].clone();
                dirs[n - 1] = new_dir;
            }
        }
        let _ = iter;
    }
    let evaluations = c.evals;
    Ok(PowellResult { x, value: fx, iterations, improving_iterations: improving, evaluations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coef: Vec<f64>,
    /// Standard errors from the inverse Fisher information (`None` if singular).
    pub se: Option<Vec<f64>>,
    pub loglik: f64,
    pub iterations: usize,
}

/// Poisson regression with log link: `y_i ~ Poisson(exposure_i · exp(x_iᵀβ))`.
/// Log-likelihood omits the `ln y!` constant.
pub fn poisson_glm(rows: &[Vec<f64>], y: &[f64], exposure: &[f64], init: Option<&[f64]>) -> Result<GlmFit> {
    let p = rows.first().map(Vec::len).unwrap_or(0);
    if p == 0 || rows.len() != y.len() || y.len() != exposure.len() {
        return Err(Error::InvalidArgument("malformed Poisson regression inputs".into()));
    }
    let mut beta = match init {
        Some(b) => DVector::from_column_slice(b),
        None => {
            let mut b = DVector::zeros(p);
            let ty: f64 = y.iter().sum();
            let te: f64 = exposure.iter().sum();
            if ty > 0.0 && te > 0.0 {
                // an intercept column is assumed first when starting cold
                b[0] = (ty / te).ln();
            }
            b
        }
    };
    let loglik = |b: &DVector<f64>| -> f64 {
        rows.iter()
            .zip(y)
            .zip(exposure)
            .filter(|(_, e)| **e > 0.0)
            .map(|((r, yi), e)| {
                let lin: f64 = r.iter().zip(b.iter()).map(|(a, c)| a * c).sum();
                yi * (lin + e.ln()) - e * lin.exp()
            })
            .sum()
    };
    let mut ll = loglik(&beta);
    let mut info = DMatrix::zeros(p, p);
    for iter in 1..=100 {
        let mut score = DVector::zeros(p);
        info.fill(0.0);
        for ((r, yi), e) in rows.iter().zip(y).zip(exposure) {
            if *e <= 0.0 {
                continue;
            }
            let lin: f64 = r.iter().zip(beta.iter()).map(|(a, c)| a * c).sum();
            let mu = e * lin.exp();
            for j in 0..p {
                score[j] += (yi - mu) * r[j];
                for k in 0..p {
                    info[(j, k)] += mu * r[j] * r[k];
                }
            }
        }
        let Some(chol) = info.clone().cholesky() else {
            return Err(Error::FitFailure { iterations: iter, reason: "singular Poisson information matrix".into() });
        };
        let delta = chol.solve(&score);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &delta * step;
            let l = loglik(&cand);
            if l.is_finite() && l >= ll - 1e-12 * ll.abs() {
                beta = cand;
                let change = (l - ll).abs();
                ll = l;
                accepted = true;
                if delta.amax() * step < 1e-10 || change < 1e-12 * ll.abs().max(1.0) {
                    let se = invert_spd(&info).map(|c| (0..p).map(|i| c[(i, i)].sqrt()).collect());
                    return Ok(GlmFit { coef: beta.iter().copied().collect(), se, loglik: ll, iterations: iter });
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            let se = invert_spd(&info).map(|c| (0..p).map(|i| c[(i, i)].sqrt()).collect());
            return Ok(GlmFit { coef: beta.iter().copied().collect(), se, loglik: ll, iterations: iter });
        }
    }
    Err(Error::FitFailure { iterations: 100, reason: "Poisson regression did not converge".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfgs_quadratic() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 1.0);
            g[1] = 20.0 * (x[1] + 2.0);
            (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2)
        };
        let m = bfgs(f, &[0.0, 0.0], BfgsOptions::default()).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn bfgs_rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let m = bfgs(f, &[-1.2, 1.0], BfgsOptions { max_iter: 2000, ..Default::default() }).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn powell_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2);
        let r = powell_minimize(f, &[0.0, 0.0], PowellOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] + 2.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn powell_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = PowellOptions { rel_tol: 1e-14, max_iter: 200, line_tol: 1e-10, initial_step: 0.1 };
        let r = powell_minimize(f, &[-1.2, 1.0], opts).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn powell_at_optimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2);
        let r = powell_minimize(f, &[1.0, -2.0], PowellOptions::default()).unwrap();
        assert_eq!(r.x, vec![1.0, -2.0]);
        assert_eq!(r.improving_iterations, 0);
    }

    #[test]
    fn powell_non_finite() {
        let f = |x: &[f64]| if x[0] > 0.05 { f64::NAN } else { (x[0] - 1.0).powi(2) };
        let err = powell_minimize(f, &[0.0], PowellOptions::default()).unwrap_err();
        match err {
            Error::CalibrationFailure { last, .. } => assert_eq!(last, vec![0.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hessian_of_quadratic() {
        let h = hessian_from_gradient(
            |x, g| {
                g[0] = 2.0 * x[0] + x[1];
                g[1] = x[0] + 6.0 * x[1];
            },
            &[0.3, -0.2],
        );
        assert!((h[(0, 0)] - 2.0).abs() < 1e-8 && (h[(0, 1)] - 1.0).abs() < 1e-8 && (h[(1, 1)] - 6.0).abs() < 1e-8);
        let inv = invert_spd(&h).unwrap();
        assert!((inv[(0, 0)] - 6.0 / 11.0).abs() < 1e-8);
        assert!(invert_spd(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_none());
    }

    #[test]
    fn glm_recovers_rates() {
        // two groups with rates 0.5 and 2.0 per unit exposure
        let rows = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        let y = [5.0, 5.0, 40.0, 40.0];
        let e = [10.0, 10.0, 20.0, 20.0];
        let fit = poisson_glm(&rows, &y, &e, None).unwrap();
        assert!((fit.coef[0] - 0.5f64.ln()).abs() < 1e-9);
        assert!((fit.coef[1] - 4.0f64.ln()).abs() < 1e-9);
        let se = fit.se.unwrap();
        assert!((se[0] - (1.0f64 / 10.0).sqrt()).abs() < 1e-6);
    }
}
