//! Limited-memory BFGS with a strong-Wolfe line search (bracketing phase plus
//! cubic-interpolation zoom).

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, max_abs, norm, symmetric_eigen, SymmetricEigen};
use crate::objective::{hessian, Objective, DEFAULT_HESSIAN_CAP};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeConfig {
    /// Convergence threshold on the gradient infinity norm.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Number of stored curvature pairs.
    pub history_size: usize,
    /// Trial step for the first iteration and after memory resets.
    pub initial_step: f64,
    /// Newton steps on the finite-difference Hessian once the gradient
    /// criterion is met. Pins the result down along soft directions, where a
    /// small gradient still allows a large displacement.
    pub newton_steps: usize,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iters: 2000,
            history_size: 10,
            initial_step: 1.0,
            newton_steps: 0,
        }
    }
}

impl MinimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidConfig("grad_tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.history_size == 0 || !(self.initial_step > 0.0) {
            return Err(Error::InvalidConfig(
                "history_size and initial_step must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOutcome {
    pub params: Vec<f64>,
    pub loss: f64,
    /// Infinity norm of the gradient at `params`.
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 40;

struct Evaluator<'o, O: ?Sized> {
    obj: &'o O,
    count: usize,
    last_finite: Vec<f64>,
}

impl<O: Objective + ?Sized> Evaluator<'_, O> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> Result<f64> {
        self.count += 1;
        match self.obj.value_and_gradient(x, g) {
            Ok(f) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Ok(f),
            Ok(_) | Err(Error::NonFinite { .. }) => Err(Error::NonFiniteLoss {
                last_finite: self.last_finite.clone(),
            }),
            Err(e) => Err(e),
        }
    }
}

struct Point {
    alpha: f64,
    f: f64,
    slope: f64,
}

/// Minimizer of the cubic through two points with known slopes, if it exists.
fn cubic_min(a: &Point, b: &Point) -> Option<f64> {
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * libm::sqrt(disc);
    let denom = b.slope - a.slope + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
    t.is_finite().then_some(t)
}

/// Result of a line search: step taken, new value and gradient (in `g_out`).
struct LineResult {
    alpha: f64,
    f: f64,
}

fn line_search<O: Objective + ?Sized>(
    ev: &mut Evaluator<'_, O>,
    x: &[f64],
    f0: f64,
    slope0: f64,
    dir: &[f64],
    alpha0: f64,
    trial: &mut [f64],
    g_out: &mut [f64],
) -> Result<Option<LineResult>> {
    let n = x.len();
    let mut g_trial = vec![0.0; n];
    let at = |alpha: f64,
              trial: &mut [f64],
              g: &mut [f64],
              ev: &mut Evaluator<'_, O>|
     -> Result<Point> {
        for i in 0..n {
            trial[i] = x[i] + alpha * dir[i];
        }
        let f = ev.eval(trial, g)?;
        Ok(Point {
            alpha,
            f,
            slope: dot(g, dir),
        })
    };

    let mut prev = Point {
        alpha: 0.0,
        f: f0,
        slope: slope0,
    };
    let mut best_g = vec![0.0; n];
    let mut alpha = alpha0;
    let mut evals = 0;

    // Bracketing phase.
    let (mut lo, mut hi) = loop {
        let cur = at(alpha, trial, &mut g_trial, ev)?;
        evals += 1;
        if cur.f > f0 + C1 * alpha * slope0 || (evals > 1 && cur.f >= prev.f) {
            break (prev, cur);
        }
        if cur.slope.abs() <= -C2 * slope0 {
            g_out.copy_from_slice(&g_trial);
            return Ok(Some(LineResult {
                alpha: cur.alpha,
                f: cur.f,
            }));
        }
        best_g.copy_from_slice(&g_trial);
        if cur.slope >= 0.0 {
            break (cur, prev);
        }
        if evals >= MAX_LINE_EVALS {
            g_out.copy_from_slice(&g_trial);
            return Ok(Some(LineResult {
                alpha: cur.alpha,
                f: cur.f,
            }));
        }
        prev = cur;
        alpha *= 2.0;
    };
    // `lo` always satisfies sufficient decrease; `best_g` is its gradient
    // unless lo is the starting point.

    // Zoom phase.
    while evals < MAX_LINE_EVALS {
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= f64::EPSILON * b.max(1e-300) {
            break;
        }
        let mut t = cubic_min(&lo, &hi).unwrap_or(0.5 * (a + b));
        if !(t > a + 0.1 * width && t < b - 0.1 * width) {
            t = 0.5 * (a + b);
        }
        let cur = at(t, trial, &mut g_trial, ev)?;
        evals += 1;
        if cur.f > f0 + C1 * t * slope0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.slope.abs() <= -C2 * slope0 {
                g_out.copy_from_slice(&g_trial);
                return Ok(Some(LineResult {
                    alpha: cur.alpha,
                    f: cur.f,
                }));
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            best_g.copy_from_slice(&g_trial);
            lo = cur;
        }
    }

    // Curvature condition never met: settle for the best decrease point.
    if lo.alpha > 0.0 && lo.f < f0 {
        for i in 0..n {
            trial[i] = x[i] + lo.alpha * dir[i];
        }
        g_out.copy_from_slice(&best_g);
        return Ok(Some(LineResult {
            alpha: lo.alpha,
            f: lo.f,
        }));
    }
    Ok(None)
}

/// Hessian eigendecomposition at `x`, or `None` when the Hessian is too
/// large to form.
fn curvature<O: Objective + ?Sized>(
    ev: &mut Evaluator<'_, O>,
    x: &[f64],
) -> Result<Option<SymmetricEigen>> {
    let h = match hessian(ev.obj, x, DEFAULT_HESSIAN_CAP) {
        Ok(h) => h,
        Err(Error::HessianTooLarge { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    ev.count += 2 * x.len();
    symmetric_eigen(&h).map(Some)
}

/// One Newton step, kept only if the Hessian is positive definite and both
/// the value and the gradient norm go down.
fn newton_step<O: Objective + ?Sized>(
    ev: &mut Evaluator<'_, O>,
    eig: &SymmetricEigen,
    x: &[f64],
    g: &[f64],
    f: f64,
) -> Result<Option<(Vec<f64>, f64, Vec<f64>)>> {
    if !(eig.values[0] > 0.0) {
        return Ok(None);
    }
    let mut xn = x.to_vec();
    for (k, &lambda) in eig.values.iter().enumerate() {
        let v = eig.vector(k);
        let c = dot(&v, g) / lambda;
        for (xi, vi) in xn.iter_mut().zip(&v) {
            *xi -= c * vi;
        }
    }
    let mut gn = vec![0.0; x.len()];
    let fnew = match ev.eval(&xn, &mut gn) {
        Ok(v) => v,
        Err(Error::NonFiniteLoss { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok((fnew <= f && max_abs(&gn) < max_abs(g)).then_some((xn, fnew, gn)))
}

/// Step off a stationary point along a direction of negative curvature. Tries
/// growing step lengths and both signs; returns the first point below `f`.
fn escape<O: Objective + ?Sized>(
    ev: &mut Evaluator<'_, O>,
    x: &[f64],
    f: f64,
    v: &[f64],
) -> Result<Option<(Vec<f64>, f64, Vec<f64>)>> {
    let mut g = vec![0.0; x.len()];
    for t in ESCAPE_STEPS {
        let mut best: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        for sign in [1.0, -1.0] {
            let mut xt = x.to_vec();
            axpy(sign * t, v, &mut xt);
            let ft = match ev.eval(&xt, &mut g) {
                Ok(v) => v,
                Err(Error::NonFiniteLoss { .. }) => continue,
                Err(e) => return Err(e),
            };
            if ft < f && best.as_ref().is_none_or(|b| ft < b.1) {
                best = Some((xt, ft, g.clone()));
            }
        }
        if best.is_some() {
            return Ok(best);
        }
    }
    Ok(None)
}

/// Hessian eigenvalues below this count as negative curvature.
const NEGATIVE_CURVATURE: f64 = -1e-6;
const ESCAPE_STEPS: [f64; 4] = [0.05, 0.2, 0.8, 3.2];
const MAX_ESCAPES: usize = 5;

/// Plain L-BFGS descent from `x` until the gradient test passes, progress
/// stops or the iteration budget runs out.
fn descend<O: Objective + ?Sized>(
    ev: &mut Evaluator<'_, O>,
    cfg: &MinimizeConfig,
    x: &mut [f64],
    f: &mut f64,
    g: &mut [f64],
    iterations: &mut usize,
) -> Result<()> {
    let n = x.len();
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> =
        VecDeque::with_capacity(cfg.history_size);
    let mut dir = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha_buf = vec![0.0; cfg.history_size];

    while max_abs(g) > cfg.grad_tol && *iterations < cfg.max_iters {
        // Two-loop recursion for dir = -H g.
        dir.copy_from_slice(g);
        for (k, (s, y, rho)) in history.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha_buf[k] = a;
            axpy(-a, y, &mut dir);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            for d in dir.iter_mut() {
                *d *= gamma;
            }
        }
        for (k, (s, y, rho)) in history.iter().enumerate() {
            let b = rho * dot(y, &dir);
            axpy(alpha_buf[k] - b, s, &mut dir);
        }
        for d in dir.iter_mut() {
            *d = -*d;
        }

        let mut slope = dot(g, &dir);
        let mut alpha0 = 1.0;
        if history.is_empty() || !(slope < 0.0) {
            history.clear();
            for (d, gi) in dir.iter_mut().zip(g.iter()) {
                *d = -gi;
            }
            slope = dot(g, &dir);
            alpha0 = cfg.initial_step / norm(g).max(1.0);
        }

        let step = line_search(ev, x, *f, slope, &dir, alpha0, &mut trial, &mut g_new)?;
        let Some(step) = step else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };

        let s: Vec<f64> = dir.iter().map(|d| step.alpha * d).collect();
        let y: Vec<f64> = g_new.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        x.copy_from_slice(&trial);
        ev.last_finite.copy_from_slice(x);
        g.copy_from_slice(&g_new);
        let f_prev = *f;
        *f = step.f;
        *iterations += 1;

        if sy > 1e-16 * norm(&s) * norm(&y) && sy > 0.0 {
            if history.len() == cfg.history_size {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        if f_prev - *f <= 0.0 && history.is_empty() {
            break;
        }
    }
    Ok(())
}

/// Local minimization from `start`. The loss never increases between
/// accepted iterates; `converged` means the gradient infinity norm reached
/// `grad_tol`.
///
/// With `newton_steps > 0` a converged point is also checked for negative
/// curvature. A soft saddle can pass the gradient test, so the search steps
/// off it downhill and descends again before the Newton finish.
pub fn minimize<O: Objective + ?Sized>(
    obj: &O,
    start: &[f64],
    cfg: &MinimizeConfig,
) -> Result<MinimizeOutcome> {
    cfg.validate()?;
    if start.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            what: "start point",
            expected: obj.dim(),
            found: start.len(),
        });
    }
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss {
            last_finite: Vec::new(),
        });
    }
    let n = start.len();
    let mut ev = Evaluator {
        obj,
        count: 0,
        last_finite: start.to_vec(),
    };
    let mut x = start.to_vec();
    let mut g = vec![0.0; n];
    let mut f = ev.eval(&x, &mut g)?;
    let mut iterations = 0;
    let mut escapes = 0;

    loop {
        descend(&mut ev, cfg, &mut x, &mut f, &mut g, &mut iterations)?;
        let mut settled = x.clone();
        if obj.settle(&mut settled) {
            let mut gs = vec![0.0; n];
            let fs = ev.eval(&settled, &mut gs)?;
            if fs <= f {
                (x, f, g) = (settled, fs, gs);
            }
        }
        if cfg.newton_steps == 0 || max_abs(&g) > cfg.grad_tol {
            break;
        }
        let Some(mut eig) = curvature(&mut ev, &x)? else {
            break;
        };
        if eig.values[0] < NEGATIVE_CURVATURE && escapes < MAX_ESCAPES && iterations < cfg.max_iters
        {
            if let Some((xn, fnew, gn)) = escape(&mut ev, &x, f, &eig.vector(0))? {
                (x, f, g) = (xn, fnew, gn);
                ev.last_finite.copy_from_slice(&x);
                escapes += 1;
                continue;
            }
        }
        for k in 0..cfg.newton_steps {
            if k > 0 {
                match curvature(&mut ev, &x)? {
                    Some(e) => eig = e,
                    None => break,
                }
            }
            match newton_step(&mut ev, &eig, &x, &g, f)? {
                Some((xn, fnew, gn)) => (x, f, g) = (xn, fnew, gn),
                None => break,
            }
        }
        break;
    }
    let grad_norm = max_abs(&g);
    Ok(MinimizeOutcome {
        params: x,
        loss: f,
        grad_norm,
        converged: grad_norm <= cfg.grad_tol,
        iterations,
        evaluations: ev.count,
    })
}
