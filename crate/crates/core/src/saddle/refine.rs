//! Eigenvector-following refinement of a saddle candidate, index check, and
//! the two displaced quenches that identify the minima a saddle connects.

use alloc::vec::Vec;
use core::fmt;

use crate::error::Error;
use crate::linalg::{dot, max_abs, norm, symmetric_eigen, SymmetricEigen};
use crate::objective::{hessian, Objective, DEFAULT_HESSIAN_CAP};
use crate::optim::{minimize, MinimizeConfig, MinimizeOutcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    /// Convergence threshold on the gradient infinity norm.
    pub ts_grad_tol: f64,
    /// Eigenvalues below `-eig_tol` count as negative.
    pub eig_tol: f64,
    pub max_iters: usize,
    /// Trust radius (Euclidean) for a single step.
    pub max_step: f64,
    /// Displacement along the negative mode for the endpoint quenches.
    pub displacement: f64,
    pub hessian_cap: usize,
    pub quench: MinimizeConfig,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            ts_grad_tol: 1e-5,
            eig_tol: 1e-6,
            max_iters: 100,
            max_step: 0.2,
            displacement: 1e-3,
            hessian_cap: DEFAULT_HESSIAN_CAP,
            quench: MinimizeConfig::default(),
        }
    }
}

/// A verified index-1 saddle with the quenches on either side of it.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedSaddle {
    pub params: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub negative_eigenvalue: f64,
    /// Unit eigenvector of the negative mode.
    pub negative_mode: Vec<f64>,
    /// Quench from `params + displacement * mode`.
    pub plus: MinimizeOutcome,
    /// Quench from `params - displacement * mode`.
    pub minus: MinimizeOutcome,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefineFailure {
    /// Converged to a stationary point that is not index 1.
    WrongIndex {
        index: usize,
        spectrum_head: Vec<f64>,
    },
    IterationCap {
        grad_norm: f64,
    },
    /// A displaced quench did not reach a minimum.
    QuenchUnconverged,
    Objective(Error),
}

impl fmt::Display for RefineFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefineFailure::WrongIndex {
                index,
                spectrum_head,
            } => {
                write!(
                    f,
                    "converged to an index-{index} point; lowest eigenvalues {spectrum_head:?}"
                )
            }
            RefineFailure::IterationCap { grad_norm } => {
                write!(f, "iteration cap reached at gradient norm {grad_norm:e}")
            }
            RefineFailure::QuenchUnconverged => f.write_str("displaced quench did not converge"),
            RefineFailure::Objective(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for RefineFailure {
    fn from(e: Error) -> Self {
        RefineFailure::Objective(e)
    }
}

/// Curvatures smaller than this are treated as this, so near-flat modes do
/// not swallow the whole trust radius.
const CURVATURE_FLOOR: f64 = 1e-4;
/// Newton polishing is skipped when some eigenvalue is this close to zero.
const SINGULAR: f64 = 1e-7;

fn spectrum_head(eig: &SymmetricEigen) -> Vec<f64> {
    eig.values.iter().take(5).copied().collect()
}

/// Eigenvector following: maximize along the lowest Hessian mode, minimize
/// along all others, until the gradient infinity norm is at most
/// `ts_grad_tol`; then require exactly one eigenvalue below `-eig_tol` and
/// quench from both sides of the negative mode.
pub fn refine_ts<O: Objective + ?Sized>(
    obj: &O,
    candidate: &[f64],
    cfg: &RefineConfig,
) -> Result<RefinedSaddle, RefineFailure> {
    if candidate.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            what: "saddle candidate",
            expected: obj.dim(),
            found: candidate.len(),
        }
        .into());
    }
    if candidate.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: 0 }.into());
    }
    let n = candidate.len();
    let mut x = candidate.to_vec();
    obj.settle(&mut x);
    let mut g = alloc::vec![0.0; n];
    let mut loss = obj.value_and_gradient(&x, &mut g)?;
    let mut iterations = 0;

    let eig = loop {
        let eig = symmetric_eigen(&hessian(obj, &x, cfg.hessian_cap)?)?;
        if max_abs(&g) <= cfg.ts_grad_tol {
            break eig;
        }
        if iterations >= cfg.max_iters {
            return Err(RefineFailure::IterationCap {
                grad_norm: max_abs(&g),
            });
        }
        iterations += 1;

        let mut step = alloc::vec![0.0; n];
        for k in 0..n {
            let mode = eig.vector(k);
            let force = dot(&mode, &g);
            let b = eig.values[k].abs().max(CURVATURE_FLOOR);
            let denom = b + libm::sqrt(b * b + 4.0 * force * force);
            // uphill on the followed mode, downhill everywhere else
            let h = if k == 0 {
                2.0 * force / denom
            } else {
                -2.0 * force / denom
            };
            for (s, v) in step.iter_mut().zip(&mode) {
                *s += h * v;
            }
        }
        let len = norm(&step);
        if len > cfg.max_step {
            for s in &mut step {
                *s *= cfg.max_step / len;
            }
        }
        for (xi, s) in x.iter_mut().zip(&step) {
            *xi += s;
        }
        obj.settle(&mut x);
        loss = obj.value_and_gradient(&x, &mut g)?;
    };

    let mut eig = eig;
    for _ in 0..cfg.quench.newton_steps {
        if eig.values.iter().any(|v| v.abs() < SINGULAR) {
            break;
        }
        let mut xn = x.clone();
        for (k, &lambda) in eig.values.iter().enumerate() {
            let mode = eig.vector(k);
            let c = dot(&mode, &g) / lambda;
            for (xi, v) in xn.iter_mut().zip(&mode) {
                *xi -= c * v;
            }
        }
        obj.settle(&mut xn);
        let mut gn = alloc::vec![0.0; n];
        let Ok(ln) = obj.value_and_gradient(&xn, &mut gn) else {
            break;
        };
        if !(max_abs(&gn) < max_abs(&g)) {
            break;
        }
        let en = symmetric_eigen(&hessian(obj, &xn, cfg.hessian_cap)?)?;
        if en.negative_count(cfg.eig_tol) != 1 {
            break;
        }
        (x, g, loss, eig) = (xn, gn, ln, en);
    }

    let index = eig.negative_count(cfg.eig_tol);
    if index != 1 {
        return Err(RefineFailure::WrongIndex {
            index,
            spectrum_head: spectrum_head(&eig),
        });
    }
    let mode = eig.vector(0);
    let displaced = |sign: f64| -> Vec<f64> {
        x.iter()
            .zip(&mode)
            .map(|(p, v)| p + sign * cfg.displacement * v)
            .collect()
    };
    let plus = minimize(obj, &displaced(1.0), &cfg.quench)?;
    let minus = minimize(obj, &displaced(-1.0), &cfg.quench)?;
    if !plus.converged || !minus.converged {
        return Err(RefineFailure::QuenchUnconverged);
    }
    Ok(RefinedSaddle {
        grad_norm: max_abs(&g),
        params: x,
        loss,
        negative_eigenvalue: eig.values[0],
        negative_mode: mode,
        plus,
        minus,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::hooks::{DoubleWell, TripleWell};

    #[test]
    fn exact_saddle_is_returned_unchanged() {
        let s = refine_ts(&DoubleWell::one_d(), &[0.0], &RefineConfig::default()).unwrap();
        assert_eq!(s.iterations, 0);
        assert!(s.params[0].abs() < 1e-8);
        assert!((s.loss - 1.0).abs() < 1e-12);
        assert!((s.negative_eigenvalue + 4.0).abs() < 1e-6);
        let mut ends = [s.plus.params[0], s.minus.params[0]];
        ends.sort_by(f64::total_cmp);
        assert!((ends[0] + 1.0).abs() < 1e-6 && (ends[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn climbs_to_the_saddle_from_nearby() {
        let s = refine_ts(&TripleWell, &[1.0, 0.4], &RefineConfig::default()).unwrap();
        assert!((s.params[0] - 2.0 / libm::sqrt(3.0)).abs() < 1e-6, "{s:?}");
        assert!(s.params[1].abs() < 1e-6);
        assert!((s.loss - 64.0 / 27.0).abs() < 1e-9);
        assert!(s.plus.loss < s.loss && s.minus.loss < s.loss);
    }

    #[test]
    fn minimum_is_classified_index_zero() {
        let err = refine_ts(
            &DoubleWell {
                dim: 2,
                stiffness: 1.0,
            },
            &[1.0, 0.0],
            &RefineConfig::default(),
        )
        .unwrap_err();
        assert!(
            matches!(err, RefineFailure::WrongIndex { index: 0, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn iteration_cap() {
        let cfg = RefineConfig {
            max_iters: 1,
            max_step: 1e-3,
            ..Default::default()
        };
        assert!(matches!(
            refine_ts(&TripleWell, &[0.6, 0.4], &cfg),
            Err(RefineFailure::IterationCap { .. })
        ));
    }
}
