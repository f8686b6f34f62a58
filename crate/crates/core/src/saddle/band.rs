//! Climbing-image nudged elastic band between two minima, relaxed with FIRE.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, max_abs, max_abs_diff, norm};
use crate::objective::Objective;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandConfig {
    /// Images including both fixed endpoints.
    pub n_images: usize,
    pub spring_constant: f64,
    /// Convergence threshold on the largest NEB force component.
    pub band_grad_tol: f64,
    pub max_band_iters: usize,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            n_images: 15,
            spring_constant: 1.0,
            band_grad_tol: 1e-3,
            max_band_iters: 500,
        }
    }
}

impl BandConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_images < 3 {
            return Err(Error::InvalidConfig(
                "a band needs at least 3 images".into(),
            ));
        }
        if !(self.spring_constant > 0.0) || !(self.band_grad_tol > 0.0) {
            return Err(Error::InvalidConfig(
                "spring_constant and band_grad_tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A local maximum of the relaxed band.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleCandidate {
    pub params: Vec<f64>,
    pub loss: f64,
    /// Position along the band (0 and `n_images - 1` are the endpoints).
    pub image: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandOutcome {
    /// Interior local maxima, highest loss first.
    pub candidates: Vec<SaddleCandidate>,
    pub converged: bool,
    pub iterations: usize,
    /// Loss of every image after relaxation.
    pub energies: Vec<f64>,
}

// FIRE parameters (Bitzek et al. defaults).
const DT_START: f64 = 0.1;
const DT_MAX: f64 = 1.0;
const N_MIN: usize = 5;
const F_INC: f64 = 1.1;
const F_DEC: f64 = 0.5;
const ALPHA_START: f64 = 0.1;
const F_ALPHA: f64 = 0.99;
/// Largest displacement of a single image per iteration.
const MAX_MOVE: f64 = 0.2;

/// Energy-weighted upwind tangent.
fn tangent(prev: &[f64], cur: &[f64], next: &[f64], e_prev: f64, e: f64, e_next: f64) -> Vec<f64> {
    let plus: Vec<f64> = next.iter().zip(cur).map(|(a, b)| a - b).collect();
    let minus: Vec<f64> = cur.iter().zip(prev).map(|(a, b)| a - b).collect();
    let mut tau: Vec<f64> = if e_next > e && e > e_prev {
        plus
    } else if e_next < e && e < e_prev {
        minus
    } else {
        let d_max = f64::max((e_next - e).abs(), (e_prev - e).abs());
        let d_min = f64::min((e_next - e).abs(), (e_prev - e).abs());
        let (wp, wm) = if e_next > e_prev {
            (d_max, d_min)
        } else {
            (d_min, d_max)
        };
        let t: Vec<f64> = plus
            .iter()
            .zip(&minus)
            .map(|(p, m)| wp * p + wm * m)
            .collect();
        if norm(&t) == 0.0 {
            plus.iter().zip(&minus).map(|(p, m)| p + m).collect()
        } else {
            t
        }
    };
    let n = norm(&tau);
    if n > 0.0 {
        for t in &mut tau {
            *t /= n;
        }
    }
    tau
}

/// Relaxes a linearly interpolated band from `a` to `b` and reports the
/// interior images that are local maxima of the loss along it. A band that
/// misses `band_grad_tol` within `max_band_iters` still reports its
/// candidates, flagged `converged = false`.
pub fn band_search<O: Objective + ?Sized>(
    obj: &O,
    a: &[f64],
    b: &[f64],
    cfg: &BandConfig,
) -> Result<BandOutcome> {
    cfg.validate()?;
    let dim = obj.dim();
    for end in [a, b] {
        if end.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "band endpoint",
                expected: dim,
                found: end.len(),
            });
        }
    }
    if max_abs_diff(a, b) == 0.0 {
        return Err(Error::IdenticalEndpoints);
    }

    let m = cfg.n_images;
    let mut images: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let t = i as f64 / (m - 1) as f64;
            a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
        })
        .collect();
    let mut energies = vec![0.0; m];
    let mut grads = vec![vec![0.0; dim]; m];
    energies[0] = obj.value_and_gradient(&images[0], &mut grads[0])?;
    energies[m - 1] = obj.value_and_gradient(&images[m - 1], &mut grads[m - 1])?;

    let mut velocity = vec![vec![0.0; dim]; m];
    let mut forces = vec![vec![0.0; dim]; m];
    let (mut dt, mut alpha, mut since_negative) = (DT_START, ALPHA_START, 0usize);
    let mut converged = false;
    let mut iterations = 0;

    loop {
        for i in 1..m - 1 {
            energies[i] = obj.value_and_gradient(&images[i], &mut grads[i])?;
        }
        let climber = (1..m - 1)
            .max_by(|&i, &j| energies[i].total_cmp(&energies[j]).then(j.cmp(&i)))
            .unwrap();
        let mut worst: f64 = 0.0;
        for i in 1..m - 1 {
            let tau = tangent(
                &images[i - 1],
                &images[i],
                &images[i + 1],
                energies[i - 1],
                energies[i],
                energies[i + 1],
            );
            let g_par = dot(&grads[i], &tau);
            let f = &mut forces[i];
            if i == climber {
                for k in 0..dim {
                    f[k] = -grads[i][k] + 2.0 * g_par * tau[k];
                }
            } else {
                let d_next = norm(
                    &images[i + 1]
                        .iter()
                        .zip(&images[i])
                        .map(|(x, y)| x - y)
                        .collect::<Vec<_>>(),
                );
                let d_prev = norm(
                    &images[i]
                        .iter()
                        .zip(&images[i - 1])
                        .map(|(x, y)| x - y)
                        .collect::<Vec<_>>(),
                );
                let spring = cfg.spring_constant * (d_next - d_prev);
                for k in 0..dim {
                    f[k] = -grads[i][k] + g_par * tau[k] + spring * tau[k];
                }
            }
            worst = worst.max(max_abs(f));
        }
        if worst <= cfg.band_grad_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_band_iters {
            break;
        }
        iterations += 1;

        // FIRE update over the whole chain.
        let power: f64 = (1..m - 1).map(|i| dot(&forces[i], &velocity[i])).sum();
        if power > 0.0 {
            let f_norm = libm::sqrt((1..m - 1).map(|i| dot(&forces[i], &forces[i])).sum::<f64>());
            let v_norm = libm::sqrt(
                (1..m - 1)
                    .map(|i| dot(&velocity[i], &velocity[i]))
                    .sum::<f64>(),
            );
            if f_norm > 0.0 {
                for i in 1..m - 1 {
                    for k in 0..dim {
                        velocity[i][k] =
                            (1.0 - alpha) * velocity[i][k] + alpha * v_norm * forces[i][k] / f_norm;
                    }
                }
            }
            since_negative += 1;
            if since_negative > N_MIN {
                dt = f64::min(dt * F_INC, DT_MAX);
                alpha *= F_ALPHA;
            }
        } else {
            for v in velocity.iter_mut() {
                v.fill(0.0);
            }
            dt *= F_DEC;
            alpha = ALPHA_START;
            since_negative = 0;
        }
        for i in 1..m - 1 {
            let mut step: Vec<f64> = (0..dim)
                .map(|k| {
                    velocity[i][k] += dt * forces[i][k];
                    dt * velocity[i][k]
                })
                .collect();
            let len = norm(&step);
            if len > MAX_MOVE {
                for s in &mut step {
                    *s *= MAX_MOVE / len;
                }
            }
            for (x, s) in images[i].iter_mut().zip(&step) {
                *x += s;
            }
        }
    }

    let mut candidates: Vec<SaddleCandidate> = (1..m - 1)
        .filter(|&i| energies[i] > energies[i - 1] && energies[i] > energies[i + 1])
        .map(|i| SaddleCandidate {
            params: images[i].clone(),
            loss: energies[i],
            image: i,
        })
        .collect();
    candidates.sort_by(|x, y| y.loss.total_cmp(&x.loss).then(x.image.cmp(&y.image)));
    Ok(BandOutcome {
        candidates,
        converged,
        iterations,
        energies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::hooks::{DoubleWell, TripleWell};

    #[test]
    fn double_well_saddle() {
        let out = band_search(
            &DoubleWell::one_d(),
            &[-1.0],
            &[1.0],
            &BandConfig::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert_eq!(out.candidates.len(), 1);
        let c = &out.candidates[0];
        assert!(c.params[0].abs() < 1e-3, "{c:?}");
        assert!((c.loss - 1.0).abs() < 1e-6);
    }

    #[test]
    fn off_axis_endpoints_relax_onto_the_path() {
        let w = DoubleWell {
            dim: 3,
            stiffness: 4.0,
        };
        let out = band_search(
            &w,
            &[-1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0],
            &BandConfig {
                n_images: 9,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.candidates[0].loss - 1.0).abs() < 1e-5);
    }

    #[test]
    fn triple_well_reports_both_barriers() {
        let cfg = BandConfig {
            n_images: 21,
            ..Default::default()
        };
        let out = band_search(&TripleWell, &[-2.0, 0.0], &[2.0, 0.0], &cfg).unwrap();
        assert_eq!(out.candidates.len(), 2, "{:?}", out.energies);
        for c in &out.candidates {
            assert!(c.loss > 1.5 && c.loss <= 64.0 / 27.0 + 1e-9);
        }
    }

    #[test]
    fn identical_endpoints_rejected() {
        assert_eq!(
            band_search(&DoubleWell::one_d(), &[1.0], &[1.0], &BandConfig::default()),
            Err(Error::IdenticalEndpoints)
        );
        assert!(band_search(
            &DoubleWell::one_d(),
            &[1.0],
            &[-1.0],
            &BandConfig {
                n_images: 2,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn deterministic() {
        let cfg = BandConfig {
            n_images: 7,
            max_band_iters: 40,
            ..Default::default()
        };
        let a = band_search(&TripleWell, &[-2.0, 0.3], &[2.0, -0.1], &cfg).unwrap();
        let b = band_search(&TripleWell, &[-2.0, 0.3], &[2.0, -0.1], &cfg).unwrap();
        assert_eq!(a, b);
    }
}
