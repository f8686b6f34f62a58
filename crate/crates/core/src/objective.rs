//! Scalar objectives over a flat parameter vector. The landscape machinery
//! (minimizer, band, eigenvector following, Hessians) is written against the
//! [`Objective`] trait so analytic test surfaces can stand in for a network.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::landscape::Fingerprint;
use crate::linalg::{max_abs, Matrix};
use crate::model::{self, Architecture};

/// Default ceiling on the dimension of dense finite-difference Hessians.
pub const DEFAULT_HESSIAN_CAP: usize = 512;

pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, params: &[f64]) -> Result<f64>;

    /// Returns the value and overwrites `grad` with the gradient.
    fn value_and_gradient(&self, params: &[f64], grad: &mut [f64]) -> Result<f64>;

    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; params.len()];
        self.value_and_gradient(params, &mut g)?;
        Ok(g)
    }

    /// Infinity norm of the gradient.
    fn gradient_norm(&self, params: &[f64]) -> Result<f64> {
        Ok(max_abs(&self.gradient(params)?))
    }

    /// Moves `params` along directions in which the objective is known to be
    /// flat or exactly quadratic to their optimal (or canonical) value.
    /// Returns whether anything changed.
    fn settle(&self, _params: &mut [f64]) -> bool {
        false
    }
}

impl<O: Objective + ?Sized> Objective for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        (**self).value(params)
    }

    fn settle(&self, params: &mut [f64]) -> bool {
        (**self).settle(params)
    }

    fn value_and_gradient(&self, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        (**self).value_and_gradient(params, grad)
    }
}

/// Central finite differences of the analytic gradient, step
/// `1e-5 * max(1, |p_i|)`, symmetrized as `(H + H^T) / 2`.
pub fn hessian<O: Objective + ?Sized>(obj: &O, params: &[f64], cap: usize) -> Result<Matrix> {
    let n = params.len();
    if n != obj.dim() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: obj.dim(),
            found: n,
        });
    }
    if n > cap {
        return Err(Error::HessianTooLarge { params: n, cap });
    }
    let mut h = Matrix::zeros(n, n);
    let mut p = params.to_vec();
    let mut up = vec![0.0; n];
    let mut down = vec![0.0; n];
    for i in 0..n {
        let step = 1e-5 * params[i].abs().max(1.0);
        p[i] = params[i] + step;
        obj.value_and_gradient(&p, &mut up)?;
        p[i] = params[i] - step;
        obj.value_and_gradient(&p, &mut down)?;
        p[i] = params[i];
        for j in 0..n {
            h[(j, i)] = (up[j] - down[j]) / (2.0 * step);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = s;
            h[(j, i)] = s;
        }
    }
    Ok(h)
}

/// Mean cross-entropy of a network on a fixed dataset, plus an optional
/// weight penalty `l2 * |p|^2`.
///
/// Without the penalty, saturating hidden units let the loss keep falling as
/// the weights grow, so many quenches drift instead of converging. The
/// penalty is invariant under the hidden-unit symmetry group.
#[derive(Debug, Clone, Copy)]
pub struct NetObjective<'a> {
    pub arch: &'a Architecture,
    pub data: &'a Dataset,
    pub l2: f64,
}

impl<'a> NetObjective<'a> {
    pub fn new(arch: &'a Architecture, data: &'a Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if data.dim() != arch.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "dataset columns",
                expected: arch.input_dim(),
                found: data.dim(),
            });
        }
        data.check_labels(arch.output_dim())?;
        Ok(Self {
            arch,
            data,
            l2: 0.0,
        })
    }

    pub fn with_l2(mut self, l2: f64) -> Result<Self> {
        if !(l2 >= 0.0) || !l2.is_finite() {
            return Err(Error::InvalidConfig(
                "l2 coefficient must be finite and non-negative".into(),
            ));
        }
        self.l2 = l2;
        Ok(self)
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of_loss(self.arch, self.data, self.l2)
    }

    fn penalty(&self, params: &[f64]) -> f64 {
        if self.l2 == 0.0 {
            return 0.0;
        }
        self.l2 * params.iter().map(|p| p * p).sum::<f64>()
    }

    pub fn hessian(&self, params: &[f64]) -> Result<Matrix> {
        hessian(self, params, DEFAULT_HESSIAN_CAP)
    }

    pub fn auc(&self, params: &[f64]) -> Result<f64> {
        model::model_auc(self.arch, params, self.data)
    }
}

impl Objective for NetObjective<'_> {
    fn dim(&self) -> usize {
        self.arch.parameter_count()
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        Ok(model::loss(self.arch, params, self.data)? + self.penalty(params))
    }

    fn value_and_gradient(&self, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        let f = model::loss_and_gradient(self.arch, params, self.data, grad)?;
        if self.l2 != 0.0 {
            for (g, p) in grad.iter_mut().zip(params) {
                *g += 2.0 * self.l2 * p;
            }
        }
        Ok(f + self.penalty(params))
    }

    /// Softmax ignores a constant added to every logit, so each column of
    /// the output layer (one per source unit, plus the biases) can be shifted
    /// without changing the data loss. The penalty is smallest, and the
    /// representative unique, when every column sums to zero.
    fn settle(&self, params: &mut [f64]) -> bool {
        let layer = self.arch.layer_count();
        let (units, fan_in, _) = self.arch.layer_block(layer);
        if units < 2 || params.len() != self.dim() {
            return false;
        }
        let mut changed = false;
        for from in 0..=fan_in {
            let pos = |to| {
                if from == fan_in {
                    self.arch.bias_position(layer, to)
                } else {
                    self.arch.weight_position(layer, to, from)
                }
            };
            let mean = (0..units).map(|to| params[pos(to)]).sum::<f64>() / units as f64;
            if mean != 0.0 {
                for to in 0..units {
                    params[pos(to)] -= mean;
                }
                changed = true;
            }
        }
        changed
    }
}

/// Analytic surfaces for exercising the optimizers.
pub mod hooks {
    use super::*;

    /// `lambda/2 * |p - center|^2`.
    #[derive(Debug, Clone)]
    pub struct Quadratic {
        pub center: Vec<f64>,
        pub lambda: f64,
    }

    impl Quadratic {
        pub fn new(center: Vec<f64>, lambda: f64) -> Self {
            Self { center, lambda }
        }
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.center.len()
        }

        fn value(&self, p: &[f64]) -> Result<f64> {
            Ok(0.5
                * self.lambda
                * p.iter()
                    .zip(&self.center)
                    .map(|(x, c)| (x - c) * (x - c))
                    .sum::<f64>())
        }

        fn value_and_gradient(&self, p: &[f64], grad: &mut [f64]) -> Result<f64> {
            for ((g, x), c) in grad.iter_mut().zip(p).zip(&self.center) {
                *g = self.lambda * (x - c);
            }
            self.value(p)
        }
    }

    /// `(p_0^2 - 1)^2 + stiffness/2 * sum_{i>0} p_i^2`: minima at `p_0 = ±1`,
    /// a single index-1 saddle at the origin with value 1.
    #[derive(Debug, Clone, Copy)]
    pub struct DoubleWell {
        pub dim: usize,
        pub stiffness: f64,
    }

    impl DoubleWell {
        pub fn one_d() -> Self {
            Self {
                dim: 1,
                stiffness: 1.0,
            }
        }
    }

    impl Objective for DoubleWell {
        fn dim(&self) -> usize {
            self.dim
        }

        fn value(&self, p: &[f64]) -> Result<f64> {
            let w = p[0] * p[0] - 1.0;
            Ok(w * w + 0.5 * self.stiffness * p[1..].iter().map(|x| x * x).sum::<f64>())
        }

        fn value_and_gradient(&self, p: &[f64], grad: &mut [f64]) -> Result<f64> {
            grad[0] = 4.0 * p[0] * (p[0] * p[0] - 1.0);
            for i in 1..p.len() {
                grad[i] = self.stiffness * p[i];
            }
            self.value(p)
        }
    }

    /// `x^2 (x^2 - 4)^2 / 4 + y^2`: three minima at `x = 0, ±2` (value 0)
    /// separated by saddles at `x = ±2/sqrt(3)` (value 64/27).
    #[derive(Debug, Clone, Copy)]
    pub struct TripleWell;

    impl Objective for TripleWell {
        fn dim(&self) -> usize {
            2
        }

        fn value(&self, p: &[f64]) -> Result<f64> {
            let (x, y) = (p[0], p[1]);
            let q = x * x - 4.0;
            Ok(0.25 * x * x * q * q + y * y)
        }

        fn value_and_gradient(&self, p: &[f64], grad: &mut [f64]) -> Result<f64> {
            let (x, y) = (p[0], p[1]);
            let q = x * x - 4.0;
            // d/dx [x^2 q^2 / 4] = (2x q^2 + 4 x^3 q) / 4
            grad[0] = 0.5 * x * q * q + x * x * x * q;
            grad[1] = 2.0 * y;
            self.value(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::hooks::*;
    use super::*;

    #[test]
    fn quadratic_hessian_is_scaled_identity() {
        let q = Quadratic::new(vec![0.0; 6], 2.5);
        let h = hessian(&q, &[0.3, -1.0, 4.0, 100.0, 0.0, -7.0], DEFAULT_HESSIAN_CAP).unwrap();
        let mut expect = Matrix::identity(6);
        for v in expect.as_mut_slice() {
            *v *= 2.5;
        }
        assert!(h.max_abs_diff(&expect) < 1e-8);
    }

    #[test]
    fn hessian_cap_is_enforced() {
        let q = Quadratic::new(vec![0.0; 10], 1.0);
        assert_eq!(
            hessian(&q, &[0.0; 10], 8).unwrap_err(),
            Error::HessianTooLarge { params: 10, cap: 8 }
        );
    }

    #[test]
    fn triple_well_gradient_is_consistent() {
        let t = TripleWell;
        for x in [-2.3, -1.0, 0.4, 1.7] {
            let p = [x, 0.3];
            let g = t.gradient(&p).unwrap();
            let h = 1e-6;
            let fd =
                (t.value(&[x + h, 0.3]).unwrap() - t.value(&[x - h, 0.3]).unwrap()) / (2.0 * h);
            assert!((fd - g[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn weight_penalty_adds_to_value_gradient_and_fingerprint() {
        let arch = Architecture::parse("2-3-2").unwrap();
        let data = crate::data::gen_checkerboard(40, 2, 0.0, 1).unwrap();
        let plain = NetObjective::new(&arch, &data).unwrap();
        let reg = plain.with_l2(1e-3).unwrap();
        let p: Vec<f64> = (0..arch.parameter_count())
            .map(|i| libm::cos(i as f64))
            .collect();
        let sq: f64 = p.iter().map(|v| v * v).sum();
        assert!((reg.value(&p).unwrap() - plain.value(&p).unwrap() - 1e-3 * sq).abs() < 1e-15);
        let (g0, g1) = (plain.gradient(&p).unwrap(), reg.gradient(&p).unwrap());
        for i in 0..p.len() {
            assert!((g1[i] - g0[i] - 2e-3 * p[i]).abs() < 1e-15);
        }
        assert_eq!(plain.fingerprint(), Fingerprint::of(&arch, &data));
        assert_ne!(plain.fingerprint(), reg.fingerprint());
        assert!(plain.with_l2(-1.0).is_err());
    }
}
