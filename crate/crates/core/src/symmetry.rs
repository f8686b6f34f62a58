//! Hidden-unit permutation and sign-flip symmetries.
//!
//! For a tanh network, reordering the units of a hidden layer or negating a
//! unit's incoming weights, bias and outgoing weights leaves the network
//! function unchanged. These operations form a group of order
//! `prod_l n_l! * 2^{n_l}`; every parameter vector has an orbit of
//! functionally identical copies. [`canonicalize`] picks one representative
//! per orbit so that minima can be compared coordinate by coordinate.
//!
//! Canonical form, layer by layer from the input side:
//! 1. each unit is sign-flipped so the first largest-magnitude entry of its
//!    incoming weight vector is positive (all-zero incoming weights defer to
//!    the bias, then the outgoing weights, then `+1`);
//! 2. units are sorted by descending Euclidean norm of incoming weights plus
//!    bias. Norms within [`SORT_TOLERANCE`] compare lexicographically on
//!    (incoming, bias, outgoing), larger first.
//!
//! Near-ties in step 2 can make the representative depend on the input
//! ordering; [`are_equivalent`] guards against that for small single-layer
//! groups by falling back to enumerating the whole group.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::max_abs_diff;
use crate::model::Architecture;

pub const SORT_TOLERANCE: f64 = 1e-9;

/// Largest hidden width for which [`are_equivalent`] will enumerate the group.
pub const ENUMERATION_MAX_WIDTH: usize = 6;

/// Action on one hidden layer: new unit `j` is old unit `perm[j]`, multiplied
/// by `signs[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerAction {
    pub perm: Vec<usize>,
    pub signs: Vec<i8>,
}

impl LayerAction {
    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
            signs: vec![1; n],
        }
    }

    fn is_valid(&self) -> bool {
        let n = self.perm.len();
        let mut seen = vec![false; n];
        for &p in &self.perm {
            if p >= n || seen[p] {
                return false;
            }
            seen[p] = true;
        }
        self.signs.len() == n && self.signs.iter().all(|&s| s == 1 || s == -1)
    }
}

/// An element of the hidden-unit symmetry group: one action per hidden layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupElement {
    pub layers: Vec<LayerAction>,
}

impl GroupElement {
    pub fn identity(arch: &Architecture) -> Self {
        Self {
            layers: arch
                .hidden_layers()
                .iter()
                .map(|&n| LayerAction::identity(n))
                .collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        let layers = arch
            .hidden_layers()
            .iter()
            .map(|&n| {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(rng);
                let signs = (0..n)
                    .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
                    .collect();
                LayerAction { perm, signs }
            })
            .collect();
        Self { layers }
    }

    pub fn check(&self, arch: &Architecture) -> Result<()> {
        let hidden = arch.hidden_layers();
        if self.layers.len() != hidden.len() {
            return Err(Error::DimensionMismatch {
                what: "group element layers",
                expected: hidden.len(),
                found: self.layers.len(),
            });
        }
        for (action, &n) in self.layers.iter().zip(hidden) {
            if action.perm.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "group element width",
                    expected: n,
                    found: action.perm.len(),
                });
            }
            if !action.is_valid() {
                return Err(Error::InvalidConfig(
                    "group element is not a signed permutation".into(),
                ));
            }
        }
        Ok(())
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(g, h)| LayerAction {
                perm: g.perm.iter().map(|&pj| h.perm[pj]).collect(),
                signs: g
                    .perm
                    .iter()
                    .zip(&g.signs)
                    .map(|(&pj, &s)| s * h.signs[pj])
                    .collect(),
            })
            .collect();
        Self { layers }
    }

    pub fn inverse(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|g| {
                let n = g.perm.len();
                let mut perm = vec![0; n];
                let mut signs = vec![1; n];
                for (j, &pj) in g.perm.iter().enumerate() {
                    perm[pj] = j;
                    signs[pj] = g.signs[j];
                }
                LayerAction { perm, signs }
            })
            .collect();
        Self { layers }
    }
}

/// `prod_l n_l! * 2^{n_l}` over the hidden layers.
pub fn group_order(arch: &Architecture) -> BigUint {
    let mut order = BigUint::from(1u32);
    for &n in arch.hidden_layers() {
        for k in 2..=n {
            order *= BigUint::from(k);
        }
        order <<= n;
    }
    order
}

/// Every element of the group, when it has at most `limit` elements.
pub fn all_elements(arch: &Architecture, limit: usize) -> Option<Vec<GroupElement>> {
    let order = group_order(arch);
    if order > BigUint::from(limit) {
        return None;
    }
    let per_layer: Vec<Vec<LayerAction>> = arch
        .hidden_layers()
        .iter()
        .map(|&n| layer_actions(n))
        .collect();
    let mut out = vec![GroupElement { layers: Vec::new() }];
    for actions in per_layer {
        let mut next = Vec::with_capacity(out.len() * actions.len());
        for g in &out {
            for a in &actions {
                let mut layers = g.layers.clone();
                layers.push(a.clone());
                next.push(GroupElement { layers });
            }
        }
        out = next;
    }
    Some(out)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..n {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

fn layer_actions(n: usize) -> Vec<LayerAction> {
    let mut out = Vec::new();
    for perm in permutations(n) {
        for mask in 0u32..(1 << n) {
            let signs = (0..n)
                .map(|j| if mask >> j & 1 == 1 { -1 } else { 1 })
                .collect();
            out.push(LayerAction {
                perm: perm.clone(),
                signs,
            });
        }
    }
    out
}

/// Applies `action` to hidden layer `layer` (1-based) of `params` in place:
/// rows of weight layer `layer` and columns of weight layer `layer + 1`.
fn act_on_layer(arch: &Architecture, params: &mut [f64], layer: usize, action: &LayerAction) {
    let (units, fan_in, offset) = arch.layer_block(layer);
    let row = fan_in + 1;
    let old: Vec<f64> = params[offset..offset + units * row].to_vec();
    for (j, (&src, &s)) in action.perm.iter().zip(&action.signs).enumerate() {
        let s = f64::from(s);
        for f in 0..row {
            params[offset + j * row + f] = s * old[src * row + f];
        }
    }

    let (next_units, next_fan_in, next_offset) = arch.layer_block(layer + 1);
    let next_row = next_fan_in + 1;
    for k in 0..next_units {
        let base = next_offset + k * next_row;
        let old: Vec<f64> = params[base..base + next_fan_in].to_vec();
        for (j, (&src, &s)) in action.perm.iter().zip(&action.signs).enumerate() {
            params[base + j] = f64::from(s) * old[src];
        }
    }
}

/// Image of `params` under `g`. The network function is unchanged.
pub fn apply_symmetry(arch: &Architecture, params: &[f64], g: &GroupElement) -> Result<Vec<f64>> {
    arch.check_params(params)?;
    g.check(arch)?;
    let mut out = params.to_vec();
    for (l, action) in g.layers.iter().enumerate() {
        act_on_layer(arch, &mut out, l + 1, action);
    }
    Ok(out)
}

fn sign_of_first_largest(values: &[f64]) -> Option<i8> {
    let mut best: Option<f64> = None;
    for &v in values {
        if v != 0.0 && best.is_none_or(|b| v.abs() > b.abs()) {
            best = Some(v);
        }
    }
    best.map(|b| if b > 0.0 { 1 } else { -1 })
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Signed-permutation that canonicalizes hidden layer `layer` of `params`,
/// assuming all earlier layers are already canonical.
fn canonical_action(arch: &Architecture, params: &[f64], layer: usize) -> LayerAction {
    let (units, fan_in, offset) = arch.layer_block(layer);
    let row = fan_in + 1;
    let (next_units, next_fan_in, next_offset) = arch.layer_block(layer + 1);
    let outgoing = |j: usize| -> Vec<f64> {
        (0..next_units)
            .map(|k| params[next_offset + k * (next_fan_in + 1) + j])
            .collect()
    };

    let mut signs = Vec::with_capacity(units);
    let mut keys: Vec<(f64, Vec<f64>)> = Vec::with_capacity(units);
    for j in 0..units {
        let incoming = &params[offset + j * row..offset + j * row + fan_in];
        let bias = params[offset + j * row + fan_in];
        let out = outgoing(j);
        let s = sign_of_first_largest(incoming)
            .or_else(|| sign_of_first_largest(&[bias]))
            .or_else(|| sign_of_first_largest(&out))
            .unwrap_or(1);
        signs.push(s);
        let sf = f64::from(s);
        let mut key: Vec<f64> = params[offset + j * row..offset + (j + 1) * row]
            .iter()
            .map(|v| sf * v)
            .collect();
        let norm = libm::sqrt(key.iter().map(|v| v * v).sum());
        key.extend(out.iter().map(|v| sf * v));
        keys.push((norm, key));
    }

    let before = |a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)| -> bool {
        if (a.0 - b.0).abs() > SORT_TOLERANCE {
            a.0 > b.0
        } else {
            lexicographic(&a.1, &b.1) == Ordering::Greater
        }
    };
    // Stable insertion sort: the comparator is not a strict weak order near
    // ties, so avoid the standard sort's consistency requirements.
    let mut order: Vec<usize> = (0..units).collect();
    for i in 1..units {
        let mut k = i;
        while k > 0 && before(&keys[order[k]], &keys[order[k - 1]]) {
            order.swap(k, k - 1);
            k -= 1;
        }
    }
    LayerAction {
        signs: order.iter().map(|&j| signs[j]).collect(),
        perm: order,
    }
}

/// The canonical representative of the orbit of `params`.
pub fn canonicalize(arch: &Architecture, params: &[f64]) -> Result<Vec<f64>> {
    arch.check_params(params)?;
    let mut out = params.to_vec();
    for layer in 1..=arch.hidden_layers().len() {
        let action = canonical_action(arch, &out, layer);
        act_on_layer(arch, &mut out, layer, &action);
    }
    Ok(out)
}

/// True when the canonical forms agree within `tol` in the infinity norm.
pub fn are_equivalent(arch: &Architecture, p1: &[f64], p2: &[f64], tol: f64) -> Result<bool> {
    let c1 = canonicalize(arch, p1)?;
    let c2 = canonicalize(arch, p2)?;
    are_equivalent_canonical(arch, &c1, &c2, tol)
}

/// [`are_equivalent`] for vectors that are already canonical.
pub fn are_equivalent_canonical(
    arch: &Architecture,
    c1: &[f64],
    c2: &[f64],
    tol: f64,
) -> Result<bool> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(
            "equivalence tolerance must be positive".into(),
        ));
    }
    arch.check_params(c1)?;
    arch.check_params(c2)?;
    let d = max_abs_diff(c1, c2);
    if d <= tol {
        return Ok(true);
    }
    let hidden = arch.hidden_layers();
    if d - tol < 10.0 * tol && hidden.len() == 1 && hidden[0] <= ENUMERATION_MAX_WIDTH {
        return Ok(orbit_distance(arch, c1, c2) <= tol);
    }
    Ok(false)
}

/// `min_g |p1 - g(p2)|_inf` by enumerating the group (single hidden layer,
/// small widths only).
pub fn orbit_distance(arch: &Architecture, p1: &[f64], p2: &[f64]) -> f64 {
    let Some(elements) = all_elements(arch, 50_000) else {
        return max_abs_diff(p1, p2);
    };
    elements
        .iter()
        .filter_map(|g| apply_symmetry(arch, p2, g).ok())
        .map(|img| max_abs_diff(p1, &img))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::forward;
    use crate::rng::rng_from_seed;

    fn random_params(arch: &Architecture, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..arch.parameter_count())
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect()
    }

    #[test]
    fn group_orders() {
        let cases = [
            ("2-5-2", 3840u64),
            ("29-3-2", 48),
            ("2-2-2-2", 64),
            ("4-1-3", 2),
        ];
        for (spec, order) in cases {
            assert_eq!(
                group_order(&Architecture::parse(spec).unwrap()),
                BigUint::from(order),
                "{spec}"
            );
        }
        let big = Architecture::parse("2-30-2").unwrap();
        // 30! * 2^30 overflows u64
        assert!(group_order(&big) > BigUint::from(u64::MAX));
    }

    #[test]
    fn identity_and_inverse() {
        let arch = Architecture::parse("3-4-3-2").unwrap();
        let p = random_params(&arch, 1);
        assert_eq!(
            apply_symmetry(&arch, &p, &GroupElement::identity(&arch)).unwrap(),
            p
        );
        let mut rng = rng_from_seed(2);
        for _ in 0..20 {
            let g = GroupElement::random(&arch, &mut rng);
            let q = apply_symmetry(&arch, &p, &g).unwrap();
            let back = apply_symmetry(&arch, &q, &g.inverse()).unwrap();
            assert!(max_abs_diff(&p, &back) <= 1e-15);
        }
    }

    #[test]
    fn composition_matches_sequential_application() {
        let arch = Architecture::parse("3-4-3-2").unwrap();
        let p = random_params(&arch, 5);
        let mut rng = rng_from_seed(6);
        for _ in 0..20 {
            let g = GroupElement::random(&arch, &mut rng);
            let h = GroupElement::random(&arch, &mut rng);
            let seq = apply_symmetry(&arch, &apply_symmetry(&arch, &p, &h).unwrap(), &g).unwrap();
            let gh = g.compose(&h);
            gh.check(&arch).unwrap();
            assert_eq!(apply_symmetry(&arch, &p, &gh).unwrap(), seq);
        }
    }

    #[test]
    fn preserves_network_function() {
        for spec in ["2-5-2", "3-4-3-2"] {
            let arch = Architecture::parse(spec).unwrap();
            let p = random_params(&arch, 7);
            let mut rng = rng_from_seed(8);
            let rows: Vec<Vec<f64>> = (0..16)
                .map(|_| {
                    (0..arch.input_dim())
                        .map(|_| rng.gen_range(-3.0..3.0))
                        .collect()
                })
                .collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let base = forward(&arch, &p, &x).unwrap();
            for _ in 0..10 {
                let g = GroupElement::random(&arch, &mut rng);
                let img = forward(&arch, &apply_symmetry(&arch, &p, &g).unwrap(), &x).unwrap();
                assert!(base.max_abs_diff(&img) < 1e-12);
            }
        }
    }

    #[test]
    fn canonical_form_is_orbit_constant_and_idempotent() {
        for spec in ["2-5-2", "3-4-3-2", "29-3-2"] {
            let arch = Architecture::parse(spec).unwrap();
            let p = random_params(&arch, 10);
            let c = canonicalize(&arch, &p).unwrap();
            assert_eq!(canonicalize(&arch, &c).unwrap(), c);
            let mut rng = rng_from_seed(11);
            for _ in 0..100 {
                let g = GroupElement::random(&arch, &mut rng);
                let img = apply_symmetry(&arch, &p, &g).unwrap();
                assert!(max_abs_diff(&canonicalize(&arch, &img).unwrap(), &c) <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_incoming_weights_use_bias_then_outgoing() {
        let arch = Architecture::parse("1-2-2").unwrap();
        // unit 1: w=0, b=-0.5; unit 2: w=0, b=0, outgoing (-0.3, 0.1)
        let p = [0.0, -0.5, 0.0, 0.0, 1.0, -0.3, 0.0, 2.0, 0.1, 0.0];
        let c = canonicalize(&arch, &p).unwrap();
        assert_eq!(c[1], 0.5);
        let q = apply_symmetry(
            &arch,
            &p,
            &GroupElement {
                layers: vec![LayerAction {
                    perm: vec![1, 0],
                    signs: vec![-1, -1],
                }],
            },
        )
        .unwrap();
        assert_eq!(canonicalize(&arch, &q).unwrap(), c);
        // outgoing of the all-zero unit made positive in its first largest entry
        let zero_unit = if c[1] == 0.0 { 0 } else { 1 };
        let out: Vec<f64> = (0..2).map(|k| c[4 + k * 3 + zero_unit]).collect();
        assert_eq!(out, vec![0.3, -0.1]);
    }

    #[test]
    fn equivalence() {
        let arch = Architecture::parse("2-5-2").unwrap();
        let p = random_params(&arch, 20);
        let mut rng = rng_from_seed(21);
        let g = GroupElement::random(&arch, &mut rng);
        let q = apply_symmetry(&arch, &p, &g).unwrap();
        assert!(are_equivalent(&arch, &p, &q, 1e-10).unwrap());
        assert!(are_equivalent(&arch, &p, &p, 1e-300).unwrap());
        let far: Vec<f64> = p.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
        assert!(!are_equivalent(&arch, &p, &far, 1e-4).unwrap());
        assert!(are_equivalent(&arch, &p, &q, 0.0).is_err());
    }

    #[test]
    fn enumeration_sizes() {
        let arch = Architecture::parse("2-3-2").unwrap();
        assert_eq!(all_elements(&arch, 1000).unwrap().len(), 48);
        assert!(all_elements(&Architecture::parse("2-9-2").unwrap(), 1000).is_none());
        let two = Architecture::parse("2-2-2-2").unwrap();
        let all = all_elements(&two, 1000).unwrap();
        assert_eq!(all.len(), 64);
        let mut uniq = all.clone();
        uniq.sort_by(|a, b| alloc::format!("{a:?}").cmp(&alloc::format!("{b:?}")));
        uniq.dedup();
        assert_eq!(uniq.len(), 64);
    }
}
