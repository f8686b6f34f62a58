//! The landscape database (deduplicated minima and transition states) and
//! the disconnectivity graph built from it.

mod graph;
mod union_find;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

pub use graph::{
    build_disconnectivity, parse_label, DisconnectivityGraph, GraphNode, DEFAULT_LEVELS,
};
pub use union_find::DisjointSet;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::optim::MinimizeOutcome;
use crate::rng::{fnv1a, fnv1a_extend};
use crate::symmetry::{are_equivalent_canonical, canonicalize};

/// Infinity-norm tolerance under which two canonical vectors are the same
/// stationary point.
pub const DEDUP_TOL: f64 = 1e-4;

/// Loss definition tag folded into every fingerprint.
pub const LOSS_TAG: &str = "mean-softmax-cross-entropy/tanh";

/// Identity of a loss surface: architecture, dataset content and loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub u64);

impl Fingerprint {
    /// Fingerprint of the unpenalized loss.
    pub fn of(arch: &Architecture, data: &Dataset) -> Self {
        Self::of_loss(arch, data, 0.0)
    }

    /// Fingerprint of the loss with weight penalty `l2`; a zero penalty
    /// hashes exactly like [`Fingerprint::of`].
    pub fn of_loss(arch: &Architecture, data: &Dataset, l2: f64) -> Self {
        let mut h = fnv1a(LOSS_TAG.as_bytes());
        h = fnv1a_extend(h, arch.activation().name().as_bytes());
        for k in 0..=arch.layer_count() {
            h = fnv1a_extend(h, &(arch.width(k) as u64).to_le_bytes());
        }
        h = fnv1a_extend(h, &data.digest().to_le_bytes());
        if l2 != 0.0 {
            h = fnv1a_extend(h, b"l2");
            h = fnv1a_extend(h, &l2.to_bits().to_le_bytes());
        }
        Fingerprint(h)
    }
}

impl core::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub id: u64,
    /// Canonical orbit representative.
    pub params: Vec<f64>,
    pub loss: f64,
    /// Gradient infinity norm when stored.
    pub grad_norm: f64,
    pub discovery_count: u64,
    /// Lowest Hessian eigenvalue, when it has been computed.
    pub min_hessian_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionState {
    pub id: u64,
    /// Canonical orbit representative.
    pub params: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub negative_eigenvalue: f64,
    pub min_a: u64,
    pub min_b: u64,
}

impl TransitionState {
    pub fn joins(&self, a: u64, b: u64) -> bool {
        (self.min_a == a && self.min_b == b) || (self.min_a == b && self.min_b == a)
    }
}

/// A converged local minimization waiting to be deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimumCandidate {
    pub params: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub min_hessian_eigenvalue: Option<f64>,
}

impl MinimumCandidate {
    pub fn from_outcome(out: &MinimizeOutcome) -> Self {
        Self {
            params: out.params.clone(),
            loss: out.loss,
            grad_norm: out.grad_norm,
            min_hessian_eigenvalue: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsCandidate {
    pub params: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub negative_eigenvalue: f64,
    pub min_a: u64,
    pub min_b: u64,
}

/// Deduplicated store of the stationary points of one loss surface. Ids
/// start at 1 and are never reused.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeDatabase {
    fingerprint: Fingerprint,
    arch: Architecture,
    minima: Vec<Minimum>,
    transition_states: Vec<TransitionState>,
    next_min_id: u64,
    next_ts_id: u64,
}

impl LandscapeDatabase {
    pub fn new(fingerprint: Fingerprint, arch: Architecture) -> Self {
        Self {
            fingerprint,
            arch,
            minima: Vec::new(),
            transition_states: Vec::new(),
            next_min_id: 1,
            next_ts_id: 1,
        }
    }

    /// Rebuilds a database from stored parts, checking referential integrity.
    pub fn from_parts(
        fingerprint: Fingerprint,
        arch: Architecture,
        minima: Vec<Minimum>,
        transition_states: Vec<TransitionState>,
        next_min_id: u64,
        next_ts_id: u64,
    ) -> Result<Self> {
        let mut ids = BTreeMap::new();
        for m in &minima {
            arch.check_params(&m.params)?;
            if m.id == 0 || m.id >= next_min_id || ids.insert(m.id, ()).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "bad or duplicate minimum id {}",
                    m.id
                )));
            }
        }
        let mut ts_ids = BTreeMap::new();
        for ts in &transition_states {
            arch.check_params(&ts.params)?;
            if ts.id == 0 || ts.id >= next_ts_id || ts_ids.insert(ts.id, ()).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "bad or duplicate transition state id {}",
                    ts.id
                )));
            }
            for end in [ts.min_a, ts.min_b] {
                if !ids.contains_key(&end) {
                    return Err(Error::UnknownMinimum(end));
                }
            }
        }
        Ok(Self {
            fingerprint,
            arch,
            minima,
            transition_states,
            next_min_id,
            next_ts_id,
        })
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn minima(&self) -> &[Minimum] {
        &self.minima
    }

    pub fn transition_states(&self) -> &[TransitionState] {
        &self.transition_states
    }

    pub fn next_ids(&self) -> (u64, u64) {
        (self.next_min_id, self.next_ts_id)
    }

    pub fn minimum(&self, id: u64) -> Option<&Minimum> {
        self.minima.iter().find(|m| m.id == id)
    }

    pub fn minimum_mut(&mut self, id: u64) -> Option<&mut Minimum> {
        self.minima.iter_mut().find(|m| m.id == id)
    }

    pub fn check_fingerprint(&self, fp: Fingerprint) -> Result<()> {
        if fp != self.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.fingerprint.0,
                found: fp.0,
            });
        }
        Ok(())
    }

    /// Lowest-loss minimum, lowest id on ties.
    pub fn global_minimum(&self) -> Option<&Minimum> {
        self.minima
            .iter()
            .min_by(|a, b| a.loss.total_cmp(&b.loss).then(a.id.cmp(&b.id)))
    }

    /// Id of a stored minimum orbit-equivalent to the canonical vector `c`.
    pub fn find_minimum(&self, c: &[f64]) -> Result<Option<u64>> {
        for m in &self.minima {
            if are_equivalent_canonical(&self.arch, &m.params, c, DEDUP_TOL)? {
                return Ok(Some(m.id));
            }
        }
        Ok(None)
    }

    /// Canonicalizes and inserts, or bumps the discovery count of an
    /// orbit-equivalent entry. Deduplication is geometric, never by loss.
    pub fn insert_minimum(
        &mut self,
        fp: Fingerprint,
        candidate: MinimumCandidate,
    ) -> Result<(u64, bool)> {
        self.check_fingerprint(fp)?;
        let c = canonicalize(&self.arch, &candidate.params)?;
        if let Some(id) = self.find_minimum(&c)? {
            let m = self.minimum_mut(id).expect("id just found");
            m.discovery_count += 1;
            if m.min_hessian_eigenvalue.is_none() {
                m.min_hessian_eigenvalue = candidate.min_hessian_eigenvalue;
            }
            return Ok((id, false));
        }
        let id = self.next_min_id;
        self.next_min_id += 1;
        self.minima.push(Minimum {
            id,
            params: c,
            loss: candidate.loss,
            grad_norm: candidate.grad_norm,
            discovery_count: 1,
            min_hessian_eigenvalue: candidate.min_hessian_eigenvalue,
        });
        Ok((id, true))
    }

    /// Inserts a transition state unless one with the same endpoint pair and
    /// equivalent coordinates is already stored.
    pub fn insert_transition_state(
        &mut self,
        fp: Fingerprint,
        candidate: TsCandidate,
    ) -> Result<(u64, bool)> {
        self.check_fingerprint(fp)?;
        for end in [candidate.min_a, candidate.min_b] {
            if self.minimum(end).is_none() {
                return Err(Error::UnknownMinimum(end));
            }
        }
        if candidate.min_a == candidate.min_b {
            return Err(Error::InvalidConfig(format!(
                "transition state joins minimum {} to itself",
                candidate.min_a
            )));
        }
        let c = canonicalize(&self.arch, &candidate.params)?;
        for ts in &self.transition_states {
            if ts.joins(candidate.min_a, candidate.min_b)
                && are_equivalent_canonical(&self.arch, &ts.params, &c, DEDUP_TOL)?
            {
                return Ok((ts.id, false));
            }
        }
        let id = self.next_ts_id;
        self.next_ts_id += 1;
        let (min_a, min_b) = (
            candidate.min_a.min(candidate.min_b),
            candidate.min_a.max(candidate.min_b),
        );
        self.transition_states.push(TransitionState {
            id,
            params: c,
            loss: candidate.loss,
            grad_norm: candidate.grad_norm,
            negative_eigenvalue: candidate.negative_eigenvalue,
            min_a,
            min_b,
        });
        Ok((id, true))
    }

    fn index_of(&self) -> BTreeMap<u64, usize> {
        self.minima
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id, i))
            .collect()
    }

    /// Groups of minima with loss `<= epsilon` joined through transition
    /// states with loss `<= epsilon`. Members are ordered by (loss, id) and
    /// groups by their first member.
    pub fn superbasins_at(&self, epsilon: f64) -> Vec<Vec<u64>> {
        self.components_where(|loss| loss <= epsilon)
    }

    /// Connected components over all stored transition states, regardless of
    /// energy.
    pub fn components(&self) -> Vec<Vec<u64>> {
        self.components_where(|_| true)
    }

    fn components_where(&self, keep: impl Fn(f64) -> bool) -> Vec<Vec<u64>> {
        let index = self.index_of();
        let mut sets = DisjointSet::new(self.minima.len());
        for ts in &self.transition_states {
            let (a, b) = (index[&ts.min_a], index[&ts.min_b]);
            if keep(ts.loss) && keep(self.minima[a].loss) && keep(self.minima[b].loss) {
                sets.union(a, b);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, m) in self.minima.iter().enumerate() {
            if keep(m.loss) {
                groups.entry(sets.find(i)).or_default().push(i);
            }
        }
        let by_loss = |&a: &usize, &b: &usize| {
            let (ma, mb) = (&self.minima[a], &self.minima[b]);
            ma.loss.total_cmp(&mb.loss).then(ma.id.cmp(&mb.id))
        };
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        for g in &mut out {
            g.sort_by(by_loss);
        }
        out.sort_by(|a, b| by_loss(&a[0], &b[0]));
        out.into_iter()
            .map(|g| g.into_iter().map(|i| self.minima[i].id).collect())
            .collect()
    }

    pub fn build_disconnectivity(&self, n_levels: usize) -> Result<DisconnectivityGraph> {
        build_disconnectivity(self, n_levels)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use alloc::vec;

    /// Database over a `1-1-2` net (6 parameters) with hand-placed minima and
    /// transition states; parameters are far apart so nothing dedups.
    pub fn synthetic(min_losses: &[f64], ts: &[(usize, usize, f64)]) -> LandscapeDatabase {
        let arch = Architecture::parse("1-1-2").unwrap();
        let fp = Fingerprint(42);
        let mut db = LandscapeDatabase::new(fp, arch);
        for (i, &loss) in min_losses.iter().enumerate() {
            let x = 1.0 + i as f64;
            let cand = MinimumCandidate {
                params: vec![x, 0.5, 0.1, 0.2, 0.3, 0.4],
                loss,
                grad_norm: 0.0,
                min_hessian_eigenvalue: None,
            };
            let (_, new) = db.insert_minimum(fp, cand).unwrap();
            assert!(new);
        }
        for (k, &(a, b, loss)) in ts.iter().enumerate() {
            let cand = TsCandidate {
                params: vec![-5.0 - k as f64, 0.5, 0.0, 0.0, 0.0, 0.0],
                loss,
                grad_norm: 0.0,
                negative_eigenvalue: -1.0,
                min_a: a as u64 + 1,
                min_b: b as u64 + 1,
            };
            db.insert_transition_state(fp, cand).unwrap();
        }
        db
    }

    /// Minima A(0.1), B(0.2), C(0.3); TS(A,B) = 0.5, TS(B,C) = 0.9.
    pub fn abc() -> LandscapeDatabase {
        synthetic(&[0.1, 0.2, 0.3], &[(0, 1, 0.5), (1, 2, 0.9)])
    }
}
