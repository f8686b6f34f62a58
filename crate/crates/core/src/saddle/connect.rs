//! Greedy connection of a landscape database: join the closest pair of
//! minima lying in different components until one component remains or the
//! attempt budget is spent.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use super::band::{band_search, BandConfig};
use super::refine::{refine_ts, RefineConfig};
use crate::error::Result;
use crate::landscape::{LandscapeDatabase, MinimumCandidate, TsCandidate};
use crate::linalg::distance;
use crate::objective::NetObjective;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectConfig {
    /// Maximum number of pair attempts.
    pub budget: usize,
    pub band: BandConfig,
    pub refine: RefineConfig,
    /// Band maxima refined per attempt, highest first.
    pub max_candidates: usize,
}

impl Default for ConnectConfig {
    fn default() -> Self {
        Self {
            budget: 50,
            band: BandConfig::default(),
            refine: RefineConfig::default(),
            max_candidates: 3,
        }
    }
}

/// One pair attempt, as written to the run log.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptLog {
    pub min_a: u64,
    pub min_b: u64,
    pub ok: bool,
    /// Loss of the highest stored saddle above the lower endpoint; NaN on
    /// failure.
    pub barrier: f64,
    pub stored: Vec<u64>,
}

impl fmt::Display for AttemptLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let outcome = if self.ok { "ok" } else { "fail" };
        write!(
            f,
            "TS-ATTEMPT pair={},{} outcome={} barrier={}",
            self.min_a, self.min_b, outcome, self.barrier
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConnectSummary {
    pub attempts: usize,
    pub successes: usize,
    pub new_minima: usize,
    pub new_transition_states: usize,
    /// Components left when the search stopped.
    pub components: usize,
}

/// Closest untried pair of minima in different components, by Euclidean
/// distance between canonical coordinates; ties go to the smaller ids.
fn closest_pair(db: &LandscapeDatabase, tried: &BTreeSet<(u64, u64)>) -> Option<(u64, u64)> {
    let comps = db.components();
    if comps.len() < 2 {
        return None;
    }
    let comp_of: BTreeMap<u64, usize> = comps
        .iter()
        .enumerate()
        .flat_map(|(c, ids)| ids.iter().map(move |&id| (id, c)))
        .collect();
    let minima = db.minima();
    let mut best: Option<(f64, u64, u64)> = None;
    for (i, a) in minima.iter().enumerate() {
        for b in &minima[i + 1..] {
            let key = (a.id.min(b.id), a.id.max(b.id));
            if comp_of[&a.id] == comp_of[&b.id] || tried.contains(&key) {
                continue;
            }
            let d = distance(&a.params, &b.params);
            let better = match best {
                None => true,
                Some((bd, ba, bb)) => d < bd || (d == bd && key < (ba, bb)),
            };
            if better {
                best = Some((d, key.0, key.1));
            }
        }
    }
    best.map(|(_, a, b)| (a, b))
}

/// Runs band search plus refinement between closest cross-component pairs.
/// Endpoint quenches landing on unseen minima are inserted; saddles whose two
/// quenches reach the same minimum are dropped. A failed attempt is logged
/// and never retried.
pub fn connect_landscape(
    obj: &NetObjective<'_>,
    db: &mut LandscapeDatabase,
    cfg: &ConnectConfig,
    mut on_attempt: impl FnMut(&AttemptLog),
) -> Result<ConnectSummary> {
    let fp = obj.fingerprint();
    db.check_fingerprint(fp)?;
    cfg.band.validate()?;
    let mut summary = ConnectSummary::default();
    let mut tried = BTreeSet::new();

    while summary.attempts < cfg.budget {
        let Some((a, b)) = closest_pair(db, &tried) else {
            break;
        };
        tried.insert((a, b));
        summary.attempts += 1;
        let pa = db.minimum(a).expect("pair from db").params.clone();
        let pb = db.minimum(b).expect("pair from db").params.clone();
        let mut log = AttemptLog {
            min_a: a,
            min_b: b,
            ok: false,
            barrier: f64::NAN,
            stored: Vec::new(),
        };

        let candidates = match band_search(obj, &pa, &pb, &cfg.band) {
            Ok(out) => out.candidates,
            Err(e) => {
                log::debug!("band {a}-{b} failed: {e}");
                Vec::new()
            }
        };
        for cand in candidates.iter().take(cfg.max_candidates) {
            let saddle = match refine_ts(obj, &cand.params, &cfg.refine) {
                Ok(s) => s,
                Err(e) => {
                    log::debug!(
                        "refinement from image {} of {a}-{b} failed: {e}",
                        cand.image
                    );
                    continue;
                }
            };
            let mut ends = [0u64; 2];
            for (slot, quench) in ends.iter_mut().zip([&saddle.plus, &saddle.minus]) {
                let (id, new) = db.insert_minimum(fp, MinimumCandidate::from_outcome(quench))?;
                summary.new_minima += usize::from(new);
                *slot = id;
            }
            if ends[0] == ends[1] {
                log::debug!(
                    "saddle at loss {} returns to minimum {} on both sides; dropped",
                    saddle.loss,
                    ends[0]
                );
                continue;
            }
            let (id, new) = db.insert_transition_state(
                fp,
                TsCandidate {
                    params: saddle.params,
                    loss: saddle.loss,
                    grad_norm: saddle.grad_norm,
                    negative_eigenvalue: saddle.negative_eigenvalue,
                    min_a: ends[0],
                    min_b: ends[1],
                },
            )?;
            summary.new_transition_states += usize::from(new);
            let floor = f64::min(saddle.plus.loss, saddle.minus.loss);
            let barrier = saddle.loss - floor;
            if !log.ok || barrier > log.barrier {
                log.barrier = barrier;
            }
            log.ok = true;
            log.stored.push(id);
        }
        summary.successes += usize::from(log.ok);
        on_attempt(&log);
    }
    summary.components = db.components().len();
    Ok(summary)
}
