//! Basin hopping: perturb the current anchor, quench, and accept or reject
//! the quenched minimum with a Metropolis test on the minimized losses.

use alloc::vec::Vec;

use rand::Rng as _;

use super::lbfgs::{minimize, MinimizeConfig, MinimizeOutcome};
use crate::error::{Error, Result};
use crate::landscape::{LandscapeDatabase, MinimumCandidate};
use crate::objective::{NetObjective, Objective};
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasinHopConfig {
    pub n_steps: usize,
    /// Half-width of the per-coordinate uniform displacement.
    pub perturbation_scale: f64,
    /// Metropolis temperature in loss units.
    pub metropolis_temperature: f64,
    pub seed: u64,
}

impl Default for BasinHopConfig {
    fn default() -> Self {
        Self {
            n_steps: 2000,
            perturbation_scale: 0.8,
            metropolis_temperature: 0.05,
            seed: 0,
        }
    }
}

impl BasinHopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.perturbation_scale > 0.0) || !(self.metropolis_temperature > 0.0) {
            return Err(Error::InvalidConfig(
                "perturbation_scale and metropolis_temperature must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Metropolis rule on minimized losses: downhill (or level) moves always
/// pass, uphill ones pass when `uniform < exp(-(proposed - current) / T)`.
pub fn metropolis_accept(current: f64, proposed: f64, temperature: f64, uniform: f64) -> bool {
    proposed <= current || uniform < libm::exp(-(proposed - current) / temperature)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    Rejected,
    /// The quench hit the iteration cap or a non-finite loss.
    Unconverged,
}

/// One basin-hopping walker's history.
#[derive(Debug, Clone, Default)]
pub struct Walk {
    /// Converged quenches in discovery order (step 0 is the initial quench).
    pub minima: Vec<(usize, MinimizeOutcome)>,
    pub outcomes: Vec<StepOutcome>,
}

impl Walk {
    pub fn count(&self, outcome: StepOutcome) -> usize {
        self.outcomes.iter().filter(|&&o| o == outcome).count()
    }
}

fn quench<O: Objective + ?Sized>(
    obj: &O,
    start: &[f64],
    cfg: &MinimizeConfig,
) -> Result<Option<MinimizeOutcome>> {
    match minimize(obj, start, cfg) {
        Ok(out) => Ok(Some(out)),
        Err(Error::NonFiniteLoss { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs a single walker. The anchor is the last accepted minimum; the start
/// point is uniform in `[-1, 1]^P` drawn from the walker's seed.
pub fn walk<O: Objective + ?Sized>(
    obj: &O,
    cfg: &BasinHopConfig,
    min_cfg: &MinimizeConfig,
) -> Result<Walk> {
    cfg.validate()?;
    min_cfg.validate()?;
    let mut rng: Rng = rng_from_seed(cfg.seed);
    let dim = obj.dim();
    let start: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();

    let mut walk = Walk::default();
    let mut anchor = match quench(obj, &start, min_cfg)? {
        Some(out) => {
            if out.converged {
                walk.minima.push((0, out.clone()));
                walk.outcomes.push(StepOutcome::Accepted);
            } else {
                walk.outcomes.push(StepOutcome::Unconverged);
            }
            (out.params, out.loss)
        }
        None => {
            walk.outcomes.push(StepOutcome::Unconverged);
            let loss = obj.value(&start).unwrap_or(f64::INFINITY);
            (start, loss)
        }
    };

    let mut proposal = alloc::vec![0.0; dim];
    for step in 1..=cfg.n_steps {
        for (p, a) in proposal.iter_mut().zip(&anchor.0) {
            *p = a + rng.gen_range(-cfg.perturbation_scale..=cfg.perturbation_scale);
        }
        let uniform: f64 = rng.gen();
        let out = match quench(obj, &proposal, min_cfg)? {
            Some(out) if out.converged => out,
            _ => {
                walk.outcomes.push(StepOutcome::Unconverged);
                continue;
            }
        };
        let accept = metropolis_accept(anchor.1, out.loss, cfg.metropolis_temperature, uniform);
        if accept {
            anchor = (out.params.clone(), out.loss);
        }
        walk.minima.push((step, out));
        walk.outcomes.push(if accept {
            StepOutcome::Accepted
        } else {
            StepOutcome::Rejected
        });
    }
    Ok(walk)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BasinHopSummary {
    pub steps: usize,
    pub converged_quenches: usize,
    pub new_minima: usize,
    pub accepted: usize,
    pub unconverged: usize,
}

/// Pushes every converged quench of `walk` through the database's dedup.
pub fn merge_walk(
    obj: &NetObjective<'_>,
    walk: &Walk,
    db: &mut LandscapeDatabase,
) -> Result<BasinHopSummary> {
    let fp = obj.fingerprint();
    let mut summary = BasinHopSummary {
        steps: walk.outcomes.len(),
        accepted: walk.count(StepOutcome::Accepted),
        unconverged: walk.count(StepOutcome::Unconverged),
        ..Default::default()
    };
    for (_, out) in &walk.minima {
        summary.converged_quenches += 1;
        let (_, new) = db.insert_minimum(fp, MinimumCandidate::from_outcome(out))?;
        summary.new_minima += usize::from(new);
    }
    Ok(summary)
}

/// Single-walker basin hopping into `db`.
pub fn basin_hop(
    obj: &NetObjective<'_>,
    cfg: &BasinHopConfig,
    min_cfg: &MinimizeConfig,
    db: &mut LandscapeDatabase,
) -> Result<BasinHopSummary> {
    db.check_fingerprint(obj.fingerprint())?;
    let w = walk(obj, cfg, min_cfg)?;
    merge_walk(obj, &w, db)
}
