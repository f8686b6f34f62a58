//! Conserved weights inside disconnectivity-graph groups, their mapping onto
//! input features, and ablation experiments that test whether they matter.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::landscape::{DisconnectivityGraph, LandscapeDatabase};
use crate::model::{Architecture, EdgeIndex};
use crate::objective::NetObjective;
use crate::rng::{derive_indexed, rng_from_seed};

/// Threshold used for the headline reports.
pub const DEFAULT_SIGMA_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ConservedWeight {
    pub edge: EdgeIndex,
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservedWeightReport {
    pub group_label: String,
    /// Member minimum ids, best first.
    pub members: Vec<u64>,
    pub sigma_threshold: f64,
    /// Coordinates with population sigma below the threshold, by ascending
    /// sigma then edge order.
    pub conserved: Vec<ConservedWeight>,
    /// Single-member group: every coordinate passes with sigma 0.
    pub trivially_conserved: bool,
}

impl ConservedWeightReport {
    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    pub fn edges(&self) -> Vec<EdgeIndex> {
        self.conserved.iter().map(|c| c.edge).collect()
    }
}

/// Population mean and standard deviation.
fn mean_sigma(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// Per-coordinate spread of the canonical parameters of every minimum in
/// group `level_index`, keeping the coordinates with sigma below `n`.
pub fn conserved_weights(
    db: &LandscapeDatabase,
    graph: &DisconnectivityGraph,
    level: usize,
    index: usize,
    n: f64,
) -> Result<ConservedWeightReport> {
    if !(n >= 0.0) {
        return Err(Error::InvalidConfig(
            "sigma threshold must be non-negative".into(),
        ));
    }
    let node = graph
        .node(level, index)
        .ok_or(Error::UnknownGroup { level, index })?;
    let arch = db.arch();
    let members: Vec<&[f64]> = node
        .members
        .iter()
        .map(|&id| {
            db.minimum(id)
                .map(|m| m.params.as_slice())
                .ok_or(Error::UnknownMinimum(id))
        })
        .collect::<Result<_>>()?;

    let mut conserved = Vec::new();
    let mut column = Vec::with_capacity(members.len());
    for pos in 0..arch.parameter_count() {
        column.clear();
        column.extend(members.iter().map(|p| p[pos]));
        let (mean, sigma) = mean_sigma(&column);
        if sigma < n {
            conserved.push(ConservedWeight {
                edge: arch.edge_of(pos).expect("position in range"),
                mean,
                sigma,
            });
        }
    }
    conserved.sort_by(|a, b| a.sigma.total_cmp(&b.sigma).then(a.edge.cmp(&b.edge)));
    Ok(ConservedWeightReport {
        group_label: node.label(),
        members: node.members.clone(),
        sigma_threshold: n,
        conserved,
        trivially_conserved: node.members.len() == 1,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputRelevance {
    /// 1-based input node.
    pub input: usize,
    pub edges: Vec<EdgeIndex>,
}

/// Conserved first-layer weights grouped by the input they leave from, most
/// edges first.
pub fn input_relevance(report: &ConservedWeightReport, arch: &Architecture) -> Vec<InputRelevance> {
    let mut by_input: BTreeMap<usize, Vec<EdgeIndex>> = BTreeMap::new();
    for c in &report.conserved {
        let e = c.edge;
        if e.layer == 1 && !e.is_bias && e.from_node <= arch.input_dim() {
            by_input.entry(e.from_node).or_default().push(e);
        }
    }
    let mut out: Vec<InputRelevance> = by_input
        .into_iter()
        .map(|(input, mut edges)| {
            edges.sort();
            InputRelevance { input, edges }
        })
        .collect();
    out.sort_by(|a, b| {
        b.edges
            .len()
            .cmp(&a.edges.len())
            .then(a.input.cmp(&b.input))
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AblationMode {
    /// Permute the target values by a uniformly random non-identity
    /// permutation.
    Shuffle,
    /// Add a uniformly random direction supported on the targets, scaled to
    /// `norm`.
    Perturb { norm: f64 },
}

fn positions(arch: &Architecture, targets: &[EdgeIndex]) -> Result<Vec<usize>> {
    let mut pos = Vec::with_capacity(targets.len());
    for e in targets {
        let p = arch.position_of(e).ok_or_else(|| {
            Error::InvalidConfig(alloc::format!(
                "edge {e} is not in a {} net",
                arch.shorthand()
            ))
        })?;
        if pos.contains(&p) {
            return Err(Error::InvalidConfig(alloc::format!(
                "edge {e} listed twice"
            )));
        }
        pos.push(p);
    }
    Ok(pos)
}

/// Applies one ablation; returns the new parameters and the Euclidean norm
/// of the change.
pub fn ablate<R: rand::Rng + ?Sized>(
    arch: &Architecture,
    params: &[f64],
    targets: &[EdgeIndex],
    mode: AblationMode,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    arch.check_params(params)?;
    if targets.is_empty() {
        return Err(Error::EmptyTargetSet);
    }
    let pos = positions(arch, targets)?;
    let mut out = params.to_vec();
    match mode {
        AblationMode::Shuffle => {
            if pos.len() < 2 {
                return Err(Error::ShuffleTooSmall);
            }
            let identity: Vec<usize> = (0..pos.len()).collect();
            let mut perm = identity.clone();
            while perm == identity {
                perm.shuffle(rng);
            }
            for (k, &p) in pos.iter().enumerate() {
                out[p] = params[pos[perm[k]]];
            }
        }
        AblationMode::Perturb { norm } => {
            if !(norm >= 0.0) || !norm.is_finite() {
                return Err(Error::InvalidConfig(
                    "perturbation norm must be finite and non-negative".into(),
                ));
            }
            let dir: Vec<f64> = loop {
                let d: Vec<f64> = pos
                    .iter()
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                if d.iter().any(|v| *v != 0.0) {
                    break d;
                }
            };
            let len = libm::sqrt(dir.iter().map(|v| v * v).sum::<f64>());
            for (&p, d) in pos.iter().zip(&dir) {
                out[p] += norm * d / len;
            }
        }
    }
    let applied = libm::sqrt(
        out.iter()
            .zip(params)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>(),
    );
    Ok((out, applied))
}

/// Summary of one AUC distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Population standard deviation.
    pub stddev: f64,
}

/// Kahan-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

impl SummaryStats {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = compensated_sum(values.iter().copied()) / n;
        let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
        Some(Self {
            count: values.len(),
            mean,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            stddev: libm::sqrt(var),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTrial {
    pub ablated_auc: f64,
    /// Norm of the target shuffle, reused for the control.
    pub applied_norm: f64,
    pub control_auc: f64,
    pub control_set: Vec<EdgeIndex>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub group_label: String,
    /// Group minimum the ablations start from.
    pub minimum_id: u64,
    pub target_set: Vec<EdgeIndex>,
    pub mode: AblationMode,
    pub baseline_auc: f64,
    pub trials: Vec<AblationTrial>,
    /// Mean target-shuffle norm over the trials (0 without trials).
    pub perturbation_norm: f64,
    pub ablated_auc_stats: Option<SummaryStats>,
    pub random_control_stats: Option<SummaryStats>,
    pub seed: u64,
}

impl AblationReport {
    /// Mean control AUC minus mean ablated AUC.
    pub fn gap(&self) -> Option<f64> {
        Some(self.random_control_stats?.mean - self.ablated_auc_stats?.mean)
    }
}

/// Shuffles the group's conserved weights on its best minimum, and for each
/// trial perturbs an equally sized, disjoint random coordinate set by the
/// same Euclidean norm as a control.
pub fn ablation_experiment(
    obj: &NetObjective<'_>,
    db: &LandscapeDatabase,
    report: &ConservedWeightReport,
    trials: usize,
    seed: u64,
) -> Result<AblationReport> {
    db.check_fingerprint(obj.fingerprint())?;
    let arch = db.arch();
    let targets = report.edges();
    if targets.is_empty() {
        return Err(Error::EmptyTargetSet);
    }
    if targets.len() < 2 {
        return Err(Error::ShuffleTooSmall);
    }
    let target_pos = positions(arch, &targets)?;
    let pool: Vec<usize> = (0..arch.parameter_count())
        .filter(|p| !target_pos.contains(p))
        .collect();
    if pool.len() < targets.len() {
        return Err(Error::InvalidConfig(alloc::format!(
            "{} conserved coordinates leave too few others for a disjoint control set",
            targets.len()
        )));
    }
    let best_id = *report.members.first().ok_or(Error::EmptyDatabase)?;
    let best = db.minimum(best_id).ok_or(Error::UnknownMinimum(best_id))?;
    let baseline_auc = obj.auc(&best.params)?;

    let mut runs = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = rng_from_seed(derive_indexed(seed, "ablation", t as u64));
        let (shuffled, norm) = ablate(
            arch,
            &best.params,
            &targets,
            AblationMode::Shuffle,
            &mut rng,
        )?;
        let ablated_auc = obj.auc(&shuffled)?;
        let mut control_pos: Vec<usize> = pool
            .choose_multiple(&mut rng, targets.len())
            .copied()
            .collect();
        control_pos.sort_unstable();
        let control_set: Vec<EdgeIndex> = control_pos
            .iter()
            .map(|&p| arch.edge_of(p).expect("position in range"))
            .collect();
        let (perturbed, _) = ablate(
            arch,
            &best.params,
            &control_set,
            AblationMode::Perturb { norm },
            &mut rng,
        )?;
        let control_auc = obj.auc(&perturbed)?;
        runs.push(AblationTrial {
            ablated_auc,
            applied_norm: norm,
            control_auc,
            control_set,
        });
    }
    let ablated: Vec<f64> = runs.iter().map(|r| r.ablated_auc).collect();
    let control: Vec<f64> = runs.iter().map(|r| r.control_auc).collect();
    let perturbation_norm = if runs.is_empty() {
        0.0
    } else {
        compensated_sum(runs.iter().map(|r| r.applied_norm)) / runs.len() as f64
    };
    Ok(AblationReport {
        group_label: report.group_label.clone(),
        minimum_id: best_id,
        target_set: targets,
        mode: AblationMode::Shuffle,
        baseline_auc,
        ablated_auc_stats: SummaryStats::of(&ablated),
        random_control_stats: SummaryStats::of(&control),
        trials: runs,
        perturbation_norm,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{build_disconnectivity, Fingerprint, Minimum};
    use alloc::vec;

    /// 1-1-2 net: six coordinates per minimum.
    fn db_with(params: &[[f64; 6]], losses: &[f64]) -> LandscapeDatabase {
        let arch = Architecture::parse("1-1-2").unwrap();
        let minima = params
            .iter()
            .zip(losses)
            .enumerate()
            .map(|(i, (p, &loss))| Minimum {
                id: i as u64 + 1,
                params: p.to_vec(),
                loss,
                grad_norm: 0.0,
                discovery_count: 1,
                min_hessian_eigenvalue: None,
            })
            .collect();
        LandscapeDatabase::from_parts(
            Fingerprint(1),
            arch,
            minima,
            vec![],
            params.len() as u64 + 1,
            1,
        )
        .unwrap()
    }

    #[test]
    fn sigma_threshold_separates_coordinates() {
        let db = db_with(
            &[
                [0.5, 0.1, 1.0, 2.0, 3.0, 4.0],
                [0.501, 0.9, 1.0, 2.0, 3.0, 4.0],
                [0.499, -0.4, 1.0, 2.0, 3.0, 4.5],
            ],
            &[0.1, 0.2, 0.3],
        );
        // no transition states: give the graph one group by hand
        let graph = DisconnectivityGraph {
            n_levels: 2,
            e_top: 1.0,
            e_bottom: 0.1,
            delta: 0.45,
            nodes: vec![crate::landscape::GraphNode {
                level: 1,
                index: 1,
                members: vec![1, 2, 3],
                parent: None,
                children: vec![],
            }],
        };
        let r = conserved_weights(&db, &graph, 1, 1, 0.01).unwrap();
        let edges = r.edges();
        let arch = db.arch();
        assert!(edges.contains(&arch.edge_of(0).unwrap()));
        assert!(!edges.contains(&arch.edge_of(1).unwrap()));
        assert!(!edges.contains(&arch.edge_of(5).unwrap()));
        assert_eq!(r.conserved.len(), 4);
        let first_coord = r
            .conserved
            .iter()
            .find(|c| c.edge == arch.edge_of(0).unwrap())
            .unwrap();
        assert!((first_coord.sigma - libm::sqrt(2.0e-6 / 3.0)).abs() < 1e-12);
        // zero-sigma coordinates come first, in edge order
        assert_eq!(r.conserved[0].edge, arch.edge_of(2).unwrap());
        assert_eq!(r.conserved[3].edge, arch.edge_of(0).unwrap());
        assert!(!r.trivially_conserved);
        assert_eq!(
            conserved_weights(&db, &graph, 3, 1, 0.01),
            Err(Error::UnknownGroup { level: 3, index: 1 })
        );
    }

    #[test]
    fn single_member_group_is_trivially_conserved() {
        let db = db_with(&[[0.3, -0.2, 1.0, 2.0, 3.0, 4.0]], &[0.5]);
        let graph = build_disconnectivity(&db, 3).unwrap();
        let r = conserved_weights(&db, &graph, 3, 1, 0.01).unwrap();
        assert!(r.trivially_conserved);
        assert_eq!(r.conserved.len(), 6);
        assert!(r.conserved.iter().all(|c| c.sigma == 0.0));
    }

    fn report_of(edges: &[EdgeIndex]) -> ConservedWeightReport {
        ConservedWeightReport {
            group_label: "1_1".into(),
            members: vec![1],
            sigma_threshold: 0.01,
            conserved: edges
                .iter()
                .map(|&edge| ConservedWeight {
                    edge,
                    mean: 0.0,
                    sigma: 0.0,
                })
                .collect(),
            trivially_conserved: false,
        }
    }

    #[test]
    fn relevance_groups_first_layer_edges_by_input() {
        let arch = Architecture::new(29, vec![3], 2).unwrap();
        let mut edges: Vec<EdgeIndex> = (1..=3).map(|h| EdgeIndex::weight(1, 6, h)).collect();
        edges.push(EdgeIndex::weight(1, 2, 1));
        edges.push(EdgeIndex::bias(1, 2));
        edges.push(EdgeIndex::weight(2, 1, 1));
        let rel = input_relevance(&report_of(&edges), &arch);
        assert_eq!(rel.len(), 2);
        assert_eq!(rel[0].input, 6);
        assert_eq!(rel[0].edges.len(), 3);
        assert_eq!(rel[1].input, 2);
        assert!(input_relevance(&report_of(&[]), &arch).is_empty());
        assert!(input_relevance(&report_of(&[EdgeIndex::weight(2, 3, 1)]), &arch).is_empty());
    }

    #[test]
    fn shuffle_and_perturb() {
        let arch = Architecture::parse("2-3-2").unwrap();
        let params: Vec<f64> = (0..arch.parameter_count())
            .map(|i| i as f64 * 0.1)
            .collect();
        let mut rng = rng_from_seed(5);
        let pair = [arch.edge_of(0).unwrap(), arch.edge_of(4).unwrap()];
        let (out, norm) = ablate(&arch, &params, &pair, AblationMode::Shuffle, &mut rng).unwrap();
        assert_eq!(out[0], params[4]);
        assert_eq!(out[4], params[0]);
        assert!((norm - libm::sqrt(2.0) * 0.4).abs() < 1e-12);

        let three = [
            arch.edge_of(1).unwrap(),
            arch.edge_of(2).unwrap(),
            arch.edge_of(7).unwrap(),
        ];
        for _ in 0..50 {
            let (out, _) = ablate(&arch, &params, &three, AblationMode::Shuffle, &mut rng).unwrap();
            assert_ne!(out, params);
            let mut a: Vec<f64> = [1, 2, 7].iter().map(|&p| out[p]).collect();
            a.sort_by(f64::total_cmp);
            assert_eq!(a, vec![params[1], params[2], params[7]]);
        }

        let mut flat = params.clone();
        flat[1] = 0.25;
        flat[2] = 0.25;
        let (out, norm) =
            ablate(&arch, &flat, &three[..2], AblationMode::Shuffle, &mut rng).unwrap();
        assert_eq!(out, flat);
        assert_eq!(norm, 0.0);

        let (out, norm) = ablate(
            &arch,
            &params,
            &three,
            AblationMode::Perturb { norm: 0.37 },
            &mut rng,
        )
        .unwrap();
        assert!((norm - 0.37).abs() < 1e-12);
        for (i, (a, b)) in out.iter().zip(&params).enumerate() {
            assert_eq!(a != b, [1, 2, 7].contains(&i));
        }

        assert_eq!(
            ablate(&arch, &params, &pair[..1], AblationMode::Shuffle, &mut rng),
            Err(Error::ShuffleTooSmall)
        );
        assert_eq!(
            ablate(&arch, &params, &[], AblationMode::Shuffle, &mut rng),
            Err(Error::EmptyTargetSet)
        );
    }

    #[test]
    fn stats() {
        assert_eq!(SummaryStats::of(&[]), None);
        let s = SummaryStats::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.count, s.mean, s.min, s.max), (4, 2.5, 1.0, 4.0));
        assert!((s.stddev - libm::sqrt(1.25)).abs() < 1e-15);
    }

    fn small_problem() -> (Architecture, crate::Dataset) {
        let ds = crate::data::gen_checkerboard(200, 2, 0.0, 3).unwrap();
        (Architecture::parse("2-3-2").unwrap(), ds)
    }

    fn single_minimum_db(
        obj: &NetObjective<'_>,
        arch: &Architecture,
        params: Vec<f64>,
    ) -> LandscapeDatabase {
        let m = Minimum {
            id: 1,
            params,
            loss: 0.5,
            grad_norm: 0.0,
            discovery_count: 1,
            min_hessian_eigenvalue: None,
        };
        LandscapeDatabase::from_parts(obj.fingerprint(), arch.clone(), vec![m], vec![], 2, 1)
            .unwrap()
    }

    #[test]
    fn zero_trials_give_baseline_only() {
        let (arch, ds) = small_problem();
        let obj = NetObjective::new(&arch, &ds).unwrap();
        let params: Vec<f64> = (0..arch.parameter_count())
            .map(|i| libm::sin(i as f64))
            .collect();
        let db = single_minimum_db(&obj, &arch, params.clone());
        let report = report_of(&[arch.edge_of(0).unwrap(), arch.edge_of(1).unwrap()]);
        let r = ablation_experiment(&obj, &db, &report, 0, 1).unwrap();
        assert_eq!(r.baseline_auc, obj.auc(&params).unwrap());
        assert!(r.trials.is_empty());
        assert_eq!((r.ablated_auc_stats, r.random_control_stats), (None, None));
    }

    #[test]
    fn equal_targets_leave_auc_at_baseline() {
        let (arch, ds) = small_problem();
        let obj = NetObjective::new(&arch, &ds).unwrap();
        let mut params: Vec<f64> = (0..arch.parameter_count())
            .map(|i| libm::sin(i as f64))
            .collect();
        params[3] = 0.7;
        params[4] = 0.7;
        let db = single_minimum_db(&obj, &arch, params);
        let targets = [arch.edge_of(3).unwrap(), arch.edge_of(4).unwrap()];
        let r = ablation_experiment(&obj, &db, &report_of(&targets), 8, 2).unwrap();
        for t in &r.trials {
            assert_eq!(t.ablated_auc, r.baseline_auc);
            assert_eq!(t.applied_norm, 0.0);
            assert_eq!(t.control_set.len(), 2);
            assert!(t.control_set.iter().all(|e| !targets.contains(e)));
        }
        let again = ablation_experiment(&obj, &db, &report_of(&targets), 8, 2).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn fingerprint_must_match() {
        let (arch, ds) = small_problem();
        let obj = NetObjective::new(&arch, &ds).unwrap();
        let other = crate::data::gen_checkerboard(200, 2, 0.0, 4).unwrap();
        let other_obj = NetObjective::new(&arch, &other).unwrap();
        let db = single_minimum_db(&obj, &arch, vec![0.1; arch.parameter_count()]);
        let report = report_of(&[arch.edge_of(0).unwrap(), arch.edge_of(1).unwrap()]);
        assert!(matches!(
            ablation_experiment(&other_obj, &db, &report, 1, 1),
            Err(Error::FingerprintMismatch { .. })
        ));
    }
}
