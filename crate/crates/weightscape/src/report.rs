//! Human-readable and JSON renderings of analysis results.

use std::fmt::Write as _;

use serde::Serialize;
use weightscape_core::interpret::{
    AblationMode, AblationReport, ConservedWeightReport, InputRelevance, SummaryStats,
};
use weightscape_core::model::EdgeIndex;

use crate::explore::ExploreSummary;

#[derive(Serialize)]
struct EdgeDoc {
    name: String,
    layer: usize,
    from: Option<usize>,
    to: usize,
    bias: bool,
}

impl From<&EdgeIndex> for EdgeDoc {
    fn from(e: &EdgeIndex) -> Self {
        Self {
            name: e.to_string(),
            layer: e.layer,
            from: (!e.is_bias).then_some(e.from_node),
            to: e.to_node,
            bias: e.is_bias,
        }
    }
}

#[derive(Serialize)]
struct ConservedDoc {
    edge: EdgeDoc,
    mean: f64,
    sigma: f64,
}

#[derive(Serialize)]
struct RelevanceDoc {
    input: usize,
    feature: Option<String>,
    conserved_edges: usize,
}

#[derive(Serialize)]
struct GroupDoc {
    group: String,
    members: Vec<u64>,
    sigma_threshold: f64,
    trivially_conserved: bool,
    conserved: Vec<ConservedDoc>,
    input_relevance: Vec<RelevanceDoc>,
}

fn feature_name(names: Option<&[String]>, input: usize) -> String {
    names
        .and_then(|n| n.get(input))
        .cloned()
        .unwrap_or_else(|| format!("x{}", input + 1))
}

pub fn conserved_json(
    report: &ConservedWeightReport,
    relevance: &[InputRelevance],
    names: Option<&[String]>,
) -> String {
    let doc = GroupDoc {
        group: report.group_label.clone(),
        members: report.members.clone(),
        sigma_threshold: report.sigma_threshold,
        trivially_conserved: report.trivially_conserved,
        conserved: report
            .conserved
            .iter()
            .map(|c| ConservedDoc {
                edge: (&c.edge).into(),
                mean: c.mean,
                sigma: c.sigma,
            })
            .collect(),
        input_relevance: relevance
            .iter()
            .map(|r| RelevanceDoc {
                input: r.input,
                feature: Some(feature_name(names, r.input)),
                conserved_edges: r.edges.len(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

pub fn conserved_text(
    report: &ConservedWeightReport,
    relevance: &[InputRelevance],
    names: Option<&[String]>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "group {} ({} minima), sigma threshold {}",
        report.group_label,
        report.member_count(),
        report.sigma_threshold
    );
    if report.trivially_conserved {
        let _ = writeln!(
            s,
            "single-member group: every weight is trivially conserved"
        );
    }
    let _ = writeln!(s, "{} conserved weights", report.conserved.len());
    if !report.conserved.is_empty() {
        let _ = writeln!(s, "  {:<16} {:>12} {:>12}", "edge", "mean", "sigma");
        for c in &report.conserved {
            let _ = writeln!(
                s,
                "  {:<16} {:>12.6} {:>12.3e}",
                c.edge.to_string(),
                c.mean,
                c.sigma
            );
        }
    }
    if !relevance.is_empty() {
        let _ = writeln!(s, "inputs by conserved first-layer edges:");
        for r in relevance {
            let _ = writeln!(
                s,
                "  {:<16} {}",
                feature_name(names, r.input),
                r.edges.len()
            );
        }
    }
    s
}

#[derive(Serialize)]
struct StatsDoc {
    count: usize,
    mean: f64,
    stddev: f64,
    min: f64,
    max: f64,
}

impl From<SummaryStats> for StatsDoc {
    fn from(s: SummaryStats) -> Self {
        Self {
            count: s.count,
            mean: s.mean,
            stddev: s.stddev,
            min: s.min,
            max: s.max,
        }
    }
}

#[derive(Serialize)]
struct TrialDoc {
    ablated_auc: f64,
    applied_norm: f64,
    control_auc: f64,
    control_set: Vec<String>,
}

#[derive(Serialize)]
struct AblationDoc {
    group: String,
    minimum: u64,
    mode: String,
    seed: u64,
    targets: Vec<EdgeDoc>,
    baseline_auc: f64,
    perturbation_norm: f64,
    ablated: Option<StatsDoc>,
    control: Option<StatsDoc>,
    gap: Option<f64>,
    trials: Vec<TrialDoc>,
}

fn mode_name(mode: AblationMode) -> String {
    match mode {
        AblationMode::Shuffle => "shuffle".into(),
        AblationMode::Perturb { norm } => format!("perturb({norm})"),
    }
}

pub fn ablation_json(report: &AblationReport) -> String {
    let doc = AblationDoc {
        group: report.group_label.clone(),
        minimum: report.minimum_id,
        mode: mode_name(report.mode),
        seed: report.seed,
        targets: report.target_set.iter().map(EdgeDoc::from).collect(),
        baseline_auc: report.baseline_auc,
        perturbation_norm: report.perturbation_norm,
        ablated: report.ablated_auc_stats.map(Into::into),
        control: report.random_control_stats.map(Into::into),
        gap: report.gap(),
        trials: report
            .trials
            .iter()
            .map(|t| TrialDoc {
                ablated_auc: t.ablated_auc,
                applied_norm: t.applied_norm,
                control_auc: t.control_auc,
                control_set: t.control_set.iter().map(ToString::to_string).collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

fn stats_line(name: &str, st: Option<SummaryStats>) -> String {
    match st {
        Some(st) => format!(
            "{name:<8} mean {:.4}  sd {:.4}  min {:.4}  max {:.4}  (n={})",
            st.mean, st.stddev, st.min, st.max, st.count
        ),
        None => format!("{name:<8} no trials"),
    }
}

pub fn ablation_text(report: &AblationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "group {} on minimum {}: {} target weights, {} trials, seed {}",
        report.group_label,
        report.minimum_id,
        report.target_set.len(),
        report.trials.len(),
        report.seed
    );
    let _ = writeln!(
        s,
        "baseline AUC {:.4}, mean perturbation norm {:.4}",
        report.baseline_auc, report.perturbation_norm
    );
    let _ = writeln!(s, "{}", stats_line("ablated", report.ablated_auc_stats));
    let _ = writeln!(s, "{}", stats_line("control", report.random_control_stats));
    if let Some(gap) = report.gap() {
        let _ = writeln!(s, "gap (control - ablated) {gap:.4}");
    }
    s
}

pub fn summary_json(summary: &ExploreSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

pub fn summary_text(summary: &ExploreSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "fingerprint {}", summary.fingerprint);
    let _ = writeln!(
        s,
        "walkers {}  quenches {} ({} unconverged)  new minima {}",
        summary.walkers_run, summary.quenches, summary.unconverged, summary.new_minima
    );
    let _ = writeln!(
        s,
        "connection attempts {} ({} succeeded)",
        summary.attempts, summary.successful_attempts
    );
    let _ = writeln!(
        s,
        "minima {}  transition states {}  components {}",
        summary.minima, summary.transition_states, summary.components
    );
    if let (Some(id), Some(loss), Some(auc)) =
        (summary.best_minimum, summary.best_loss, summary.best_auc)
    {
        let _ = writeln!(s, "best minimum {id}: loss {loss:.6}  AUC {auc:.4}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use weightscape_core::interpret::ConservedWeight;

    #[test]
    fn conserved_report_renders() {
        let report = ConservedWeightReport {
            group_label: "3_1".into(),
            members: vec![4, 9],
            sigma_threshold: 0.01,
            conserved: vec![ConservedWeight {
                edge: EdgeIndex::weight(0, 1, 2),
                mean: 0.25,
                sigma: 0.001,
            }],
            trivially_conserved: false,
        };
        let rel = vec![InputRelevance {
            input: 1,
            edges: vec![EdgeIndex::weight(0, 1, 2)],
        }];
        let text = conserved_text(&report, &rel, None);
        assert!(text.contains("group 3_1 (2 minima)"));
        assert!(text.contains("L0:1->2"));
        assert!(text.contains("x2"));
        let v: serde_json::Value = serde_json::from_str(&conserved_json(
            &report,
            &rel,
            Some(&["a".into(), "b".into()]),
        ))
        .unwrap();
        assert_eq!(v["conserved"][0]["edge"]["to"], 2);
        assert_eq!(v["input_relevance"][0]["feature"], "b");
    }
}
