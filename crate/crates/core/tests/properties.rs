use proptest::prelude::*;
use rand::Rng;
use weightscape_core::data::gen_checkerboard;
use weightscape_core::landscape::{Fingerprint, MinimumCandidate, TsCandidate};
use weightscape_core::model::{auc, forward, gradient, loss};
use weightscape_core::rng::rng_from_seed;
use weightscape_core::symmetry::{apply_symmetry, canonicalize, GroupElement};
use weightscape_core::{Architecture, LandscapeDatabase};

fn pairwise_auc(scores: &[f64], labels: &[usize]) -> Option<f64> {
    let (mut num, mut pairs) = (0.0, 0usize);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0).then(|| num / pairs as f64)
}

/// Minima `a` and `b` are together below `eps` iff some chain of transition
/// states, each at or below `eps`, links them through minima at or below
/// `eps`. Found by explicit path search from every minimum.
fn oracle_groups(losses: &[f64], ts: &[(usize, usize, f64)], eps: f64) -> Vec<Vec<u64>> {
    let n = losses.len();
    let mut seen = vec![false; n];
    let mut groups = Vec::new();
    for start in 0..n {
        if seen[start] || losses[start] > eps {
            continue;
        }
        let mut stack = vec![start];
        let mut group = Vec::new();
        seen[start] = true;
        while let Some(m) = stack.pop() {
            group.push(m);
            for &(a, b, e) in ts {
                if e > eps {
                    continue;
                }
                let other = if a == m {
                    b
                } else if b == m {
                    a
                } else {
                    continue;
                };
                if !seen[other] && losses[other] <= eps {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        group.sort_by(|&x, &y| losses[x].total_cmp(&losses[y]).then(x.cmp(&y)));
        groups.push(group);
    }
    groups.sort_by(|a, b| losses[a[0]].total_cmp(&losses[b[0]]).then(a[0].cmp(&b[0])));
    groups
        .into_iter()
        .map(|g| g.into_iter().map(|i| i as u64 + 1).collect())
        .collect()
}

fn synthetic(losses: &[f64], ts: &[(usize, usize, f64)]) -> LandscapeDatabase {
    let arch = Architecture::parse("1-1-2").unwrap();
    let fp = Fingerprint(9);
    let mut db = LandscapeDatabase::new(fp, arch);
    for (i, &loss) in losses.iter().enumerate() {
        let params = vec![1.0 + i as f64, 0.5, 0.0, 0.0, 0.0, 0.0];
        db.insert_minimum(
            fp,
            MinimumCandidate {
                params,
                loss,
                grad_norm: 0.0,
                min_hessian_eigenvalue: None,
            },
        )
        .unwrap();
    }
    for (k, &(a, b, loss)) in ts.iter().enumerate() {
        let params = vec![-1.0 - k as f64, 0.5, 0.0, 0.0, 0.0, 0.0];
        let c = TsCandidate {
            params,
            loss,
            grad_norm: 0.0,
            negative_eigenvalue: -1.0,
            min_a: a as u64 + 1,
            min_b: b as u64 + 1,
        };
        db.insert_transition_state(fp, c).unwrap();
    }
    db
}

fn landscape() -> impl Strategy<Value = (Vec<f64>, Vec<(usize, usize, f64)>)> {
    (1usize..=12).prop_flat_map(|n| {
        let losses = prop::collection::vec(0.0f64..1.0, n);
        let ts = prop::collection::vec((0..n, 0..n, 0.0f64..1.0), 0..2 * n);
        (losses, ts).prop_map(|(losses, ts)| {
            let ts: Vec<_> = ts
                .into_iter()
                .filter(|(a, b, _)| a != b)
                .map(|(a, b, e)| (a, b, e.max(losses[a]).max(losses[b]) + 0.01))
                .collect();
            (losses, ts)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auc_matches_pair_counting(scores in prop::collection::vec(0u8..6, 1..=12), labels in prop::collection::vec(0usize..2, 12)) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let labels = &labels[..scores.len()];
        match pairwise_auc(&scores, labels) {
            Some(expected) => prop_assert_eq!(auc(&scores, labels).unwrap(), expected),
            None => prop_assert!(auc(&scores, labels).is_err()),
        }
    }

    #[test]
    fn superbasins_and_graph_match_path_search((losses, ts) in landscape(), levels in 2usize..30) {
        let db = synthetic(&losses, &ts);
        let g = db.build_disconnectivity(levels).unwrap();
        for level in 1..=levels {
            let eps = g.threshold(level);
            let expected = oracle_groups(&losses, &ts, eps);
            prop_assert_eq!(&db.superbasins_at(eps), &expected);
            let nodes: Vec<Vec<u64>> = g.level(level).map(|n| n.members.clone()).collect();
            prop_assert_eq!(&nodes, &expected);
        }
        for upper in 1..levels {
            for lower in upper + 1..=levels {
                for n in g.level(lower) {
                    let holders = g.level(upper).filter(|u| n.members.iter().all(|m| u.members.contains(m))).count();
                    prop_assert_eq!(holders, 1);
                }
            }
        }
    }

    #[test]
    fn canonical_form_is_constant_on_orbits(seed in any::<u64>(), hidden in prop::collection::vec(1usize..5, 1..3)) {
        let arch = Architecture::new(3, hidden, 2).unwrap();
        let mut rng = rng_from_seed(seed);
        let p: Vec<f64> = (0..arch.parameter_count()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let g = GroupElement::random(&arch, &mut rng);
        let q = apply_symmetry(&arch, &p, &g).unwrap();
        let (cp, cq) = (canonicalize(&arch, &p).unwrap(), canonicalize(&arch, &q).unwrap());
        for (a, b) in cp.iter().zip(&cq) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let x = weightscape_core::Matrix::from_rows(&[vec![0.3, -1.0, 2.0], vec![-0.7, 0.1, 0.0]]).unwrap();
        prop_assert!(forward(&arch, &p, &x).unwrap().max_abs_diff(&forward(&arch, &q, &x).unwrap()) < 1e-12);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let arch = Architecture::parse("2-5-2").unwrap();
    let data = gen_checkerboard(300, 4, 0.0, 11).unwrap();
    let mut rng = rng_from_seed(5);
    for _ in 0..20 {
        let p: Vec<f64> = (0..arch.parameter_count())
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        let g = gradient(&arch, &p, &data).unwrap();
        for i in 0..p.len() {
            let h = 1e-5 * p[i].abs().max(1.0);
            let (mut up, mut down) = (p.clone(), p.clone());
            up[i] += h;
            down[i] -= h;
            let fd =
                (loss(&arch, &up, &data).unwrap() - loss(&arch, &down, &data).unwrap()) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-4);
            assert!(rel < 1e-5, "component {i}: {} vs {fd}", g[i]);
        }
    }
}
