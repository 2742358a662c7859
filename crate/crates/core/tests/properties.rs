mod support;

use std::collections::BTreeSet;

use ensemblier::fusion::{normalize_rows, predict, sum_rule, weighted_sum, Normalization};
use ensemblier::metrics::{accuracy_macro, accuracy_overall, confusion, f_measure_macro, one_vs_all, ConfusionMatrix};
use ensemblier::report::{average_ranks, rank_of_average_rank};
use ensemblier::selection::{exhaustive_best, sffs, Objective, SelectionConfig};
use ensemblier::ws::{ws_gradient, ws_loss, ws_optimize, ws_select, SelectRule, WeightVector, WsConfig};
use ensemblier::zoo::{load_scores, make_splits, save_scores, ClassMap, Protocol, ProtocolSpec};
use ensemblier::ScoreMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

fn labelled(max_n: usize, max_c: usize) -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
    (2..=max_c).prop_flat_map(move |c| {
        (1..=max_n).prop_flat_map(move |n| {
            (Just(c), prop::collection::vec(0..c, n), prop::collection::vec(0..c, n))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_partition_the_index_range(n in 5usize..1000, k in 2usize..=5, half in any::<bool>(), seed in any::<u64>()) {
        let protocol = if half { Protocol::HalfSplit } else { Protocol::KFold(k) };
        let spec = ProtocolSpec::new("d", 3, protocol);
        let splits = make_splits(n, &spec, seed).unwrap();
        prop_assert_eq!(splits.len(), protocol.n_splits());
        let mut tested = Vec::new();
        for s in &splits {
            let train: BTreeSet<_> = s.train.iter().collect();
            prop_assert!(s.test.iter().all(|t| !train.contains(t)));
            prop_assert_eq!(s.train.len() + s.test.len(), n);
            tested.extend(s.test.iter().copied());
        }
        if !half {
            tested.sort_unstable();
            prop_assert_eq!(tested, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = splits.iter().map(|s| s.test.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(splits, make_splits(n, &spec, seed).unwrap());
    }

    #[test]
    fn score_files_round_trip_bit_exact(seed in any::<u64>(), n in 1usize..40, c in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_members(&mut rng, 1, n, c).pop().unwrap();
        let scaled: Vec<f64> = m.scores().iter().map(|v| (v - 0.5) * 1e3 / 7.0).collect();
        let m = m.with_scores("m", scaled).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        save_scores(&path, &m).unwrap();
        let back = load_scores(&path, &ClassMap::numbered(c).unwrap()).unwrap();
        let bits = |s: &ScoreMatrix| s.scores().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&m));
        prop_assert_eq!(back.labels(), m.labels());
        prop_assert_eq!(back.sample_ids(), m.sample_ids());
    }

    #[test]
    fn metrics_lie_in_unit_interval_and_match_oracle((c, pred, labels) in labelled(200, 12)) {
        let cm = confusion(&pred, &labels, c).unwrap();
        let (f, a, o) = brute_metrics(&pred, &labels, c);
        let got = [f_measure_macro(&cm), accuracy_macro(&cm).unwrap(), accuracy_overall(&cm).unwrap()];
        for (g, w) in got.iter().zip([f, a, o]) {
            prop_assert!((0.0..=1.0).contains(g));
            prop_assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn metrics_are_invariant_to_class_relabelling((c, pred, labels) in labelled(200, 10), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..c).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let relabel = |v: &[usize]| v.iter().map(|&x| perm[x]).collect::<Vec<_>>();
        let a = confusion(&pred, &labels, c).unwrap();
        let b = confusion(&relabel(&pred), &relabel(&labels), c).unwrap();
        prop_assert!((f_measure_macro(&a) - f_measure_macro(&b)).abs() < 1e-12);
        prop_assert!((accuracy_macro(&a).unwrap() - accuracy_macro(&b).unwrap()).abs() < 1e-12);
        prop_assert_eq!(accuracy_overall(&a).unwrap(), accuracy_overall(&b).unwrap());
    }

    #[test]
    fn one_vs_all_conserves_sample_count(c in 2usize..8, counts in prop::collection::vec(0u64..20, 64)) {
        let cm = ConfusionMatrix::from_counts(c, counts[..c * c].to_vec()).unwrap();
        let mut tp_total = 0;
        for k in 0..c {
            let b = one_vs_all(&cm, k).unwrap();
            prop_assert_eq!(b.total(), cm.n());
            tp_total += b.tp;
        }
        prop_assert_eq!(tp_total, cm.trace());
    }

    #[test]
    fn fusion_ignores_member_order(seed in any::<u64>(), n in 1usize..6, rot in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ms = random_members(&mut rng, n, 30, 4);
        let refs: Vec<&ScoreMatrix> = ms.iter().collect();
        let mut rotated = refs.clone();
        rotated.rotate_left(rot % n);
        rotated.reverse();
        let a = sum_rule("f", &refs).unwrap();
        let b = sum_rule("f", &rotated).unwrap();
        prop_assert_eq!(a.scores(), b.scores());
        prop_assert_eq!(a.scores(), &naive_sum(&refs)[..]);
    }

    #[test]
    fn singleton_fusion_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_members(&mut rng, 1, 25, 5).pop().unwrap();
        let norm = normalize_rows(&m, Normalization::Softmax).unwrap();
        let fused = sum_rule("f", &[&norm]).unwrap();
        prop_assert_eq!(fused.scores(), norm.scores());
    }

    #[test]
    fn positive_scaling_keeps_predictions(seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ms = random_members(&mut rng, 3, 40, 4);
        let scaled: Vec<ScoreMatrix> =
            ms.iter().map(|m| m.with_scores(m.classifier_id.clone(), m.scores().iter().map(|v| v * scale).collect()).unwrap()).collect();
        let a = sum_rule("f", &ms.iter().collect::<Vec<_>>()).unwrap();
        let b = sum_rule("f", &scaled.iter().collect::<Vec<_>>()).unwrap();
        // scaling can only flip exact or near-exact ties
        let margin = |row: &[f64]| {
            let mut v = row.to_vec();
            v.sort_by(|x, y| y.total_cmp(x));
            v[0] - v[1]
        };
        for ((ra, rb), (pa, pb)) in a.rows().zip(b.rows()).zip(predict(&a).into_iter().zip(predict(&b))) {
            if margin(ra) > 1e-9 && margin(rb) > 1e-9 {
                prop_assert_eq!(pa, pb);
            }
        }
    }

    #[test]
    fn ws_steps_stay_on_simplex(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ms = random_posteriors(&mut rng, n, 30, 3);
        for epochs in [1, 7] {
            let cfg = WsConfig { epochs, seed, ..WsConfig::default() };
            let w = ws_optimize(&ms, &cfg).unwrap().weights;
            let s = w.as_slice();
            prop_assert!(s.iter().all(|&x| x >= 0.0));
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let sel = ws_select(&w, SelectRule::TopK(1)).unwrap();
            prop_assert!((sel.weights.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn ws_gradient_matches_finite_differences(seed in any::<u64>(), n in 2usize..5) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ms = random_posteriors(&mut rng, n, 20, 3);
        let cfg = WsConfig::default();
        let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = ws_gradient(&WeightVector::from_logits(&theta), &ms, &cfg).unwrap();
        let h = 1e-6;
        for i in 0..n {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (ws_loss(&WeightVector::from_logits(&up), &ms, &cfg).unwrap()
                - ws_loss(&WeightVector::from_logits(&dn), &ms, &cfg).unwrap())
                / (2.0 * h);
            prop_assert!((g[i] - fd).abs() <= 1e-5 * (1.0 + g[i].abs()), "{} vs {}", g[i], fd);
        }
    }

    #[test]
    fn rank_of_average_rank_matches_hand_oracle(cells in prop::collection::vec(prop::collection::vec(0u8..4, 3), 4)) {
        let cells: Vec<Vec<f64>> = cells.iter().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
        // rank per column: 1 + number of strictly better rows + half the other ties
        let mut avg = vec![0.0; 4];
        for j in 0..3 {
            for i in 0..4 {
                let better = (0..4).filter(|&o| cells[o][j] > cells[i][j]).count() as f64;
                let tied = (0..4).filter(|&o| o != i && cells[o][j] == cells[i][j]).count() as f64;
                avg[i] += (1.0 + better + tied / 2.0) / 3.0;
            }
        }
        let got = average_ranks(&cells).unwrap();
        for (g, w) in got.iter().zip(&avg) {
            prop_assert!((g - w).abs() < 1e-12);
        }
        let ranks = rank_of_average_rank(&cells).unwrap();
        for i in 0..4 {
            let want = 1 + (0..4).filter(|&o| avg[o] < avg[i] - 1e-9).count();
            prop_assert_eq!(ranks[i], want);
        }
    }

    #[test]
    fn sffs_never_beats_exhaustive_and_never_loses_to_singles(seed in any::<u64>(), n in 2usize..7, k_pick in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ms = random_posteriors(&mut rng, n, 40, 3);
        let k = 1 + k_pick % n;
        let cfg = SelectionConfig::new(k);
        let s = sffs(&ms, &cfg).unwrap();
        let single = exhaustive_best(&ms, 1, Objective::AccuracyOverall).unwrap().objective;
        prop_assert!(s.objective >= single);
        let best = (1..=k).map(|j| exhaustive_best(&ms, j, Objective::AccuracyOverall).unwrap().objective).fold(f64::MIN, f64::max);
        prop_assert!(s.objective <= best);
        prop_assert!(s.subset.len() <= k && !s.subset.is_empty());
        // recorded objectives only ever come from real subsets
        let fused = sum_rule("f", &s.subset_indices.iter().map(|&i| &ms[i]).collect::<Vec<_>>()).unwrap();
        let cm = confusion(&predict(&fused), fused.labels(), 3).unwrap();
        prop_assert_eq!(s.objective, accuracy_overall(&cm).unwrap());
        prop_assert_eq!(&s, &sffs(&ms, &cfg).unwrap());
    }

    #[test]
    fn weighted_fusion_is_scale_free(seed in any::<u64>(), scale in 0.01f64..100.0) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ms = random_posteriors(&mut rng, 3, 30, 4);
        let refs: Vec<&ScoreMatrix> = ms.iter().collect();
        let w: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.0)).collect();
        let ws: Vec<f64> = w.iter().map(|v| v * scale).collect();
        let a = weighted_sum("w", &refs, &w).unwrap();
        let b = weighted_sum("w", &refs, &ws).unwrap();
        for (ra, rb) in a.rows().zip(b.rows()) {
            let pa = ensemblier::fusion::argmax(ra);
            let pb = ensemblier::fusion::argmax(rb);
            let gap = ra.iter().enumerate().filter(|&(j, _)| j != pa).map(|(_, v)| ra[pa] - v).fold(f64::MAX, f64::min);
            if gap > 1e-9 {
                prop_assert_eq!(pa, pb);
            }
        }
    }
}

#[test]
fn increasing_regularization_never_raises_entropy_on_identical_members() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = random_posteriors(&mut rng, 1, 50, 3).pop().unwrap();
    let ms: Vec<ScoreMatrix> = (0..3).map(|i| m.with_scores(format!("c{i}"), m.scores().to_vec()).unwrap()).collect();
    let mut last = f64::INFINITY;
    for reg in [0.0, 0.05, 0.2, 1.0, 3.0] {
        let cfg = WsConfig { reg_coefficient: reg, seed: 5, ..WsConfig::default() };
        let h = ws_optimize(&ms, &cfg).unwrap().weights.entropy();
        assert!(h <= last + 1e-9, "entropy rose to {h} at reg {reg}");
        last = h;
    }
}
