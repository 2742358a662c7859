use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use ensemblier::fusion::predict;
use ensemblier::toylab::*;
use ensemblier::zoo::{Protocol, Tuning};
use ensemblier::Zoo;

const SEED: u64 = 7;

fn task(id: &str, c: usize, noise: f64, seed: u64) -> TaskSpec {
    TaskSpec { dataset_id: id.into(), n_classes: c, dim: 12, n_samples: 600, mean_spread: 80.0, noise, seed }
}

fn all_rows(d: &Dataset) -> Vec<usize> {
    (0..d.n()).collect()
}

fn linear(d: &Dataset, seed: u64) -> ToyModel {
    ToyModel::new(ToyKind::Linear, Activation::Relu, InputTransform::A, d.spec.dim, d.spec.n_classes, 12, seed).unwrap()
}

struct Built {
    _dir: tempfile::TempDir,
    zoo: Zoo,
}

fn default_zoo() -> &'static Built {
    static ZOO: OnceLock<Built> = OnceLock::new();
    ZOO.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        build_toy_zoo(&ToySuite::default_suite(SEED), &GridSpec::default_grid(), SEED, dir.path()).unwrap();
        let zoo = Zoo::open(&dir.path().join("manifest.json")).unwrap();
        Built { _dir: dir, zoo }
    })
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn noiseless_task_is_learned_by_a_linear_model() {
    let d = gen_task(&task("clean", 5, 0.0, 3)).unwrap();
    for t in 0..d.n() {
        let y = d.labels[t];
        assert_eq!(d.row(t), &d.means[y * 12..(y + 1) * 12]);
    }
    let rows = all_rows(&d);
    let out = train(linear(&d, 1), &d, &rows, &TrainConfig::default()).unwrap();
    let acc = out.model.accuracy(&d, &rows);
    assert!(acc >= 0.99, "train accuracy {acc}");
}

#[test]
fn tasks_and_training_are_deterministic() {
    let spec = task("det", 4, 120.0, 9);
    let (a, b) = (gen_task(&spec).unwrap(), gen_task(&spec).unwrap());
    assert_eq!(a.features, b.features);
    assert_eq!(a.labels, b.labels);
    let rows = all_rows(&a);
    let cfg = TrainConfig { seed: 4, ..TrainConfig::default() };
    for kind in [ToyKind::Linear, ToyKind::Mlp1] {
        let m = || ToyModel::new(kind, Activation::Selu, InputTransform::B, 12, 4, 12, 2).unwrap();
        let x = train(m(), &a, &rows, &cfg).unwrap().model;
        let y = train(m(), &b, &rows, &cfg).unwrap().model;
        let bits = |m: &ToyModel| [&m.w1, &m.b1, &m.w2, &m.b2].iter().flat_map(|v| v.iter().map(|f| f.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&x), bits(&y));
    }
}

#[test]
fn two_rounds_on_the_target_equal_double_length_training() {
    let d = gen_task(&task("same", 3, 120.0, 5)).unwrap();
    let rows = all_rows(&d);
    let cfg = TrainConfig { epochs: 10, seed: 8, ..TrainConfig::default() };
    let two = two_round_train(linear(&d, 1), (&d, &rows), (&d, &rows), &cfg).unwrap();
    let long = train(linear(&d, 1), &d, &rows, &TrainConfig { epochs: 20, ..cfg.clone() }).unwrap();
    assert_eq!(two.model, long.model);
    assert_eq!(two.loss_trace, long.loss_trace);
}

#[test]
fn related_pretraining_starts_round_two_below_random_init() {
    let cfg = TrainConfig::default();
    let (mut pre, mut fresh) = (0.0, 0.0);
    let seeds = 24;
    for s in 0..seeds {
        let target = gen_task(&task("target", 5, 120.0, 100 + s)).unwrap();
        let related = gen_related_task(&target, 0.5, 200 + s).unwrap();
        let init = ToyModel::new(ToyKind::Mlp1, Activation::Relu, InputTransform::A, 12, 5, 12, s).unwrap();
        fresh += init.loss(&target, &all_rows(&target));
        let round_one = train(init, &related, &all_rows(&related), &TrainConfig { seed: s, ..cfg.clone() }).unwrap();
        pre += round_one.model.loss(&target, &all_rows(&target));
    }
    assert!(pre / (seeds as f64) < fresh / (seeds as f64), "pretrained {pre} vs fresh {fresh}");
}

#[test]
fn unrelated_round_one_still_converges() {
    let target = gen_task(&task("target", 4, 60.0, 1)).unwrap();
    let unrelated = gen_task(&task("noise", 7, 300.0, 99)).unwrap();
    let init = ToyModel::new(ToyKind::Mlp1, Activation::Relu, InputTransform::B, 12, 7, 12, 3).unwrap();
    let rows_t = all_rows(&target);
    let out = two_round_train(init, (&unrelated, &all_rows(&unrelated)), (&target, &rows_t), &TrainConfig::default()).unwrap();
    assert_eq!(out.model.n_classes, 4);
    let chance = 1.0 / 4.0;
    assert!(out.model.accuracy(&target, &rows_t) > chance + 0.2);
}

#[test]
fn snapshot_defaults_give_fifteen_distinct_models() {
    let d = gen_task(&task("inc", 4, 120.0, 2)).unwrap();
    let out = train_snapshots(linear(&d, 1), &d, &all_rows(&d), &TrainConfig::default()).unwrap();
    let epochs: Vec<usize> = out.snapshots.iter().map(|(e, _)| *e).collect();
    assert_eq!(epochs, (1..=15).map(|s| 3 * s).collect::<Vec<_>>());
    for (i, (_, a)) in out.snapshots.iter().enumerate() {
        for (_, b) in &out.snapshots[i + 1..] {
            assert_ne!(a.w2, b.w2);
        }
    }
}

#[test]
fn monte_carlo_bayes_error_is_positive_under_heavy_noise() {
    let spec = TaskSpec { n_samples: 20_000, ..task("bayes", 3, 150.0, 12) };
    let d = gen_task(&spec).unwrap();
    let errors = (0..d.n()).filter(|&t| nearest_mean(&d.means, d.spec.dim, d.row(t)) != d.labels[t]).count();
    let rate = errors as f64 / d.n() as f64;
    eprintln!("estimated Bayes error {rate:.4}");
    assert!(rate > 0.0 && rate < 2.0 / 3.0);
}

#[test]
fn related_task_keeps_shape_and_moves_means() {
    let base = gen_task(&task("b", 4, 10.0, 4)).unwrap();
    let r = gen_related_task(&base, 0.5, 1).unwrap();
    assert_eq!((r.spec.n_classes, r.spec.dim, r.n()), (4, 12, base.n()));
    assert_ne!(r.means, base.means);
    let same = gen_related_task(&base, 0.0, 1).unwrap();
    assert_eq!(same.means, base.means);
}

#[test]
fn default_grid_count_matches_closed_form() {
    let grid = GridSpec::default_grid();
    let suite = ToySuite::default_suite(SEED);
    let snapshots = grid.train.n_snapshots();
    // per kind: 1R on both transforms, 2R, INC snapshots; SELU only for the MLP
    let per_split = grid.kinds.len() * (grid.transforms.len() + 1 + snapshots) + 1;
    assert_eq!(per_split, 37);
    assert_eq!(grid.members_per_split(), per_split);
    let splits: usize = suite.tasks.iter().map(|(_, p)| p.n_splits()).sum();
    assert_eq!(splits, 18);
    let zoo = &default_zoo().zoo;
    assert_eq!(zoo.manifest.entries.len(), per_split * splits);
    assert_eq!(zoo.identities().len(), per_split);
}

#[test]
fn minimal_grid_has_one_member_per_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let suite = ToySuite::default_suite(SEED);
    let m = build_toy_zoo(&suite, &GridSpec::minimal(), SEED, dir.path()).unwrap();
    let zoo = Zoo::open(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(zoo.identities().len(), 1);
    assert_eq!(zoo.datasets().len(), 5);
    // one score file per protocol split
    assert_eq!(m.entries.len(), suite.tasks.iter().map(|(_, p)| p.n_splits()).sum::<usize>());
    for d in zoo.datasets() {
        assert_eq!(zoo.dataset_scores(&d).unwrap().len(), 1);
    }
}

#[test]
fn regeneration_is_byte_identical() {
    let suite = ToySuite {
        tasks: ToySuite::default_suite(3).tasks.into_iter().take(2).collect(),
        related_shift: 0.5,
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    build_toy_zoo(&suite, &GridSpec::default_grid(), 3, a.path()).unwrap();
    build_toy_zoo(&suite, &GridSpec::default_grid(), 3, b.path()).unwrap();
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert_eq!(ta.len(), 37 * 3 + 1);
    assert_eq!(ta, tb);
    let c = tempfile::tempdir().unwrap();
    write_suite(&suite, c.path()).unwrap();
    let d = tempfile::tempdir().unwrap();
    write_suite(&suite, d.path()).unwrap();
    assert_eq!(read_tree(c.path()), read_tree(d.path()));
}

#[test]
fn distinct_variants_disagree_on_noisy_tasks() {
    let zoo = &default_zoo().zoo;
    for d in zoo.datasets() {
        let members: Vec<_> = zoo.dataset_scores(&d).unwrap().into_iter().collect();
        let preds: Vec<Vec<usize>> = members.iter().map(|(_, m)| predict(m)).collect();
        let n = preds[0].len() as f64;
        let mut worst = (1.0, String::new());
        for i in 0..preds.len() {
            for j in i + 1..preds.len() {
                let diff = preds[i].iter().zip(&preds[j]).filter(|(a, b)| a != b).count() as f64 / n;
                if diff < worst.0 {
                    worst = (diff, format!("{} vs {}", members[i].0, members[j].0));
                }
            }
        }
        assert!(worst.0 >= 0.01, "{d}: {} disagree on only {:.4}", worst.1, worst.0);
    }
}

#[test]
fn selu_changes_predictions() {
    let zoo = &default_zoo().zoo;
    for d in zoo.datasets() {
        let ms = zoo.dataset_scores(&d).unwrap();
        let pick = |t: Tuning| ms.iter().find(|(k, _)| k.tuning == t && k.variant.as_deref() == Some("mlp1")).unwrap().1;
        assert_ne!(predict(pick(Tuning::Selu)), predict(pick(Tuning::OneRound)), "{d}");
    }
}

#[test]
fn default_suite_matches_benchmark_protocols() {
    let suite = ToySuite::default_suite(1);
    let protocols: Vec<Protocol> = suite.tasks.iter().map(|(_, p)| *p).collect();
    assert_eq!(
        protocols,
        [Protocol::HalfSplit, Protocol::KFold(2), Protocol::KFold(5), Protocol::KFold(5), Protocol::KFold(5)]
    );
    let data = generate_suite(&suite).unwrap();
    for d in &data {
        assert!(d.n() >= 10 * d.spec.n_classes);
    }
}
