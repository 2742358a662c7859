//! Sequential forward floating selection over classifiers and the
//! leave-one-out-dataset evaluation protocol.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{argmax, normalize_rows, weighted_sum, Normalization};
use crate::metrics::{accuracy_overall, confusion, f_measure_macro};
use crate::zoo::{IdentityKey, ScoreMatrix, Zoo};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    AccuracyOverall,
    FMacro,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "accuracy" | "accuracy_overall" | "acc" => Ok(Self::AccuracyOverall),
            "f_macro" | "fmacro" | "f" => Ok(Self::FMacro),
            other => Err(Error::Usage(format!("unknown objective `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub k_target: usize,
    pub objective: Objective,
    /// How far past `k_target` the floating search grows before stopping.
    pub lookahead: usize,
    /// Return exactly `k_target` members instead of the best subset of size ≤ `k_target`.
    pub exact_size: bool,
}

impl SelectionConfig {
    pub fn new(k_target: usize) -> Self {
        Self { k_target, objective: Objective::default(), lookahead: 1, exact_size: false }
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }
}

/// Scores a sum-rule subset. Summation runs in ascending `classifier_id`
/// order so values agree exactly with [`crate::fusion::sum_rule`].
struct Evaluator<'a> {
    /// Candidates sorted by id; subsets are indices into this.
    sorted: Vec<&'a ScoreMatrix>,
    /// Position in `sorted` → index in the caller's slice.
    original: Vec<usize>,
    objective: Objective,
    buf: Vec<f64>,
    cache: HashMap<Vec<usize>, f64>,
}

impl<'a> Evaluator<'a> {
    fn new(candidates: &'a [ScoreMatrix], objective: Objective) -> Result<Self> {
        let first = candidates
            .first()
            .ok_or_else(|| Error::InvalidConfig("empty candidate set".into()))?;
        for c in &candidates[1..] {
            first.check_aligned(c)?;
        }
        let mut original: Vec<usize> = (0..candidates.len()).collect();
        original.sort_by(|&a, &b| candidates[a].classifier_id.cmp(&candidates[b].classifier_id));
        let sorted = original.iter().map(|&i| &candidates[i]).collect();
        Ok(Self {
            sorted,
            original,
            objective,
            buf: vec![0.0; first.scores().len()],
            cache: HashMap::new(),
        })
    }

    fn n(&self) -> usize {
        self.sorted.len()
    }

    fn id(&self, pos: usize) -> &str {
        &self.sorted[pos].classifier_id
    }

    /// `subset` must be sorted ascending.
    fn eval(&mut self, subset: &[usize]) -> f64 {
        if let Some(&v) = self.cache.get(subset) {
            return v;
        }
        let v = self.compute(subset);
        self.cache.insert(subset.to_vec(), v);
        v
    }

    fn compute(&mut self, subset: &[usize]) -> f64 {
        let first = self.sorted[subset[0]];
        self.buf.copy_from_slice(first.scores());
        for &p in &subset[1..] {
            self.buf.iter_mut().zip(self.sorted[p].scores()).for_each(|(a, v)| *a += v);
        }
        let c = first.n_classes();
        let preds: Vec<usize> = self.buf.chunks_exact(c).map(argmax).collect();
        objective_value(self.objective, &preds, first.labels(), c)
    }
}

pub fn objective_value(objective: Objective, preds: &[usize], labels: &[usize], n_classes: usize) -> f64 {
    match objective {
        Objective::AccuracyOverall => {
            if labels.is_empty() {
                return 0.0;
            }
            let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
            hits as f64 / labels.len() as f64
        }
        Objective::FMacro => {
            let cm = confusion(preds, labels, n_classes).expect("predictions index the class set");
            f_measure_macro(&cm)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum SffsStep {
    Add { classifier_id: String, size: usize, objective: f64 },
    Remove { classifier_id: String, size: usize, objective: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeRecord {
    pub size: usize,
    pub subset: Vec<String>,
    pub objective: f64,
}

/// Working state of the floating search, in candidate-slice indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubsetState {
    /// Selected members in insertion order.
    pub selected: Vec<usize>,
    pub remaining: BTreeSet<usize>,
    pub best_by_size: BTreeMap<usize, (Vec<usize>, f64)>,
}

impl SubsetState {
    pub fn k(&self) -> usize {
        self.selected.len()
    }

    fn is_partition(&self, n: usize) -> bool {
        let sel: BTreeSet<usize> = self.selected.iter().copied().collect();
        sel.len() == self.selected.len()
            && sel.is_disjoint(&self.remaining)
            && sel.len() + self.remaining.len() == n
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SffsOutcome {
    /// Chosen members, as indices into the candidate slice, ascending by id.
    pub subset_indices: Vec<usize>,
    pub subset: Vec<String>,
    pub objective: f64,
    pub best_by_size: Vec<SizeRecord>,
    pub trace: Vec<SffsStep>,
    #[serde(skip)]
    pub state: SubsetState,
}

impl SffsOutcome {
    pub fn backtracked(&self) -> bool {
        self.trace.iter().any(|s| matches!(s, SffsStep::Remove { .. }))
    }

    pub fn best_of_size(&self, size: usize) -> Option<&SizeRecord> {
        self.best_by_size.iter().find(|r| r.size == size)
    }
}

/// Floating search over aligned, normalized candidate matrices.
///
/// Forward: add the remaining candidate whose sum-rule fusion with the
/// current subset maximizes the objective. Backward: drop the member whose
/// removal leaves the best subset, provided the result strictly beats both
/// the current subset and the best subset recorded at that smaller size.
/// The search grows to `k_target + lookahead` members.
/// Ties go to the lexicographically smallest `classifier_id`.
pub fn sffs(candidates: &[ScoreMatrix], cfg: &SelectionConfig) -> Result<SffsOutcome> {
    if cfg.k_target == 0 || cfg.k_target > candidates.len() {
        return Err(Error::InvalidConfig(format!(
            "k_target {} outside 1..={}",
            cfg.k_target,
            candidates.len()
        )));
    }
    let mut ev = Evaluator::new(candidates, cfg.objective)?;
    let n = ev.n();
    let limit = (cfg.k_target + cfg.lookahead).min(n);

    // positions in id-sorted order
    let mut selected: Vec<usize> = Vec::new();
    let mut remaining: BTreeSet<usize> = (0..n).collect();
    let mut best: BTreeMap<usize, (Vec<usize>, f64)> = BTreeMap::new();
    let mut trace = Vec::new();

    let sorted_of = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };

    while selected.len() < limit {
        let mut pick: Option<(usize, f64)> = None;
        for &cand in &remaining {
            let mut trial = selected.clone();
            trial.push(cand);
            let v = ev.eval(&sorted_of(&trial));
            if pick.is_none_or(|(_, b)| v > b) {
                pick = Some((cand, v));
            }
        }
        let (add, obj) = pick.expect("remaining is non-empty below the limit");
        selected.push(add);
        remaining.remove(&add);
        trace.push(SffsStep::Add { classifier_id: ev.id(add).to_string(), size: selected.len(), objective: obj });
        record(&mut best, &sorted_of(&selected), obj);

        while selected.len() > 1 {
            let current = ev.eval(&sorted_of(&selected));
            let mut worst: Option<(usize, f64)> = None;
            let mut by_id = selected.clone();
            by_id.sort_unstable();
            for &m in &by_id {
                let rest: Vec<usize> = by_id.iter().copied().filter(|&x| x != m).collect();
                let v = ev.eval(&rest);
                if worst.is_none_or(|(_, b)| v > b) {
                    worst = Some((m, v));
                }
            }
            let (drop, v) = worst.expect("subset has at least two members");
            let smaller = selected.len() - 1;
            let beats_record = best.get(&smaller).is_none_or(|(_, b)| v > *b);
            if v > current && beats_record {
                selected.retain(|&x| x != drop);
                remaining.insert(drop);
                trace.push(SffsStep::Remove { classifier_id: ev.id(drop).to_string(), size: smaller, objective: v });
                record(&mut best, &sorted_of(&selected), v);
            } else {
                break;
            }
        }
    }

    let chosen = if cfg.exact_size {
        best.get(&cfg.k_target).cloned().expect("search reaches k_target")
    } else {
        // best over sizes ≤ k_target, ties to the larger subset
        let mut out: Option<(Vec<usize>, f64)> = None;
        for (_, (s, v)) in best.range(1..=cfg.k_target) {
            if out.as_ref().is_none_or(|(_, b)| *v >= *b) {
                out = Some((s.clone(), *v));
            }
        }
        out.expect("search records size 1")
    };

    let to_original = |s: &[usize]| s.iter().map(|&p| ev.original[p]).collect::<Vec<_>>();
    let ids = |s: &[usize]| s.iter().map(|&p| ev.id(p).to_string()).collect::<Vec<_>>();
    let state = SubsetState {
        selected: to_original(&selected),
        remaining: remaining.iter().map(|&p| ev.original[p]).collect(),
        best_by_size: best.iter().map(|(&k, (s, v))| (k, (to_original(s), *v))).collect(),
    };
    debug_assert!(state.is_partition(n));
    Ok(SffsOutcome {
        subset_indices: to_original(&chosen.0),
        subset: ids(&chosen.0),
        objective: chosen.1,
        best_by_size: best
            .iter()
            .map(|(&size, (s, v))| SizeRecord { size, subset: ids(s), objective: *v })
            .collect(),
        trace,
        state,
    })
}

fn record(best: &mut BTreeMap<usize, (Vec<usize>, f64)>, subset: &[usize], value: f64) {
    let k = subset.len();
    if best.get(&k).is_none_or(|(_, b)| value > *b) {
        best.insert(k, (subset.to_vec(), value));
    }
}

pub const EXHAUSTIVE_BUDGET: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExhaustiveOutcome {
    pub subset_indices: Vec<usize>,
    pub subset: Vec<String>,
    pub objective: f64,
}

/// Best size-`k` subset by full enumeration; ties go to the
/// lexicographically smallest id sequence.
pub fn exhaustive_best(candidates: &[ScoreMatrix], k: usize, objective: Objective) -> Result<ExhaustiveOutcome> {
    let n = candidates.len();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("k {k} outside 1..={n}")));
    }
    let count = binomial(n, k);
    if count > EXHAUSTIVE_BUDGET {
        return Err(Error::BudgetExceeded { n, k, count, budget: EXHAUSTIVE_BUDGET });
    }
    let mut ev = Evaluator::new(candidates, objective)?;
    let mut comb: Vec<usize> = (0..k).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let v = ev.compute(&comb);
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((comb.clone(), v));
        }
        // next combination in lexicographic order
        let mut i = k;
        while i > 0 && comb[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        comb[i - 1] += 1;
        for j in i..k {
            comb[j] = comb[j - 1] + 1;
        }
    }
    let (s, v) = best.expect("at least one combination");
    Ok(ExhaustiveOutcome {
        subset_indices: s.iter().map(|&p| ev.original[p]).collect(),
        subset: s.iter().map(|&p| ev.id(p).to_string()).collect(),
        objective: v,
    })
}

/// Members chosen on held-in data, with their fusion weights.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Selection {
    pub members: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Anything that picks a weighted ensemble from aligned held-in candidates.
pub trait EnsembleSelector {
    fn select(&self, held_in: &[ScoreMatrix]) -> Result<Selection>;
}

pub struct SffsSelector(pub SelectionConfig);

impl EnsembleSelector for SffsSelector {
    fn select(&self, held_in: &[ScoreMatrix]) -> Result<Selection> {
        let out = sffs(held_in, &self.0)?;
        let weights = vec![1.0; out.subset_indices.len()];
        Ok(Selection { members: out.subset_indices, weights })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeldOutResult {
    pub held_out: String,
    pub subset: Vec<String>,
    pub weights: Vec<f64>,
    pub accuracy: f64,
    pub f_macro: f64,
    #[serde(skip)]
    pub sample_ids: Vec<String>,
    #[serde(skip)]
    pub labels: Vec<usize>,
    #[serde(skip)]
    pub predictions: Vec<usize>,
}

impl HeldOutResult {
    /// `sample_id,label,prediction` CSV.
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("sample_id,label,prediction\n");
        for ((id, y), p) in self.sample_ids.iter().zip(&self.labels).zip(&self.predictions) {
            out.push_str(&format!("{id},{y},{p}\n"));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LooReport {
    pub per_dataset: Vec<HeldOutResult>,
    pub avg_accuracy: f64,
}

/// Normalized, split-stacked scores of every classifier identity on each
/// dataset; each identity must cover every dataset.
pub struct CandidatePool {
    pub datasets: Vec<String>,
    pub identities: Vec<IdentityKey>,
    /// `scores[d][i]`: identity `i` on dataset `d`.
    pub scores: Vec<Vec<ScoreMatrix>>,
}

impl CandidatePool {
    pub fn from_zoo(zoo: &Zoo, datasets: &[String], normalization: Normalization) -> Result<Self> {
        let per: Vec<BTreeMap<IdentityKey, ScoreMatrix>> =
            datasets.iter().map(|d| zoo.dataset_scores(d)).collect::<Result<_>>()?;
        let identities: BTreeSet<IdentityKey> = per.iter().flat_map(|m| m.keys().cloned()).collect();
        let identities: Vec<IdentityKey> = identities.into_iter().collect();
        let mut scores = Vec::with_capacity(datasets.len());
        for (d, map) in datasets.iter().zip(&per) {
            let mut row = Vec::with_capacity(identities.len());
            for key in &identities {
                let m = map.get(key).ok_or_else(|| Error::Coverage {
                    classifier: key.to_string(),
                    dataset: d.clone(),
                })?;
                row.push(normalize_rows(m, normalization)?);
            }
            scores.push(row);
        }
        Ok(Self { datasets: datasets.to_vec(), identities, scores })
    }

    /// Each identity's scores on the listed datasets, block-stacked.
    pub fn stacked(&self, dataset_indices: &[usize]) -> Result<Vec<ScoreMatrix>> {
        (0..self.identities.len())
            .map(|i| {
                let parts: Vec<&ScoreMatrix> = dataset_indices.iter().map(|&d| &self.scores[d][i]).collect();
                ScoreMatrix::concat_blocks("stacked", &parts)
            })
            .collect()
    }

    /// Applies a selection to one dataset.
    pub fn evaluate(&self, dataset: usize, sel: &Selection) -> Result<HeldOutResult> {
        let mut order: Vec<usize> = (0..sel.members.len()).collect();
        order.sort_by(|&a, &b| self.identities[sel.members[a]].to_string().cmp(&self.identities[sel.members[b]].to_string()));
        let members: Vec<&ScoreMatrix> = order.iter().map(|&o| &self.scores[dataset][sel.members[o]]).collect();
        let weights: Vec<f64> = order.iter().map(|&o| sel.weights[o]).collect();
        let fused = weighted_sum("ensemble", &members, &weights)?;
        let preds: Vec<usize> = fused.rows().map(argmax).collect();
        let cm = confusion(&preds, fused.labels(), fused.n_classes())?;
        Ok(HeldOutResult {
            held_out: self.datasets[dataset].clone(),
            subset: order.iter().map(|&o| self.identities[sel.members[o]].to_string()).collect(),
            weights,
            accuracy: accuracy_overall(&cm)?,
            f_macro: f_measure_macro(&cm),
            sample_ids: fused.sample_ids().to_vec(),
            labels: fused.labels().to_vec(),
            predictions: preds,
        })
    }
}

/// Leave-one-dataset-out evaluation with any selector.
pub fn loo_with(pool: &CandidatePool, selector: &(dyn EnsembleSelector + Sync)) -> Result<LooReport> {
    use rayon::prelude::*;
    let n = pool.datasets.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!("leave-one-out needs at least 2 datasets, got {n}")));
    }
    let per_dataset = (0..n)
        .into_par_iter()
        .map(|held_out| {
            let held_in: Vec<usize> = (0..n).filter(|&d| d != held_out).collect();
            let candidates = pool.stacked(&held_in)?;
            let sel = selector.select(&candidates)?;
            pool.evaluate(held_out, &sel)
        })
        .collect::<Result<Vec<_>>>()?;
    let avg_accuracy = per_dataset.iter().map(|r| r.accuracy).sum::<f64>() / n as f64;
    Ok(LooReport { per_dataset, avg_accuracy })
}

/// SFFS under the leave-one-out-dataset protocol.
pub fn loo_protocol(
    zoo: &Zoo,
    datasets: &[String],
    cfg: &SelectionConfig,
    normalization: Normalization,
) -> Result<LooReport> {
    let pool = CandidatePool::from_zoo(zoo, datasets, normalization)?;
    loo_with(&pool, &SffsSelector(cfg.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn member(id: &str, labels: &[usize], c: usize, scores: Vec<f64>) -> ScoreMatrix {
        ScoreMatrix::new(
            id,
            "d",
            "s",
            (0..labels.len()).map(|i| format!("s{i}")).collect(),
            labels.to_vec(),
            c,
            scores,
        )
        .unwrap()
    }

    #[test]
    fn k1_is_best_single() {
        let labels = [0, 1, 1, 0];
        let a = member("a", &labels, 2, vec![0.9, 0.1, 0.4, 0.6, 0.6, 0.4, 0.8, 0.2]);
        let b = member("b", &labels, 2, vec![0.9, 0.1, 0.2, 0.8, 0.3, 0.7, 0.8, 0.2]);
        let out = sffs(&[a, b], &SelectionConfig::new(1)).unwrap();
        assert_eq!(out.subset, vec!["b".to_string()]);
        assert_eq!(out.objective, 1.0);
    }

    #[test]
    fn rejects_bad_k_and_empty() {
        assert!(sffs(&[], &SelectionConfig::new(1)).is_err());
        let a = member("a", &[0], 2, vec![1.0, 0.0]);
        assert!(sffs(&[a.clone()], &SelectionConfig::new(2)).is_err());
        assert!(sffs(&[a], &SelectionConfig::new(0)).is_err());
    }

    #[test]
    fn exhaustive_full_set_and_budget() {
        let labels = [0, 1];
        let ms: Vec<ScoreMatrix> =
            (0..3).map(|i| member(&format!("m{i}"), &labels, 2, vec![0.6, 0.4, 0.3, 0.7])).collect();
        let out = exhaustive_best(&ms, 3, Objective::AccuracyOverall).unwrap();
        assert_eq!(out.subset, vec!["m0", "m1", "m2"]);
        assert_eq!(binomial(40, 20), 137_846_528_820);
        let many: Vec<ScoreMatrix> =
            (0..40).map(|i| member(&format!("m{i:02}"), &labels, 2, vec![0.6, 0.4, 0.3, 0.7])).collect();
        assert!(matches!(
            exhaustive_best(&many, 20, Objective::AccuracyOverall),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn objective_parse() {
        assert_eq!("f_macro".parse::<Objective>().unwrap(), Objective::FMacro);
        assert_eq!("accuracy".parse::<Objective>().unwrap(), Objective::AccuracyOverall);
    }
}
