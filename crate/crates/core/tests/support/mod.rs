// Shared helpers; not every test binary uses every item.
#![allow(dead_code)]

use ensemblier::ScoreMatrix;
use rand::Rng;

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|t| format!("s{t:04}")).collect()
}

pub fn matrix(id: &str, labels: &[usize], c: usize, scores: Vec<f64>) -> ScoreMatrix {
    ScoreMatrix::new(id, "d", "s", ids(labels.len()), labels.to_vec(), c, scores).unwrap()
}

/// `n` aligned members with uniform random scores in [0, 1).
pub fn random_members<R: Rng>(rng: &mut R, n: usize, samples: usize, c: usize) -> Vec<ScoreMatrix> {
    let labels: Vec<usize> = (0..samples).map(|_| rng.gen_range(0..c)).collect();
    (0..n)
        .map(|i| {
            let scores = (0..samples * c).map(|_| rng.gen::<f64>()).collect();
            matrix(&format!("m{i:02}"), &labels, c, scores)
        })
        .collect()
}

/// Members whose rows are probability vectors.
pub fn random_posteriors<R: Rng>(rng: &mut R, n: usize, samples: usize, c: usize) -> Vec<ScoreMatrix> {
    random_members(rng, n, samples, c)
        .into_iter()
        .map(|m| {
            let mut s = m.scores().to_vec();
            for row in s.chunks_exact_mut(c) {
                let sum: f64 = row.iter().map(|v| v + 0.05).sum();
                row.iter_mut().for_each(|v| *v = (*v + 0.05) / sum);
            }
            m.with_scores(m.classifier_id.clone(), s).unwrap()
        })
        .collect()
}

/// Brute-force macro F-measure, macro accuracy and overall accuracy
/// computed straight from the label arrays.
pub fn brute_metrics(pred: &[usize], labels: &[usize], c: usize) -> (f64, f64, f64) {
    let n = labels.len();
    let mut f = 0.0;
    let mut a = 0.0;
    for k in 0..c {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&p, &y) in pred.iter().zip(labels) {
            match (p == k, y == k) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        f += if tp + fp + fn_ == 0 { 1.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
        a += (n - fp - fn_) as f64 / n as f64;
    }
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    (f / c as f64, a / c as f64, hits as f64 / n as f64)
}

/// Independent sum of block scores by plain loops over the members.
pub fn naive_sum(members: &[&ScoreMatrix]) -> Vec<f64> {
    let mut sorted = members.to_vec();
    sorted.sort_by(|a, b| a.classifier_id.cmp(&b.classifier_id));
    let len = sorted[0].scores().len();
    (0..len).map(|j| sorted.iter().fold(0.0, |acc, m| acc + m.scores()[j])).collect()
}
