//! Weighted selection: simplex weights over classifiers learned by SGD on
//! crossentropy plus a concave `Σ w_i^γ` penalty, then sparsified.
//!
//! Weights are parameterized as `w = softmax(θ)`, so every SGD step stays
//! on the simplex. Gradients are taken with respect to `θ`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::softmax_in_place;
use crate::selection::{EnsembleSelector, Selection};
use crate::zoo::ScoreMatrix;

/// Floor applied inside the logarithm of the crossentropy.
pub const CE_FLOOR: f64 = 1e-12;

const SIMPLEX_TOL: f64 = 1e-9;

/// A point on the probability simplex.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidConfig("empty weight vector".into()));
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("weights must be finite and non-negative".into()));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidConfig(format!("weights sum to {s}, not 1")));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn from_logits(theta: &[f64]) -> Self {
        let mut w = theta.to_vec();
        softmax_in_place(&mut w);
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WsConfig {
    /// Exponent of the sparsity penalty, in (0, 1).
    pub gamma: f64,
    pub reg_coefficient: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weights below this are zeroed; `None` means `1/(4n)`.
    pub zero_threshold: Option<f64>,
    /// Standard deviation of the initial logits.
    pub init_scale: f64,
}

impl Default for WsConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            reg_coefficient: 0.1,
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 64,
            seed: 0,
            zero_threshold: None,
            init_scale: 0.1,
        }
    }
}

impl WsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if !(self.reg_coefficient >= 0.0) {
            return Err(Error::InvalidConfig("reg_coefficient must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::InvalidConfig("learning_rate and batch_size must be positive".into()));
        }
        if let Some(t) = self.zero_threshold {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!("zero_threshold must lie in (0,1), got {t}")));
            }
        }
        Ok(())
    }

    pub fn threshold_for(&self, n: usize) -> f64 {
        self.zero_threshold.unwrap_or(1.0 / (4.0 * n as f64))
    }
}

/// Each member's score on the true class of every sample: `q[t*n + i]`.
struct TrueClassScores {
    n_members: usize,
    n_samples: usize,
    q: Vec<f64>,
}

impl TrueClassScores {
    fn new(members: &[ScoreMatrix]) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidConfig("no members".into()))?;
        for m in &members[1..] {
            first.check_aligned(m)?;
        }
        let (n, big_n) = (members.len(), first.n_samples());
        let mut q = Vec::with_capacity(n * big_n);
        for (t, &y) in first.labels().iter().enumerate() {
            q.extend(members.iter().map(|m| m.row(t)[y]));
        }
        Ok(Self { n_members: n, n_samples: big_n, q })
    }

    fn row(&self, t: usize) -> &[f64] {
        &self.q[t * self.n_members..(t + 1) * self.n_members]
    }

    fn crossentropy(&self, w: &[f64], rows: impl Iterator<Item = usize>) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for t in rows {
            let p: f64 = self.row(t).iter().zip(w).map(|(q, w)| q * w).sum();
            sum -= p.max(CE_FLOOR).ln();
            count += 1;
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// `dCE/dw_i`.
    fn ce_gradient(&self, w: &[f64], rows: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_members];
        for &t in rows {
            let q = self.row(t);
            let p: f64 = q.iter().zip(w).map(|(q, w)| q * w).sum();
            if p > CE_FLOOR {
                g.iter_mut().zip(q).for_each(|(g, q)| *g -= q / p);
            }
        }
        let scale = 1.0 / rows.len().max(1) as f64;
        g.iter_mut().for_each(|v| *v *= scale);
        g
    }
}

fn penalty(w: &[f64], gamma: f64) -> f64 {
    w.iter().map(|v| v.powf(gamma)).sum()
}

fn check_len(w: &WeightVector, n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::LengthMismatch(format!("{} weights for {n} members", w.len())));
    }
    Ok(())
}

/// Mean floored crossentropy of the weighted fusion plus `reg · Σ w^γ`.
pub fn ws_loss(w: &WeightVector, members: &[ScoreMatrix], cfg: &WsConfig) -> Result<f64> {
    let q = TrueClassScores::new(members)?;
    check_len(w, q.n_members)?;
    Ok(q.crossentropy(w.as_slice(), 0..q.n_samples) + cfg.reg_coefficient * penalty(w.as_slice(), cfg.gamma))
}

/// Gradient of [`ws_loss`] with respect to logits `θ` with `softmax(θ) = w`:
/// `∂L/∂θ_j = w_j (g_j − Σ_i w_i g_i)` where `g = ∂L/∂w`.
pub fn ws_gradient(w: &WeightVector, members: &[ScoreMatrix], cfg: &WsConfig) -> Result<Vec<f64>> {
    let q = TrueClassScores::new(members)?;
    check_len(w, q.n_members)?;
    let rows: Vec<usize> = (0..q.n_samples).collect();
    Ok(logit_gradient(&q, w.as_slice(), &rows, cfg))
}

fn logit_gradient(q: &TrueClassScores, w: &[f64], rows: &[usize], cfg: &WsConfig) -> Vec<f64> {
    let g_ce = q.ce_gradient(w, rows);
    // h_j = w_j g_j; the penalty part w_j·γ·w_j^(γ-1) is written as γ·w_j^γ, finite at 0
    let h: Vec<f64> = w
        .iter()
        .zip(&g_ce)
        .map(|(&wj, &gj)| wj * gj + cfg.reg_coefficient * cfg.gamma * wj.powf(cfg.gamma))
        .collect();
    let total: f64 = h.iter().sum();
    h.iter().zip(w).map(|(hj, wj)| hj - wj * total).collect()
}

/// Gradient with respect to `w` itself. The penalty term `γ w^(γ-1)` is
/// singular at zero weights.
pub fn ws_gradient_direct(w: &WeightVector, members: &[ScoreMatrix], cfg: &WsConfig) -> Result<Vec<f64>> {
    let q = TrueClassScores::new(members)?;
    check_len(w, q.n_members)?;
    if let Some(i) = w.as_slice().iter().position(|&v| v == 0.0) {
        return Err(Error::Singular(i));
    }
    let rows: Vec<usize> = (0..q.n_samples).collect();
    let g = q.ce_gradient(w.as_slice(), &rows);
    Ok(g.iter()
        .zip(w.as_slice())
        .map(|(g, &v)| g + cfg.reg_coefficient * cfg.gamma * v.powf(cfg.gamma - 1.0))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WsOutcome {
    pub weights: WeightVector,
    pub logits: Vec<f64>,
    /// Full-data loss after each epoch.
    pub loss_trace: Vec<f64>,
}

/// Minibatch SGD on the logits.
pub fn ws_optimize(members: &[ScoreMatrix], cfg: &WsConfig) -> Result<WsOutcome> {
    cfg.validate()?;
    let q = TrueClassScores::new(members)?;
    let n = q.n_members;
    let full_loss = |w: &[f64]| q.crossentropy(w, 0..q.n_samples) + cfg.reg_coefficient * penalty(w, cfg.gamma);
    if n == 1 {
        return Ok(WsOutcome { weights: WeightVector(vec![1.0]), logits: vec![0.0], loss_trace: vec![full_loss(&[1.0])] });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, cfg.init_scale.max(0.0)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut theta: Vec<f64> = (0..n).map(|_| init.sample(&mut rng)).collect();
    let mut order: Vec<usize> = (0..q.n_samples).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let w = WeightVector::from_logits(&theta);
            let g = logit_gradient(&q, w.as_slice(), batch, cfg);
            theta.iter_mut().zip(&g).for_each(|(t, g)| *t -= cfg.learning_rate * g);
        }
        let loss = full_loss(WeightVector::from_logits(&theta).as_slice());
        if !loss.is_finite() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Divergence { epoch: epoch + 1, loss });
        }
        trace.push(loss);
    }
    Ok(WsOutcome { weights: WeightVector::from_logits(&theta), logits: theta, loss_trace: trace })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectRule {
    Threshold(f64),
    TopK(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WsSelection {
    pub weights: WeightVector,
    /// Indices of the surviving members, ascending.
    pub selected: Vec<usize>,
}

/// Zeroes weights below a threshold (or outside the top `k`) and
/// renormalizes the survivors.
pub fn ws_select(w: &WeightVector, rule: SelectRule) -> Result<WsSelection> {
    let v = w.as_slice();
    let keep: Vec<bool> = match rule {
        SelectRule::Threshold(t) => v.iter().map(|&x| x >= t).collect(),
        SelectRule::TopK(k) => {
            if k == 0 || k > v.len() {
                return Err(Error::InvalidConfig(format!("top-k {k} outside 1..={}", v.len())));
            }
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
            let mut keep = vec![false; v.len()];
            idx[..k].iter().for_each(|&i| keep[i] = true);
            keep
        }
    };
    let total: f64 = v.iter().zip(&keep).filter(|(_, &k)| k).map(|(x, _)| x).sum();
    if total <= 0.0 {
        let t = match rule {
            SelectRule::Threshold(t) => t,
            SelectRule::TopK(_) => 0.0,
        };
        return Err(Error::EmptySelection(t));
    }
    let weights: Vec<f64> = v.iter().zip(&keep).map(|(&x, &k)| if k { x / total } else { 0.0 }).collect();
    let selected = keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect();
    Ok(WsSelection { weights: WeightVector(weights), selected })
}

/// Optimize-then-sparsify, usable under the leave-one-out protocol.
pub struct WsSelector {
    pub cfg: WsConfig,
    /// `None` uses the config's zeroing threshold.
    pub top_k: Option<usize>,
}

impl WsSelector {
    pub fn rule_for(&self, n: usize) -> SelectRule {
        match self.top_k {
            Some(k) => SelectRule::TopK(k.min(n)),
            None => SelectRule::Threshold(self.cfg.threshold_for(n)),
        }
    }
}

impl EnsembleSelector for WsSelector {
    fn select(&self, held_in: &[ScoreMatrix]) -> Result<Selection> {
        let out = ws_optimize(held_in, &self.cfg)?;
        let sel = ws_select(&out.weights, self.rule_for(held_in.len()))?;
        let weights = sel.selected.iter().map(|&i| sel.weights.as_slice()[i]).collect();
        Ok(Selection { members: sel.selected, weights })
    }
}
