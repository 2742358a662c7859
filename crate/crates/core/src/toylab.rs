//! Desk-scale model zoos: Gaussian multi-class tasks and small classifiers
//! trained under the 1R / 2R / INC / SELU strategies and two input
//! representations, exported as standard score files.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::softmax_in_place;
use crate::zoo::{
    make_splits, save_scores, split_id, write_atomic, Architecture, ClassifierRecord, Manifest, ManifestEntry,
    Protocol, ProtocolSpec, Resize, ScoreMatrix, Tuning,
};

/// SELU scale λ.
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
/// SELU α.
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
    }
}

fn selu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// Seed mixing so related jobs get unrelated streams.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Parameters of an isotropic Gaussian classification task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub dataset_id: String,
    pub n_classes: usize,
    pub dim: usize,
    pub n_samples: usize,
    /// Per-coordinate standard deviation of the class means.
    pub mean_spread: f64,
    /// Per-coordinate standard deviation of samples around their class mean.
    pub noise: f64,
    pub seed: u64,
}

/// A generated task: features are row-major `n × dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: TaskSpec,
    pub means: Vec<f64>,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.features[t * self.spec.dim..(t + 1) * self.spec.dim]
    }

    pub fn sample_id(&self, t: usize) -> String {
        format!("{}-{t:05}", self.spec.dataset_id)
    }

    /// `label,f0,...` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for j in 0..self.spec.dim {
            out.push_str(&format!(",f{j}"));
        }
        out.push('\n');
        for t in 0..self.n() {
            out.push_str(&self.labels[t].to_string());
            for v in self.row(t) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

fn draw_samples(spec: &TaskSpec, means: Vec<f64>, rng: &mut ChaCha8Rng) -> Dataset {
    let d = spec.dim;
    let mut features = Vec::with_capacity(spec.n_samples * d);
    let mut labels = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let y = rng.gen_range(0..spec.n_classes);
        labels.push(y);
        for j in 0..d {
            features.push(means[y * d + j] + spec.noise * gauss(rng));
        }
    }
    Dataset { spec: spec.clone(), means, features, labels }
}

fn check_spec(spec: &TaskSpec) -> Result<()> {
    if spec.n_classes < 2 {
        return Err(Error::InvalidConfig(format!("task needs at least 2 classes, got {}", spec.n_classes)));
    }
    if spec.dim == 0 || spec.n_samples < 10 * spec.n_classes {
        return Err(Error::InvalidConfig(format!(
            "task needs dim > 0 and at least {} samples",
            10 * spec.n_classes
        )));
    }
    if !(spec.mean_spread > 0.0) || !(spec.noise >= 0.0) {
        return Err(Error::InvalidConfig("mean_spread must be positive and noise non-negative".into()));
    }
    Ok(())
}

/// Per-class Gaussian samples, labels drawn uniformly.
pub fn gen_task(spec: &TaskSpec) -> Result<Dataset> {
    check_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means: Vec<f64> = (0..spec.n_classes * spec.dim).map(|_| spec.mean_spread * gauss(&mut rng)).collect();
    Ok(draw_samples(spec, means, &mut rng))
}

/// A task "similar" to `base`: same classes and dimension, class means
/// displaced by Gaussian noise of scale `shift · mean_spread`, fresh samples.
pub fn gen_related_task(base: &Dataset, shift: f64, seed: u64) -> Result<Dataset> {
    let spec = TaskSpec { dataset_id: format!("{}-related", base.spec.dataset_id), seed, ..base.spec.clone() };
    check_spec(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = base.means.iter().map(|m| m + shift * spec.mean_spread * gauss(&mut rng)).collect();
    Ok(draw_samples(&spec, means, &mut rng))
}

/// Nearest-mean rule, which is Bayes-optimal for equal-prior isotropic
/// Gaussians with a shared variance.
pub fn nearest_mean(means: &[f64], dim: usize, x: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, m) in means.chunks_exact(dim).enumerate() {
        let d2: f64 = m.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best.1 {
            best = (c, d2);
        }
    }
    best.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyKind {
    Linear,
    Mlp1,
}

impl ToyKind {
    pub fn tag(self) -> &'static str {
        match self {
            ToyKind::Linear => "linear",
            ToyKind::Mlp1 => "mlp1",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Selu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Selu => selu(x),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => f64::from(u8::from(x > 0.0)),
            Activation::Selu => selu_derivative(x),
        }
    }
}

/// Fixed invertible feature maps standing in for two resizing strategies.
/// `A` is the identity; `B` is a unit lower-triangular mixing followed by a
/// per-feature rescaling, fixed by the dimension alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputTransform {
    A,
    B,
}

impl InputTransform {
    pub fn resize(self) -> Resize {
        match self {
            InputTransform::A => Resize::SqR,
            InputTransform::B => Resize::Pad,
        }
    }

    fn matrix(self, dim: usize) -> Option<Vec<f64>> {
        match self {
            InputTransform::A => None,
            InputTransform::B => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(0xB, dim as u64));
                let mut m = vec![0.0; dim * dim];
                for i in 0..dim {
                    let scale = 0.5 + rng.gen::<f64>();
                    for j in 0..i {
                        m[i * dim + j] = scale * 0.5 * gauss(&mut rng) / (dim as f64).sqrt();
                    }
                    m[i * dim + i] = scale;
                }
                Some(m)
            }
        }
    }

    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        match self.matrix(x.len()) {
            None => x.to_vec(),
            Some(m) => m.chunks_exact(x.len()).map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect(),
        }
    }
}

/// A linear softmax classifier or a one-hidden-layer perceptron.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToyModel {
    pub kind: ToyKind,
    pub activation: Activation,
    pub transform: InputTransform,
    pub dim: usize,
    pub n_classes: usize,
    pub hidden: usize,
    /// `hidden × dim` (empty for linear).
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `n_classes × width` with width = dim (linear) or hidden.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ToyModel {
    pub fn new(
        kind: ToyKind,
        activation: Activation,
        transform: InputTransform,
        dim: usize,
        n_classes: usize,
        hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        if kind == ToyKind::Mlp1 && hidden < 2 {
            return Err(Error::InvalidConfig("hidden width must be at least 2".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = if kind == ToyKind::Mlp1 { hidden } else { 0 };
        let mut init = |fan_in: usize, len: usize| -> Vec<f64> {
            let s = 1.0 / (fan_in as f64).sqrt();
            (0..len).map(|_| s * gauss(&mut rng)).collect()
        };
        let w1 = init(dim, hidden * dim);
        let width = if hidden > 0 { hidden } else { dim };
        let w2 = init(width, n_classes * width);
        Ok(Self {
            kind,
            activation,
            transform,
            dim,
            n_classes,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; n_classes],
        })
    }

    fn width(&self) -> usize {
        if self.hidden > 0 {
            self.hidden
        } else {
            self.dim
        }
    }

    /// Pre-activations and representation fed to the output layer.
    fn hidden_layer(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        if self.hidden == 0 {
            return (Vec::new(), z.to_vec());
        }
        let pre: Vec<f64> = self
            .w1
            .chunks_exact(self.dim)
            .zip(&self.b1)
            .map(|(r, b)| b + r.iter().zip(z).map(|(a, x)| a * x).sum::<f64>())
            .collect();
        let act = pre.iter().map(|&v| self.activation.apply(v)).collect();
        (pre, act)
    }

    fn output(&self, h: &[f64]) -> Vec<f64> {
        self.w2
            .chunks_exact(self.width())
            .zip(&self.b2)
            .map(|(r, b)| b + r.iter().zip(h).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }

    /// Raw class scores for one untransformed feature vector.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let z = self.transform.apply(x);
        self.output(&self.hidden_layer(&z).1)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        crate::fusion::argmax(&self.logits(x))
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).all(|v| v.is_finite())
    }

    fn reset_head(&mut self, n_classes: usize, rng: &mut ChaCha8Rng) {
        let width = self.width();
        let s = 1.0 / (width as f64).sqrt();
        self.n_classes = n_classes;
        self.w2 = (0..n_classes * width).map(|_| s * gauss(rng)).collect();
        self.b2 = vec![0.0; n_classes];
    }

    /// Mean crossentropy over `rows`.
    pub fn loss(&self, data: &Dataset, rows: &[usize]) -> f64 {
        let mut total = 0.0;
        for &t in rows {
            let mut p = self.logits(data.row(t));
            softmax_in_place(&mut p);
            total -= p[data.labels[t]].max(1e-300).ln();
        }
        total / rows.len().max(1) as f64
    }

    pub fn accuracy(&self, data: &Dataset, rows: &[usize]) -> f64 {
        let hits = rows.iter().filter(|&&t| self.predict(data.row(t)) == data.labels[t]).count();
        hits as f64 / rows.len().max(1) as f64
    }

    /// One SGD step on the mean crossentropy of a minibatch.
    fn sgd_step(&mut self, data: &Dataset, batch: &[usize], lr: f64) {
        let width = self.width();
        let c = self.n_classes;
        let mut g_w2 = vec![0.0; self.w2.len()];
        let mut g_b2 = vec![0.0; c];
        let mut g_w1 = vec![0.0; self.w1.len()];
        let mut g_b1 = vec![0.0; self.hidden];
        let m = self.transform.matrix(self.dim);
        for &t in batch {
            let z = match &m {
                None => data.row(t).to_vec(),
                Some(m) => m
                    .chunks_exact(self.dim)
                    .map(|r| r.iter().zip(data.row(t)).map(|(a, b)| a * b).sum())
                    .collect(),
            };
            let (pre, h) = self.hidden_layer(&z);
            let mut d_out = self.output(&h);
            softmax_in_place(&mut d_out);
            d_out[data.labels[t]] -= 1.0;
            for k in 0..c {
                g_b2[k] += d_out[k];
                for j in 0..width {
                    g_w2[k * width + j] += d_out[k] * h[j];
                }
            }
            if self.hidden > 0 {
                for j in 0..self.hidden {
                    let back: f64 = (0..c).map(|k| self.w2[k * width + j] * d_out[k]).sum();
                    let d_pre = back * self.activation.derivative(pre[j]);
                    g_b1[j] += d_pre;
                    for i in 0..self.dim {
                        g_w1[j * self.dim + i] += d_pre * z[i];
                    }
                }
            }
        }
        let s = lr / batch.len() as f64;
        let update = |w: &mut [f64], g: &[f64]| w.iter_mut().zip(g).for_each(|(w, g)| *w -= s * g);
        update(&mut self.w2, &g_w2);
        update(&mut self.b2, &g_b2);
        update(&mut self.w1, &g_w1);
        update(&mut self.b1, &g_b1);
    }

    /// Score matrix on `rows`, with raw logits as scores.
    pub fn score_matrix(&self, classifier_id: &str, data: &Dataset, rows: &[usize], split: &str) -> Result<ScoreMatrix> {
        let mut scores = Vec::with_capacity(rows.len() * self.n_classes);
        for &t in rows {
            scores.extend(self.logits(data.row(t)));
        }
        ScoreMatrix::new(
            classifier_id,
            data.spec.dataset_id.clone(),
            split,
            rows.iter().map(|&t| data.sample_id(t)).collect(),
            rows.iter().map(|&t| data.labels[t]).collect(),
            self.n_classes,
            scores,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub snapshot_every: usize,
    pub total_snapshot_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, lr: 0.001, batch: 32, snapshot_every: 3, total_snapshot_epochs: 45, seed: 0 }
    }
}

impl TrainConfig {
    pub fn n_snapshots(&self) -> usize {
        self.total_snapshot_epochs / self.snapshot_every.max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainOutcome {
    pub model: ToyModel,
    /// `(epoch, model)` pairs when snapshots were requested.
    pub snapshots: Vec<(usize, ToyModel)>,
    /// Training loss after each epoch.
    pub loss_trace: Vec<f64>,
}

fn check_dims(model: &ToyModel, data: &Dataset) -> Result<()> {
    if model.dim != data.spec.dim {
        return Err(Error::LengthMismatch(format!(
            "model expects {} features, task has {}",
            model.dim, data.spec.dim
        )));
    }
    if model.n_classes != data.spec.n_classes {
        return Err(Error::LengthMismatch(format!(
            "model has {} outputs, task has {} classes",
            model.n_classes, data.spec.n_classes
        )));
    }
    Ok(())
}

fn run_epochs(
    model: &mut ToyModel,
    data: &Dataset,
    rows: &[usize],
    cfg: &TrainConfig,
    epochs: usize,
    rng: &mut ChaCha8Rng,
    mut on_epoch: impl FnMut(usize, &ToyModel),
) -> Result<Vec<f64>> {
    check_dims(model, data)?;
    let mut trace = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        // fresh copy each epoch: the order depends on the rng stream alone
        let mut order = rows.to_vec();
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch.max(1)) {
            model.sgd_step(data, batch, cfg.lr);
        }
        let loss = model.loss(data, rows);
        if !loss.is_finite() || !model.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        trace.push(loss);
        on_epoch(epoch, model);
    }
    Ok(trace)
}

/// Minibatch SGD on softmax crossentropy for `cfg.epochs` epochs.
pub fn train(model: ToyModel, data: &Dataset, rows: &[usize], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = model;
    let loss_trace = run_epochs(&mut model, data, rows, cfg, cfg.epochs, &mut rng, |_, _| {})?;
    Ok(TrainOutcome { model, snapshots: Vec::new(), loss_trace })
}

/// Trains for `total_snapshot_epochs`, keeping a copy every `snapshot_every` epochs.
pub fn train_snapshots(model: ToyModel, data: &Dataset, rows: &[usize], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.snapshot_every == 0 {
        return Err(Error::InvalidConfig("snapshot_every must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = model;
    let mut snapshots = Vec::new();
    let loss_trace = run_epochs(&mut model, data, rows, cfg, cfg.total_snapshot_epochs, &mut rng, |e, m| {
        if e % cfg.snapshot_every == 0 {
            snapshots.push((e, m.clone()));
        }
    })?;
    Ok(TrainOutcome { model, snapshots, loss_trace })
}

/// Trains on a related task, then continues on the target. When class
/// counts differ the output layer is re-initialized between rounds.
pub fn two_round_train(
    model: ToyModel,
    related: (&Dataset, &[usize]),
    target: (&Dataset, &[usize]),
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if related.0.spec.dim != target.0.spec.dim {
        return Err(Error::LengthMismatch("related and target tasks differ in dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = model;
    let mut trace = run_epochs(&mut model, related.0, related.1, cfg, cfg.epochs, &mut rng, |_, _| {})?;
    if model.n_classes != target.0.spec.n_classes {
        model.reset_head(target.0.spec.n_classes, &mut rng);
    }
    trace.extend(run_epochs(&mut model, target.0, target.1, cfg, cfg.epochs, &mut rng, |_, _| {})?);
    Ok(TrainOutcome { model, snapshots: Vec::new(), loss_trace: trace })
}

/// The synthetic datasets of a toy zoo with their protocols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySuite {
    pub tasks: Vec<(TaskSpec, Protocol)>,
    /// Mean displacement of the related task used by two-round training.
    pub related_shift: f64,
}

impl ToySuite {
    /// Five tasks echoing the benchmark protocols (half split, 2-fold and
    /// three 5-fold datasets). Features are on a large scale so that plain
    /// SGD at lr 0.001 moves quickly and its iterates stay noisy, which is
    /// where the members' diversity comes from.
    pub fn default_suite(seed: u64) -> Self {
        let plan: [(&str, usize, usize, Protocol); 5] = [
            ("toy_whoi", 6, 2880, Protocol::HalfSplit),
            ("toy_zooscan", 5, 2400, Protocol::KFold(2)),
            ("toy_kaggle", 8, 3360, Protocol::KFold(5)),
            ("toy_eilat", 4, 1920, Protocol::KFold(5)),
            ("toy_rsmas", 6, 2160, Protocol::KFold(5)),
        ];
        let tasks = plan
            .iter()
            .enumerate()
            .map(|(i, &(id, c, n, p))| {
                (
                    TaskSpec {
                        dataset_id: id.to_string(),
                        n_classes: c,
                        dim: 12,
                        n_samples: n,
                        mean_spread: 80.0,
                        noise: 120.0,
                        seed: mix_seed(seed, i as u64 + 1),
                    },
                    p,
                )
            })
            .collect();
        Self { tasks, related_shift: 0.5 }
    }
}

/// Which variants a zoo contains. One-round models are trained on every
/// transform; two-round, incremental and SELU variants use the first
/// transform only, and SELU applies to MLP kinds only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kinds: Vec<ToyKind>,
    pub transforms: Vec<InputTransform>,
    pub two_round: bool,
    pub incremental: bool,
    pub selu: bool,
    pub hidden: usize,
    pub train: TrainConfig,
}

impl GridSpec {
    pub fn default_grid() -> Self {
        Self {
            kinds: vec![ToyKind::Linear, ToyKind::Mlp1],
            transforms: vec![InputTransform::A, InputTransform::B],
            two_round: true,
            incremental: true,
            selu: true,
            hidden: 12,
            train: TrainConfig::default(),
        }
    }

    /// A single linear one-round variant.
    pub fn minimal() -> Self {
        Self {
            kinds: vec![ToyKind::Linear],
            transforms: vec![InputTransform::A],
            two_round: false,
            incremental: false,
            selu: false,
            ..Self::default_grid()
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default_grid()),
            "minimal" => Ok(Self::minimal()),
            other => Err(Error::Usage(format!("unknown grid `{other}` (expected default|minimal)"))),
        }
    }

    /// Members per dataset split.
    pub fn members_per_split(&self) -> usize {
        self.variants().len()
    }

    /// Every variant, in a fixed order.
    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for &kind in &self.kinds {
            for &transform in &self.transforms {
                out.push(Variant { kind, activation: Activation::Relu, transform, tuning: Tuning::OneRound, epoch: None });
            }
            let Some(&first) = self.transforms.first() else { continue };
            if self.two_round {
                out.push(Variant { kind, activation: Activation::Relu, transform: first, tuning: Tuning::TwoRound, epoch: None });
            }
            if self.incremental {
                let every = self.train.snapshot_every.max(1);
                for s in 1..=self.train.n_snapshots() {
                    out.push(Variant {
                        kind,
                        activation: Activation::Relu,
                        transform: first,
                        tuning: Tuning::Incremental,
                        epoch: Some((s * every) as u32),
                    });
                }
            }
            if self.selu && kind == ToyKind::Mlp1 {
                out.push(Variant { kind, activation: Activation::Selu, transform: first, tuning: Tuning::Selu, epoch: None });
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Variant {
    pub kind: ToyKind,
    pub activation: Activation,
    pub transform: InputTransform,
    pub tuning: Tuning,
    pub epoch: Option<u32>,
}

impl Variant {
    pub fn record(&self) -> ClassifierRecord {
        let resize = self.transform.resize();
        let mut id = format!("toy-{}_{}_{}", self.kind.tag(), self.tuning, resize);
        if let Some(e) = self.epoch {
            id.push_str(&format!("_e{e:02}"));
        }
        ClassifierRecord {
            classifier_id: id,
            architecture: Architecture::Toy,
            tuning: self.tuning,
            resize,
            epoch_tag: self.epoch,
            variant: Some(self.kind.tag().to_string()),
        }
    }
}

/// One training job: a (kind, activation, transform, strategy) on one fold.
struct Job<'a> {
    data: &'a Dataset,
    related: &'a Dataset,
    dataset_index: usize,
    fold: usize,
    train_rows: Vec<usize>,
    test_rows: Vec<usize>,
    kind: ToyKind,
    activation: Activation,
    transform: InputTransform,
    tuning: Tuning,
}

fn job_salt(j: &Job<'_>) -> u64 {
    let kind = j.kind as u64;
    let tr = j.transform as u64;
    let tu = Tuning::ALL.iter().position(|t| *t == j.tuning).unwrap_or(0) as u64;
    ((j.dataset_index as u64 * 64 + j.fold as u64) * 16 + kind * 4 + tr) * 8 + tu
}

fn run_job(job: &Job<'_>, grid: &GridSpec, seed: u64) -> Result<Vec<(ClassifierRecord, ScoreMatrix)>> {
    let s = mix_seed(seed, job_salt(job));
    let spec = &job.data.spec;
    let model = ToyModel::new(job.kind, job.activation, job.transform, spec.dim, spec.n_classes, grid.hidden, s)?;
    let cfg = TrainConfig { seed: mix_seed(s, 1), ..grid.train.clone() };
    let split = split_id(job.fold);
    let variant = |epoch| Variant { kind: job.kind, activation: job.activation, transform: job.transform, tuning: job.tuning, epoch };
    let export = |v: Variant, m: &ToyModel| -> Result<(ClassifierRecord, ScoreMatrix)> {
        let rec = v.record();
        let sm = m.score_matrix(&rec.classifier_id, job.data, &job.test_rows, &split)?;
        Ok((rec, sm))
    };
    match job.tuning {
        Tuning::OneRound | Tuning::Selu => {
            let out = train(model, job.data, &job.train_rows, &cfg)?;
            Ok(vec![export(variant(None), &out.model)?])
        }
        Tuning::TwoRound => {
            let related_rows: Vec<usize> = (0..job.related.n()).collect();
            let out = two_round_train(model, (job.related, &related_rows), (job.data, &job.train_rows), &cfg)?;
            Ok(vec![export(variant(None), &out.model)?])
        }
        Tuning::Incremental => {
            let out = train_snapshots(model, job.data, &job.train_rows, &cfg)?;
            out.snapshots.iter().map(|(e, m)| export(variant(Some(*e as u32)), m)).collect()
        }
    }
}

/// Generates the suite's datasets.
pub fn generate_suite(suite: &ToySuite) -> Result<Vec<Dataset>> {
    suite.tasks.iter().map(|(spec, _)| gen_task(spec)).collect()
}

/// Writes each generated task as CSV plus a `tasks.json` description.
pub fn write_suite(suite: &ToySuite, out_dir: &Path) -> Result<Vec<Dataset>> {
    let data = generate_suite(suite)?;
    for d in &data {
        write_atomic(&out_dir.join(format!("{}.csv", d.spec.dataset_id)), d.to_csv().as_bytes())?;
    }
    let mut json = serde_json::to_string_pretty(suite)?;
    json.push('\n');
    write_atomic(&out_dir.join("tasks.json"), json.as_bytes())?;
    Ok(data)
}

/// Trains every variant on every fold of every task and writes score files
/// plus `manifest.json` under `out_dir`.
pub fn build_toy_zoo(suite: &ToySuite, grid: &GridSpec, seed: u64, out_dir: &Path) -> Result<Manifest> {
    let data = generate_suite(suite)?;
    let related: Vec<Dataset> = data
        .iter()
        .enumerate()
        .map(|(i, d)| gen_related_task(d, suite.related_shift, mix_seed(seed, 1000 + i as u64)))
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    for (di, ((spec, protocol), d)) in suite.tasks.iter().zip(&data).enumerate() {
        let pspec = ProtocolSpec::new(spec.dataset_id.clone(), spec.n_classes, *protocol);
        let splits = make_splits(d.n(), &pspec, mix_seed(seed, 500 + di as u64))?;
        for (fold, sp) in splits.into_iter().enumerate() {
            for v in grid.variants() {
                // snapshots after the first come from the same job
                if v.epoch.is_some_and(|e| e as usize != grid.train.snapshot_every.max(1)) {
                    continue;
                }
                jobs.push(Job {
                    data: d,
                    related: &related[di],
                    dataset_index: di,
                    fold,
                    train_rows: sp.train.clone(),
                    test_rows: sp.test.clone(),
                    kind: v.kind,
                    activation: v.activation,
                    transform: v.transform,
                    tuning: v.tuning,
                });
            }
        }
    }

    let results: Vec<Vec<(ClassifierRecord, ScoreMatrix)>> =
        jobs.par_iter().map(|j| run_job(j, grid, seed)).collect::<Result<_>>()?;

    let mut manifest = Manifest {
        zoo_root: ".".into(),
        classes: Vec::new(),
        dataset_classes: suite
            .tasks
            .iter()
            .map(|(s, _)| (s.dataset_id.clone(), (0..s.n_classes).map(|c| format!("class_{c}")).collect()))
            .collect(),
        entries: Vec::new(),
        base_dir: out_dir.to_path_buf(),
    };
    let mut files = Vec::new();
    for (rec, sm) in results.into_iter().flatten() {
        let rel = Path::new("scores")
            .join(&sm.dataset_id)
            .join(sm.split_id.replace('/', "_"))
            .join(format!("{}.csv", rec.classifier_id));
        manifest.entries.push(ManifestEntry {
            record: rec,
            dataset_id: sm.dataset_id.clone(),
            split_id: sm.split_id.clone(),
            path: rel.clone(),
        });
        files.push((rel, sm));
    }
    files.par_iter().map(|(rel, sm)| save_scores(&out_dir.join(rel), sm)).collect::<Result<Vec<()>>>()?;
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(noise: f64, seed: u64) -> TaskSpec {
        TaskSpec { dataset_id: "t".into(), n_classes: 3, dim: 6, n_samples: 120, mean_spread: 1.0, noise, seed }
    }

    #[test]
    fn selu_values() {
        assert_eq!(selu(0.0), 0.0);
        assert!((selu(1.0) - 1.0507009873554805).abs() < 1e-15);
        assert!((selu(-50.0) + SELU_LAMBDA * SELU_ALPHA).abs() < 1e-12);
    }

    #[test]
    fn task_rejects_degenerate_specs() {
        assert!(gen_task(&TaskSpec { n_classes: 1, ..spec(1.0, 0) }).is_err());
        assert!(gen_task(&TaskSpec { n_samples: 20, ..spec(1.0, 0) }).is_err());
    }

    #[test]
    fn zero_noise_samples_sit_on_means() {
        let d = gen_task(&spec(0.0, 3)).unwrap();
        for t in 0..d.n() {
            let y = d.labels[t];
            assert_eq!(d.row(t), &d.means[y * 6..(y + 1) * 6]);
            assert_eq!(nearest_mean(&d.means, 6, d.row(t)), y);
        }
    }

    #[test]
    fn transform_b_is_invertible_triangular() {
        let m = InputTransform::B.matrix(5).unwrap();
        for i in 0..5 {
            assert!(m[i * 5 + i] >= 0.5);
            for j in i + 1..5 {
                assert_eq!(m[i * 5 + j], 0.0);
            }
        }
        assert_eq!(InputTransform::A.apply(&[1.0, 2.0]), vec![1.0, 2.0]);
    }

    #[test]
    fn mlp_needs_two_hidden_units() {
        assert!(ToyModel::new(ToyKind::Mlp1, Activation::Relu, InputTransform::A, 4, 2, 1, 0).is_err());
    }

    #[test]
    fn default_snapshot_count() {
        assert_eq!(TrainConfig::default().n_snapshots(), 15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let d = gen_task(&spec(1.0, 0)).unwrap();
        let m = ToyModel::new(ToyKind::Linear, Activation::Relu, InputTransform::A, 5, 3, 0, 0).unwrap();
        assert!(train(m, &d, &[0, 1], &TrainConfig::default()).is_err());
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let d = gen_task(&TaskSpec { mean_spread: 100.0, ..spec(50.0, 0) }).unwrap();
        let m = ToyModel::new(ToyKind::Mlp1, Activation::Selu, InputTransform::A, 6, 3, 8, 0).unwrap();
        let rows: Vec<usize> = (0..d.n()).collect();
        let cfg = TrainConfig { lr: 1e6, ..TrainConfig::default() };
        assert!(matches!(train(m, &d, &rows, &cfg), Err(Error::Divergence { .. })));
    }
}
