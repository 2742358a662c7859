//! Score-matrix data model, on-disk zoo format, dataset protocol registry
//! and seeded split generation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered class names with a reverse index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMap {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ClassMap {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "a class map needs at least 2 classes, got {}",
                names.len()
            )));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate class name `{n}`")));
            }
        }
        Ok(Self { names, index })
    }

    /// Class names `class_0 .. class_{c-1}`.
    pub fn numbered(c: usize) -> Result<Self> {
        Self::new((0..c).map(|i| format!("class_{i}")))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

/// One classifier's class scores for every sample of one dataset split.
///
/// Scores are stored row-major, `n_samples × n_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    pub classifier_id: String,
    pub dataset_id: String,
    pub split_id: String,
    sample_ids: Vec<String>,
    labels: Vec<usize>,
    n_classes: usize,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(
        classifier_id: impl Into<String>,
        dataset_id: impl Into<String>,
        split_id: impl Into<String>,
        sample_ids: Vec<String>,
        labels: Vec<usize>,
        n_classes: usize,
        scores: Vec<f64>,
    ) -> Result<Self> {
        let n = labels.len();
        if sample_ids.len() != n {
            return Err(Error::LengthMismatch(format!(
                "{} sample ids for {} labels",
                sample_ids.len(),
                n
            )));
        }
        if n_classes == 0 || scores.len() != n * n_classes {
            return Err(Error::LengthMismatch(format!(
                "{} scores for {n} samples and {n_classes} classes",
                scores.len()
            )));
        }
        for (t, &y) in labels.iter().enumerate() {
            if y >= n_classes {
                return Err(Error::Validation {
                    row: t + 1,
                    msg: format!("label {y} out of range for {n_classes} classes"),
                });
            }
        }
        if let Some(pos) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation {
                row: pos / n_classes + 1,
                msg: "non-finite score".into(),
            });
        }
        Ok(Self {
            classifier_id: classifier_id.into(),
            dataset_id: dataset_id.into(),
            split_id: split_id.into(),
            sample_ids,
            labels,
            n_classes,
            scores,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// Flat row-major scores.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.scores[t * self.n_classes..(t + 1) * self.n_classes]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.scores.chunks_exact(self.n_classes)
    }

    /// Same samples and labels, different score values.
    pub fn with_scores(&self, classifier_id: impl Into<String>, scores: Vec<f64>) -> Result<Self> {
        Self::new(
            classifier_id,
            self.dataset_id.clone(),
            self.split_id.clone(),
            self.sample_ids.clone(),
            self.labels.clone(),
            self.n_classes,
            scores,
        )
    }

    pub fn with_ids(
        mut self,
        classifier_id: impl Into<String>,
        dataset_id: impl Into<String>,
        split_id: impl Into<String>,
    ) -> Self {
        self.classifier_id = classifier_id.into();
        self.dataset_id = dataset_id.into();
        self.split_id = split_id.into();
        self
    }

    /// Checks that `other` covers the same samples, labels and class count.
    pub fn check_aligned(&self, other: &ScoreMatrix) -> Result<()> {
        if self.n_classes != other.n_classes {
            return Err(Error::Misaligned(format!(
                "`{}` has {} classes, `{}` has {}",
                self.classifier_id, self.n_classes, other.classifier_id, other.n_classes
            )));
        }
        if self.labels != other.labels || self.sample_ids != other.sample_ids {
            return Err(Error::Misaligned(format!(
                "`{}` and `{}` disagree on samples or labels",
                self.classifier_id, other.classifier_id
            )));
        }
        Ok(())
    }

    /// Stacks matrices with a common class count row-wise.
    pub fn concat(split_id: &str, parts: &[&ScoreMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::UndefinedInput("nothing to concatenate".into()))?;
        let c = first.n_classes;
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut scores = Vec::new();
        for p in parts {
            if p.n_classes != c {
                return Err(Error::Misaligned(format!(
                    "cannot stack {} classes onto {c}",
                    p.n_classes
                )));
            }
            ids.extend_from_slice(&p.sample_ids);
            labels.extend_from_slice(&p.labels);
            scores.extend_from_slice(&p.scores);
        }
        Self::new(
            first.classifier_id.clone(),
            first.dataset_id.clone(),
            split_id,
            ids,
            labels,
            c,
            scores,
        )
    }

    /// Stacks matrices from datasets with different class sets into one
    /// matrix over the disjoint union of their classes.
    ///
    /// Block `b` occupies columns `offset_b .. offset_b + C_b`; every other
    /// column of a row is filled with `row_min - 1`, so any non-negative
    /// weighted sum of such matrices keeps its argmax inside the row's own
    /// block.
    pub fn concat_blocks(dataset_id: &str, parts: &[&ScoreMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::UndefinedInput("nothing to concatenate".into()))?;
        let total: usize = parts.iter().map(|p| p.n_classes).sum();
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut scores = Vec::new();
        let mut offset = 0;
        for p in parts {
            for (t, row) in p.rows().enumerate() {
                let fill = row.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
                let start = scores.len();
                scores.resize(start + total, fill);
                scores[start + offset..start + offset + p.n_classes].copy_from_slice(row);
                labels.push(p.labels[t] + offset);
                ids.push(format!("{}/{}", p.dataset_id, p.sample_ids[t]));
            }
            offset += p.n_classes;
        }
        Self::new(
            first.classifier_id.clone(),
            dataset_id,
            "concat",
            ids,
            labels,
            total,
            scores,
        )
    }
}

macro_rules! string_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $tag:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $tag)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn tag(self) -> &'static str {
                match self { $($name::$variant => $tag),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.tag())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.tag().eq_ignore_ascii_case(s))
                    .ok_or_else(|| Error::Usage(format!(
                        "unknown {} `{s}`", stringify!($name).to_lowercase()
                    )))
            }
        }
    };
}

string_enum!(
    /// Base network of a zoo member.
    Architecture {
        AlexNet => "AlexNet",
        GoogleNet => "GoogleNet",
        InceptionV3 => "InceptionV3",
        VGG16 => "VGG16",
        VGG19 => "VGG19",
        ResNet50 => "ResNet50",
        ResNet101 => "ResNet101",
        DenseNet => "DenseNet",
        MobileNetV2 => "MobileNetV2",
        NasNet => "NasNet",
        Toy => "Toy",
    }
);

string_enum!(
    /// Fine-tuning strategy.
    Tuning {
        OneRound => "1R",
        TwoRound => "2R",
        Incremental => "INC",
        Selu => "SELU",
    }
);

string_enum!(
    /// Input resizing strategy.
    Resize {
        SqR => "SqR",
        Pad => "Pad",
        Tile => "Tile",
        None => "None",
    }
);

/// Metadata identifying a zoo member.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierRecord {
    pub classifier_id: String,
    pub architecture: Architecture,
    pub tuning: Tuning,
    pub resize: Resize,
    #[serde(default)]
    pub epoch_tag: Option<u32>,
    /// Sub-architecture tag, needed when one `architecture` value covers
    /// several model shapes (toy zoos).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
}

/// Cross-dataset identity of a classifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdentityKey {
    pub architecture: Architecture,
    pub variant: Option<String>,
    pub tuning: Tuning,
    pub resize: Resize,
    pub epoch_tag: Option<u32>,
}

impl fmt::Display for IdentityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.architecture)?;
        if let Some(v) = &self.variant {
            write!(f, "-{v}")?;
        }
        write!(f, "_{}_{}", self.tuning, self.resize)?;
        if let Some(e) = self.epoch_tag {
            write!(f, "_e{e}")?;
        }
        Ok(())
    }
}

impl ClassifierRecord {
    pub fn identity(&self) -> IdentityKey {
        IdentityKey {
            architecture: self.architecture,
            variant: self.variant.clone(),
            tuning: self.tuning,
            resize: self.resize,
            epoch_tag: self.epoch_tag,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    HalfSplit,
    KFold(usize),
}

impl Protocol {
    pub fn n_splits(self) -> usize {
        match self {
            Protocol::HalfSplit => 1,
            Protocol::KFold(k) => k,
        }
    }
}

/// Evaluation protocol of one dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub dataset_id: String,
    pub n_classes: usize,
    pub protocol: Protocol,
    /// Always false: splits ignore the class distribution.
    pub stratified: bool,
}

impl ProtocolSpec {
    pub fn new(dataset_id: impl Into<String>, n_classes: usize, protocol: Protocol) -> Self {
        Self { dataset_id: dataset_id.into(), n_classes, protocol, stratified: false }
    }
}

/// The five benchmark datasets with their class counts and test protocols.
pub fn registry() -> Vec<ProtocolSpec> {
    vec![
        ProtocolSpec::new("WHOI", 22, Protocol::HalfSplit),
        ProtocolSpec::new("ZooScan", 20, Protocol::KFold(2)),
        ProtocolSpec::new("Kaggle", 38, Protocol::KFold(5)),
        ProtocolSpec::new("EILAT", 8, Protocol::KFold(5)),
        ProtocolSpec::new("RSMAS", 14, Protocol::KFold(5)),
    ]
}

pub fn lookup_protocol(dataset_id: &str) -> Option<ProtocolSpec> {
    registry().into_iter().find(|p| p.dataset_id.eq_ignore_ascii_case(dataset_id))
}

/// One train/test partition of `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_id(fold: usize) -> String {
    format!("fold{fold}/test")
}

/// Unstratified, seeded splits: a uniform shuffle of `0..n_samples`
/// followed by contiguous slicing. Index lists come back sorted.
pub fn make_splits(n_samples: usize, spec: &ProtocolSpec, seed: u64) -> Result<Vec<Split>> {
    let mut perm: Vec<usize> = (0..n_samples).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let sorted = |mut v: Vec<usize>| {
        v.sort_unstable();
        v
    };
    match spec.protocol {
        Protocol::HalfSplit => {
            if n_samples < 2 {
                return Err(Error::InvalidProtocol(format!(
                    "half split needs at least 2 samples, got {n_samples}"
                )));
            }
            let n_train = n_samples.div_ceil(2);
            Ok(vec![Split {
                train: sorted(perm[..n_train].to_vec()),
                test: sorted(perm[n_train..].to_vec()),
            }])
        }
        Protocol::KFold(k) => {
            if k < 2 || n_samples < k {
                return Err(Error::InvalidProtocol(format!(
                    "{k}-fold split of {n_samples} samples"
                )));
            }
            let (base, extra) = (n_samples / k, n_samples % k);
            let mut bounds = Vec::with_capacity(k + 1);
            bounds.push(0);
            for f in 0..k {
                bounds.push(bounds[f] + base + usize::from(f < extra));
            }
            Ok((0..k)
                .map(|f| {
                    let test = perm[bounds[f]..bounds[f + 1]].to_vec();
                    let train = perm[..bounds[f]]
                        .iter()
                        .chain(&perm[bounds[f + 1]..])
                        .copied()
                        .collect();
                    Split { train: sorted(train), test: sorted(test) }
                })
                .collect())
        }
    }
}

const SCORE_HEADER_FIXED: [&str; 2] = ["sample_id", "label"];

fn expected_header(c: usize) -> Vec<String> {
    SCORE_HEADER_FIXED
        .iter()
        .map(|s| s.to_string())
        .chain((0..c).map(|j| format!("score_{j}")))
        .collect()
}

/// Reads a score CSV file. Identifiers are left empty except for
/// `classifier_id`, which takes the file stem.
pub fn load_scores(path: &Path, classmap: &ClassMap) -> Result<ScoreMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text, path, classmap)
}

pub(crate) fn parse_scores(text: &str, path: &Path, classmap: &ClassMap) -> Result<ScoreMatrix> {
    let c = classmap.len();
    let fmt_err = |line: usize, msg: String| Error::Format { path: path.to_path_buf(), line, msg };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(fmt_err(1, "missing header".into())),
    };
    let want = expected_header(c);
    if header.len() != want.len() || header.iter().zip(&want).any(|(a, b)| a.trim() != b) {
        return Err(fmt_err(
            1,
            format!("expected header `{}`, found `{}`", want.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != c + 2 {
            return Err(fmt_err(row + 1, format!("expected {} fields, found {}", c + 2, rec.len())));
        }
        ids.push(rec[0].to_string());
        let raw = rec[1].trim();
        let label = match raw.parse::<usize>() {
            Ok(v) => v,
            Err(_) => classmap
                .index_of(raw)
                .ok_or_else(|| fmt_err(row + 1, format!("unparseable label `{raw}`")))?,
        };
        if label >= c {
            return Err(Error::Validation {
                row,
                msg: format!("label {label} out of range for {c} classes"),
            });
        }
        labels.push(label);
        for field in rec.iter().skip(2) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| fmt_err(row + 1, format!("unparseable score `{field}`")))?;
            if !v.is_finite() {
                return Err(Error::Validation { row, msg: format!("non-finite score `{field}`") });
            }
            scores.push(v);
        }
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    ScoreMatrix::new(stem, "", "", ids, labels, c, scores)
}

/// Serializes a score matrix. `f64` display output is the shortest string
/// that parses back to the same value, so save/load round-trips exactly.
pub fn render_scores(s: &ScoreMatrix) -> String {
    let mut out = expected_header(s.n_classes()).join(",");
    out.push('\n');
    for (t, row) in s.rows().enumerate() {
        out.push_str(&s.sample_ids[t]);
        out.push(',');
        out.push_str(&s.labels[t].to_string());
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn save_scores(path: &Path, s: &ScoreMatrix) -> Result<()> {
    write_atomic(path, render_scores(s).as_bytes())
}

/// Writes via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub record: ClassifierRecord,
    pub dataset_id: String,
    pub split_id: String,
    pub path: PathBuf,
}

/// Index of every score file in a zoo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub zoo_root: PathBuf,
    /// Default class list, used by datasets absent from `dataset_classes`.
    #[serde(default)]
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub dataset_classes: BTreeMap<String, Vec<String>>,
    pub entries: Vec<ManifestEntry>,
    /// Directory relative `zoo_root` values are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn root(&self) -> PathBuf {
        if self.zoo_root.is_absolute() {
            self.zoo_root.clone()
        } else {
            self.base_dir.join(&self.zoo_root)
        }
    }

    pub fn entry_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root().join(&entry.path)
    }

    pub fn classmap_for(&self, dataset_id: &str) -> Result<ClassMap> {
        match self.dataset_classes.get(dataset_id) {
            Some(names) => ClassMap::new(names.iter().cloned()),
            None => ClassMap::new(self.classes.iter().cloned()),
        }
    }

    fn load_entry(&self, entry: &ManifestEntry) -> Result<ScoreMatrix> {
        let cm = self.classmap_for(&entry.dataset_id)?;
        Ok(load_scores(&self.entry_path(entry), &cm)?.with_ids(
            entry.record.classifier_id.clone(),
            entry.dataset_id.clone(),
            entry.split_id.clone(),
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EntryStatus {
    pub classifier_id: String,
    pub dataset_id: String,
    pub split_id: String,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub entries: Vec<EntryStatus>,
    pub cross_check_failures: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.cross_check_failures.is_empty() && self.entries.iter().all(|e| e.error.is_none())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let status = e.error.as_deref().unwrap_or("OK");
            out.push_str(&format!("{}\t{}\t{}\t{status}\n", e.dataset_id, e.split_id, e.classifier_id));
        }
        for f in &self.cross_check_failures {
            out.push_str(&format!("cross-check: {f}\n"));
        }
        out
    }
}

/// Loads every entry and cross-checks entries of the same dataset split.
pub fn validate_zoo(manifest: &Manifest) -> ValidationReport {
    let loaded: Vec<Result<ScoreMatrix>> =
        manifest.entries.par_iter().map(|e| manifest.load_entry(e)).collect();
    let mut report = ValidationReport::default();
    let mut seen = BTreeSet::new();
    let mut reference: BTreeMap<(&str, &str), &ScoreMatrix> = BTreeMap::new();
    for (entry, res) in manifest.entries.iter().zip(&loaded) {
        let key = (&entry.record.classifier_id, &entry.dataset_id, &entry.split_id);
        if !seen.insert(key) {
            report.cross_check_failures.push(format!(
                "duplicate entry ({}, {}, {})",
                key.0, key.1, key.2
            ));
        }
        report.entries.push(EntryStatus {
            classifier_id: entry.record.classifier_id.clone(),
            dataset_id: entry.dataset_id.clone(),
            split_id: entry.split_id.clone(),
            error: res.as_ref().err().map(ToString::to_string),
        });
        let Ok(m) = res else { continue };
        let slot = (entry.dataset_id.as_str(), entry.split_id.as_str());
        match reference.get(&slot) {
            None => {
                reference.insert(slot, m);
            }
            Some(r) => {
                if r.n_samples() != m.n_samples() {
                    report.cross_check_failures.push(format!(
                        "{}/{}: `{}` has {} samples, `{}` has {}",
                        slot.0, slot.1, r.classifier_id, r.n_samples(), m.classifier_id, m.n_samples()
                    ));
                } else if let Err(e) = r.check_aligned(m) {
                    report.cross_check_failures.push(format!("{}/{}: {e}", slot.0, slot.1));
                }
            }
        }
    }
    report
}

/// A manifest with every score file loaded, in entry order.
#[derive(Clone, Debug)]
pub struct Zoo {
    pub manifest: Manifest,
    pub matrices: Vec<ScoreMatrix>,
}

impl Zoo {
    pub fn load(manifest: Manifest) -> Result<Self> {
        let matrices = manifest
            .entries
            .par_iter()
            .map(|e| manifest.load_entry(e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, matrices })
    }

    pub fn open(path: &Path) -> Result<Self> {
        Self::load(Manifest::load(path)?)
    }

    /// Builds a zoo from in-memory parts.
    pub fn from_parts(manifest: Manifest, matrices: Vec<ScoreMatrix>) -> Result<Self> {
        if manifest.entries.len() != matrices.len() {
            return Err(Error::LengthMismatch(format!(
                "{} entries for {} matrices",
                manifest.entries.len(),
                matrices.len()
            )));
        }
        Ok(Self { manifest, matrices })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ManifestEntry, &ScoreMatrix)> {
        self.manifest.entries.iter().zip(&self.matrices)
    }

    /// Dataset ids in order of first appearance.
    pub fn datasets(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.manifest.entries {
            if !out.contains(&e.dataset_id) {
                out.push(e.dataset_id.clone());
            }
        }
        out
    }

    /// Sorted split ids of a dataset.
    pub fn splits(&self, dataset_id: &str) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .manifest
            .entries
            .iter()
            .filter(|e| e.dataset_id == dataset_id)
            .map(|e| e.split_id.as_str())
            .collect();
        set.into_iter().map(String::from).collect()
    }

    /// Distinct classifier identities, sorted.
    pub fn identities(&self) -> Vec<IdentityKey> {
        let set: BTreeSet<IdentityKey> =
            self.manifest.entries.iter().map(|e| e.record.identity()).collect();
        set.into_iter().collect()
    }

    /// Each identity's scores on a dataset, with every split of the dataset
    /// stacked in split-id order. Identities absent from the dataset are
    /// skipped; an identity missing only some splits is a coverage error.
    pub fn dataset_scores(&self, dataset_id: &str) -> Result<BTreeMap<IdentityKey, ScoreMatrix>> {
        let splits = self.splits(dataset_id);
        let mut by_key: BTreeMap<IdentityKey, BTreeMap<&str, &ScoreMatrix>> = BTreeMap::new();
        for (e, m) in self.entries().filter(|(e, _)| e.dataset_id == dataset_id) {
            by_key.entry(e.record.identity()).or_default().insert(e.split_id.as_str(), m);
        }
        let mut out = BTreeMap::new();
        for (key, parts) in by_key {
            let mut ordered = Vec::with_capacity(splits.len());
            for sp in &splits {
                match parts.get(sp.as_str()) {
                    Some(m) => ordered.push(*m),
                    None => {
                        return Err(Error::Coverage {
                            classifier: format!("{key} (split {sp})"),
                            dataset: dataset_id.to_string(),
                        })
                    }
                }
            }
            let stacked = ScoreMatrix::concat("all", &ordered)?;
            let id = key.to_string();
            out.insert(key, stacked.with_ids(id, dataset_id, "all"));
        }
        Ok(out)
    }
}
