//! Score normalization, sum-rule fusion, argmax prediction and named
//! ensemble recipes.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::zoo::{Architecture, ClassifierRecord, Resize, ScoreMatrix, Tuning, Zoo};

/// Per-row normalization applied to raw classifier outputs before fusion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Softmax,
    RowSum,
    None,
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "softmax" => Ok(Self::Softmax),
            "rowsum" => Ok(Self::RowSum),
            "none" => Ok(Self::None),
            other => Err(Error::Usage(format!("unknown normalization `{other}`"))),
        }
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn normalize_rows(s: &ScoreMatrix, mode: Normalization) -> Result<ScoreMatrix> {
    let mut scores = s.scores().to_vec();
    let c = s.n_classes();
    match mode {
        Normalization::None => {}
        Normalization::Softmax => scores.chunks_exact_mut(c).for_each(softmax_in_place),
        Normalization::RowSum => {
            for (t, row) in scores.chunks_exact_mut(c).enumerate() {
                if row.iter().any(|&v| v < 0.0) {
                    return Err(Error::Normalization { row: t + 1, msg: "negative entry".into() });
                }
                let sum: f64 = row.iter().sum();
                if sum <= 0.0 {
                    return Err(Error::Normalization { row: t + 1, msg: "row sums to zero".into() });
                }
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }
    s.with_scores(s.classifier_id.clone(), scores)
}

/// Element-wise sum of aligned members. Members are added in order of
/// `classifier_id`, so the result does not depend on the order passed in.
pub fn sum_rule(name: &str, members: &[&ScoreMatrix]) -> Result<ScoreMatrix> {
    let mut sorted: Vec<&ScoreMatrix> = members.to_vec();
    sorted.sort_by(|a, b| a.classifier_id.cmp(&b.classifier_id));
    let first = *sorted
        .first()
        .ok_or_else(|| Error::UndefinedInput("sum rule over no members".into()))?;
    let mut acc = first.scores().to_vec();
    for m in &sorted[1..] {
        first.check_aligned(m)?;
        acc.iter_mut().zip(m.scores()).for_each(|(a, v)| *a += v);
    }
    first.with_scores(name, acc)
}

/// `Σ_i weights[i] · members[i]`, accumulated in the order given.
pub fn weighted_sum(name: &str, members: &[&ScoreMatrix], weights: &[f64]) -> Result<ScoreMatrix> {
    if members.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} weights for {} members",
            weights.len(),
            members.len()
        )));
    }
    let first = *members
        .first()
        .ok_or_else(|| Error::UndefinedInput("weighted sum over no members".into()))?;
    let mut acc = vec![0.0; first.scores().len()];
    for (m, &w) in members.iter().zip(weights) {
        first.check_aligned(m)?;
        acc.iter_mut().zip(m.scores()).for_each(|(a, v)| *a += w * v);
    }
    first.with_scores(name, acc)
}

/// Index of the row maximum; ties go to the lowest class index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn predict(s: &ScoreMatrix) -> Vec<usize> {
    s.rows().map(argmax).collect()
}

/// Conjunction of optional field constraints on a zoo member.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<Architecture>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<Tuning>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resize: Option<Resize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_tag: Option<u32>,
}

impl MemberFilter {
    pub fn tuning(t: Tuning) -> Self {
        Self { tuning: Some(t), ..Self::default() }
    }

    pub fn matches(&self, r: &ClassifierRecord) -> bool {
        self.architecture.is_none_or(|a| a == r.architecture)
            && self.variant.as_ref().is_none_or(|v| r.variant.as_ref() == Some(v))
            && self.tuning.is_none_or(|t| t == r.tuning)
            && self.resize.is_none_or(|z| z == r.resize)
            && self.epoch_tag.is_none_or(|e| r.epoch_tag == Some(e))
    }
}

impl fmt::Display for MemberFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(a) = self.architecture {
            parts.push(format!("architecture={a}"));
        }
        if let Some(v) = &self.variant {
            parts.push(format!("variant={v}"));
        }
        if let Some(t) = self.tuning {
            parts.push(format!("tuning={t}"));
        }
        if let Some(r) = self.resize {
            parts.push(format!("resize={r}"));
        }
        if let Some(e) = self.epoch_tag {
            parts.push(format!("epoch_tag={e}"));
        }
        if parts.is_empty() {
            f.write_str("<any>")
        } else {
            f.write_str(&parts.join(" "))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipeMembers {
    Filter(MemberFilter),
    Explicit(Vec<String>),
    /// Sum of the children's fused matrices, without re-normalization.
    Nested(Vec<EnsembleRecipe>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleRecipe {
    pub name: String,
    #[serde(default)]
    pub normalization: Normalization,
    pub members: RecipeMembers,
}

impl EnsembleRecipe {
    pub fn filter(name: &str, filter: MemberFilter) -> Self {
        Self { name: name.into(), normalization: Normalization::default(), members: RecipeMembers::Filter(filter) }
    }

    pub fn explicit(name: &str, ids: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            name: name.into(),
            normalization: Normalization::default(),
            members: RecipeMembers::Explicit(ids.into_iter().map(Into::into).collect()),
        }
    }

    pub fn nested(name: &str, children: Vec<EnsembleRecipe>) -> Self {
        Self { name: name.into(), normalization: Normalization::default(), members: RecipeMembers::Nested(children) }
    }

    pub fn with_normalization(mut self, mode: Normalization) -> Self {
        self.normalization = mode;
        if let RecipeMembers::Nested(children) = &mut self.members {
            for c in children.iter_mut() {
                *c = c.clone().with_normalization(mode);
            }
        }
        self
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn describe(&self) -> String {
        match &self.members {
            RecipeMembers::Filter(f) => f.to_string(),
            RecipeMembers::Explicit(ids) => format!("ids=[{}]", ids.join(",")),
            RecipeMembers::Nested(ch) => {
                ch.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(" + ")
            }
        }
    }
}

/// Fusion of one architecture trained under growing sets of strategies:
/// `P_1R`, `P_1R+2R`, `P_1R+2R+INC`, `P_1R+2R+INC+SELU`.
pub fn architecture_chain(prefix: &str, architecture: Architecture, variant: Option<&str>) -> Vec<EnsembleRecipe> {
    let leaf = |t: Tuning| {
        EnsembleRecipe::filter(
            &format!("{prefix}_{t}"),
            MemberFilter {
                architecture: Some(architecture),
                variant: variant.map(String::from),
                tuning: Some(t),
                ..MemberFilter::default()
            },
        )
    };
    let mut out = vec![leaf(Tuning::OneRound)];
    let mut name = format!("{prefix}_1R");
    for t in [Tuning::TwoRound, Tuning::Incremental, Tuning::Selu] {
        name = format!("{name}+{t}");
        let prev = out.last().expect("chain is non-empty").clone();
        out.push(EnsembleRecipe::nested(&name, vec![prev, leaf(t)]));
    }
    out
}

/// The standard recipe catalogue.
pub fn named_recipes() -> Vec<EnsembleRecipe> {
    let by_resize = |r: Resize| {
        EnsembleRecipe::filter(
            &format!("Fus_{r}"),
            MemberFilter { tuning: Some(Tuning::OneRound), resize: Some(r), ..MemberFilter::default() },
        )
    };
    let fus = |t: Tuning| EnsembleRecipe::filter(&format!("Fus_{t}"), MemberFilter::tuning(t));
    let mut out = vec![
        by_resize(Resize::SqR),
        by_resize(Resize::Pad),
        by_resize(Resize::Tile),
        fus(Tuning::OneRound),
        fus(Tuning::TwoRound),
        fus(Tuning::Incremental),
        fus(Tuning::Selu),
        EnsembleRecipe::nested("Fus_2R+Fus_1R", vec![fus(Tuning::TwoRound), fus(Tuning::OneRound)]),
        EnsembleRecipe::nested("Fus_SELU+Fus_1R", vec![fus(Tuning::Selu), fus(Tuning::OneRound)]),
    ];
    out.extend(architecture_chain("DN", Architecture::DenseNet, None));
    out.extend(architecture_chain("LIN", Architecture::Toy, Some("linear")));
    out.extend(architecture_chain("MLP", Architecture::Toy, Some("mlp1")));
    out.push(EnsembleRecipe::filter("Fus_all", MemberFilter::default()));
    out
}

pub fn find_recipe(name: &str) -> Option<EnsembleRecipe> {
    named_recipes().into_iter().find(|r| r.name == name)
}

/// A recipe given on the command line: a catalogue name or a JSON file.
pub fn resolve_recipe_arg(arg: &str) -> Result<EnsembleRecipe> {
    if let Some(r) = find_recipe(arg) {
        return Ok(r);
    }
    let path = Path::new(arg);
    if path.exists() {
        return EnsembleRecipe::from_file(path);
    }
    Err(Error::Usage(format!("`{arg}` is neither a known recipe nor a recipe file")))
}

/// Loads, normalizes and sum-fuses a recipe's members on one dataset split.
/// `split_id = "all"` fuses each split and stacks the results.
pub fn build_recipe(zoo: &Zoo, recipe: &EnsembleRecipe, dataset_id: &str, split_id: &str) -> Result<ScoreMatrix> {
    if split_id == "all" {
        let splits = zoo.splits(dataset_id);
        let parts = splits
            .iter()
            .map(|sp| build_recipe(zoo, recipe, dataset_id, sp))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&ScoreMatrix> = parts.iter().collect();
        if refs.is_empty() {
            return Err(Error::RecipeResolution {
                recipe: recipe.name.clone(),
                filter: format!("no splits for dataset {dataset_id}"),
            });
        }
        return Ok(ScoreMatrix::concat("all", &refs)?.with_ids(&recipe.name, dataset_id, "all"));
    }
    let fused = match &recipe.members {
        RecipeMembers::Nested(children) => {
            let mut kids = children
                .iter()
                .map(|c| build_recipe(zoo, c, dataset_id, split_id))
                .collect::<Result<Vec<_>>>()?;
            kids.sort_by(|a, b| a.classifier_id.cmp(&b.classifier_id));
            let refs: Vec<&ScoreMatrix> = kids.iter().collect();
            if refs.is_empty() {
                return Err(Error::RecipeResolution { recipe: recipe.name.clone(), filter: recipe.describe() });
            }
            sum_rule(&recipe.name, &refs)?
        }
        members => {
            let picked: Vec<ScoreMatrix> = zoo
                .entries()
                .filter(|(e, _)| e.dataset_id == dataset_id && e.split_id == split_id)
                .filter(|(e, _)| match members {
                    RecipeMembers::Filter(f) => f.matches(&e.record),
                    RecipeMembers::Explicit(ids) => ids.contains(&e.record.classifier_id),
                    RecipeMembers::Nested(_) => unreachable!(),
                })
                .map(|(_, m)| normalize_rows(m, recipe.normalization))
                .collect::<Result<_>>()?;
            if picked.is_empty() {
                return Err(Error::RecipeResolution { recipe: recipe.name.clone(), filter: recipe.describe() });
            }
            let refs: Vec<&ScoreMatrix> = picked.iter().collect();
            sum_rule(&recipe.name, &refs)?
        }
    };
    Ok(fused.with_ids(&recipe.name, dataset_id, split_id))
}
