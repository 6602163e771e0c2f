//! Exemplar class models and MAP classification with a uniform class prior.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{best_correspondence, Regulators};
use crate::numeric::{log_mean_exp, log_sum_exp};
use crate::shape::{resample_arclength, Shape2};

/// How per-exemplar likelihoods combine into a class likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    /// Mean in probability space: the empirical shape prior.
    #[default]
    Mean,
    /// Nearest exemplar.
    Max,
}

impl std::str::FromStr for Aggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            _ => Err(Error::InvalidParameter(format!("unknown aggregate {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub label: String,
    /// Resampled to `n` points, counter-clockwise, centred, unit RMS radius.
    pub exemplars: Vec<Shape2>,
    pub n: usize,
    pub regs: Regulators,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    /// `(label, log posterior)`, best first.
    pub ranked: Vec<(String, f64)>,
    pub winner: String,
}

impl ClassificationResult {
    /// 1-based rank of `label`, if present.
    pub fn rank_of(&self, label: &str) -> Option<usize> {
        self.ranked.iter().position(|(l, _)| l == label).map(|i| i + 1)
    }
}

/// Resample to `n`, orient counter-clockwise, centre and scale to unit RMS.
pub fn prepare(shape: &Shape2, n: usize) -> Result<Shape2> {
    orient_and_normalize(resample_arclength(shape, n)?)
}

fn orient_and_normalize(mut s: Shape2) -> Result<Shape2> {
    if s.is_closed() && s.signed_area() < 0.0 {
        s = s.reversed();
    }
    s.normalized()
}

pub fn train(labeled_shapes: &[(String, Shape2)], n: usize, regs: &Regulators) -> Result<Vec<ClassModel>> {
    let mut groups: BTreeMap<String, Vec<Shape2>> = BTreeMap::new();
    for (label, shape) in labeled_shapes {
        groups.entry(label.clone()).or_default().push(shape.clone());
    }
    train_grouped(&groups, n, regs)
}

/// Like [`train`], with the shapes already grouped by label.
pub fn train_grouped(groups: &BTreeMap<String, Vec<Shape2>>, n: usize, regs: &Regulators) -> Result<Vec<ClassModel>> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("n must be at least 3, got {n}")));
    }
    regs.validate()?;
    if groups.is_empty() {
        return Err(Error::NoModels);
    }
    groups
        .iter()
        .map(|(label, shapes)| {
            if shapes.is_empty() {
                return Err(Error::TooFewShapes {
                    label: label.clone(),
                    available: 0,
                    required: 1,
                });
            }
            let exemplars = shapes
                .iter()
                .map(|s| prepare(s, n).map(|p| p.with_label(label.clone())))
                .collect::<Result<Vec<_>>>()?;
            Ok(ClassModel {
                label: label.clone(),
                exemplars,
                n,
                regs: *regs,
                aggregate: Aggregate::default(),
            })
        })
        .collect()
}

/// `ln((1/K) sum_k exp(L_k))` over exemplars, or the max under [`Aggregate::Max`].
pub fn class_log_likelihood(y: &Shape2, model: &ClassModel) -> Result<f64> {
    if y.len() != model.n {
        return Err(Error::IncomparableN {
            expected: model.n,
            found: y.len(),
        });
    }
    let values = model
        .exemplars
        .iter()
        .map(|ex| best_correspondence(y, ex, &model.regs, model.regs.allow_reversal).map(|(_, v)| v))
        .collect::<Result<Vec<f64>>>()?;
    Ok(match model.aggregate {
        Aggregate::Mean => log_mean_exp(&values),
        Aggregate::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Ranks classes by posterior under a uniform class prior.
///
/// A `y` with a different point count is resampled to the models' `n` first
/// (see [`prepare`]); one with exactly `n` points is taken as already sampled.
/// Ties are broken by label, lexicographically.
pub fn classify(y: &Shape2, models: &[ClassModel]) -> Result<ClassificationResult> {
    let first = models.first().ok_or(Error::NoModels)?;
    for m in models {
        if m.n != first.n {
            return Err(Error::IncomparableN {
                expected: first.n,
                found: m.n,
            });
        }
        if m.regs != first.regs {
            return Err(Error::InvalidParameter(format!(
                "class {:?} uses different regulators from {:?}",
                m.label, first.label
            )));
        }
    }
    let y = if y.len() == first.n {
        orient_and_normalize(y.clone())?
    } else {
        prepare(y, first.n)?
    };
    let scores = models
        .par_iter()
        .map(|m| class_log_likelihood(&y, m).map(|v| (m.label.clone(), v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank(scores))
}

fn rank(mut scores: Vec<(String, f64)>) -> ClassificationResult {
    let values: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let evidence = log_sum_exp(&values);
    for s in &mut scores {
        s.1 -= evidence;
    }
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ClassificationResult {
        winner: scores[0].0.clone(),
        ranked: scores,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    n: usize,
    regs: Regulators,
    #[serde(default)]
    aggregate: Aggregate,
    classes: Vec<ClassEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassEntry {
    label: String,
    exemplars: Vec<Shape2>,
    /// Reserved for non-uniform class priors; currently ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
}

pub fn models_to_json(models: &[ClassModel]) -> Result<String> {
    let first = models.first().ok_or(Error::NoModels)?;
    let file = ModelFile {
        n: first.n,
        regs: first.regs,
        aggregate: first.aggregate,
        classes: models
            .iter()
            .map(|m| ClassEntry {
                label: m.label.clone(),
                exemplars: m.exemplars.clone(),
                weight: None,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn models_from_json(text: &str) -> Result<Vec<ClassModel>> {
    let file: ModelFile = serde_json::from_str(text)?;
    file.regs.validate()?;
    if file.classes.is_empty() {
        return Err(Error::NoModels);
    }
    file.classes
        .into_iter()
        .map(|c| {
            if c.exemplars.is_empty() {
                return Err(Error::TooFewShapes {
                    label: c.label,
                    available: 0,
                    required: 1,
                });
            }
            if let Some(bad) = c.exemplars.iter().find(|e| e.len() != file.n) {
                return Err(Error::IncomparableN {
                    expected: file.n,
                    found: bad.len(),
                });
            }
            if c.weight.is_some_and(|w| w != 1.0) {
                log::warn!("class {:?}: per-class weights are not used yet", c.label);
            }
            Ok(ClassModel {
                label: c.label,
                exemplars: c.exemplars,
                n: file.n,
                regs: file.regs,
                aggregate: file.aggregate,
            })
        })
        .collect()
}

pub fn save_models(models: &[ClassModel], path: &Path) -> Result<()> {
    std::fs::write(path, models_to_json(models)?)?;
    Ok(())
}

pub fn load_models(path: &Path) -> Result<Vec<ClassModel>> {
    models_from_json(&std::fs::read_to_string(path)?)
}
