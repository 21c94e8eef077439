//! The recommendation space: an ordered genre vocabulary and the interest
//! vectors that live in it.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered, duplicate-free genre vocabulary. Axis `i` is the `i`-th label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptSpace {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl ConceptSpace {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::EmptySpace);
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (axis, label) in labels.iter().enumerate() {
            if label.trim().is_empty() {
                return Err(Error::BlankLabel(axis));
            }
            if index.insert(label.clone(), axis).is_some() {
                return Err(Error::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self { labels, index })
    }

    /// Reads a vocabulary file: one label per line, blank lines ignored.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::new(
            text.lines()
                .map(|l| l.trim_end_matches('\r'))
                .filter(|l| !l.trim().is_empty()),
        )
    }

    pub fn to_file_contents(&self) -> String {
        let mut out = String::new();
        for label in &self.labels {
            out.push_str(label);
            out.push('\n');
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, axis: usize) -> &str {
        &self.labels[axis]
    }

    pub fn axis(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Resolves a label or fails with [`Error::UnknownGenre`] carrying `context`.
    pub fn resolve(&self, label: &str, context: impl FnOnce() -> String) -> Result<usize> {
        self.axis(label).ok_or_else(|| Error::UnknownGenre {
            label: label.to_string(),
            context: context(),
        })
    }

    pub fn zeros(&self) -> InterestVector {
        InterestVector(vec![0.0; self.dim()])
    }

    pub fn check(&self, v: &InterestVector) -> Result<()> {
        if v.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.dim(),
            });
        }
        Ok(())
    }
}

/// Per-genre interest scores; a position in the concept space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestVector(Vec<f64>);

impl InterestVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("interest vector"));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|x| x * c).collect())
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<InterestVector> for Vec<f64> {
    fn from(v: InterestVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for InterestVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `1 - cos(u, v)`. Lies in `[0, 1]` for nonnegative inputs.
///
/// A zero-norm argument is an error rather than a score: an empty profile has
/// no direction.
pub fn cosine_distance(u: &InterestVector, v: &InterestVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    // clamp guards rounding just past +/-1
    let cos = (dot / (nu * nv)).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}
