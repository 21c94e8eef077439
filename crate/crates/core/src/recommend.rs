//! Genre-level recommendation from predicted-versus-observed interest.
//!
//! A genre whose forecast exceeds the current profile by at least `θ` is
//! rising and gets promoted; one that falls short by `θ` is demoted.
//! Promoted genres the user already watched today are set aside so the
//! remaining suggestions concentrate on what is still unseen.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{ConceptSpace, InterestVector};

/// Default significance threshold on the delta.
pub const DEFAULT_THETA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaClass {
    Positive,
    Negative,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptDelta {
    pub axis: usize,
    /// Estimated minus calculated interest.
    pub delta: f64,
    pub class: DeltaClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub user_id: String,
    /// Rising genres, largest delta first.
    pub promoted: Vec<String>,
    /// Falling genres, most negative delta first.
    pub demoted: Vec<String>,
    /// Rising genres dropped because they were already watched today.
    pub excluded_watched: Vec<String>,
}

fn classify(delta: f64, theta: f64) -> DeltaClass {
    if delta >= theta {
        DeltaClass::Positive
    } else if delta <= -theta {
        DeltaClass::Negative
    } else {
        DeltaClass::Neutral
    }
}

pub fn concept_deltas(
    estimated: &InterestVector,
    calculated: &InterestVector,
    theta: f64,
) -> Result<Vec<ConceptDelta>> {
    if estimated.dim() != calculated.dim() {
        return Err(Error::DimensionMismatch {
            expected: estimated.dim(),
            found: calculated.dim(),
        });
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::invalid(
            "theta",
            format!("{theta} must be finite and > 0"),
        ));
    }
    Ok(estimated
        .as_slice()
        .iter()
        .zip(calculated.as_slice())
        .enumerate()
        .map(|(axis, (e, c))| {
            let delta = e - c;
            ConceptDelta {
                axis,
                delta,
                class: classify(delta, theta),
            }
        })
        .collect())
}

/// Orders deltas by value (descending when `desc`), lower axis first on ties.
fn ranked<'a>(deltas: impl Iterator<Item = &'a ConceptDelta>, desc: bool) -> Vec<&'a ConceptDelta> {
    let mut v: Vec<_> = deltas.collect();
    v.sort_by(|a, b| {
        let ord = if desc {
            b.delta.total_cmp(&a.delta)
        } else {
            a.delta.total_cmp(&b.delta)
        };
        ord.then(a.axis.cmp(&b.axis))
    });
    v
}

pub fn recommend<S: AsRef<str>>(
    user_id: &str,
    deltas: &[ConceptDelta],
    watched_today: &[S],
    space: &ConceptSpace,
) -> Result<Recommendation> {
    let watched = watched_today
        .iter()
        .map(|g| space.resolve(g.as_ref(), || format!("watched today by {user_id:?}")))
        .collect::<Result<BTreeSet<usize>>>()?;
    if let Some(bad) = deltas.iter().find(|d| d.axis >= space.dim()) {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            found: bad.axis + 1,
        });
    }
    let label = |d: &&ConceptDelta| space.label(d.axis).to_string();

    let positives = ranked(
        deltas.iter().filter(|d| d.class == DeltaClass::Positive),
        true,
    );
    let (excluded, promoted): (Vec<_>, Vec<_>) = positives
        .into_iter()
        .partition(|d| watched.contains(&d.axis));
    let demoted = ranked(
        deltas.iter().filter(|d| d.class == DeltaClass::Negative),
        false,
    );

    Ok(Recommendation {
        user_id: user_id.to_string(),
        promoted: promoted.iter().map(label).collect(),
        demoted: demoted.iter().map(label).collect(),
        excluded_watched: excluded.iter().map(label).collect(),
    })
}

/// A schedulable program and its genre labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub id: String,
    pub genres: Vec<String>,
}

/// Programs carrying at least one promoted genre and no demoted genre, in
/// catalog order.
pub fn filter_catalog<'a>(rec: &Recommendation, catalog: &'a [Program]) -> Vec<&'a Program> {
    let promoted: BTreeSet<&str> = rec.promoted.iter().map(String::as_str).collect();
    let demoted: BTreeSet<&str> = rec.demoted.iter().map(String::as_str).collect();
    catalog
        .iter()
        .filter(|p| {
            p.genres.iter().any(|g| promoted.contains(g.as_str()))
                && !p.genres.iter().any(|g| demoted.contains(g.as_str()))
        })
        .collect()
}
