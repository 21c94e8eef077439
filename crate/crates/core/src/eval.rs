//! Prediction quality: per-step cosine distance, fraction under a
//! threshold, smoothing ratio and per-axis RMSE.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numfmt::fmt_f64;
use crate::profile::ProfileSeries;
use crate::space::{cosine_distance, InterestVector};

/// Default cosine-distance threshold for a "good" prediction.
pub const DEFAULT_TAU: f64 = 0.15;

/// Histogram bins over `[0, 1]`; distances above 1 land in the last bin.
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDistance {
    /// Index into the truth series.
    pub step: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub user_id: String,
    /// One entry per scored step; zero-norm steps are absent.
    pub per_step_cosine: Vec<StepDistance>,
    pub skipped: usize,
    pub tau: f64,
    pub fraction_below_threshold: f64,
    /// Variance of prediction first differences over variance of observation
    /// first differences, pooled over axes. `None` when the observations do
    /// not move.
    pub smoothness_ratio: Option<f64>,
    pub per_axis_rmse: Vec<f64>,
}

impl EvalReport {
    pub fn below(&self, tau: f64) -> usize {
        self.per_step_cosine
            .iter()
            .filter(|s| s.distance < tau)
            .count()
    }

    pub fn fraction_below(&self, tau: f64) -> f64 {
        fraction(self.below(tau), self.per_step_cosine.len())
    }
}

fn fraction(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        n as f64 / total as f64
    }
}

fn diff_variance(rows: &[&[f64]]) -> Option<f64> {
    let d = rows.first()?.len();
    let diffs: Vec<f64> = rows
        .windows(2)
        .flat_map(|w| (0..d).map(move |i| w[1][i] - w[0][i]))
        .collect();
    if diffs.len() < 2 {
        return None;
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    Some(diffs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Scores `predictions[j]` against `truth.profiles()[j + 1]`.
pub fn evaluate(
    truth: &ProfileSeries,
    predictions: &[InterestVector],
    tau: f64,
) -> Result<EvalReport> {
    let observed = &truth.profiles()[1..];
    if predictions.len() != observed.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            expected: observed.len(),
            found: predictions.len(),
        });
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::invalid(
            "tau",
            format!("{tau} must be finite and >= 0"),
        ));
    }
    let d = truth.dim();
    let mut per_step = Vec::with_capacity(predictions.len());
    let mut skipped = 0;
    let mut sq = vec![0.0; d];
    for (j, (p, z)) in predictions.iter().zip(observed).enumerate() {
        if p.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.dim(),
            });
        }
        match cosine_distance(p, z) {
            Ok(distance) => per_step.push(StepDistance {
                step: j + 1,
                distance,
            }),
            Err(Error::ZeroNorm) => skipped += 1,
            Err(e) => return Err(e),
        }
        for (acc, (a, b)) in sq.iter_mut().zip(p.as_slice().iter().zip(z.as_slice())) {
            *acc += (a - b).powi(2);
        }
    }
    let n = predictions.len().max(1) as f64;
    let per_axis_rmse = sq.into_iter().map(|s| (s / n).sqrt()).collect();

    let pred_rows: Vec<&[f64]> = predictions.iter().map(InterestVector::as_slice).collect();
    let obs_rows: Vec<&[f64]> = observed.iter().map(InterestVector::as_slice).collect();
    let smoothness_ratio = match (diff_variance(&pred_rows), diff_variance(&obs_rows)) {
        (Some(p), Some(o)) if o > 0.0 => Some(p / o),
        _ => None,
    };

    let below = per_step.iter().filter(|s| s.distance < tau).count();
    Ok(EvalReport {
        user_id: truth.user_id().to_string(),
        fraction_below_threshold: fraction(below, per_step.len()),
        per_step_cosine: per_step,
        skipped,
        tau,
        smoothness_ratio,
        per_axis_rmse,
    })
}

/// Pooled view over many users' reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledSummary {
    pub users: usize,
    pub scored_steps: usize,
    pub skipped_steps: usize,
    pub tau: f64,
    pub fraction_below_threshold: f64,
    pub mean_cosine: f64,
    pub max_cosine: f64,
    /// Users with a defined smoothness ratio.
    pub smoothness_users: usize,
    /// Share of those users whose ratio is at most 1.
    pub fraction_smoothed: f64,
    pub median_smoothness_ratio: f64,
    pub histogram: Vec<usize>,
}

impl PooledSummary {
    pub fn from_reports(reports: &[EvalReport], tau: f64) -> Self {
        let dists: Vec<f64> = reports
            .iter()
            .flat_map(|r| r.per_step_cosine.iter().map(|s| s.distance))
            .collect();
        let mut histogram = vec![0usize; HISTOGRAM_BINS];
        for &x in &dists {
            let bin = ((x.max(0.0) * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            histogram[bin] += 1;
        }
        let mut ratios: Vec<f64> = reports.iter().filter_map(|r| r.smoothness_ratio).collect();
        ratios.sort_by(f64::total_cmp);
        let median = match ratios.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => ratios[n / 2],
            n => 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]),
        };
        Self {
            users: reports.len(),
            scored_steps: dists.len(),
            skipped_steps: reports.iter().map(|r| r.skipped).sum(),
            tau,
            fraction_below_threshold: fraction(
                dists.iter().filter(|&&x| x < tau).count(),
                dists.len(),
            ),
            mean_cosine: if dists.is_empty() {
                f64::NAN
            } else {
                dists.iter().sum::<f64>() / dists.len() as f64
            },
            max_cosine: dists.iter().copied().fold(f64::NAN, f64::max),
            smoothness_users: ratios.len(),
            fraction_smoothed: fraction(ratios.iter().filter(|&&r| r <= 1.0).count(), ratios.len()),
            median_smoothness_ratio: median,
            histogram,
        }
    }

    /// `key=value` lines, one per field, histogram bins as `hist_<lo>_<hi>`.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "users={}", self.users);
        let _ = writeln!(s, "scored_steps={}", self.scored_steps);
        let _ = writeln!(s, "skipped_steps={}", self.skipped_steps);
        let _ = writeln!(s, "tau={}", fmt_f64(self.tau));
        let _ = writeln!(
            s,
            "fraction_below_threshold={}",
            fmt_f64(self.fraction_below_threshold)
        );
        let _ = writeln!(s, "mean_cosine={}", fmt_f64(self.mean_cosine));
        let _ = writeln!(s, "max_cosine={}", fmt_f64(self.max_cosine));
        let _ = writeln!(s, "smoothness_users={}", self.smoothness_users);
        let _ = writeln!(s, "fraction_smoothed={}", fmt_f64(self.fraction_smoothed));
        let _ = writeln!(
            s,
            "median_smoothness_ratio={}",
            fmt_f64(self.median_smoothness_ratio)
        );
        let width = 1.0 / HISTOGRAM_BINS as f64;
        for (i, n) in self.histogram.iter().enumerate() {
            let _ = writeln!(
                s,
                "hist_{:.2}_{:.2}={n}",
                i as f64 * width,
                (i + 1) as f64 * width
            );
        }
        s
    }
}

/// Per-step report CSV: `user_id,step,cosine_distance,below_tau`.
pub fn write_steps<W: std::io::Write>(out: W, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "step", "cosine_distance", "below_tau"])?;
    for r in reports {
        for s in &r.per_step_cosine {
            w.write_record([
                r.user_id.clone(),
                s.step.to_string(),
                fmt_f64(s.distance),
                u8::from(s.distance < r.tau).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-user summary CSV.
pub fn write_user_summary<W: std::io::Write>(out: W, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "user_id",
        "scored_steps",
        "skipped_steps",
        "fraction_below_threshold",
        "smoothness_ratio",
        "mean_axis_rmse",
    ])?;
    for r in reports {
        let mean_rmse = r.per_axis_rmse.iter().sum::<f64>() / r.per_axis_rmse.len().max(1) as f64;
        w.write_record([
            r.user_id.clone(),
            r.per_step_cosine.len().to_string(),
            r.skipped.to_string(),
            fmt_f64(r.fraction_below_threshold),
            r.smoothness_ratio.map(fmt_f64).unwrap_or_default(),
            fmt_f64(mean_rmse),
        ])?;
    }
    w.flush()?;
    Ok(())
}
