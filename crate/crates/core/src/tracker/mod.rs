//! Constant-acceleration tracking of a profile series.
//!
//! [`track_series`] runs the dense `3d`-state predictor; [`track_series_decoupled`]
//! runs `d` three-state filters and produces the same record.

mod decoupled;
pub mod filter;
pub mod model;

use std::io::{Read, Write};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::numfmt::fmt_f64;
use crate::par::Execution;
use crate::profile::ProfileSeries;
use crate::space::{ConceptSpace, InterestVector};

use decoupled::AxisFilter;
pub use filter::{
    gain, init_filter, init_filter_with_state, predict_step, riccati_step, steady_state_covariance,
    FilterState,
};
pub use model::{build_model, NoiseShape, StateVector, TrackingModel};

/// Default initial covariance scale.
pub const DEFAULT_P0: f64 = 10.0;

/// One out-of-sample comparison: the prediction made before observation
/// `step` was consumed, and what consuming it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackStep {
    /// Index into the observation series, `1..K`.
    pub step: usize,
    pub instant: i64,
    /// Position block of `X̂_{k/k−1}`.
    pub predicted: Vec<f64>,
    /// `Z_k − H X̂_{k/k−1}`.
    pub innovation: Vec<f64>,
    /// Frobenius norm of the gain applied to this innovation.
    pub gain_norm: f64,
    /// Trace of `P_{k/k−1}`.
    pub p_trace: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub user_id: String,
    pub steps: Vec<TrackStep>,
    /// Forecast for the instant after the last observation.
    pub next_prediction: Vec<f64>,
}

impl TrackRecord {
    pub fn predictions(&self) -> Vec<InterestVector> {
        self.steps
            .iter()
            .map(|s| InterestVector::new(s.predicted.clone()).expect("finite predictions"))
            .collect()
    }

    pub fn forecast(&self) -> InterestVector {
        InterestVector::new(self.next_prediction.clone()).expect("finite forecast")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrackMethod {
    #[default]
    Dense,
    Decoupled,
}

fn check_series(model: &TrackingModel, series: &ProfileSeries) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            found: series.len(),
        });
    }
    if series.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: series.dim(),
        });
    }
    Ok(())
}

fn initial_state(series: &ProfileSeries) -> Result<StateVector> {
    let z0 = series.profiles()[0].as_slice();
    let zeros = vec![0.0; z0.len()];
    StateVector::from_blocks(z0, &zeros, &zeros)
}

/// Tracks `series` starting from its first observation.
pub fn track_series(model: &TrackingModel, series: &ProfileSeries, p0: f64) -> Result<TrackRecord> {
    check_series(model, series)?;
    track_from_state(model, series, initial_state(series)?, p0)
}

/// Dense tracking from an explicit `X̂_{0/−1}`.
///
/// The filter consumes every observation in order; row `k` of the record
/// holds `X̂_{k/k−1}`, i.e. what was predicted for observation `k` from
/// observations `0..k`.
pub fn track_from_state(
    model: &TrackingModel,
    series: &ProfileSeries,
    x0: StateVector,
    p0: f64,
) -> Result<TrackRecord> {
    check_series(model, series)?;
    let obs = series.profiles();
    let mut state = init_filter_with_state(model, x0, p0)?;
    state = predict_step(model, &state, &obs[0])?;
    let mut steps = Vec::with_capacity(obs.len() - 1);
    for (k, z) in obs.iter().enumerate().skip(1) {
        let predicted = state.x_hat.position().to_vec();
        let p_trace = state.p.trace();
        state = predict_step(model, &state, z)?;
        steps.push(TrackStep {
            step: k,
            instant: series.instants()[k],
            predicted,
            innovation: state
                .last_innovation
                .as_ref()
                .map(|v| v.as_slice().to_vec())
                .unwrap_or_default(),
            gain_norm: state.last_gain.as_ref().map_or(0.0, |g| g.norm()),
            p_trace,
        });
    }
    Ok(TrackRecord {
        user_id: series.user_id().to_string(),
        steps,
        next_prediction: state.x_hat.position().to_vec(),
    })
}

/// Same record as [`track_series`], computed axis by axis.
pub fn track_series_decoupled(
    model: &TrackingModel,
    series: &ProfileSeries,
    p0: f64,
) -> Result<TrackRecord> {
    check_series(model, series)?;
    track_from_state_decoupled(model, series, initial_state(series)?, p0)
}

pub fn track_from_state_decoupled(
    model: &TrackingModel,
    series: &ProfileSeries,
    x0: StateVector,
    p0: f64,
) -> Result<TrackRecord> {
    check_series(model, series)?;
    filter::check_p0(p0)?;
    if x0.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x0.dim(),
        });
    }
    let d = model.dim();
    let obs = series.profiles();
    let mut axes: Vec<AxisFilter> = (0..d).map(|i| AxisFilter::new(x0.axis(i), p0)).collect();
    for (i, f) in axes.iter_mut().enumerate() {
        f.step(model, obs[0][i], 1)?;
    }
    let mut steps = Vec::with_capacity(obs.len() - 1);
    for (k, z) in obs.iter().enumerate().skip(1) {
        let predicted: Vec<f64> = axes.iter().map(|f| f.x[0]).collect();
        let p_trace: f64 = axes.iter().map(|f| f.p.trace()).sum();
        let mut innovation = Vec::with_capacity(d);
        let mut gain_sq = 0.0;
        for (i, f) in axes.iter_mut().enumerate() {
            let u = f.step(model, z[i], k + 1)?;
            innovation.push(u.innovation);
            gain_sq += u.gain_sq;
        }
        steps.push(TrackStep {
            step: k,
            instant: series.instants()[k],
            predicted,
            innovation,
            gain_norm: gain_sq.sqrt(),
            p_trace,
        });
    }
    Ok(TrackRecord {
        user_id: series.user_id().to_string(),
        steps,
        next_prediction: axes.iter().map(|f| f.x[0]).collect(),
    })
}

pub fn track_with(
    method: TrackMethod,
    model: &TrackingModel,
    series: &ProfileSeries,
    p0: f64,
) -> Result<TrackRecord> {
    match method {
        TrackMethod::Dense => track_series(model, series, p0),
        TrackMethod::Decoupled => track_series_decoupled(model, series, p0),
    }
}

/// Tracks many users; output order follows `series`.
pub fn track_all(
    exec: Execution,
    method: TrackMethod,
    model: &TrackingModel,
    series: &[ProfileSeries],
    p0: f64,
) -> Result<Vec<TrackRecord>> {
    exec.try_map(series, |s| track_with(method, model, s, p0))
}

/// Noise-free propagation `X_{k+1} = A X_k` observed through `H`.
pub fn propagate(model: &TrackingModel, x0: &StateVector, k: usize) -> Vec<InterestVector> {
    let d = model.dim();
    let a = model.transition_block();
    let mut axes: Vec<Vector3<f64>> = (0..d).map(|i| x0.axis(i)).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        out.push(InterestVector::new(axes.iter().map(|x| x[0]).collect()).expect("finite"));
        for x in &mut axes {
            *x = a * *x;
        }
    }
    out
}

fn record_header(space: &ConceptSpace) -> Vec<String> {
    let mut h = vec!["step".to_string()];
    h.extend(space.labels().iter().map(|l| format!("pred:{l}")));
    h.extend(space.labels().iter().map(|l| format!("innov:{l}")));
    h.push("gain_norm".into());
    h.push("p_trace".into());
    h
}

/// Writes a record as CSV: `step`, `d` predicted positions, `d` innovations,
/// `gain_norm`, `p_trace`.
pub fn write_record<W: Write>(out: W, space: &ConceptSpace, record: &TrackRecord) -> Result<()> {
    let d = space.dim();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(record_header(space))?;
    for s in &record.steps {
        if s.predicted.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: s.predicted.len(),
            });
        }
        let mut row = Vec::with_capacity(2 * d + 3);
        row.push(s.step.to_string());
        row.extend(s.predicted.iter().map(|&x| fmt_f64(x)));
        row.extend(s.innovation.iter().map(|&x| fmt_f64(x)));
        row.push(fmt_f64(s.gain_norm));
        row.push(fmt_f64(s.p_trace));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a track CSV as read back.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub step: usize,
    pub predicted: InterestVector,
    pub innovation: Vec<f64>,
    pub gain_norm: f64,
    pub p_trace: f64,
}

pub fn read_record<R: Read>(
    input: R,
    space: &ConceptSpace,
    source: &str,
) -> Result<Vec<RecordRow>> {
    let d = space.dim();
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: source.to_string(),
        line,
        reason,
    };
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header
        .iter()
        .ne(record_header(space).iter().map(String::as_str))
    {
        return Err(parse_err(
            1,
            "track header does not match the vocabulary".into(),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let step = rec[0]
            .parse::<usize>()
            .map_err(|e| parse_err(line, e.to_string()))?;
        let nums = rec
            .iter()
            .skip(1)
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(line, e.to_string()))?;
        let predicted =
            InterestVector::new(nums[..d].to_vec()).map_err(|e| parse_err(line, e.to_string()))?;
        rows.push(RecordRow {
            step,
            predicted,
            innovation: nums[d..2 * d].to_vec(),
            gain_norm: nums[2 * d],
            p_trace: nums[2 * d + 1],
        });
    }
    Ok(rows)
}
