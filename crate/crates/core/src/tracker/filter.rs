//! Dense one-step-ahead Kalman predictor.
//!
//! With `S = H P Hᵀ + R` and `K = A P Hᵀ S⁻¹`:
//!
//! ```text
//! x̂⁺ = A x̂ + K (z − H x̂)
//! P⁺ = A P Aᵀ − A P Hᵀ S⁻¹ H P Aᵀ + Q
//! ```
//!
//! `S` is factored with Cholesky; no inverse is ever formed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::model::{StateVector, TrackingModel};
use crate::error::{Error, Result};
use crate::space::InterestVector;

/// Condition estimate above which `S` is treated as singular.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// Most negative eigenvalue tolerated in `P`, relative to `max(1, max Pᵢᵢ)`.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// `X̂_{k/k−1}` and `P_{k/k−1}` plus what the last step consumed.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub x_hat: StateVector,
    pub p: DMatrix<f64>,
    pub step: usize,
    pub last_innovation: Option<DVector<f64>>,
    pub last_gain: Option<DMatrix<f64>>,
}

impl FilterState {
    pub fn predicted_position(&self) -> InterestVector {
        self.x_hat.position_vector()
    }
}

/// Starts at position `z0` with zero velocity and acceleration, `P = p0·I`.
pub fn init_filter(model: &TrackingModel, z0: &InterestVector, p0: f64) -> Result<FilterState> {
    if z0.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: z0.dim(),
        });
    }
    let zeros = vec![0.0; model.dim()];
    let x0 = StateVector::from_blocks(z0.as_slice(), &zeros, &zeros)?;
    init_filter_with_state(model, x0, p0)
}

/// Starts from a full kinematic state.
pub fn init_filter_with_state(
    model: &TrackingModel,
    x0: StateVector,
    p0: f64,
) -> Result<FilterState> {
    if x0.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x0.dim(),
        });
    }
    check_p0(p0)?;
    Ok(FilterState {
        x_hat: x0,
        p: DMatrix::identity(model.state_dim(), model.state_dim()) * p0,
        step: 0,
        last_innovation: None,
        last_gain: None,
    })
}

pub(crate) fn check_p0(p0: f64) -> Result<()> {
    if !(p0.is_finite() && p0 > 0.0) {
        return Err(Error::invalid("p0", format!("{p0} must be finite and > 0")));
    }
    Ok(())
}

/// Factor of `S` and `M = A P Hᵀ` for one covariance.
struct Innovation {
    chol: Cholesky<f64, Dyn>,
    m: DMatrix<f64>,
}

impl Innovation {
    fn new(model: &TrackingModel, p: &DMatrix<f64>) -> Result<Self> {
        check_cov_shape(model, p)?;
        let h = model.measurement();
        let s = h * p * h.transpose() + model.measurement_noise();
        let s = symmetrize(s);
        let chol = Cholesky::new(s).ok_or(Error::SingularInnovation(f64::INFINITY))?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
        let cond = (hi / lo).powi(2);
        if !cond.is_finite() || cond > MAX_INNOVATION_CONDITION {
            return Err(Error::SingularInnovation(cond));
        }
        let m = model.transition() * p * h.transpose();
        Ok(Self { chol, m })
    }

    /// `K = M S⁻¹`, via `S Kᵀ = Mᵀ`.
    fn gain(&self) -> DMatrix<f64> {
        self.chol.solve(&self.m.transpose()).transpose()
    }
}

fn check_cov_shape(model: &TrackingModel, p: &DMatrix<f64>) -> Result<()> {
    let n = model.state_dim();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.nrows().max(p.ncols()),
        });
    }
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    Ok(())
}

fn symmetrize(p: DMatrix<f64>) -> DMatrix<f64> {
    (&p + p.transpose()) * 0.5
}

/// Predictor gain `A P Hᵀ (H P Hᵀ + R)⁻¹`, a `3d × d` matrix.
pub fn gain(model: &TrackingModel, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(Innovation::new(model, p)?.gain())
}

/// One step of the covariance recursion, symmetrized.
pub fn riccati_step(model: &TrackingModel, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inn = Innovation::new(model, p)?;
    let k = inn.gain();
    Ok(next_covariance(model, p, &inn, &k))
}

fn next_covariance(
    model: &TrackingModel,
    p: &DMatrix<f64>,
    inn: &Innovation,
    k: &DMatrix<f64>,
) -> DMatrix<f64> {
    let a = model.transition();
    // A P Hᵀ S⁻¹ H P Aᵀ = K Mᵀ
    symmetrize(a * p * a.transpose() - k * inn.m.transpose() + model.process_noise())
}

/// Iterates the covariance recursion from `p0·I` until successive iterates
/// differ by less than `tol` (max-abs), returning the limit and the number
/// of iterations used.
pub fn steady_state_covariance(
    model: &TrackingModel,
    p0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, usize)> {
    check_p0(p0)?;
    let n = model.state_dim();
    let mut p = DMatrix::identity(n, n) * p0;
    for it in 1..=max_iter {
        let next = riccati_step(model, &p)?;
        let delta = (&next - &p).amax();
        p = next;
        if delta < tol {
            return Ok((p, it));
        }
    }
    Err(Error::invalid(
        "max_iter",
        format!("covariance recursion did not settle within {max_iter} iterations"),
    ))
}

/// Fails with [`Error::Divergence`] unless every eigenvalue of the symmetric
/// `p` is at least `-PSD_TOLERANCE · max(1, max Pᵢᵢ)`.
pub(crate) fn check_psd(p: &DMatrix<f64>, step: usize) -> Result<()> {
    let scale = p.diagonal().iter().fold(1.0f64, |m, &x| m.max(x.abs()));
    let shift = PSD_TOLERANCE * scale;
    let shifted = p + DMatrix::identity(p.nrows(), p.ncols()) * shift;
    match Cholesky::new(shifted) {
        Some(_) => Ok(()),
        None => Err(Error::Divergence(step)),
    }
}

/// Consumes observation `z` and returns `X̂_{k+1/k}`, `P_{k+1/k}`.
pub fn predict_step(
    model: &TrackingModel,
    state: &FilterState,
    z: &InterestVector,
) -> Result<FilterState> {
    if z.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: z.dim(),
        });
    }
    if state.x_hat.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: state.x_hat.dim(),
        });
    }
    if z.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("observation"));
    }
    let inn = Innovation::new(model, &state.p)?;
    let k = inn.gain();
    let x = state.x_hat.as_vector();
    let z = DVector::from_column_slice(z.as_slice());
    let nu = z - model.measurement() * x;
    let x_next = model.transition() * x + &k * &nu;
    let p_next = next_covariance(model, &state.p, &inn, &k);
    let step = state.step + 1;
    if p_next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence(step));
    }
    check_psd(&p_next, step)?;
    Ok(FilterState {
        x_hat: StateVector::from_vector(x_next).map_err(|_| Error::Divergence(step))?,
        p: p_next,
        step,
        last_innovation: Some(nu),
        last_gain: Some(k),
    })
}
