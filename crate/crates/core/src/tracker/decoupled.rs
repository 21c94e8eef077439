//! Per-axis form of the predictor.
//!
//! Every matrix the model builds is `block ⊗ I_d` (or `r·I_d`), and the
//! initial covariance is `p0·I`, so the `3d`-state filter splits exactly into
//! `d` independent three-state filters with scalar observations.

use nalgebra::{Matrix3, Vector3};

use super::model::TrackingModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct AxisFilter {
    pub x: Vector3<f64>,
    pub p: Matrix3<f64>,
}

/// What one axis contributed to a step.
pub(crate) struct AxisUpdate {
    pub innovation: f64,
    pub gain_sq: f64,
}

impl AxisFilter {
    pub fn new(x: Vector3<f64>, p0: f64) -> Self {
        Self {
            x,
            p: Matrix3::identity() * p0,
        }
    }

    pub fn step(&mut self, model: &TrackingModel, z: f64, step: usize) -> Result<AxisUpdate> {
        let a = model.transition_block();
        let s = self.p[(0, 0)] + model.r();
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::SingularInnovation(f64::INFINITY));
        }
        let m: Vector3<f64> = a * self.p.column(0);
        let k = m / s;
        let nu = z - self.x[0];
        self.x = a * self.x + k * nu;
        let p = a * self.p * a.transpose() - k * m.transpose() + model.process_noise_block();
        self.p = (p + p.transpose()) * 0.5;
        if self.p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(step));
        }
        let scale = self
            .p
            .diagonal()
            .iter()
            .fold(1.0f64, |m, &x| m.max(x.abs()));
        let shifted = self.p + Matrix3::identity() * (super::filter::PSD_TOLERANCE * scale);
        if shifted.cholesky().is_none() {
            return Err(Error::Divergence(step));
        }
        Ok(AxisUpdate {
            innovation: nu,
            gain_sq: k.norm_squared(),
        })
    }
}
