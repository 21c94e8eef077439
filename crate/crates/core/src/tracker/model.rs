use nalgebra::{DMatrix, DVector, Matrix3};

use crate::error::{Error, Result};
use crate::space::InterestVector;

/// Shape of the per-axis process-noise block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseShape {
    /// `q * g g^T` with `g = (T^2/2, T, 1)`: a white acceleration increment
    /// pushed through the kinematics.
    #[default]
    WhiteAcceleration,
    /// `q * I_3`.
    Diagonal,
}

/// Linear constant-acceleration model over a `d`-genre space.
///
/// The state stacks positions, then velocities, then accelerations, so the
/// full matrices are `block ⊗ I_d` with 3×3 per-axis blocks.
#[derive(Debug, Clone)]
pub struct TrackingModel {
    d: usize,
    dt: f64,
    alpha: f64,
    q: f64,
    r: f64,
    shape: NoiseShape,
    a_block: Matrix3<f64>,
    q_block: Matrix3<f64>,
    a: DMatrix<f64>,
    h: DMatrix<f64>,
    q_full: DMatrix<f64>,
    r_full: DMatrix<f64>,
}

/// Per-axis transition block `[[α, T, T²/2], [0, α, T], [0, 0, α]]`.
pub fn transition_block(dt: f64, alpha: f64) -> Matrix3<f64> {
    Matrix3::new(alpha, dt, 0.5 * dt * dt, 0.0, alpha, dt, 0.0, 0.0, alpha)
}

/// Discrete white-acceleration covariance block for unit intensity.
pub fn white_acceleration_block(dt: f64) -> Matrix3<f64> {
    let g = nalgebra::Vector3::new(0.5 * dt * dt, dt, 1.0);
    g * g.transpose()
}

/// `block ⊗ I_d`.
fn lift(block: &Matrix3<f64>, d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(3 * d, 3 * d);
    for bi in 0..3 {
        for bj in 0..3 {
            let v = block[(bi, bj)];
            if v != 0.0 {
                for i in 0..d {
                    m[(bi * d + i, bj * d + i)] = v;
                }
            }
        }
    }
    m
}

/// Builds the model with the default white-acceleration process noise.
pub fn build_model(d: usize, dt: f64, alpha: f64, q: f64, r: f64) -> Result<TrackingModel> {
    TrackingModel::new(d, dt, alpha, q, r, NoiseShape::WhiteAcceleration)
}

impl TrackingModel {
    pub fn new(d: usize, dt: f64, alpha: f64, q: f64, r: f64, shape: NoiseShape) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "dimension must be at least 1"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("T", format!("{dt} must be finite and > 0")));
        }
        if !alpha.is_finite() {
            return Err(Error::invalid("alpha", format!("{alpha} must be finite")));
        }
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::invalid("q", format!("{q} must be finite and >= 0")));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid("r", format!("{r} must be finite and > 0")));
        }
        let a_block = transition_block(dt, alpha);
        let q_block = match shape {
            NoiseShape::WhiteAcceleration => white_acceleration_block(dt) * q,
            NoiseShape::Diagonal => Matrix3::identity() * q,
        };
        let mut h = DMatrix::zeros(d, 3 * d);
        for i in 0..d {
            h[(i, i)] = 1.0;
        }
        Ok(Self {
            d,
            dt,
            alpha,
            q,
            r,
            shape,
            a_block,
            q_block,
            a: lift(&a_block, d),
            h,
            q_full: lift(&q_block, d),
            r_full: DMatrix::identity(d, d) * r,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn state_dim(&self) -> usize {
        3 * self.d
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn noise_shape(&self) -> NoiseShape {
        self.shape
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn measurement(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn process_noise(&self) -> &DMatrix<f64> {
        &self.q_full
    }

    pub fn measurement_noise(&self) -> &DMatrix<f64> {
        &self.r_full
    }

    pub fn transition_block(&self) -> &Matrix3<f64> {
        &self.a_block
    }

    pub fn process_noise_block(&self) -> &Matrix3<f64> {
        &self.q_block
    }
}

/// Stacked `[position; velocity; acceleration]`, each block `d` long.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(DVector<f64>);

impl StateVector {
    pub fn from_blocks(position: &[f64], velocity: &[f64], acceleration: &[f64]) -> Result<Self> {
        let d = position.len();
        for (what, len) in [
            ("velocity", velocity.len()),
            ("acceleration", acceleration.len()),
        ] {
            if len != d {
                return Err(Error::LengthMismatch {
                    what,
                    expected: d,
                    found: len,
                });
            }
        }
        let v = DVector::from_iterator(
            3 * d,
            position.iter().chain(velocity).chain(acceleration).copied(),
        );
        Self::from_vector(v)
    }

    pub fn from_vector(v: DVector<f64>) -> Result<Self> {
        if !v.len().is_multiple_of(3) || v.is_empty() {
            return Err(Error::invalid(
                "state",
                format!("length {} is not a positive multiple of 3", v.len()),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("state vector"));
        }
        Ok(Self(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len() / 3
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    fn block(&self, b: usize) -> &[f64] {
        let d = self.dim();
        &self.0.as_slice()[b * d..(b + 1) * d]
    }

    pub fn position(&self) -> &[f64] {
        self.block(0)
    }

    pub fn velocity(&self) -> &[f64] {
        self.block(1)
    }

    pub fn acceleration(&self) -> &[f64] {
        self.block(2)
    }

    pub fn position_vector(&self) -> InterestVector {
        InterestVector::new(self.position().to_vec()).expect("state entries are finite")
    }

    /// The `(x, ẋ, ẍ)` triple of one axis.
    pub fn axis(&self, i: usize) -> nalgebra::Vector3<f64> {
        let d = self.dim();
        nalgebra::Vector3::new(self.0[i], self.0[d + i], self.0[2 * d + i])
    }
}
