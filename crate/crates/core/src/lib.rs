//! Tracks user interest profiles as targets moving through a genre space.
//!
//! Each user is a point in a `d`-dimensional concept space whose axes are
//! content genres. Watch events are folded into per-user interest vectors
//! ([`profile`]), the sequence of vectors is tracked with a
//! constant-acceleration Kalman predictor ([`tracker`]), and the gap between
//! predicted and observed interest drives a genre-level recommendation
//! ([`recommend`]). [`synthetic`] produces seeded stand-in data and
//! [`eval`] scores predictions by cosine distance.

pub mod error;
pub mod eval;
pub mod numfmt;
pub mod par;
pub mod profile;
pub mod recommend;
pub mod space;
pub mod synthetic;
pub mod tracker;

pub use error::{Error, Result};
pub use eval::{evaluate, EvalReport, PooledSummary};
pub use par::Execution;
pub use profile::{build_series, interest_update, Normalization, ProfileSeries, WatchEvent};
pub use recommend::{concept_deltas, recommend, ConceptDelta, DeltaClass, Recommendation};
pub use space::{cosine_distance, ConceptSpace, InterestVector};
pub use synthetic::{generate_events, generate_trajectories, Regime, ScenarioConfig};
pub use tracker::{
    build_model, gain, init_filter, predict_step, track_series, track_series_decoupled,
    FilterState, NoiseShape, StateVector, TrackRecord, TrackStep, TrackingModel,
};
