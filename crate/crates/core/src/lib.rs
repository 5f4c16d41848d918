//! Link-level simulation of hybrid relay-reflecting intelligent surfaces
//! (HR-RIS): surfaces where a few elements amplify and the rest reflect
//! passively.
//!
//! The crate covers channel generation, the surface coefficient and power
//! model, colored-noise rate evaluation, alternating-optimization beamforming
//! for passive, fixed and dynamic surfaces, a full-duplex amplify-and-forward
//! relay baseline, and a seeded Monte-Carlo harness that writes CSV results.

pub mod beamforming;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod rate;
pub mod relay;
pub mod surface;

pub use beamforming::{
    brute_force_oracle, optimize_dynamic_hrris, optimize_fixed_hrris, optimize_passive, AoConfig,
    OptResult,
};
pub use channel::{ChannelPair, FadingSpec, Geometry, PathLossModel, Point2};
pub use error::{Error, Result};
pub use experiment::{ExperimentSpec, Scheme, SweepOutput, TrialResult};
pub use rate::{NoiseModel, PowerModel, RateResult};
pub use relay::RelayConfig;
pub use surface::{CoeffProfile, PhaseCodebook, SurfaceConfig};
