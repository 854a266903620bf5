//! Simulation, estimation and sensitivity toolkit for a point-source atom
//! interferometer IMU with large momentum transfer.
//!
//! Modules, bottom-up: [`physics`] (constants, species, config), [`interferometer`]
//! (pulse sequences and phases), [`kinematics`] (cloud expansion, launch),
//! [`synthesis`] (fringe images), [`estimation`], [`sensitivity`],
//! [`systematics`] and [`sequencer`].
//!
//! The `parallel` feature (default) runs pixel sampling, Monte Carlo trials and
//! batch fits on rayon; [`Execution::Sequential`] or building without the
//! feature runs them on the calling thread with identical results.

pub mod error;
pub mod estimation;
pub mod exec;
pub mod interferometer;
pub mod kinematics;
pub mod physics;
pub mod sensitivity;
pub mod sequencer;
pub mod synthesis;
pub mod systematics;
pub mod units;

pub use error::{Error, Result};
pub use estimation::{fourier_estimate, wls_fit, FringeEstimate, Method};
pub use exec::Execution;
pub use interferometer::{build_sequence, PulseSequence};
pub use physics::{ExperimentConfig, SpeciesData};
pub use synthesis::{FringeImage, FringeScenario, PixelGrid};
