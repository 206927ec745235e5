//! Distributed node-specific signal estimation in wireless acoustic sensor
//! networks: centralized and local multichannel Wiener filters, DANSE, and
//! the iterationless iDANSE variant, with scene generation, covariance
//! estimation, a WOLA filterbank and an experiment harness.

pub mod danse;
pub mod error;
pub mod estimator;
pub mod filters;
pub mod harness;
pub mod idanse;
pub mod linalg;
pub mod metrics;
pub mod scene;
pub mod scm;
pub mod wola;

pub use error::{Error, Result};
pub use estimator::{FrameOutput, OnlineEstimator};
pub use linalg::{CMat, C64};
pub use scene::{generate_scene, Activity, ActivitySchedule, NodeLayout, Scene, SceneConfig, SelectionMatrix};
pub use scm::{ScmSet, TildeScms};
