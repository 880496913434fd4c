//! Per-subject detection of Parkinson's medication ON/OFF states from wrist
//! and ankle gyroscopes.
//!
//! The pipeline band-pass filters each recording, cuts it into 5 s windows
//! with a 1 s hop, extracts 69 features per sensor, screens and ranks them,
//! and classifies each window with an SVM. Decision values are smoothed,
//! turned into a calibrated certainty and censored to INCONCLUSIVE below a
//! per-subject threshold.

pub mod calibrate;
pub mod datamodel;
pub mod error;
pub mod features;
pub mod featselect;
pub mod inference;
pub mod preprocess;
pub mod svm;
pub mod synthgen;
pub mod training;

pub use error::{Error, Result};
