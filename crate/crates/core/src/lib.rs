//! Rule-based camera tampering detection for still frames.
//!
//! A handful of normal reference frames are reduced to ORB feature sets and
//! thresholds (a [`CalibrationProfile`]). Each new frame is then matched
//! against the references and labelled `normal`, `blurred`, `rotated` or
//! `obstructed`.
//!
//! ```no_run
//! use tamperlens::{calibrate, CalibrationConfig, Classifier};
//! # fn frames() -> Vec<(String, tamperlens::GrayImage)> { unimplemented!() }
//! # fn frame() -> tamperlens::GrayImage { unimplemented!() }
//! let profile = calibrate(&frames(), &CalibrationConfig::default())?;
//! let classifier = Classifier::new(profile)?;
//! println!("{}", classifier.classify(&frame()).label);
//! # Ok::<(), tamperlens::PipelineError>(())
//! ```

pub mod corpus;
pub mod eval;
pub mod homography;
pub mod image;
pub mod matching;
pub mod metrics;
pub mod orb;
pub mod pipeline;
pub mod synth;

pub use crate::eval::{
    evaluate, load_dataset, load_profile, save_profile, EvalError, EvalReport, LabeledDataset,
};
pub use crate::image::{GrayImage, ImageError, RgbImage};
pub use crate::pipeline::{
    calibrate, classify, CalibrationConfig, CalibrationProfile, Classification, Classifier,
    DecisionRule, PipelineError, TamperLabel,
};
