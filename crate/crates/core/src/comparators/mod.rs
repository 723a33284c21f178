//! Benchmark methods run on the same records as the Choquet analysis.

pub mod cox;
pub mod win_ratio;
pub mod wlw;

use thiserror::Error;

use crate::encoding::PatientRecord;
use crate::inference::InferenceError;

pub use cox::{cox_ttfe, fit_cox, CoxFit, SurvivalData};
pub use win_ratio::{adjudicate, win_ratio_rec, Tier, WinRatioResult};
pub use wlw::{wlw, Stratum, WlwResult};

#[derive(Debug, Error, PartialEq)]
pub enum ComparatorError {
    #[error("no events in the pooled sample")]
    NoEvents,
    #[error("both arms must be nonempty")]
    DegenerateArms,
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

fn check_arms(records: &[PatientRecord]) -> Result<(), ComparatorError> {
    let trt = records.iter().filter(|r| r.arm.is_treatment()).count();
    if trt == 0 || trt == records.len() {
        Err(ComparatorError::DegenerateArms)
    } else {
        Ok(())
    }
}
