//! Composite endpoint analysis with the Choquet integral.
//!
//! Patients are encoded into `[0, 1]^K` outcome profiles, aggregated with a
//! 2-additive fuzzy measure, and compared between arms with a rank-based
//! benefit index and a permutation test. Cox time-to-first-event, a
//! recurrent-event win ratio and the WLW marginal model are provided as
//! comparators, together with a Gamma-frailty trial simulator and a sweep
//! harness.

pub mod analysis;
pub mod capacity;
pub mod comparators;
pub mod encoding;
pub mod harness;
pub mod inference;
pub mod rng;
pub mod simulator;

pub use analysis::{run_method, Method, MethodOutcome, MethodReport, RunSettings};
pub use capacity::{build_measure, FuzzyMeasure, MeasureSpec, ProfileVector};
pub use encoding::{encode_cohort, Arm, EncodingConfig, EncodingMode, PatientRecord};
pub use inference::{AttributionResult, CbiResult};
pub use simulator::{scenario_registry, simulate_trial, ScenarioSpec, SimConfig};
