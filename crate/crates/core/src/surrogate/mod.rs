//! Equation-free online stage and comparison of its output with the DNS and
//! Galerkin-reduced solutions.

pub mod compare;
pub mod online;

pub use compare::{
    compare_fields, stress_trace_error, write_coefficient_error_csv, write_lambda_csv,
    write_stress_csv, write_timing_csv, CompareReport, ResponseHistory, TimingRow,
    REFERENCE_CYCLIC_COEFFICIENT_ERROR, REFERENCE_RANDOM_COEFFICIENT_ERROR,
};
pub use online::{
    homogenize_stress, run_online, CoefficientSource, FieldSnapshot, OnlineConfig, OnlineIncrement,
    OnlineResult, StageTiming, DEFAULT_FIELD_INCREMENTS,
};
