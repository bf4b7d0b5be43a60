use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("value {value} lies outside the domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    /// A flow state left the admissible range (I in ρ-form, J in γ-form).
    #[error("range violation at node {node}: value {value} outside [{lo}, {hi}]")]
    Range {
        node: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("time step underflow at t = {t}: dt = {dt} fell below dt_min")]
    DtUnderflow { t: f64, dt: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("construction failed: {0}")]
    Construction(String),
}

pub type Result<T> = std::result::Result<T, Error>;
