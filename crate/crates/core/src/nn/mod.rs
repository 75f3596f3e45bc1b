//! Small deterministic neural-network engine: row-major matrices, dense/ReLU/dropout layers,
//! an LSTM cell, Adam(W), plateau scheduling, early stopping and finite-difference checks.

mod matrix;

pub mod gradcheck;
pub mod layers;
pub mod lstm;
pub mod optim;
pub mod schedule;

pub use gradcheck::{gradcheck, GradCheckReport};
pub use layers::{relu_backward, relu_forward, sigmoid, Dense, Dropout, Module, Parameter};
pub use lstm::{LstmCache, LstmCell, LstmState};
pub use matrix::Matrix;
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use schedule::{EarlyStopper, PlateauScheduler, StopDecision};
