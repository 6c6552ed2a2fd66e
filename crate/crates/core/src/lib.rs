//! Tick-accurate simulator of a digital predictive-coding substrate.
//!
//! Each neuron is a [`NeuralCore`] that runs a fixed six-stage schedule per
//! tick on a sequential binary32 MAC datapath. Cores are wired into a layered
//! [`Network`] whose inter-layer buses are latched, so a tick is deterministic
//! regardless of execution order. Supervised learning is driven entirely by
//! clamping the boundary layers (see [`harness`]).
//!
//! - [`scalar`]: binary32 MAC and activations
//! - [`neural_core`]: one core, its stages and cycle model
//! - [`network`]: layers, buses, tick scheduler, energy
//! - [`oracle`]: dense reference tick in binary32 and binary64
//! - [`harness`]: teacher-student data, training, evaluation, experiments
//! - [`config_io`]: config files, `PCSUB1` checkpoints, CSV, PRNG

pub mod config_io;
pub mod error;
pub mod harness;
pub mod network;
pub mod neural_core;
pub mod oracle;
pub mod scalar;

pub use config_io::{parse_config, ExperimentConfig, Overrides, Prng};
pub use error::{Error, ParseError, Result};
pub use harness::{
    evaluate_mse, generate_dataset, run_config, run_experiment, train_supervised, Dataset, Experiment,
    ExperimentOutput, LearningCurve, Sample, Teacher, TeacherKind, TeacherSpec, TrainProtocol,
};
pub use network::{ClampMap, Network, NetworkConfig, NetworkSnapshot, Schedule, TickReport};
pub use neural_core::{ClampSignal, CoreConfig, CoreState, CoreTickInput, CoreTickOutput, NeuralCore};
pub use oracle::{oracle_tick, verify_random_networks, DenseState, OracleMode, VerifyReport};
pub use scalar::{activation_derivative, apply_activation, fp_mul_add, ActivationKind};
