//! Fault-tolerant quadruped locomotion.
//!
//! A desk-scale pipeline built from four layers:
//!
//! * [`nn`]: a small reverse-mode tensor library (MLPs, strided 1D convolutions,
//!   ELU, diagonal Gaussian heads) used by the encoders and the policy.
//! * [`dynamics`], [`terrain`], [`fault`], [`env`]: a simplified floating-base
//!   quadruped simulator with penalty contact, procedural heightfields, randomized
//!   joint-locking faults and a batched RL environment.
//! * [`trainer`]: PPO with a jointly trained teacher (privileged) encoder and a
//!   student (history) encoder whose latents are blended by a scheduled ratio.
//! * [`eval`]: virtual deployment with survival and velocity statistics.
//!
//! Run configuration, checkpoints and metrics live in [`config`], [`checkpoint`]
//! and [`metrics`].

pub mod checkpoint;
pub mod config;
pub mod dynamics;
pub mod env;
pub mod eval;
pub mod exec;
pub mod fault;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod selftest;
pub mod terrain;
pub mod trainer;


pub use exec::ExecMode;
