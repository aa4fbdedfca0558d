//! Binarized P-Network laboratory core.
//!
//! Everything needed to train and deploy image-input control policies on
//! binarized convolutional networks with Conservative Value Iteration
//! targets:
//!
//! - [`tensor`] — real, pixel, and bit-packed tensor types
//! - [`kernels`] — XNOR/popcount dot products and the float reference path
//! - [`net`] — layer topology, batchnorm threshold folding, network parameters
//! - [`compiled`] — deployment form: packed weights + integer thresholds
//! - [`format`] — binary checkpoint codec (`BPN1`)
//! - [`train`] — latent-weight training with straight-through estimators
//! - [`cvi`] — mellowmax, CVI targets, softmax policy, loss
//! - [`env`] — deterministic pixel-rendered reaching and tracking tasks
//! - [`replay`], [`rl`] — replay memory and the data-collect / policy-update loop
//!
//! The crate is `no_std` + `alloc` compatible (disable default features);
//! file IO, the CLI, and benchmark timing live in the companion `bpn-cli`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod compiled;
pub mod cvi;
pub mod env;
pub mod format;
pub mod kernels;
pub mod net;
pub mod replay;
pub mod rl;
pub mod rng;
pub mod tensor;
pub mod train;

pub use compiled::{CompileError, CompiledNetwork};
pub use cvi::CviConfig;
pub use net::{Direction, FoldedActivation, LayerKind, LayerSpec, NetworkParams, NetworkSpec};
pub use rl::TrainConfig;
pub use tensor::{PackedBitTensor, PixelTensor, RealTensor};
