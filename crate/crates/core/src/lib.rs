//! Hierarchical federated learning with label-driven multi-teacher
//! distillation at the global server.
//!
//! Regions run FedAvg over their own clients. Every episode the global
//! server either averages the regional models or, when the per-class
//! reliability of the regions disagrees enough, distills them into the
//! global model with class-conditioned KL losses weighted by AUC scores.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the
//! orchestration layer and CLI run in `f64`.

pub mod datagen;
pub mod error;
pub mod flcore;
pub mod harness;
pub mod lkd;
pub mod numerics;
pub mod orchestrator;
pub mod rng;
pub mod theory;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub use error::{Error, Result};

/// Floating point scalar used throughout the numerical core.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + for<'a> Sum<&'a Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Tensor = numerics::Tensor2<f64>;
pub type Tensor32 = numerics::Tensor2<f32>;
pub type Model = numerics::ModelParams<f64>;
pub type Model32 = numerics::ModelParams<f32>;
pub type Dataset = datagen::Dataset<f64>;
pub type Dataset32 = datagen::Dataset<f32>;
pub type ProbVector = numerics::ProbVector<f64>;


