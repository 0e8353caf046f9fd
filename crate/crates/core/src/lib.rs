//! Out-of-domain intent detection and novel-intent discovery over sentence
//! embeddings.
//!
//! The pipeline scores each embedding with a variational autoencoder's
//! reconstruction loss. Rows scoring at or below a calibrated threshold are
//! labeled by a softmax classifier; the rest are projected to a low-dimensional
//! space with polynomial kernel PCA and grouped with HDBSCAN (leaf selection).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the precision the pipeline uses.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adam;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod hdbscan;
pub mod kpca;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod vae;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub use error::{Error, Result};

/// Floating point scalar the numeric modules are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("every Scalar converts to f64")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize converts to every Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// VAE in the precision used by the pipeline (weights persist as `f32`).
pub type Vae = vae::VaeModel<f32>;
/// Intent classifier in pipeline precision.
pub type Classifier = classifier::ClassifierModel<f32>;
/// Kernel PCA state; the eigensolver benefits from double precision.
pub type Kpca = kpca::KpcaModel<f64>;
/// Dense row-major matrix of `f64`.
pub type Mat = linalg::Matrix<f64>;
/// Dense row-major matrix of `f32`.
pub type Mat32 = linalg::Matrix<f32>;
