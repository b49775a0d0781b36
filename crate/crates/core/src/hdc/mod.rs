//! Hyperdimensional computing substrate.
//!
//! Real hypervectors, unit-modulus phase vectors, the three core operations
//! (bundle, bind, permute), one cosine similarity serving the whole crate,
//! the nonlinear feature encoder, and symbolic class train/infer.

mod encode;
mod memory;
mod ops;
mod vector;

pub use encode::{nonlinear_encode, NonlinearEncoder};
pub use memory::{class_infer, class_train, ClassMemory};
pub use ops::{
    bind, bind_complex, bind_phase, bind_phase_real, bundle, bundle_complex, permute,
    random_gaussian_hv,
};
pub use vector::{cosine_similarity, ComplexHv, Hypervector, PhaseVector};

/// Default hypervector dimensionality.
pub const DEFAULT_DIM: usize = 10_000;
