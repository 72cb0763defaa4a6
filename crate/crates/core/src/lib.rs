//! Maximum-likelihood CP decomposition of binary tensors under a Bernoulli
//! model with logistic, probit or Laplacian links.

pub mod cli;
pub mod decomp;
pub mod error;
pub mod glm;
pub mod links;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
pub use links::{LinkFamily, LinkSpec};
pub use tensor::{BinaryTensor, CpFactors, DenseTensor, ObservationMask};
