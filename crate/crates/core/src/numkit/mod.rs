//! Dense linear algebra and seeded randomness shared by the other modules.

mod decomp;
mod matrix;
mod rng;

pub use decomp::{svd, sym_eig, SvdFactors, SymEig};
pub use matrix::{dot, norm2, Matrix};
pub use rng::{rademacher, rademacher_on, streams, RngStream, RNG_ALGORITHM};
pub(crate) use rng::mix_stream;
