//! Perceptually inspired variational color enhancement.
//!
//! Each chromatic channel is treated independently and evolved by a
//! semi-implicit gradient descent on an energy made of two opposing terms:
//!
//! * a local **contrast** term, a kernel-weighted double sum of a
//!   Weber-Fechner inverse contrast function of pixel pairs
//!   ([`contrast`]), whose minimization stretches contrast;
//! * a global **dispersion** term pulling intensities toward middle gray and
//!   toward the input data ([`dispersion`]).
//!
//! The pairwise force field `R(x) = Σ_y w(x,y) r(I(x), I(y))` costs O(N²)
//! per iteration when evaluated directly ([`solver::r_field_exact`]).
//! [`fastconv`] separates `r` into a bivariate polynomial and evaluates the
//! resulting sums as FFT convolutions in O(N log N).
//!
//! Images live on the mirror-extended periodic lattice of size `2W × 2H`
//! ([`image::mirror_extend`]); the kernel is built once on that torus
//! ([`kernel`]) and doubles as the FFT multiplier.

pub mod contrast;
pub mod dispersion;
pub mod error;
pub mod fastconv;
pub mod image;
pub mod io;
pub mod kernel;
pub mod noisectl;
pub mod solver;
pub mod synth;

pub use contrast::{ContrastKind, ContrastVariant, RegFamily, Regularizer};
pub use dispersion::{DispersionKind, DispersionParams};
pub use error::{Error, Result};
pub use fastconv::{FitGrid, PolySeparation};
pub use image::{channel_stats, ChannelPlane, ChannelStats, ColorImage, Field, RHO};
pub use kernel::{build_kernel, KernelGrid, KernelProfile, KernelSpec};
pub use noisectl::GrainParams;
pub use solver::{
    enhance_channel, enhance_image, EnhanceParams, RField, RMode, SolveTrace, Termination,
};
