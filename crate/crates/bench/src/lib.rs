//! Shared inputs for the benchmarks.

use varcolor::synth::texture_plane;
use varcolor::{build_kernel, ChannelPlane, KernelGrid, KernelSpec};

/// Deterministic textured plane and its kernel at `side × side`.
pub fn fixture(side: usize) -> (ChannelPlane, KernelGrid) {
    let plane = texture_plane(side, side).expect("valid size");
    let kernel = build_kernel(&KernelSpec::default(), side, side).expect("valid size");
    (plane, kernel)
}
