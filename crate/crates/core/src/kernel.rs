//! Spatial influence kernel on the `2W × 2H` torus induced by the mirror
//! extension.
//!
//! The weight between two lattice points depends only on their torus
//! displacement, so one normalization constant makes every row of the kernel
//! sum to one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ChannelPlane;

/// Radial decay family of the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KernelProfile {
    /// `1 / d`.
    Reciprocal,
    /// `exp(-d² / 2σ²)`.
    Gaussian { sigma: f64 },
}

impl KernelProfile {
    fn eval(&self, d: f64) -> f64 {
        match *self {
            KernelProfile::Reciprocal => 1.0 / d,
            KernelProfile::Gaussian { sigma } => (-d * d / (2.0 * sigma * sigma)).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub profile: KernelProfile,
    /// Unnormalized weight at zero displacement.
    pub self_weight: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            profile: KernelProfile::Reciprocal,
            self_weight: 0.0,
        }
    }
}

/// Normalized weights indexed by displacement on the `2W × 2H` torus.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid {
    width: usize,
    height: usize,
    /// Row-major over displacements `(dx, dy)`, `dx < 2W`, `dy < 2H`.
    weights: Vec<f64>,
    norm: f64,
}

impl KernelGrid {
    /// Image width `W` this kernel was built for.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Torus size `(2W, 2H)`.
    pub fn torus_dims(&self) -> (usize, usize) {
        (2 * self.width, 2 * self.height)
    }

    /// Normalization constant `A`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at displacement `(dx, dy)`, taken modulo the torus.
    #[inline]
    pub fn weight(&self, dx: i64, dy: i64) -> f64 {
        let (tw, th) = self.torus_dims();
        let x = dx.rem_euclid(tw as i64) as usize;
        let y = dy.rem_euclid(th as i64) as usize;
        self.weights[y * tw + x]
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Fills `out[j]` with the weight that block pixel `j` receives from
    /// block pixel `x`, summed over the four mirror images of `j` on the
    /// torus. `out` has length `W·H`.
    ///
    /// A sum over the whole torus of `w(x, y) f(J(y))`, with `J` the mirror
    /// extension, equals `Σ_j out[j] f(I(j))`.
    pub(crate) fn folded_row(&self, x: usize, out: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        let (tw, th) = (2 * w, 2 * h);
        let (px, py) = (x % w, x / w);
        debug_assert_eq!(out.len(), w * h);
        // column offsets of the two horizontal images of each column
        let cols: Vec<(usize, usize)> = (0..w)
            .map(|j| ((j + tw - px) % tw, (tw - 1 - j + tw - px) % tw))
            .collect();
        for jy in 0..h {
            let r0 = ((jy + th - py) % th) * tw;
            let r1 = ((th - 1 - jy + th - py) % th) * tw;
            let row0 = &self.weights[r0..r0 + tw];
            let row1 = &self.weights[r1..r1 + tw];
            let dst = &mut out[jy * w..(jy + 1) * w];
            for (d, &(c0, c1)) in dst.iter_mut().zip(&cols) {
                *d = row0[c0] + row0[c1] + row1[c0] + row1[c1];
            }
        }
    }
}

/// `Σ_y w(x, y) f(I(x), J(y))` over the torus for block pixel index `x`,
/// where `J` is the mirror extension of `plane`. `buf` is scratch of length
/// `W·H`.
#[inline]
pub(crate) fn pair_sum(
    plane: &ChannelPlane,
    kernel: &KernelGrid,
    x: usize,
    buf: &mut [f64],
    f: impl Fn(f64, f64) -> f64,
) -> f64 {
    kernel.folded_row(x, buf);
    let values = plane.values();
    let a = values[x];
    buf.iter().zip(values).map(|(&w, &b)| w * f(a, b)).sum()
}

/// [`pair_sum`] for every block pixel, evaluated in parallel over pixels.
/// Each entry is summed sequentially, so the result is deterministic.
pub(crate) fn pair_field(
    plane: &ChannelPlane,
    kernel: &KernelGrid,
    f: impl Fn(f64, f64) -> f64 + Sync,
) -> Vec<f64> {
    let n = plane.len();
    (0..n)
        .into_par_iter()
        .map_init(|| vec![0.0; n], |buf, x| pair_sum(plane, kernel, x, buf, &f))
        .collect()
}

/// Shortest Euclidean distance between `p` and `q` on the torus with period
/// `(2W, 2H)`.
pub fn torus_distance(p: (i64, i64), q: (i64, i64), width: usize, height: usize) -> f64 {
    let (tw, th) = (2 * width as i64, 2 * height as i64);
    let dx = (p.0 - q.0).rem_euclid(tw);
    let dy = (p.1 - q.1).rem_euclid(th);
    let dx = dx.min(tw - dx) as f64;
    let dy = dy.min(th - dy) as f64;
    dx.hypot(dy)
}

/// Builds the normalized kernel for a `W × H` image.
pub fn build_kernel(spec: &KernelSpec, width: usize, height: usize) -> Result<KernelGrid> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension {
            width,
            height,
            reason: "width and height must be at least 1",
        });
    }
    if !spec.self_weight.is_finite() || spec.self_weight < 0.0 {
        return Err(Error::param("self_weight", "must be finite and nonnegative"));
    }
    if let KernelProfile::Gaussian { sigma } = spec.profile {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("sigma", "must be finite and positive"));
        }
    }
    // A single pixel has no distinct neighbor; every torus image of it is a
    // copy of itself.
    if width * height == 1 && spec.self_weight == 0.0 {
        return Err(Error::DegenerateKernel {
            width,
            height,
            reason: "a single pixel has no neighbors and self-weight is zero",
        });
    }

    let (tw, th) = (2 * width, 2 * height);
    let mut weights = Vec::with_capacity(tw * th);
    for dy in 0..th {
        for dx in 0..tw {
            let w = if dx == 0 && dy == 0 {
                spec.self_weight
            } else {
                spec.profile
                    .eval(torus_distance((dx as i64, dy as i64), (0, 0), width, height))
            };
            weights.push(w);
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::DegenerateKernel {
            width,
            height,
            reason: "profile weights sum to zero",
        });
    }
    let norm = 1.0 / total;
    for w in &mut weights {
        *w *= norm;
    }
    Ok(KernelGrid {
        width,
        height,
        weights,
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_distance_examples() {
        assert_eq!(torus_distance((3, 2), (3, 2), 4, 4), 0.0);
        assert_eq!(torus_distance((0, 0), (7, 0), 4, 4), 1.0);
        assert_eq!(torus_distance((0, 0), (4, 3), 4, 4), 5.0);
    }

    #[test]
    fn torus_distance_bounded() {
        let (w, h) = (5, 3);
        let max = ((w * w + h * h) as f64).sqrt();
        for x in -12..12 {
            for y in -9..9 {
                let d = torus_distance((x, y), (1, 2), w, h);
                assert!((0.0..=max).contains(&d));
            }
        }
    }

    #[test]
    fn single_pixel_is_degenerate() {
        assert!(matches!(
            build_kernel(&KernelSpec::default(), 1, 1),
            Err(Error::DegenerateKernel { .. })
        ));
        let with_self = KernelSpec {
            self_weight: 1.0,
            ..KernelSpec::default()
        };
        let k = build_kernel(&with_self, 1, 1).unwrap();
        assert!((k.total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_hand_normalization() {
        // 4x4 torus: 4 at distance 1, 4 at √2, 2 at 2, 4 at √5, 1 at √8
        let s2 = 2f64.sqrt();
        let s5 = 5f64.sqrt();
        let s8 = 8f64.sqrt();
        let a = 1.0 / (4.0 + 4.0 / s2 + 2.0 / 2.0 + 4.0 / s5 + 1.0 / s8);
        let k = build_kernel(&KernelSpec::default(), 2, 2).unwrap();
        assert!((k.norm() - a).abs() < 1e-15);
        assert!((k.total() - 1.0).abs() < 1e-15);
        assert_eq!(k.weight(0, 0), 0.0);
        assert!((k.weight(1, 0) - a).abs() < 1e-15);
        assert!((k.weight(1, 1) - a / s2).abs() < 1e-15);
        assert!((k.weight(2, 0) - a / 2.0).abs() < 1e-15);
        assert!((k.weight(2, 1) - a / s5).abs() < 1e-15);
        assert!((k.weight(2, 2) - a / s8).abs() < 1e-15);
        let mut distinct: Vec<f64> = k.weights().iter().copied().filter(|&w| w > 0.0).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert_eq!(distinct.len(), 5);
    }

    #[test]
    fn symmetric_and_monotone() {
        let (w, h) = (5, 3);
        let k = build_kernel(&KernelSpec::default(), w, h).unwrap();
        let mut by_dist = Vec::new();
        for dy in 0..2 * h as i64 {
            for dx in 0..2 * w as i64 {
                assert_eq!(k.weight(dx, dy), k.weight(-dx, -dy));
                if dx != 0 || dy != 0 {
                    by_dist.push((torus_distance((dx, dy), (0, 0), w, h), k.weight(dx, dy)));
                }
            }
        }
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in by_dist.windows(2) {
            assert!(pair[1].1 <= pair[0].1);
        }
    }

    #[test]
    fn folded_rows_sum_to_one() {
        let (w, h) = (4, 3);
        let k = build_kernel(&KernelSpec::default(), w, h).unwrap();
        let mut row = vec![0.0; w * h];
        for x in 0..w * h {
            k.folded_row(x, &mut row);
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
        // folded weights are symmetric
        let mut rows = vec![vec![0.0; w * h]; w * h];
        for (x, r) in rows.iter_mut().enumerate() {
            k.folded_row(x, r);
        }
        for i in 0..w * h {
            for j in 0..w * h {
                assert!((rows[i][j] - rows[j][i]).abs() < 1e-15);
            }
        }
    }
}
