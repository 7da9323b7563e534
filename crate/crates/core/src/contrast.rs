//! Regularized min/max, the Weber-Fechner contrast energies and their
//! pointwise force functions.
//!
//! Every contrast energy has the form
//!
//! ```text
//! C(I) = ¼ Σ_x Σ_y w(x,y) c(I(x), I(y))
//! ```
//!
//! with `x` running over the image block and `y` over the mirror-extended
//! torus. `c` is a monotone function of the regularized ratio
//! `min_ε(a,b) / max_ε(a,b)`, where `min_ε, max_ε = ½(a + b ∓ A_ε(a - b))`
//! and `A_ε` is a smooth convex surrogate of `|z|`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ChannelPlane, Field, RHO};
use crate::kernel::{pair_field, pair_sum, KernelGrid};

/// Smooth surrogate family for the absolute value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegFamily {
    /// `A_ε(z) = √(ε² + z²) - ε`.
    Sqrt,
    /// `A_ε(z) = z·atan(z/ε)/atan(1/ε) - ε/(2 atan(1/ε))·log(1 + z²/ε²)`.
    Arctan,
}

/// A nice regularization `A_ε` of `|z|` together with its derivative `s_ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegularizerRepr", into = "RegularizerRepr")]
pub struct Regularizer {
    family: RegFamily,
    epsilon: f64,
    // atan(1/ε), cached
    atan_inv: f64,
}

#[derive(Serialize, Deserialize)]
struct RegularizerRepr {
    family: RegFamily,
    epsilon: f64,
}

impl TryFrom<RegularizerRepr> for Regularizer {
    type Error = Error;
    fn try_from(r: RegularizerRepr) -> Result<Self> {
        Regularizer::new(r.family, r.epsilon)
    }
}

impl From<Regularizer> for RegularizerRepr {
    fn from(r: Regularizer) -> Self {
        RegularizerRepr {
            family: r.family,
            epsilon: r.epsilon,
        }
    }
}

impl Default for Regularizer {
    fn default() -> Self {
        Regularizer::new(RegFamily::Arctan, 1.0 / 20.0).expect("valid default")
    }
}

impl Regularizer {
    pub fn new(family: RegFamily, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::param("epsilon", format!("must be positive, got {epsilon}")));
        }
        Ok(Regularizer {
            family,
            epsilon,
            atan_inv: (1.0 / epsilon).atan(),
        })
    }

    pub fn arctan(epsilon: f64) -> Result<Self> {
        Self::new(RegFamily::Arctan, epsilon)
    }

    pub fn sqrt(epsilon: f64) -> Result<Self> {
        Self::new(RegFamily::Sqrt, epsilon)
    }

    pub fn family(&self) -> RegFamily {
        self.family
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `A_ε(z)`.
    #[inline]
    pub fn a(&self, z: f64) -> f64 {
        let e = self.epsilon;
        match self.family {
            RegFamily::Sqrt => (e * e + z * z).sqrt() - e,
            RegFamily::Arctan => {
                let q = z / e;
                (z * q.atan() - 0.5 * e * q.mul_add(q, 1.0).ln()) / self.atan_inv
            }
        }
    }

    /// `s_ε(z) = A_ε'(z)`, a smooth odd approximation of the sign function.
    #[inline]
    pub fn s(&self, z: f64) -> f64 {
        let e = self.epsilon;
        match self.family {
            RegFamily::Sqrt => z / (e * e + z * z).sqrt(),
            RegFamily::Arctan => (z / e).atan() / self.atan_inv,
        }
    }

    /// `A_ε(z)` and `s_ε(z)` together, sharing the transcendental work.
    #[inline]
    pub fn a_and_s(&self, z: f64) -> (f64, f64) {
        let e = self.epsilon;
        match self.family {
            RegFamily::Sqrt => {
                let r = (e * e + z * z).sqrt();
                (r - e, z / r)
            }
            RegFamily::Arctan => {
                let q = z / e;
                let at = q.atan();
                let s = at / self.atan_inv;
                let a = (z * at - 0.5 * e * q.mul_add(q, 1.0).ln()) / self.atan_inv;
                (a, s)
            }
        }
    }

    #[inline]
    pub fn min(&self, a: f64, b: f64) -> f64 {
        0.5 * (a + b - self.a(a - b))
    }

    #[inline]
    pub fn max(&self, a: f64, b: f64) -> f64 {
        0.5 * (a + b + self.a(a - b))
    }

    /// `m_ε = max_{z ∈ [-1, 1]} |s_ε'(z)|`, attained at `z = 0`.
    pub fn max_slope(&self) -> f64 {
        match self.family {
            RegFamily::Sqrt => 1.0 / self.epsilon,
            RegFamily::Arctan => 1.0 / (self.epsilon * self.atan_inv),
        }
    }
}

pub fn a_eps(z: f64, reg: &Regularizer) -> f64 {
    reg.a(z)
}

pub fn s_eps(z: f64, reg: &Regularizer) -> f64 {
    reg.s(z)
}

pub fn min_eps(a: f64, b: f64, reg: &Regularizer) -> f64 {
    reg.min(a, b)
}

pub fn max_eps(a: f64, b: f64, reg: &Regularizer) -> f64 {
    reg.max(a, b)
}

/// Monotone function applied to the basic contrast variable `min/max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastKind {
    Id,
    Log,
    Michelson,
}

impl std::str::FromStr for ContrastKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "id" => Ok(ContrastKind::Id),
            "log" => Ok(ContrastKind::Log),
            "michelson" => Ok(ContrastKind::Michelson),
            other => Err(Error::param(
                "variant",
                format!("expected id, log or michelson, got {other:?}"),
            )),
        }
    }
}

impl std::fmt::Display for ContrastKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ContrastKind::Id => "id",
            ContrastKind::Log => "log",
            ContrastKind::Michelson => "michelson",
        })
    }
}

/// Contrast function together with an optional gamma transform of the ratio.
///
/// `gamma == 1` selects the plain energies. For `gamma < 1` the ratio is
/// replaced by `(min/max)^γ`; for the log kind that only rescales the energy
/// and the force by `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastVariant {
    pub kind: ContrastKind,
    pub gamma: f64,
}

impl Default for ContrastVariant {
    fn default() -> Self {
        ContrastVariant::id()
    }
}

impl ContrastVariant {
    pub fn new(kind: ContrastKind, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::param("gamma", format!("must lie in (0, 1], got {gamma}")));
        }
        Ok(ContrastVariant { kind, gamma })
    }

    pub fn id() -> Self {
        ContrastVariant {
            kind: ContrastKind::Id,
            gamma: 1.0,
        }
    }

    pub fn log() -> Self {
        ContrastVariant {
            kind: ContrastKind::Log,
            gamma: 1.0,
        }
    }

    pub fn michelson() -> Self {
        ContrastVariant {
            kind: ContrastKind::Michelson,
            gamma: 1.0,
        }
    }

    pub fn with_gamma(self, gamma: f64) -> Result<Self> {
        Self::new(self.kind, gamma)
    }

    fn is_gamma(&self) -> bool {
        self.gamma != 1.0
    }
}

/// Inverse contrast `c(a, b)` (without the ¼ prefactor).
#[inline]
pub(crate) fn pair_contrast(a: f64, b: f64, v: &ContrastVariant, reg: &Regularizer) -> f64 {
    let g = v.gamma;
    match v.kind {
        ContrastKind::Id => {
            let t = reg.min(a, b) / reg.max(a, b);
            if v.is_gamma() {
                t.powf(g) / g
            } else {
                t
            }
        }
        ContrastKind::Log => {
            let l = (reg.min(a, b) / reg.max(a, b)).ln();
            if v.is_gamma() {
                g * l
            } else {
                l
            }
        }
        ContrastKind::Michelson => {
            if v.is_gamma() {
                let (u, w) = (a.powf(g), b.powf(g));
                -reg.a(u - w) / (g * (u + w))
            } else {
                -reg.a(a - b) / (a + b)
            }
        }
    }
}

/// `∂c/∂a`, differentiated exactly through `min_ε` and `max_ε`.
#[inline]
pub(crate) fn pair_contrast_da(a: f64, b: f64, v: &ContrastVariant, reg: &Regularizer) -> f64 {
    let g = v.gamma;
    match v.kind {
        ContrastKind::Id | ContrastKind::Log => {
            let (big_a, s) = reg.a_and_s(a - b);
            let m = 0.5 * (a + b - big_a);
            let mm = 0.5 * (a + b + big_a);
            let dm = 0.5 * (1.0 - s);
            let dmm = 0.5 * (1.0 + s);
            if v.kind == ContrastKind::Log {
                let d = dm / m - dmm / mm;
                if v.is_gamma() {
                    g * d
                } else {
                    d
                }
            } else {
                let t = m / mm;
                let dt = (dm * mm - m * dmm) / (mm * mm);
                if v.is_gamma() {
                    t.powf(g - 1.0) * dt
                } else {
                    dt
                }
            }
        }
        ContrastKind::Michelson => {
            if v.is_gamma() {
                let (u, w) = (a.powf(g), b.powf(g));
                let (big_a, s) = reg.a_and_s(u - w);
                let sum = u + w;
                -a.powf(g - 1.0) * (s * sum - big_a) / (sum * sum)
            } else {
                let (big_a, s) = reg.a_and_s(a - b);
                let sum = a + b;
                -(s * sum - big_a) / (sum * sum)
            }
        }
    }
}

/// The summand `r(a, b)` of the force field `R(x) = Σ_y w(x,y) r(I(x), I(y))`.
#[inline]
pub fn r_pointwise(a: f64, b: f64, v: &ContrastVariant, reg: &Regularizer) -> f64 {
    match v.kind {
        ContrastKind::Log => {
            let s = reg.s(a - b);
            if v.is_gamma() {
                v.gamma * s
            } else {
                s
            }
        }
        ContrastKind::Id if !v.is_gamma() => {
            let (big_a, s) = reg.a_and_s(a - b);
            let mm = 0.5 * (a + b + big_a);
            a * b / (mm * mm) * s
        }
        ContrastKind::Michelson if !v.is_gamma() => {
            let sum = a + b;
            2.0 * a * b / (sum * sum) * reg.s(a - b)
        }
        ContrastKind::Id => {
            let (big_a, s) = reg.a_and_s(a - b);
            let m = 0.5 * (a + b - big_a);
            let mm = 0.5 * (a + b + big_a);
            (m / mm).powf(v.gamma) * s
        }
        ContrastKind::Michelson => {
            let (big_a, s) = reg.a_and_s(a - b);
            let m = (0.5 * (a + b - big_a)).powf(v.gamma);
            let mm = (0.5 * (a + b + big_a)).powf(v.gamma);
            let sum = m + mm;
            2.0 * m * mm / (sum * sum) * s
        }
    }
}

/// `sign₀`: the sign function with value 0 at 0.
#[inline]
pub fn sign0(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The `ε → 0` limit of [`r_pointwise`] for `γ = 1`.
pub fn r_limit_pointwise(a: f64, b: f64, kind: ContrastKind) -> f64 {
    let sg = sign0(a - b);
    match kind {
        ContrastKind::Id => a.min(b) / a.max(b) * sg,
        ContrastKind::Log => sg,
        ContrastKind::Michelson => 2.0 * a * b / ((a + b) * (a + b)) * sg,
    }
}

pub(crate) fn check_kernel(plane: &ChannelPlane, kernel: &KernelGrid) -> Result<()> {
    if plane.dims() != kernel.dims() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dims(),
            actual: plane.dims(),
        });
    }
    Ok(())
}

/// The regularized contrast energy `C^f_{w,ε}` (or its gamma variant).
pub fn contrast_energy(
    plane: &ChannelPlane,
    kernel: &KernelGrid,
    v: &ContrastVariant,
    reg: &Regularizer,
) -> Result<f64> {
    check_kernel(plane, kernel)?;
    let rows = pair_field(plane, kernel, |a, b| pair_contrast(a, b, v, reg));
    Ok(0.25 * rows.iter().sum::<f64>())
}

/// Exact first variation `∂C/∂I(x)` at pixel `(col, row)`.
///
/// Unlike the force field used by the solver, this keeps every term of the
/// chain rule through `min_ε`/`max_ε`, so it matches finite differences of
/// [`contrast_energy`] to rounding error.
pub fn variation_contrast(
    plane: &ChannelPlane,
    pixel: (usize, usize),
    kernel: &KernelGrid,
    v: &ContrastVariant,
    reg: &Regularizer,
) -> Result<f64> {
    check_kernel(plane, kernel)?;
    let idx = pixel_index(plane, pixel)?;
    let mut buf = vec![0.0; plane.len()];
    Ok(0.5 * pair_sum(plane, kernel, idx, &mut buf, |a, b| pair_contrast_da(a, b, v, reg)))
}

/// [`variation_contrast`] at every pixel.
pub fn variation_contrast_field(
    plane: &ChannelPlane,
    kernel: &KernelGrid,
    v: &ContrastVariant,
    reg: &Regularizer,
) -> Result<Field> {
    check_kernel(plane, kernel)?;
    let data = pair_field(plane, kernel, |a, b| 0.5 * pair_contrast_da(a, b, v, reg));
    Field::from_vec(plane.width(), plane.height(), data)
}

/// The leading term of the first variation, `-R(x) / (2 I(x))`: what remains
/// of [`variation_contrast`] once the `O(Q_ε)` remainder is dropped.
pub fn main_term_variation(
    plane: &ChannelPlane,
    pixel: (usize, usize),
    kernel: &KernelGrid,
    v: &ContrastVariant,
    reg: &Regularizer,
) -> Result<f64> {
    check_kernel(plane, kernel)?;
    let idx = pixel_index(plane, pixel)?;
    let mut buf = vec![0.0; plane.len()];
    let r = pair_sum(plane, kernel, idx, &mut buf, |a, b| r_pointwise(a, b, v, reg));
    Ok(-r / (2.0 * plane.values()[idx]))
}

fn pixel_index(plane: &ChannelPlane, (col, row): (usize, usize)) -> Result<usize> {
    if col >= plane.width() || row >= plane.height() {
        return Err(Error::param(
            "pixel",
            format!("({col}, {row}) outside {}x{}", plane.width(), plane.height()),
        ));
    }
    Ok(row * plane.width() + col)
}

/// Samples `r` on a uniform `samples × samples` grid over `[ρ, 1]²` and writes
/// `a,b,r` CSV rows.
pub fn write_surface_csv(
    mut out: impl Write,
    v: &ContrastVariant,
    reg: &Regularizer,
    samples: usize,
) -> std::io::Result<()> {
    writeln!(out, "a,b,r")?;
    for a in uniform_grid(samples) {
        for b in uniform_grid(samples) {
            writeln!(out, "{a},{b},{}", r_pointwise(a, b, v, reg))?;
        }
    }
    Ok(())
}

/// `n` evenly spaced points from `ρ` to `1` inclusive.
pub fn uniform_grid(n: usize) -> impl Iterator<Item = f64> + Clone {
    let step = if n > 1 { (1.0 - RHO) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| if i + 1 == n { 1.0 } else { RHO + step * i as f64 })
}
