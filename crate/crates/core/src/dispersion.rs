//! Dispersion energies anchoring intensities to middle gray and to the input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ChannelPlane, Field};

/// Middle gray on the normalized scale.
pub const GRAY_ANCHOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionKind {
    /// Relative entropy `a log(a/s) - (a - s)` toward each anchor.
    #[default]
    Entropic,
    /// Half squared distance toward each anchor.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionParams {
    /// Pull toward middle gray.
    pub alpha: f64,
    /// Pull toward the original data.
    pub beta: f64,
    pub kind: DispersionKind,
}

impl Default for DispersionParams {
    fn default() -> Self {
        DispersionParams {
            alpha: 255.0 / 253.0,
            beta: 1.0,
            kind: DispersionKind::Entropic,
        }
    }
}

impl DispersionParams {
    pub fn new(alpha: f64, beta: f64, kind: DispersionKind) -> Result<Self> {
        let p = DispersionParams { alpha, beta, kind };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::param("alpha", "must be finite and nonnegative"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::param("beta", "must be finite and nonnegative"));
        }
        if self.alpha + self.beta <= 0.0 {
            return Err(Error::param("alpha + beta", "must be positive"));
        }
        Ok(())
    }
}

// negated so that NaN also fails
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn check_domain(values: &[f64]) -> Result<()> {
    match values.iter().position(|&v| !(v > 0.0)) {
        Some(index) => Err(Error::Domain {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

fn check_pair(current: &[f64], original: &[f64]) -> Result<()> {
    if current.len() != original.len() {
        return Err(Error::DimensionMismatch {
            expected: (original.len(), 1),
            actual: (current.len(), 1),
        });
    }
    check_domain(current)?;
    check_domain(original)
}

#[inline]
fn relative_entropy(anchor: f64, s: f64) -> f64 {
    anchor * (anchor / s).ln() - (anchor - s)
}

/// Dispersion energy over raw intensity slices.
///
/// Fails with [`Error::Domain`] if any intensity is not positive.
pub fn dispersion_energy_values(
    current: &[f64],
    original: &[f64],
    p: &DispersionParams,
) -> Result<f64> {
    check_pair(current, original)?;
    let (alpha, beta) = (p.alpha, p.beta);
    let total = current
        .iter()
        .zip(original)
        .map(|(&i, &i0)| match p.kind {
            DispersionKind::Entropic => {
                alpha * relative_entropy(GRAY_ANCHOR, i) + beta * relative_entropy(i0, i)
            }
            DispersionKind::Quadratic => {
                let g = i - GRAY_ANCHOR;
                let d = i - i0;
                0.5 * alpha * g * g + 0.5 * beta * d * d
            }
        })
        .sum();
    Ok(total)
}

pub fn dispersion_energy(
    current: &ChannelPlane,
    original: &ChannelPlane,
    p: &DispersionParams,
) -> Result<f64> {
    original.ensure_same_dims(current.dims())?;
    dispersion_energy_values(current.values(), original.values(), p)
}

/// Entropic derivative `α(1 - g/I) + β(1 - I₀/I)` with a free gray anchor `g`.
pub fn entropic_derivative_anchored(
    current: &[f64],
    original: &[f64],
    anchor: f64,
    alpha: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    check_pair(current, original)?;
    Ok(current
        .iter()
        .zip(original)
        .map(|(&i, &i0)| alpha * (1.0 - anchor / i) + beta * (1.0 - i0 / i))
        .collect())
}

/// Per-pixel derivative of [`dispersion_energy`] with respect to `I(x)`.
pub fn dispersion_derivative(
    current: &ChannelPlane,
    original: &ChannelPlane,
    p: &DispersionParams,
) -> Result<Field> {
    original.ensure_same_dims(current.dims())?;
    let (i, i0) = (current.values(), original.values());
    let data = match p.kind {
        DispersionKind::Entropic => {
            entropic_derivative_anchored(i, i0, GRAY_ANCHOR, p.alpha, p.beta)?
        }
        DispersionKind::Quadratic => {
            check_pair(i, i0)?;
            i.iter()
                .zip(i0)
                .map(|(&v, &v0)| p.alpha * (v - GRAY_ANCHOR) + p.beta * (v - v0))
                .collect()
        }
    };
    Field::from_vec(current.width(), current.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::RHO;
    use proptest::prelude::*;

    fn plane(v: &[f64]) -> ChannelPlane {
        ChannelPlane::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn params_validated() {
        assert!(DispersionParams::new(-1.0, 1.0, DispersionKind::Entropic).is_err());
        assert!(DispersionParams::new(0.0, 0.0, DispersionKind::Entropic).is_err());
        assert!(DispersionParams::new(0.0, 1.0, DispersionKind::Quadratic).is_ok());
    }

    #[test]
    fn zero_at_global_minimum() {
        let half = plane(&[0.5; 6]);
        for kind in [DispersionKind::Entropic, DispersionKind::Quadratic] {
            let p = DispersionParams::new(1.0, 1.0, kind).unwrap();
            assert_eq!(dispersion_energy(&half, &half, &p).unwrap(), 0.0);
            let d = dispersion_derivative(&half, &half, &p).unwrap();
            assert!(d.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn hand_evaluated_examples() {
        let i = plane(&[0.25]);
        let i0 = plane(&[0.5]);
        let ent = DispersionParams::new(1.0, 0.0, DispersionKind::Entropic).unwrap();
        let e = dispersion_energy(&i, &i0, &ent).unwrap();
        assert!((e - (0.5 * 2f64.ln() - 0.25)).abs() < 1e-15);
        assert!((e - 0.096574).abs() < 1e-6);

        let quad = DispersionParams::new(1.0, 1.0, DispersionKind::Quadratic).unwrap();
        assert!((dispersion_energy(&i, &i0, &quad).unwrap() - 1.0 / 16.0).abs() < 1e-15);

        let both = DispersionParams::new(1.0, 1.0, DispersionKind::Entropic).unwrap();
        let d = dispersion_derivative(&i, &i0, &both).unwrap();
        assert!((d.values()[0] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_intensity_is_a_domain_error() {
        let p = DispersionParams::default();
        assert!(matches!(
            dispersion_energy_values(&[0.3, 0.0], &[0.5, 0.5], &p),
            Err(Error::Domain { index: 1, .. })
        ));
        assert!(dispersion_energy_values(&[0.3, -0.1], &[0.5, 0.5], &p).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let cur = [0.13, 0.4, 0.77, 0.95, 0.5];
        let orig = [0.2, 0.6, 0.7, 0.3, 0.5];
        let h = 1e-6;
        for kind in [DispersionKind::Entropic, DispersionKind::Quadratic] {
            let p = DispersionParams::new(255.0 / 253.0, 1.0, kind).unwrap();
            let d = dispersion_derivative(&plane(&cur), &plane(&orig), &p).unwrap();
            for k in 0..cur.len() {
                let mut up = cur;
                let mut dn = cur;
                up[k] += h;
                dn[k] -= h;
                let fd = (dispersion_energy_values(&up, &orig, &p).unwrap()
                    - dispersion_energy_values(&dn, &orig, &p).unwrap())
                    / (2.0 * h);
                let exact = d.values()[k];
                assert!((fd - exact).abs() <= 1e-4 * exact.abs().max(1e-2), "{kind:?} {k}");
            }
        }
    }

    #[test]
    fn entropic_penalty_is_asymmetric() {
        let p = DispersionParams::new(1.0, 0.0, DispersionKind::Entropic).unwrap();
        for delta in [0.05, 0.2, 0.4, 0.49] {
            let lo = dispersion_energy_values(&[0.5 - delta], &[0.5], &p).unwrap();
            let hi = dispersion_energy_values(&[0.5 + delta], &[0.5], &p).unwrap();
            assert!(lo > hi, "delta={delta}");
        }
    }

    proptest! {
        #[test]
        fn energy_is_nonnegative(
            pairs in prop::collection::vec((RHO..=1.0f64, RHO..=1.0f64), 1..20),
            alpha in 0.0..3.0f64, beta in 0.01..3.0f64, quad in any::<bool>()
        ) {
            let kind = if quad { DispersionKind::Quadratic } else { DispersionKind::Entropic };
            let p = DispersionParams::new(alpha, beta, kind).unwrap();
            let (i, i0): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(dispersion_energy_values(&i, &i0, &p).unwrap() >= -1e-15);
        }

        // The anchor-dependent part -(α g + β I₀)/I has degree -1 in I, and
        // the whole derivative is invariant when I, I₀ and g scale together.
        #[test]
        fn entropic_derivative_homogeneity(
            pairs in prop::collection::vec((0.05..=1.0f64, 0.05..=1.0f64), 1..10),
            lam in 0.1..4.0f64, alpha in 0.0..3.0f64, beta in 0.0..3.0f64
        ) {
            let (i, i0): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let base = entropic_derivative_anchored(&i, &i0, 0.5, alpha, beta).unwrap();
            let si: Vec<f64> = i.iter().map(|v| lam * v).collect();
            let scaled = entropic_derivative_anchored(&si, &i0, 0.5, alpha, beta).unwrap();
            for (b, s) in base.iter().zip(&scaled) {
                let vb = b - (alpha + beta);
                let vs = s - (alpha + beta);
                prop_assert!((vs - vb / lam).abs() <= 1e-9 * (1.0 + vb.abs()));
            }
            let si0: Vec<f64> = i0.iter().map(|v| lam * v).collect();
            let joint = entropic_derivative_anchored(&si, &si0, 0.5 * lam, alpha, beta).unwrap();
            for (b, j) in base.iter().zip(&joint) {
                prop_assert!((b - j).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }
}
