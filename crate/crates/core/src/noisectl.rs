//! Extrema killer: area opening followed by area closing, with the removed
//! detail kept as a signed residual for optional add-back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ChannelPlane, Field, RHO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrainParams {
    /// Minimum area, in pixels, of a surviving peak or valley.
    pub area: usize,
    pub enabled: bool,
}

impl Default for GrainParams {
    fn default() -> Self {
        GrainParams {
            area: 16,
            enabled: false,
        }
    }
}

impl GrainParams {
    pub fn new(area: usize, enabled: bool) -> Result<Self> {
        let g = GrainParams { area, enabled };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.area == 0 {
            return Err(Error::param("grain area", "must be at least 1"));
        }
        Ok(())
    }
}

fn find(parent: &mut [usize], mut p: usize) -> usize {
    let mut root = p;
    while parent[root] != root {
        root = parent[root];
    }
    while parent[p] != root {
        let next = parent[p];
        parent[p] = root;
        p = next;
    }
    root
}

/// Area opening with 4-connectivity: every connected component of every
/// upper threshold set with fewer than `area` pixels is lowered to the
/// surrounding level.
pub fn area_open(values: &[f64], width: usize, height: usize, area: usize) -> Vec<f64> {
    let n = width * height;
    assert_eq!(values.len(), n, "plane has wrong length");
    if area <= 1 {
        return values.to_vec();
    }
    let mut order: Vec<usize> = (0..n).collect();
    // descending by value; ties by index keep the order total
    order.sort_by(|&p, &q| values[q].total_cmp(&values[p]).then(p.cmp(&q)));

    const UNSEEN: usize = usize::MAX;
    let mut parent = vec![UNSEEN; n];
    let mut size = vec![0usize; n];
    for &p in &order {
        parent[p] = p;
        size[p] = 1;
        let (x, y) = (p % width, p / width);
        let neighbors = [
            (x > 0).then(|| p - 1),
            (x + 1 < width).then(|| p + 1),
            (y > 0).then(|| p - width),
            (y + 1 < height).then(|| p + width),
        ];
        for q in neighbors.into_iter().flatten() {
            if parent[q] == UNSEEN {
                continue;
            }
            let r = find(&mut parent, q);
            if r == p {
                continue;
            }
            if values[r] == values[p] || size[r] < area {
                parent[r] = p;
                size[p] = (size[p] + size[r]).min(area);
            } else {
                size[p] = area;
            }
        }
    }

    // parents are visited after their children, so resolve in reverse
    let mut out = vec![0.0; n];
    for &p in order.iter().rev() {
        out[p] = if parent[p] == p {
            values[p]
        } else {
            out[parent[p]]
        };
    }
    out
}

/// Area closing: the dual of [`area_open`] under negation.
pub fn area_close(values: &[f64], width: usize, height: usize, area: usize) -> Vec<f64> {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    area_open(&neg, width, height, area)
        .into_iter()
        .map(|v| -v)
        .collect()
}

/// Removes bright then dark grains smaller than `g.area`. Returns the
/// filtered plane and the residual `I - filtered`.
pub fn extrema_kill(plane: &ChannelPlane, g: &GrainParams) -> Result<(ChannelPlane, Field)> {
    g.validate()?;
    let (w, h) = plane.dims();
    let opened = area_open(plane.values(), w, h, g.area);
    let filtered = area_close(&opened, w, h, g.area);
    let residual: Vec<f64> = plane
        .values()
        .iter()
        .zip(&filtered)
        .map(|(i, f)| i - f)
        .collect();
    // filtered values are copies of input values, so the plane stays in range
    Ok((ChannelPlane::new(w, h, filtered)?, Field::from_vec(w, h, residual)?))
}

/// `enhanced + residual`, clamped to `[ρ, 1]`.
pub fn detail_addback(enhanced: &ChannelPlane, residual: &Field) -> Result<ChannelPlane> {
    if enhanced.dims() != residual.dims() {
        return Err(Error::DimensionMismatch {
            expected: enhanced.dims(),
            actual: residual.dims(),
        });
    }
    let data = enhanced
        .values()
        .iter()
        .zip(residual.values())
        .map(|(e, r)| (e + r).clamp(RHO, 1.0))
        .collect();
    ChannelPlane::new(enhanced.width(), enhanced.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn speckle() -> ChannelPlane {
        ChannelPlane::from_fn(5, 5, |x, y| if (x, y) == (2, 2) { 0.9 } else { 0.3 }).unwrap()
    }

    #[test]
    fn single_speckle_removed() {
        let g = GrainParams::new(2, true).unwrap();
        let (f, r) = extrema_kill(&speckle(), &g).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.3));
        for (i, &v) in r.values().iter().enumerate() {
            let want = if i == 12 { 0.9 - 0.3 } else { 0.0 };
            assert_eq!(v, want);
        }
        assert!((r.values()[12] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn dark_pit_removed_by_closing() {
        let plane =
            ChannelPlane::from_fn(4, 4, |x, y| if (x, y) == (1, 1) { 0.1 } else { 0.5 }).unwrap();
        let (f, _) = extrema_kill(&plane, &GrainParams::new(2, true).unwrap()).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn large_grain_survives() {
        // 2x2 bright block survives λ=4, not λ=5
        let plane = ChannelPlane::from_fn(6, 6, |x, y| {
            if (2..4).contains(&x) && (2..4).contains(&y) {
                0.8
            } else {
                0.2
            }
        })
        .unwrap();
        let (keep, _) = extrema_kill(&plane, &GrainParams::new(4, true).unwrap()).unwrap();
        assert_eq!(keep, plane);
        let (gone, _) = extrema_kill(&plane, &GrainParams::new(5, true).unwrap()).unwrap();
        assert!(gone.values().iter().all(|&v| v == 0.2));
    }

    #[test]
    fn nested_peaks_flatten_to_the_right_level() {
        // a 1-pixel spike on a 3-pixel plateau: λ=2 keeps the plateau
        let mut v = vec![0.2; 7];
        v[2] = 0.5;
        v[3] = 0.9;
        v[4] = 0.5;
        assert_eq!(area_open(&v, 7, 1, 2), vec![0.2, 0.2, 0.5, 0.5, 0.5, 0.2, 0.2]);
        assert_eq!(area_open(&v, 7, 1, 4), vec![0.2; 7]);
    }

    #[test]
    fn trivial_inputs_pass_through() {
        let c = ChannelPlane::constant(4, 3, 0.4).unwrap();
        let (f, r) = extrema_kill(&c, &GrainParams::default()).unwrap();
        assert_eq!(f, c);
        assert!(r.values().iter().all(|&v| v == 0.0));

        let (f, r) = extrema_kill(&speckle(), &GrainParams::new(1, true).unwrap()).unwrap();
        assert_eq!(f, speckle());
        assert!(r.values().iter().all(|&v| v == 0.0));
        assert!(GrainParams::new(0, true).is_err());
    }

    #[test]
    fn addback_clamps() {
        let e = ChannelPlane::constant(1, 1, 0.99).unwrap();
        let r = Field::filled(1, 1, 0.6);
        assert_eq!(detail_addback(&e, &r).unwrap().values(), &[1.0]);
        let zero = Field::filled(1, 1, 0.0);
        assert_eq!(detail_addback(&e, &zero).unwrap(), e);
        assert!(detail_addback(&e, &Field::filled(2, 1, 0.0)).is_err());
    }

    fn plane_strategy() -> impl Strategy<Value = ChannelPlane> {
        (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
            prop::collection::vec(1u8..=255, w * h).prop_map(move |raw| {
                crate::image::normalize_from_8bit(w, h, &raw).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn idempotent_and_ordered(plane in plane_strategy(), area in 1usize..12) {
            let g = GrainParams::new(area, true).unwrap();
            let (w, h) = plane.dims();
            let opened = area_open(plane.values(), w, h, area);
            let closed = area_close(plane.values(), w, h, area);
            for ((o, i), c) in opened.iter().zip(plane.values()).zip(&closed) {
                prop_assert!(o <= i && i <= c);
            }
            prop_assert_eq!(area_open(&opened, w, h, area), opened.clone());
            let (f, _) = extrema_kill(&plane, &g).unwrap();
            let (ff, rr) = extrema_kill(&f, &g).unwrap();
            prop_assert_eq!(ff, f);
            prop_assert!(rr.values().iter().all(|&v| v == 0.0));
        }
    }
}
