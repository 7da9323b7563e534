//! Synthetic inputs: illusion charts, a deterministic texture and color casts.
//!
//! Gray levels are snapped to the 8-bit grid so generated images survive a
//! PPM round trip unchanged.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::{ChannelPlane, ColorImage, RHO};

fn snap(v: f64) -> f64 {
    ((255.0 * v).round() / 255.0).clamp(RHO, 1.0)
}

fn check_level(name: &'static str, v: f64) -> Result<()> {
    if !(RHO..=1.0).contains(&v) {
        return Err(Error::param(name, format!("{v} is outside [1/255, 1]")));
    }
    Ok(())
}

/// Lowest and highest band levels of [`synth_mach_bands`].
pub const MACH_RANGE: (f64, f64) = (0.2, 0.8);

/// Horizontal staircase of `steps` constant vertical bands whose levels rise
/// linearly from left to right. Band `k` covers columns
/// `⌈kW/steps⌉ .. ⌈(k+1)W/steps⌉`.
pub fn synth_mach_bands(width: usize, height: usize, steps: usize) -> Result<ColorImage> {
    if steps == 0 || steps > width {
        return Err(Error::param(
            "steps",
            format!("must be in 1..={width} for width {width}"),
        ));
    }
    let (lo, hi) = MACH_RANGE;
    let levels: Vec<f64> = (0..steps)
        .map(|k| {
            if steps == 1 {
                0.5
            } else {
                snap(lo + (hi - lo) * k as f64 / (steps - 1) as f64)
            }
        })
        .collect();
    let plane = ChannelPlane::from_fn(width, height, |x, _| levels[x * steps / width])?;
    Ok(ColorImage::gray(plane))
}

/// Column ranges of the bands produced by [`synth_mach_bands`].
pub fn mach_band_edges(width: usize, steps: usize) -> Vec<std::ops::Range<usize>> {
    (0..steps)
        .map(|k| (k * width).div_ceil(steps)..((k + 1) * width).div_ceil(steps))
        .collect()
}

/// Placement of one square patch in [`synth_simultaneous_contrast`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRect {
    pub x: usize,
    pub y: usize,
    pub side: usize,
}

impl PatchRect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x..self.x + self.side).contains(&x) && (self.y..self.y + self.side).contains(&y)
    }
}

/// The two patch rectangles (dark half first) for a `W × H` chart.
pub fn simcon_patches(width: usize, height: usize) -> Result<[PatchRect; 2]> {
    let side = width / 8;
    let half = width / 2;
    if side == 0 || side > height || side > half {
        return Err(Error::Dimension {
            width,
            height,
            reason: "chart needs width >= 8 and a patch of side W/8 must fit in each half",
        });
    }
    let y = (height - side) / 2;
    let left = (half - side) / 2;
    let right = half + (width - half - side) / 2;
    Ok([
        PatchRect { x: left, y, side },
        PatchRect { x: right, y, side },
    ])
}

/// Dark left half and light right half, each with a centered square patch of
/// the same gray. The patch side is `⌊W/8⌋`.
pub fn synth_simultaneous_contrast(
    width: usize,
    height: usize,
    patch_gray: f64,
    bg_dark: f64,
    bg_light: f64,
) -> Result<ColorImage> {
    check_level("patch gray", patch_gray)?;
    check_level("dark background", bg_dark)?;
    check_level("light background", bg_light)?;
    if bg_dark >= bg_light {
        return Err(Error::param(
            "backgrounds",
            "dark background must be below light background",
        ));
    }
    let patches = simcon_patches(width, height)?;
    let (p, d, l) = (snap(patch_gray), snap(bg_dark), snap(bg_light));
    let plane = ChannelPlane::from_fn(width, height, |x, y| {
        if patches.iter().any(|r| r.contains(x, y)) {
            p
        } else if x < width / 2 {
            d
        } else {
            l
        }
    })?;
    Ok(ColorImage::gray(plane))
}

/// Deterministic gray texture: a few oriented sinusoids around mid gray,
/// snapped to 8 bits.
pub fn texture_plane(width: usize, height: usize) -> Result<ChannelPlane> {
    texture_levels(width, height, 0.5, 1.0)
}

/// [`texture_plane`] around `mean` with amplitudes scaled by `scale`. At
/// scale 1 the swing is ±0.42.
pub fn texture_levels(width: usize, height: usize, mean: f64, scale: f64) -> Result<ChannelPlane> {
    check_level("texture mean", mean)?;
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::param("texture scale", "must be finite and nonnegative"));
    }
    let waves = [
        (0.16, 3.0, 1.0, 0.0),
        (0.12, -1.0, 5.0, 1.3),
        (0.08, 11.0, 7.0, 2.1),
        (0.06, -17.0, 13.0, 0.4),
    ];
    ChannelPlane::from_fn(width, height, |x, y| {
        let u = x as f64 / width as f64;
        let v = y as f64 / height as f64;
        let s: f64 = waves
            .iter()
            .map(|&(amp, fx, fy, ph)| amp * (2.0 * PI * (fx * u + fy * v) + ph).sin())
            .sum();
        snap(mean + scale * s)
    })
}

pub fn synth_texture(width: usize, height: usize) -> Result<ColorImage> {
    Ok(ColorImage::gray(texture_plane(width, height)?))
}

/// Dim texture that a gain of 3 on one channel lifts to near full scale
/// with little clipping.
pub fn synth_cast_base(width: usize, height: usize) -> Result<ColorImage> {
    Ok(ColorImage::gray(texture_levels(width, height, 0.2, 0.35)?))
}

/// Multiplies one channel (0 = R, 1 = G, 2 = B) by `gain` and clamps to
/// `[ρ, 1]`.
pub fn synth_color_cast(base: &ColorImage, channel: usize, gain: f64) -> Result<ColorImage> {
    if channel > 2 {
        return Err(Error::param("channel", format!("{channel} is not 0, 1 or 2")));
    }
    if !(gain.is_finite() && gain > 0.0) {
        return Err(Error::param("gain", "must be finite and positive"));
    }
    let mut planes = base.clone().into_channels();
    let (w, h) = base.dims();
    planes[channel] = ChannelPlane::clamped(
        w,
        h,
        planes[channel].values().iter().map(|v| v * gain).collect(),
    )?;
    let [r, g, b] = planes;
    ColorImage::new(r, g, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::channel_stats;

    #[test]
    fn two_step_staircase() {
        let img = synth_mach_bands(10, 3, 2).unwrap();
        let p = img.channel(0);
        for y in 0..3 {
            for x in 0..10 {
                let want = if x < 5 { MACH_RANGE.0 } else { MACH_RANGE.1 };
                assert!((p.get(x, y) - want).abs() < 0.5 / 255.0);
            }
        }
        assert!(img.is_gray());
    }

    #[test]
    fn bands_constant_and_increasing() {
        let (w, steps) = (37, 6);
        let img = synth_mach_bands(w, 4, steps).unwrap();
        let p = img.channel(0);
        let bands = mach_band_edges(w, steps);
        assert_eq!(bands.last().unwrap().end, w);
        let mut prev = 0.0;
        for band in bands {
            let v = p.get(band.start, 0);
            assert!(v > prev);
            for x in band {
                for y in 0..4 {
                    assert_eq!(p.get(x, y), v);
                }
            }
            prev = v;
        }
        assert!(synth_mach_bands(4, 4, 5).is_err());
        assert!(synth_mach_bands(4, 4, 0).is_err());
    }

    #[test]
    fn simultaneous_contrast_contract() {
        let (w, h) = (64, 32);
        let img = synth_simultaneous_contrast(w, h, 0.5, 0.2, 0.8).unwrap();
        let p = img.channel(0);
        let [dark, light] = simcon_patches(w, h).unwrap();
        assert_eq!(dark.side, 8);
        let mut count = [0usize; 2];
        for y in 0..h {
            for x in 0..w {
                if dark.contains(x, y) {
                    count[0] += 1;
                    assert_eq!(p.get(x, y), p.get(x - dark.x + light.x, y));
                }
                if light.contains(x, y) {
                    count[1] += 1;
                }
            }
        }
        assert_eq!(count, [64, 64]);
        assert!(p.get(0, 0) < p.get(w - 1, 0));
        assert!(synth_simultaneous_contrast(w, h, 0.5, 0.8, 0.2).is_err());
        assert!(synth_simultaneous_contrast(w, h, 1.5, 0.2, 0.8).is_err());
        assert!(synth_simultaneous_contrast(7, 7, 0.5, 0.2, 0.8).is_err());
    }

    #[test]
    fn color_cast_behaviour() {
        let base = synth_cast_base(32, 32).unwrap();
        assert_eq!(synth_color_cast(&base, 2, 1.0).unwrap(), base);
        assert!(synth_color_cast(&base, 2, 0.0).is_err());
        assert!(synth_color_cast(&base, 3, 2.0).is_err());
        let cast = synth_color_cast(&base, 2, 3.0).unwrap();
        assert!(!cast.is_gray());
        let sr = channel_stats(cast.channel(0)).std_dev;
        let sb = channel_stats(cast.channel(2)).std_dev;
        assert!(sb > sr);
    }

    #[test]
    fn texture_is_deterministic_and_in_range() {
        let a = texture_plane(20, 13).unwrap();
        assert_eq!(a, texture_plane(20, 13).unwrap());
        assert!(channel_stats(&a).std_dev > 0.05);
    }
}
