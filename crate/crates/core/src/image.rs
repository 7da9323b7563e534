//! Channel planes on `[ρ, 1]`, the mirrored-periodic extension, and channel
//! statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible intensity. Zero-valued 8-bit samples are lifted to it.
pub const RHO: f64 = 1.0 / 255.0;

/// A dense row-major grid of reals with no range constraint.
///
/// Used for force fields, residuals and mirror extensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Field {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::Dimension {
                width,
                height,
                reason: "data length does not match width * height",
            });
        }
        Ok(Field {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Largest absolute entry.
    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self - other|`; panics on mismatched dimensions.
    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension {
            width,
            height,
            reason: "width and height must be at least 1",
        });
    }
    Ok(())
}

/// One chromatic channel: `W × H` intensities, each in `[ρ, 1]`.
///
/// Pixels are addressed as `(column, row)` and stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ChannelPlane {
    /// Builds a plane, rejecting values outside `[ρ, 1]` (and NaN).
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let field = Field::from_vec(width, height, data)?;
        Self::try_from(field)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        check_dims(width, height)?;
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Builds a plane after clamping every value into `[ρ, 1]`.
    pub fn clamped(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            if v.is_nan() {
                return Err(Error::NumericalFailure { iteration: 0 });
            }
            *v = v.clamp(RHO, 1.0);
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn to_field(&self) -> Field {
        Field {
            width: self.width,
            height: self.height,
            data: self.data.clone(),
        }
    }

    pub fn into_field(self) -> Field {
        Field {
            width: self.width,
            height: self.height,
            data: self.data,
        }
    }

    /// Pointwise map; the result is validated like [`ChannelPlane::new`].
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn ensure_same_dims(&self, other_dims: (usize, usize)) -> Result<()> {
        if self.dims() != other_dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other_dims,
            });
        }
        Ok(())
    }
}

impl TryFrom<Field> for ChannelPlane {
    type Error = Error;

    fn try_from(field: Field) -> Result<Self> {
        if let Some((index, &value)) = field
            .data
            .iter()
            .enumerate()
            .find(|(_, v)| !(RHO..=1.0).contains(*v))
        {
            return Err(Error::OutOfRange { index, value });
        }
        Ok(ChannelPlane {
            width: field.width,
            height: field.height,
            data: field.data,
        })
    }
}

/// Three channel planes of identical size, in R, G, B order.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    channels: [ChannelPlane; 3],
}

impl ColorImage {
    pub fn new(red: ChannelPlane, green: ChannelPlane, blue: ChannelPlane) -> Result<Self> {
        red.ensure_same_dims(green.dims())?;
        red.ensure_same_dims(blue.dims())?;
        Ok(ColorImage {
            channels: [red, green, blue],
        })
    }

    /// A gray image: the same plane in all three channels.
    pub fn gray(plane: ChannelPlane) -> Self {
        ColorImage {
            channels: [plane.clone(), plane.clone(), plane],
        }
    }

    /// From interleaved 8-bit RGB samples, lifting zeros to `ρ`.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        check_dims(width, height)?;
        if rgb.len() != width * height * 3 {
            return Err(Error::Dimension {
                width,
                height,
                reason: "RGB buffer length does not match width * height * 3",
            });
        }
        let planes: Vec<ChannelPlane> = (0..3)
            .map(|c| {
                let raw: Vec<u8> = rgb.iter().skip(c).step_by(3).copied().collect();
                normalize_from_8bit(width, height, &raw)
            })
            .collect::<Result<_>>()?;
        let [r, g, b]: [ChannelPlane; 3] = planes.try_into().expect("three planes");
        Ok(ColorImage {
            channels: [r, g, b],
        })
    }

    /// Interleaved 8-bit RGB samples.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let planes: Vec<Vec<u8>> = self.channels.iter().map(denormalize_to_8bit).collect();
        planes[0]
            .iter()
            .zip(&planes[1])
            .zip(&planes[2])
            .flat_map(|((&r, &g), &b)| [r, g, b])
            .collect()
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn channel(&self, index: usize) -> &ChannelPlane {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[ChannelPlane; 3] {
        &self.channels
    }

    pub fn into_channels(self) -> [ChannelPlane; 3] {
        self.channels
    }

    /// Whether all three channels are bitwise identical.
    pub fn is_gray(&self) -> bool {
        self.channels[0] == self.channels[1] && self.channels[1] == self.channels[2]
    }
}

/// Mean and population standard deviation of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std_dev: f64,
}

/// Maps 8-bit samples to `[ρ, 1]` via `v ↦ max(v / 255, ρ)`.
pub fn normalize_from_8bit(width: usize, height: usize, raw: &[u8]) -> Result<ChannelPlane> {
    check_dims(width, height)?;
    if raw.len() != width * height {
        return Err(Error::Dimension {
            width,
            height,
            reason: "sample count does not match width * height",
        });
    }
    let data = raw.iter().map(|&v| (f64::from(v) / 255.0).max(RHO)).collect();
    ChannelPlane::new(width, height, data)
}

/// Maps a plane back to 8 bits with `round(255 v)`, halves rounding up.
pub fn denormalize_to_8bit(plane: &ChannelPlane) -> Vec<u8> {
    plane
        .values()
        .iter()
        .map(|&v| (255.0 * v + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Reflects a coordinate of the `2n`-periodic extension back into `0..n`.
#[inline]
pub(crate) fn mirror_index(i: usize, n: usize) -> usize {
    let i = i % (2 * n);
    if i < n {
        i
    } else {
        2 * n - 1 - i
    }
}

/// Specular extension of a `W × H` plane to `2W × 2H`.
///
/// The original occupies the top-left block; tiling the result with period
/// `(2W, 2H)` gives an image that is even about every block boundary, i.e.
/// `g(x, y) = g(-1 - x, y) = g(x, -1 - y)` modulo the period.
pub fn mirror_extend(plane: &ChannelPlane) -> Field {
    let (w, h) = plane.dims();
    let (ew, eh) = (2 * w, 2 * h);
    let mut data = Vec::with_capacity(ew * eh);
    for y in 0..eh {
        let sy = mirror_index(y, h);
        for x in 0..ew {
            data.push(plane.get(mirror_index(x, w), sy));
        }
    }
    Field {
        width: ew,
        height: eh,
        data,
    }
}

pub fn channel_stats(plane: &ChannelPlane) -> ChannelStats {
    let n = plane.len() as f64;
    let mean = plane.values().iter().sum::<f64>() / n;
    let var = plane
        .values()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    ChannelStats {
        mean,
        std_dev: var.sqrt(),
    }
}
