//! Image files: binary PPM/PGM always, PNG behind the `png` feature.
//!
//! Grayscale inputs load as three identical channels. Only 8-bit data is
//! accepted.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ColorImage;

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a PPM (P6), PGM (P5) or, with the `png` feature, PNG file. The
/// format is detected from the leading bytes.
pub fn read_image(path: impl AsRef<Path>) -> Result<ColorImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_image(&bytes)
}

/// Writes `image` as PNG if the extension is `png`, otherwise as binary PPM.
pub fn write_image(path: impl AsRef<Path>, image: &ColorImage) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let bytes = match ext.as_deref() {
        Some("png") => encode_png(image)?,
        Some("ppm") | Some("pnm") | None => encode_ppm(image),
        Some(other) => return Err(Error::UnsupportedFormat(format!(".{other}"))),
    };
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn decode_image(bytes: &[u8]) -> Result<ColorImage> {
    if bytes.starts_with(b"P6") || bytes.starts_with(b"P5") {
        decode_pnm(bytes)
    } else if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else {
        let head: String = bytes
            .iter()
            .take(4)
            .map(|b| format!("{b:02x}"))
            .collect();
        Err(Error::UnsupportedFormat(format!("leading bytes {head}")))
    }
}

/// Binary PPM: `P6\n<w> <h>\n255\n` followed by RGB bytes.
pub fn encode_ppm(image: &ColorImage) -> Vec<u8> {
    let (w, h) = image.dims();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(image.to_rgb8());
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("missing or invalid {what} in header")))
    }
}

pub fn decode_pnm(bytes: &[u8]) -> Result<ColorImage> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(Error::UnsupportedFormat("not a binary PPM or PGM".into())),
    };
    let mut hdr = Header { bytes, pos: 2 };
    let w = hdr.number("width")? as usize;
    let h = hdr.number("height")? as usize;
    let maxval = hdr.number("maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedDepth(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(hdr.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("missing separator after maxval".into()));
    }
    let raster = &bytes[hdr.pos + 1..];
    let expected = w * h * channels;
    if raster.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: raster.len(),
        });
    }
    let raster = &raster[..expected];
    if channels == 3 {
        ColorImage::from_rgb8(w, h, raster)
    } else {
        let rgb: Vec<u8> = raster.iter().flat_map(|&g| [g, g, g]).collect();
        ColorImage::from_rgb8(w, h, &rgb)
    }
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> Result<ColorImage> {
    use image::ColorType;
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))?;
    match img.color() {
        ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8 => {}
        _ => return Err(Error::UnsupportedDepth(65535)),
    }
    let rgb = img.to_rgb8();
    ColorImage::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
}

#[cfg(not(feature = "png"))]
fn decode_png(_: &[u8]) -> Result<ColorImage> {
    Err(Error::UnsupportedFormat("PNG support not compiled in".into()))
}

#[cfg(feature = "png")]
fn encode_png(img: &ColorImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    let (w, h) = img.dims();
    image::write_buffer_with_format(
        &mut out,
        &img.to_rgb8(),
        w as u32,
        h as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|e| Error::Format(e.to_string()))?;
    Ok(out.into_inner())
}

#[cfg(not(feature = "png"))]
fn encode_png(_: &ColorImage) -> Result<Vec<u8>> {
    Err(Error::UnsupportedFormat("PNG support not compiled in".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_p6() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend(1..=12u8);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.to_rgb8(), (1..=12u8).collect::<Vec<_>>());
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6 # made by hand\n1 # w\n1\n255\n".to_vec();
        bytes.extend([10, 20, 30]);
        assert_eq!(decode_image(&bytes).unwrap().to_rgb8(), vec![10, 20, 30]);
    }

    #[test]
    fn gray_loads_as_three_channels() {
        let mut bytes = b"P5\n3 1\n255\n".to_vec();
        bytes.extend([5, 128, 255]);
        let img = decode_image(&bytes).unwrap();
        assert!(img.is_gray());
        assert_eq!(img.to_rgb8(), vec![5, 5, 5, 128, 128, 128, 255, 255, 255]);
    }

    #[test]
    fn sixteen_bit_rejected() {
        let mut bytes = b"P6\n1 1\n65535\n".to_vec();
        bytes.extend([0; 6]);
        assert!(matches!(decode_image(&bytes), Err(Error::UnsupportedDepth(65535))));
    }

    #[test]
    fn truncated_raster_rejected() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend([0; 11]);
        assert!(matches!(
            decode_image(&bytes),
            Err(Error::Truncated { expected: 12, found: 11 })
        ));
    }

    #[test]
    fn unknown_magic_rejected() {
        assert!(matches!(decode_image(b"GIF89a"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(decode_image(b"P3\n1 1\n255\n0 0 0"), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn ppm_encoding_is_byte_exact() {
        let img = ColorImage::from_rgb8(1, 2, &[1, 2, 3, 250, 251, 252]).unwrap();
        assert_eq!(encode_ppm(&img), b"P6\n1 2\n255\n\x01\x02\x03\xfa\xfb\xfc".to_vec());
    }
}
