use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use super::Image;
use crate::error::{Error, Result};

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "pgm" | "pnm" => Ok(ImageFormat::Pnm),
        _ => Err(Error::UnsupportedFormat(format!(
            "{} (expected .png or .pgm)",
            path.display()
        ))),
    }
}

/// Reads a PGM (P2/P5) or PNG file as a luminance image in `[0, 1]`.
///
/// Colour inputs are reduced with 0.299/0.587/0.114 weights; alpha is ignored.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = ImageReader::new(std::io::Cursor::new(bytes));
    reader.set_format(format);
    let decoded = reader.decode().map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::dims(format!("{} has zero size", path.display())));
    }
    let data: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(buf) => {
            buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect()
        }
        DynamicImage::ImageRgb8(buf) => buf
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 255.0)
            .collect(),
        DynamicImage::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 255.0)
            .collect(),
        other => other
            .to_rgb32f()
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64))
            .collect(),
    };
    Image::new(h, w, data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

#[inline]
fn luma(r: f64, g: f64, b: f64) -> f64 {
    LUMA_R * r + LUMA_G * g + LUMA_B * b
}

/// Writes an image, clamping to `[0, 1]` first.
///
/// `.png` files are 8-bit grayscale; `.pgm` files are binary P5 with
/// maxval 65535 so blurred data keeps 16 bits of precision.
pub fn save_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    match format_for(path)? {
        ImageFormat::Png => {
            let buf: Vec<u8> = img
                .data()
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect();
            image::save_buffer_with_format(
                path,
                &buf,
                img.width() as u32,
                img.height() as u32,
                image::ExtendedColorType::L8,
                ImageFormat::Png,
            )
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
        }
        _ => {
            let mut out = Vec::with_capacity(32 + 2 * img.data().len());
            write!(out, "P5\n{} {}\n65535\n", img.width(), img.height())
                .expect("writing to a Vec cannot fail");
            for v in img.data() {
                let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
                out.extend_from_slice(&q.to_be_bytes());
            }
            fs::write(path, out).map_err(|e| Error::io(path, e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_pgm_rescaled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        fs::write(&path, "P2\n2 2\n255\n0 255\n255 0\n").unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn single_pixel_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.pgm");
        let mut bytes = b"P5\n1 1\n255\n".to_vec();
        bytes.push(128);
        fs::write(&path, bytes).unwrap();
        let img = load_image(&path).unwrap();
        assert!((img.get(0, 0) - 128.0 / 255.0).abs() < 1e-15);
        assert!((img.get(0, 0) - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn rgb_png_uses_luminance_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        image::save_buffer(&path, &[255, 0, 0], 1, 1, image::ExtendedColorType::Rgb8).unwrap();
        let img = load_image(&path).unwrap();
        assert!((img.get(0, 0) - 0.299).abs() < 1e-12);
    }

    #[test]
    fn pgm_round_trip_keeps_16_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let img = Image::from_fn(3, 5, |r, c| (r * 5 + c) as f64 / 14.0);
        save_image(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.dims(), (3, 5));
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn png_round_trip_is_8_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let img = Image::from_fn(2, 3, |r, c| (r + c) as f64 / 3.0);
        save_image(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn unsupported_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_image(dir.path().join("x.bmp")),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            load_image(dir.path().join("missing.png")),
            Err(Error::Io { .. })
        ));
        let garbage = dir.path().join("bad.png");
        fs::write(&garbage, b"not a png").unwrap();
        assert!(matches!(load_image(&garbage), Err(Error::Image { .. })));
    }
}
