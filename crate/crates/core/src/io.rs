//! Image, mask and contour files.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::geometry::{BinaryMask, Curve, CurveJson, RasterImage};
use crate::scalar::Real;
use crate::{Error, Result};

fn to_raster<T: Real>(img: DynamicImage) -> Result<RasterImage<T>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb16();
        RasterImage::new(w, h, 3, rgb.into_raw().into_iter().map(|v| T::of(v as f64 / 65535.0)).collect())
    } else {
        let g = img.to_luma16();
        RasterImage::new(w, h, 1, g.into_raw().into_iter().map(|v| T::of(v as f64 / 65535.0)).collect())
    }
}

fn to_dynamic<T: Real>(img: &RasterImage<T>) -> DynamicImage {
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|v| (v.f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let (w, h) = (img.width() as u32, img.height() as u32);
    if img.channels() == 3 {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("sized buffer"))
    } else {
        DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("sized buffer"))
    }
}

/// Reads PNG, PGM or PPM. Gray images give one channel, colour three
/// (alpha dropped); values are scaled to `[0, 1]`.
pub fn read_image<T: Real>(path: &Path) -> Result<RasterImage<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image<T: Real>(bytes: &[u8]) -> Result<RasterImage<T>> {
    to_raster(image::load_from_memory(bytes)?)
}

/// Writes 8 bits per sample; the format follows the extension.
pub fn write_image<T: Real>(path: &Path, img: &RasterImage<T>) -> Result<()> {
    to_dynamic(img).save(path)?;
    Ok(())
}

pub fn encode_png<T: Real>(img: &RasterImage<T>) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    to_dynamic(img).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

fn mask_image(mask: &BinaryMask) -> RasterImage<f32> {
    RasterImage::from_fn(mask.width(), mask.height(), 1, |x, y, _| if mask.get(x, y) { 1.0 } else { 0.0 })
}

/// Any pixel brighter than half intensity (in any channel) is foreground.
pub fn mask_from_image<T: Real>(img: &RasterImage<T>) -> BinaryMask {
    BinaryMask::from_fn(img.width(), img.height(), |x, y| {
        (0..img.channels()).any(|c| img.get(x, y, c).f64() > 0.5)
    })
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    Ok(mask_from_image(&read_image::<f32>(path)?))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    write_image(path, &mask_image(mask))
}

pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>> {
    encode_png(&mask_image(mask))
}

pub fn read_curve<T: Real>(path: &Path) -> Result<Curve<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str::<CurveJson>(&text)?.to_curve()
}

pub fn write_curve<T: Real>(path: &Path, curve: &Curve<T>) -> Result<()> {
    write_json(path, &CurveJson::from(curve))
}

pub fn write_json<S: serde::Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    fn ramp(channels: usize) -> RasterImage<f32> {
        RasterImage::from_fn(13, 7, channels, |x, y, c| ((x * 19 + y * 7 + c * 50) % 256) as f32 / 255.0)
    }

    #[test]
    fn png_and_pnm_round_trip_at_eight_bits() {
        let dir = tempfile::tempdir().unwrap();
        for (channels, name) in [(1, "a.png"), (3, "b.png"), (1, "c.pgm"), (3, "d.ppm")] {
            let img = ramp(channels);
            let path = dir.path().join(name);
            write_image(&path, &img).unwrap();
            let back: RasterImage<f32> = read_image(&path).unwrap();
            assert_eq!(back.channels(), channels, "{name}");
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() < 1e-6, "{name}");
            }
        }
        let bytes = encode_png(&ramp(3)).unwrap();
        assert_eq!(decode_image::<f64>(&bytes).unwrap().width(), 13);
    }

    #[test]
    fn masks_and_curves() {
        let dir = tempfile::tempdir().unwrap();
        let m = BinaryMask::from_fn(9, 6, |x, y| x > y);
        let p = dir.path().join("m.png");
        write_mask(&p, &m).unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);
        let c = Curve::new(vec![
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 5.0),
            Point2::new(6.0, 5.0),
            Point2::new(6.0, 1.0),
        ])
        .unwrap();
        let cp = dir.path().join("c.json");
        write_curve(&cp, &c).unwrap();
        assert_eq!(read_curve::<f64>(&cp).unwrap(), c);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(decode_image::<f32>(b"not an image"), Err(Error::Codec(_))));
        assert!(matches!(read_image::<f32>(Path::new("/nonexistent/x.png")), Err(Error::Io { .. })));
    }
}
