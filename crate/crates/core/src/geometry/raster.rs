use super::point::Point2;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Multi-channel image with samples in `[0, 1]`, row-major, channels interleaved.
/// Pixel `(x, y)` has its center at integer coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> RasterImage<T> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("zero extent".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(Error::InvalidImage("samples must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
        .expect("constant image is valid")
    }

    /// Build from a per-pixel function; values are clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c).max(T::zero()).min(T::one()));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Bilinear sample with clamp-to-edge padding.
    #[inline]
    pub fn sample(&self, p: Point2<T>, c: usize) -> T {
        bilinear(self.width, self.height, p, |x, y| self.get(x, y, c))
    }

    /// Bilinear rescale by `factor` (0.5 halves each side).
    pub fn rescale(&self, factor: f64) -> Self {
        let (w, h) = scaled_extent(self.width, self.height, factor);
        let sx = self.width as f64 / w as f64;
        let sy = self.height as f64 / h as f64;
        Self::from_fn(w, h, self.channels, |x, y, c| {
            // Align pixel areas, not centers.
            let p = Point2::new(
                T::of((x as f64 + 0.5) * sx - 0.5),
                T::of((y as f64 + 0.5) * sy - 0.5),
            );
            self.sample(p, c)
        })
    }

    /// Rotate the pixel grid a quarter turn: `(x, y) -> (H-1-y, x)`.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Self::from_fn(h, w, self.channels, |xn, yn, c| self.get(yn, h - 1 - xn, c))
    }

    /// Channel average, used where a scalar intensity is needed.
    pub fn intensity(&self, p: Point2<T>) -> T {
        let mut s = T::zero();
        for c in 0..self.channels {
            s = s + self.sample(p, c);
        }
        s / T::of(self.channels as f64)
    }

    pub fn cast<S: Real>(&self) -> RasterImage<S> {
        RasterImage {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| S::of(v.f64())).collect(),
        }
    }
}

pub(crate) fn scaled_extent(w: usize, h: usize, factor: f64) -> (usize, usize) {
    (
        ((w as f64 * factor).round() as usize).max(1),
        ((h as f64 * factor).round() as usize).max(1),
    )
}

/// Bilinear interpolation over a `w x h` grid with clamp-to-edge reads.
#[inline]
pub fn bilinear<T: Real>(w: usize, h: usize, p: Point2<T>, at: impl Fn(usize, usize) -> T) -> T {
    let max_x = T::of((w - 1) as f64);
    let max_y = T::of((h - 1) as f64);
    let x = p.x.max(T::zero()).min(max_x);
    let y = p.y.max(T::zero()).min(max_y);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let xi = x0.to_usize().unwrap_or(0).min(w - 1);
    let yi = y0.to_usize().unwrap_or(0).min(h - 1);
    let xj = (xi + 1).min(w - 1);
    let yj = (yi + 1).min(h - 1);
    let top = at(xi, yi) * (T::one() - fx) + at(xj, yi) * fx;
    let bottom = at(xi, yj) * (T::one() - fx) + at(xj, yj) * fx;
    top * (T::one() - fy) + bottom * fy
}

/// Inside/outside bit per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "mask {width}x{height} with {} bits",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![false; width * height]).expect("non-zero extent")
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Nearest-neighbour rescale by `factor`.
    pub fn rescale(&self, factor: f64) -> Self {
        let (w, h) = scaled_extent(self.width, self.height, factor);
        let sx = self.width as f64 / w as f64;
        let sy = self.height as f64 / h as f64;
        Self::from_fn(w, h, |x, y| {
            let xs = (((x as f64 + 0.5) * sx).floor() as usize).min(self.width - 1);
            let ys = (((y as f64 + 0.5) * sy).floor() as usize).min(self.height - 1);
            self.get(xs, ys)
        })
    }

    pub fn rotate90(&self) -> Self {
        let h = self.height;
        Self::from_fn(self.height, self.width, |xn, yn| self.get(yn, h - 1 - xn))
    }

    pub fn same_extent(&self, other: &BinaryMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ExtentMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }
}
