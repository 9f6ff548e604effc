use super::curve::Curve;
use super::raster::BinaryMask;
use crate::scalar::Real;

/// Rasterize by the even-odd rule at pixel centers.
///
/// An edge counts as crossing row `y` when `y` lies in the half-open span
/// `[min(y_i, y_j), max(y_i, y_j))`, and a pixel is inside when an odd number
/// of crossings lie strictly to its right. Centers exactly on a left or top
/// edge are therefore inside, those on a right or bottom edge outside.
pub fn rasterize<T: Real>(curve: &Curve<T>, width: usize, height: usize) -> BinaryMask {
    let v: Vec<(f64, f64)> = curve
        .vertices()
        .iter()
        .map(|p| (p.x.f64(), p.y.f64()))
        .collect();
    let k = v.len();
    let mut mask = BinaryMask::empty(width, height);
    let mut xs: Vec<f64> = Vec::new();
    for row in 0..height {
        let y = row as f64;
        xs.clear();
        for i in 0..k {
            let (xi, yi) = v[i];
            let (xj, yj) = v[(i + 1) % k];
            if (yi > y) != (yj > y) {
                xs.push(xi + (y - yi) * (xj - xi) / (yj - yi));
            }
        }
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        // Pixel x is inside iff #{crossings > x} is odd: walk pairs.
        for pair in xs.chunks(2) {
            if pair.len() < 2 {
                break;
            }
            // Inside for pair[0] <= x < pair[1].
            let start = pair[0].ceil().max(0.0);
            let end = pair[1].ceil().min(width as f64);
            let mut x = start;
            while x < end {
                mask.set(x as usize, row, true);
                x += 1.0;
            }
        }
    }
    mask
}
