//! Marching squares iso-contours of a signed distance map.

use super::curve::Curve;
use super::point::Point2;
use super::sdm::SignedDistanceMap;
use crate::scalar::Real;

const NONE: u32 = u32::MAX;

/// Closed iso-contours at every integer level in `[lo, hi]`.
///
/// Samples strictly below the level count as inside. Saddle cells are
/// disambiguated by the average of their four corners. Chains that run into
/// the image border are dropped. Every returned curve is orientation-normalized.
pub fn extract_level_lines<T: Real>(
    sdm: &SignedDistanceMap<T>,
    lo: T,
    hi: T,
) -> Vec<(T, Curve<T>)> {
    let mut out = Vec::new();
    if !(lo <= hi) {
        return out;
    }
    let first = lo.ceil().to_i64().unwrap_or(0);
    let last = hi.floor().to_i64().unwrap_or(-1);
    for level in first..=last {
        let lv = T::of(level as f64);
        for c in iso_contours(sdm, lv) {
            out.push((lv, c));
        }
    }
    out
}

/// All closed iso-contours of `sdm` at `level`.
pub fn iso_contours<T: Real>(sdm: &SignedDistanceMap<T>, level: T) -> Vec<Curve<T>> {
    let (w, h) = (sdm.width(), sdm.height());
    if w < 2 || h < 2 {
        return Vec::new();
    }
    let n_nodes = 2 * w * h;
    let hedge = |x: usize, y: usize| y * w + x;
    let vedge = |x: usize, y: usize| w * h + y * w + x;
    let below = |x: usize, y: usize| sdm.get(x, y) < level;

    let mut links = vec![[NONE; 2]; n_nodes];
    let mut link = |a: usize, b: usize| {
        for (from, to) in [(a, b), (b, a)] {
            let slot = &mut links[from];
            if slot[0] == NONE {
                slot[0] = to as u32;
            } else {
                slot[1] = to as u32;
            }
        }
    };

    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let tl = below(x, y);
            let tr = below(x + 1, y);
            let br = below(x + 1, y + 1);
            let bl = below(x, y + 1);
            let top = hedge(x, y);
            let bottom = hedge(x, y + 1);
            let left = vedge(x, y);
            let right = vedge(x + 1, y);
            let mut cut = Vec::with_capacity(4);
            if tl != tr {
                cut.push(top);
            }
            if tr != br {
                cut.push(right);
            }
            if bl != br {
                cut.push(bottom);
            }
            if tl != bl {
                cut.push(left);
            }
            match cut.len() {
                2 => link(cut[0], cut[1]),
                4 => {
                    let avg = (sdm.get(x, y)
                        + sdm.get(x + 1, y)
                        + sdm.get(x + 1, y + 1)
                        + sdm.get(x, y + 1))
                        * T::of(0.25);
                    if (avg < level) == tl {
                        // Center joins tl and br: isolate tr and bl.
                        link(top, right);
                        link(left, bottom);
                    } else {
                        link(top, left);
                        link(right, bottom);
                    }
                }
                _ => {}
            }
        }
    }

    let position = |node: usize| -> Point2<T> {
        let (x0, y0, x1, y1) = if node < w * h {
            let (x, y) = (node % w, node / w);
            (x, y, x + 1, y)
        } else {
            let m = node - w * h;
            let (x, y) = (m % w, m / w);
            (x, y, x, y + 1)
        };
        let a = sdm.get(x0, y0);
        let b = sdm.get(x1, y1);
        let t = if b != a {
            (level - a) / (b - a)
        } else {
            T::of(0.5)
        };
        let p0 = Point2::new(T::of(x0 as f64), T::of(y0 as f64));
        let p1 = Point2::new(T::of(x1 as f64), T::of(y1 as f64));
        p0 + (p1 - p0) * t
    };

    let mut visited = vec![false; n_nodes];
    // Open chains start at degree-1 nodes; walk them away.
    for start in 0..n_nodes {
        if visited[start] || links[start][0] == NONE || links[start][1] != NONE {
            continue;
        }
        walk(&links, &mut visited, start);
    }
    let mut curves = Vec::new();
    for start in 0..n_nodes {
        if visited[start] || links[start][0] == NONE {
            continue;
        }
        let nodes = walk(&links, &mut visited, start);
        if let Ok(c) = Curve::from_points_dedup(nodes.into_iter().map(position)) {
            curves.push(c);
        }
    }
    curves
}

fn walk(links: &[[u32; 2]], visited: &mut [bool], start: usize) -> Vec<usize> {
    let mut nodes = vec![start];
    visited[start] = true;
    let mut cur = start;
    loop {
        let next = links[cur]
            .iter()
            .copied()
            .filter(|&n| n != NONE)
            .map(|n| n as usize)
            .find(|&n| !visited[n]);
        match next {
            Some(n) => {
                visited[n] = true;
                nodes.push(n);
                cur = n;
            }
            None => return nodes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::raster::BinaryMask;
    use crate::geometry::sdm::signed_distance_map;
    use crate::geometry::sdm::tests::disk;

    #[test]
    fn disk_level_minus_five_is_circle_of_radius_fifteen() {
        let sdm = signed_distance_map::<f64>(&disk(64, 64, 32., 32., 20.)).unwrap();
        let lines = extract_level_lines(&sdm, -5.0, -5.0);
        assert_eq!(lines.len(), 1);
        let (lv, c) = &lines[0];
        assert_eq!(*lv, -5.0);
        let rel = c.length() / (std::f64::consts::TAU * 15.0) - 1.0;
        assert!(rel.abs() < 0.05, "relative perimeter error {rel}");
        assert!(c.signed_area() < 0.0);
    }

    #[test]
    fn level_beyond_range_is_empty() {
        let sdm = signed_distance_map::<f64>(&disk(64, 64, 32., 32., 10.)).unwrap();
        assert!(extract_level_lines(&sdm, -14.0, -12.0).is_empty());
        assert!(extract_level_lines(&sdm, 3.0, 1.0).is_empty());
    }

    #[test]
    fn two_disks_give_two_curves() {
        let a = disk(96, 64, 24., 32., 12.);
        let b = disk(96, 64, 70., 32., 12.);
        let m = BinaryMask::from_fn(96, 64, |x, y| a.get(x, y) || b.get(x, y));
        let sdm = signed_distance_map::<f64>(&m).unwrap();
        let lines = extract_level_lines(&sdm, 0.0, 0.0);
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn border_touching_fragments_are_dropped() {
        // Half-plane: every level line runs into the border.
        let m = BinaryMask::from_fn(32, 32, |x, _| x < 16);
        let sdm = signed_distance_map::<f64>(&m).unwrap();
        assert!(extract_level_lines(&sdm, -5.0, 5.0).is_empty());
    }

    #[test]
    fn saddle_uses_cell_average() {
        // Checkerboard 2x2 cell: corners -1, +1, -1, +1; average 0 >= level 0
        // so the below-corners are isolated into two tiny separate pieces.
        let vals = [
            [1.0, 1.0, 1.0, 1.0],
            [1.0, -1.0, 3.0, 1.0],
            [1.0, 3.0, -1.0, 1.0],
            [1.0, 1.0, 1.0, 1.0],
        ];
        let sdm = sdm_from(&vals);
        assert_eq!(iso_contours(&sdm, 0.0).len(), 2);
        let low = [
            [1.0, 1.0, 1.0, 1.0],
            [1.0, -1.0, 0.5, 1.0],
            [1.0, 0.5, -1.0, 1.0],
            [1.0, 1.0, 1.0, 1.0],
        ];
        // Average -0.25 < 0: the two below-corners join into one region.
        assert_eq!(iso_contours(&sdm_from(&low), 0.0).len(), 1);
    }

    fn sdm_from(v: &[[f64; 4]; 4]) -> SignedDistanceMap<f64> {
        SignedDistanceMap::from_values(4, 4, v.iter().flatten().copied().collect()).unwrap()
    }
}
