use crate::geometry::Vec2;
use crate::scalar::Real;

use super::FlowField;

/// Pointwise kernel value `(1/L)(1 + L((s/L)² - s/L + 1/6)/(2β))`.
pub fn sobolev_kernel_value(s: f64, length: f64, beta: f64) -> f64 {
    let x = s / length;
    (1.0 + length * (x * x - x + 1.0 / 6.0) / (2.0 * beta)) / length
}

/// Kernel values at `s_j = jL/K`, `j = 0..K`.
pub fn sobolev_kernel(k: usize, length: f64, beta: f64) -> Vec<f64> {
    (0..k)
        .map(|j| sobolev_kernel_value(j as f64 * length / k as f64, length, beta))
        .collect()
}

/// Quadrature weights `K_β(s_j)·L/K`, rescaled to unit sum.
pub fn sobolev_weights(k: usize, length: f64, beta: f64) -> Vec<f64> {
    let (a, b, c) = weight_coefficients(k, length, beta);
    (0..k)
        .map(|m| {
            let m = m as f64;
            a + b * m + c * m * m
        })
        .collect()
}

/// Weights are the quadratic `a + b·m + c·m²` in the index offset `m`.
fn weight_coefficients(k: usize, length: f64, beta: f64) -> (f64, f64, f64) {
    let kf = k as f64;
    let g = length / (2.0 * beta);
    // Σ_m q(m/K) = 1/(6K), so the raw weights sum to 1 + L/(12βK²).
    let mass = 1.0 + g / (6.0 * kf * kf);
    let a = (1.0 + g / 6.0) / kf / mass;
    let b = -g / (kf * kf) / mass;
    let c = g / (kf * kf * kf) / mass;
    (a, b, c)
}

/// Periodic convolution of each component with the normalized kernel.
///
/// Runs in `O(K)` using running moments of the input; the kernel weights
/// are a quadratic in the index offset.
pub fn regularize_flow<T: Real>(flow: &FlowField<T>, length: f64, beta: f64) -> FlowField<T> {
    let k = flow.len();
    if k == 0 {
        return flow.clone();
    }
    let (a, b, c) = weight_coefficients(k, length, beta);
    let kf = k as f64;
    let xs: Vec<f64> = flow.vectors().iter().map(|v| v.x.f64()).collect();
    let ys: Vec<f64> = flow.vectors().iter().map(|v| v.y.f64()).collect();
    let ox = convolve_quadratic(&xs, a, b, c, kf);
    let oy = convolve_quadratic(&ys, a, b, c, kf);
    FlowField::new(
        ox.into_iter()
            .zip(oy)
            .map(|(x, y)| Vec2::new(T::of(x), T::of(y)))
            .collect(),
    )
    .expect("finite input stays finite")
}

/// `out_j = Σ_i v_i w((j - i) mod K)` with `w(m) = a + b·m + c·m²`.
fn convolve_quadratic(v: &[f64], a: f64, b: f64, c: f64, kf: f64) -> Vec<f64> {
    let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
    for (i, &x) in v.iter().enumerate() {
        let i = i as f64;
        t0 += x;
        t1 += i * x;
        t2 += i * i * x;
    }
    // Offset d applied to a moment block: Σ v_i w(d - i).
    let apply = |d: f64, s0: f64, s1: f64, s2: f64| {
        a * s0 + b * (d * s0 - s1) + c * (d * d * s0 - 2.0 * d * s1 + s2)
    };
    let (mut p0, mut p1, mut p2) = (0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(v.len());
    for (j, &x) in v.iter().enumerate() {
        let jf = j as f64;
        p0 += x;
        p1 += jf * x;
        p2 += jf * jf * x;
        let head = apply(jf, p0, p1, p2);
        let tail = apply(jf + kf, t0 - p0, t1 - p1, t2 - p2);
        out.push(head + tail);
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Direct `O(K²)` periodic convolution.
    fn brute_force_convolution(v: &[Vec2<f64>], w: &[f64]) -> Vec<Vec2<f64>> {
        let k = v.len();
        (0..k)
            .map(|j| {
                let mut s = Vec2::zero();
                for (i, &vi) in v.iter().enumerate() {
                    s = s + vi * w[(j + k - i) % k];
                }
                s
            })
            .collect()
    }

    fn random_field(k: usize, seed: u64) -> FlowField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FlowField::new(
            (0..k)
                .map(|_| Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn pointwise_values() {
        assert!((sobolev_kernel_value(0.0, 1.0, 0.01) - 9.333_333_333_333_334).abs() < 1e-9);
        assert!((sobolev_kernel_value(0.5, 1.0, 0.01) + 3.166_666_666_666_667).abs() < 1e-9);
        let v = sobolev_kernel(4, 1.0, 0.01);
        assert!((v[0] - 28.0 / 3.0).abs() < 1e-12);
        assert!((v[2] + 19.0 / 6.0).abs() < 1e-12);
        assert!((v[1] - v[3]).abs() < 1e-12);
    }

    #[test]
    fn continuous_mass_is_one() {
        for (l, beta) in [(1.0, 0.01), (37.5, 0.2), (250.0, 0.01)] {
            let n = 200_000;
            let h = l / n as f64;
            let integral: f64 = (0..n).map(|i| sobolev_kernel_value((i as f64 + 0.5) * h, l, beta) * h).sum();
            assert!((integral - 1.0).abs() < 1e-6, "{l} {beta}: {integral}");
        }
    }

    #[test]
    fn weights_sum_to_one_and_match_scaled_values() {
        for k in [2, 3, 16, 64, 100, 256, 1000] {
            for (l, beta) in [(1.0, 0.01), (180.0, 0.01), (3.0, 0.5)] {
                let w = sobolev_weights(k, l, beta);
                let sum: f64 = w.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12, "k={k}: {sum}");
                let raw: Vec<f64> = sobolev_kernel(k, l, beta).iter().map(|v| v * l / k as f64).collect();
                let mass: f64 = raw.iter().sum();
                for (a, b) in w.iter().zip(&raw) {
                    assert!((a - b / mass).abs() < 1e-12 * a.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn matches_brute_force() {
        for k in [16, 64, 256] {
            let f = random_field(k, k as u64);
            let fast = regularize_flow(&f, 1.0, 0.01);
            let slow = brute_force_convolution(f.vectors(), &sobolev_weights(k, 1.0, 0.01));
            for (a, b) in fast.vectors().iter().zip(&slow) {
                assert!((*a - *b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_field_is_fixed() {
        let c = Vec2::new(1.25, -0.5);
        let f = FlowField::new(vec![c; 40]).unwrap();
        for v in regularize_flow(&f, 1.0, 0.01).vectors() {
            assert!((*v - c).norm() < 1e-12);
        }
    }

    #[test]
    fn spike_spreads_as_reversed_weights() {
        let k = 32;
        let mut v = vec![Vec2::zero(); k];
        v[0] = Vec2::new(1.0, 2.0);
        let out = regularize_flow(&FlowField::new(v).unwrap(), 1.0, 0.01);
        let w = sobolev_weights(k, 1.0, 0.01);
        for j in 0..k {
            let want = Vec2::new(1.0, 2.0) * w[j % k];
            assert!((out.vectors()[j] - want).norm() < 1e-12);
            // The kernel is symmetric, so w(j) = w(-j mod K).
            assert!((w[j] - w[(k - j) % k]).abs() < 1e-12);
        }
    }

    #[test]
    fn f32_fields_are_regularized_in_double() {
        let f = random_field(64, 9);
        let a = regularize_flow(&f, 1.0, 0.01);
        let b = regularize_flow(&f.cast::<f32>(), 1.0, 0.01);
        for (x, y) in a.vectors().iter().zip(b.vectors()) {
            assert!((*x - y.cast()).norm() < 1e-4);
        }
    }

    proptest! {
        #[test]
        fn mean_is_preserved(k in 4usize..300, seed in any::<u64>(), beta in 0.001f64..1.0) {
            let f = random_field(k, seed);
            let out = regularize_flow(&f, 1.0, beta);
            prop_assert!((out.mean() - f.mean()).norm() < 1e-9);
        }

        /// A smooth field plus one inverted vector stays within
        /// `max|w|·|outlier|` of the regularized smooth field.
        #[test]
        fn outliers_are_bounded(k in 16usize..200, idx in 0usize..1000, freq in 0usize..4, amp in 0.1f64..10.0) {
            let idx = idx % k;
            let smooth: Vec<Vec2<f64>> = (0..k)
                .map(|j| {
                    let t = std::f64::consts::TAU * (freq * j) as f64 / k as f64;
                    Vec2::new(1.0 + t.cos(), 0.5 * t.sin())
                })
                .collect();
            let mut spiky = smooth.clone();
            let outlier = Vec2::new(-amp * 3.0, amp);
            spiky[idx] = spiky[idx] * -1.0 + outlier;
            let delta = (spiky[idx] - smooth[idx]).norm();
            let w = sobolev_weights(k, 1.0, 0.01);
            let wmax = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let a = regularize_flow(&FlowField::new(smooth).unwrap(), 1.0, 0.01);
            let b = regularize_flow(&FlowField::new(spiky).unwrap(), 1.0, 0.01);
            for (x, y) in a.vectors().iter().zip(b.vectors()) {
                prop_assert!((*x - *y).norm() <= wmax * delta * (1.0 + 1e-9));
            }
        }
    }
}
