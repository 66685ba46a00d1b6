//! Deterministic synthetic sequences with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{bracket, lerp, Frame};
use crate::tracker::BoundingBox;

#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    pub frames: Vec<Frame>,
    pub ground_truth: Vec<BoundingBox>,
}

/// Smooth random texture with values in roughly `[0, 255]`.
fn texture(side: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let coarse = side / 3 + 2;
    let grid: Vec<f64> = (0..coarse * coarse)
        .map(|_| rng.random_range(0.0..255.0))
        .collect();
    let mut out = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let gx = x as f64 * (coarse - 1) as f64 / side as f64;
            let gy = y as f64 * (coarse - 1) as f64 / side as f64;
            let (x0, x1, tx) = bracket(gx, coarse);
            let (y0, y1, ty) = bracket(gy, coarse);
            let top = lerp(grid[y0 * coarse + x0], grid[y0 * coarse + x1], tx);
            let bottom = lerp(grid[y1 * coarse + x0], grid[y1 * coarse + x1], tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    out
}

/// Low-contrast background: a few sinusoidal gratings plus seeded noise.
fn background(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.02..0.15),
                rng.random_range(0.02..0.15),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            let s: f64 = waves.iter().map(|(fx, fy, ph)| (fx * x + fy * y + ph).sin()).sum();
            110.0 + 12.0 * s + rng.random_range(-10.0..10.0)
        })
        .collect()
}

/// Draws the texture scaled to `size` with its top-left corner at `origin`.
fn paste(bg: &[f64], width: usize, height: usize, tex: &[f64], side: usize, origin: (f64, f64), size: f64) -> Frame {
    let mut data = bg.to_vec();
    let scale = side as f64 / size;
    for y in 0..height {
        for x in 0..width {
            let u = (x as f64 + 0.5 - origin.0) * scale - 0.5;
            let v = (y as f64 + 0.5 - origin.1) * scale - 0.5;
            if u < -0.5 || v < -0.5 || u > side as f64 - 0.5 || v > side as f64 - 0.5 {
                continue;
            }
            let (x0, x1, tx) = bracket(u, side);
            let (y0, y1, ty) = bracket(v, side);
            let top = lerp(tex[y0 * side + x0], tex[y0 * side + x1], tx);
            let bottom = lerp(tex[y1 * side + x0], tex[y1 * side + x1], tx);
            data[y * width + x] = lerp(top, bottom, ty);
        }
    }
    Frame::gray(width, height, data).expect("sizes agree")
}

/// A `side × side` textured patch moving by `velocity` pixels per frame over a
/// static structured background.
pub fn translating_sequence(
    n_frames: usize,
    side: usize,
    velocity: (f64, f64),
    frame_size: (usize, usize),
    start: (f64, f64),
    seed: u64,
) -> SyntheticSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tex = texture(side, &mut rng);
    let (w, h) = frame_size;
    let bg = background(w, h, &mut rng);
    let mut frames = Vec::with_capacity(n_frames);
    let mut ground_truth = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let origin = (start.0 + velocity.0 * t as f64, start.1 + velocity.1 * t as f64);
        frames.push(paste(&bg, w, h, &tex, side, origin, side as f64));
        ground_truth.push(BoundingBox {
            x: origin.0,
            y: origin.1,
            w: side as f64,
            h: side as f64,
        });
    }
    SyntheticSequence {
        frames,
        ground_truth,
    }
}

/// A textured patch centered at `center` whose side grows by `rate` per frame.
pub fn zooming_sequence(
    n_frames: usize,
    side: usize,
    rate: f64,
    frame_size: (usize, usize),
    center: (f64, f64),
    seed: u64,
) -> SyntheticSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tex = texture(side, &mut rng);
    let (w, h) = frame_size;
    let bg = background(w, h, &mut rng);
    let mut frames = Vec::with_capacity(n_frames);
    let mut ground_truth = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let size = side as f64 * rate.powi(t as i32);
        let origin = (center.0 - size / 2.0, center.1 - size / 2.0);
        frames.push(paste(&bg, w, h, &tex, side, origin, size));
        ground_truth.push(BoundingBox {
            x: origin.0,
            y: origin.1,
            w: size,
            h: size,
        });
    }
    SyntheticSequence {
        frames,
        ground_truth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn translating_sequence_is_deterministic_and_moves() {
        let a = translating_sequence(3, 30, (2.0, 0.0), (120, 80), (20.0, 25.0), 7);
        let b = translating_sequence(3, 30, (2.0, 0.0), (120, 80), (20.0, 25.0), 7);
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.ground_truth[2].x, 24.0);
        // the patch content moves with the box
        assert_eq!(a.frames[0].at(25, 30, 0), a.frames[1].at(27, 30, 0));
    }

    #[test]
    fn zooming_sequence_grows() {
        let s = zooming_sequence(3, 30, 1.02, (100, 100), (50.0, 50.0), 1);
        assert!((s.ground_truth[2].w - 30.0 * 1.0404).abs() < 1e-9);
        assert_eq!(s.ground_truth[0].center(), (50.0, 50.0));
    }
}
