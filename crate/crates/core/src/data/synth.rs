//! Seeded synthetic saliency data: 1–3 flat-colored shapes over a smooth
//! noisy background, with the exact shape interiors as ground truth.
//!
//! Geometry (shape kinds, positions, sizes) and texture (colors, noise) come
//! from separate random streams, so the masks depend on the geometry seed
//! alone.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Sample;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Triangle { pts: [(f64, f64); 3] },
}

impl Shape {
    /// Pixel `(x, y)` is inside when its center is.
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry } => {
                let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
                dx * dx + dy * dy <= 1.0
            }
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
            Shape::Triangle { pts } => {
                let edge = |(ax, ay): (f64, f64), (bx, by): (f64, f64)| (bx - ax) * (y - ay) - (by - ay) * (x - ax);
                let d = [edge(pts[0], pts[1]), edge(pts[1], pts[2]), edge(pts[2], pts[0])];
                d.iter().all(|&v| v >= 0.0) || d.iter().all(|&v| v <= 0.0)
            }
        }
    }

    /// Every shape spans at least 4% of the image area: ellipse radii
    /// ≥ 0.12·S (π·0.0144 > 0.045), rectangle sides ≥ 0.21·S, triangle base
    /// and height ≥ 0.3·S.
    fn sample(rng: &mut ChaCha8Rng, size: f64) -> Shape {
        match rng.gen_range(0..3) {
            0 => {
                let rx = rng.gen_range(0.12..0.3) * size;
                let ry = rng.gen_range(0.12..0.3) * size;
                Shape::Ellipse {
                    cx: rng.gen_range(rx..size - rx),
                    cy: rng.gen_range(ry..size - ry),
                    rx,
                    ry,
                }
            }
            1 => {
                let w = rng.gen_range(0.21..0.55) * size;
                let h = rng.gen_range(0.21..0.55) * size;
                let x0 = rng.gen_range(0.0..size - w);
                let y0 = rng.gen_range(0.0..size - h);
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + w,
                    y1: y0 + h,
                }
            }
            _ => {
                let base = rng.gen_range(0.3..0.6) * size;
                let height = rng.gen_range(0.3..0.6) * size;
                let x0 = rng.gen_range(0.0..size - base);
                let y0 = rng.gen_range(0.0..size - height);
                let apex = x0 + rng.gen_range(0.0..base);
                if rng.gen_bool(0.5) {
                    Shape::Triangle {
                        pts: [(x0, y0 + height), (x0 + base, y0 + height), (apex, y0)],
                    }
                } else {
                    Shape::Triangle {
                        pts: [(x0, y0), (x0 + base, y0), (apex, y0 + height)],
                    }
                }
            }
        }
    }
}

fn stream(seed: u64, index: usize, which: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index as u64 + which);
    rng
}

/// Distinct colors: every channel of a shape color differs from the
/// background base color by at least 0.35 on average.
fn pick_colors(rng: &mut ChaCha8Rng, shapes: usize) -> ([f64; 3], Vec<[f64; 3]>) {
    let bg: [f64; 3] = [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)];
    let fg = (0..shapes)
        .map(|_| loop {
            let c: [f64; 3] = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let dist: f64 = c.iter().zip(&bg).map(|(a, b)| (a - b).abs()).sum::<f64>() / 3.0;
            if dist >= 0.35 {
                break c;
            }
        })
        .collect();
    (bg, fg)
}

fn generate(index: usize, size: usize, geometry_seed: u64, texture_seed: u64) -> Sample {
    let mut geo = stream(geometry_seed, index, 0);
    let mut tex = stream(texture_seed, index, 1);
    let s = size as f64;
    let count = geo.gen_range(1..=3);
    let shapes: Vec<Shape> = (0..count).map(|_| Shape::sample(&mut geo, s)).collect();
    let (bg, fg) = pick_colors(&mut tex, count);

    // low-frequency background: a few random plane waves per channel
    let waves: Vec<[(f64, f64, f64, f64); 3]> = (0..3)
        .map(|_| {
            let mut w = [(0.0, 0.0, 0.0, 0.0); 3];
            for wave in &mut w {
                *wave = (
                    tex.gen_range(-3.0..3.0) * std::f64::consts::TAU / s,
                    tex.gen_range(-3.0..3.0) * std::f64::consts::TAU / s,
                    tex.gen_range(0.0..std::f64::consts::TAU),
                    tex.gen_range(0.02..0.08),
                );
            }
            w
        })
        .collect();

    let plane = size * size;
    let mut image = vec![0.0; 3 * plane];
    let mut mask = vec![0.0; plane];
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let i = y * size + x;
            // later shapes are drawn on top
            let owner = shapes.iter().rposition(|sh| sh.contains(px, py));
            for c in 0..3 {
                let noise: f64 = waves[c]
                    .iter()
                    .map(|&(kx, ky, ph, amp)| amp * (kx * px + ky * py + ph).sin())
                    .sum();
                let base = match owner {
                    Some(k) => fg[k][c],
                    None => bg[c] + noise,
                };
                let grain = tex.gen_range(-0.02..0.02);
                image[c * plane + i] = (base + grain).clamp(0.0, 1.0);
            }
            if owner.is_some() {
                mask[i] = 1.0;
            }
        }
    }
    Sample {
        image: Tensor::raw(vec![3, size, size], image),
        mask: Tensor::raw(vec![1, size, size], mask),
        id: format!("synth_{index:04}"),
    }
}

/// `n` samples of `3 × size × size`, deterministic in `seed`.
pub fn synth_dataset(n: usize, size: usize, seed: u64) -> Result<Vec<Sample>> {
    synth_dataset_split(n, size, seed, seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// As [`synth_dataset`] with independent geometry and texture seeds.
pub fn synth_dataset_split(n: usize, size: usize, geometry_seed: u64, texture_seed: u64) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::Input("synthetic dataset size must be at least 1".into()));
    }
    if size == 0 || !size.is_multiple_of(16) {
        return Err(Error::Input(format!("synthetic image size {size} must be a positive multiple of 16")));
    }
    Ok((0..n).map(|i| generate(i, size, geometry_seed, texture_seed)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = synth_dataset(4, 32, 9).unwrap();
        let b = synth_dataset(4, 32, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_dataset(4, 32, 10).unwrap());
    }

    #[test]
    fn shapes_and_masks() {
        let set = synth_dataset(8, 64, 1).unwrap();
        assert_eq!(set.len(), 8);
        for s in &set {
            assert_eq!(s.image.shape(), &[3, 64, 64]);
            assert_eq!(s.mask.shape(), &[1, 64, 64]);
            assert!(s.mask.data().iter().all(|&v| v == 0.0 || v == 1.0));
            assert!(s.mask.sum() >= 0.04 * 64.0 * 64.0, "{}", s.mask.sum());
            assert!(s.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn masks_ignore_texture_seed() {
        let a = synth_dataset_split(6, 32, 5, 100).unwrap();
        let b = synth_dataset_split(6, 32, 5, 200).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mask, y.mask);
            assert_ne!(x.image, y.image);
        }
    }

    #[test]
    fn index_independent() {
        let all = synth_dataset(5, 32, 3).unwrap();
        assert_eq!(all[4], generate(4, 32, 3, 3 ^ 0x9e37_79b9_7f4a_7c15));
    }

    #[test]
    fn bad_arguments() {
        assert!(synth_dataset(0, 32, 1).is_err());
        assert!(synth_dataset(1, 30, 1).is_err());
    }
}
