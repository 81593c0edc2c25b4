//! Shared helpers for integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use perturbench::ImageBuffer;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn bench() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_bench"))
}

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Value noise summed over octaves with halving amplitude, which gives the
/// roughly 1/f spectrum of natural photographs. Output is in [0, 1].
struct Fractal {
    lattices: Vec<(usize, Vec<f64>)>,
}

impl Fractal {
    fn new(seed: u64, octaves: usize) -> Self {
        let mut r = rng(seed);
        let lattices = (0..octaves)
            .map(|o| {
                let cells = 4usize << o;
                let n = (cells + 1) * (cells + 1);
                (cells, (0..n).map(|_| unit(&mut r)).collect())
            })
            .collect();
        Self { lattices }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        let mut total = 0.0;
        let mut weight = 0.0;
        let mut amp = 1.0;
        for (cells, lattice) in &self.lattices {
            let (x, y) = (u * *cells as f64, v * *cells as f64);
            let (x0, y0) = ((x.floor() as usize).min(cells - 1), (y.floor() as usize).min(cells - 1));
            let (fx, fy) = (x - x0 as f64, y - y0 as f64);
            let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
            let idx = |i: usize, j: usize| lattice[j * (cells + 1) + i];
            let top = idx(x0, y0) * (1.0 - sx) + idx(x0 + 1, y0) * sx;
            let bottom = idx(x0, y0 + 1) * (1.0 - sx) + idx(x0 + 1, y0 + 1) * sx;
            total += amp * (top * (1.0 - sy) + bottom * sy);
            weight += amp;
            amp *= 0.5;
        }
        total / weight
    }
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn render(w: usize, h: usize, f: impl Fn(f64, f64) -> [f64; 3]) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, |x, y, c| f((x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64)[c] as f32).unwrap()
}

/// Procedural stand-ins for natural photographs: sky, landscape, portrait,
/// wood grain, building facade, and foliage.
pub fn natural_images() -> Vec<(&'static str, ImageBuffer)> {
    let (w, h) = (128, 96);
    let clouds = Fractal::new(1, 6);
    let ridge = Fractal::new(2, 5);
    let grass = Fractal::new(3, 6);
    let skin = Fractal::new(4, 6);
    let grain = Fractal::new(5, 4);
    let leaves = Fractal::new(6, 7);

    vec![
        ("sky", render(w, h, |u, v| {
            let c = clouds.at(u, v);
            lerp([0.25, 0.45, 0.85], [0.97, 0.97, 0.98], ((c - 0.35) * 2.5).clamp(0.0, 1.0))
        })),
        ("landscape", render(w, h, |u, v| {
            let horizon = 0.45 + 0.2 * (ridge.at(u, 0.3) - 0.5);
            if v < horizon {
                lerp([0.55, 0.7, 0.95], [0.85, 0.9, 1.0], v / horizon)
            } else {
                let g = grass.at(u, v);
                lerp([0.15, 0.35, 0.1], [0.45, 0.6, 0.2], g)
            }
        })),
        ("portrait", render(w, h, |u, v| {
            let d = ((u - 0.5) / 0.22).powi(2) + ((v - 0.5) / 0.38).powi(2);
            let eye = ((u - 0.42).powi(2) + (v - 0.42).powi(2)).min((u - 0.58).powi(2) + (v - 0.42).powi(2));
            if eye < 0.0012 {
                [0.1, 0.08, 0.07]
            } else if d < 1.0 {
                let s = skin.at(u, v);
                lerp([0.72, 0.52, 0.42], [0.9, 0.72, 0.6], s * (1.0 - 0.3 * d))
            } else {
                lerp([0.2, 0.22, 0.3], [0.4, 0.42, 0.5], clouds.at(u, v))
            }
        })),
        ("wood", render(w, h, |u, v| {
            let r = ((u - 0.3).powi(2) + (v - 1.4).powi(2)).sqrt();
            let ring = (0.5 + 0.5 * (r * 60.0 + 6.0 * grain.at(u, v)).sin()).powf(2.0);
            lerp([0.45, 0.28, 0.12], [0.75, 0.55, 0.3], ring)
        })),
        ("facade", render(w, h, |u, v| {
            let (cx, cy) = ((u * 8.0).fract(), (v * 6.0).fract());
            let window = cx > 0.25 && cx < 0.75 && cy > 0.2 && cy < 0.7;
            let base = if window { [0.2, 0.25, 0.35] } else { [0.7, 0.62, 0.55] };
            let shade = 0.75 + 0.25 * u + 0.1 * (grass.at(u, v) - 0.5);
            [base[0] * shade, base[1] * shade, base[2] * shade]
        })),
        ("foliage", render(w, h, |u, v| {
            let l = leaves.at(u, v);
            let light = (0.5 + 3.0 * (l - 0.5)).clamp(0.0, 1.0);
            lerp([0.05, 0.18, 0.04], [0.55, 0.8, 0.3], light)
        })),
    ]
}

/// Config text over the bundled mock corpus with the given operation tables
/// appended. `output` and `cache` become absolute paths.
pub fn mock_config(output: &std::path::Path, cache: &std::path::Path, operations: &str) -> String {
    let corpus = fixtures().join("mock_corpus");
    format!(
        r#"seed = 42
output_dir = "{}"
cache_dir = "{}"

[corpus]
manifest = "{}"
root = "{}"
n_per_video = 4

[[detectors]]
name = "mock"
command = "{{bench}} mock-detector --batch {{batch_file}}"
timeout_secs = 60

[[operations]]
label = "raw"
category = "raw"
pipeline = "identity"
{operations}"#,
        output.display(),
        cache.display(),
        corpus.join("manifest.csv").display(),
        corpus.display(),
    )
}

pub fn load_config(text: &str) -> perturbench::config::ExperimentConfig {
    perturbench::config::ExperimentConfig::parse(text, &fixtures())
        .expect("test config parses")
        .with_bench_executable(&bench())
}
