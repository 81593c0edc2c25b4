//! Spatial smoothing filters. All borders use reflect-101 extension.

use super::kernel::{check_kernel_size, make_gaussian_kernel, reflect101, Kernel1D};
use super::OpError;
use crate::buffer::{clamp_unit, ImageBuffer};

const C: usize = ImageBuffer::CHANNELS;

/// Horizontal pass then vertical pass, per channel. Accumulation is in f64
/// so that a constant input survives both passes bit-for-bit.
pub fn convolve_separable(img: &ImageBuffer, kernel: &Kernel1D) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let taps = kernel.taps();
    let r = kernel.radius() as isize;
    let src = img.samples();

    let mut horiz = vec![0f32; src.len()];
    for y in 0..h {
        let row = &src[y * w * C..(y + 1) * w * C];
        for x in 0..w {
            for c in 0..C {
                let mut acc = 0f64;
                for (k, &t) in taps.iter().enumerate() {
                    let xs = reflect101(x as isize + k as isize - r, w);
                    acc += t * f64::from(row[xs * C + c]);
                }
                horiz[(y * w + x) * C + c] = clamp_unit(acc as f32);
            }
        }
    }

    let mut out = vec![0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..C {
                let mut acc = 0f64;
                for (k, &t) in taps.iter().enumerate() {
                    let ys = reflect101(y as isize + k as isize - r, h);
                    acc += t * f64::from(horiz[(ys * w + x) * C + c]);
                }
                out[(y * w + x) * C + c] = clamp_unit(acc as f32);
            }
        }
    }
    ImageBuffer::from_samples(w, h, out).expect("dimensions unchanged")
}

pub fn gaussian_blur(img: &ImageBuffer, ks: usize) -> Result<ImageBuffer, OpError> {
    let kernel = make_gaussian_kernel(ks)?;
    Ok(convolve_separable(img, &kernel))
}

pub fn mean_blur(img: &ImageBuffer, ks: usize) -> Result<ImageBuffer, OpError> {
    let kernel = Kernel1D::box_filter(ks)?;
    Ok(convolve_separable(img, &kernel))
}

pub fn median_blur(img: &ImageBuffer, ks: usize) -> Result<ImageBuffer, OpError> {
    check_kernel_size(ks)?;
    let (w, h) = (img.width(), img.height());
    let r = (ks / 2) as isize;
    let mid = ks * ks / 2;
    let mut window = Vec::with_capacity(ks * ks);
    let mut out = vec![0f32; img.samples().len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..C {
                window.clear();
                for dy in -r..=r {
                    let ys = reflect101(y as isize + dy, h);
                    for dx in -r..=r {
                        let xs = reflect101(x as isize + dx, w);
                        window.push(img.get(xs, ys, c));
                    }
                }
                let (_, m, _) = window.select_nth_unstable_by(mid, f32::total_cmp);
                out[(y * w + x) * C + c] = *m;
            }
        }
    }
    Ok(ImageBuffer::from_samples(w, h, out).expect("dimensions unchanged"))
}
