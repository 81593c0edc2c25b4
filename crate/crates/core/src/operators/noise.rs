use rand_core::RngCore;

use super::OpError;
use crate::buffer::{clamp_unit, ImageBuffer};

/// Standard normal draws from a uniform `u64` source via Box–Muller,
/// emitting both the cosine and sine variates of each pair.
pub struct NormalStream<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> NormalStream<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform(); // (0, 1], keeps ln finite
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Adds i.i.d. `N(mean, var)` noise in the `[0, 1]` domain and clamps.
pub fn add_gaussian_noise<R: RngCore>(img: &ImageBuffer, mean: f64, var: f64, rng: R) -> Result<ImageBuffer, OpError> {
    if !var.is_finite() || var < 0.0 || !mean.is_finite() {
        return Err(OpError::InvalidParam(format!("noise needs finite mean and var >= 0, got mean={mean} var={var}")));
    }
    if var == 0.0 && mean == 0.0 {
        return Ok(img.clone());
    }
    let std = var.sqrt();
    let mut normals = NormalStream::new(rng);
    let data = img
        .samples()
        .iter()
        .map(|&v| clamp_unit((f64::from(v) + mean + std * normals.next_standard()) as f32))
        .collect();
    Ok(ImageBuffer::from_samples(img.width(), img.height(), data).expect("dimensions unchanged"))
}
