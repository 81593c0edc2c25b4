use super::OpError;
use crate::buffer::ImageBuffer;

/// Power-law mapping `out = in^g`: `g < 1` brightens, `g > 1` darkens.
pub fn gamma_correct(img: &ImageBuffer, g: f64) -> Result<ImageBuffer, OpError> {
    if !g.is_finite() || g <= 0.0 {
        return Err(OpError::InvalidParam(format!("gamma must be > 0, got {g}")));
    }
    Ok(img.map(|v| f64::from(v).powf(g) as f32))
}
