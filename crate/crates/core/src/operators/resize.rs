use super::OpError;
use crate::buffer::{clamp_unit, ImageBuffer};

fn output_size(dim: usize, scale: f64) -> usize {
    (dim as f64 * scale).round() as usize
}

/// Source coordinate and blend weight for a destination index, using
/// half-pixel-centre mapping with edge clamping.
fn source_taps(dst: usize, scale: f64, len: usize) -> (usize, usize, f64) {
    let src = ((dst as f64 + 0.5) / scale - 0.5).clamp(0.0, (len - 1) as f64);
    let i0 = src.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, src - i0 as f64)
}

pub fn resize_bilinear(img: &ImageBuffer, scale: f64) -> Result<ImageBuffer, OpError> {
    if !scale.is_finite() || scale <= 0.0 {
        return Err(OpError::InvalidParam(format!("scale must be > 0, got {scale}")));
    }
    let (w, h) = (img.width(), img.height());
    let (ow, oh) = (output_size(w, scale), output_size(h, scale));
    if ow == 0 || oh == 0 {
        return Err(OpError::InvalidParam(format!("scale {scale} collapses {w}x{h} to {ow}x{oh}")));
    }
    let xs: Vec<_> = (0..ow).map(|x| source_taps(x, scale, w)).collect();
    let ys: Vec<_> = (0..oh).map(|y| source_taps(y, scale, h)).collect();
    let mut out = Vec::with_capacity(ow * oh * ImageBuffer::CHANNELS);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..ImageBuffer::CHANNELS {
                let p = |x, y| f64::from(img.get(x, y, c));
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                out.push(clamp_unit((top * (1.0 - fy) + bottom * fy) as f32));
            }
        }
    }
    Ok(ImageBuffer::from_samples(ow, oh, out).expect("computed dimensions"))
}
