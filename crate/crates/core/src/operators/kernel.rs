use super::OpError;

/// Odd-length, symmetric, normalized 1-D filter.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1D {
    taps: Vec<f64>,
}

impl Kernel1D {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn box_filter(ks: usize) -> Result<Self, OpError> {
        check_kernel_size(ks)?;
        Ok(Self { taps: vec![1.0 / ks as f64; ks] })
    }
}

pub(crate) fn check_kernel_size(ks: usize) -> Result<(), OpError> {
    if ks == 0 || ks.is_multiple_of(2) {
        return Err(OpError::InvalidParam(format!("ks must be odd and >= 1, got {ks}")));
    }
    Ok(())
}

/// Standard deviation implied by a kernel size, following the common
/// `0.3 * ((ks - 1) / 2 - 1) + 0.8` convention.
pub fn sigma_for_kernel_size(ks: usize) -> f64 {
    0.3 * ((ks as f64 - 1.0) / 2.0 - 1.0) + 0.8
}

pub fn make_gaussian_kernel(ks: usize) -> Result<Kernel1D, OpError> {
    check_kernel_size(ks)?;
    let sigma = sigma_for_kernel_size(ks);
    let center = (ks / 2) as f64;
    let raw: Vec<f64> = (0..ks)
        .map(|i| {
            let d = i as f64 - center;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    let mut taps: Vec<f64> = raw.iter().map(|w| w / sum).collect();
    // mirror so symmetry is exact rather than up to rounding
    for i in 0..ks / 2 {
        taps[ks - 1 - i] = taps[i];
    }
    Ok(Kernel1D { taps })
}

/// Reflect-101 index extension (`gfedcb|abcdefgh|gfedcba`).
#[inline]
pub fn reflect101(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tap() {
        assert_eq!(make_gaussian_kernel(1).unwrap().taps(), &[1.0]);
    }

    #[test]
    fn ks3_matches_density_oracle() {
        // density at x in {-1,0,1} with sigma 0.8, normalized by hand
        let s: f64 = 0.8;
        let side = (-1.0 / (2.0 * s * s)).exp();
        let norm = 1.0 + 2.0 * side;
        let k = make_gaussian_kernel(3).unwrap();
        assert!((sigma_for_kernel_size(3) - 0.8).abs() < 1e-12);
        assert!((k.taps()[0] - side / norm).abs() < 1e-12);
        assert!((k.taps()[1] - 1.0 / norm).abs() < 1e-12);
        assert!((k.taps()[0] - 0.2390).abs() < 5e-5);
        assert!((k.taps()[1] - 0.5220).abs() < 5e-5);
    }

    #[test]
    fn ks5_sigma_and_normalization() {
        assert!((sigma_for_kernel_size(5) - 1.1).abs() < 1e-12);
        let k = make_gaussian_kernel(5).unwrap();
        assert!((k.taps().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(k.taps()[0], k.taps()[4]);
        assert_eq!(k.taps()[1], k.taps()[3]);
    }

    #[test]
    fn rejects_even_and_zero() {
        assert!(make_gaussian_kernel(4).is_err());
        assert!(make_gaussian_kernel(0).is_err());
        assert!(Kernel1D::box_filter(2).is_err());
    }

    #[test]
    fn reflect101_cases() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect101(i, 5)).collect();
        assert_eq!(idx, [3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect101(-4, 1), 0);
        assert_eq!(reflect101(-1, 2), 1);
        assert_eq!(reflect101(2, 2), 0);
        // kernel radius larger than the image still lands in range
        assert_eq!(reflect101(-7, 3), 1);
    }
}
