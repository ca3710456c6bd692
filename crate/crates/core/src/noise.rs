use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const MAX_GAUSSIAN_SIGMA: f64 = 0.1;
pub const MAX_SALT_PEPPER: f64 = 0.05;

/// Image noise applied after rendering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Additive Gaussian std on the [0, 1] intensity scale.
    pub gaussian_sigma: f64,
    /// Per-pixel probability of salt or pepper.
    pub salt_pepper_prob: f64,
    /// Multiplicative (speckle) Gaussian std; zero for training scenes.
    #[serde(default)]
    pub speckle_sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> NoiseSpec {
        NoiseSpec::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_GAUSSIAN_SIGMA).contains(&self.gaussian_sigma)
            || !(0.0..=MAX_SALT_PEPPER).contains(&self.salt_pepper_prob)
            || !(0.0..=MAX_GAUSSIAN_SIGMA).contains(&self.speckle_sigma)
        {
            return Err(Error::Config(format!("noise parameters out of range: {self:?}")));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.gaussian_sigma == 0.0 && self.salt_pepper_prob == 0.0 && self.speckle_sigma == 0.0
    }
}

/// Per channel: additive Gaussian, then multiplicative speckle; then per
/// pixel salt (255) or pepper (0) with probability `salt_pepper_prob`.
pub fn add_noise<R: Rng + ?Sized>(img: &Image, spec: &NoiseSpec, rng: &mut R) -> Image {
    let mut out = img.clone();
    if spec.is_identity() {
        return out;
    }
    let sigma = spec.gaussian_sigma * 255.0;
    for px in out.pixels.chunks_exact_mut(3) {
        if sigma > 0.0 || spec.speckle_sigma > 0.0 {
            for c in px.iter_mut() {
                let mut v = *c as f64;
                if sigma > 0.0 {
                    v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
                if spec.speckle_sigma > 0.0 {
                    v *= 1.0 + spec.speckle_sigma * rng.sample::<f64, _>(StandardNormal);
                }
                *c = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        if spec.salt_pepper_prob > 0.0 && rng.random::<f64>() < spec.salt_pepper_prob {
            let v = if rng.random::<bool>() { 255 } else { 0 };
            px.fill(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_noise_is_identity() {
        let mut img = Image::new(16, 16);
        for (i, b) in img.pixels.iter_mut().enumerate() {
            *b = (i % 251) as u8;
        }
        let spec = NoiseSpec {
            seed: 3,
            ..NoiseSpec::none()
        };
        assert_eq!(add_noise(&img, &spec, &mut stream(1)), img);
    }

    #[test]
    fn deterministic_given_stream() {
        let img = Image::filled(32, 32, [100, 120, 140]);
        let spec = NoiseSpec {
            gaussian_sigma: 0.03,
            salt_pepper_prob: 0.01,
            speckle_sigma: 0.02,
            seed: 0,
        };
        assert_eq!(add_noise(&img, &spec, &mut stream(9)), add_noise(&img, &spec, &mut stream(9)));
        assert_ne!(add_noise(&img, &spec, &mut stream(9)), add_noise(&img, &spec, &mut stream(10)));
    }

    #[test]
    fn validation_bounds() {
        let ok = NoiseSpec {
            gaussian_sigma: 0.1,
            salt_pepper_prob: 0.05,
            ..NoiseSpec::none()
        };
        assert!(ok.validate().is_ok());
        assert!(NoiseSpec { gaussian_sigma: 0.2, ..ok }.validate().is_err());
        assert!(NoiseSpec { salt_pepper_prob: 0.06, ..ok }.validate().is_err());
    }
}
