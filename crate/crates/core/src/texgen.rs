//! Procedural texture families.
//!
//! Training scenes draw from three families (flat color, two-color gradient,
//! two-color checker). `Stripes` and `Speckle` are reserved for held-out
//! evaluation domains and are never produced by [`sample_texture`].

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::lattice_unit;

/// Unitless reflectance, each channel in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Rgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl From<[f64; 3]> for Rgb {
    fn from(a: [f64; 3]) -> Self {
        Rgb::new(a[0], a[1], a[2])
    }
}

impl From<Rgb> for [f64; 3] {
    fn from(c: Rgb) -> Self {
        [c.r, c.g, c.b]
    }
}

impl Rgb {
    pub const BLACK: Rgb = Rgb::new(0.0, 0.0, 0.0);
    pub const WHITE: Rgb = Rgb::new(1.0, 1.0, 1.0);

    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Rgb { r, g, b }
    }

    pub const fn gray(v: f64) -> Self {
        Rgb::new(v, v, v)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Rgb::new(rng.random(), rng.random(), rng.random())
    }

    pub fn is_valid(self) -> bool {
        [self.r, self.g, self.b]
            .iter()
            .all(|c| c.is_finite() && (0.0..=1.0).contains(c))
    }

    pub fn lerp(self, other: Rgb, t: f64) -> Rgb {
        Rgb::new(
            self.r + (other.r - self.r) * t,
            self.g + (other.g - self.g) * t,
            self.b + (other.b - self.b) * t,
        )
    }

    pub fn scale(self, s: f64) -> Rgb {
        Rgb::new(self.r * s, self.g * s, self.b * s)
    }

    pub fn clamped(self) -> Rgb {
        Rgb::new(
            self.r.clamp(0.0, 1.0),
            self.g.clamp(0.0, 1.0),
            self.b.clamp(0.0, 1.0),
        )
    }

    /// Quantize to 8-bit channels.
    pub fn to_bytes(self) -> [u8; 3] {
        let q = |c: f64| (c.clamp(0.0, 1.0) * 255.0).round() as u8;
        [q(self.r), q(self.g), q(self.b)]
    }
}

impl std::ops::Add for Rgb {
    type Output = Rgb;
    fn add(self, o: Rgb) -> Rgb {
        Rgb::new(self.r + o.r, self.g + o.g, self.b + o.b)
    }
}

/// Family tag without parameters, used for audits and histograms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureFamily {
    Flat,
    Gradient,
    Checker,
    Stripes,
    Speckle,
}

impl TextureFamily {
    pub const TRAINING: [TextureFamily; 3] =
        [TextureFamily::Flat, TextureFamily::Gradient, TextureFamily::Checker];
    pub const EVAL_ONLY: [TextureFamily; 2] = [TextureFamily::Stripes, TextureFamily::Speckle];

    pub fn is_eval_only(self) -> bool {
        Self::EVAL_ONLY.contains(&self)
    }
}

pub const MIN_CHECKER_CELLS: u32 = 2;
pub const MAX_CHECKER_CELLS: u32 = 16;

/// Speckle lattice resolution, cells per UV unit.
const SPECKLE_CELLS: f64 = 24.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextureSpec {
    Flat { color: Rgb },
    Gradient { c0: Rgb, c1: Rgb, angle: f64 },
    Checker { c0: Rgb, c1: Rgb, cells: u32 },
    Stripes { c0: Rgb, c1: Rgb, period: f64 },
    Speckle { base: Rgb, amplitude: f64, density: f64, seed: u64 },
}

impl TextureSpec {
    pub fn family(&self) -> TextureFamily {
        match self {
            TextureSpec::Flat { .. } => TextureFamily::Flat,
            TextureSpec::Gradient { .. } => TextureFamily::Gradient,
            TextureSpec::Checker { .. } => TextureFamily::Checker,
            TextureSpec::Stripes { .. } => TextureFamily::Stripes,
            TextureSpec::Speckle { .. } => TextureFamily::Speckle,
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            TextureSpec::Flat { color } => color.is_valid(),
            TextureSpec::Gradient { c0, c1, angle } => {
                c0.is_valid() && c1.is_valid() && (0.0..TAU).contains(&angle)
            }
            TextureSpec::Checker { c0, c1, cells } => {
                c0.is_valid()
                    && c1.is_valid()
                    && (MIN_CHECKER_CELLS..=MAX_CHECKER_CELLS).contains(&cells)
            }
            TextureSpec::Stripes { c0, c1, period } => {
                c0.is_valid() && c1.is_valid() && period.is_finite() && period > 0.0
            }
            TextureSpec::Speckle {
                base,
                amplitude,
                density,
                ..
            } => {
                base.is_valid() && (0.0..=1.0).contains(&amplitude) && (0.0..=1.0).contains(&density)
            }
        }
    }
}

/// Draw a training texture: flat, gradient or checker with equal probability,
/// all colors uniform per channel.
pub fn sample_texture<R: Rng + ?Sized>(rng: &mut R) -> TextureSpec {
    match rng.random_range(0..3u32) {
        0 => TextureSpec::Flat {
            color: Rgb::random(rng),
        },
        1 => TextureSpec::Gradient {
            c0: Rgb::random(rng),
            c1: Rgb::random(rng),
            angle: rng.random::<f64>() * TAU,
        },
        _ => TextureSpec::Checker {
            c0: Rgb::random(rng),
            c1: Rgb::random(rng),
            cells: rng.random_range(MIN_CHECKER_CELLS..=MAX_CHECKER_CELLS),
        },
    }
}

/// Draw a held-out evaluation texture (stripes or speckle).
pub fn sample_eval_texture<R: Rng + ?Sized>(rng: &mut R) -> TextureSpec {
    if rng.random::<bool>() {
        TextureSpec::Stripes {
            c0: Rgb::random(rng),
            c1: Rgb::random(rng),
            period: rng.random_range(0.08..0.3),
        }
    } else {
        TextureSpec::Speckle {
            base: Rgb::random(rng),
            amplitude: rng.random_range(0.1..0.4),
            density: rng.random_range(0.3..0.9),
            seed: rng.random(),
        }
    }
}

#[inline]
fn wrap_unit(t: f64) -> f64 {
    if (0.0..=1.0).contains(&t) {
        t
    } else {
        t - t.floor()
    }
}

/// Evaluate a texture at a UV coordinate. Coordinates outside [0, 1] tile.
pub fn eval_texture(spec: &TextureSpec, u: f64, v: f64) -> Rgb {
    let (u, v) = (wrap_unit(u), wrap_unit(v));
    match *spec {
        TextureSpec::Flat { color } => color,
        TextureSpec::Gradient { c0, c1, angle } => {
            let (s, c) = angle.sin_cos();
            // Projection range over the four corners of the unit square.
            let lo = 0f64.min(c).min(s).min(c + s);
            let hi = 0f64.max(c).max(s).max(c + s);
            let t = ((u * c + v * s - lo) / (hi - lo)).clamp(0.0, 1.0);
            c0.lerp(c1, t)
        }
        TextureSpec::Checker { c0, c1, cells } => {
            let n = cells as f64;
            let parity = ((u * n).floor() as i64 + (v * n).floor() as i64).rem_euclid(2);
            if parity == 0 {
                c0
            } else {
                c1
            }
        }
        TextureSpec::Stripes { c0, c1, period } => {
            if ((u / period).floor() as i64).rem_euclid(2) == 0 {
                c0
            } else {
                c1
            }
        }
        TextureSpec::Speckle {
            base,
            amplitude,
            density,
            seed,
        } => {
            let cx = (u * SPECKLE_CELLS).floor() as i64;
            let cy = (v * SPECKLE_CELLS).floor() as i64;
            if lattice_unit(seed, cx, cy, 0) < density {
                let delta = amplitude * (2.0 * lattice_unit(seed, cx, cy, 1) - 1.0);
                Rgb::new(base.r + delta, base.g + delta, base.b + delta).clamped()
            } else {
                base
            }
        }
    }
}
