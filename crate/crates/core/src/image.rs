//! 8-bit RGB images, object-ID buffers and their binary PNM encodings.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major, 3 bytes per pixel.
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Image {
        Image {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Image {
        let mut img = Image::new(width, height);
        for px in img.pixels.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Binary PPM (P6, maxval 255).
    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
        let (magic, w, h, body) = parse_pnm_header(bytes)?;
        if magic != *b"P6" {
            return Err(Error::Data("not a binary PPM (P6)".into()));
        }
        if body.len() != w * h * 3 {
            return Err(Error::Data(format!(
                "PPM body has {} bytes, expected {}",
                body.len(),
                w * h * 3
            )));
        }
        Ok(Image {
            width: w,
            height: h,
            pixels: body.to_vec(),
        })
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode_ppm())
    }

    pub fn read_ppm(path: &Path) -> Result<Image> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Image::decode_ppm(&bytes)
    }

    /// Copy `tile` into this image with its top-left corner at (x0, y0).
    pub fn blit(&mut self, tile: &Image, x0: usize, y0: usize) {
        for y in 0..tile.height.min(self.height.saturating_sub(y0)) {
            let w = tile.width.min(self.width.saturating_sub(x0));
            let src = &tile.pixels[3 * y * tile.width..3 * (y * tile.width + w)];
            let d = 3 * ((y0 + y) * self.width + x0);
            self.pixels[d..d + 3 * w].copy_from_slice(src);
        }
    }
}

/// Per-pixel object index rendered alongside color.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdBuffer {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<u8>,
}

impl IdBuffer {
    pub const SKY: u8 = 0;
    pub const ENVIRONMENT: u8 = 1;

    /// ID of the object at position `index` in the scene's object list.
    pub fn object_id(index: usize) -> u8 {
        u8::try_from(index + 2).expect("object index fits in u8")
    }

    pub fn count(&self, id: u8) -> usize {
        self.ids.iter().filter(|&&v| v == id).count()
    }

    /// Mean pixel-center coordinate of the pixels carrying `id`.
    pub fn centroid(&self, id: u8) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (i, _) in self.ids.iter().enumerate().filter(|(_, &v)| v == id) {
            sx += (i % self.width) as f64 + 0.5;
            sy += (i / self.width) as f64 + 0.5;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Binary PGM (P5, maxval 255).
    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.ids);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode_pgm())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

/// Parse "Px\n<w> <h>\n<maxval>\n" with optional comments. Returns the body.
fn parse_pnm_header(bytes: &[u8]) -> Result<([u8; 2], usize, usize, &[u8])> {
    let bad = |m: &str| Error::Data(format!("bad PNM header: {m}"));
    if bytes.len() < 2 {
        return Err(bad("too short"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("expected integer"))?;
    }
    if fields[2] != 255 {
        return Err(bad("maxval must be 255"));
    }
    // exactly one whitespace byte separates the header from the body
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing separator"));
    }
    Ok((magic, fields[0], fields[1], &bytes[pos + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_roundtrip_is_bit_exact() {
        let mut img = Image::new(5, 3);
        for (i, b) in img.pixels.iter_mut().enumerate() {
            *b = (i * 37 % 256) as u8;
        }
        let bytes = img.encode_ppm();
        assert!(bytes.starts_with(b"P6\n5 3\n255\n"));
        assert_eq!(Image::decode_ppm(&bytes).unwrap(), img);
    }

    #[test]
    fn truncated_ppm_is_rejected() {
        let bytes = Image::new(4, 4).encode_ppm();
        assert!(Image::decode_ppm(&bytes[..bytes.len() - 1]).is_err());
        assert!(Image::decode_ppm(&bytes[..5]).is_err());
    }

    #[test]
    fn pgm_header() {
        let ids = IdBuffer {
            width: 2,
            height: 2,
            ids: vec![0, 1, 2, 2],
        };
        assert_eq!(ids.encode_pgm(), b"P5\n2 2\n255\n\x00\x01\x02\x02".to_vec());
        assert_eq!(ids.count(2), 2);
        assert_eq!(ids.centroid(2), Some((1.0, 1.5)));
    }
}
