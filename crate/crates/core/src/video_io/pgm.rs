//! Binary PGM (`P5`) encoding.
//!
//! Header `P5\n<width> <height>\n<maxval>\n`, then row-major samples: one byte
//! each when `maxval < 256`, otherwise two bytes big-endian.

use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub samples: Vec<u16>,
}

impl PgmImage {
    /// Linear quantisation of `[0, 1]` values to `0..=max_value`.
    pub fn from_frame(frame: &Frame, max_value: u16) -> Self {
        let m = max_value as f64;
        Self {
            width: frame.width(),
            height: frame.height(),
            max_value,
            samples: frame
                .as_slice()
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * m).round() as u16)
                .collect(),
        }
    }

    pub fn to_frame(&self) -> Frame {
        let m = self.max_value as f64;
        Frame::from_vec(
            self.height,
            self.width,
            self.samples.iter().map(|&s| s as f64 / m).collect(),
        )
        .expect("decoder checked dimensions")
    }
}

pub fn encode_pgm(img: &PgmImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.max_value).into_bytes();
    if img.max_value < 256 {
        out.extend(img.samples.iter().map(|&s| s as u8));
    } else {
        for s in &img.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<PgmImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Magic {
            expected: b"P5".to_vec(),
            found: bytes.iter().take(2).copied().collect(),
        });
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and `#` comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("malformed PGM header at byte {start}")))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Format("PGM header not terminated".into()));
    }
    pos += 1;
    let [width, height, max_value] = fields;
    if width == 0 || height == 0 || !(1..=65535).contains(&max_value) {
        return Err(Error::Format(format!("invalid PGM header {width}x{height} max {max_value}")));
    }
    let bytes_per = if max_value < 256 { 1 } else { 2 };
    let needed = width * height * bytes_per;
    let raster = &bytes[pos..];
    if raster.len() < needed {
        return Err(Error::Truncated {
            what: "PGM raster",
            needed,
            found: raster.len(),
        });
    }
    let samples: Vec<u16> = if bytes_per == 1 {
        raster[..needed].iter().map(|&b| b as u16).collect()
    } else {
        raster[..needed]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if let Some(s) = samples.iter().find(|&&s| s as usize > max_value) {
        return Err(Error::Format(format!("sample {s} exceeds maxval {max_value}")));
    }
    Ok(PgmImage {
        width,
        height,
        max_value: max_value as u16,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_layout() {
        let img = PgmImage {
            width: 2,
            height: 1,
            max_value: 65535,
            samples: vec![1, 0x0203],
        };
        let bytes = encode_pgm(&img);
        assert_eq!(bytes, b"P5\n2 1\n65535\n\x00\x01\x02\x03");
        assert_eq!(decode_pgm(&bytes).unwrap(), img);
    }

    #[test]
    fn comments_are_skipped() {
        let bytes = b"P5\n# made by hand\n3 1\n# max\n7\n\x00\x03\x07";
        let img = decode_pgm(bytes).unwrap();
        assert_eq!(img.samples, vec![0, 3, 7]);
        assert_eq!(img.to_frame().as_slice(), &[0.0, 3.0 / 7.0, 1.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(decode_pgm(b"P2\n1 1\n255\n0"), Err(Error::Magic { .. })));
        assert!(matches!(decode_pgm(b"P5\n2 2\n255\n\x00"), Err(Error::Truncated { .. })));
        assert!(matches!(decode_pgm(b"P5\n1 1\n3\n\x09"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P5\nx 1\n3\n\x00"), Err(Error::Format(_))));
    }
}
