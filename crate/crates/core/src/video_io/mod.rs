//! On-disk sequence formats.
//!
//! * Packed 1-bit sequences ([`write_packed_binary`] / [`read_packed_binary`]),
//!   a raw readout stream with 8 pixels per byte.
//! * Frame directories of binary PGM (`P5`) images, one file per frame named
//!   `frame_00000.pgm`, `frame_00001.pgm`, ... ([`write_frames`] /
//!   [`read_frames`]). Source corpora in PNG/JPEG/BMP/TIFF are read through
//!   [`read_source_frames`].

mod packed;
mod pgm;

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::{common_dims, Frame};
use crate::sensor::QuantizedSequence;

pub use packed::{
    decode_packed_binary, encode_packed_binary, read_packed_binary, write_packed_binary, PACKED_HEADER_LEN,
    PACKED_MAGIC, PACKED_VERSION,
};
pub use pgm::{decode_pgm, encode_pgm, PgmImage};

/// Sample depth of written frame files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depth {
    Eight,
    Sixteen,
}

impl Depth {
    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(Depth::Eight),
            16 => Ok(Depth::Sixteen),
            other => Err(Error::Domain(format!("frame depth must be 8 or 16, got {other}"))),
        }
    }

    pub fn max_value(self) -> u16 {
        match self {
            Depth::Eight => 255,
            Depth::Sixteen => 65535,
        }
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.pgm")
}

fn write_frames_with_max(dir: &Path, frames: &[Frame], max_value: u16) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        if let Some(v) = f.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("frame {i}: value {v} outside [0, 1]")));
        }
        let img = PgmImage::from_frame(f, max_value);
        let path = dir.join(frame_file_name(i));
        fs::write(&path, encode_pgm(&img)).map_err(|e| Error::io_at(&path, e))?;
    }
    Ok(())
}

/// Writes `frames` as PGM files with `2^depth - 1` levels.
pub fn write_frames(dir: &Path, frames: &[Frame], depth: Depth) -> Result<()> {
    write_frames_with_max(dir, frames, depth.max_value())
}

/// Writes a `b`-bit sequence losslessly by using `N_b` as the PGM maximum value,
/// so each sample stores the photon count `k` directly.
pub fn write_quantized(dir: &Path, seq: &QuantizedSequence) -> Result<()> {
    write_frames_with_max(dir, seq.frames(), seq.bit_level().n_frames() as u16)
}

/// Leading digit run of the file stem, used as the frame index.
fn frame_index(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Files in `dir` with one of `extensions`, ordered by their numeric index
/// (then by name).
pub fn list_frame_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io_at(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| extensions.iter().any(|x| x.eq_ignore_ascii_case(e)))
        })
        .collect();
    files.sort_by(|a, b| (frame_index(a), a.file_name()).cmp(&(frame_index(b), b.file_name())));
    Ok(files)
}

/// Reads every `.pgm` frame in `dir`, normalised to `[0, 1]` by each file's
/// maximum value.
pub fn read_frames(dir: &Path) -> Result<Vec<Frame>> {
    let files = list_frame_files(dir, &["pgm"])?;
    if files.is_empty() {
        return Err(Error::Format(format!("no .pgm frames in {}", dir.display())));
    }
    let frames = files
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| Error::io_at(p, e))?;
            decode_pgm(&bytes)
                .map_err(|e| Error::Format(format!("{}: {e}", p.display())))
                .map(|img| img.to_frame())
        })
        .collect::<Result<Vec<_>>>()?;
    common_dims(&frames).map_err(|e| Error::Format(format!("{}: {e}", dir.display())))?;
    Ok(frames)
}

/// Luma weights applied to colour sources.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

fn luma_frame(img: image::DynamicImage) -> Frame {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.into_rgb16();
        let data = rgb
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (LUMA_WEIGHTS[0] * r as f64 + LUMA_WEIGHTS[1] * g as f64 + LUMA_WEIGHTS[2] * b as f64) / 65535.0
            })
            .collect();
        Frame::from_vec(h, w, data).expect("image dimensions")
    } else {
        let gray = img.into_luma16();
        let data = gray.pixels().map(|p| p.0[0] as f64 / 65535.0).collect();
        Frame::from_vec(h, w, data).expect("image dimensions")
    }
}

/// Reads one source frame of any supported format as grayscale in `[0, 1]`,
/// normalised by the format's white level.
pub fn read_source_frame(path: &Path) -> Result<Frame> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let bytes = fs::read(path).map_err(|e| Error::io_at(path, e))?;
        return decode_pgm(&bytes)
            .map(|img| img.to_frame())
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())));
    }
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(luma_frame(img))
}

pub const SOURCE_EXTENSIONS: &[&str] = &["pgm", "png", "jpg", "jpeg", "bmp", "tif", "tiff"];

/// Ordered frame files of a source video directory.
pub fn list_source_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    list_frame_files(dir, SOURCE_EXTENSIONS)
}

/// Reads a whole source video directory as grayscale frames.
pub fn read_source_frames(dir: &Path) -> Result<Vec<Frame>> {
    let files = list_source_frames(dir)?;
    if files.is_empty() {
        return Err(Error::Format(format!("no image frames in {}", dir.display())));
    }
    let frames = files.iter().map(|p| read_source_frame(p)).collect::<Result<Vec<_>>>()?;
    common_dims(&frames).map_err(|e| Error::Format(format!("{}: {e}", dir.display())))?;
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::BitLevel;

    #[test]
    fn numeric_ordering() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["frame_00010.pgm", "frame_00009.pgm", "frame_00000.pgm", "notes.txt"] {
            fs::write(dir.path().join(name), b"").unwrap();
        }
        let files = list_frame_files(dir.path(), &["pgm"]).unwrap();
        let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
        assert_eq!(names, ["frame_00000.pgm", "frame_00009.pgm", "frame_00010.pgm"]);
        assert!(frame_index(Path::new("frame_00010.pgm")) > frame_index(Path::new("frame_00009.pgm")));
        assert_eq!(frame_index(Path::new("img12.png")), Some(12));
    }

    #[test]
    fn sixteen_bit_round_trip_of_four_bit_levels() {
        let dir = tempfile::tempdir().unwrap();
        let levels: Vec<f64> = (0..16).map(|k| k as f64 / 15.0).collect();
        let f = Frame::from_vec(4, 4, levels.clone()).unwrap();
        write_frames(dir.path(), &[f], Depth::Sixteen).unwrap();
        let back = read_frames(dir.path()).unwrap();
        for (a, b) in back[0].as_slice().iter().zip(&levels) {
            assert!((a - b).abs() <= 1.0 / (2.0 * 65535.0));
        }
    }

    #[test]
    fn eight_bit_is_lossless_for_four_bit_levels() {
        let dir = tempfile::tempdir().unwrap();
        let levels: Vec<f64> = (0..16).map(|k| k as f64 / 15.0).collect();
        let f = Frame::from_vec(1, 16, levels.clone()).unwrap();
        write_frames(dir.path(), &[f], Depth::Eight).unwrap();
        let back = read_frames(dir.path()).unwrap();
        assert_eq!(back[0].as_slice(), levels.as_slice());
    }

    #[test]
    fn quantized_writer_is_exact_for_every_bit_level() {
        for b in BitLevel::SUPPORTED {
            let dir = tempfile::tempdir().unwrap();
            let levels = b.levels();
            let f = Frame::from_vec(1, levels.len(), levels.clone()).unwrap();
            let seq = QuantizedSequence::new(vec![f], b).unwrap();
            write_quantized(dir.path(), &seq).unwrap();
            let back = read_frames(dir.path()).unwrap();
            assert_eq!(back[0].as_slice(), levels.as_slice(), "{b}-bit");
        }
    }

    #[test]
    fn inconsistent_frame_sizes_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), &[Frame::filled(2, 2, 0.0)], Depth::Eight).unwrap();
        let other = PgmImage::from_frame(&Frame::filled(3, 2, 0.0), 255);
        fs::write(dir.path().join(frame_file_name(1)), encode_pgm(&other)).unwrap();
        assert!(matches!(read_frames(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn colour_sources_use_luma_weights() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = image::RgbImage::new(2, 1);
        img.put_pixel(0, 0, image::Rgb([255, 0, 0]));
        img.put_pixel(1, 0, image::Rgb([255, 255, 255]));
        let path = dir.path().join("f_0.png");
        img.save(&path).unwrap();
        let f = read_source_frame(&path).unwrap();
        assert!((f.as_slice()[0] - 0.299).abs() < 1e-12);
        assert!((f.as_slice()[1] - 1.0).abs() < 1e-12);
    }
}
