use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::renderer::{quantize, Image, MaskLabel};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

impl IoError {
    fn format(path: &Path, message: impl Into<String>) -> Self {
        IoError::Format { path: path.display().to_string(), message: message.into() }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.display().to_string(), source }
    }
}

/// Writes through a temporary sibling and renames it into place, creating
/// parent directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    write_atomic(path, bytes).map_err(|e| IoError::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|e| IoError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| IoError::format(path, e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| IoError::format(path, e.to_string()))
}

/// 8-bit PNG; images with one channel are written as grayscale, three as RGB.
pub fn encode_png(image: &Image) -> Vec<u8> {
    let color = match image.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => panic!("cannot write a {c}-channel PNG"),
    };
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut out), image.width as u32, image.height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("valid PNG header");
        let data: Vec<u8> = image.data.iter().map(|v| quantize(*v)).collect();
        writer.write_image_data(&data).expect("PNG data matches header");
    }
    out
}

pub fn write_png(path: &Path, image: &Image) -> Result<(), IoError> {
    write_file(path, &encode_png(image))
}

/// Reads an 8-bit grayscale, RGB or RGBA PNG (alpha is dropped).
pub fn read_png(path: &Path) -> Result<Image, IoError> {
    let bytes = read_file(path)?;
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| IoError::format(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| IoError::format(path, "image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(|e| IoError::format(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(IoError::format(path, "only 8-bit PNGs are supported"));
    }
    let (stored, keep) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        other => return Err(IoError::format(path, format!("unsupported color type {other:?}"))),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut image = Image::new(w, h, keep);
    let line = info.line_size;
    for y in 0..h {
        for x in 0..w {
            for c in 0..keep {
                image.pixel_mut(x, y)[c] = buf[y * line + x * stored + c] as f64 / 255.0;
            }
        }
    }
    Ok(image)
}

pub fn write_mask(path: &Path, width: usize, height: usize, mask: &[MaskLabel]) -> Result<(), IoError> {
    let image = Image { width, height, channels: 1, data: mask.iter().map(|m| m.level() as f64 / 255.0).collect() };
    write_png(path, &image)
}

pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<MaskLabel>), IoError> {
    let image = read_png(path)?;
    if image.channels != 1 {
        return Err(IoError::format(path, "mask must be grayscale"));
    }
    let labels = image
        .data
        .iter()
        .map(|v| {
            let level = (v * 255.0).round() as u8;
            MaskLabel::from_level(level).ok_or_else(|| IoError::format(path, format!("invalid mask level {level}")))
        })
        .collect::<Result<_, _>>()?;
    Ok((image.width, image.height, labels))
}

/// Portable float map, little-endian, rows stored bottom to top.
pub fn encode_pfm(image: &Image) -> Vec<u8> {
    let tag = match image.channels {
        1 => "Pf",
        3 => "PF",
        c => panic!("cannot write a {c}-channel PFM"),
    };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", image.width, image.height).into_bytes();
    for y in (0..image.height).rev() {
        for x in 0..image.width {
            for v in image.pixel(x, y) {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn write_pfm(path: &Path, image: &Image) -> Result<(), IoError> {
    write_file(path, &encode_pfm(image))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Image, String> {
    let mut fields = Vec::new();
    let mut pos = 0;
    // three whitespace-separated header tokens after the tag line
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match fields[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        t => return Err(format!("unknown tag {t}")),
    };
    let width: usize = fields[1].parse().map_err(|_| "bad width")?;
    let height: usize = fields[2].parse().map_err(|_| "bad height")?;
    let scale: f64 = fields[3].parse().map_err(|_| "bad scale")?;
    let little = scale < 0.0;
    let data = bytes.get(pos..).unwrap_or_default();
    let count = width * height * channels;
    if data.len() != count * 4 {
        return Err(format!("expected {} data bytes, found {}", count * 4, data.len()));
    }
    let mut image = Image::new(width, height, channels);
    let mut values = data.chunks_exact(4).map(|c| {
        let b: [u8; 4] = c.try_into().expect("4 bytes");
        (if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
    });
    for y in (0..height).rev() {
        for x in 0..width {
            for c in 0..channels {
                image.pixel_mut(x, y)[c] = values.next().expect("sized above");
            }
        }
    }
    Ok(image)
}

pub fn read_pfm(path: &Path) -> Result<Image, IoError> {
    decode_pfm(&read_file(path)?).map_err(|m| IoError::format(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize, c: usize) -> Image {
        let mut img = Image::new(w, h, c);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i % 256) as f64 / 255.0;
        }
        img
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for c in [1, 3] {
            let img = gradient(7, 5, c);
            let path = dir.path().join(format!("a{c}.png"));
            write_png(&path, &img).unwrap();
            assert_eq!(read_png(&path).unwrap(), img);
        }
    }

    #[test]
    fn pfm_round_trip_is_f32_exact() {
        let mut img = gradient(4, 3, 3);
        img.data[5] = 1234.5678;
        img.data[0] = -0.1;
        let back = decode_pfm(&encode_pfm(&img)).unwrap();
        for (a, b) in img.data.iter().zip(&back.data) {
            assert_eq!(*b, *a as f32 as f64);
        }
        let mut depth = gradient(3, 2, 1);
        for (i, v) in depth.data.iter_mut().enumerate() {
            *v = i as f64 / 8.0;
        }
        assert_eq!(decode_pfm(&encode_pfm(&depth)).unwrap(), depth);
        assert!(decode_pfm(b"PF\n2 2\n-1.0\n1234").is_err());
    }

    #[test]
    fn mask_palette() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let labels = vec![MaskLabel::OutsideBound, MaskLabel::Background, MaskLabel::Object, MaskLabel::Object];
        write_mask(&path, 2, 2, &labels).unwrap();
        assert_eq!(read_mask(&path).unwrap(), (2, 2, labels));
        write_png(&path, &Image { width: 1, height: 1, channels: 1, data: vec![0.2] }).unwrap();
        assert!(read_mask(&path).is_err());
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.bin");
        write_atomic(&path, b"abc").unwrap();
        write_atomic(&path, b"defg").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"defg");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
