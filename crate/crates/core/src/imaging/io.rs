//! Image file input and output: PNG (8-bit RGB/RGBA) and binary PPM (P6)
//! readers, PNG writer. Samples map to floats as v/255; writing rounds half
//! up and clips.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use super::ImageRgb;
use crate::error::{Error, Result};

/// Load a PNG or binary PPM file. The format is detected from the leading
/// bytes, not the extension.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(&bytes).map_err(|e| Error::Decode(format!("{}: {e}", path.display())))
    } else if bytes.starts_with(b"P6") {
        decode_ppm(&bytes).map_err(|e| Error::Decode(format!("{}: {e}", path.display())))
    } else {
        Err(Error::Decode(format!(
            "{}: not a PNG or binary PPM file",
            path.display()
        )))
    }
}

/// Write an image as 8-bit RGB PNG.
pub fn save_image(img: &ImageRgb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width() as u32, img.height() as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Decode(format!("png encode: {e}")))?;
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::Decode(format!("png encode: {e}")))?;
    Ok(())
}

/// Round half up after scaling to [0, 255], clipping out-of-range input.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn decode_png(bytes: &[u8]) -> std::result::Result<ImageRgb, String> {
    let decoder = png::Decoder::new(BufReader::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(format!("unsupported bit depth {:?}", info.bit_depth));
    }
    let color = info.color_type;
    if color != png::ColorType::Rgb && color != png::ColorType::Rgba {
        return Err(format!("unsupported color type {color:?}, need RGB or RGBA"));
    }
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let stride = if color == png::ColorType::Rgba { 4 } else { 3 };
    let mut data = Vec::with_capacity(w * h * 3);
    for px in buf[..frame.buffer_size()].chunks_exact(stride) {
        data.push(px[0] as f64 / 255.0);
        data.push(px[1] as f64 / 255.0);
        data.push(px[2] as f64 / 255.0);
    }
    ImageRgb::new(w, h, data).map_err(|e| e.to_string())
}

fn decode_ppm(bytes: &[u8]) -> std::result::Result<ImageRgb, String> {
    let mut pos = 2; // past "P6"
    let width = read_ppm_number(bytes, &mut pos)?;
    let height = read_ppm_number(bytes, &mut pos)?;
    let maxval = read_ppm_number(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}, need 255"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("malformed header".into()),
    }
    let need = width * height * 3;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(format!(
            "truncated payload: need {need} bytes, have {}",
            payload.len()
        ));
    }
    let data = payload[..need].iter().map(|&b| b as f64 / 255.0).collect();
    ImageRgb::new(width, height, data).map_err(|e| e.to_string())
}

fn read_ppm_number(bytes: &[u8], pos: &mut usize) -> std::result::Result<usize, String> {
    // Skip whitespace and '#' comments.
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
        *pos += 1;
    }
    if *pos == start {
        return Err("malformed header".into());
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| "malformed header".into())
}

/// Serialize an image to binary PPM bytes; used by tests and fixtures.
pub fn encode_ppm(img: &ImageRgb) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("suss-imaging-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn ppm_known_bytes_decode_to_known_floats() {
        let mut bytes = b"P6\n3 3\n255\n".to_vec();
        let pixels: Vec<u8> = (0..27).map(|i| (i * 9) as u8).collect();
        bytes.extend_from_slice(&pixels);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.width(), 3);
        assert_eq!(img.height(), 3);
        for (v, e) in img.data().iter().zip(&pixels) {
            assert!((v - *e as f64 / 255.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ppm_with_comments_parses() {
        let mut bytes = b"P6\n# a comment\n2 1\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 20, 30, 40, 50, 60]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.width(), 2);
    }

    #[test]
    fn truncated_ppm_is_an_error() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        let path = temp_path("truncated.ppm");
        File::create(&path).unwrap().write_all(&bytes).unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(matches!(err, Error::Decode(_)), "got {err:?}");
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn png_round_trip_is_bit_identical() {
        let mut img = ImageRgb::constant(5, 4, 0.0);
        let mut v = 0u32;
        for y in 0..4 {
            for x in 0..5 {
                img.set_pixel(
                    y,
                    x,
                    [
                        (v % 256) as f64 / 255.0,
                        ((v * 7) % 256) as f64 / 255.0,
                        ((v * 13) % 256) as f64 / 255.0,
                    ],
                );
                v += 11;
            }
        }
        let path = temp_path("roundtrip.png");
        save_image(&img, &path).unwrap();
        let loaded = load_image(&path).unwrap();
        let path2 = temp_path("roundtrip2.png");
        save_image(&loaded, &path2).unwrap();
        let loaded2 = load_image(&path2).unwrap();
        assert_eq!(loaded.data(), loaded2.data());
        assert_eq!(img.data(), loaded.data());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_image("/nonexistent/nowhere.png").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert_eq!(err.kind(), "io");
    }

    #[test]
    fn garbage_is_decode_error() {
        let path = temp_path("garbage.bin");
        File::create(&path).unwrap().write_all(b"hello").unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(matches!(err, Error::Decode(_)));
    }

    #[test]
    fn quantize_rounds_half_up() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(1.5), 255);
        assert_eq!(quantize(-0.2), 0);
        // 127.5/255 should round up to 128.
        assert_eq!(quantize(0.5), 128);
    }
}
