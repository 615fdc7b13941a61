use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// `round(clamp(v, 0, 1) * 255)` with halves rounded up; NaN maps to 0.
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn quantized(img: &Image) -> Vec<u8> {
    img.rgb.iter().map(|&v| quantize(v)).collect()
}

/// Binary PPM (P6, maxval 255), rows top to bottom.
pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(quantized(img));
    out
}

pub fn write_image_ppm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_image_ppm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

/// 8-bit RGB PNG of the same quantized buffer as [`encode_ppm`].
pub fn write_image_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(to_io)?;
    writer.write_image_data(&quantized(img)).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

fn ppm_error(message: impl Into<String>) -> Error {
    Error::ParseError {
        line: 0,
        message: message.into(),
    }
}

/// Parses a P6 file with maxval 255. Values come back as `byte / 255`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ppm_error("truncated PPM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| ppm_error("non-ASCII PPM header"))?);
    }
    if fields[0] != "P6" {
        return Err(ppm_error(format!("expected P6, found {}", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| ppm_error(format!("bad PPM header value '{s}'")));
    let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if maxval != 255 {
        return Err(ppm_error(format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    let payload = bytes.get(pos + 1..).ok_or_else(|| ppm_error("missing PPM payload"))?;
    let expected = 3 * width * height;
    if payload.len() != expected {
        return Err(ppm_error(format!("PPM payload has {} bytes, expected {expected}", payload.len())));
    }
    let rgb = payload.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Image { width, height, rgb })
}
