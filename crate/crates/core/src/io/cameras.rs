//! Camera files: one pose per line, 16 whitespace-separated floats
//! `R00 R01 R02 R10 .. R22 tx ty tz fx fy cx cy`. Blank lines and `#`
//! comments are skipped. The frame size is not stored.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector2};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::Vec3;

/// Formats `cameras` with shortest round-trip float representations.
pub fn format_cameras(cameras: &[Camera]) -> String {
    let mut out = String::new();
    for cam in cameras {
        let r = &cam.rotation;
        let values = [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            cam.translation.x,
            cam.translation.y,
            cam.translation.z,
            cam.focal.x,
            cam.focal.y,
            cam.principal_point.x,
            cam.principal_point.y,
        ];
        let line: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(" ")).expect("writing to a String");
    }
    out
}

pub fn write_cameras(cameras: &[Camera], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_cameras(cameras)).map_err(|e| Error::io(path, e))
}

pub fn read_cameras(path: impl AsRef<Path>, resolution: (usize, usize)) -> Result<Vec<Camera>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cameras(&text, resolution)
}

pub fn parse_cameras(text: &str, resolution: (usize, usize)) -> Result<Vec<Camera>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let v = content
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::ParseError {
                    line,
                    message: format!("invalid number '{s}'"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if v.len() != 16 {
            return Err(Error::ParseError {
                line,
                message: format!("expected 16 values, found {}", v.len()),
            });
        }
        out.push(Camera::new(
            Matrix3::from_row_slice(&v[..9]),
            Vec3::new(v[9], v[10], v[11]),
            Vector2::new(v[12], v[13]),
            Vector2::new(v[14], v[15]),
            resolution,
        ));
    }
    Ok(out)
}
