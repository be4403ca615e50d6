//! Scene directory: per view `view_<i>.mask.pgm` (binary P5, 255 = rope),
//! `view_<i>.depth.f32` (little-endian f32, row-major, meters) and
//! `view_<i>.camera.json`; plus `scene.json` with the table height and view
//! count.

use super::{Camera, DepthScene, DepthView, ExtractError};
use crate::math::{quat_from_xyzw, quat_to_xyzw, Vec3};
use crate::state::FormatError;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct CameraFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    position: [f64; 3],
    quaternion_xyzw: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    table_height: f64,
    views: usize,
}

fn read(path: &Path) -> Result<Vec<u8>, ExtractError> {
    std::fs::read(path).map_err(|e| FormatError::io(path, e).into())
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ExtractError> {
    std::fs::write(path, bytes).map_err(|e| FormatError::io(path, e).into())
}

fn json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ExtractError> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| FormatError::parse(path, e.line(), e).into())
}

pub fn write_scene(scene: &DepthScene, dir: &Path) -> Result<(), ExtractError> {
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    let meta = SceneFile {
        table_height: scene.table_height,
        views: scene.views.len(),
    };
    write(&dir.join("scene.json"), serde_json::to_string_pretty(&meta).expect("plain data").as_bytes())?;
    for (i, v) in scene.views.iter().enumerate() {
        let c = &v.camera;
        let cam = CameraFile {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            position: [c.position.x, c.position.y, c.position.z],
            quaternion_xyzw: quat_to_xyzw(&c.orientation),
        };
        write(
            &dir.join(format!("view_{i}.camera.json")),
            serde_json::to_string_pretty(&cam).expect("plain data").as_bytes(),
        )?;
        let mut pgm = format!("P5\n{} {}\n255\n", c.width, c.height).into_bytes();
        pgm.extend(v.mask.iter().map(|&m| if m { 255u8 } else { 0 }));
        write(&dir.join(format!("view_{i}.mask.pgm")), &pgm)?;
        let depth: Vec<u8> = v.depth.iter().flat_map(|d| d.to_le_bytes()).collect();
        write(&dir.join(format!("view_{i}.depth.f32")), &depth)?;
    }
    Ok(())
}

pub fn read_scene(dir: &Path) -> Result<DepthScene, ExtractError> {
    let meta: SceneFile = json(&dir.join("scene.json"))?;
    let mut views = Vec::with_capacity(meta.views);
    for i in 0..meta.views {
        let cam_path = dir.join(format!("view_{i}.camera.json"));
        let c: CameraFile = json(&cam_path)?;
        let camera = Camera {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            position: Vec3::from(c.position),
            orientation: quat_from_xyzw(c.quaternion_xyzw),
        };
        let n = c.width * c.height;
        let mask_path = dir.join(format!("view_{i}.mask.pgm"));
        let mask = parse_pgm(&read(&mask_path)?, c.width, c.height)
            .map_err(|msg| ExtractError::from(FormatError::parse(&mask_path, 1, msg)))?;
        let depth_path = dir.join(format!("view_{i}.depth.f32"));
        let raw = read(&depth_path)?;
        if raw.len() != 4 * n {
            return Err(FormatError::parse(&depth_path, 1, format!("expected {} bytes, found {}", 4 * n, raw.len())).into());
        }
        let depth = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        views.push(DepthView { camera, mask, depth });
    }
    let scene = DepthScene {
        views,
        table_height: meta.table_height,
    };
    scene.validate()?;
    Ok(scene)
}

/// Binary PGM with maxval < 256; any nonzero sample is rope.
fn parse_pgm(bytes: &[u8], width: usize, height: usize) -> Result<Vec<bool>, String> {
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err("truncated PGM header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    i += 1;
    if fields[0] != "P5" {
        return Err(format!("expected P5, found {}", fields[0]));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|e| format!("bad header field {s:?}: {e}"));
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if (w, h) != (width, height) {
        return Err(format!("mask is {w}x{h}, camera says {width}x{height}"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    let data = bytes.get(i..).unwrap_or_default();
    if data.len() != w * h {
        return Err(format!("expected {} raster bytes, found {}", w * h, data.len()));
    }
    Ok(data.iter().map(|&b| b != 0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_with_comment() {
        let mut bytes = b"P5\n# made by hand\n3 1\n255\n".to_vec();
        bytes.extend([0, 255, 7]);
        assert_eq!(parse_pgm(&bytes, 3, 1).unwrap(), vec![false, true, true]);
        assert!(parse_pgm(&bytes, 2, 1).is_err());
        assert!(parse_pgm(b"P2\n1 1\n255\n0", 1, 1).is_err());
    }
}
