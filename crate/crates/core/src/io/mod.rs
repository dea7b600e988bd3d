//! File formats: PFM float maps, PPM images, pose CSV and JSON documents,
//! plus the experiment configuration.

mod config;
mod pfm;
mod ppm;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Intrinsics, PoseSE3, Result};

pub use config::{CostVolumeConfig, ExperimentConfig, IntrinsicsConfig, OptimizerConfig, TrajectorySpec};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use ppm::{decode_ppm, encode_ppm, read_ppm, write_ppm};

/// Splits a netpbm-style header into `n` whitespace-separated tokens
/// (skipping `#` comments) and returns the bytes after the single
/// whitespace character that ends the last token.
fn header_tokens(bytes: &[u8], n: usize) -> std::result::Result<(Vec<String>, &[u8]), String> {
    let mut tokens = Vec::with_capacity(n);
    let mut i = 0;
    while tokens.len() < n {
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
            return Err("truncated header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err("header is not followed by data".into());
    }
    Ok((tokens, &bytes[i + 1..]))
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRow {
    frame: usize,
    rx: f64,
    ry: f64,
    rz: f64,
    tx: f64,
    ty: f64,
    tz: f64,
}

/// Writes `frame,rx,ry,rz,tx,ty,tz` rows, one per pose.
pub fn write_poses(path: &Path, poses: &[PoseSE3]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (frame, p) in poses.iter().enumerate() {
        let [rx, ry, rz] = p.rotation;
        let [tx, ty, tz] = p.translation;
        w.serialize(PoseRow {
            frame,
            rx,
            ry,
            rz,
            tx,
            ty,
            tz,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a pose CSV; rows must be numbered `0, 1, 2, ...` in order.
pub fn read_poses(path: &Path) -> Result<Vec<PoseSE3>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut poses = Vec::new();
    for (k, row) in r.deserialize::<PoseRow>().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        if row.frame != k {
            return Err(Error::format(path, format!("expected frame {k}, found {}", row.frame)));
        }
        poses.push(PoseSE3 {
            rotation: [row.rx, row.ry, row.rz],
            translation: [row.tx, row.ty, row.tz],
        });
    }
    Ok(poses)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked io error"),
        }
    } else {
        Error::format(path, e.to_string())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_intrinsics(path: &Path, k: &Intrinsics) -> Result<()> {
    write_json(path, k)
}

pub fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    let k: Intrinsics = read_json(path)?;
    k.validate().map_err(|e| Error::format(path, e.to_string()))?;
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poses_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.csv");
        let poses = vec![
            PoseSE3::identity(),
            PoseSE3::new([0.1, -0.02, 1e-7], [0.3, 1.0 / 3.0, -2.5]),
        ];
        write_poses(&path, &poses).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("frame,rx,ry,rz,tx,ty,tz\n"));
        assert_eq!(read_poses(&path).unwrap(), poses);
    }

    #[test]
    fn pose_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "frame,rx,ry,rz,tx,ty,tz\n0,1,2,3,4,5\n").unwrap();
        let err = read_poses(&path).unwrap_err().to_string();
        assert!(err.contains("bad.csv"), "{err}");
        let missing = read_poses(&dir.path().join("none.csv")).unwrap_err().to_string();
        assert!(missing.contains("none.csv"), "{missing}");
    }

    #[test]
    fn intrinsics_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.json");
        let k = Intrinsics::new(0.82, 1.02, 0.5, 0.5).unwrap();
        write_intrinsics(&path, &k).unwrap();
        assert_eq!(read_intrinsics(&path).unwrap(), k);
        fs::write(&path, r#"{"fx":1,"fy":1,"cx":0.5,"cy":0.5,"skew":0}"#).unwrap();
        let err = read_intrinsics(&path).unwrap_err().to_string();
        assert!(err.contains("skew") && err.contains("k.json"), "{err}");
    }
}
