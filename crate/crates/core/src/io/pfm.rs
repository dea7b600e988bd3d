//! Portable float maps: `Pf` (one channel) and `PF` (three channels),
//! 32-bit floats, rows stored bottom to top. Written little-endian with
//! scale `-1.0`; big-endian files are read as well.

use std::fs;
use std::path::Path;

use crate::{Error, Result, Tensor};

/// Writes an `H x W`, `H x W x 1` or `H x W x 3` map. Values are stored as
/// `f32`.
pub fn write_pfm(path: &Path, map: &Tensor) -> Result<()> {
    let bytes = encode_pfm(map).map_err(|msg| Error::format(path, msg))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_pfm(map: &Tensor) -> std::result::Result<Vec<u8>, String> {
    let (h, w) = (map.height(), map.width());
    let c = match map.ndim() {
        2 => 1,
        3 if matches!(map.channels(), 1 | 3) => map.channels(),
        _ => return Err(format!("PFM stores 1 or 3 channels, got shape {:?}", map.shape())),
    };
    let magic = if c == 1 { "Pf" } else { "PF" };
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * c * 4);
    for y in (0..h).rev() {
        for v in &map.data()[y * w * c..(y + 1) * w * c] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Reads a PFM file into an `H x W` (one channel) or `H x W x 3` tensor.
pub fn read_pfm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes).map_err(|msg| Error::format(path, msg))
}

pub fn decode_pfm(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let (tokens, body) = super::header_tokens(bytes, 4)?;
    let c = match tokens[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(format!("not a PFM file (magic {other:?})")),
    };
    let w: usize = tokens[1].parse().map_err(|_| format!("bad width {:?}", tokens[1]))?;
    let h: usize = tokens[2].parse().map_err(|_| format!("bad height {:?}", tokens[2]))?;
    let scale: f64 = tokens[3].parse().map_err(|_| format!("bad scale {:?}", tokens[3]))?;
    if scale == 0.0 || w == 0 || h == 0 {
        return Err("PFM header has a zero dimension or scale".into());
    }
    let little = scale < 0.0;
    let n = w * h * c;
    if body.len() < n * 4 {
        return Err(format!("truncated PFM data: expected {} bytes, found {}", n * 4, body.len()));
    }
    let mut data = vec![0.0; n];
    let row = w * c;
    for (k, chunk) in body[..n * 4].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, col) = (k / row, k % row);
        data[(h - 1 - file_row) * row + col] = v as f64;
    }
    let shape: Vec<usize> = if c == 1 { vec![h, w] } else { vec![h, w, 3] };
    Tensor::new(&shape, data).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_identical() {
        let map = Tensor::from_fn2(3, 4, |y, x| 0.1 * x as f64 + 1.7 * y as f64 + 1e-3);
        let bytes = encode_pfm(&map).unwrap();
        let back = decode_pfm(&bytes).unwrap();
        for (a, b) in map.data().iter().zip(back.data()) {
            assert_eq!((*a as f32).to_bits(), (*b as f32).to_bits());
        }
        assert_eq!(encode_pfm(&back).unwrap(), bytes);
    }

    #[test]
    fn rows_are_stored_bottom_up() {
        let map = Tensor::from_fn2(2, 1, |y, _| y as f64);
        let bytes = encode_pfm(&map).unwrap();
        let header = b"Pf\n1 2\n-1.0\n".len();
        assert_eq!(&bytes[header..header + 4], &1.0f32.to_le_bytes());
    }

    #[test]
    fn color_maps_and_big_endian() {
        let map = Tensor::from_fn3(2, 2, 3, |y, x, c| (y * 6 + x * 3 + c) as f64);
        let back = decode_pfm(&encode_pfm(&map).unwrap()).unwrap();
        assert_eq!(back, map);
        let mut be = b"Pf\n1 1\n1.0\n".to_vec();
        be.extend_from_slice(&2.5f32.to_be_bytes());
        assert_eq!(decode_pfm(&be).unwrap().data(), &[2.5]);
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(decode_pfm(b"P6\n1 1\n255\n").is_err());
        assert!(decode_pfm(b"Pf\n2 2\n-1.0\n\0\0").is_err());
        assert!(encode_pfm(&Tensor::zeros(&[2, 2, 2])).is_err());
    }
}
