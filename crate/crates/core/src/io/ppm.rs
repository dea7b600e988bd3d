//! Binary 8-bit PPM (`P6`) images.

use std::fs;
use std::path::Path;

use crate::{Error, Result, Tensor};

/// Writes an `H x W x 1` or `H x W x 3` image with values in `[0, 1]`;
/// values are clamped and rounded to 8 bits, gray is replicated.
pub fn write_ppm(path: &Path, image: &Tensor) -> Result<()> {
    let bytes = encode_ppm(image).map_err(|msg| Error::format(path, msg))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_ppm(image: &Tensor) -> std::result::Result<Vec<u8>, String> {
    let c = match image.ndim() {
        2 => 1,
        3 if matches!(image.channels(), 1 | 3) => image.channels(),
        _ => return Err(format!("PPM needs 1 or 3 channels, got shape {:?}", image.shape())),
    };
    let (h, w) = (image.height(), image.width());
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w * 3);
    let quantize = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for px in image.data().chunks_exact(c) {
        if c == 1 {
            out.extend_from_slice(&[quantize(px[0]); 3]);
        } else {
            out.extend(px.iter().map(|&v| quantize(v)));
        }
    }
    Ok(out)
}

/// Reads a `P6` file with maxval up to 255 into an `H x W x 3` tensor in
/// `[0, 1]`.
pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|msg| Error::format(path, msg))
}

pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let (tokens, body) = super::header_tokens(bytes, 4)?;
    if tokens[0] != "P6" {
        return Err(format!("not a binary PPM (magic {:?})", tokens[0]));
    }
    let parse = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what} {s:?}"));
    let w = parse(&tokens[1], "width")?;
    let h = parse(&tokens[2], "height")?;
    let maxval = parse(&tokens[3], "maxval")?;
    if maxval == 0 || maxval > 255 || w == 0 || h == 0 {
        return Err(format!("unsupported PPM header {w}x{h} maxval {maxval}"));
    }
    let n = w * h * 3;
    if body.len() < n {
        return Err(format!("truncated PPM data: expected {n} bytes, found {}", body.len()));
    }
    let data = body[..n].iter().map(|&b| b as f64 / maxval as f64).collect();
    Tensor::new(&[h, w, 3], data).map_err(|e| e.to_string())
}
