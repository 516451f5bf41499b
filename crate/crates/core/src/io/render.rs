use std::fs;
use std::path::Path;

use crate::grid::ScalarField;

/// Binary 8-bit PGM; `[min, max]` of the field maps linearly to `[0, 255]`,
/// top row is the largest y.
pub fn encode_pgm(f: &ScalarField) -> Vec<u8> {
    let (nx, ny) = f.dim();
    let lo = f.min_value();
    let hi = f.max_value();
    let span = hi - lo;
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    out.reserve(nx * ny);
    for j in (0..ny).rev() {
        for i in 0..nx {
            let v = f[[i, j]];
            let level = if span > 0.0 && span.is_finite() {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                128
            };
            out.push(level);
        }
    }
    out
}

pub fn write_pgm(f: &ScalarField, path: &Path) -> std::io::Result<()> {
    fs::write(path, encode_pgm(f))
}
