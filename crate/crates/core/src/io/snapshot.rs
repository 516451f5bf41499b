//! Binary state files: a 64-byte ASCII header
//! `NSCHS1 nx ny lx ly t` padded with spaces and closed by a newline, then
//! little-endian f64 values of phi, rho, p, ux, uy in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::grid::{Grid2D, GridError, MacField, ScalarField};
use crate::model::SimState;

pub const MAGIC: &str = "NSCHS1";
pub const HEADER_LEN: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad magic: expected {MAGIC}")]
    BadMagic,
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("header needs {0} bytes, more than the {HEADER_LEN} available")]
    HeaderOverflow(usize),
    #[error("shape mismatch: expected {expected} payload bytes, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn header(grid: &Grid2D, t: f64) -> Result<Vec<u8>, SnapshotError> {
    let text = format!(
        "{MAGIC} {} {} {} {} {}",
        grid.nx(),
        grid.ny(),
        grid.lx(),
        grid.ly(),
        t
    );
    if text.len() + 1 > HEADER_LEN {
        return Err(SnapshotError::HeaderOverflow(text.len() + 1));
    }
    let mut bytes = text.into_bytes();
    bytes.resize(HEADER_LEN - 1, b' ');
    bytes.push(b'\n');
    Ok(bytes)
}

fn payload_len(nx: usize, ny: usize) -> usize {
    8 * (3 * nx * ny + (nx + 1) * ny + nx * (ny + 1))
}

/// Serialize a state to bytes.
pub fn encode_snapshot(state: &SimState) -> Result<Vec<u8>, SnapshotError> {
    let g = &state.grid;
    let mut out = header(g, state.t)?;
    out.reserve(payload_len(g.nx(), g.ny()));
    for a in [
        &*state.phi,
        &*state.rho,
        &*state.p,
        &state.u.ux,
        &state.u.uy,
    ] {
        for v in a.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<SimState, SnapshotError> {
    if bytes.len() < HEADER_LEN {
        return Err(SnapshotError::ShapeMismatch {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let head = std::str::from_utf8(&bytes[..HEADER_LEN])
        .map_err(|_| SnapshotError::BadHeader("not ASCII".into()))?;
    let mut parts = head.split_ascii_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(SnapshotError::BadMagic);
    }
    let mut next = |name: &str| {
        parts
            .next()
            .ok_or_else(|| SnapshotError::BadHeader(format!("missing {name}")))
    };
    let bad = |name: &str| SnapshotError::BadHeader(format!("cannot parse {name}"));
    let nx: usize = next("nx")?.parse().map_err(|_| bad("nx"))?;
    let ny: usize = next("ny")?.parse().map_err(|_| bad("ny"))?;
    let lx: f64 = next("lx")?.parse().map_err(|_| bad("lx"))?;
    let ly: f64 = next("ly")?.parse().map_err(|_| bad("ly"))?;
    let t: f64 = next("t")?.parse().map_err(|_| bad("t"))?;
    let grid = Grid2D::new(nx, ny, lx, ly)?;

    let body = &bytes[HEADER_LEN..];
    let expected = payload_len(nx, ny);
    if body.len() != expected {
        return Err(SnapshotError::ShapeMismatch {
            expected,
            found: body.len(),
        });
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take = |shape: (usize, usize)| {
        let v: Vec<f64> = values.by_ref().take(shape.0 * shape.1).collect();
        Array2::from_shape_vec(shape, v).expect("length checked")
    };
    let phi = ScalarField::new(take((nx, ny)));
    let rho = ScalarField::new(take((nx, ny)));
    let p = ScalarField::new(take((nx, ny)));
    let ux = take((nx + 1, ny));
    let uy = take((nx, ny + 1));
    let mut state = SimState::new(grid, phi, rho).expect("shapes match the grid");
    state.t = t;
    state.p = p;
    state.u = MacField::new(ux, uy);
    Ok(state)
}

pub fn write_snapshot(state: &SimState, path: &Path) -> Result<(), SnapshotError> {
    let bytes = encode_snapshot(state)?;
    let io = |source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    Ok(())
}

/// Read a snapshot. The potential caches of the result are zero.
pub fn read_snapshot(path: &Path) -> Result<SimState, SnapshotError> {
    let bytes = fs::read(path).map_err(|source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_snapshot(&bytes)
}
