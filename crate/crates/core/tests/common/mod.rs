#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nschs::grid::{Grid2D, MacField, ScalarField};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(g: &Grid2D, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
    let mut f = g.zeros();
    for v in f.iter_mut() {
        *v = rng.random_range(lo..=hi);
    }
    f
}

/// Random field restricted to the lowest `modes` cosine modes.
pub fn smooth_field(
    g: &Grid2D,
    rng: &mut ChaCha8Rng,
    center: f64,
    amp: f64,
    modes: usize,
) -> ScalarField {
    let f = random_field(g, rng, -1.0, 1.0);
    let f = g.galerkin_project(&f, modes);
    let m = f.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
    f.map(|v| center + amp * v / m)
}

pub fn mean_free(g: &Grid2D, f: &ScalarField) -> ScalarField {
    let m = g.mean(f);
    f.map(|v| v - m)
}

pub fn to_vec(f: &ScalarField) -> DVector<f64> {
    DVector::from_iterator(f.len(), f.iter().copied())
}

pub fn from_vec(g: &Grid2D, v: &DVector<f64>) -> ScalarField {
    let mut f = g.zeros();
    for (dst, src) in f.iter_mut().zip(v.iter()) {
        *dst = *src;
    }
    f
}

pub fn unit(g: &Grid2D, k: usize) -> ScalarField {
    let mut f = g.zeros();
    *f.iter_mut().nth(k).unwrap() = 1.0;
    f
}

/// Dense matrix of a linear cell-to-cell map.
pub fn assemble(g: &Grid2D, op: impl Fn(&ScalarField) -> ScalarField) -> DMatrix<f64> {
    let n = g.num_cells();
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        let col = op(&unit(g, k));
        for (r, v) in col.iter().enumerate() {
            m[(r, k)] = *v;
        }
    }
    m
}

/// Interior (non boundary-normal) faces, in a fixed order.
pub fn interior_faces(g: &Grid2D) -> Vec<(bool, usize, usize)> {
    let (nx, ny) = (g.nx(), g.ny());
    let mut out = Vec::new();
    for i in 1..nx {
        for j in 0..ny {
            out.push((true, i, j));
        }
    }
    for i in 0..nx {
        for j in 1..ny {
            out.push((false, i, j));
        }
    }
    out
}

pub fn mac_to_vec(g: &Grid2D, v: &MacField) -> DVector<f64> {
    let faces = interior_faces(g);
    DVector::from_iterator(
        faces.len(),
        faces
            .iter()
            .map(|&(x, i, j)| if x { v.ux[[i, j]] } else { v.uy[[i, j]] }),
    )
}

pub fn mac_from_vec(g: &Grid2D, data: &DVector<f64>) -> MacField {
    let mut v = g.zero_mac();
    for (&(x, i, j), val) in interior_faces(g).iter().zip(data.iter()) {
        if x {
            v.ux[[i, j]] = *val;
        } else {
            v.uy[[i, j]] = *val;
        }
    }
    v
}

pub fn random_mac(g: &Grid2D, rng: &mut ChaCha8Rng) -> MacField {
    let n = interior_faces(g).len();
    let data = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..=1.0)));
    mac_from_vec(g, &data)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn field_rel_err(a: &ScalarField, b: &ScalarField) -> f64 {
    let num = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    num / den.max(1e-300)
}

pub fn max_abs_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn mat_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}
