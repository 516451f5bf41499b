//! Uniform cell-centered grid with a staggered (MAC) velocity layout.
//!
//! Scalars live at cell centers and satisfy homogeneous Neumann conditions
//! through even reflection ghosts. Velocity components live on cell faces;
//! faces on the boundary carry the no-slip normal value 0 and tangential
//! components use odd reflection ghosts.
//!
//! All stencil loops run in a fixed index order so results never depend on
//! scheduling.

mod field;
mod spectral;

pub use field::{MacField, ScalarField};
pub use spectral::{HelmholtzCoeffs, SpectralError};

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::Array2;

use spectral::Plans;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("grid needs at least 4 cells per axis, got {nx}x{ny}")]
    TooSmall { nx: usize, ny: usize },
    #[error("domain lengths must be positive and finite, got {lx} x {ly}")]
    BadDomain { lx: f64, ly: f64 },
}

/// Uniform rectangular grid on `[0, lx] x [0, ly]`.
#[derive(Clone)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid2D")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("lx", &self.lx)
            .field("ly", &self.ly)
            .finish()
    }
}

impl PartialEq for Grid2D {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.lx.to_bits() == other.lx.to_bits()
            && self.ly.to_bits() == other.ly.to_bits()
    }
}

/// Discrete norms of a scalar field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarNorms {
    pub l2: f64,
    pub h1: f64,
    /// Dual norm `|grad N (f - mean f)|`.
    pub v0_star: f64,
    pub linf: f64,
}

/// Discrete norms of a staggered velocity field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacNorms {
    pub l2: f64,
    pub h1: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, GridError> {
        if nx < 4 || ny < 4 {
            return Err(GridError::TooSmall { nx, ny });
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(GridError::BadDomain { lx, ly });
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
            plans: Arc::new(Plans::new(nx, ny)),
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
    /// Quadrature weight of one cell (and of one face).
    pub fn cell_volume(&self) -> f64 {
        self.hx * self.hy
    }
    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Coordinates of the center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    pub fn zeros(&self) -> ScalarField {
        ScalarField::new(Array2::zeros((self.nx, self.ny)))
    }

    pub fn constant(&self, c: f64) -> ScalarField {
        ScalarField::new(Array2::from_elem((self.nx, self.ny), c))
    }

    pub fn scalar_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        ScalarField::new(Array2::from_shape_fn((self.nx, self.ny), |(i, j)| {
            let (x, y) = self.cell_center(i, j);
            f(x, y)
        }))
    }

    pub fn zero_mac(&self) -> MacField {
        MacField::new(
            Array2::zeros((self.nx + 1, self.ny)),
            Array2::zeros((self.nx, self.ny + 1)),
        )
    }

    pub fn accepts(&self, f: &ScalarField) -> bool {
        f.dim() == (self.nx, self.ny)
    }

    pub fn accepts_mac(&self, v: &MacField) -> bool {
        v.ux.dim() == (self.nx + 1, self.ny) && v.uy.dim() == (self.nx, self.ny + 1)
    }

    /// Eigenvalue of the 1-D Neumann Laplacian for cosine mode `k` along x.
    pub fn eig_x(&self, k: usize) -> f64 {
        neumann_eig(k, self.nx, self.hx)
    }

    pub fn eig_y(&self, k: usize) -> f64 {
        neumann_eig(k, self.ny, self.hy)
    }

    // ----- integrals ------------------------------------------------------

    pub fn mean(&self, f: &ScalarField) -> f64 {
        self.integral(f) / self.area()
    }

    pub fn integral(&self, f: &ScalarField) -> f64 {
        sum_fixed(f.iter().copied()) * self.cell_volume()
    }

    /// Cell-weighted L2 inner product.
    pub fn inner(&self, f: &ScalarField, g: &ScalarField) -> f64 {
        sum_fixed(f.iter().zip(g.iter()).map(|(a, b)| a * b)) * self.cell_volume()
    }

    /// Face-weighted L2 inner product of staggered fields.
    pub fn mac_inner(&self, u: &MacField, v: &MacField) -> f64 {
        let sx = sum_fixed(u.ux.iter().zip(v.ux.iter()).map(|(a, b)| a * b));
        let sy = sum_fixed(u.uy.iter().zip(v.uy.iter()).map(|(a, b)| a * b));
        (sx + sy) * self.cell_volume()
    }

    // ----- differential operators ----------------------------------------

    /// Face gradient; boundary faces carry 0 (Neumann).
    pub fn gradient(&self, f: &ScalarField) -> MacField {
        let (nx, ny) = (self.nx, self.ny);
        let mut g = self.zero_mac();
        for i in 1..nx {
            for j in 0..ny {
                g.ux[[i, j]] = (f[[i, j]] - f[[i - 1, j]]) / self.hx;
            }
        }
        for i in 0..nx {
            for j in 1..ny {
                g.uy[[i, j]] = (f[[i, j]] - f[[i, j - 1]]) / self.hy;
            }
        }
        g
    }

    pub fn divergence(&self, v: &MacField) -> ScalarField {
        let mut d = self.zeros();
        for i in 0..self.nx {
            for j in 0..self.ny {
                d[[i, j]] = (v.ux[[i + 1, j]] - v.ux[[i, j]]) / self.hx
                    + (v.uy[[i, j + 1]] - v.uy[[i, j]]) / self.hy;
            }
        }
        d
    }

    /// Five-point Laplacian with even reflection ghosts.
    pub fn laplacian(&self, f: &ScalarField) -> ScalarField {
        let (nx, ny) = (self.nx, self.ny);
        let (ihx2, ihy2) = (1.0 / (self.hx * self.hx), 1.0 / (self.hy * self.hy));
        let mut out = self.zeros();
        for i in 0..nx {
            let im = if i == 0 { 0 } else { i - 1 };
            let ip = if i + 1 == nx { i } else { i + 1 };
            for j in 0..ny {
                let jm = if j == 0 { 0 } else { j - 1 };
                let jp = if j + 1 == ny { j } else { j + 1 };
                let c = f[[i, j]];
                out[[i, j]] = ((f[[ip, j]] - c) - (c - f[[im, j]])) * ihx2
                    + ((f[[i, jp]] - c) - (c - f[[i, jm]])) * ihy2;
            }
        }
        out
    }

    pub fn biharmonic(&self, f: &ScalarField) -> ScalarField {
        self.laplacian(&self.laplacian(f))
    }

    pub fn triharmonic(&self, f: &ScalarField) -> ScalarField {
        self.laplacian(&self.biharmonic(f))
    }

    /// Arithmetic average of adjacent cells onto faces. Boundary faces take
    /// the single adjacent cell value.
    pub fn face_average(&self, f: &ScalarField) -> MacField {
        let (nx, ny) = (self.nx, self.ny);
        let mut out = self.zero_mac();
        for i in 0..=nx {
            let l = i.saturating_sub(1);
            let r = i.min(nx - 1);
            for j in 0..ny {
                out.ux[[i, j]] = 0.5 * (f[[l, j]] + f[[r, j]]);
            }
        }
        for i in 0..nx {
            for j in 0..=ny {
                let b = j.saturating_sub(1);
                let t = j.min(ny - 1);
                out.uy[[i, j]] = 0.5 * (f[[i, b]] + f[[i, t]]);
            }
        }
        out
    }

    /// Cell-centered `|grad f|^2`: per axis, the mean of the two squared
    /// face differences, summed over the axes. Its cell sum equals the face
    /// sum of squared gradients.
    pub fn cell_grad_sq(&self, f: &ScalarField) -> ScalarField {
        let g = self.gradient(f);
        self.cell_square_of_faces(&g)
    }

    pub(crate) fn cell_square_of_faces(&self, g: &MacField) -> ScalarField {
        let mut out = self.zeros();
        for i in 0..self.nx {
            for j in 0..self.ny {
                let gx = g.ux[[i, j]].powi(2) + g.ux[[i + 1, j]].powi(2);
                let gy = g.uy[[i, j]].powi(2) + g.uy[[i, j + 1]].powi(2);
                out[[i, j]] = 0.5 * (gx + gy);
            }
        }
        out
    }

    /// Componentwise vector Laplacian of a staggered field with no-slip
    /// walls: normal boundary faces are held at 0, tangential components use
    /// odd ghosts. Boundary-normal faces of the result are 0.
    pub fn vector_laplacian(&self, v: &MacField) -> MacField {
        let (nx, ny) = (self.nx, self.ny);
        let (ihx2, ihy2) = (1.0 / (self.hx * self.hx), 1.0 / (self.hy * self.hy));
        let mut out = self.zero_mac();
        for i in 1..nx {
            for j in 0..ny {
                let c = v.ux[[i, j]];
                let below = if j == 0 { -c } else { v.ux[[i, j - 1]] };
                let above = if j + 1 == ny { -c } else { v.ux[[i, j + 1]] };
                out.ux[[i, j]] = (v.ux[[i + 1, j]] - 2.0 * c + v.ux[[i - 1, j]]) * ihx2
                    + (above - 2.0 * c + below) * ihy2;
            }
        }
        for i in 0..nx {
            for j in 1..ny {
                let c = v.uy[[i, j]];
                let left = if i == 0 { -c } else { v.uy[[i - 1, j]] };
                let right = if i + 1 == nx { -c } else { v.uy[[i + 1, j]] };
                out.uy[[i, j]] = (right - 2.0 * c + left) * ihx2
                    + (v.uy[[i, j + 1]] - 2.0 * c + v.uy[[i, j - 1]]) * ihy2;
            }
        }
        out
    }

    /// Velocity built from a node stream function `s` of shape
    /// `(nx+1, ny+1)`: `ux = ds/dy`, `uy = -ds/dx`. Exactly divergence free;
    /// no-slip normal faces vanish when `s` is zero on the boundary.
    pub fn curl_of_stream(&self, s: &Array2<f64>) -> MacField {
        let (nx, ny) = (self.nx, self.ny);
        assert_eq!(s.dim(), (nx + 1, ny + 1), "stream function lives on nodes");
        let mut v = self.zero_mac();
        for i in 0..=nx {
            for j in 0..ny {
                v.ux[[i, j]] = (s[[i, j + 1]] - s[[i, j]]) / self.hy;
            }
        }
        for i in 0..nx {
            for j in 0..=ny {
                v.uy[[i, j]] = -(s[[i + 1, j]] - s[[i, j]]) / self.hx;
            }
        }
        v
    }

    /// Interpolate face velocities to cell centers (two scalar fields).
    pub fn mac_to_cells(&self, v: &MacField) -> (ScalarField, ScalarField) {
        let mut cx = self.zeros();
        let mut cy = self.zeros();
        for i in 0..self.nx {
            for j in 0..self.ny {
                cx[[i, j]] = 0.5 * (v.ux[[i, j]] + v.ux[[i + 1, j]]);
                cy[[i, j]] = 0.5 * (v.uy[[i, j]] + v.uy[[i, j + 1]]);
            }
        }
        (cx, cy)
    }

    // ----- norms ------------------------------------------------------------

    pub fn l2(&self, f: &ScalarField) -> f64 {
        self.inner(f, f).sqrt()
    }

    pub fn mac_l2(&self, v: &MacField) -> f64 {
        self.mac_inner(v, v).sqrt()
    }

    /// `|grad f|` in the face-weighted norm.
    pub fn grad_l2(&self, f: &ScalarField) -> f64 {
        self.mac_l2(&self.gradient(f))
    }

    pub fn norms(&self, f: &ScalarField) -> ScalarNorms {
        let l2 = self.l2(f);
        let grad = self.grad_l2(f);
        let m = self.mean(f);
        let centered = f.map(|v| v - m);
        let v0_star = match self.inv_neumann_laplacian(&centered) {
            Ok(n) => self.grad_l2(&n),
            Err(_) => f64::NAN,
        };
        ScalarNorms {
            l2,
            h1: (l2 * l2 + grad * grad).sqrt(),
            v0_star,
            linf: f.iter().fold(0.0_f64, |a, v| a.max(v.abs())),
        }
    }

    pub fn mac_norms(&self, v: &MacField) -> MacNorms {
        let l2 = self.mac_l2(v);
        // |grad v|^2 = -(v, lap v) for the no-slip vector Laplacian.
        let grad_sq = -self.mac_inner(v, &self.vector_laplacian(v));
        MacNorms {
            l2,
            h1: (l2 * l2 + grad_sq.max(0.0)).sqrt(),
        }
    }
}

pub(crate) fn neumann_eig(k: usize, n: usize, h: f64) -> f64 {
    let s = (k as f64 * PI / (2.0 * n as f64)).sin();
    -4.0 / (h * h) * s * s
}

pub(crate) fn dirichlet_eig(k: usize, n: usize, h: f64) -> f64 {
    // mode k = 1..n of the node/face Dirichlet problems
    let s = (k as f64 * PI / (2.0 * n as f64)).sin();
    -4.0 / (h * h) * s * s
}

/// Sequential left-to-right summation; the fixed order is the determinism
/// contract for every reduction in the crate.
pub(crate) fn sum_fixed(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, |acc, v| acc + v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid8() -> Grid2D {
        Grid2D::new(8, 8, 1.0, 1.0).unwrap()
    }

    #[test]
    fn rejects_tiny_grid() {
        assert!(matches!(
            Grid2D::new(3, 8, 1.0, 1.0),
            Err(GridError::TooSmall { .. })
        ));
        assert!(Grid2D::new(8, 8, 0.0, 1.0).is_err());
    }

    #[test]
    fn mean_of_constant_and_of_x() {
        let g = Grid2D::new(32, 32, 1.0, 1.0).unwrap();
        assert!((g.mean(&g.constant(2.5)) - 2.5).abs() < 1e-15);
        let x = g.scalar_from_fn(|x, _| x);
        assert!((g.mean(&x) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_has_zero_gradient_and_laplacian() {
        let g = grid8();
        let c = g.constant(3.0);
        assert!(g.gradient(&c).ux.iter().all(|v| *v == 0.0));
        assert!(g.laplacian(&c).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn laplacian_is_div_grad() {
        let g = Grid2D::new(7, 9, 2.0, 1.5).unwrap();
        let f = g.scalar_from_fn(|x, y| (x * 3.0).sin() + y * y * x);
        let a = g.laplacian(&f);
        let b = g.divergence(&g.gradient(&f));
        for (p, q) in a.iter().zip(b.iter()) {
            assert!((p - q).abs() < 1e-11 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn laplacian_is_mean_free() {
        let g = Grid2D::new(64, 64, 3.0, 2.0).unwrap();
        let f = g.scalar_from_fn(|x, y| (7.1 * x).sin() * (y * y).exp() + x * y);
        assert!(g.mean(&g.laplacian(&f)).abs() < 1e-13 * g.l2(&g.laplacian(&f)).max(1.0));
    }

    #[test]
    fn cell_grad_sq_sums_to_face_norm() {
        let g = Grid2D::new(6, 5, 1.0, 2.0).unwrap();
        let f = g.scalar_from_fn(|x, y| x * x - y + (x * y).sin());
        let cells = g.integral(&g.cell_grad_sq(&f));
        let faces = g.grad_l2(&f).powi(2);
        assert!((cells - faces).abs() < 1e-12 * faces);
    }

    #[test]
    fn linf_of_alternating_field_is_one() {
        let g = grid8();
        let f = ScalarField::new(Array2::from_shape_fn((8, 8), |(i, j)| {
            if (i + j) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }));
        assert_eq!(g.norms(&f).linf, 1.0);
        assert!((g.norms(&g.constant(-2.0)).l2 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn stream_function_velocity_is_solenoidal_and_no_slip() {
        let g = Grid2D::new(9, 7, 1.0, 1.3).unwrap();
        let s = Array2::from_shape_fn((10, 8), |(i, j)| {
            if i == 0 || j == 0 || i == 9 || j == 7 {
                0.0
            } else {
                ((i * 7 + j * 3) % 5) as f64 - 2.0
            }
        });
        let v = g.curl_of_stream(&s);
        let d = g.divergence(&v);
        assert!(d.iter().all(|x| x.abs() < 1e-12));
        for j in 0..7 {
            assert_eq!(v.ux[[0, j]], 0.0);
            assert_eq!(v.ux[[9, j]], 0.0);
        }
        for i in 0..9 {
            assert_eq!(v.uy[[i, 0]], 0.0);
            assert_eq!(v.uy[[i, 7]], 0.0);
        }
    }
}
