//! Fast diagonal solves. The Neumann Laplacian on cell centers is
//! diagonalized by DCT-II; the no-slip vector Laplacian on MAC faces by
//! DST-I (Dirichlet nodes) and DST-II (odd-ghost cells).

use std::cmp::Ordering;
use std::sync::Arc;

use ndarray::{s, Array2, Axis};
use rustdct::{DctPlanner, Dst1, TransformType2And3};

use super::{dirichlet_eig, Grid2D, MacField, ScalarField};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("implicit symbol vanishes on cosine mode ({kx}, {ky})")]
    SingularSymbol { kx: usize, ky: usize },
    #[error("right-hand side must be mean free (mean {mean:e}, tolerance {tol:e})")]
    NotMeanFree { mean: f64, tol: f64 },
}

/// Coefficients of `a I + b Lap + c Lap^2 + d Lap^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HelmholtzCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl HelmholtzCoeffs {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn symbol(&self, lambda: f64) -> f64 {
        self.a + lambda * (self.b + lambda * (self.c + lambda * self.d))
    }

    fn scale(&self, lambda_max: f64) -> f64 {
        let l = lambda_max.abs();
        self.a.abs() + self.b.abs() * l + self.c.abs() * l * l + self.d.abs() * l * l * l
    }
}

pub(super) struct Plans {
    cos_x: Arc<dyn TransformType2And3<f64>>,
    cos_y: Arc<dyn TransformType2And3<f64>>,
    dst1_x: Arc<dyn Dst1<f64>>,
    dst1_y: Arc<dyn Dst1<f64>>,
}

impl Plans {
    pub(super) fn new(nx: usize, ny: usize) -> Self {
        let mut planner = DctPlanner::new();
        Self {
            cos_x: planner.plan_dct2(nx),
            cos_y: planner.plan_dct2(ny),
            dst1_x: planner.plan_dst1(nx - 1),
            dst1_y: planner.plan_dst1(ny - 1),
        }
    }
}

fn along_rows(a: &mut Array2<f64>, f: impl Fn(&mut [f64])) {
    let n = a.ncols();
    let mut buf = vec![0.0; n];
    for mut row in a.axis_iter_mut(Axis(0)) {
        for (b, v) in buf.iter_mut().zip(row.iter()) {
            *b = *v;
        }
        f(&mut buf);
        for (v, b) in row.iter_mut().zip(buf.iter()) {
            *v = *b;
        }
    }
}

fn along_cols(a: &mut Array2<f64>, f: impl Fn(&mut [f64])) {
    let n = a.nrows();
    let mut buf = vec![0.0; n];
    for mut col in a.axis_iter_mut(Axis(1)) {
        for (b, v) in buf.iter_mut().zip(col.iter()) {
            *b = *v;
        }
        f(&mut buf);
        for (v, b) in col.iter_mut().zip(buf.iter()) {
            *v = *b;
        }
    }
}

impl Grid2D {
    /// Unnormalized 2-D DCT-II coefficients of a cell field.
    pub fn cosine_coefficients(&self, f: &ScalarField) -> Array2<f64> {
        let mut c = (**f).clone();
        let p = &self.plans;
        along_cols(&mut c, |b| p.cos_x.process_dct2(b));
        along_rows(&mut c, |b| p.cos_y.process_dct2(b));
        c
    }

    /// Inverse of [`Grid2D::cosine_coefficients`].
    pub fn from_cosine_coefficients(&self, coeffs: &Array2<f64>) -> ScalarField {
        let mut c = coeffs.clone();
        let p = &self.plans;
        along_cols(&mut c, |b| p.cos_x.process_dct3(b));
        along_rows(&mut c, |b| p.cos_y.process_dct3(b));
        let scale = 4.0 / (self.nx * self.ny) as f64;
        c.mapv_inplace(|v| v * scale);
        ScalarField::new(c)
    }

    fn lambda_max(&self) -> f64 {
        self.eig_x(self.nx - 1) + self.eig_y(self.ny - 1)
    }

    /// Solve `(a + b Lap + c Lap^2 + d Lap^3) f = rhs` with Neumann ghosts.
    /// A vanishing constant-mode symbol requires a mean-free right-hand side
    /// and yields the mean-free solution.
    pub fn helmholtz_solve(
        &self,
        coeffs: HelmholtzCoeffs,
        rhs: &ScalarField,
    ) -> Result<ScalarField, SpectralError> {
        let tol = 1e-13 * coeffs.scale(self.lambda_max()).max(f64::MIN_POSITIVE);
        let mut hat = self.cosine_coefficients(rhs);
        for kx in 0..self.nx {
            let lx = self.eig_x(kx);
            for ky in 0..self.ny {
                let sym = coeffs.symbol(lx + self.eig_y(ky));
                if sym.abs() <= tol {
                    if kx == 0 && ky == 0 {
                        self.check_mean_free(rhs)?;
                        hat[[0, 0]] = 0.0;
                        continue;
                    }
                    return Err(SpectralError::SingularSymbol { kx, ky });
                }
                hat[[kx, ky]] /= sym;
            }
        }
        Ok(self.from_cosine_coefficients(&hat))
    }

    fn check_mean_free(&self, f: &ScalarField) -> Result<(), SpectralError> {
        let mean = self.mean(f);
        let rms = self.l2(f) / self.area().sqrt();
        let tol = 1e-10 * rms;
        if mean.abs() > tol && mean != 0.0 {
            return Err(SpectralError::NotMeanFree { mean, tol });
        }
        Ok(())
    }

    /// Inverse Neumann Laplacian: `u` with `-Lap u = f` and mean zero.
    pub fn inv_neumann_laplacian(&self, f: &ScalarField) -> Result<ScalarField, SpectralError> {
        self.check_mean_free(f)?;
        self.helmholtz_solve(HelmholtzCoeffs::new(0.0, -1.0, 0.0, 0.0), f)
    }

    /// Cosine modes sorted by ascending `|lambda|`, ties broken by `(kx, ky)`.
    pub fn mode_order(&self) -> Vec<(usize, usize)> {
        let mut modes: Vec<(f64, usize, usize)> = (0..self.nx)
            .flat_map(|kx| (0..self.ny).map(move |ky| (kx, ky)))
            .map(|(kx, ky)| (-(self.eig_x(kx) + self.eig_y(ky)), kx, ky))
            .collect();
        modes.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(Ordering::Equal)
                .then((a.1, a.2).cmp(&(b.1, b.2)))
        });
        modes.into_iter().map(|(_, kx, ky)| (kx, ky)).collect()
    }

    /// Orthogonal projection onto the first `n_modes` Neumann eigenmodes.
    pub fn galerkin_project(&self, f: &ScalarField, n_modes: usize) -> ScalarField {
        let n_modes = n_modes.min(self.num_cells());
        let mut hat = self.cosine_coefficients(f);
        for &(kx, ky) in self.mode_order().iter().skip(n_modes) {
            hat[[kx, ky]] = 0.0;
        }
        self.from_cosine_coefficients(&hat)
    }

    /// Unnormalized cosine mode `cos(kx pi x / lx) cos(ky pi y / ly)` at cell
    /// centers.
    pub fn cosine_mode(&self, kx: usize, ky: usize) -> ScalarField {
        let (lx, ly) = (self.lx, self.ly);
        self.scalar_from_fn(|x, y| {
            (kx as f64 * std::f64::consts::PI * x / lx).cos()
                * (ky as f64 * std::f64::consts::PI * y / ly).cos()
        })
    }

    /// Solve `(I - kappa Lap_vec) v = rhs` on interior faces; boundary-normal
    /// faces of the result are 0.
    pub fn vector_helmholtz_solve(&self, kappa: f64, rhs: &MacField) -> MacField {
        let (nx, ny) = (self.nx, self.ny);
        let p = &self.plans;
        let mut out = self.zero_mac();

        // ux interior: i = 1..nx-1 (DST-I), all j (DST-II)
        let mut a = rhs.ux.slice(s![1..nx, ..]).to_owned();
        along_cols(&mut a, |b| p.dst1_x.process_dst1(b));
        along_rows(&mut a, |b| p.cos_y.process_dst2(b));
        for k in 0..nx - 1 {
            let lx = dirichlet_eig(k + 1, nx, self.hx);
            for m in 0..ny {
                let ly = dirichlet_eig(m + 1, ny, self.hy);
                a[[k, m]] /= 1.0 - kappa * (lx + ly);
            }
        }
        along_cols(&mut a, |b| p.dst1_x.process_dst1(b));
        along_rows(&mut a, |b| p.cos_y.process_dst3(b));
        let scale = 2.0 / nx as f64 * 2.0 / ny as f64;
        out.ux
            .slice_mut(s![1..nx, ..])
            .assign(&a.mapv(|v| v * scale));

        // uy interior: all i (DST-II), j = 1..ny-1 (DST-I)
        let mut b = rhs.uy.slice(s![.., 1..ny]).to_owned();
        along_cols(&mut b, |c| p.cos_x.process_dst2(c));
        along_rows(&mut b, |c| p.dst1_y.process_dst1(c));
        for k in 0..nx {
            let lx = dirichlet_eig(k + 1, nx, self.hx);
            for m in 0..ny - 1 {
                let ly = dirichlet_eig(m + 1, ny, self.hy);
                b[[k, m]] /= 1.0 - kappa * (lx + ly);
            }
        }
        along_cols(&mut b, |c| p.cos_x.process_dst3(c));
        along_rows(&mut b, |c| p.dst1_y.process_dst1(c));
        out.uy
            .slice_mut(s![.., 1..ny])
            .assign(&b.mapv(|v| v * scale));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wavy(g: &Grid2D) -> ScalarField {
        g.scalar_from_fn(|x, y| (2.3 * x).sin() + (1.7 * y * x).cos() - 0.3 * y)
    }

    #[test]
    fn cosine_round_trip() {
        let g = Grid2D::new(12, 10, 2.0, 1.0).unwrap();
        let f = wavy(&g);
        let back = g.from_cosine_coefficients(&g.cosine_coefficients(&f));
        for (a, b) in f.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn identity_coefficients_return_rhs() {
        let g = Grid2D::new(8, 8, 1.0, 1.0).unwrap();
        let f = wavy(&g);
        let out = g
            .helmholtz_solve(HelmholtzCoeffs::new(1.0, 0.0, 0.0, 0.0), &f)
            .unwrap();
        for (a, b) in f.iter().zip(out.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn helmholtz_round_trip() {
        let g = Grid2D::new(16, 12, 1.0, 0.8).unwrap();
        let f = wavy(&g);
        let mut applied = f.clone();
        applied.axpy(-1.0, &g.laplacian(&f));
        let back = g
            .helmholtz_solve(HelmholtzCoeffs::new(1.0, -1.0, 0.0, 0.0), &applied)
            .unwrap();
        let err = g.l2(&back.zip_map(&f, |a, b| a - b)) / g.l2(&f);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn singular_symbol_is_reported() {
        let g = Grid2D::new(8, 8, 1.0, 1.0).unwrap();
        // a + b*lambda vanishes on the (1, 0) mode
        let lam = g.eig_x(1);
        let coeffs = HelmholtzCoeffs::new(-lam, 1.0, 0.0, 0.0);
        let err = g.helmholtz_solve(coeffs, &wavy(&g)).unwrap_err();
        assert!(matches!(err, SpectralError::SingularSymbol { .. }));
    }

    #[test]
    fn inverse_laplacian_rejects_mean() {
        let g = Grid2D::new(8, 8, 1.0, 1.0).unwrap();
        assert!(matches!(
            g.inv_neumann_laplacian(&g.constant(1.0)),
            Err(SpectralError::NotMeanFree { .. })
        ));
    }

    #[test]
    fn inverse_laplacian_undoes_laplacian() {
        let g = Grid2D::new(20, 14, 1.5, 1.0).unwrap();
        let f = wavy(&g);
        let m = g.mean(&f);
        let gm = f.map(|v| v - m);
        let lap = g.laplacian(&gm).scaled(-1.0);
        let back = g.inv_neumann_laplacian(&lap).unwrap();
        let err = g.l2(&back.zip_map(&gm, |a, b| a - b)) / g.l2(&gm);
        assert!(err < 1e-11, "{err}");
        assert!(g.mean(&back).abs() < 1e-14);
    }

    #[test]
    fn galerkin_extremes() {
        let g = Grid2D::new(8, 6, 1.0, 1.0).unwrap();
        let f = wavy(&g);
        let full = g.galerkin_project(&f, 48);
        for (a, b) in f.iter().zip(full.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
        let one = g.galerkin_project(&f, 1);
        let m = g.mean(&f);
        assert!(one.iter().all(|v| (v - m).abs() < 1e-13));
        let p = g.galerkin_project(&f, 10);
        let pp = g.galerkin_project(&p, 10);
        for (a, b) in p.iter().zip(pp.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn vector_helmholtz_round_trip() {
        let g = Grid2D::new(10, 7, 1.0, 0.7).unwrap();
        let mut v = g.zero_mac();
        for ((i, j), x) in v.ux.indexed_iter_mut() {
            *x = ((i * 3 + j * 5) % 7) as f64 - 3.0;
        }
        for ((i, j), x) in v.uy.indexed_iter_mut() {
            *x = ((i * 2 + j * 7) % 5) as f64 - 2.0;
        }
        v.enforce_no_slip();
        let kappa = 0.37;
        let mut applied = v.clone();
        applied.axpy(-kappa, &g.vector_laplacian(&v));
        let back = g.vector_helmholtz_solve(kappa, &applied);
        let mut diff = back.clone();
        diff.axpy(-1.0, &v);
        assert!(diff.max_abs() < 1e-12, "{}", diff.max_abs());
    }
}
