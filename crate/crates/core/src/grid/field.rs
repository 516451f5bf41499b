use std::ops::{Deref, DerefMut};

use ndarray::{Array2, Zip};

/// Cell-centered scalar values, shape `(nx, ny)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Array2<f64>,
}

impl ScalarField {
    pub fn new(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::new(self.values.mapv(f))
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let mut out = self.values.clone();
        Zip::from(&mut out)
            .and(&other.values)
            .for_each(|a, &b| *a = f(*a, b));
        ScalarField::new(out)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        Zip::from(&mut self.values)
            .and(&x.values)
            .for_each(|s, &v| *s += a * v);
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        self.map(|v| a * v)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Deref for ScalarField {
    type Target = Array2<f64>;
    fn deref(&self) -> &Array2<f64> {
        &self.values
    }
}

impl DerefMut for ScalarField {
    fn deref_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }
}

impl From<Array2<f64>> for ScalarField {
    fn from(values: Array2<f64>) -> Self {
        Self::new(values)
    }
}

/// Staggered velocity: `ux` on vertical faces `(nx+1, ny)`, `uy` on
/// horizontal faces `(nx, ny+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacField {
    pub ux: Array2<f64>,
    pub uy: Array2<f64>,
}

impl MacField {
    pub fn new(ux: Array2<f64>, uy: Array2<f64>) -> Self {
        Self { ux, uy }
    }

    pub fn axpy(&mut self, a: f64, x: &MacField) {
        Zip::from(&mut self.ux)
            .and(&x.ux)
            .for_each(|s, &v| *s += a * v);
        Zip::from(&mut self.uy)
            .and(&x.uy)
            .for_each(|s, &v| *s += a * v);
    }

    pub fn scaled(&self, a: f64) -> MacField {
        MacField::new(self.ux.mapv(|v| a * v), self.uy.mapv(|v| a * v))
    }

    /// Face-by-face product with another staggered field.
    pub fn hadamard(&self, other: &MacField) -> MacField {
        MacField::new(&self.ux * &other.ux, &self.uy * &other.uy)
    }

    pub fn max_abs(&self) -> f64 {
        self.ux
            .iter()
            .chain(self.uy.iter())
            .fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.ux.iter().chain(self.uy.iter()).all(|v| v.is_finite())
    }

    /// Zero the boundary-normal faces.
    pub fn enforce_no_slip(&mut self) {
        let (nxp1, ny) = self.ux.dim();
        for j in 0..ny {
            self.ux[[0, j]] = 0.0;
            self.ux[[nxp1 - 1, j]] = 0.0;
        }
        let (nx, nyp1) = self.uy.dim();
        for i in 0..nx {
            self.uy[[i, 0]] = 0.0;
            self.uy[[i, nyp1 - 1]] = 0.0;
        }
    }
}
