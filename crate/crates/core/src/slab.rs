//! Periodic one-dimensional slab in `x₁` of length `2π`.
//!
//! Spatial fields are plain slices of length `cells`; both solvers and the
//! diagnostics share this descriptor, its derivative and its quadrature.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// How `∂_{x₁}` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    Spectral,
    CentralDifference,
}

#[derive(Clone)]
pub struct Slab {
    cells: usize,
    mode: GradientMode,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Slab {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Slab").field("cells", &self.cells).field("mode", &self.mode).finish()
    }
}

impl PartialEq for Slab {
    fn eq(&self, other: &Self) -> bool {
        self.cells == other.cells && self.mode == other.mode
    }
}

/// Spectral tail ratio above which a field is flagged as under-resolved.
pub const SMOOTHNESS_TOLERANCE: f64 = 1e-8;

impl Slab {
    pub fn new(cells: usize) -> Result<Self> {
        Self::with_mode(cells, GradientMode::Spectral)
    }

    pub fn with_mode(cells: usize, mode: GradientMode) -> Result<Self> {
        if cells < 4 {
            return Err(Error::Config(format!("slab needs at least 4 cells, got {cells}")));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            cells,
            mode,
            forward: planner.plan_fft_forward(cells),
            inverse: planner.plan_fft_inverse(cells),
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn mode(&self) -> GradientMode {
        self.mode
    }

    pub fn length(&self) -> f64 {
        2.0 * PI
    }

    pub fn dx(&self) -> f64 {
        2.0 * PI / self.cells as f64
    }

    /// Cell centre `x_i = i Δx`.
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.x(i)).collect()
    }

    pub fn field(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.cells).map(|i| f(self.x(i))).collect()
    }

    /// Signed integer wavenumber of FFT bin `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        let n = self.cells;
        if j <= n / 2 {
            j as f64
        } else {
            j as f64 - n as f64
        }
    }

    /// Periodic trapezoid rule, which is spectrally accurate here.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.dx()
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Unnormalised inverse transform; callers divide by `cells`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
    }

    /// `∂_{x₁} f` in the configured mode.
    pub fn derivative(&self, f: &[f64]) -> Vec<f64> {
        match self.mode {
            GradientMode::Spectral => self.spectral_derivative(f),
            GradientMode::CentralDifference => {
                let n = self.cells;
                let h = 2.0 * self.dx();
                (0..n).map(|i| (f[(i + 1) % n] - f[(i + n - 1) % n]) / h).collect()
            }
        }
    }

    fn spectral_derivative(&self, f: &[f64]) -> Vec<f64> {
        let n = self.cells;
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        for (j, c) in buf.iter_mut().enumerate() {
            if n % 2 == 0 && j == n / 2 {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c *= Complex64::new(0.0, self.wavenumber(j));
            }
        }
        self.inverse.process(&mut buf);
        buf.iter().map(|c| c.re / n as f64).collect()
    }

    /// Fraction of spectral energy in the upper third of the resolved band.
    pub fn spectral_tail(&self, f: &[f64]) -> f64 {
        let n = self.cells;
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        let cut = (n / 3).max(1) as f64;
        let mut total = 0.0;
        let mut tail = 0.0;
        for (j, c) in buf.iter().enumerate().skip(1) {
            let e = c.norm_sqr();
            total += e;
            if self.wavenumber(j).abs() > cut {
                tail += e;
            }
        }
        if total <= f64::MIN_POSITIVE {
            0.0
        } else {
            tail / total
        }
    }

    /// Rejects fields whose spectrum is not resolved by the slab.
    pub fn check_smooth(&self, f: &[f64]) -> Result<()> {
        check_len(self.cells, f.len())?;
        let t = self.spectral_tail(f);
        if t > SMOOTHNESS_TOLERANCE {
            Err(Error::NotSmooth(t))
        } else {
            Ok(())
        }
    }

    /// Periodic `L²` norm.
    pub fn l2(&self, f: &[f64]) -> f64 {
        (f.iter().map(|x| x * x).sum::<f64>() * self.dx()).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_derivative_is_exact_for_resolved_modes() {
        let s = Slab::new(32).unwrap();
        let f = s.field(|x| (3.0 * x).sin() + 0.5 * (x).cos());
        let d = s.derivative(&f);
        for i in 0..32 {
            let x = s.x(i);
            assert!((d[i] - (3.0 * (3.0 * x).cos() - 0.5 * x.sin())).abs() < 1e-12);
        }
        assert!(s.spectral_tail(&f) < 1e-25);
    }

    #[test]
    fn central_difference_is_second_order() {
        let e = |n: usize| {
            let s = Slab::with_mode(n, GradientMode::CentralDifference).unwrap();
            let d = s.derivative(&s.field(f64::sin));
            (0..n).map(|i| (d[i] - s.x(i).cos()).abs()).fold(0.0, f64::max)
        };
        let r = e(32) / e(64);
        assert!((r - 4.0).abs() < 0.1);
    }

    #[test]
    fn rough_fields_are_flagged() {
        let s = Slab::new(32).unwrap();
        let f: Vec<f64> = (0..32).map(|i| if i < 16 { 1.0 } else { 0.0 }).collect();
        assert!(matches!(s.check_smooth(&f), Err(Error::NotSmooth(_))));
    }
}
