//! Tensor-product velocity grids carrying the Gaussian-weighted brackets.
//!
//! Every velocity field is a slice indexed by grid node. The measure of node
//! `k` is `w_k * M_k`, where `M = M(1,0,1)`, so `inner(f, g)` is the
//! quadrature of `∫ f g M dv`.

use std::f64::consts::PI;

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::quadrature::{gauss_hermite, gauss_legendre};

pub type Vec3 = [f64; 3];

/// One-dimensional rule used on each velocity axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    GaussHermite,
    UniformTrapezoid,
}

/// Product rule on the unit sphere: Gauss–Legendre in `cos θ`, uniform azimuth.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
    antipode: Vec<usize>,
}

impl SphereRule {
    /// `n_polar × n_azimuth` nodes; the azimuth count must be even so the rule
    /// is closed under `σ ↦ −σ`.
    pub fn product(n_polar: usize, n_azimuth: usize) -> Result<Self> {
        if n_polar == 0 || n_azimuth == 0 {
            return Err(Error::Config("empty sphere rule".into()));
        }
        if n_azimuth % 2 != 0 {
            return Err(Error::Config("azimuth count must be even".into()));
        }
        let (ct, wt) = gauss_legendre(n_polar);
        let dphi = 2.0 * PI / n_azimuth as f64;
        let mut nodes = Vec::with_capacity(n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(n_polar * n_azimuth);
        let mut antipode = Vec::with_capacity(n_polar * n_azimuth);
        for (i, (&c, &w)) in ct.iter().zip(&wt).enumerate() {
            let s = (1.0 - c * c).sqrt();
            for j in 0..n_azimuth {
                let phi = dphi * (j as f64 + 0.5);
                nodes.push([s * phi.cos(), s * phi.sin(), c]);
                weights.push(w * dphi);
                let jp = (j + n_azimuth / 2) % n_azimuth;
                antipode.push((n_polar - 1 - i) * n_azimuth + jp);
            }
        }
        Ok(Self { nodes, weights, antipode })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of `−σ_m`.
    pub fn antipode(&self, m: usize) -> usize {
        self.antipode[m]
    }
}

/// Trilinear interpolation stencil: eight (node, weight) pairs, weights sum to 1.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub idx: [usize; 8],
    pub w: [f64; 8],
}

/// One collision configuration `(v_k, v_l, σ_m)` with its post-collision pair.
#[derive(Debug, Clone, Copy)]
pub struct CollisionTriple {
    pub k: usize,
    pub l: usize,
    pub m: usize,
    pub v: Vec3,
    pub v1: Vec3,
    pub sigma: Vec3,
    pub v_post: Vec3,
    pub v1_post: Vec3,
}

/// Raw moments `(∫f, ∫vf, ∫|v|²f)` of a number density.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RawMoments {
    pub mass: f64,
    pub momentum: Vec3,
    pub energy: f64,
}

impl RawMoments {
    pub fn as_array(&self) -> [f64; 5] {
        [self.mass, self.momentum[0], self.momentum[1], self.momentum[2], self.energy]
    }

    pub fn max_abs(&self) -> f64 {
        self.as_array().iter().fold(0.0f64, |a, b| a.max(b.abs()))
    }
}

/// Discrete velocity space.
///
/// Invariants: weights are positive, the node set is closed under `v ↦ −v`,
/// `Σ w M = 1` within `tol_norm`, and the sphere weights sum to `4π`.
#[derive(Debug, Clone)]
pub struct VelocityGrid {
    rule: Rule,
    n: usize,
    axis: Vec<f64>,
    axis_measure: Vec<f64>,
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
    maxwell: Vec<f64>,
    measure: Vec<f64>,
    sphere: SphereRule,
    truncation_radius: f64,
    tol_norm: f64,
    gram_inv: Matrix5<f64>,
}

/// Standard normal density in one dimension.
fn gauss1(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// The five collision invariants `1, v, |v|²` at `v`.
#[inline]
pub fn invariants(v: &Vec3) -> [f64; 5] {
    [1.0, v[0], v[1], v[2], v[0] * v[0] + v[1] * v[1] + v[2] * v[2]]
}

#[inline]
pub(crate) fn norm2(v: &Vec3) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

/// Post-collision velocities for the σ-representation.
#[inline]
pub fn post_collision(v: &Vec3, v1: &Vec3, sigma: &Vec3) -> (Vec3, Vec3) {
    let r = 0.5 * ((v[0] - v1[0]).powi(2) + (v[1] - v1[1]).powi(2) + (v[2] - v1[2]).powi(2)).sqrt();
    let mut a = [0.0; 3];
    let mut b = [0.0; 3];
    for d in 0..3 {
        let c = 0.5 * (v[d] + v1[d]);
        a[d] = c + r * sigma[d];
        b[d] = c - r * sigma[d];
    }
    (a, b)
}

impl VelocityGrid {
    /// Builds a grid with the default 6×12 sphere rule.
    pub fn build(points_per_axis: usize, rule: Rule, truncation_radius: f64) -> Result<Self> {
        Self::build_with_sphere(points_per_axis, rule, truncation_radius, SphereRule::product(6, 12)?)
    }

    pub fn build_with_sphere(
        points_per_axis: usize,
        rule: Rule,
        truncation_radius: f64,
        sphere: SphereRule,
    ) -> Result<Self> {
        let n = points_per_axis;
        if n < 4 {
            return Err(Error::Config(format!("points_per_axis = {n} < 4")));
        }
        if sphere.is_empty() {
            return Err(Error::Config("empty sphere rule".into()));
        }
        let (axis, axis_measure, radius, tol_norm) = match rule {
            Rule::GaussHermite => {
                let (x, w) = gauss_hermite(n);
                let axis: Vec<f64> = x.iter().map(|x| x * 2f64.sqrt()).collect();
                let mu: Vec<f64> = w.iter().map(|w| w / PI.sqrt()).collect();
                let r = axis[n - 1];
                (axis, mu, r, 1e-12)
            }
            Rule::UniformTrapezoid => {
                if !(truncation_radius > 0.0) || !truncation_radius.is_finite() {
                    return Err(Error::Config(format!("truncation_radius = {truncation_radius}")));
                }
                let h = 2.0 * truncation_radius / (n - 1) as f64;
                let axis: Vec<f64> = (0..n).map(|i| -truncation_radius + h * i as f64).collect();
                let mut mu: Vec<f64> = axis
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        let t = if i == 0 || i == n - 1 { 0.5 * h } else { h };
                        t * gauss1(x)
                    })
                    .collect();
                // Per-axis renormalisation: the coarse trapezoid sum misses the
                // Gaussian mass by O(exp(-2π²/h²)).
                let s: f64 = mu.iter().sum();
                mu.iter_mut().for_each(|m| *m /= s);
                (axis, mu, truncation_radius, 1e-6)
            }
        };
        for i in 0..n {
            let j = n - 1 - i;
            if (axis[i] + axis[j]).abs() > 1e-12 * (1.0 + axis[i].abs())
                || (axis_measure[i] - axis_measure[j]).abs() > 1e-12 * axis_measure[i]
            {
                return Err(Error::Config("axis rule is not symmetric".into()));
            }
            if !(axis_measure[i] > 0.0) {
                return Err(Error::Config("non-positive quadrature weight".into()));
            }
        }
        let total = n * n * n;
        let mut nodes = Vec::with_capacity(total);
        let mut measure = Vec::with_capacity(total);
        let mut maxwell = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let v = [axis[i], axis[j], axis[l]];
                    let m = gauss1(v[0]) * gauss1(v[1]) * gauss1(v[2]);
                    let mu = axis_measure[i] * axis_measure[j] * axis_measure[l];
                    nodes.push(v);
                    maxwell.push(m);
                    measure.push(mu);
                    weights.push(mu / m);
                }
            }
        }
        let mut gram = Matrix5::<f64>::zeros();
        for (v, mu) in nodes.iter().zip(&measure) {
            let p = invariants(v);
            for a in 0..5 {
                for b in 0..5 {
                    gram[(a, b)] += mu * p[a] * p[b];
                }
            }
        }
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Config("singular invariant Gram matrix".into()))?;
        let grid = Self {
            rule,
            n,
            axis,
            axis_measure,
            nodes,
            weights,
            maxwell,
            measure,
            sphere,
            truncation_radius: radius,
            tol_norm,
            gram_inv,
        };
        let mass: f64 = grid.measure.iter().sum();
        if (mass - 1.0).abs() > tol_norm {
            return Err(Error::Config(format!("Σ w M = {mass} outside tolerance")));
        }
        let area: f64 = grid.sphere.weights.iter().sum();
        if (area - 4.0 * PI).abs() > tol_norm.max(1e-12) * 4.0 * PI {
            return Err(Error::Config(format!("sphere weights sum to {area}")));
        }
        Ok(grid)
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn axis_measure(&self) -> &[f64] {
        &self.axis_measure
    }

    /// Quadrature weights `w_k` for `∫ · dv`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `M(v_k)`.
    pub fn maxwell_weights(&self) -> &[f64] {
        &self.maxwell
    }

    /// `μ_k = w_k M_k`, the weights of `⟨·⟩`.
    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn sphere(&self) -> &SphereRule {
        &self.sphere
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    /// Largest speed component on the grid.
    pub fn v_max(&self) -> f64 {
        self.axis[self.n - 1]
    }

    pub fn tol_norm(&self) -> f64 {
        self.tol_norm
    }

    /// Index of the node `−v_k`.
    pub fn negate_index(&self, k: usize) -> usize {
        let n = self.n;
        let (i, j, l) = (k / (n * n), (k / n) % n, k % n);
        ((n - 1 - i) * n + (n - 1 - j)) * n + (n - 1 - l)
    }

    /// Samples `f(v)` at every node.
    pub fn field(&self, f: impl Fn(&Vec3) -> f64) -> Vec<f64> {
        self.nodes.iter().map(f).collect()
    }

    /// `⟨f, g⟩ = Σ w_k M_k f_k g_k`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        check_len(self.len(), f.len())?;
        check_len(self.len(), g.len())?;
        Ok(self.dot(f, g))
    }

    /// `⟨f⟩ = Σ w_k M_k f_k`.
    pub fn mean(&self, f: &[f64]) -> Result<f64> {
        check_len(self.len(), f.len())?;
        Ok(self.measure.iter().zip(f).map(|(m, f)| m * f).sum())
    }

    #[inline]
    pub(crate) fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        let mut s = 0.0;
        for k in 0..f.len() {
            s += self.measure[k] * f[k] * g[k];
        }
        s
    }

    /// `(∫ f, ∫ v f, ∫ |v|² f)` for a number density `f`.
    pub fn raw_moments(&self, f: &[f64]) -> Result<RawMoments> {
        check_len(self.len(), f.len())?;
        let mut m = [0.0; 5];
        for k in 0..f.len() {
            let p = invariants(&self.nodes[k]);
            let wf = self.weights[k] * f[k];
            for a in 0..5 {
                m[a] += wf * p[a];
            }
        }
        Ok(RawMoments { mass: m[0], momentum: [m[1], m[2], m[3]], energy: m[4] })
    }

    /// `⟨φ_a g⟩` for the five invariants.
    pub fn invariant_moments(&self, g: &[f64]) -> [f64; 5] {
        let mut m = [0.0; 5];
        for k in 0..g.len() {
            let p = invariants(&self.nodes[k]);
            let wg = self.measure[k] * g[k];
            for a in 0..5 {
                m[a] += wg * p[a];
            }
        }
        m
    }

    /// Coefficients `c` with `P g = Σ c_a φ_a` in the basis `(1, v, |v|²)`.
    pub fn hydro_coefficients(&self, g: &[f64]) -> [f64; 5] {
        let b = Vector5::from(self.invariant_moments(g));
        let c = self.gram_inv * b;
        [c[0], c[1], c[2], c[3], c[4]]
    }

    /// Evaluates `Σ c_a φ_a` at every node.
    pub fn from_hydro_coefficients(&self, c: &[f64; 5]) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|v| {
                let p = invariants(v);
                (0..5).map(|a| c[a] * p[a]).sum()
            })
            .collect()
    }

    /// `⟨·,·⟩`-orthogonal projection onto `span{1, v, |v|²}`.
    pub fn project_hydro(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), g.len())?;
        Ok(self.from_hydro_coefficients(&self.hydro_coefficients(g)))
    }

    /// `g − P g`.
    pub fn project_ortho(&self, g: &[f64]) -> Result<Vec<f64>> {
        let p = self.project_hydro(g)?;
        Ok(g.iter().zip(&p).map(|(g, p)| g - p).collect())
    }

    /// Row `a` of the projection: `c_a(g) = Σ_k row_k g_k`.
    pub(crate) fn hydro_row(&self, a: usize) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&self.measure)
            .map(|(v, m)| {
                let p = invariants(v);
                m * (0..5).map(|b| self.gram_inv[(a, b)] * p[b]).sum::<f64>()
            })
            .collect()
    }

    pub(crate) fn project_ortho_in_place(&self, g: &mut [f64]) {
        let c = self.hydro_coefficients(g);
        for (k, v) in self.nodes.iter().enumerate() {
            let p = invariants(v);
            g[k] -= (0..5).map(|a| c[a] * p[a]).sum::<f64>();
        }
    }

    /// Locates `x` on the axis: returns `(i, t)` with the value interpolated
    /// between nodes `i` and `i + 1`. Outside the box the end value is held.
    #[inline]
    fn locate(&self, x: f64) -> (usize, f64) {
        let a = &self.axis;
        let n = self.n;
        if x <= a[0] {
            return (0, 0.0);
        }
        if x >= a[n - 1] {
            return (n - 2, 1.0);
        }
        let (mut lo, mut hi) = (0usize, n - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if a[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, (x - a[lo]) / (a[lo + 1] - a[lo]))
    }

    /// Whether `x` lies in the closed node box, where the stencil interpolates.
    #[inline]
    pub fn contains(&self, x: &Vec3) -> bool {
        let (lo, hi) = (self.axis[0], self.axis[self.n - 1]);
        x.iter().all(|&c| lo <= c && c <= hi)
    }

    /// Trilinear stencil at an arbitrary velocity; clamped outside the box.
    #[inline]
    pub fn stencil(&self, x: &Vec3) -> Stencil {
        let n = self.n;
        let (i, ti) = self.locate(x[0]);
        let (j, tj) = self.locate(x[1]);
        let (l, tl) = self.locate(x[2]);
        let mut idx = [0usize; 8];
        let mut w = [0.0; 8];
        let mut c = 0;
        for (di, wi) in [(0, 1.0 - ti), (1, ti)] {
            for (dj, wj) in [(0, 1.0 - tj), (1, tj)] {
                for (dl, wl) in [(0, 1.0 - tl), (1, tl)] {
                    idx[c] = ((i + di) * n + (j + dj)) * n + (l + dl);
                    w[c] = wi * wj * wl;
                    c += 1;
                }
            }
        }
        Stencil { idx, w }
    }

    /// Trilinear interpolation of a nodal field.
    #[inline]
    pub fn interpolate(&self, field: &[f64], x: &Vec3) -> f64 {
        let s = self.stencil(x);
        (0..8).map(|c| s.w[c] * field[s.idx[c]]).sum()
    }

    /// `⟨⟨F⟩⟩ = Σ μ_k μ_l ω_m b F(v_k, v_l, σ_m)`.
    pub fn collision_bracket(&self, kernel_b: f64, mut f: impl FnMut(&CollisionTriple) -> f64) -> Result<f64> {
        if self.sphere.is_empty() {
            return Err(Error::Config("empty sphere rule".into()));
        }
        if !(kernel_b > 0.0) {
            return Err(Error::Config(format!("kernel constant b = {kernel_b}")));
        }
        let mut total = 0.0;
        for k in 0..self.len() {
            let v = self.nodes[k];
            let mut row = 0.0;
            for l in 0..self.len() {
                let v1 = self.nodes[l];
                let mut s = 0.0;
                for (m, sigma) in self.sphere.nodes.iter().enumerate() {
                    let (vp, v1p) = post_collision(&v, &v1, sigma);
                    let t = CollisionTriple { k, l, m, v, v1, sigma: *sigma, v_post: vp, v1_post: v1p };
                    s += self.sphere.weights[m] * f(&t);
                }
                row += self.measure[l] * s;
            }
            total += self.measure[k] * row;
        }
        Ok(kernel_b * total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `E[x^p]` for a standard normal variable.
    fn gauss_moment_1d(p: u32) -> f64 {
        if p % 2 == 1 {
            0.0
        } else {
            (1..p).step_by(2).map(|k| k as f64).product()
        }
    }

    #[test]
    fn hermite_grids_are_exact_for_low_degree_monomials() {
        let n = 5;
        let g = VelocityGrid::build(n, Rule::GaussHermite, 0.0).unwrap();
        for a in 0..5u32 {
            for b in 0..5u32 {
                for c in 0..3u32 {
                    if a.max(b).max(c) > 2 * n as u32 - 1 {
                        continue;
                    }
                    let f = g.field(|v| v[0].powi(a as i32) * v[1].powi(b as i32) * v[2].powi(c as i32));
                    let q = g.mean(&f).unwrap();
                    let e = gauss_moment_1d(a) * gauss_moment_1d(b) * gauss_moment_1d(c);
                    assert!((q - e).abs() < 1e-11 * e.max(1.0), "{a}{b}{c}: {q} vs {e}");
                }
            }
        }
    }

    #[test]
    fn build_examples() {
        let g4 = VelocityGrid::build(4, Rule::GaussHermite, 0.0).unwrap();
        assert_eq!(g4.len(), 64);
        let s: f64 = g4.weights().iter().zip(g4.maxwell_weights()).map(|(w, m)| w * m).sum();
        assert!((s - 1.0).abs() < 1e-14);

        let g24 = VelocityGrid::build(24, Rule::GaussHermite, 0.0).unwrap();
        let v4 = g24.field(|v| norm2(v).powi(2));
        // E|v|^4 = 3·3 + 6·1 = 15 for a 3D standard normal.
        assert!((g24.mean(&v4).unwrap() - 15.0).abs() < 1e-10);

        let gu = VelocityGrid::build(8, Rule::UniformTrapezoid, 6.0).unwrap();
        let s: f64 = gu.weights().iter().zip(gu.maxwell_weights()).map(|(w, m)| w * m).sum();
        assert!((0.999..=1.001).contains(&s));
    }

    #[test]
    fn rejects_bad_configurations() {
        assert!(VelocityGrid::build(3, Rule::GaussHermite, 0.0).is_err());
        assert!(VelocityGrid::build(8, Rule::UniformTrapezoid, 0.0).is_err());
        assert!(VelocityGrid::build(8, Rule::UniformTrapezoid, -1.0).is_err());
        assert!(SphereRule::product(0, 12).is_err());
        assert!(SphereRule::product(6, 11).is_err());
    }

    #[test]
    fn inner_examples() {
        let g = VelocityGrid::build(6, Rule::GaussHermite, 0.0).unwrap();
        let one = g.field(|_| 1.0);
        let v1 = g.field(|v| v[0]);
        let v2 = g.field(|v| v[1]);
        assert!((g.inner(&one, &one).unwrap() - 1.0).abs() < 1e-14);
        assert!(g.inner(&v1, &v2).unwrap().abs() < 1e-15);
        assert!((g.inner(&v1, &v1).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(g.inner(&one[1..], &one), Err(Error::Dimension { .. })));
    }

    #[test]
    fn raw_moment_examples() {
        let g = VelocityGrid::build(10, Rule::GaussHermite, 0.0).unwrap();
        let mx = |rho: f64, u: Vec3| {
            g.field(move |v| {
                let d = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
                rho * (2.0 * PI).powf(-1.5) * (-0.5 * norm2(&d)).exp()
            })
        };
        let m = g.raw_moments(&mx(1.0, [0.0; 3])).unwrap();
        assert!((m.mass - 1.0).abs() < 1e-12 && (m.energy - 3.0).abs() < 1e-12);
        let m = g.raw_moments(&mx(2.0, [0.0; 3])).unwrap();
        assert!((m.mass - 2.0).abs() < 1e-12 && (m.energy - 6.0).abs() < 1e-12);
        let m = g.raw_moments(&mx(1.0, [1.0, 0.0, 0.0])).unwrap();
        assert!((m.momentum[0] - 1.0).abs() < 1e-9 && (m.energy - 4.0).abs() < 1e-9);
        assert!(m.momentum[1].abs() < 1e-14);
    }

    #[test]
    fn projection_examples() {
        let g = VelocityGrid::build(6, Rule::GaussHermite, 0.0).unwrap();
        let f = g.field(|v| 1.0 + v[0]);
        let p = g.project_hydro(&f).unwrap();
        assert!(f.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12));

        let f = g.field(|v| v[0] * v[0]);
        let p = g.project_hydro(&f).unwrap();
        let want = g.field(|v| norm2(v) / 3.0);
        assert!(p.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));

        let f = g.field(|v| v[0].powi(3));
        let p = g.project_hydro(&f).unwrap();
        let want = g.field(|v| 3.0 * v[0]);
        assert!(p.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn bracket_examples() {
        let g = VelocityGrid::build(4, Rule::GaussHermite, 0.0).unwrap();
        let one = g.collision_bracket(1.0, |_| 1.0).unwrap();
        assert!((one - 4.0 * PI).abs() < 1e-12);
        let vv = g
            .collision_bracket(1.0, |t| t.v[0] * t.v1[0] + t.v[1] * t.v1[1] + t.v[2] * t.v1[2])
            .unwrap();
        assert!(vv.abs() < 1e-12);
        let e = g.collision_bracket(1.0, |t| norm2(&t.v)).unwrap();
        assert!((e - 12.0 * PI).abs() < 1e-11);
        assert!(g.collision_bracket(0.0, |_| 1.0).is_err());
    }

    #[test]
    fn negation_and_antipodes() {
        let g = VelocityGrid::build(5, Rule::GaussHermite, 0.0).unwrap();
        for k in 0..g.len() {
            let a = g.nodes()[k];
            let b = g.nodes()[g.negate_index(k)];
            assert!((0..3).all(|d| (a[d] + b[d]).abs() < 1e-14));
        }
        let s = g.sphere();
        for m in 0..s.len() {
            let a = s.nodes[m];
            let b = s.nodes[s.antipode(m)];
            assert!((0..3).all(|d| (a[d] + b[d]).abs() < 1e-14));
            assert!((s.weights[m] - s.weights[s.antipode(m)]).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolation_reproduces_linear_functions_inside_the_box() {
        let g = VelocityGrid::build(8, Rule::GaussHermite, 0.0).unwrap();
        let f = g.field(|v| 1.0 + 2.0 * v[0] - v[1] + 0.5 * v[2]);
        let x = [0.3, -1.1, 2.0];
        let y = g.interpolate(&f, &x);
        assert!((y - (1.0 + 0.6 + 1.1 + 1.0)).abs() < 1e-12);
    }
}
