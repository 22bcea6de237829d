//! Collision operators, the linearised operator `𝓛`, the `Â`, `B̂` solves and
//! the dissipation functionals.
//!
//! Two kernels are provided. `Bgk` relaxes towards the discrete Maxwellian
//! with the same grid moments; its linearisation is `ν(I − P)`. `MaxwellMolecules`
//! is the constant-`b` binary kernel by brute-force quadrature, meant for
//! grids up to about `12³`.

mod maxwell;

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::maxwellian::{match_moments, tensor_a, tensor_b, DiscreteMaxwellian, SYM_PAIRS};
use crate::velocity_grid::{post_collision, VelocityGrid};

use maxwell::{energy_row, for_each_pair, post_value, FullOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    Bgk,
    MaxwellMolecules,
}

pub const SOLVE_TOLERANCE: f64 = 1e-10;
pub const SOLVE_MAX_ITERATIONS: usize = 10_000;
/// Relative size of `⟨h, φ⟩` above which `solve_hat` rejects its input.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-8;

/// `Â` (six independent entries, ordered as [`SYM_PAIRS`]) and `B̂`.
#[derive(Debug, Clone)]
pub struct HatTensors {
    pub a_hat: [Vec<f64>; 6],
    pub b_hat: [Vec<f64>; 3],
    pub mu: f64,
    pub kappa: f64,
    /// Largest solver residual in `L²(M)`.
    pub residual: f64,
    /// `¼⟨⟨Δh_a Δh_b⟩⟩` for the binary kernel, filled on first use.
    gram: OnceLock<[[f64; 9]; 9]>,
}

impl HatTensors {
    /// `Â_{ij}` at node `k`.
    pub fn a_entry(&self, i: usize, j: usize, k: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let p = SYM_PAIRS.iter().position(|&q| q == (i, j)).expect("index pair below 3");
        self.a_hat[p][k]
    }
}

#[derive(Debug, Clone)]
pub struct HatSolution {
    pub value: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug)]
pub struct CollisionKernel {
    mode: KernelMode,
    b_const: f64,
    relaxation_rate: f64,
    grid: Arc<VelocityGrid>,
    full: OnceLock<FullOperator>,
    hats: OnceLock<HatTensors>,
}

impl CollisionKernel {
    pub fn bgk(grid: Arc<VelocityGrid>, relaxation_rate: f64) -> Result<Self> {
        if !(relaxation_rate > 0.0) || !relaxation_rate.is_finite() {
            return Err(Error::Config(format!("relaxation rate {relaxation_rate}")));
        }
        Ok(Self::raw(KernelMode::Bgk, 0.0, relaxation_rate, grid))
    }

    pub fn maxwell_molecules(grid: Arc<VelocityGrid>, b_const: f64) -> Result<Self> {
        if !(b_const > 0.0) || !b_const.is_finite() {
            return Err(Error::Config(format!("cross-section constant {b_const}")));
        }
        if grid.sphere().is_empty() {
            return Err(Error::Config("empty sphere rule".into()));
        }
        Ok(Self::raw(KernelMode::MaxwellMolecules, b_const, 0.0, grid))
    }

    fn raw(mode: KernelMode, b_const: f64, relaxation_rate: f64, grid: Arc<VelocityGrid>) -> Self {
        Self { mode, b_const, relaxation_rate, grid, full: OnceLock::new(), hats: OnceLock::new() }
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn b_const(&self) -> f64 {
        self.b_const
    }

    pub fn relaxation_rate(&self) -> f64 {
        self.relaxation_rate
    }

    pub fn grid(&self) -> &Arc<VelocityGrid> {
        &self.grid
    }

    fn full(&self) -> Result<&FullOperator> {
        if let Some(f) = self.full.get() {
            return Ok(f);
        }
        let built = FullOperator::build(&self.grid, self.b_const)?;
        Ok(self.full.get_or_init(|| built))
    }

    /// `G = f/M`, rejecting negative (or, if `strict`, zero) values.
    fn ratio(&self, f: &[f64], strict: bool) -> Result<Vec<f64>> {
        check_len(self.grid.len(), f.len())?;
        let mut g = Vec::with_capacity(f.len());
        for (k, (&x, &m)) in f.iter().zip(self.grid.maxwell_weights()).enumerate() {
            if !x.is_finite() || x < 0.0 || (strict && x == 0.0) {
                return Err(Error::Positivity(format!("f = {x} at node {k}")));
            }
            g.push(x / m);
        }
        Ok(g)
    }

    /// Discrete Maxwellian matching the moments of `1 + x` (fluctuation form).
    pub fn equilibrium(&self, x: &[f64]) -> Result<DiscreteMaxwellian> {
        check_len(self.grid.len(), x.len())?;
        match_moments(&self.grid, &self.grid.invariant_moments(x))
    }

    /// `C(f, f)`.
    pub fn collide(&self, f: &[f64]) -> Result<Vec<f64>> {
        let g = self.ratio(f, false)?;
        let m = self.grid.maxwell_weights();
        match self.mode {
            KernelMode::Bgk => {
                let x: Vec<f64> = g.iter().map(|v| v - 1.0).collect();
                let e = self.equilibrium(&x)?;
                Ok((0..f.len()).map(|k| self.relaxation_rate * m[k] * (e.em1[k] - x[k])).collect())
            }
            KernelMode::MaxwellMolecules => {
                let q = self.bilinear_q(&g, &g)?;
                Ok(q.iter().zip(m).map(|(a, b)| a * b).collect())
            }
        }
    }

    /// `𝓛 g`.
    pub fn linearized_l(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_len(self.grid.len(), g.len())?;
        match self.mode {
            KernelMode::Bgk => {
                let mut out = self.grid.project_ortho(g)?;
                out.iter_mut().for_each(|v| *v *= self.relaxation_rate);
                Ok(out)
            }
            KernelMode::MaxwellMolecules => {
                let mut out = self.full()?.apply(g);
                self.grid.project_ortho_in_place(&mut out);
                Ok(out)
            }
        }
    }

    /// `Q(f, g) = C(Mf, Mg)/M`. The binary form is already symmetric in its
    /// arguments; the BGK form is the second-order term of the relaxation,
    /// `(ν/2) P^⊥(Pf · Pg)`.
    pub fn bilinear_q(&self, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        check_len(self.grid.len(), f.len())?;
        check_len(self.grid.len(), g.len())?;
        let mut out = match self.mode {
            KernelMode::Bgk => {
                let pf = self.grid.project_hydro(f)?;
                let pg = self.grid.project_hydro(g)?;
                pf.iter().zip(&pg).map(|(a, b)| 0.5 * self.relaxation_rate * a * b).collect()
            }
            KernelMode::MaxwellMolecules => maxwell::strong_q(&self.grid, self.b_const, f, g),
        };
        // Interpolation breaks exact conservation; remove the invariant part.
        self.grid.project_ortho_in_place(&mut out);
        Ok(out)
    }

    /// `½(Q(f,g) + Q(g,f))`.
    pub fn bilinear_q_sym(&self, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let a = self.bilinear_q(f, g)?;
        let b = self.bilinear_q(g, f)?;
        Ok(a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect())
    }

    fn check_orthogonal(&self, h: &[f64]) -> Result<()> {
        let norm = self.grid.inner(h, h)?.sqrt();
        let m = self.grid.invariant_moments(h);
        // ‖φ‖ for 1, v_i, |v|² under the Gaussian measure: 1, 1, √15.
        let scale = [1.0, 1.0, 1.0, 1.0, 15f64.sqrt()];
        let worst = (0..5).map(|a| m[a].abs() / scale[a]).fold(0.0, f64::max);
        if worst > ORTHOGONALITY_TOLERANCE * norm.max(f64::MIN_POSITIVE) {
            return Err(Error::NotOrthogonal(worst / norm.max(f64::MIN_POSITIVE)));
        }
        Ok(())
    }

    /// The solution `ĥ ∈ 𝒩^⊥` of `𝓛ĥ = h`.
    pub fn solve_hat(&self, h: &[f64]) -> Result<HatSolution> {
        check_len(self.grid.len(), h.len())?;
        self.check_orthogonal(h)?;
        match self.mode {
            KernelMode::Bgk => Ok(HatSolution {
                value: h.iter().map(|v| v / self.relaxation_rate).collect(),
                residual: 0.0,
                iterations: 0,
            }),
            KernelMode::MaxwellMolecules => {
                let (mut value, residual, iterations) =
                    self.full()?.solve(h, SOLVE_TOLERANCE, SOLVE_MAX_ITERATIONS)?;
                self.grid.project_ortho_in_place(&mut value);
                Ok(HatSolution { value, residual, iterations })
            }
        }
    }

    /// `Â`, `B̂`, and `μ = ⟨A:Â⟩/10`, `κ = (2/15)⟨B·B̂⟩`; computed once.
    pub fn hat_tensors(&self) -> Result<&HatTensors> {
        if let Some(h) = self.hats.get() {
            return Ok(h);
        }
        let grid = &self.grid;
        let mut residual: f64 = 0.0;
        let mut a_hat: [Vec<f64>; 6] = Default::default();
        let mut a_fields: [Vec<f64>; 6] = Default::default();
        for (p, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            // Project the discrete A: its quadrature moments vanish only to rounding.
            a_fields[p] = grid.project_ortho(&grid.field(|v| tensor_a(v)[i][j]))?;
            let s = self.solve_hat(&a_fields[p])?;
            residual = residual.max(s.residual);
            a_hat[p] = s.value;
        }
        let mut b_hat: [Vec<f64>; 3] = Default::default();
        let mut kappa = 0.0;
        for i in 0..3 {
            let b = grid.project_ortho(&grid.field(|v| tensor_b(v)[i]))?;
            let s = self.solve_hat(&b)?;
            residual = residual.max(s.residual);
            kappa += grid.inner(&b, &s.value)?;
            b_hat[i] = s.value;
        }
        let mut a_contract = 0.0;
        for (p, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            let mult = if i == j { 1.0 } else { 2.0 };
            a_contract += mult * grid.inner(&a_fields[p], &a_hat[p])?;
        }
        let hats = HatTensors { a_hat, b_hat, mu: a_contract / 10.0, kappa: 2.0 * kappa / 15.0, residual, gram: OnceLock::new() };
        Ok(self.hats.get_or_init(|| hats))
    }

    /// `(μ, κ)` at `(ρ, θ) = (1, 1)`.
    pub fn transport_coefficients(&self) -> Result<(f64, f64)> {
        let h = self.hat_tensors()?;
        Ok((h.mu, h.kappa))
    }

    /// Smallest eigenvalue of `𝓛` on `𝒩^⊥`.
    pub fn spectral_gap(&self) -> Result<f64> {
        match self.mode {
            KernelMode::Bgk => Ok(self.relaxation_rate),
            KernelMode::MaxwellMolecules => Ok(self.full()?.nonzero_spectrum()[0]),
        }
    }

    /// Largest `|S φ|` over the invariants before the kernel is pinned; a
    /// measure of how far interpolation is from exact conservation.
    pub fn kernel_defect(&self) -> Result<f64> {
        match self.mode {
            KernelMode::Bgk => Ok(0.0),
            KernelMode::MaxwellMolecules => Ok(self.full()?.kernel_defect),
        }
    }

    /// Solves `(I + τ𝓛) x = r` (full kernel only), for implicit collision steps.
    pub fn resolvent(&self, tau: f64) -> Result<Resolvent> {
        match self.mode {
            KernelMode::Bgk => Ok(Resolvent { factor: None, sqrt_mu: Vec::new(), scale: 1.0 / (1.0 + tau * self.relaxation_rate) }),
            KernelMode::MaxwellMolecules => {
                let full = self.full()?;
                Ok(Resolvent { factor: Some(full.resolvent(tau)?), sqrt_mu: full.sqrt_mu.clone(), scale: 1.0 })
            }
        }
    }

    /// `D(f)`. BGK: `ν ∫ (f − M_f) log(f/M_f)`; binary kernel: the quadruple
    /// integral `¼⟨⟨(G'G'₁ − GG₁) log(G'G'₁/(GG₁))⟩⟩`.
    pub fn entropy_dissipation(&self, f: &[f64]) -> Result<f64> {
        let g = self.ratio(f, true)?;
        match self.mode {
            KernelMode::Bgk => {
                let x: Vec<f64> = g.iter().map(|v| v - 1.0).collect();
                let e = self.equilibrium(&x)?;
                let mu = self.grid.measure();
                Ok(self.relaxation_rate
                    * (0..g.len())
                        .map(|k| mu[k] * (x[k] - e.em1[k]) * (g[k].ln() - e.em1[k].ln_1p()))
                        .sum::<f64>())
            }
            KernelMode::MaxwellMolecules => {
                let c4 = dot(&energy_row(&self.grid), &g);
                let mut d = 0.0;
                let mut bad = None;
                for_each_pair(&self.grid, self.b_const, |p| {
                    let y = g[p.k] * g[p.l];
                    let yp = post_value(&p.post, p.defect, &g, c4) * post_value(&p.post1, p.defect1, &g, c4);
                    if !(yp > 0.0) {
                        bad = Some(yp);
                    }
                    d += p.weight * (yp - y) * (yp / y).ln();
                });
                match bad {
                    Some(yp) => Err(Error::Positivity(format!("post-collision product {yp}"))),
                    None => Ok(0.25 * d),
                }
            }
        }
    }

    /// `q_ε = (G'G'₁ − GG₁)/ε²` with `G = f/M`, plus the exact expansion of
    /// `D(f)/ε⁴` around `¼⟨⟨q²⟩⟩`.
    pub fn q_field(&self, f: &[f64], epsilon: f64) -> Result<QField> {
        if self.mode != KernelMode::MaxwellMolecules {
            return Err(Error::Unavailable("q field needs the binary kernel".into()));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon {epsilon}")));
        }
        let g = self.ratio(f, true)?;
        let x: Vec<f64> = g.iter().map(|v| v - 1.0).collect();
        let c4 = dot(&energy_row(&self.grid), &x);
        let e2 = epsilon * epsilon;
        let mut bad = None;
        let mut q = Vec::new();
        let (mut d, mut q2, mut r11, mut r3m, mut r4m) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for_each_pair(&self.grid, self.b_const, |p| {
            let (xk, xl) = (x[p.k], x[p.l]);
            let (xp, xp1) = (post_value(&p.post, p.defect, &x, c4), post_value(&p.post1, p.defect1, &x, c4));
            if !((1.0 + xp) * (1.0 + xp1) > 0.0) {
                bad = Some((1.0 + xp) * (1.0 + xp1));
            }
            let big_x = xk + xl + xk * xl;
            let big_xp = xp + xp1 + xp * xp1;
            let qq = (big_xp - big_x) / e2;
            let (lp, l0) = (big_xp.ln_1p(), big_x.ln_1p());
            let r3 = lp - big_xp + 0.5 * big_xp * big_xp;
            let r4 = l0 - big_x + 0.5 * big_x * big_x;
            let w = 0.25 * p.weight;
            d += w * qq * (lp - l0) / e2;
            q2 += w * qq * qq;
            r11 += w * (-0.5 * qq * qq * (big_xp + big_x) + qq * (r3 - r4) / e2);
            r3m += w * (qq * r3).abs() / e2;
            r4m += w * (qq * r4).abs() / e2;
            q.push(qq);
        });
        if let Some(yp) = bad {
            return Err(Error::Positivity(format!("post-collision product {yp}")));
        }
        Ok(QField {
            b_const: self.b_const,
            epsilon,
            q,
            d_over_eps4: d,
            quarter_q2: q2,
            r11,
            r3: r3m,
            r4: r4m,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Factorised `(I + τ𝓛)^{-1}`.
#[derive(Debug)]
pub struct Resolvent {
    factor: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    sqrt_mu: Vec<f64>,
    scale: f64,
}

impl Resolvent {
    /// For BGK the resolvent is applied to the `𝒩^⊥` part only; callers pass
    /// that part.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        match &self.factor {
            None => r.iter().map(|v| v * self.scale).collect(),
            Some(c) => {
                let z = nalgebra::DVector::from_iterator(r.len(), r.iter().zip(&self.sqrt_mu).map(|(a, s)| a * s));
                let y = c.solve(&z);
                y.iter().zip(&self.sqrt_mu).map(|(a, s)| a / s).collect()
            }
        }
    }
}

/// `q_ε` on the halved collision samples, with the terms of the dissipation
/// expansion `D/ε⁴ = ¼⟨⟨q²⟩⟩ + R₁₁` evaluated in the same pass.
#[derive(Debug, Clone)]
pub struct QField {
    b_const: f64,
    pub epsilon: f64,
    q: Vec<f64>,
    pub d_over_eps4: f64,
    pub quarter_q2: f64,
    pub r11: f64,
    /// `¼⟨⟨|q r₃|⟩⟩/ε²` and `¼⟨⟨|q r₄|⟩⟩/ε²`, the cubic-remainder contributions.
    pub r3: f64,
    pub r4: f64,
}

impl QField {
    pub fn values(&self) -> &[f64] {
        &self.q
    }

    /// `D/ε⁴ − ¼⟨⟨q²⟩⟩ − R₁₁`.
    pub fn closure(&self) -> f64 {
        self.d_over_eps4 - self.quarter_q2 - self.r11
    }

    /// `⟨⟨h(v, v₁) q⟩⟩` for `h` symmetric in its two velocity indices.
    pub fn bracket(&self, grid: &VelocityGrid, mut h: impl FnMut(usize, usize) -> f64) -> f64 {
        let mut it = self.q.iter();
        let mut s = 0.0;
        for_each_pair_weights(grid, self.b_const, |k, l, w| {
            let q = *it.next().expect("q matches the grid it was built on");
            s += w * h(k, l) * q;
        });
        s
    }

    /// `⟨⟨φ q⟩⟩` for the five invariants (symmetrised in `v ↔ v₁`).
    pub fn invariant_brackets(&self, grid: &VelocityGrid) -> [f64; 5] {
        let phi: Vec<[f64; 5]> = grid.nodes().iter().map(crate::velocity_grid::invariants).collect();
        let mut out = [0.0; 5];
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.bracket(grid, |k, l| 0.5 * (phi[k][a] + phi[l][a]));
        }
        out
    }

    /// `(⟨⟨Â q⟩⟩, ⟨⟨B̂ q⟩⟩)`, entries of `Â` ordered as [`SYM_PAIRS`], in the
    /// pre/post antisymmetrised form `¼⟨⟨(Â + Â₁ − Â' − Â'₁) q⟩⟩`. In the
    /// continuum this equals `½⟨⟨(Â + Â₁) q⟩⟩`; on the grid only this form is
    /// paired with the weak form of `𝓛`.
    pub fn hat_brackets(&self, grid: &VelocityGrid, hats: &HatTensors) -> ([f64; 6], [f64; 3]) {
        let (x, _) = self.hat_moments(grid, hats);
        (std::array::from_fn(|p| x[p]), std::array::from_fn(|i| x[6 + i]))
    }

    /// Brackets `X_a = ¼⟨⟨Δh_a q⟩⟩` and Gram matrix `G_ab = ¼⟨⟨Δh_a Δh_b⟩⟩`
    /// for `h = (Â entries, B̂ entries)`, `Δh = h + h₁ − h' − h'₁`.
    fn hat_moments(&self, grid: &VelocityGrid, hats: &HatTensors) -> ([f64; 9], [[f64; 9]; 9]) {
        let fields = hat_fields(hats);
        let c4 = energy_projections(grid, &fields);
        // X is linear in h: scatter q onto the nodes once, then contract.
        let mut z = vec![0.0; grid.len()];
        let mut zc = 0.0;
        let mut it = self.q.iter();
        for_each_pair(grid, self.b_const, |p| {
            let c = 0.0625 * p.weight * *it.next().expect("q matches the grid it was built on");
            z[p.k] += c;
            z[p.l] += c;
            for s in [&p.post, &p.post1] {
                for (&i, &w) in s.idx.iter().zip(&s.w) {
                    z[i] -= c * w;
                }
            }
            zc += c * (p.defect + p.defect1);
        });
        let x = std::array::from_fn(|a| dot(&z, fields[a]) - zc * c4[a]);
        let gram = *hats.gram.get_or_init(|| hat_gram(grid, self.b_const, &fields, &c4));
        (x, gram)
    }

    /// `¼⟨⟨q²⟩⟩ − Xᵀ G⁺ X` with the brackets and Gram matrix of
    /// [`Self::hat_brackets`]. `G` is the discrete `⟨Â, 𝓛Â⟩ = ⟨Â, A⟩` (and
    /// the `B̂` block); for an isotropic `G` this is
    /// `¼⟨⟨q²⟩⟩ − (1/2μ)⟨⟨Âq⟩⟩:⟨⟨Âq⟩⟩ − (2/5κ)|⟨⟨B̂q⟩⟩|²`. Cauchy–Schwarz in the
    /// sample weights makes it nonnegative up to rounding.
    pub fn bgl_slack(&self, grid: &VelocityGrid, hats: &HatTensors) -> f64 {
        let (x, gram) = self.hat_moments(grid, hats);
        let g = nalgebra::SMatrix::<f64, 9, 9>::from_fn(|a, b| gram[a][b]);
        let xv = nalgebra::SVector::<f64, 9>::from_fn(|a, _| x[a]);
        // tr Â = 0 makes G singular; drop directions below rounding.
        let eig = g.symmetric_eigen();
        let top = eig.eigenvalues.amax();
        let mut proj = 0.0;
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            if l > 1e-12 * top {
                let c = eig.eigenvectors.column(k).dot(&xv);
                proj += c * c / l;
            }
        }
        self.quarter_q2 - proj
    }

    /// The printed form with the isotropic constants,
    /// `¼⟨⟨q²⟩⟩ − (1/2μ)⟨⟨Âq⟩⟩:⟨⟨Âq⟩⟩ − (2/5κ)|⟨⟨B̂q⟩⟩|²`.
    pub fn bgl_slack_isotropic(&self, grid: &VelocityGrid, hats: &HatTensors) -> f64 {
        let (a, b) = self.hat_brackets(grid, hats);
        let aa: f64 = SYM_PAIRS.iter().zip(&a).map(|(&(i, j), x)| if i == j { x * x } else { 2.0 * x * x }).sum();
        let bb: f64 = b.iter().map(|x| x * x).sum();
        self.quarter_q2 - aa / (2.0 * hats.mu) - 2.0 * bb / (5.0 * hats.kappa)
    }
}

fn hat_fields(hats: &HatTensors) -> Vec<&[f64]> {
    hats.a_hat.iter().chain(&hats.b_hat).map(|v| v.as_slice()).collect()
}

fn energy_projections(grid: &VelocityGrid, fields: &[&[f64]]) -> Vec<f64> {
    let row = energy_row(grid);
    fields.iter().map(|f| dot(f, &row)).collect()
}

fn hat_gram(grid: &VelocityGrid, b: f64, fields: &[&[f64]], c4: &[f64]) -> [[f64; 9]; 9] {
    let mut gram = [[0.0; 9]; 9];
    for_each_pair(grid, b, |p| {
        let w = 0.25 * p.weight;
        let d: [f64; 9] = std::array::from_fn(|a| {
            let f = fields[a];
            f[p.k] + f[p.l] - post_value(&p.post, p.defect, f, c4[a]) - post_value(&p.post1, p.defect1, f, c4[a])
        });
        for a in 0..9 {
            for b in a..9 {
                gram[a][b] += w * d[a] * d[b];
            }
        }
    });
    for a in 0..9 {
        for b in 0..a {
            gram[a][b] = gram[b][a];
        }
    }
    gram
}

/// Same samples and order as `for_each_pair`, without building stencils.
fn for_each_pair_weights(grid: &VelocityGrid, b: f64, mut f: impl FnMut(usize, usize, f64)) {
    let nodes = grid.nodes();
    let mu = grid.measure();
    let sphere = grid.sphere();
    for k in 0..grid.len() {
        for l in k..grid.len() {
            let pair = b * mu[k] * mu[l] * if l > k { 2.0 } else { 1.0 };
            for (sigma, w) in sphere.nodes.iter().zip(&sphere.weights) {
                let (vp, v1p) = post_collision(&nodes[k], &nodes[l], sigma);
                if grid.contains(&vp) && grid.contains(&v1p) {
                    f(k, l, pair * w);
                }
            }
        }
    }
}
