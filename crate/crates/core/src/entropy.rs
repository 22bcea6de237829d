//! Relative-entropy diagnostics for a kinetic trajectory against the fluid
//! Maxwellian `M_ε = ℳ(1 + ερ̃, εũ, 1 + εθ̃)`.
//!
//! Every remainder is evaluated from its defining expression. Whatever part of
//! a budget no named term accounts for is reported as a closure defect, so a
//! transcription error shows up as a large defect instead of vanishing into a
//! "leftover" term.
//!
//! Fields depend on `x₁` only, so `∇ = (∂, 0, 0)` and `(∇u)_{ij} = ∂_i u_j`
//! has a single non-zero row.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::boltzmann::KineticState;
use crate::cns::{stress_from_gradient, CnsModel, FluidState};
use crate::collision::{CollisionKernel, HatTensors, KernelMode};
use crate::error::{check_len, Error, Result};
use crate::maxwellian::{
    entropy_kernel, match_moments, tensor_a, tensor_b, Mat3, MaxwellianParams, SYM_PAIRS,
};
use crate::velocity_grid::{invariants, Vec3, VelocityGrid};

/// Symmetric 3×3 matrix stored as its [`SYM_PAIRS`] entries.
pub type Sym = [f64; 6];

/// Relative tolerance for matching observation times of paired trajectories.
pub const TIME_MATCH_TOLERANCE: f64 = 1e-9;

fn dot5(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn to_sym(m: &Mat3) -> Sym {
    std::array::from_fn(|p| m[SYM_PAIRS[p].0][SYM_PAIRS[p].1])
}

/// `a:b` for symmetric matrices in [`SYM_PAIRS`] storage.
pub fn sym_contract(a: &Sym, b: &Sym) -> f64 {
    SYM_PAIRS.iter().enumerate().map(|(p, &(i, j))| if i == j { a[p] * b[p] } else { 2.0 * a[p] * b[p] }).sum()
}

fn sym_norm(a: &Sym) -> f64 {
    sym_contract(a, a).sqrt()
}

/// Row `0` of a symmetric matrix, `(s₀₀, s₀₁, s₀₂)`.
fn sym_row0(s: &Sym) -> Vec3 {
    [s[0], s[1], s[2]]
}

/// `a⊗a − |a|²/3 I`.
fn traceless_square(a: &Vec3) -> Sym {
    to_sym(&tensor_a(a))
}

/// `t − log(1 + t)`, accurate for small `t`.
fn log_kernel(t: f64) -> f64 {
    if t.abs() < 1e-2 {
        // Σ_{n≥2} (−1)^n tⁿ / n.
        let mut s = 0.0;
        let mut p = t * t;
        for n in 2..16 {
            let term = p / n as f64;
            s += if n % 2 == 0 { term } else { -term };
            p *= t;
        }
        s
    } else {
        t - t.ln_1p()
    }
}

// ---------------------------------------------------------------------------
// Relative entropy and moments

/// `H(f|ℳ) = ∫ f log(f/ℳ) − f + ℳ dv` in one cell, for `f = M(1 + x)`.
pub fn relative_entropy_fluctuation(grid: &VelocityGrid, x: &[f64], target: &MaxwellianParams) -> Result<f64> {
    check_len(grid.len(), x.len())?;
    let a = target.exponent();
    let mu = grid.measure();
    let mut h = 0.0;
    for (k, v) in grid.nodes().iter().enumerate() {
        if !(1.0 + x[k] > 0.0) || !x[k].is_finite() {
            return Err(Error::Positivity(format!("f/M = {} at node {k}", 1.0 + x[k])));
        }
        let s = dot5(&a, &invariants(v));
        // ℳ·kernel(f/ℳ − 1), with f/ℳ − 1 formed without cancellation.
        h += mu[k] * s.exp() * entropy_kernel((x[k].ln_1p() - s).exp_m1());
    }
    Ok(h)
}

/// `H(f|ℳ)` in one cell for a number density sampled at the nodes.
pub fn relative_entropy_cell(grid: &VelocityGrid, f: &[f64], target: &MaxwellianParams) -> Result<f64> {
    check_len(grid.len(), f.len())?;
    let mut x = Vec::with_capacity(f.len());
    for (k, (&fk, &m)) in f.iter().zip(grid.maxwell_weights()).enumerate() {
        if !(fk > 0.0) {
            return Err(Error::Positivity(format!("f = {fk} at node {k}")));
        }
        x.push(fk / m - 1.0);
    }
    relative_entropy_fluctuation(grid, &x, target)
}

fn check_targets(state: &KineticState, targets: &[MaxwellianParams]) -> Result<()> {
    check_len(state.slab.cells(), targets.len())
}

/// `∫_𝕋 H_x dx` against one target Maxwellian per cell.
pub fn relative_entropy(state: &KineticState, targets: &[MaxwellianParams]) -> Result<f64> {
    check_targets(state, targets)?;
    let mut h = 0.0;
    for (c, t) in targets.iter().enumerate() {
        h += relative_entropy_fluctuation(&state.grid, &scaled(state, c), t)?;
    }
    Ok(state.slab.dx() * h)
}

/// `x = εg` in cell `c`.
fn scaled(state: &KineticState, c: usize) -> Vec<f64> {
    state.cell(c).iter().map(|g| state.epsilon * g).collect()
}

/// `M_ε` per cell.
pub fn fluid_targets(fluid: &FluidState) -> Result<Vec<MaxwellianParams>> {
    (0..fluid.slab.cells())
        .map(|c| {
            MaxwellianParams::from_fluctuation(
                fluid.epsilon,
                fluid.rho_t[c],
                [fluid.u_t[0][c], fluid.u_t[1][c], fluid.u_t[2][c]],
                fluid.theta_t[c],
            )
        })
        .collect()
}

/// `(ρ^b, u^b, θ^b) = (⟨g⟩, ⟨vg⟩, ⟨(|v|² − 3)/3 · g⟩)` in one cell.
pub fn cell_moments(grid: &VelocityGrid, g: &[f64]) -> Result<(f64, Vec3, f64)> {
    check_len(grid.len(), g.len())?;
    let m = grid.invariant_moments(g);
    Ok((m[0], [m[1], m[2], m[3]], (m[4] - 3.0 * m[0]) / 3.0))
}

/// Moment fields of the fluctuation.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationMoments {
    pub rho_b: Vec<f64>,
    pub u_b: [Vec<f64>; 3],
    pub theta_b: Vec<f64>,
}

impl FluctuationMoments {
    fn at(&self, c: usize) -> (f64, Vec3, f64) {
        (self.rho_b[c], [self.u_b[0][c], self.u_b[1][c], self.u_b[2][c]], self.theta_b[c])
    }
}

pub fn fluctuation_moments(state: &KineticState) -> FluctuationMoments {
    let n = state.slab.cells();
    let mut out = FluctuationMoments { rho_b: vec![0.0; n], u_b: std::array::from_fn(|_| vec![0.0; n]), theta_b: vec![0.0; n] };
    for c in 0..n {
        let (r, u, t) = cell_moments(&state.grid, state.cell(c)).expect("cell length matches grid");
        out.rho_b[c] = r;
        for j in 0..3 {
            out.u_b[j][c] = u[j];
        }
        out.theta_b[c] = t;
    }
    out
}

// ---------------------------------------------------------------------------
// Splitting and quadratic approximation

/// `H(f|M_ε)` and its two parts `H(f|M_f)`, `H(M_f|M_ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EntropySplit {
    pub total: f64,
    pub kinetic: f64,
    pub fluid: f64,
}

impl EntropySplit {
    /// `H(f|M_ε) − H(f|M_f) − H(M_f|M_ε)`.
    pub fn defect(&self) -> f64 {
        self.total - self.kinetic - self.fluid
    }
}

/// Both parts by quadrature. `M_f` is the discrete Maxwellian whose grid
/// moments equal those of `f`, which is what makes the cross terms cancel on
/// the grid and not only in the continuum.
pub fn entropy_split_cell(grid: &VelocityGrid, x: &[f64], target: &MaxwellianParams) -> Result<EntropySplit> {
    let total = relative_entropy_fluctuation(grid, x, target)?;
    let e = match_moments(grid, &grid.invariant_moments(x))?;
    let at = target.exponent();
    let da: [f64; 5] = std::array::from_fn(|a| e.alpha[a] - at[a]);
    let mu = grid.measure();
    let (mut kinetic, mut fluid) = (0.0, 0.0);
    for (k, v) in grid.nodes().iter().enumerate() {
        let p = invariants(v);
        let ef = 1.0 + e.em1[k];
        kinetic += mu[k] * ef * entropy_kernel((x[k] - e.em1[k]) / ef);
        fluid += mu[k] * dot5(&at, &p).exp() * entropy_kernel(dot5(&da, &p).exp_m1());
    }
    Ok(EntropySplit { total, kinetic, fluid })
}

pub fn entropy_split(state: &KineticState, targets: &[MaxwellianParams]) -> Result<EntropySplit> {
    check_targets(state, targets)?;
    let dx = state.slab.dx();
    let mut s = EntropySplit::default();
    for (c, t) in targets.iter().enumerate() {
        let p = entropy_split_cell(&state.grid, &scaled(state, c), t)?;
        s.total += dx * p.total;
        s.kinetic += dx * p.kinetic;
        s.fluid += dx * p.fluid;
    }
    Ok(s)
}

/// Per-cell terms of the expansion of `H(M_f|M_ε)/ε²`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct QuadCell {
    quadratic: f64,
    exact: f64,
    r8: f64,
    r9: f64,
    r10: f64,
    r1: Vec3,
    r2: f64,
}

/// `M_f` has `ρ_f = 1 + ερ^b`, `u_f = εu^b + ε²r₁`, `θ_f = 1 + εθ^b + ε²r₂`.
/// The exact `H(ℳ(ρ_f,u_f,θ_f)|M_ε)/ε²` splits into a density, a temperature
/// and a velocity part; `R₈`, `R₉`, `R₁₀` are each part minus its quadratic
/// leading term.
fn quad_cell(eps: f64, b: (f64, Vec3, f64), t: (f64, Vec3, f64)) -> QuadCell {
    let (rb, ub, thb) = b;
    let (rt, ut, tht) = t;
    let e2 = eps * eps;
    let rho_f = 1.0 + eps * rb;
    let rho_e = 1.0 + eps * rt;
    let theta_e = 1.0 + eps * tht;
    let r1: Vec3 = std::array::from_fn(|j| -rb * ub[j] / rho_f);
    let r2 = -rb * thb / rho_f - dot3(&ub, &ub) / (3.0 * rho_f * rho_f);
    let dens = rho_e * entropy_kernel(eps * (rb - rt) / rho_e) / e2;
    let tau = (eps * (thb - tht) + e2 * r2) / theta_e;
    let temp = rho_f * 1.5 * log_kernel(tau) / e2;
    // (u_f − εũ)/ε
    let du: Vec3 = std::array::from_fn(|j| ub[j] / rho_f - ut[j]);
    let vel = rho_f * dot3(&du, &du) / (2.0 * theta_e);
    let dr = rb - rt;
    let dth = thb - tht;
    let dv: Vec3 = std::array::from_fn(|j| ub[j] - ut[j]);
    let q_r = 0.5 * dr * dr;
    let q_t = 0.75 * dth * dth;
    let q_u = 0.5 * dot3(&dv, &dv);
    QuadCell {
        quadratic: q_r + q_t + q_u,
        exact: dens + temp + vel,
        r8: dens - q_r,
        r9: temp - q_t,
        r10: vel - q_u,
        r1,
        r2,
    }
}

/// Quadratic leading term of `H(M_f|M_ε)/ε²` and its remainders, integrated over
/// the slab.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadraticApprox {
    /// `∫ ½[(ρ^b − ρ̃)² + (3/2)(θ^b − θ̃)² + |u^b − ũ|²] dx`.
    pub quadratic: f64,
    /// Closed-form `H(M_f|M_ε)/ε²` with `M_f` built from the same moments.
    pub exact: f64,
    pub r8: f64,
    pub r9: f64,
    pub r10: f64,
    /// `∫|r₁| dx`, `∫|r₂| dx`.
    pub r1: f64,
    pub r2: f64,
}

pub fn quadratic_entropy_approx(moments: &FluctuationMoments, fluid: &FluidState) -> Result<QuadraticApprox> {
    let n = fluid.slab.cells();
    check_len(n, moments.rho_b.len())?;
    let dx = fluid.slab.dx();
    let mut out = QuadraticApprox::default();
    for c in 0..n {
        let t = (fluid.rho_t[c], [fluid.u_t[0][c], fluid.u_t[1][c], fluid.u_t[2][c]], fluid.theta_t[c]);
        let q = quad_cell(fluid.epsilon, moments.at(c), t);
        out.quadratic += dx * q.quadratic;
        out.exact += dx * q.exact;
        out.r8 += dx * q.r8;
        out.r9 += dx * q.r9;
        out.r10 += dx * q.r10;
        out.r1 += dx * dot3(&q.r1, &q.r1).sqrt();
        out.r2 += dx * q.r2.abs();
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Moment-flux expansions

/// `∫(V/√θ)f`, `∫(1/θ)(|V|²/2 − 3/2)f`, `∫A(V)f`, `∫B(V)f/√θ` per cell, with
/// `V = (v − εũ)/√θ`, `θ = 1 + εθ̃`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FluxFields {
    pub v_f: Vec<Vec3>,
    pub v_square_f: Vec<f64>,
    pub av_f: Vec<Sym>,
    pub bv_f: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentFluxes {
    pub quadrature: FluxFields,
    pub closed_form: FluxFields,
}

impl MomentFluxes {
    /// Largest `|quadrature − closed form|`, relative to the largest magnitude
    /// of the same family (floored at `1e-14`).
    pub fn max_relative_defect(&self) -> f64 {
        fn fam(a: &[f64], b: &[f64]) -> f64 {
            let scale = a.iter().chain(b).fold(1e-14f64, |m, x| m.max(x.abs()));
            a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
        }
        let (q, c) = (&self.quadrature, &self.closed_form);
        let flat3 = |v: &[Vec3]| v.iter().flatten().copied().collect::<Vec<_>>();
        let flat6 = |v: &[Sym]| v.iter().flatten().copied().collect::<Vec<_>>();
        fam(&flat3(&q.v_f), &flat3(&c.v_f))
            .max(fam(&q.v_square_f, &c.v_square_f))
            .max(fam(&flat6(&q.av_f), &flat6(&c.av_f)))
            .max(fam(&flat3(&q.bv_f), &flat3(&c.bv_f)))
    }
}

/// Gaussian moments `⟨A(v)g⟩`, `⟨B(v)g⟩` over precomputed node fields.
struct Basis {
    a: [Vec<f64>; 6],
    b: [Vec<f64>; 3],
}

impl Basis {
    fn new(grid: &VelocityGrid) -> Self {
        let a_nodes: Vec<Sym> = grid.nodes().iter().map(|v| to_sym(&tensor_a(v))).collect();
        let b_nodes: Vec<Vec3> = grid.nodes().iter().map(tensor_b).collect();
        Self {
            a: std::array::from_fn(|p| a_nodes.iter().map(|s| s[p]).collect()),
            b: std::array::from_fn(|i| b_nodes.iter().map(|s| s[i]).collect()),
        }
    }

    fn moments(&self, grid: &VelocityGrid, g: &[f64]) -> (Sym, Vec3) {
        (std::array::from_fn(|p| grid.dot(&self.a[p], g)), std::array::from_fn(|i| grid.dot(&self.b[i], g)))
    }
}

pub fn moment_flux_expansions(state: &KineticState, fluid: &FluidState) -> Result<MomentFluxes> {
    check_aligned_pair(state, fluid)?;
    let grid = &state.grid;
    let e = state.epsilon;
    let basis = Basis::new(grid);
    let mu = grid.measure();
    let n = state.slab.cells();
    let mut q = FluxFields::default();
    let mut cf = FluxFields::default();
    for c in 0..n {
        let g = state.cell(c);
        let ut: Vec3 = [fluid.u_t[0][c], fluid.u_t[1][c], fluid.u_t[2][c]];
        let tht = fluid.theta_t[c];
        let th = 1.0 + e * tht;
        let u: Vec3 = std::array::from_fn(|j| e * ut[j]);
        let sq = th.sqrt();

        let (mut vf, mut vs, mut av, mut bv) = ([0.0; 3], 0.0, [0.0; 6], [0.0; 3]);
        for (k, v) in grid.nodes().iter().enumerate() {
            let w = mu[k] * (1.0 + e * g[k]);
            let d: Vec3 = std::array::from_fn(|j| v[j] - u[j]);
            let big_v: Vec3 = std::array::from_fn(|j| d[j] / sq);
            let a = to_sym(&tensor_a(&big_v));
            let b = tensor_b(&big_v);
            for j in 0..3 {
                vf[j] += w * d[j] / th;
                bv[j] += w * b[j] / sq;
            }
            vs += w * (dot3(&big_v, &big_v) / 2.0 - 1.5) / th;
            for p in 0..6 {
                av[p] += w * a[p];
            }
        }
        q.v_f.push(vf);
        q.v_square_f.push(vs);
        q.av_f.push(av);
        q.bv_f.push(bv);

        let (rb, ub, thb) = cell_moments(grid, g)?;
        let (ag, bg) = basis.moments(grid, g);
        let th2 = th * th;
        let uu = dot3(&ut, &ut);
        let uub = dot3(&ut, &ub);
        cf.v_f.push(std::array::from_fn(|j| (e * (ub[j] - ut[j]) - e * e * rb * ut[j]) / th));
        cf.v_square_f.push(
            e * 1.5 * (thb - tht) / th2 + e * e * (-1.5 * tht * rb - uub + 0.5 * uu) / th2
                + e.powi(3) * uu * rb / (2.0 * th2),
        );
        let tu = traceless_square(&ut);
        cf.av_f.push(std::array::from_fn(|p| {
            let (i, j) = SYM_PAIRS[p];
            let cross = ut[i] * ub[j] + ub[i] * ut[j] - if i == j { 2.0 * uub / 3.0 } else { 0.0 };
            (e * e * (tu[p] - cross) + e.powi(3) * rb * tu[p] + e * ag[p]) / th
        }));
        let agu = sym_apply(&ag, &ut);
        cf.bv_f.push(std::array::from_fn(|j| {
            e * e * 2.5 * (tht * ut[j] - tht * ub[j] - ut[j] * thb) / th2 + e * bg[j] / th2
                - e * e * agu[j] / th2
                + e.powi(3) * ((uu * ub[j] + 2.0 * ut[j] * uub - ut[j] * uu) / (2.0 * th2) + 2.5 * rb * tht * ut[j] / th2)
                - e.powi(4) * uu * ut[j] * rb / (2.0 * th2)
        }));
    }
    Ok(MomentFluxes { quadrature: q, closed_form: cf })
}

/// `S a` for symmetric `S`.
fn sym_apply(s: &Sym, a: &Vec3) -> Vec3 {
    let m = |i: usize, j: usize| {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        s[SYM_PAIRS.iter().position(|&q| q == (i, j)).expect("index pair below 3")]
    };
    std::array::from_fn(|i| (0..3).map(|j| m(i, j) * a[j]).sum())
}

// ---------------------------------------------------------------------------
// Decomposition of ⟨A, g⟩ and ⟨B, g⟩

/// Instantaneous pieces of the decomposition in every cell; everything except
/// the time-derivative term.
#[derive(Debug, Clone, Default)]
struct AvBvParts {
    /// `(1/ε)⟨A, g⟩`, `(1/ε)⟨B, g⟩`.
    direct_a: Vec<Sym>,
    direct_b: Vec<Vec3>,
    /// `−μσ(u^b) + u^b⊗u^b − |u^b|²/3 I`, `−(5/2)κ∇θ^b + (5/2)u^b θ^b`.
    leading_a: Vec<Sym>,
    leading_b: Vec<Vec3>,
    /// `2⟨Â, Q(P^⊥g, Pg)⟩ + ⟨Â, Q(P^⊥g, P^⊥g)⟩` and the `B̂` analogue.
    q_a: Vec<Sym>,
    q_b: Vec<Vec3>,
    /// `⟨Â, v·∇P^⊥g⟩`, `⟨B̂, v·∇P^⊥g⟩`.
    tr_a: Vec<Sym>,
    tr_b: Vec<Vec3>,
    /// `⟨Â, g⟩`, `⟨B̂, g⟩`, differenced in time for `⟨Â, ∂_t g⟩`.
    hat_a: Vec<Sym>,
    hat_b: Vec<Vec3>,
    sigma_b: Vec<Sym>,
    dtheta_b: Vec<f64>,
}

fn avbv_parts(state: &KineticState, kernel: &CollisionKernel, basis: &Basis) -> Result<AvBvParts> {
    let grid = &state.grid;
    let slab = &state.slab;
    let e = state.epsilon;
    let n = slab.cells();
    let hats = kernel.hat_tensors()?;
    let mom = fluctuation_moments(state);
    let du_b: [Vec<f64>; 3] = std::array::from_fn(|j| slab.derivative(&mom.u_b[j]));
    let dth_b = slab.derivative(&mom.theta_b);
    let hat_v1: [Vec<f64>; 6] =
        std::array::from_fn(|p| hats.a_hat[p].iter().zip(grid.nodes()).map(|(a, v)| a * v[0]).collect());
    let hatb_v1: [Vec<f64>; 3] =
        std::array::from_fn(|i| hats.b_hat[i].iter().zip(grid.nodes()).map(|(b, v)| b * v[0]).collect());
    let mut out = AvBvParts::default();
    let mut flux_a: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; n]);
    let mut flux_b: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; n]);
    for c in 0..n {
        let g = state.cell(c);
        let (_, ub, thb) = mom.at(c);
        let (ag, bg) = basis.moments(grid, g);
        out.direct_a.push(ag.map(|x| x / e));
        out.direct_b.push(bg.map(|x| x / e));
        let sb = to_sym(&stress_from_gradient([du_b[0][c], du_b[1][c], du_b[2][c]]));
        let tu = traceless_square(&ub);
        out.leading_a.push(std::array::from_fn(|p| -hats.mu * sb[p] + tu[p]));
        out.leading_b.push(std::array::from_fn(|i| {
            -2.5 * hats.kappa * if i == 0 { dth_b[c] } else { 0.0 } + 2.5 * ub[i] * thb
        }));
        out.sigma_b.push(sb);

        let pg = grid.project_hydro(g)?;
        let perp: Vec<f64> = g.iter().zip(&pg).map(|(a, b)| a - b).collect();
        // Q is symmetric, so Q(P^⊥g, P^⊥g + 2Pg) = Q(P^⊥g, P^⊥g) + 2 Q(P^⊥g, Pg).
        let second: Vec<f64> = perp.iter().zip(&pg).map(|(a, b)| a + 2.0 * b).collect();
        let q = kernel.bilinear_q(&perp, &second)?;
        let (qa, qb) = hat_moments(grid, hats, &q);
        out.q_a.push(qa);
        out.q_b.push(qb);
        for p in 0..6 {
            flux_a[p][c] = grid.dot(&hat_v1[p], &perp);
        }
        for i in 0..3 {
            flux_b[i][c] = grid.dot(&hatb_v1[i], &perp);
        }
        let (ha, hb) = hat_moments(grid, hats, g);
        out.hat_a.push(ha);
        out.hat_b.push(hb);
    }
    // ⟨Â, v₁∂P^⊥g⟩ = ∂⟨Âv₁, P^⊥g⟩.
    let dfa: [Vec<f64>; 6] = std::array::from_fn(|p| slab.derivative(&flux_a[p]));
    let dfb: [Vec<f64>; 3] = std::array::from_fn(|i| slab.derivative(&flux_b[i]));
    for c in 0..n {
        out.tr_a.push(std::array::from_fn(|p| dfa[p][c]));
        out.tr_b.push(std::array::from_fn(|i| dfb[i][c]));
    }
    out.dtheta_b = dth_b;
    Ok(out)
}

fn hat_moments(grid: &VelocityGrid, hats: &HatTensors, g: &[f64]) -> (Sym, Vec3) {
    (std::array::from_fn(|p| grid.dot(&hats.a_hat[p], g)), std::array::from_fn(|i| grid.dot(&hats.b_hat[i], g)))
}

/// Centered difference of per-cell moments; one-sided at the ends.
fn time_derivative<const N: usize>(series: &[(f64, &[[f64; N]])], n: usize) -> Vec<[f64; N]> {
    let m = series.len();
    let (lo, hi) = if n == 0 { (0, 1) } else if n + 1 == m { (m - 2, m - 1) } else { (n - 1, n + 1) };
    let dt = series[hi].0 - series[lo].0;
    series[hi].1.iter().zip(series[lo].1).map(|(a, b)| std::array::from_fn(|p| (a[p] - b[p]) / dt)).collect()
}

/// `(1/ε)⟨A, g⟩ = −μσ(u^b) + (u^b⊗u^b − |u^b|²/3 I) + R_A` and the `B`
/// analogue, per cell, at one observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct AvBvDecomposition {
    pub time: f64,
    pub direct_a: Vec<Sym>,
    pub leading_a: Vec<Sym>,
    pub r_a: Vec<Sym>,
    pub direct_b: Vec<Vec3>,
    pub leading_b: Vec<Vec3>,
    pub r_b: Vec<Vec3>,
}

impl AvBvDecomposition {
    /// `max |direct − leading − R|` over cells and entries.
    pub fn defect(&self) -> f64 {
        let a = self.direct_a.iter().zip(&self.leading_a).zip(&self.r_a).flat_map(|((d, l), r)| (0..6).map(move |p| (d[p] - l[p] - r[p]).abs()));
        let b = self.direct_b.iter().zip(&self.leading_b).zip(&self.r_b).flat_map(|((d, l), r)| (0..3).map(move |i| (d[i] - l[i] - r[i]).abs()));
        a.chain(b).fold(0.0, f64::max)
    }
}

/// `R_A = 2⟨Â, Q(P^⊥g, Pg)⟩ + ⟨Â, Q(P^⊥g, P^⊥g)⟩ − ⟨Â, v·∇P^⊥g⟩ − ε⟨Â, ∂_t P^⊥g⟩`,
/// with `∂_t` from differences across the snapshots.
pub fn avbv_decomposition(snapshots: &[KineticState], kernel: &CollisionKernel) -> Result<Vec<AvBvDecomposition>> {
    if snapshots.len() < 2 {
        return Err(Error::Unavailable("time derivative needs at least two snapshots".into()));
    }
    let basis = Basis::new(kernel.grid());
    let parts: Vec<AvBvParts> = snapshots.iter().map(|s| avbv_parts(s, kernel, &basis)).collect::<Result<_>>()?;
    let sa: Vec<(f64, &[Sym])> = snapshots.iter().zip(&parts).map(|(s, p)| (s.time, p.hat_a.as_slice())).collect();
    let sb: Vec<(f64, &[Vec3])> = snapshots.iter().zip(&parts).map(|(s, p)| (s.time, p.hat_b.as_slice())).collect();
    let mut out = Vec::with_capacity(parts.len());
    for (n, (s, p)) in snapshots.iter().zip(&parts).enumerate() {
        let e = s.epsilon;
        let da = time_derivative(&sa, n);
        let db = time_derivative(&sb, n);
        let r_a = (0..p.q_a.len()).map(|c| std::array::from_fn(|k| p.q_a[c][k] - p.tr_a[c][k] - e * da[c][k])).collect();
        let r_b = (0..p.q_b.len()).map(|c| std::array::from_fn(|k| p.q_b[c][k] - p.tr_b[c][k] - e * db[c][k])).collect();
        out.push(AvBvDecomposition {
            time: s.time,
            direct_a: p.direct_a.clone(),
            leading_a: p.leading_a.clone(),
            r_a,
            direct_b: p.direct_b.clone(),
            leading_b: p.leading_b.clone(),
            r_b,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dissipation

/// `D(f)/ε⁴ = ¼⟨⟨q²⟩⟩ + R₁₁` in one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationEquivalence {
    pub d_over_eps4: f64,
    pub quarter_q2: f64,
    pub r11: f64,
    /// Cubic-remainder contributions `¼⟨⟨|q r₃|⟩⟩/ε²`, `¼⟨⟨|q r₄|⟩⟩/ε²`.
    pub r3: f64,
    pub r4: f64,
    /// `D/ε⁴ − ¼⟨⟨q²⟩⟩ − R₁₁`.
    pub closure: f64,
}

pub fn dissipation_equivalence(f: &[f64], epsilon: f64, kernel: &CollisionKernel) -> Result<DissipationEquivalence> {
    let q = kernel.q_field(f, epsilon)?;
    Ok(DissipationEquivalence {
        d_over_eps4: q.d_over_eps4,
        quarter_q2: q.quarter_q2,
        r11: q.r11,
        r3: q.r3,
        r4: q.r4,
        closure: q.closure(),
    })
}

// ---------------------------------------------------------------------------
// Budget

/// Names of the residual entries, in report order.
pub const RESIDUAL_NAMES: [&str; 20] = [
    "R_1", "R_2", "R_3", "R_4", "R_5", "R_6", "R_7", "R_8", "R_9", "R_10", "R_11", "R_12", "R_13", "R_A", "R_B", "r_1",
    "r_2", "r_3", "r_4", "R_tilde",
];

/// One observation time of the modulated-entropy budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub time: f64,
    pub epsilon: f64,
    /// `H(f_ε|M_ε)/ε²`.
    pub h_over_eps2: f64,
    /// `(H(f|M_f), H(M_f|M_ε))`, unscaled.
    pub h_split: (f64, f64),
    /// `H(f|M_ε) − H(f|M_f) − H(M_f|M_ε)`.
    pub split_defect: f64,
    /// Quadratic leading term of `H(M_f|M_ε)/ε²`.
    pub quad_approx: f64,
    /// `|H(M_f|M_ε)/ε² − quad_approx|` with `H(M_f|M_ε)` by quadrature.
    pub quad_error: f64,
    /// `∫₀ᵗ∫ D/ε⁴ − ½μσ(u^b):σ(u^b) − (5/2)κ|∇θ^b|²`.
    pub dissipation_budget: f64,
    /// Set when `D` is the relaxation-model dissipation.
    pub dissipation_surrogate: bool,
    /// `∫₀ᵗ∫ ½μσ(ũ − u^b):σ(ũ − u^b) + (5/2)κ|∇θ̃ − ∇θ^b|²`.
    pub flux_budget: f64,
    /// `∫₀ᵗ ‖R(s)‖_{L¹} ds` for every named residual.
    pub residuals: BTreeMap<String, f64>,
    /// `∫₀ᵗ∫ R dx ds` with sign, for the residuals that enter the budget.
    pub residuals_signed: BTreeMap<String, f64>,
    /// `∫₀ᵗ (III + IV) ds`, the unsigned convection terms.
    pub convection: f64,
    /// `C(θ)·∫₀ᵗ ‖∇(ũ, θ̃)‖_∞ · quadratic ds`, which must dominate `|convection|`.
    pub convection_bound: f64,
    /// `‖∇(ũ, θ̃)‖_∞` now.
    pub gradient_sup: f64,
    /// `C(θ) = 2√(2/3)/θ_min + 5/(2θ_min²)`, with `θ_min` over the run so far.
    pub convection_constant: f64,
    /// `∫₀ᵗ ‖∇(ũ, θ̃)‖_∞ H/ε² ds`.
    pub gronwall_integral: f64,
    /// `H/ε²(t) + budgets + R̃ + R₅ + R₆ + ∫(III + IV) − H/ε²(0)`.
    pub closure_defect: f64,
    /// Largest integration-by-parts defect of the viscous and heat terms.
    pub ibp_defect: f64,
    /// Largest defect of the `⟨A,g⟩`, `⟨B,g⟩` decomposition at this time.
    pub avbv_defect: f64,
    /// Smallest inequality slack over cells and times so far (binary kernel only).
    pub bgl_slack_min: Option<f64>,
    /// `H/ε²(0) + C∫‖∇‖_∞H/ε² + |R̃| + |R₅| + |R₆| + R₇ + |closure_defect|`.
    pub majorant: f64,
    /// `majorant − (H/ε² + dissipation_budget + flux_budget)`.
    pub budget_slack: f64,
}

impl EntropyReport {
    pub fn residual(&self, name: &str) -> Option<f64> {
        self.residuals.get(name).copied()
    }
}

/// Values of one observation that do not need neighbouring snapshots.
#[derive(Debug, Clone)]
struct Snapshot {
    time: f64,
    epsilon: f64,
    dx: f64,
    split: EntropySplit,
    quad: QuadraticApprox,
    /// `∫|R₈ + R₉ + R₁₀| dx`.
    r8910: f64,
    diss: f64,
    flux: f64,
    conv: f64,
    /// `∫ quadratic dx`, weighted by `C‖∇‖_∞` in time.
    conv_bound_density: f64,
    ibp: f64,
    /// Signed and L¹ integrals of instantaneous terms.
    terms: BTreeMap<&'static str, (f64, f64)>,
    parts: AvBvParts,
    du_t: Vec<Vec3>,
    dtheta_t: Vec<f64>,
    theta: Vec<f64>,
    grad_sup: f64,
    theta_min: f64,
    bgl_min: Option<f64>,
}

/// Accumulates paired observations and assembles the reports.
pub struct BudgetTracker<'a> {
    kernel: &'a CollisionKernel,
    model: &'a CnsModel,
    basis: Basis,
    snaps: Vec<Snapshot>,
}

fn check_aligned_pair(k: &KineticState, f: &FluidState) -> Result<()> {
    if !times_match(k.time, f.time) {
        return Err(Error::Misaligned(vec![k.time, f.time]));
    }
    if k.slab != f.slab {
        return Err(Error::Config("kinetic and fluid states live on different slabs".into()));
    }
    if k.epsilon != f.epsilon {
        return Err(Error::Config(format!("epsilon {} vs {}", k.epsilon, f.epsilon)));
    }
    Ok(())
}

fn times_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIME_MATCH_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

impl<'a> BudgetTracker<'a> {
    pub fn new(kernel: &'a CollisionKernel, model: &'a CnsModel) -> Self {
        Self { kernel, model, basis: Basis::new(kernel.grid()), snaps: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.snaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snaps.is_empty()
    }

    pub fn push(&mut self, k: &KineticState, f: &FluidState) -> Result<()> {
        check_aligned_pair(k, f)?;
        if let Some(last) = self.snaps.last() {
            if !(k.time > last.time) || k.epsilon != last.epsilon {
                return Err(Error::Misaligned(vec![last.time, k.time]));
            }
        }
        let s = self.analyze(k, f)?;
        self.snaps.push(s);
        Ok(())
    }

    fn analyze(&self, k: &KineticState, f: &FluidState) -> Result<Snapshot> {
        let grid = &k.grid;
        let slab = &k.slab;
        let n = slab.cells();
        let e = k.epsilon;
        let dx = slab.dx();
        let hats = self.kernel.hat_tensors()?;
        let (mu0, kappa0) = (hats.mu, hats.kappa);
        let table = &self.model.transport;
        let c_heat = self.model.heat_flux.coefficient();
        let parts = avbv_parts(k, self.kernel, &self.basis)?;
        let mom = fluctuation_moments(k);
        let targets = fluid_targets(f)?;
        let rho = f.rho();
        let theta = f.theta();
        let d = |v: &[f64]| slab.derivative(v);
        let du_t: [Vec<f64>; 3] = std::array::from_fn(|j| d(&f.u_t[j]));
        let dth_t = d(&f.theta_t);
        let mu_c: Vec<f64> = (0..n).map(|i| table.mu(rho[i], theta[i])).collect();
        let kappa_c: Vec<f64> = (0..n).map(|i| table.kappa(rho[i], theta[i])).collect();
        let sig_t: Vec<Sym> = (0..n).map(|i| to_sym(&stress_from_gradient([du_t[0][i], du_t[1][i], du_t[2][i]]))).collect();
        let div_s: [Vec<f64>; 3] = std::array::from_fn(|j| d(&(0..n).map(|i| mu_c[i] * sig_t[i][j]).collect::<Vec<_>>()));
        let div_k = d(&(0..n).map(|i| kappa_c[i] * dth_t[i]).collect::<Vec<_>>());
        let dth_b = &parts.dtheta_b;

        let mut split = EntropySplit::default();
        let mut quad = QuadraticApprox::default();
        let mut terms: BTreeMap<&'static str, (f64, f64)> = BTreeMap::new();
        let mut add = |name: &'static str, v: f64| {
            let t = terms.entry(name).or_insert((0.0, 0.0));
            t.0 += dx * v;
            t.1 += dx * v.abs();
        };
        let (mut diss, mut flux, mut conv, mut r8910, mut conv_bound) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut visc_ibp, mut heat_ibp) = (0.0, 0.0);
        let mut bgl_min: Option<f64> = None;
        let mut grad_sup = 0.0f64;
        let theta_min = theta.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        for i in 0..n {
            let x: Vec<f64> = k.cell(i).iter().map(|g| e * g).collect();
            let sp = entropy_split_cell(grid, &x, &targets[i])?;
            split.total += dx * sp.total;
            split.kinetic += dx * sp.kinetic;
            split.fluid += dx * sp.fluid;

            let (rb, ub, thb) = mom.at(i);
            let ut: Vec3 = [f.u_t[0][i], f.u_t[1][i], f.u_t[2][i]];
            let (rt, tht) = (f.rho_t[i], f.theta_t[i]);
            let qc = quad_cell(e, (rb, ub, thb), (rt, ut, tht));
            quad.quadratic += dx * qc.quadratic;
            quad.exact += dx * qc.exact;
            quad.r8 += dx * qc.r8;
            quad.r9 += dx * qc.r9;
            quad.r10 += dx * qc.r10;
            quad.r1 += dx * dot3(&qc.r1, &qc.r1).sqrt();
            quad.r2 += dx * qc.r2.abs();
            r8910 += dx * (qc.r8 + qc.r9 + qc.r10).abs();
            add("R_8", qc.r8);
            add("R_9", qc.r9);
            add("R_10", qc.r10);
            add("r_1", dot3(&qc.r1, &qc.r1).sqrt());
            add("r_2", qc.r2);

            let density = k.density(i);
            let d_over_eps4 = match self.kernel.mode() {
                KernelMode::Bgk => self.kernel.entropy_dissipation(&density)? / e.powi(4),
                KernelMode::MaxwellMolecules => {
                    let qf = self.kernel.q_field(&density, e)?;
                    add("R_11", qf.r11);
                    add("r_3", qf.r3);
                    add("r_4", qf.r4);
                    let s = qf.bgl_slack(grid, hats);
                    bgl_min = Some(bgl_min.map_or(s, |m: f64| m.min(s)));
                    qf.d_over_eps4
                }
            };

            let (r, th) = (rho[i], theta[i]);
            let th2 = th * th;
            let du: Vec3 = [du_t[0][i], du_t[1][i], du_t[2][i]];
            let dtt = dth_t[i];
            let dtb = dth_b[i];
            let ds: Vec3 = [div_s[0][i], div_s[1][i], div_s[2][i]];
            let sb = parts.sigma_b[i];
            let st = sig_t[i];
            let delta: Vec3 = std::array::from_fn(|j| ut[j] - ub[j]);
            let s_delta: Sym = std::array::from_fn(|p| st[p] - sb[p]);
            let uu = dot3(&ut, &ut);
            let uub = dot3(&ut, &ub);
            let ub_minus: Vec3 = std::array::from_fn(|j| ub[j] - ut[j]);
            let sb_du = dot3(&sym_row0(&sb), &du);

            add("R_1", -e * ds.iter().zip(&ut).map(|(a, u)| a * rb * u).sum::<f64>() / (r * th));

            let s2 = -1.5 * tht * rb / th2 - uub / th2 + uu / (2.0 * th2) + e * uu * rb / (2.0 * th2);
            let s_over = 1.5 * (thb - tht) / th2 + e * s2;
            let heating = if self.model.viscous_heating { mu_c[i] * sym_contract(&st, &st) / (3.0 * r) * s_over } else { 0.0 };
            add("R_2", e * heating + e * c_heat * div_k[i] * s2 / r);

            let tu = traceless_square(&ut);
            add("R_3", e * rb / th * dot3(&sym_row0(&tu), &du));

            let ag = parts.direct_a[i].map(|a| a * e);
            let agu = sym_apply(&ag, &ut);
            let r4x = e * ((uu * ub[0] + 2.0 * ut[0] * uub - ut[0] * uu) / (2.0 * th2) + 2.5 * rb * tht * ut[0] / th2)
                - e * e * uu * ut[0] * rb / (2.0 * th2)
                - agu[0] / th2;
            add("R_4", r4x * dtt);

            let visc_lead = dot3(&ds, &ub_minus) / (r * th) - mu0 / th * sb_du;
            let heat_lead = 1.5 * c_heat * div_k[i] * (thb - tht) / (r * th2) - 2.5 * kappa0 * dtb * dtt / th2;
            let td = traceless_square(&delta);
            let iii = dot3(&sym_row0(&td), &du) / th;
            let iv = 2.5 * delta[0] * (tht - thb) * dtt / th2;
            conv += dx * (iii + iv);

            let r5 = dot3(&ds, &ub_minus) * (1.0 / (r * th) - 1.0)
                + e * tht / th * mu0 * sb_du
                + 0.5 * (mu_c[i] - mu0) * sym_contract(&st, &s_delta);
            let r6 = (1.0 / (r * th2) - 1.0) * 1.5 * c_heat * div_k[i] * (thb - tht)
                + 2.5 * kappa0 * (1.0 - 1.0 / th2) * dtb * dtt
                + 2.5 * (kappa_c[i] - kappa0) * dtt * (dtt - dtb);
            add("R_5", r5);
            add("R_6", r6);
            let flux_visc = 0.5 * mu0 * sym_contract(&s_delta, &s_delta);
            let flux_heat = 2.5 * kappa0 * (dtt - dtb).powi(2);
            visc_ibp += dx * (visc_lead - (flux_visc - 0.5 * mu0 * sym_contract(&sb, &sb)) - r5);
            heat_ibp += dx * (heat_lead - (flux_heat - 2.5 * kappa0 * dtb * dtb) - r6);
            flux += dx * (flux_visc + flux_heat);
            diss += dx * (d_over_eps4 - 0.5 * mu0 * sym_contract(&sb, &sb) - 2.5 * kappa0 * dtb * dtb);

            let g_here = dot3(&du, &du).sqrt().max(dtt.abs());
            grad_sup = grad_sup.max(g_here);
            conv_bound += dx * qc.quadratic;
        }
        Ok(Snapshot {
            time: k.time,
            epsilon: e,
            dx,
            split,
            quad,
            r8910,
            diss,
            flux,
            conv,
            conv_bound_density: conv_bound,
            ibp: visc_ibp.abs().max(heat_ibp.abs()),
            terms,
            parts,
            du_t: (0..n).map(|i| [du_t[0][i], du_t[1][i], du_t[2][i]]).collect(),
            dtheta_t: dth_t,
            theta,
            grad_sup,
            theta_min,
            bgl_min,
        })
    }

    /// Assembles one report per pushed observation.
    pub fn finish(&self) -> Result<Vec<EntropyReport>> {
        let m = self.snaps.len();
        if m == 0 {
            return Ok(Vec::new());
        }
        let surrogate = self.kernel.mode() == KernelMode::Bgk;
        // Instantaneous integrals that need `∂_t`; single snapshots use zero.
        let sa: Vec<(f64, &[Sym])> = self.snaps.iter().map(|s| (s.time, s.parts.hat_a.as_slice())).collect();
        let sb: Vec<(f64, &[Vec3])> = self.snaps.iter().map(|s| (s.time, s.parts.hat_b.as_slice())).collect();
        let mut inst: Vec<BTreeMap<&'static str, (f64, f64)>> = Vec::with_capacity(m);
        let mut avbv = Vec::with_capacity(m);
        for (n, s) in self.snaps.iter().enumerate() {
            let cells = s.theta.len();
            let (da, db) = if m > 1 {
                (time_derivative(&sa, n), time_derivative(&sb, n))
            } else {
                (vec![[0.0; 6]; cells], vec![[0.0; 3]; cells])
            };
            let mut t = s.terms.clone();
            let mut add = |name: &'static str, v: f64| {
                let e = t.entry(name).or_insert((0.0, 0.0));
                e.0 += s.dx * v;
                e.1 += s.dx * v.abs();
            };
            let p = &s.parts;
            let e = s.epsilon;
            let mut worst = 0.0f64;
            let mut tilde_extra = 0.0;
            for c in 0..cells {
                let ra: Sym = std::array::from_fn(|k| p.q_a[c][k] - p.tr_a[c][k] - e * da[c][k]);
                let rb: Vec3 = std::array::from_fn(|k| p.q_b[c][k] - p.tr_b[c][k] - e * db[c][k]);
                for k in 0..6 {
                    worst = worst.max((p.direct_a[c][k] - p.leading_a[c][k] - ra[k]).abs());
                }
                for k in 0..3 {
                    worst = worst.max((p.direct_b[c][k] - p.leading_b[c][k] - rb[k]).abs());
                }
                add("R_A", sym_norm(&ra));
                add("R_B", dot3(&rb, &rb).sqrt());
                let th = s.theta[c];
                let extra = dot3(&sym_row0(&ra), &s.du_t[c]) / th + rb[0] * s.dtheta_t[c] / (th * th);
                tilde_extra += s.dx * extra;
                // ⟨v·∇P^⊥g + ε∂_t g, Â⟩:σ(u^b) and the B̂ analogue against ∇θ^b.
                let wa: Sym = std::array::from_fn(|k| p.tr_a[c][k] + e * da[c][k]);
                add("R_12", sym_contract(&wa, &p.sigma_b[c]));
                add("R_13", (p.tr_b[c][0] + e * db[c][0]) * p.dtheta_b[c]);
            }
            let tilde: f64 = ["R_1", "R_2", "R_3", "R_4"].iter().map(|k| t.get(k).map_or(0.0, |v| v.0)).sum::<f64>()
                + tilde_extra;
            t.insert("R_tilde", (tilde, tilde.abs()));
            inst.push(t);
            avbv.push(worst);
        }

        let mut out = Vec::with_capacity(m);
        let mut cum_signed: BTreeMap<&'static str, f64> = BTreeMap::new();
        let mut cum_abs: BTreeMap<&'static str, f64> = BTreeMap::new();
        let (mut diss, mut flux, mut conv, mut conv_bound, mut gron, mut r7_base) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let mut theta_min = f64::INFINITY;
        let mut bgl: Option<f64> = None;
        let h0 = self.snaps[0].split.total / self.snaps[0].epsilon.powi(2);
        for n in 0..m {
            let s = &self.snaps[n];
            let e2 = s.epsilon * s.epsilon;
            let h = s.split.total / e2;
            if n > 0 {
                let p = &self.snaps[n - 1];
                let w = 0.5 * (s.time - p.time);
                let hp = p.split.total / e2;
                diss += w * (p.diss + s.diss);
                flux += w * (p.flux + s.flux);
                conv += w * (p.conv + s.conv);
                conv_bound += w * (p.grad_sup * p.conv_bound_density + s.grad_sup * s.conv_bound_density);
                gron += w * (p.grad_sup * hp + s.grad_sup * h);
                r7_base += w * (p.grad_sup * p.r8910 + s.grad_sup * s.r8910);
                for (name, v) in &inst[n] {
                    let prev = inst[n - 1].get(name).copied().unwrap_or((0.0, 0.0));
                    *cum_signed.entry(name).or_insert(0.0) += w * (prev.0 + v.0);
                    *cum_abs.entry(name).or_insert(0.0) += w * (prev.1 + v.1);
                }
            } else {
                for name in inst[0].keys() {
                    cum_signed.insert(name, 0.0);
                    cum_abs.insert(name, 0.0);
                }
            }
            theta_min = theta_min.min(s.theta_min);
            let c_conv = convection_constant(theta_min);
            if let Some(b) = s.bgl_min {
                bgl = Some(bgl.map_or(b, |x: f64| x.min(b)));
            }
            let r7 = c_conv * r7_base;
            let sg = |k: &str| cum_signed.get(k).copied().unwrap_or(0.0);
            let closure = h + diss + flux + sg("R_tilde") + sg("R_5") + sg("R_6") + conv - h0;
            let majorant = h0 + c_conv * gron + sg("R_tilde").abs() + sg("R_5").abs() + sg("R_6").abs() + r7 + closure.abs();
            let mut residuals: BTreeMap<String, f64> = cum_abs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
            residuals.insert("R_7".into(), r7);
            let residuals_signed: BTreeMap<String, f64> = cum_signed.iter().map(|(k, v)| (k.to_string(), *v)).collect();
            out.push(EntropyReport {
                time: s.time,
                epsilon: s.epsilon,
                h_over_eps2: h,
                h_split: (s.split.kinetic, s.split.fluid),
                split_defect: s.split.defect(),
                quad_approx: s.quad.quadratic,
                quad_error: (s.split.fluid / e2 - s.quad.quadratic).abs(),
                dissipation_budget: diss,
                dissipation_surrogate: surrogate,
                flux_budget: flux,
                residuals,
                residuals_signed,
                convection: conv,
                convection_bound: c_conv * conv_bound,
                gradient_sup: s.grad_sup,
                convection_constant: c_conv,
                gronwall_integral: gron,
                closure_defect: closure,
                ibp_defect: s.ibp,
                avbv_defect: avbv[n],
                bgl_slack_min: bgl,
                majorant,
                budget_slack: majorant - (h + diss + flux),
            });
        }
        Ok(out)
    }
}

/// `C(θ) = 2√(2/3)/θ_min + 5/(2θ_min²)`: with it the convection integrands are
/// bounded pointwise by `C ‖∇(ũ, θ̃)‖_∞ (½|ũ − u^b|² + ¾|θ̃ − θ^b|²)`.
pub fn convection_constant(theta_min: f64) -> f64 {
    2.0 * (2.0f64 / 3.0).sqrt() / theta_min + 2.5 / (theta_min * theta_min)
}

/// Reports for paired trajectories observed at the same times.
pub fn theorem_budget(
    kinetic: &[KineticState],
    fluid: &[FluidState],
    kernel: &CollisionKernel,
    model: &CnsModel,
) -> Result<Vec<EntropyReport>> {
    let mut bad: Vec<f64> = Vec::new();
    for i in 0..kinetic.len().max(fluid.len()) {
        match (kinetic.get(i), fluid.get(i)) {
            (Some(k), Some(f)) if times_match(k.time, f.time) => {}
            (Some(k), _) => bad.push(k.time),
            (None, Some(f)) => bad.push(f.time),
            (None, None) => unreachable!(),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Misaligned(bad));
    }
    let mut tracker = BudgetTracker::new(kernel, model);
    for (k, f) in kinetic.iter().zip(fluid) {
        tracker.push(k, f)?;
    }
    tracker.finish()
}

/// `∫ |x| dx` helper for callers building their own diagnostics.
pub fn l1(slab_dx: f64, f: &[f64]) -> f64 {
    slab_dx * f.iter().map(|v| v.abs()).sum::<f64>()
}
