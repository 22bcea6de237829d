//! Compressible Navier–Stokes at small Mach number in fluctuation form,
//! `(ρ, u, θ) = (1 + ερ̃, εũ, 1 + εθ̃)`, on the periodic slab, and a reference
//! incompressible integrator.
//!
//! The `1/ε` acoustic block `−(1/ε)(∂ũ₁, ∂(ρ̃+θ̃), (2/3)∂ũ₁)` is linear with
//! constant coefficients and is integrated exactly in Fourier space; the rest
//! is advanced by an integrating-factor SSP-RK3 scheme.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::collision::{CollisionKernel, KernelMode};
use crate::error::{check_len, Error, Result};
use crate::slab::Slab;

/// Entries of the stress tensor that survive when fields depend on `x₁` only.
#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    /// `σ[i][j]` per cell.
    pub sigma: Vec<[[f64; 3]; 3]>,
}

impl StressField {
    /// `σ:σ` per cell.
    pub fn contract_self(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s.iter().flatten().map(|x| x * x).sum()).collect()
    }
}

/// `σ(u) = ∇u + ∇uᵀ − (2/3)(∇·u)I` for `u = u(x₁)`.
pub fn stress_tensor(u: &[Vec<f64>; 3], slab: &Slab) -> Result<StressField> {
    for c in u {
        check_len(slab.cells(), c.len())?;
    }
    let d: Vec<Vec<f64>> = u.iter().map(|c| slab.derivative(c)).collect();
    Ok(StressField { sigma: (0..slab.cells()).map(|i| stress_from_gradient([d[0][i], d[1][i], d[2][i]])).collect() })
}

/// Stress from `∂₁u`; `(∇u)_{ij} = ∂_i u_j` has only its first row.
pub fn stress_from_gradient(du: [f64; 3]) -> [[f64; 3]; 3] {
    let mut s = [[0.0; 3]; 3];
    let div = du[0];
    for i in 0..3 {
        for j in 0..3 {
            let gij = if i == 0 { du[j] } else { 0.0 };
            let gji = if j == 0 { du[i] } else { 0.0 };
            s[i][j] = gij + gji - if i == j { 2.0 / 3.0 * div } else { 0.0 };
        }
    }
    s
}

/// Which heat-flux coefficient the temperature equation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeatFlux {
    /// `(5/3)(1/ρ)∇·[κ∇θ]`, the small-Mach form.
    #[default]
    SmallMach,
    /// The `5/2` coefficient of the unscaled system used in the same slot.
    Unscaled,
}

impl HeatFlux {
    pub fn coefficient(self) -> f64 {
        match self {
            HeatFlux::SmallMach => 5.0 / 3.0,
            HeatFlux::Unscaled => 2.5,
        }
    }
}

/// `μ(ρ, θ)` and `κ(ρ, θ)` tabulated on `[0.5, 1.5]²` and bilinearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportTable {
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
    /// Row-major in `(ρ, θ)`.
    pub mu: Vec<f64>,
    pub kappa: Vec<f64>,
}

pub const TABLE_POINTS: usize = 11;

impl TransportTable {
    /// Constant coefficients.
    pub fn constant(mu: f64, kappa: f64) -> Self {
        let axis = table_axis();
        let n = axis.len();
        Self { rho: axis.clone(), theta: axis, mu: vec![mu; n * n], kappa: vec![kappa; n * n] }
    }

    /// The coefficients at local `(ρ, θ)` are Maxwellian-weighted integrals of
    /// `A:Â_ℳ` and `B·B̂_ℳ`. Substituting `v = u + √θ V` turns them into
    /// integrals against `ρ M(V) dV`, and the linearisation about `ℳ` equals the
    /// one about `M` times a density factor `s(ρ)` (`1` for a fixed relaxation
    /// rate, `ρ` for the binary kernel), so `Â_ℳ = Â / s(ρ)`.
    pub fn from_kernel(kernel: &CollisionKernel) -> Result<Self> {
        let hats = kernel.hat_tensors()?;
        let (mu1, kappa1) = (hats.mu, hats.kappa);
        let axis = table_axis();
        let n = axis.len();
        let mut mu = Vec::with_capacity(n * n);
        let mut kappa = Vec::with_capacity(n * n);
        // Quadratures in the V variable are those at (1, 1); only the
        // prefactor ρ / s(ρ) depends on the state.
        for &r in &axis {
            let s = match kernel.mode() {
                KernelMode::Bgk => 1.0,
                KernelMode::MaxwellMolecules => r,
            };
            for _ in &axis {
                mu.push(r * mu1 / s);
                kappa.push(r * kappa1 / s);
            }
        }
        Ok(Self { rho: axis.clone(), theta: axis, mu, kappa })
    }

    fn lookup(&self, table: &[f64], rho: f64, theta: f64) -> f64 {
        let (i, a) = bracket(&self.rho, rho);
        let (j, b) = bracket(&self.theta, theta);
        let n = self.theta.len();
        let at = |p: usize, q: usize| table[p * n + q];
        (1.0 - a) * ((1.0 - b) * at(i, j) + b * at(i, j + 1)) + a * ((1.0 - b) * at(i + 1, j) + b * at(i + 1, j + 1))
    }

    pub fn mu(&self, rho: f64, theta: f64) -> f64 {
        self.lookup(&self.mu, rho, theta)
    }

    pub fn kappa(&self, rho: f64, theta: f64) -> f64 {
        self.lookup(&self.kappa, rho, theta)
    }

    /// Reference values at `(1, 1)`.
    pub fn reference(&self) -> (f64, f64) {
        (self.mu(1.0, 1.0), self.kappa(1.0, 1.0))
    }
}

fn table_axis() -> Vec<f64> {
    (0..TABLE_POINTS).map(|i| 0.5 + i as f64 / (TABLE_POINTS - 1) as f64).collect()
}

/// Cell index and fraction; values outside the table are clamped.
fn bracket(axis: &[f64], x: f64) -> (usize, f64) {
    let n = axis.len();
    let x = x.clamp(axis[0], axis[n - 1]);
    let h = axis[1] - axis[0];
    let i = (((x - axis[0]) / h).floor() as usize).min(n - 2);
    (i, (x - axis[i]) / h)
}

/// Fluctuations `(ρ̃, ũ, θ̃)` on the slab.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub rho_t: Vec<f64>,
    pub u_t: [Vec<f64>; 3],
    pub theta_t: Vec<f64>,
    pub epsilon: f64,
    pub time: f64,
    pub slab: Slab,
}

impl FluidState {
    pub fn new(
        rho_t: Vec<f64>,
        u_t: [Vec<f64>; 3],
        theta_t: Vec<f64>,
        epsilon: f64,
        slab: Slab,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon {epsilon} outside (0, 1)")));
        }
        let n = slab.cells();
        check_len(n, rho_t.len())?;
        check_len(n, theta_t.len())?;
        for c in &u_t {
            check_len(n, c.len())?;
        }
        let s = Self { rho_t, u_t, theta_t, epsilon, time: 0.0, slab };
        s.check_positive()?;
        Ok(s)
    }

    pub fn zero(epsilon: f64, slab: Slab) -> Result<Self> {
        let n = slab.cells();
        Self::new(vec![0.0; n], [vec![0.0; n], vec![0.0; n], vec![0.0; n]], vec![0.0; n], epsilon, slab)
    }

    pub fn check_positive(&self) -> Result<()> {
        let e = self.epsilon;
        for i in 0..self.slab.cells() {
            if !(1.0 + e * self.rho_t[i] > 0.0) || !(1.0 + e * self.theta_t[i] > 0.0) {
                return Err(Error::Positivity(format!("fluid density or temperature at cell {i}")));
            }
        }
        Ok(())
    }

    /// `ρ = 1 + ερ̃` per cell.
    pub fn rho(&self) -> Vec<f64> {
        self.rho_t.iter().map(|r| 1.0 + self.epsilon * r).collect()
    }

    /// `θ = 1 + εθ̃` per cell.
    pub fn theta(&self) -> Vec<f64> {
        self.theta_t.iter().map(|t| 1.0 + self.epsilon * t).collect()
    }

    fn pack(&self) -> [Vec<f64>; 5] {
        [self.rho_t.clone(), self.u_t[0].clone(), self.u_t[1].clone(), self.u_t[2].clone(), self.theta_t.clone()]
    }

    fn unpack(&self, f: [Vec<f64>; 5], time: f64) -> Self {
        let [r, u0, u1, u2, t] = f;
        Self { rho_t: r, u_t: [u0, u1, u2], theta_t: t, epsilon: self.epsilon, time, slab: self.slab.clone() }
    }
}

/// Time derivative split into the `1/ε` acoustic block and the rest; field
/// order `(ρ̃, ũ₁, ũ₂, ũ₃, θ̃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CnsRhs {
    pub stiff: [Vec<f64>; 5],
    pub nonstiff: [Vec<f64>; 5],
}

impl CnsRhs {
    pub fn total(&self) -> [Vec<f64>; 5] {
        std::array::from_fn(|a| self.stiff[a].iter().zip(&self.nonstiff[a]).map(|(x, y)| x + y).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnsModel {
    pub transport: TransportTable,
    pub heat_flux: HeatFlux,
    /// Keeps the `ε/(3ρ) μ σ:σ` heating term.
    pub viscous_heating: bool,
}

impl CnsModel {
    pub fn new(transport: TransportTable) -> Self {
        Self { transport, heat_flux: HeatFlux::SmallMach, viscous_heating: true }
    }

    pub fn rhs(&self, s: &FluidState) -> Result<CnsRhs> {
        s.check_positive()?;
        let slab = &s.slab;
        let e = s.epsilon;
        let n = slab.cells();
        let d = |f: &[f64]| slab.derivative(f);
        let rho = s.rho();
        let theta = s.theta();
        let du: Vec<Vec<f64>> = s.u_t.iter().map(|c| d(c)).collect();
        let dtheta = d(&s.theta_t);
        let rt: Vec<f64> = (0..n).map(|i| s.rho_t[i] + s.theta_t[i]).collect();
        let drt = d(&rt);
        let stiff = [
            du[0].iter().map(|x| -x / e).collect(),
            drt.iter().map(|x| -x / e).collect(),
            vec![0.0; n],
            vec![0.0; n],
            du[0].iter().map(|x| -2.0 / 3.0 * x / e).collect(),
        ];
        let mu: Vec<f64> = (0..n).map(|i| self.transport.mu(rho[i], theta[i])).collect();
        let kappa: Vec<f64> = (0..n).map(|i| self.transport.kappa(rho[i], theta[i])).collect();
        let sig: Vec<[[f64; 3]; 3]> = (0..n).map(|i| stress_from_gradient([du[0][i], du[1][i], du[2][i]])).collect();
        // ∂₁(μ σ_{1j}) is the only surviving divergence component.
        let visc: Vec<Vec<f64>> = (0..3).map(|j| d(&(0..n).map(|i| mu[i] * sig[i][0][j]).collect::<Vec<_>>())).collect();
        let ru: Vec<f64> = (0..n).map(|i| s.rho_t[i] * s.u_t[0][i]).collect();
        let dru = d(&ru);
        let rth: Vec<f64> = (0..n).map(|i| s.rho_t[i] * s.theta_t[i]).collect();
        let drth = d(&rth);
        let heat = d(&(0..n).map(|i| kappa[i] * dtheta[i]).collect::<Vec<_>>());
        let c_heat = self.heat_flux.coefficient();
        let u1 = &s.u_t[0];
        let mut nonstiff: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
        for i in 0..n {
            nonstiff[0][i] = -dru[i];
            for j in 0..3 {
                let mut v = -u1[i] * du[j][i] + visc[j][i] / rho[i];
                if j == 0 {
                    v += s.rho_t[i] / rho[i] * drt[i] - drth[i] / rho[i];
                }
                nonstiff[1 + j][i] = v;
            }
            let ss: f64 = sig[i].iter().flatten().map(|x| x * x).sum();
            let mut t = -u1[i] * dtheta[i] - 2.0 / 3.0 * s.theta_t[i] * du[0][i] + c_heat * heat[i] / rho[i];
            if self.viscous_heating {
                t += e * mu[i] * ss / (3.0 * rho[i]);
            }
            nonstiff[4][i] = t;
        }
        Ok(CnsRhs { stiff, nonstiff })
    }

    /// Largest stable step of the explicit part.
    pub fn max_dt(&self, s: &FluidState) -> f64 {
        let k = (s.slab.cells() / 2) as f64;
        let diff = self
            .transport
            .mu
            .iter()
            .cloned()
            .fold(0.0, f64::max)
            .max(self.heat_flux.coefficient() * self.transport.kappa.iter().cloned().fold(0.0, f64::max))
            / (1.0 - 0.5 * s.epsilon);
        let umax = s.u_t.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs())) + 1e-12;
        let by_diffusion = if diff > 0.0 { 1.25 / (diff * k * k) } else { f64::INFINITY };
        by_diffusion.min(0.5 * s.slab.dx() / umax)
    }

    /// One integrating-factor SSP-RK3 step.
    pub fn step(&self, s: &FluidState, dt: f64) -> Result<FluidState> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step {dt}")));
        }
        let slab = &s.slab;
        let e = s.epsilon;
        let f0 = to_fourier(slab, &s.pack());
        let eval = |f: &[Vec<Complex64>; 5]| -> Result<[Vec<Complex64>; 5]> {
            let st = s.unpack(from_fourier(slab, f), s.time);
            Ok(to_fourier(slab, &self.rhs(&st)?.nonstiff))
        };
        let prop = |f: &[Vec<Complex64>; 5], tau: f64| acoustic_propagate(slab, f, tau / e);
        let add = |a: &[Vec<Complex64>; 5], b: &[Vec<Complex64>; 5], c: f64| -> [Vec<Complex64>; 5] {
            std::array::from_fn(|q| a[q].iter().zip(&b[q]).map(|(x, y)| x + y * c).collect())
        };
        let lin = |a: &[Vec<Complex64>; 5], ca: f64, b: &[Vec<Complex64>; 5], cb: f64| -> [Vec<Complex64>; 5] {
            std::array::from_fn(|q| a[q].iter().zip(&b[q]).map(|(x, y)| x * ca + y * cb).collect())
        };
        let k0 = eval(&f0)?;
        let u1 = prop(&add(&f0, &k0, dt), dt);
        let k1 = eval(&u1)?;
        let u2 = lin(&prop(&f0, 0.5 * dt), 0.75, &prop(&add(&u1, &k1, dt), -0.5 * dt), 0.25);
        let k2 = eval(&u2)?;
        let u3 = lin(&prop(&f0, dt), 1.0 / 3.0, &prop(&add(&u2, &k2, dt), 0.5 * dt), 2.0 / 3.0);
        let next = s.unpack(from_fourier(slab, &u3), s.time + dt);
        next.check_positive().map_err(|err| Error::AtTime {
            time: next.time,
            context: "fluid step".into(),
            source: Box::new(err),
        })?;
        Ok(next)
    }

    /// Advances to `t_end`, calling `observe` at every multiple of `cadence`
    /// (including `t = 0`) and at `t_end`.
    pub fn run(
        &self,
        initial: &FluidState,
        t_end: f64,
        cadence: f64,
        mut observe: impl FnMut(&FluidState) -> Result<()>,
    ) -> Result<FluidState> {
        let mut s = initial.clone();
        observe(&s)?;
        for (n_steps, dt, stop) in schedule(t_end, cadence, self.max_dt(initial))? {
            for _ in 0..n_steps {
                s = self.step(&s, dt)?;
            }
            s.time = stop;
            observe(&s)?;
        }
        Ok(s)
    }
}

/// Splits `[0, t_end]` into observation intervals, each covered by equal
/// steps no longer than `dt_max`. Returns `(steps, dt, end time)` per interval.
pub fn schedule(t_end: f64, cadence: f64, dt_max: f64) -> Result<Vec<(usize, f64, f64)>> {
    if !(t_end >= 0.0) || !(cadence > 0.0) || !(dt_max > 0.0) {
        return Err(Error::Config(format!("t_end {t_end}, cadence {cadence}, dt bound {dt_max}")));
    }
    let mut out = Vec::new();
    let full = (t_end / cadence + 1e-9).floor() as usize;
    let per = (cadence / dt_max).ceil().max(1.0) as usize;
    for i in 0..full {
        out.push((per, cadence / per as f64, (i + 1) as f64 * cadence));
    }
    let rest = t_end - full as f64 * cadence;
    if rest > 1e-9 * cadence {
        let m = (rest / dt_max).ceil().max(1.0) as usize;
        out.push((m, rest / m as f64, t_end));
    }
    Ok(out)
}

fn to_fourier(slab: &Slab, f: &[Vec<f64>; 5]) -> [Vec<Complex64>; 5] {
    std::array::from_fn(|q| {
        let mut b: Vec<Complex64> = f[q].iter().map(|&x| Complex64::new(x, 0.0)).collect();
        slab.forward(&mut b);
        b
    })
}

fn from_fourier(slab: &Slab, f: &[Vec<Complex64>; 5]) -> [Vec<f64>; 5] {
    let n = slab.cells() as f64;
    std::array::from_fn(|q| {
        let mut b = f[q].clone();
        slab.inverse(&mut b);
        b.iter().map(|c| c.re / n).collect()
    })
}

/// Exact flow of `∂_t(ρ̃, ũ₁, θ̃) = −∂₁ N (ρ̃, ũ₁, θ̃)` for time `y` (already
/// divided by `ε`), with `N = [[0,1,0],[1,0,1],[0,2/3,0]]`. Since `N³ = c²N`,
/// `c² = 5/3`: `exp(−ikyN) = I − i sin(cky)/c N + (cos(cky) − 1)/c² N²`.
pub fn acoustic_propagate(slab: &Slab, f: &[Vec<Complex64>; 5], y: f64) -> [Vec<Complex64>; 5] {
    let c2: f64 = 5.0 / 3.0;
    let c = c2.sqrt();
    let nmat = [[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 2.0 / 3.0, 0.0]];
    let mut n2 = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            n2[i][j] = (0..3).map(|k| nmat[i][k] * nmat[k][j]).sum();
        }
    }
    let mut out = f.clone();
    let cells = slab.cells();
    for m in 0..cells {
        let k = if cells % 2 == 0 && m == cells / 2 { 0.0 } else { slab.wavenumber(m) };
        let a = [f[0][m], f[1][m], f[4][m]];
        let s = Complex64::new(0.0, -(c * k * y).sin() / c);
        let co = ((c * k * y).cos() - 1.0) / c2;
        let mut r = [Complex64::new(0.0, 0.0); 3];
        for i in 0..3 {
            r[i] = a[i];
            for j in 0..3 {
                r[i] += s * nmat[i][j] * a[j] + co * n2[i][j] * a[j];
            }
        }
        out[0][m] = r[0];
        out[1][m] = r[1];
        out[4][m] = r[2];
    }
    out
}

/// One exact step of the slab incompressible system. With fields depending on
/// `x₁` only, `∇·u = 0` forces `u₁` constant, the pressure absorbs `∂₁` of the
/// first component, and the remaining equations are linear advection–diffusion
/// at speed `u₁`.
pub fn insf_step(
    slab: &Slab,
    u: &[Vec<f64>; 3],
    vartheta: &[f64],
    dt: f64,
    mu: f64,
    kappa: f64,
) -> Result<([Vec<f64>; 3], Vec<f64>)> {
    for c in u {
        check_len(slab.cells(), c.len())?;
    }
    check_len(slab.cells(), vartheta.len())?;
    let div = slab.derivative(&u[0]).iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if div > 1e-10 {
        return Err(Error::Config(format!("velocity not divergence free: |∇·u| = {div:e}")));
    }
    let n = slab.cells() as f64;
    let a = u[0].iter().sum::<f64>() / n;
    let evolve = |f: &[f64], nu: f64| -> Vec<f64> {
        let mut b: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        slab.forward(&mut b);
        for (m, c) in b.iter_mut().enumerate() {
            let k = slab.wavenumber(m);
            let k_adv = if slab.cells() % 2 == 0 && m == slab.cells() / 2 { 0.0 } else { k };
            *c *= Complex64::new(-nu * k * k * dt, -k_adv * a * dt).exp();
        }
        slab.inverse(&mut b);
        b.iter().map(|c| c.re / n).collect()
    };
    let out = [vec![a; slab.cells()], evolve(&u[1], mu), evolve(&u[2], mu)];
    Ok((out, evolve(vartheta, kappa)))
}

/// `ϑ = (3/5)θ − (2/5)ρ`.
pub fn insf_temperature(rho: &[f64], theta: &[f64]) -> Vec<f64> {
    rho.iter().zip(theta).map(|(r, t)| 0.6 * t - 0.4 * r).collect()
}
