//! Time integration of `ε²∂_t g + ε v·∇_x g + 𝓛g = εQ(g, g)` on the slab.
//!
//! Strang splitting: transport half step, collision step, transport half
//! step. Consecutive transport halves between observations are merged.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cns::{schedule, FluidState};
use crate::collision::{CollisionKernel, KernelMode, Resolvent};
use crate::error::{check_len, Error, Result};
use crate::maxwellian::MaxwellianParams;
use crate::slab::Slab;
use crate::velocity_grid::{invariants, VelocityGrid};

/// Fluctuation `g` with `f = M(1 + εg)`, stored as `g[cell * nodes + node]`.
#[derive(Debug, Clone)]
pub struct KineticState {
    pub g: Vec<f64>,
    pub epsilon: f64,
    pub time: f64,
    pub slab: Slab,
    pub grid: Arc<VelocityGrid>,
}

impl KineticState {
    pub fn new(g: Vec<f64>, epsilon: f64, slab: Slab, grid: Arc<VelocityGrid>) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon {epsilon} outside (0, 1)")));
        }
        check_len(slab.cells() * grid.len(), g.len())?;
        let s = Self { g, epsilon, time: 0.0, slab, grid };
        s.check_positive()?;
        Ok(s)
    }

    pub fn zero(epsilon: f64, slab: Slab, grid: Arc<VelocityGrid>) -> Result<Self> {
        let n = slab.cells() * grid.len();
        Self::new(vec![0.0; n], epsilon, slab, grid)
    }

    /// Same `g` at every cell.
    pub fn homogeneous(g: &[f64], epsilon: f64, slab: Slab, grid: Arc<VelocityGrid>) -> Result<Self> {
        check_len(grid.len(), g.len())?;
        let full = (0..slab.cells()).flat_map(|_| g.iter().copied()).collect();
        Self::new(full, epsilon, slab, grid)
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        let nv = self.grid.len();
        &self.g[c * nv..(c + 1) * nv]
    }

    /// `f = M(1 + εg)` in cell `c`.
    pub fn density(&self, c: usize) -> Vec<f64> {
        self.cell(c).iter().zip(self.grid.maxwell_weights()).map(|(g, m)| m * (1.0 + self.epsilon * g)).collect()
    }

    pub fn check_positive(&self) -> Result<()> {
        let nv = self.grid.len();
        for (i, g) in self.g.iter().enumerate() {
            let x = 1.0 + self.epsilon * g;
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Positivity(format!(
                    "1 + εg = {x:e} at cell {}, node {}",
                    i / nv,
                    i % nv
                )));
            }
        }
        Ok(())
    }

    /// Slab totals of `(∫f, ∫vf, ∫|v|²f)`.
    pub fn conserved_totals(&self) -> [f64; 5] {
        let mut out = [0.0; 5];
        for c in 0..self.slab.cells() {
            let m = self.grid.raw_moments(&self.density(c)).expect("cell length matches grid").as_array();
            for a in 0..5 {
                out[a] += self.slab.dx() * m[a];
            }
        }
        out
    }
}

/// `g^in` with `M(1 + εg^in) = ℳ(1 + ερ̃, εũ, 1 + εθ̃)` at every node, so
/// the initial relative entropy to the fluid Maxwellian is zero.
pub fn well_prepared_initial(fluid: &FluidState, grid: Arc<VelocityGrid>) -> Result<KineticState> {
    let e = fluid.epsilon;
    let nv = grid.len();
    let mut g = Vec::with_capacity(fluid.slab.cells() * nv);
    let phi: Vec<[f64; 5]> = grid.nodes().iter().map(invariants).collect();
    for c in 0..fluid.slab.cells() {
        let p = MaxwellianParams::from_fluctuation(
            e,
            fluid.rho_t[c],
            [fluid.u_t[0][c], fluid.u_t[1][c], fluid.u_t[2][c]],
            fluid.theta_t[c],
        )?;
        let a = p.exponent();
        for ph in &phi {
            g.push((0..5).map(|i| a[i] * ph[i]).sum::<f64>().exp_m1() / e);
        }
    }
    let mut s = KineticState::new(g, e, fluid.slab.clone(), grid)?;
    s.time = fluid.time;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransportScheme {
    /// Exact Fourier shift per velocity node.
    #[default]
    Spectral,
    /// First-order upwind.
    Upwind,
}

/// How the BGK collision step is taken. The binary kernel always uses an
/// implicit linear part with explicit `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CollisionModel {
    /// Exact relaxation of `G` towards its discrete Maxwellian.
    #[default]
    Nonlinear,
    /// `𝓛` only (`Q` disabled).
    Linearized,
    /// `𝓛` exactly, `Q(g, g)` by exponential Euler.
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub transport: TransportScheme,
    pub collision: CollisionModel,
    pub c_cfl: f64,
    pub c_stiff: f64,
    /// Worker threads for per-cell collision work; `1` runs inline.
    pub threads: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            transport: TransportScheme::Spectral,
            collision: CollisionModel::Nonlinear,
            c_cfl: 0.5,
            c_stiff: 0.1,
            threads: 1,
        }
    }
}

pub struct BoltzmannSolver {
    kernel: Arc<CollisionKernel>,
    options: SolverOptions,
}

impl BoltzmannSolver {
    pub fn new(kernel: Arc<CollisionKernel>, options: SolverOptions) -> Result<Self> {
        if !(options.c_cfl > 0.0 && options.c_cfl <= 1.0) || !(options.c_stiff > 0.0) || options.threads == 0 {
            return Err(Error::Config(format!("solver options {options:?}")));
        }
        Ok(Self { kernel, options })
    }

    pub fn kernel(&self) -> &CollisionKernel {
        &self.kernel
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// `c_cfl ε Δx / v_max`.
    pub fn cfl_bound(&self, epsilon: f64, slab: &Slab) -> f64 {
        self.options.c_cfl * epsilon * slab.dx() / self.kernel.grid().v_max()
    }

    /// Largest step: the CFL bound, further limited by `c_stiff ε²/λ` when
    /// `Q` is explicit (`λ` the relaxation rate or the spectral gap).
    pub fn max_dt(&self, epsilon: f64, slab: &Slab) -> Result<f64> {
        let cfl = self.cfl_bound(epsilon, slab);
        let explicit_q = match self.kernel.mode() {
            KernelMode::Bgk => self.options.collision == CollisionModel::Bilinear,
            KernelMode::MaxwellMolecules => true,
        };
        if explicit_q {
            let rate = self.kernel.spectral_gap()?;
            Ok(cfl.min(self.options.c_stiff * epsilon * epsilon / rate))
        } else {
            Ok(cfl)
        }
    }

    fn check_state(&self, s: &KineticState) -> Result<()> {
        if !Arc::ptr_eq(&s.grid, self.kernel.grid()) && s.grid.len() != self.kernel.grid().len() {
            return Err(Error::Dimension { expected: self.kernel.grid().len(), got: s.grid.len() });
        }
        Ok(())
    }

    /// One Strang step `T(dt/2) C(dt) T(dt/2)`.
    pub fn step(&self, s: &KineticState, dt: f64) -> Result<KineticState> {
        self.check_state(s)?;
        let bound = self.cfl_bound(s.epsilon, &s.slab);
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, bound });
        }
        let mut next = s.clone();
        self.transport(&mut next, 0.5 * dt);
        let coll = self.collision_operator(s.epsilon, dt)?;
        self.collide_all(&mut next, dt, &coll)?;
        self.transport(&mut next, 0.5 * dt);
        next.time = s.time + dt;
        self.guard(&next, "kinetic step")?;
        Ok(next)
    }

    fn guard(&self, s: &KineticState, what: &str) -> Result<()> {
        s.check_positive()
            .map_err(|e| Error::AtTime { time: s.time, context: what.into(), source: Box::new(e) })
    }

    /// Advances to `t_end`, handing every state at a multiple of `cadence`
    /// (including the initial one) and the final state to `observe`.
    pub fn run_observed(
        &self,
        initial: &KineticState,
        t_end: f64,
        cadence: f64,
        mut observe: impl FnMut(&KineticState) -> Result<()>,
    ) -> Result<KineticState> {
        self.check_state(initial)?;
        let bound = self.max_dt(initial.epsilon, &initial.slab)?;
        let plan = schedule(t_end, cadence, bound)?;
        let mut s = initial.clone();
        observe(&s)?;
        let mut cache: Option<(f64, CollisionOperator)> = None;
        for (n, dt, stop) in plan {
            let coll = match cache.take() {
                Some((d, c)) if d == dt => c,
                _ => self.collision_operator(s.epsilon, dt)?,
            };
            let t0 = s.time;
            self.transport(&mut s, 0.5 * dt);
            for i in 0..n {
                s.time = t0 + i as f64 * dt;
                self.collide_all(&mut s, dt, &coll).map_err(|e| Error::AtTime {
                    time: s.time,
                    context: "collision step".into(),
                    source: Box::new(e),
                })?;
                self.transport(&mut s, if i + 1 == n { 0.5 * dt } else { dt });
                s.time = t0 + (i + 1) as f64 * dt;
                self.guard(&s, "transport step")?;
            }
            s.time = stop;
            cache = Some((dt, coll));
            observe(&s)?;
        }
        Ok(s)
    }

    /// Collects every observed state.
    pub fn run(&self, initial: &KineticState, t_end: f64, cadence: f64) -> Result<Vec<KineticState>> {
        let mut frames = Vec::new();
        self.run_observed(initial, t_end, cadence, |s| {
            frames.push(s.clone());
            Ok(())
        })?;
        Ok(frames)
    }

    /// Free streaming `∂_t g + (1/ε) v₁ ∂_x g = 0` over time `tau`.
    pub fn transport(&self, s: &mut KineticState, tau: f64) {
        let nv = s.grid.len();
        let cells = s.slab.cells();
        let speed: Vec<f64> = s.grid.nodes().iter().map(|v| v[0] / s.epsilon).collect();
        match self.options.transport {
            TransportScheme::Spectral => {
                let mut buf = vec![Complex64::new(0.0, 0.0); cells];
                let inv_n = 1.0 / cells as f64;
                for k in 0..nv {
                    for c in 0..cells {
                        buf[c] = Complex64::new(s.g[c * nv + k], 0.0);
                    }
                    s.slab.forward(&mut buf);
                    for (j, b) in buf.iter_mut().enumerate() {
                        let w = if cells % 2 == 0 && j == cells / 2 { 0.0 } else { s.slab.wavenumber(j) };
                        *b *= Complex64::from_polar(inv_n, -w * speed[k] * tau);
                    }
                    s.slab.inverse(&mut buf);
                    for c in 0..cells {
                        s.g[c * nv + k] = buf[c].re;
                    }
                }
            }
            TransportScheme::Upwind => {
                let dx = s.slab.dx();
                let mut col = vec![0.0; cells];
                for k in 0..nv {
                    let nu = speed[k] * tau / dx;
                    for c in 0..cells {
                        col[c] = s.g[c * nv + k];
                    }
                    for c in 0..cells {
                        let up = if nu >= 0.0 { col[(c + cells - 1) % cells] } else { col[(c + 1) % cells] };
                        s.g[c * nv + k] = col[c] - nu.abs() * (col[c] - up);
                    }
                }
            }
        }
    }

    fn collision_operator(&self, epsilon: f64, dt: f64) -> Result<CollisionOperator> {
        let lambda = dt / (epsilon * epsilon);
        Ok(match self.kernel.mode() {
            KernelMode::Bgk => CollisionOperator::Bgk {
                decay: (-self.kernel.relaxation_rate() * lambda).exp(),
            },
            KernelMode::MaxwellMolecules => CollisionOperator::Full { resolvent: self.kernel.resolvent(lambda)? },
        })
    }

    fn collide_all(&self, s: &mut KineticState, dt: f64, op: &CollisionOperator) -> Result<()> {
        let nv = s.grid.len();
        let e = s.epsilon;
        let threads = self.options.threads.min(s.slab.cells());
        if threads <= 1 {
            for cell in s.g.chunks_mut(nv) {
                self.collide_cell(cell, e, dt, op)?;
            }
            return Ok(());
        }
        let per = s.slab.cells().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = s
                .g
                .chunks_mut(per * nv)
                .map(|block| {
                    scope.spawn(move || -> Result<()> {
                        for cell in block.chunks_mut(nv) {
                            self.collide_cell(cell, e, dt, op)?;
                        }
                        Ok(())
                    })
                })
                .collect();
            handles.into_iter().try_for_each(|h| h.join().expect("collision worker panicked"))
        })
    }

    /// Collision step in one cell, in place.
    pub fn collide_cell(&self, g: &mut [f64], epsilon: f64, dt: f64, op: &CollisionOperator) -> Result<()> {
        let grid = self.kernel.grid();
        match op {
            CollisionOperator::Bgk { decay } => match self.options.collision {
                CollisionModel::Nonlinear => {
                    // G − 1 = εg relaxes to E − 1 at fixed moments.
                    let x: Vec<f64> = g.iter().map(|v| epsilon * v).collect();
                    let eq = self.kernel.equilibrium(&x)?;
                    for k in 0..g.len() {
                        g[k] = (eq.em1[k] + (x[k] - eq.em1[k]) * decay) / epsilon;
                    }
                }
                CollisionModel::Linearized => relax(grid, g, *decay)?,
                CollisionModel::Bilinear => {
                    let q = self.kernel.bilinear_q(g, g)?;
                    relax(grid, g, *decay)?;
                    let c = epsilon / self.kernel.relaxation_rate() * (1.0 - decay);
                    for k in 0..g.len() {
                        g[k] += c * q[k];
                    }
                }
            },
            CollisionOperator::Full { resolvent } => {
                // (I + τ𝓛) g⁺ = g + (dt/ε) Q(g, g).
                let q = if self.options.collision == CollisionModel::Linearized {
                    vec![0.0; g.len()]
                } else {
                    self.kernel.bilinear_q(g, g)?
                };
                let rhs: Vec<f64> = g.iter().zip(&q).map(|(a, b)| a + dt / epsilon * b).collect();
                g.copy_from_slice(&resolvent.apply(&rhs));
            }
        }
        Ok(())
    }
}

/// `g ← Pg + decay · P^⊥g`.
fn relax(grid: &VelocityGrid, g: &mut [f64], decay: f64) -> Result<()> {
    let p = grid.project_hydro(g)?;
    for k in 0..g.len() {
        g[k] = p[k] + decay * (g[k] - p[k]);
    }
    Ok(())
}

/// Per-step collision data shared by all cells.
#[derive(Debug)]
pub enum CollisionOperator {
    Bgk { decay: f64 },
    Full { resolvent: Resolvent },
}
