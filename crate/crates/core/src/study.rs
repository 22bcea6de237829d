//! Paired kinetic/fluid runs over an ε sweep, rate fits and the configured
//! pass/fail checks. File handling lives in the command-line front end.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::boltzmann::{well_prepared_initial, BoltzmannSolver, CollisionModel, KineticState, SolverOptions, TransportScheme};
use crate::cns::{CnsModel, FluidState, HeatFlux, TransportTable};
use crate::collision::{CollisionKernel, KernelMode};
use crate::entropy::{cell_moments, entropy_split, fluid_targets, BudgetTracker, EntropyReport};
use crate::error::{Error, Result};
use crate::slab::Slab;
use crate::velocity_grid::{Rule, SphereRule, VelocityGrid};

/// Largest `H/ε²` accepted for constructed well-prepared data.
pub const WELL_PREPARED_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// `ũ₁ = 0`, `ρ̃ + θ̃ = 0`, kinetic data equal to the fluid Maxwellian.
    WellPrepared,
    /// Fluid data with `∂ũ₁ ≠ 0` and `ρ̃ + θ̃ ≠ 0`; kinetic data still the fluid
    /// Maxwellian, so the initial entropy vanishes but acoustic waves run.
    IllPrepared,
    /// Homogeneous non-Maxwellian `f` relaxing in place; the fluid side is the
    /// constant state with the same moments.
    HomogeneousRelaxation,
    /// One density mode `ρ̃ = a cos x`.
    AcousticMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub mode: KernelMode,
    #[serde(default = "one")]
    pub relaxation_rate: f64,
    #[serde(default = "one")]
    pub b_const: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { mode: KernelMode::Bgk, relaxation_rate: 1.0, b_const: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

/// Pass/fail checks evaluated after the sweep; unset entries are skipped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertions {
    /// Band for the fitted slope of `sup_t H/ε²` against `ε`.
    pub h_slope: Option<[f64; 2]>,
    /// Lower band for the slope of `|H(M_f|M_ε)/ε² − quadratic|` (sup over time).
    pub quad_error_slope: Option<f64>,
    /// Smallest allowed `budget_slack` over every row.
    pub min_budget_slack: Option<f64>,
    /// Largest allowed `|split_defect|`.
    pub max_split_defect: Option<f64>,
    /// `H/ε²` must not increase by more than this between rows.
    pub monotone_h: Option<f64>,
    /// `sup_t H/ε²` must stay below this (boundedness for ill-prepared data).
    pub max_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub epsilon_list: Vec<f64>,
    pub cells: usize,
    pub velocity_points: usize,
    #[serde(default = "default_sphere")]
    pub sphere: [usize; 2],
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub collision_model: CollisionModel,
    #[serde(default)]
    pub transport: TransportScheme,
    #[serde(default)]
    pub heat_flux: HeatFlux,
    #[serde(default = "yes")]
    pub viscous_heating: bool,
    pub t_end: f64,
    pub cadence: f64,
    #[serde(default = "half")]
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "half")]
    pub c_cfl: f64,
    #[serde(default = "tenth")]
    pub c_stiff: f64,
    /// Worker threads for the per-cell collision work inside one run.
    #[serde(default = "one_usize")]
    pub threads: usize,
    /// Where the front end writes its files.
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub assertions: Assertions,
}

fn default_sphere() -> [usize; 2] {
    [6, 12]
}
fn yes() -> bool {
    true
}
fn half() -> f64 {
    0.5
}
fn tenth() -> f64 {
    0.1
}
fn one_usize() -> usize {
    1
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epsilon_list.is_empty() {
            return bad("epsilon_list is empty".into());
        }
        if self.epsilon_list.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return bad(format!("epsilon_list {:?} leaves (0, 1)", self.epsilon_list));
        }
        if self.epsilon_list.windows(2).any(|w| !(w[1] < w[0])) {
            return bad(format!("epsilon_list {:?} is not strictly decreasing", self.epsilon_list));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) || !(self.cadence > 0.0) {
            return bad(format!("t_end {} / cadence {}", self.t_end, self.cadence));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return bad(format!("amplitude {}", self.amplitude));
        }
        if self.kernel.mode == KernelMode::MaxwellMolecules && self.velocity_points > 12 {
            return bad(format!("binary kernel on {}³ velocity nodes is out of reach", self.velocity_points));
        }
        Ok(())
    }

    fn grid(&self) -> Result<VelocityGrid> {
        VelocityGrid::build_with_sphere(
            self.velocity_points,
            Rule::GaussHermite,
            0.0,
            SphereRule::product(self.sphere[0], self.sphere[1])?,
        )
    }
}

/// Grid, kernel and transport table shared by every ε of a study.
pub struct StudySetup {
    pub grid: Arc<VelocityGrid>,
    pub kernel: Arc<CollisionKernel>,
    pub model: CnsModel,
    pub slab: Slab,
}

impl StudySetup {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = Arc::new(cfg.grid()?);
        let kernel = Arc::new(match cfg.kernel.mode {
            KernelMode::Bgk => CollisionKernel::bgk(grid.clone(), cfg.kernel.relaxation_rate)?,
            KernelMode::MaxwellMolecules => CollisionKernel::maxwell_molecules(grid.clone(), cfg.kernel.b_const)?,
        });
        let model = CnsModel {
            transport: TransportTable::from_kernel(&kernel)?,
            heat_flux: cfg.heat_flux,
            viscous_heating: cfg.viscous_heating,
        };
        Ok(Self { grid, kernel, model, slab: Slab::new(cfg.cells)? })
    }
}

/// Random smooth profile `a Σ_{k=1,2} c_k cos(kx + φ_k)` with `|c_k| ≤ 1/k`.
fn profile(rng: &mut impl Rng, slab: &Slab, amp: f64) -> Vec<f64> {
    let c: [(f64, f64); 2] = std::array::from_fn(|k| {
        (rng.gen_range(0.5..1.0) / (k + 1) as f64, rng.gen_range(0.0..std::f64::consts::TAU))
    });
    slab.field(|x| amp * c.iter().enumerate().map(|(k, (a, p))| a * ((k + 1) as f64 * x + p).cos()).sum::<f64>())
}

/// `(fluid, kinetic)` initial data for one ε. The random draws depend on the
/// seed only, so every ε of a sweep sees the same profiles.
pub fn initial_data(cfg: &RunConfig, setup: &StudySetup, epsilon: f64) -> Result<(FluidState, KineticState)> {
    let slab = &setup.slab;
    let n = slab.cells();
    let a = cfg.amplitude;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let zero = || vec![0.0; n];
    let fluid = match cfg.scenario {
        Scenario::WellPrepared | Scenario::IllPrepared => {
            let theta = profile(&mut rng, slab, a);
            let u2 = profile(&mut rng, slab, a);
            let u3 = profile(&mut rng, slab, 0.5 * a);
            let mut rho: Vec<f64> = theta.iter().map(|t| -t).collect();
            let mut u1 = zero();
            if cfg.scenario == Scenario::IllPrepared {
                u1 = profile(&mut rng, slab, a);
                for (r, d) in rho.iter_mut().zip(profile(&mut rng, slab, a)) {
                    *r += d;
                }
            }
            FluidState::new(rho, [u1, u2, u3], theta, epsilon, slab.clone())?
        }
        Scenario::AcousticMode => FluidState::new(slab.field(|x| a * x.cos()), [zero(), zero(), zero()], zero(), epsilon, slab.clone())?,
        Scenario::HomogeneousRelaxation => {
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let g = setup.grid.field(|v| a * ((v[0] * v[1] + phase).sin() + 0.5 * (v[2] - v[0]).tanh()));
            let kin = KineticState::homogeneous(&g, epsilon, slab.clone(), setup.grid.clone())?;
            let (rb, ub, thb) = cell_moments(&setup.grid, &g)?;
            let fluid = FluidState::new(
                vec![rb; n],
                ub.map(|u| vec![u; n]),
                vec![thb; n],
                epsilon,
                slab.clone(),
            )?;
            return Ok((fluid, kin));
        }
    };
    let kin = well_prepared_initial(&fluid, setup.grid.clone())?;
    if cfg.scenario == Scenario::WellPrepared {
        let h = entropy_split(&kin, &fluid_targets(&fluid)?)?.total / (epsilon * epsilon);
        if !(h <= WELL_PREPARED_TOLERANCE) {
            return Err(Error::Config(format!("well-prepared data have H/ε² = {h:e}")));
        }
    }
    Ok((fluid, kin))
}

/// Reports of one ε, or the error that stopped it with the rows gathered so far.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonRun {
    pub epsilon: f64,
    pub reports: Vec<EntropyReport>,
    pub abort: Option<Error>,
}

impl EpsilonRun {
    pub fn sup_h(&self) -> f64 {
        self.reports.iter().map(|r| r.h_over_eps2).fold(0.0, f64::max)
    }

    pub fn sup_quad_error(&self) -> f64 {
        self.reports.iter().map(|r| r.quad_error).fold(0.0, f64::max)
    }
}

/// Runs the fluid solver, then the kinetic solver with every observation
/// paired with the fluid state at the same time.
pub fn run_epsilon(cfg: &RunConfig, setup: &StudySetup, epsilon: f64) -> Result<EpsilonRun> {
    let (fluid0, kin0) = initial_data(cfg, setup, epsilon)?;
    let mut fluids = Vec::new();
    let fluid_end = if cfg.scenario == Scenario::HomogeneousRelaxation {
        // No gradients: the fluid state is stationary.
        for (_, _, t) in crate::cns::schedule(cfg.t_end, cfg.cadence, cfg.t_end.max(cfg.cadence))? {
            let mut f = fluid0.clone();
            f.time = t;
            fluids.push(f);
        }
        fluids.insert(0, fluid0.clone());
        Ok(())
    } else {
        setup
            .model
            .run(&fluid0, cfg.t_end, cfg.cadence, |s| {
                fluids.push(s.clone());
                Ok(())
            })
            .map(|_| ())
    };
    let solver = BoltzmannSolver::new(
        setup.kernel.clone(),
        SolverOptions {
            transport: cfg.transport,
            collision: cfg.collision_model,
            c_cfl: cfg.c_cfl,
            c_stiff: cfg.c_stiff,
            threads: cfg.threads,
        },
    )?;
    let mut tracker = BudgetTracker::new(&setup.kernel, &setup.model);
    let mut next = 0;
    let kinetic_end = solver.run_observed(&kin0, cfg.t_end, cfg.cadence, |k| {
        let Some(f) = fluids.get(next) else {
            return Err(Error::AtTime {
                time: k.time,
                context: "fluid trajectory ended early".into(),
                source: Box::new(Error::Misaligned(vec![k.time])),
            });
        };
        next += 1;
        tracker.push(k, f)
    });
    let abort = fluid_end.err().or(kinetic_end.err());
    Ok(EpsilonRun { epsilon, reports: tracker.finish()?, abort })
}

/// Least-squares line through `(log ε, log value)`: `(slope, intercept, r²)`.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if pairs.len() < 2 {
        return Err(Error::Config(format!("{} points cannot be fitted", pairs.len())));
    }
    if let Some(p) = pairs.iter().find(|p| !(p.0 > 0.0) || !(p.1 > 0.0)) {
        return Err(Error::Unavailable(format!("floor: non-positive pair {p:?}")));
    }
    let pts: Vec<(f64, f64)> = pairs.iter().map(|(e, v)| (e.ln(), v.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Config("all ε equal".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok((slope, my - slope * mx, r2))
}

/// A fitted rate, or the marker for quantities at the quadrature floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rate {
    Fit { slope: f64, intercept: f64, r2: f64 },
    Floor(Floor),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Floor {
    Floor,
}

impl Rate {
    pub fn of(pairs: &[(f64, f64)]) -> Self {
        match fit_rate(pairs) {
            Ok((slope, intercept, r2)) => Rate::Fit { slope, intercept, r2 },
            Err(_) => Rate::Floor(Floor::Floor),
        }
    }

    pub fn slope(&self) -> Option<f64> {
        match self {
            Rate::Fit { slope, .. } => Some(*slope),
            Rate::Floor(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub schema: u32,
    pub scenario: Scenario,
    pub epsilons: Vec<f64>,
    pub sup_h_over_eps2: Vec<f64>,
    pub sup_quad_error: Vec<f64>,
    /// Final-time residual magnitudes per ε.
    pub residuals: BTreeMap<String, Vec<f64>>,
    /// Rates against ε: `sup_h_over_eps2`, `quad_error` and every residual.
    pub rates: BTreeMap<String, Rate>,
    pub assertions: Vec<AssertionOutcome>,
    /// `(ε, message)` for runs that stopped early.
    pub aborted: Vec<(f64, String)>,
}

impl StudySummary {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }
}

pub const SCHEMA_VERSION: u32 = 1;

pub fn summarize(cfg: &RunConfig, runs: &[EpsilonRun]) -> StudySummary {
    let complete: Vec<&EpsilonRun> = runs.iter().filter(|r| r.abort.is_none() && !r.reports.is_empty()).collect();
    let pairs = |f: &dyn Fn(&EpsilonRun) -> f64| complete.iter().map(|r| (r.epsilon, f(r))).collect::<Vec<_>>();
    let mut rates = BTreeMap::new();
    rates.insert("sup_h_over_eps2".to_string(), Rate::of(&pairs(&|r| r.sup_h())));
    rates.insert("quad_error".to_string(), Rate::of(&pairs(&|r| r.sup_quad_error())));
    let mut residuals: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in runs {
        if let Some(last) = r.reports.last() {
            for (k, v) in &last.residuals {
                residuals.entry(k.clone()).or_default().push(*v);
            }
        }
    }
    if let Some(first) = complete.first().and_then(|r| r.reports.last()) {
        for k in first.residuals.keys() {
            let p = pairs(&|r| r.reports.last().and_then(|x| x.residual(k)).unwrap_or(0.0));
            rates.insert(k.clone(), Rate::of(&p));
        }
    }
    let assertions = evaluate(&cfg.assertions, runs, &rates);
    StudySummary {
        schema: SCHEMA_VERSION,
        scenario: cfg.scenario,
        epsilons: runs.iter().map(|r| r.epsilon).collect(),
        sup_h_over_eps2: runs.iter().map(|r| r.sup_h()).collect(),
        sup_quad_error: runs.iter().map(|r| r.sup_quad_error()).collect(),
        residuals,
        rates,
        assertions,
        aborted: runs.iter().filter_map(|r| r.abort.as_ref().map(|e| (r.epsilon, e.to_string()))).collect(),
    }
}

fn evaluate(a: &Assertions, runs: &[EpsilonRun], rates: &BTreeMap<String, Rate>) -> Vec<AssertionOutcome> {
    let mut out = Vec::new();
    let mut push = |name: &str, pass: bool, detail: String| out.push(AssertionOutcome { name: name.into(), pass, detail });
    let rows = || runs.iter().flat_map(|r| r.reports.iter());
    if let Some([lo, hi]) = a.h_slope {
        let s = rates.get("sup_h_over_eps2").and_then(|r| r.slope());
        push("h_slope", s.is_some_and(|s| s >= lo && s <= hi), format!("slope {s:?}, band [{lo}, {hi}]"));
    }
    if let Some(lo) = a.quad_error_slope {
        let s = rates.get("quad_error").and_then(|r| r.slope());
        push("quad_error_slope", s.is_some_and(|s| s >= lo), format!("slope {s:?}, floor {lo}"));
    }
    if let Some(lo) = a.min_budget_slack {
        let m = rows().map(|r| r.budget_slack).fold(f64::INFINITY, f64::min);
        push("min_budget_slack", m >= lo, format!("min slack {m:e}, bound {lo:e}"));
    }
    if let Some(hi) = a.max_split_defect {
        let m = rows().map(|r| r.split_defect.abs()).fold(0.0, f64::max);
        push("max_split_defect", m <= hi, format!("max |defect| {m:e}, bound {hi:e}"));
    }
    if let Some(tol) = a.monotone_h {
        let worst = runs
            .iter()
            .flat_map(|r| r.reports.windows(2).map(|w| w[1].h_over_eps2 - w[0].h_over_eps2))
            .fold(f64::NEG_INFINITY, f64::max);
        push("monotone_h", worst <= tol, format!("largest increase {worst:e}, tolerance {tol:e}"));
    }
    if let Some(hi) = a.max_h {
        let m = runs.iter().map(|r| r.sup_h()).fold(0.0, f64::max);
        push("max_h", m <= hi, format!("sup H/ε² {m:e}, bound {hi:e}"));
    }
    let aborted = runs.iter().filter(|r| r.abort.is_some()).count();
    push("runs_complete", aborted == 0, format!("{aborted} of {} runs aborted", runs.len()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_power_laws() {
        let (s, _, r2) = fit_rate(&[(0.1, 0.1), (0.05, 0.05)]).unwrap();
        assert!((s - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        let (s, _, _) = fit_rate(&[(0.1, 0.01), (0.05, 0.0025)]).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_positive_values_sit_at_the_floor() {
        assert!(matches!(fit_rate(&[(0.1, 0.0), (0.05, 1.0)]), Err(Error::Unavailable(_))));
        assert_eq!(Rate::of(&[(0.1, -1.0), (0.05, 1.0)]), Rate::Floor(Floor::Floor));
    }
}
