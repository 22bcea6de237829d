use std::sync::{Arc, LazyLock};

use kinetic_lab::boltzmann::{
    well_prepared_initial, BoltzmannSolver, CollisionModel, KineticState, SolverOptions, TransportScheme,
};
use kinetic_lab::cns::FluidState;
use kinetic_lab::collision::CollisionKernel;
use kinetic_lab::error::Error;
use kinetic_lab::slab::Slab;
use kinetic_lab::velocity_grid::{Rule, VelocityGrid};

static GRID8: LazyLock<Arc<VelocityGrid>> =
    LazyLock::new(|| Arc::new(VelocityGrid::build(8, Rule::GaussHermite, 0.0).unwrap()));

fn bgk(model: CollisionModel) -> BoltzmannSolver {
    let k = Arc::new(CollisionKernel::bgk(GRID8.clone(), 1.0).unwrap());
    BoltzmannSolver::new(k, SolverOptions { collision: model, ..Default::default() }).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `H(f|M) = Σ μ [(1+x) ln(1+x) − x]` per cell, `x = εg`, summed over the slab.
fn entropy_to_absolute(s: &KineticState) -> f64 {
    let mu = s.grid.measure();
    let nv = s.grid.len();
    s.g.iter()
        .enumerate()
        .map(|(i, g)| {
            let x = s.epsilon * g;
            mu[i % nv] * ((1.0 + x) * x.ln_1p() - x)
        })
        .sum::<f64>()
        * s.slab.dx()
}

fn fluid(eps: f64, slab: &Slab, amp: f64) -> FluidState {
    let th = slab.field(|x| amp * (x.sin() + 0.3 * (2.0 * x).cos()));
    let rho: Vec<f64> = th.iter().map(|t| -t).collect();
    FluidState::new(
        rho,
        [vec![0.0; slab.cells()], slab.field(|x| amp * x.cos()), slab.field(|x| 0.5 * amp * (2.0 * x).sin())],
        th,
        eps,
        slab.clone(),
    )
    .unwrap()
}

#[test]
fn equilibrium_is_stationary() {
    let slab = Slab::new(8).unwrap();
    let s = KineticState::zero(0.1, slab, GRID8.clone()).unwrap();
    for model in [CollisionModel::Nonlinear, CollisionModel::Linearized, CollisionModel::Bilinear] {
        let frames = bgk(model).run(&s, 0.05, 0.025).unwrap();
        assert_eq!(frames.len(), 3);
        assert!(frames.iter().all(|f| f.g.iter().all(|x| x.abs() < 1e-14)));
    }
    let only = bgk(CollisionModel::Nonlinear).run(&s, 0.0, 0.1).unwrap();
    assert_eq!(only.len(), 1);
    assert_eq!(only[0].time, 0.0);
}

#[test]
fn homogeneous_invariant_fluctuation_moves_only_through_q() {
    let slab = Slab::new(4).unwrap();
    let e = 0.2;
    let g = GRID8.field(|v| 0.3 + 0.5 * v[0] - 0.2 * v[2] + 0.1 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
    let s = KineticState::homogeneous(&g, e, slab.clone(), GRID8.clone()).unwrap();
    let lin = bgk(CollisionModel::Linearized);
    let dt = lin.cfl_bound(e, &slab);
    let out = lin.step(&s, dt).unwrap();
    assert!(max_diff(&out.g, &s.g) < 1e-12);

    let bil = bgk(CollisionModel::Bilinear);
    let dt = bil.max_dt(e, &slab).unwrap();
    let out = bil.step(&s, dt).unwrap();
    let q = bil.kernel().bilinear_q(&g, &g).unwrap();
    let c = e * (1.0 - (-dt / (e * e)).exp());
    let expect: Vec<f64> = g.iter().zip(&q).map(|(a, b)| a + c * b).collect();
    for cell in 0..4 {
        assert!(max_diff(out.cell(cell), &expect) < 1e-12);
    }
    assert!(q.iter().any(|x| x.abs() > 1e-3));
}

#[test]
fn homogeneous_ortho_fluctuation_decays_exponentially() {
    let slab = Slab::new(4).unwrap();
    let e = 0.3;
    let g = GRID8
        .project_ortho(&GRID8.field(|v| (0.5 * v[0] * v[1] + 0.2 * v[2]) * (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 8.0).exp()))
        .unwrap();
    let s = KineticState::homogeneous(&g, e, slab, GRID8.clone()).unwrap();
    let t_end = 0.09;
    let end = bgk(CollisionModel::Linearized).run(&s, t_end, 0.03).unwrap().pop().unwrap();
    let decay = (-t_end / (e * e)).exp();
    for cell in 0..4 {
        let expect: Vec<f64> = g.iter().map(|x| x * decay).collect();
        assert!(max_diff(end.cell(cell), &expect) < 1e-12);
    }
}

#[test]
fn homogeneous_bgk_relaxation_dissipates_entropy() {
    let slab = Slab::new(4).unwrap();
    let e = 0.5;
    let g = GRID8.field(|v| 0.6 * (-(v[0] - 1.0).powi(2)).exp() - 0.3 * (-(v[1] + 0.5).powi(2) - v[2] * v[2]).exp());
    let s = KineticState::homogeneous(&g, e, slab, GRID8.clone()).unwrap();
    let frames = bgk(CollisionModel::Nonlinear).run(&s, 0.5, 0.01).unwrap();
    let h: Vec<f64> = frames.iter().map(entropy_to_absolute).collect();
    for w in h.windows(2) {
        assert!(w[1] - w[0] <= 1e-12, "entropy increased: {w:?}");
    }
    assert!(h.last().unwrap() < &(0.9 * h[0]));

    // Quadratic entropy of the linear model.
    let frames = bgk(CollisionModel::Linearized).run(&s, 0.5, 0.01).unwrap();
    let q: Vec<f64> = frames.iter().map(|f| f.g.iter().zip(f.grid.measure()).map(|(g, m)| m * g * g).sum()).collect();
    assert!(q.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn well_prepared_run_conserves_totals() {
    let slab = Slab::new(16).unwrap();
    let e = 0.1;
    let s = well_prepared_initial(&fluid(e, &slab, 0.5), GRID8.clone()).unwrap();
    let t_end = 0.2;
    for transport in [TransportScheme::Spectral, TransportScheme::Upwind] {
        let k = Arc::new(CollisionKernel::bgk(GRID8.clone(), 1.0).unwrap());
        let solver = BoltzmannSolver::new(k, SolverOptions { transport, ..Default::default() }).unwrap();
        let m0 = s.conserved_totals();
        let mut worst: f64 = 0.0;
        solver
            .run_observed(&s, t_end, 0.05, |st| {
                let m = st.conserved_totals();
                for a in 0..5 {
                    worst = worst.max((m[a] - m0[a]).abs());
                }
                Ok(())
            })
            .unwrap();
        assert!(worst / t_end < 1e-8, "{transport:?} drift {worst:e}");
    }
}

#[test]
fn linear_regime_is_second_order_in_amplitude() {
    let slab = Slab::new(16).unwrap();
    let e = 0.1;
    let t_end = 0.1;
    let diff = |a: f64| {
        let s = well_prepared_initial(&fluid(e, &slab, a), GRID8.clone()).unwrap();
        let full = bgk(CollisionModel::Nonlinear).run(&s, t_end, t_end).unwrap().pop().unwrap();
        let lin = bgk(CollisionModel::Linearized).run(&s, t_end, t_end).unwrap().pop().unwrap();
        max_diff(&full.g, &lin.g)
    };
    let (d1, d2) = (diff(1e-2), diff(5e-3));
    let order = (d1 / d2).log2();
    assert!((order - 2.0).abs() < 0.2, "order {order} ({d1:e}, {d2:e})");
}

#[test]
fn well_prepared_data_reproduce_the_fluid_maxwellian() {
    let slab = Slab::new(8).unwrap();
    let e = 0.1;
    let zero = well_prepared_initial(&FluidState::zero(e, slab.clone()).unwrap(), GRID8.clone()).unwrap();
    assert!(zero.g.iter().all(|x| *x == 0.0));

    let z = vec![0.0; 8];
    let fl = FluidState::new(
        slab.field(|x| 0.1 * x.sin()),
        [z.clone(), z.clone(), z.clone()],
        slab.field(|x| -0.1 * x.sin()),
        e,
        slab.clone(),
    )
    .unwrap();
    let s = well_prepared_initial(&fl, GRID8.clone()).unwrap();
    let nodes = GRID8.nodes();
    let w = GRID8.weights();
    let mut h: f64 = 0.0;
    for c in 0..8 {
        let (r, t) = (1.0 + e * fl.rho_t[c], 1.0 + e * fl.theta_t[c]);
        let f = s.density(c);
        for (k, v) in nodes.iter().enumerate() {
            let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let m = r * (2.0 * std::f64::consts::PI * t).powf(-1.5) * (-v2 / (2.0 * t)).exp();
            h += w[k] * (f[k] * (f[k] / m).ln() - f[k] + m);
        }
    }
    assert!(h.abs() / (e * e) <= 1e-12, "H/ε² = {:e}", h / (e * e));

    let fl = fluid(e, &slab, 0.4);
    let s = well_prepared_initial(&fl, GRID8.clone()).unwrap();
    for c in 0..8 {
        let m = GRID8.raw_moments(&s.density(c)).unwrap();
        let r = 1.0 + e * fl.rho_t[c];
        let u: Vec<f64> = (0..3).map(|i| e * fl.u_t[i][c]).collect();
        let t = 1.0 + e * fl.theta_t[c];
        let u2: f64 = u.iter().map(|x| x * x).sum();
        assert!((m.mass - r).abs() < 1e-10);
        for i in 0..3 {
            assert!((m.momentum[i] - r * u[i]).abs() < 1e-10);
        }
        assert!((m.energy - r * (u2 + 3.0 * t)).abs() < 1e-9);
    }
}

#[test]
fn oversized_steps_are_rejected() {
    let slab = Slab::new(8).unwrap();
    let s = KineticState::zero(0.1, slab.clone(), GRID8.clone()).unwrap();
    let solver = bgk(CollisionModel::Nonlinear);
    let bound = solver.cfl_bound(0.1, &slab);
    assert!(matches!(solver.step(&s, 2.0 * bound), Err(Error::Cfl { .. })));
    assert!(matches!(solver.step(&s, -1.0), Err(Error::Cfl { .. })));
}

#[test]
fn positivity_loss_aborts_with_time() {
    let slab = Slab::new(4).unwrap();
    let e = 0.9;
    // A positive spike whose hydrodynamic projection dips below −1/ε, so full
    // linear relaxation leaves f < 0.
    let mut g = vec![0.0; GRID8.len()];
    g[0] = 1.0;
    let lowest = GRID8.project_hydro(&g).unwrap().iter().cloned().fold(0.0, f64::min);
    g[0] = -2.0 / (e * lowest);
    let p = GRID8.project_hydro(&g).unwrap();
    assert!(p.iter().any(|x| 1.0 + e * x < 0.0));
    let s = KineticState::homogeneous(&g, e, slab, GRID8.clone()).unwrap();
    let err = bgk(CollisionModel::Linearized).run(&s, 1.0, 0.5).unwrap_err();
    match err {
        Error::AtTime { source, .. } => assert!(matches!(*source, Error::Positivity(_))),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(KineticState::homogeneous(&vec![-2.0; GRID8.len()], e, Slab::new(4).unwrap(), GRID8.clone()), Err(Error::Positivity(_))));
}

#[test]
fn threaded_collisions_match_serial() {
    let slab = Slab::new(8).unwrap();
    let s = well_prepared_initial(&fluid(0.1, &slab, 0.5), GRID8.clone()).unwrap();
    let k = Arc::new(CollisionKernel::bgk(GRID8.clone(), 1.0).unwrap());
    let a = BoltzmannSolver::new(k.clone(), SolverOptions::default()).unwrap();
    let b = BoltzmannSolver::new(k, SolverOptions { threads: 3, ..Default::default() }).unwrap();
    let ga = a.run(&s, 0.02, 0.02).unwrap().pop().unwrap().g;
    let gb = b.run(&s, 0.02, 0.02).unwrap().pop().unwrap().g;
    assert_eq!(ga, gb);
}

#[test]
fn binary_kernel_step_conserves_and_relaxes() {
    let k = Arc::new(CollisionKernel::maxwell_molecules(GRID8.clone(), 1.0).unwrap());
    let solver = BoltzmannSolver::new(k.clone(), SolverOptions::default()).unwrap();
    let slab = Slab::new(4).unwrap();
    let e = 0.2;
    let g = GRID8.field(|v| 0.3 * v[0] + 0.2 * (v[1] * v[1] - 1.0) * (-0.25 * v[2] * v[2]).exp());
    let s = KineticState::homogeneous(&g, e, slab.clone(), GRID8.clone()).unwrap();
    let dt = solver.max_dt(e, &slab).unwrap();
    let out = solver.step(&s, dt).unwrap();
    let (m0, m1) = (s.conserved_totals(), out.conserved_totals());
    for a in 0..5 {
        assert!((m0[a] - m1[a]).abs() < 1e-8);
    }
    let ortho = |x: &[f64]| {
        let p = GRID8.project_ortho(x).unwrap();
        GRID8.inner(&p, &p).unwrap()
    };
    assert!(ortho(out.cell(0)) < ortho(s.cell(0)));
}
