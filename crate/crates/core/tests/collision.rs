use std::f64::consts::PI;
use std::sync::{Arc, LazyLock};

use kinetic_lab::collision::{CollisionKernel, KernelMode};
use kinetic_lab::error::Error;
use kinetic_lab::maxwellian::{tensor_a, tensor_b, MaxwellianParams, SYM_PAIRS};
use kinetic_lab::velocity_grid::{Rule, VelocityGrid};
use proptest::prelude::*;

static GRID8: LazyLock<Arc<VelocityGrid>> =
    LazyLock::new(|| Arc::new(VelocityGrid::build(8, Rule::GaussHermite, 0.0).unwrap()));
static FULL: LazyLock<CollisionKernel> =
    LazyLock::new(|| CollisionKernel::maxwell_molecules(GRID8.clone(), 1.0).unwrap());

fn bgk(rate: f64) -> CollisionKernel {
    CollisionKernel::bgk(GRID8.clone(), rate).unwrap()
}

fn norm(g: &VelocityGrid, f: &[f64]) -> f64 {
    g.inner(f, f).unwrap().sqrt()
}

fn max_abs(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn times_m(g: &VelocityGrid, x: &[f64]) -> Vec<f64> {
    x.iter().zip(g.maxwell_weights()).map(|(a, m)| a * m).collect()
}

/// Bounded, non-polynomial perturbation so `M(1 + εg)` stays positive.
fn bumpy(g: &VelocityGrid) -> Vec<f64> {
    g.field(|v| v[0].sin() + 0.5 * (v[1] * v[2]).cos() - 0.3 * v[2].tanh())
}

#[test]
fn bgk_maxwellians_are_equilibria() {
    let g = &**GRID8;
    let k = bgk(1.0);
    let m = g.maxwell_weights().to_vec();
    assert!(max_abs(&k.collide(&m).unwrap()) <= 1e-10);
    let p = MaxwellianParams::new(1.3, [0.2, 0.0, 0.0], 0.9).unwrap();
    let f = g.field(|v| p.eval(v));
    assert!(max_abs(&k.collide(&f).unwrap()) <= 1e-10);
}

#[test]
fn bgk_collision_conserves_moments() {
    let g = &**GRID8;
    let k = bgk(1.0);
    let f = times_m(g, &g.field(|v| 1.0 + 0.1 * v[0] * v[0]));
    let c = k.collide(&f).unwrap();
    assert!(g.raw_moments(&c).unwrap().max_abs() <= 1e-12);
}

#[test]
fn negative_densities_are_rejected() {
    let g = &**GRID8;
    let mut f = g.maxwell_weights().to_vec();
    f[3] = -1e-3;
    assert!(matches!(bgk(1.0).collide(&f), Err(Error::Positivity(_))));
    assert!(matches!(bgk(1.0).entropy_dissipation(&f), Err(Error::Positivity(_))));
}

#[test]
fn bgk_linearization_examples() {
    let g = &**GRID8;
    let k = bgk(1.0);
    let inv = g.field(|v| 1.0 + v[1] + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    assert!(max_abs(&k.linearized_l(&inv).unwrap()) < 1e-12);
    let a = g.field(|v| v[0] * v[1]);
    let la = k.linearized_l(&a).unwrap();
    assert!(la.iter().zip(&a).all(|(x, y)| (x - y).abs() < 1e-11));
}

#[test]
fn bgk_bilinear_examples() {
    let g = &**GRID8;
    let k = bgk(1.0);
    let one = vec![1.0; g.len()];
    let v1 = g.field(|v| v[0]);
    assert!(max_abs(&k.bilinear_q(&one, &one).unwrap()) < 1e-12);
    assert!(max_abs(&k.bilinear_q(&v1, &one).unwrap()) < 1e-12);
    // Q(g,g) = ½ 𝓛(g²) for g in the kernel.
    let q = k.bilinear_q(&v1, &v1).unwrap();
    let sq: Vec<f64> = v1.iter().map(|x| x * x).collect();
    let l = k.linearized_l(&sq).unwrap();
    let c = g.inner(&q, &l).unwrap() / g.inner(&l, &l).unwrap();
    assert!((c - 0.5).abs() < 1e-12);
    let r: Vec<f64> = q.iter().zip(&l).map(|(a, b)| a - c * b).collect();
    assert!(norm(g, &r) < 1e-12);
}

#[test]
fn bgk_hat_solve_is_a_rescaling() {
    let g = &**GRID8;
    let a12 = g.field(|v| v[0] * v[1]);
    for rate in [1.0, 2.0] {
        let s = bgk(rate).solve_hat(&a12).unwrap();
        assert!(s.value.iter().zip(&a12).all(|(x, y)| (x - y / rate).abs() < 1e-15));
    }
    let bad = g.field(|v| v[0] * v[0]);
    assert!(matches!(bgk(1.0).solve_hat(&bad), Err(Error::NotOrthogonal(_))));
}

#[test]
fn bgk_transport_coefficients() {
    // ⟨A:A⟩ = 10 and ⟨B·B⟩ = 15/2 under the Gaussian.
    let (mu, kappa) = bgk(1.0).transport_coefficients().unwrap();
    assert!((mu - 1.0).abs() < 1e-12 && (kappa - 1.0).abs() < 1e-12);
    let (mu, kappa) = bgk(2.0).transport_coefficients().unwrap();
    assert!((mu - 0.5).abs() < 1e-12 && (kappa - 0.5).abs() < 1e-12);
}

#[test]
fn tensor_product_identities() {
    let g = &**GRID8;
    let k = bgk(1.0);
    let h = k.hat_tensors().unwrap();
    let d = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    for i in 0..3 {
        for j in 0..3 {
            let ah: Vec<f64> = (0..g.len()).map(|n| h.a_entry(i, j, n)).collect();
            for p in 0..3 {
                for q in 0..3 {
                    let a = g.field(|v| tensor_a(v)[p][q]);
                    let want = h.mu * (d(i, p) * d(j, q) + d(i, q) * d(j, p) - 2.0 / 3.0 * d(i, j) * d(p, q));
                    assert!((g.inner(&ah, &a).unwrap() - want).abs() < 1e-6);
                }
            }
            let b = g.field(|v| tensor_b(v)[j]);
            assert!((g.inner(&h.b_hat[i], &b).unwrap() - 2.5 * h.kappa * d(i, j)).abs() < 1e-6);
        }
    }
}

#[test]
fn bgk_dissipation_examples() {
    let g = &**GRID8;
    let k = bgk(1.0);
    assert!(k.entropy_dissipation(g.maxwell_weights()).unwrap().abs() <= 1e-8);
    let f = times_m(g, &g.field(|v| 1.0 + 0.2 * v[0]));
    assert!(k.entropy_dissipation(&f).unwrap() > 0.0);
}

#[test]
fn q_field_needs_binary_kernel() {
    let g = &**GRID8;
    assert!(matches!(bgk(1.0).q_field(g.maxwell_weights(), 0.1), Err(Error::Unavailable(_))));
    assert_eq!(bgk(1.0).mode(), KernelMode::Bgk);
    assert!(CollisionKernel::bgk(GRID8.clone(), 0.0).is_err());
    assert!(CollisionKernel::maxwell_molecules(GRID8.clone(), -1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn bgk_is_self_adjoint_and_nonnegative(seed in any::<u64>()) {
        let g = &**GRID8;
        let k = bgk(1.7);
        let a = random_field(g, seed);
        let b = random_field(g, seed.wrapping_add(1));
        let la = k.linearized_l(&a).unwrap();
        let lb = k.linearized_l(&b).unwrap();
        prop_assert!((g.inner(&la, &b).unwrap() - g.inner(&a, &lb).unwrap()).abs() <= 1e-10);
        prop_assert!(g.inner(&la, &a).unwrap() >= -1e-10);
        prop_assert!(g.invariant_moments(&la).iter().all(|m| m.abs() <= 1e-12));
    }

    #[test]
    fn bgk_conserves_and_dissipates(seed in any::<u64>(), amp in 0.01f64..0.5) {
        let g = &**GRID8;
        let k = bgk(1.0);
        let x = random_field(g, seed);
        let f: Vec<f64> = x.iter().zip(g.maxwell_weights()).map(|(a, m)| m * (1.0 + amp * a.tanh())).collect();
        prop_assert!(g.raw_moments(&k.collide(&f).unwrap()).unwrap().max_abs() <= 1e-12);
        prop_assert!(k.entropy_dissipation(&f).unwrap() >= -1e-10);
    }
}

fn random_field(g: &VelocityGrid, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..g.len()).map(|_| r.gen_range(-1.0..1.0)).collect()
}

// Binary kernel on 8³; the dense operator is built once and shared.

#[test]
fn full_kernel_equilibrium_and_conservation() {
    let g = &**GRID8;
    let k = &*FULL;
    assert!(max_abs(&k.collide(g.maxwell_weights()).unwrap()) <= 1e-6);
    let f = times_m(g, &g.field(|v| 1.0 + 0.1 * v[0] * v[0]));
    assert!(g.raw_moments(&k.collide(&f).unwrap()).unwrap().max_abs() <= 1e-8);
    let one = vec![1.0; g.len()];
    let v1 = g.field(|v| v[0]);
    assert!(max_abs(&k.bilinear_q(&one, &one).unwrap()) < 1e-12);
    assert!(norm(g, &k.bilinear_q(&v1, &one).unwrap()) < 1e-10);
}

#[test]
fn full_kernel_linearization() {
    let g = &**GRID8;
    let k = &*FULL;
    assert!(k.kernel_defect().unwrap() < 1e-8);
    for a in 0..5 {
        let phi = g.field(|v| kinetic_lab::velocity_grid::invariants(v)[a]);
        assert!(norm(g, &k.linearized_l(&phi).unwrap()) <= 1e-8);
    }
    for seed in 0..8 {
        let a = random_field(g, seed);
        let b = random_field(g, seed + 100);
        let la = k.linearized_l(&a).unwrap();
        let lb = k.linearized_l(&b).unwrap();
        assert!((g.inner(&la, &b).unwrap() - g.inner(&a, &lb).unwrap()).abs() <= 1e-8);
        assert!(g.inner(&la, &a).unwrap() >= -1e-10);
        assert!(g.invariant_moments(&la).iter().all(|m| m.abs() <= 1e-8));
    }
    assert!(k.spectral_gap().unwrap() > 0.0);
}

#[test]
fn full_kernel_hat_solve_and_coefficients() {
    let g = &**GRID8;
    let k = &*FULL;
    let a12 = g.field(|v| v[0] * v[1]);
    let s = k.solve_hat(&a12).unwrap();
    let r: Vec<f64> = k.linearized_l(&s.value).unwrap().iter().zip(&a12).map(|(x, y)| x - y).collect();
    assert!(norm(g, &r) <= 1e-8, "residual {}", norm(g, &r));
    assert!(s.residual <= 1e-8);
    let (mu, kappa) = k.transport_coefficients().unwrap();
    // Continuum values for b = 1: 𝓛A = 2πA and 𝓛B = (4π/3)B. The grid is coarse,
    // so this is a loose regression check.
    assert!((mu * 2.0 * PI - 1.0).abs() < 0.1, "mu {mu}");
    assert!((kappa * 4.0 * PI / 3.0 - 1.0).abs() < 0.15, "kappa {kappa}");
    let h = k.hat_tensors().unwrap();
    for &(i, j) in &SYM_PAIRS {
        assert!(g.invariant_moments(&h.a_hat[SYM_PAIRS.iter().position(|&p| p == (i, j)).unwrap()])
            .iter()
            .all(|m| m.abs() < 1e-10));
    }
}

#[test]
fn full_kernel_bilinear_constant() {
    // Q(g,g) ≈ c 𝓛(g²) for g = v₁; the fitted c singles out ½ over 1.
    let g = &**GRID8;
    let k = &*FULL;
    let v1 = g.field(|v| v[0]);
    let q = k.bilinear_q(&v1, &v1).unwrap();
    let sq: Vec<f64> = v1.iter().map(|x| x * x).collect();
    let l = k.linearized_l(&sq).unwrap();
    let c = g.inner(&q, &l).unwrap() / g.inner(&l, &l).unwrap();
    assert!((c - 0.5).abs() < 0.1, "c = {c}");
    let miss = |c: f64| norm(g, &q.iter().zip(&l).map(|(a, b)| a - c * b).collect::<Vec<_>>());
    assert!(miss(0.5) < 0.5 * miss(1.0));
}

#[test]
fn full_kernel_dissipation_and_q_field() {
    let g = &**GRID8;
    let k = &*FULL;
    assert!(k.entropy_dissipation(g.maxwell_weights()).unwrap().abs() <= 1e-8);
    let f = times_m(g, &g.field(|v| 1.0 + 0.2 * v[0]));
    assert!(k.entropy_dissipation(&f).unwrap() >= 0.0);
    let bump = bumpy(g);
    let f = times_m(g, &bump.iter().map(|b| 1.0 + 0.3 * b).collect::<Vec<_>>());
    assert!(k.entropy_dissipation(&f).unwrap() > 0.0);

    let q0 = k.q_field(g.maxwell_weights(), 0.1).unwrap();
    assert!(max_abs(q0.values()) == 0.0);

    // g = v₁: momentum cancels exactly, mass and energy to quadrature accuracy.
    let eps = 0.1;
    let f = times_m(g, &g.field(|v| 1.0 + eps * v[0]));
    let qf = k.q_field(&f, eps).unwrap();
    // Cauchy–Schwarz bound: |⟨⟨q⟩⟩| ≤ (⟨⟨1⟩⟩⟨⟨q²⟩⟩)^{1/2} with ⟨⟨1⟩⟩ ≤ 4π.
    let scale = (4.0 * PI * 4.0 * qf.quarter_q2).sqrt();
    let inv = qf.invariant_brackets(g);
    assert!(inv[1].abs() < 1e-10 && inv[2].abs() < 1e-10 && inv[3].abs() < 1e-10);
    assert!(inv[0].abs() < 1e-3 * scale && inv[4].abs() < 1e-2 * scale, "{inv:?}");
}

#[test]
fn full_kernel_dissipation_expansion() {
    // Near-hydrodynamic g: q stays bounded and R₁₁ is first order in ε.
    let g = &**GRID8;
    let k = &*FULL;
    let run = |eps: f64| {
        let f = times_m(
            g,
            &g.field(|v| {
                let e = 0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) - 1.5;
                1.0 + eps * (0.3 * v[0] + 0.2 * e) + eps * eps * v[1].sin()
            }),
        );
        let q = k.q_field(&f, eps).unwrap();
        let d = k.entropy_dissipation(&f).unwrap() / eps.powi(4);
        assert!(q.closure().abs() <= 1e-8);
        assert!((d - q.d_over_eps4).abs() <= 1e-8 * d);
        let slack = q.bgl_slack(g, k.hat_tensors().unwrap());
        assert!(slack >= -1e-8);
        q
    };
    let (a, b) = (run(0.1), run(0.05));
    assert!((a.quarter_q2 - b.quarter_q2).abs() < 0.1 * a.quarter_q2);
    assert!(a.r11.abs() / b.r11.abs() >= 1.7);
}
