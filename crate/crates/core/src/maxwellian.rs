//! Local Maxwellians, the peculiar-velocity tensors `A`, `B`, discrete moment
//! matching, and the transport identity for `v·∇ log ℳ`.

use std::f64::consts::PI;

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slab::Slab;
use crate::velocity_grid::{invariants, norm2, Vec3, VelocityGrid};

pub type Mat3 = [[f64; 3]; 3];

/// `(ρ, u, θ)` with `ρ > 0`, `θ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxwellianParams {
    rho: f64,
    u: Vec3,
    theta: f64,
}

/// The absolute Maxwellian `M = ℳ(1, 0, 1)`.
pub const ABSOLUTE: MaxwellianParams = MaxwellianParams { rho: 1.0, u: [0.0; 3], theta: 1.0 };

impl MaxwellianParams {
    pub fn new(rho: f64, u: Vec3, theta: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Positivity(format!("density {rho}")));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::Positivity(format!("temperature {theta}")));
        }
        Ok(Self { rho, u, theta })
    }

    /// `(1 + ερ̃, εũ, 1 + εθ̃)`.
    pub fn from_fluctuation(eps: f64, rho_t: f64, u_t: Vec3, theta_t: f64) -> Result<Self> {
        Self::new(1.0 + eps * rho_t, [eps * u_t[0], eps * u_t[1], eps * u_t[2]], 1.0 + eps * theta_t)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn u(&self) -> Vec3 {
        self.u
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `ρ (2πθ)^{-3/2} exp(−|v−u|²/(2θ))`.
    pub fn eval(&self, v: &Vec3) -> f64 {
        let d = [v[0] - self.u[0], v[1] - self.u[1], v[2] - self.u[2]];
        self.rho * (2.0 * PI * self.theta).powf(-1.5) * (-norm2(&d) / (2.0 * self.theta)).exp()
    }

    /// Coefficients `α` with `ℳ/M = exp(Σ α_a φ_a)` in the basis `(1, v, |v|²)`.
    pub fn exponent(&self) -> [f64; 5] {
        let t = self.theta;
        [
            self.rho.ln() - 1.5 * t.ln() - norm2(&self.u) / (2.0 * t),
            self.u[0] / t,
            self.u[1] / t,
            self.u[2] / t,
            0.5 * (t - 1.0) / t,
        ]
    }

    /// Inverts raw moments `(∫f, ∫vf, ∫|v|²f)`.
    pub fn from_raw_moments(mass: f64, momentum: Vec3, energy: f64) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::DegenerateMoments(format!("mass {mass}")));
        }
        let u = [momentum[0] / mass, momentum[1] / mass, momentum[2] / mass];
        let theta = (energy / mass - norm2(&u)) / 3.0;
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::DegenerateMoments(format!("implied temperature {theta}")));
        }
        Self::new(mass, u, theta)
    }

    /// Same inversion from moment increments `d = ∫(f − M)φ`, free of the
    /// cancellation in `θ − 1` for small perturbations. Returns `(params, θ − 1)`.
    pub fn from_moment_increments(d: &[f64; 5]) -> Result<(Self, f64)> {
        let rho = 1.0 + d[0];
        if !(rho > 0.0) {
            return Err(Error::DegenerateMoments(format!("mass {rho}")));
        }
        let u = [d[1] / rho, d[2] / rho, d[3] / rho];
        let theta_m1 = ((d[4] - 3.0 * d[0]) / rho - norm2(&u)) / 3.0;
        let theta = 1.0 + theta_m1;
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::DegenerateMoments(format!("implied temperature {theta}")));
        }
        Ok((Self { rho, u, theta }, theta_m1))
    }
}

/// `A(V) = V⊗V − |V|²/3 I`.
pub fn tensor_a(v: &Vec3) -> Mat3 {
    let s = norm2(v) / 3.0;
    let mut a = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = v[i] * v[j] - if i == j { s } else { 0.0 };
        }
    }
    a
}

/// `B(V) = V(|V|²/2 − 5/2)`.
pub fn tensor_b(v: &Vec3) -> Vec3 {
    let c = 0.5 * norm2(v) - 2.5;
    [v[0] * c, v[1] * c, v[2] * c]
}

/// Index pairs of the six independent entries of a symmetric 3×3 matrix.
pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Closed form of `∫ ℳ₁ log(ℳ₁/ℳ₂) − ℳ₁ + ℳ₂ dv`.
pub fn maxwellian_relative_entropy(a: &MaxwellianParams, b: &MaxwellianParams) -> f64 {
    let du = [a.u[0] - b.u[0], a.u[1] - b.u[1], a.u[2] - b.u[2]];
    a.rho
        * ((a.rho / b.rho).ln() - 1.5 * (a.theta / b.theta).ln()
            + 1.5 * (a.theta - b.theta) / b.theta
            + norm2(&du) / (2.0 * b.theta))
        - a.rho
        + b.rho
}

/// `(1 + d) log(1 + d) − d`, accurate for small `d`.
pub fn entropy_kernel(d: f64) -> f64 {
    if d.abs() < 1e-2 {
        // Σ_{n≥2} (−1)^n dⁿ / (n(n−1)).
        let mut s = 0.0;
        let mut p = d * d;
        for n in 2..14 {
            let nf = n as f64;
            let term = p / (nf * (nf - 1.0));
            s += if n % 2 == 0 { term } else { -term };
            p *= d;
        }
        s
    } else {
        (1.0 + d) * d.ln_1p() - d
    }
}

/// Discrete Maxwellian `E = exp(α·φ)` whose grid moments match a target.
#[derive(Debug, Clone)]
pub struct DiscreteMaxwellian {
    pub alpha: [f64; 5],
    /// `E_k − 1` at every node.
    pub em1: Vec<f64>,
    pub iterations: usize,
}

/// Newton solve for `α` with `Σ μ (e^{α·φ} − 1) φ_a = d_a`, started from the
/// continuous inversion of the same moments.
pub fn match_moments(grid: &VelocityGrid, d: &[f64; 5]) -> Result<DiscreteMaxwellian> {
    let (params, _) = MaxwellianParams::from_moment_increments(d)?;
    let mut alpha = params.exponent();
    let nodes = grid.nodes();
    let mu = grid.measure();
    let n = grid.len();
    let mut em1 = vec![0.0; n];
    let scale = 1.0 + d.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    for it in 0..40 {
        let mut r = [0.0; 5];
        let mut jac = Matrix5::<f64>::zeros();
        for k in 0..n {
            let p = invariants(&nodes[k]);
            let s: f64 = (0..5).map(|a| alpha[a] * p[a]).sum();
            let e = s.exp_m1();
            em1[k] = e;
            let we = mu[k] * e;
            let wj = mu[k] * (1.0 + e);
            for a in 0..5 {
                r[a] += we * p[a];
                for b in a..5 {
                    jac[(a, b)] += wj * p[a] * p[b];
                }
            }
        }
        for a in 0..5 {
            r[a] -= d[a];
            for b in 0..a {
                jac[(a, b)] = jac[(b, a)];
            }
        }
        let res = r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if res <= 4.0 * f64::EPSILON * scale {
            return Ok(DiscreteMaxwellian { alpha, em1, iterations: it });
        }
        let step = jac
            .cholesky()
            .ok_or_else(|| Error::DegenerateMoments("singular moment Jacobian".into()))?
            .solve(&Vector5::from(r));
        let mut small = true;
        for a in 0..5 {
            alpha[a] -= step[a];
            small &= step[a].abs() <= 1e-15 * (1.0 + alpha[a].abs());
        }
        if small {
            for (k, v) in nodes.iter().enumerate() {
                let p = invariants(v);
                em1[k] = (0..5).map(|a| alpha[a] * p[a]).sum::<f64>().exp_m1();
            }
            return Ok(DiscreteMaxwellian { alpha, em1, iterations: it + 1 });
        }
        if !alpha.iter().all(|a| a.is_finite()) {
            break;
        }
    }
    Err(Error::DegenerateMoments("moment matching did not converge".into()))
}

fn check_fields(slab: &Slab, fields: &[&[f64]]) -> Result<()> {
    for f in fields {
        slab.check_smooth(f)?;
    }
    Ok(())
}

/// Right-hand side of the Euler-operator identity for `v·∇_x log ℳ(ρ,u,θ)`,
/// evaluated at every (cell, node); layout `cell * nodes + node`.
pub fn log_maxwellian_transport(params: &[MaxwellianParams], slab: &Slab, grid: &VelocityGrid) -> Result<Vec<f64>> {
    crate::error::check_len(slab.cells(), params.len())?;
    let rho: Vec<f64> = params.iter().map(|p| p.rho).collect();
    let theta: Vec<f64> = params.iter().map(|p| p.theta).collect();
    let u: Vec<Vec<f64>> = (0..3).map(|d| params.iter().map(|p| p.u[d]).collect()).collect();
    check_fields(slab, &[&rho, &theta, &u[0], &u[1], &u[2]])?;
    let drho = slab.derivative(&rho);
    let dtheta = slab.derivative(&theta);
    let du: Vec<Vec<f64>> = u.iter().map(|f| slab.derivative(f)).collect();
    let nv = grid.len();
    let mut out = vec![0.0; slab.cells() * nv];
    for c in 0..slab.cells() {
        let p = &params[c];
        let (r, t, uu) = (p.rho, p.theta, p.u);
        let st = t.sqrt();
        let du_c = [du[0][c], du[1][c], du[2][c]];
        let mass = (uu[0] * drho[c] + r * du_c[0]) / r;
        let mut mom = [uu[0] * du_c[0], uu[0] * du_c[1], uu[0] * du_c[2]];
        mom[0] += t / r * drho[c] + dtheta[c];
        let energy = uu[0] * dtheta[c] + 2.0 / 3.0 * t * du_c[0];
        for (k, v) in grid.nodes().iter().enumerate() {
            let vv = [(v[0] - uu[0]) / st, (v[1] - uu[1]) / st, (v[2] - uu[2]) / st];
            let a = tensor_a(&vv);
            let b = tensor_b(&vv);
            let mut s = mass;
            s += (mom[0] * vv[0] + mom[1] * vv[1] + mom[2] * vv[2]) / st;
            s += energy * (0.5 * norm2(&vv) - 1.5) / t;
            s += a[0][0] * du_c[0] + a[1][0] * du_c[1] + a[2][0] * du_c[2];
            s += b[0] * dtheta[c] / st;
            out[c * nv + k] = s;
        }
    }
    Ok(out)
}

/// Right-hand side of the linearised identity for `v·∇_x g` with
/// `g = ρ + u·v + (|v|²/2 − 3/2)θ`; layout `cell * nodes + node`.
pub fn linearized_transport(
    rho: &[f64],
    u: &[Vec<f64>; 3],
    theta: &[f64],
    slab: &Slab,
    grid: &VelocityGrid,
) -> Result<Vec<f64>> {
    crate::error::check_len(slab.cells(), rho.len())?;
    crate::error::check_len(slab.cells(), theta.len())?;
    check_fields(slab, &[rho, theta, &u[0], &u[1], &u[2]])?;
    let drt: Vec<f64> = slab.derivative(&rho.iter().zip(theta).map(|(a, b)| a + b).collect::<Vec<_>>());
    let dtheta = slab.derivative(theta);
    let du: Vec<Vec<f64>> = u.iter().map(|f| slab.derivative(f)).collect();
    let nv = grid.len();
    let mut out = vec![0.0; slab.cells() * nv];
    for c in 0..slab.cells() {
        for (k, v) in grid.nodes().iter().enumerate() {
            let a = tensor_a(v);
            let b = tensor_b(v);
            let e = 0.5 * norm2(v) - 1.5;
            out[c * nv + k] = du[0][c] + drt[c] * v[0]
                + 2.0 / 3.0 * du[0][c] * e
                + a[0][0] * du[0][c]
                + a[1][0] * du[1][c]
                + a[2][0] * du[2][c]
                + b[0] * dtheta[c];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity_grid::Rule;

    #[test]
    fn eval_examples() {
        let c = (2.0 * PI).powf(-1.5);
        assert!((ABSOLUTE.eval(&[0.0; 3]) - c).abs() < 1e-15);
        assert!((c - 0.063494).abs() < 1e-6);
        let p = MaxwellianParams::new(2.0, [0.0; 3], 1.0).unwrap();
        assert!((p.eval(&[0.0; 3]) - 2.0 * c).abs() < 1e-15);
        let p = MaxwellianParams::new(1.0, [1.0, 0.0, 0.0], 1.0).unwrap();
        assert!((p.eval(&[1.0, 0.0, 0.0]) - c).abs() < 1e-15);
        assert!(MaxwellianParams::new(0.0, [0.0; 3], 1.0).is_err());
        assert!(MaxwellianParams::new(1.0, [0.0; 3], -1.0).is_err());
    }

    #[test]
    fn moment_inversion_examples() {
        let p = MaxwellianParams::from_raw_moments(1.0, [0.0; 3], 3.0).unwrap();
        assert_eq!((p.rho(), p.u(), p.theta()), (1.0, [0.0; 3], 1.0));
        let p = MaxwellianParams::from_raw_moments(2.0, [2.0, 0.0, 0.0], 8.0).unwrap();
        assert!((p.rho() - 2.0).abs() < 1e-15 && (p.u()[0] - 1.0).abs() < 1e-15);
        assert!((p.theta() - 1.0).abs() < 1e-15);
        assert!(matches!(
            MaxwellianParams::from_raw_moments(1.0, [2.0, 0.0, 0.0], 3.0),
            Err(Error::DegenerateMoments(_))
        ));
    }

    #[test]
    fn moments_of_a_velocity_perturbation() {
        // f = M(1 + ε v₁): mass 1, momentum ε e₁, energy 3.
        let eps = 0.1;
        let g = VelocityGrid::build(8, Rule::GaussHermite, 0.0).unwrap();
        let f: Vec<f64> = g.nodes().iter().zip(g.maxwell_weights()).map(|(v, m)| m * (1.0 + eps * v[0])).collect();
        let m = g.raw_moments(&f).unwrap();
        let p = MaxwellianParams::from_raw_moments(m.mass, m.momentum, m.energy).unwrap();
        assert!((p.u()[0] - eps).abs() < 1e-14);
        assert!((p.theta() - (1.0 - eps * eps / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn tensor_examples() {
        let a = tensor_a(&[1.0, 0.0, 0.0]);
        assert!((a[0][0] - 2.0 / 3.0).abs() < 1e-15 && (a[1][1] + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(tensor_a(&[0.0; 3]), [[0.0; 3]; 3]);
        assert_eq!(tensor_b(&[0.0; 3]), [0.0; 3]);
        assert_eq!(tensor_b(&[1.0, 1.0, 1.0]), [-1.0, -1.0, -1.0]);
    }

    #[test]
    fn discrete_matching_reproduces_target_moments() {
        let g = VelocityGrid::build(8, Rule::GaussHermite, 0.0).unwrap();
        let d = [0.02, 0.01, -0.03, 0.0, 0.05];
        let e = match_moments(&g, &d).unwrap();
        let m = g.invariant_moments(&e.em1);
        for a in 0..5 {
            assert!((m[a] - d[a]).abs() < 1e-15, "{a}: {} vs {}", m[a], d[a]);
        }
    }

    #[test]
    fn entropy_kernel_matches_direct_formula() {
        for d in [-0.5, -0.011, -0.009, 1e-5, 0.003, 0.2, 3.0] {
            let direct = (1.0 + d) * (1.0f64 + d).ln() - d;
            assert!((entropy_kernel(d) - direct).abs() < 1e-14 * (1.0 + direct.abs()));
        }
    }

    fn smooth_fields(slab: &Slab, seed: u64) -> Vec<MaxwellianParams> {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut c = [[0.0; 4]; 5];
        for row in c.iter_mut() {
            for x in row.iter_mut() {
                *x = r.gen_range(-0.2..0.2);
            }
        }
        let f = |row: &[f64; 4], x: f64| row[0] * x.sin() + row[1] * x.cos() + row[2] * (2.0 * x).sin() + row[3] * (3.0 * x).cos();
        (0..slab.cells())
            .map(|i| {
                let x = slab.x(i);
                MaxwellianParams::new(1.0 + f(&c[0], x), [f(&c[1], x), f(&c[2], x), f(&c[3], x)], 1.0 + f(&c[4], x)).unwrap()
            })
            .collect()
    }

    #[test]
    fn transport_identity_matches_direct_gradient() {
        // log ℳ is not band-limited, so the direct oracle needs a finer slab.
        let slab = Slab::new(128).unwrap();
        let g = VelocityGrid::build(6, Rule::GaussHermite, 0.0).unwrap();
        let ps = smooth_fields(&slab, 7);
        let rhs = log_maxwellian_transport(&ps, &slab, &g).unwrap();
        let nv = g.len();
        for (k, v) in g.nodes().iter().enumerate() {
            let logm: Vec<f64> = ps.iter().map(|p| p.eval(v).ln()).collect();
            let d = slab.derivative(&logm);
            for c in 0..slab.cells() {
                let direct = v[0] * d[c];
                assert!((rhs[c * nv + k] - direct).abs() < 1e-9 * (1.0 + direct.abs()), "{c} {k} {} {direct}", rhs[c * nv + k]);
            }
        }
    }

    #[test]
    fn linearized_identity_matches_direct_gradient() {
        let slab = Slab::new(32).unwrap();
        let g = VelocityGrid::build(6, Rule::GaussHermite, 0.0).unwrap();
        let ps = smooth_fields(&slab, 8);
        let rho: Vec<f64> = ps.iter().map(|p| p.rho() - 1.0).collect();
        let th: Vec<f64> = ps.iter().map(|p| p.theta() - 1.0).collect();
        let u: [Vec<f64>; 3] = std::array::from_fn(|d| ps.iter().map(|p| p.u()[d]).collect());
        let rhs = linearized_transport(&rho, &u, &th, &slab, &g).unwrap();
        let nv = g.len();
        for (k, v) in g.nodes().iter().enumerate() {
            let e = 0.5 * norm2(v) - 1.5;
            let gf: Vec<f64> = (0..32).map(|c| rho[c] + u[0][c] * v[0] + u[1][c] * v[1] + u[2][c] * v[2] + e * th[c]).collect();
            let d = slab.derivative(&gf);
            for c in 0..32 {
                assert!((rhs[c * nv + k] - v[0] * d[c]).abs() < 1e-10 * (1.0 + d[c].abs() * v[0].abs()));
            }
        }
    }

    #[test]
    fn tensors_are_orthogonal_to_invariants() {
        let g = VelocityGrid::build(8, Rule::GaussHermite, 0.0).unwrap();
        for &(i, j) in &SYM_PAIRS {
            let a: Vec<f64> = g.nodes().iter().map(|v| tensor_a(v)[i][j]).collect();
            assert!(g.invariant_moments(&a).iter().all(|m| m.abs() < 1e-12));
        }
        for i in 0..3 {
            let b: Vec<f64> = g.nodes().iter().map(|v| tensor_b(v)[i]).collect();
            assert!(g.invariant_moments(&b).iter().all(|m| m.abs() < 1e-12));
        }
    }

    #[test]
    fn rough_parameters_are_rejected() {
        let slab = Slab::new(16).unwrap();
        let g = VelocityGrid::build(4, Rule::GaussHermite, 0.0).unwrap();
        let ps: Vec<_> =
            (0..16).map(|i| MaxwellianParams::new(if i < 8 { 1.0 } else { 1.5 }, [0.0; 3], 1.0).unwrap()).collect();
        assert!(matches!(log_maxwellian_transport(&ps, &slab, &g), Err(Error::NotSmooth(_))));
    }
}
