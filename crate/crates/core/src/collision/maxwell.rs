//! Full-quadrature Maxwell-molecules kernel (`b` constant) on a small grid.
//!
//! Work is expressed in `G = f/M`; the identity `M'M'₁ = MM₁` on the
//! collision sphere turns every bracket into a sum against `μ_k μ_l ω_m`.
//! Post-collision values are trilinear interpolations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::velocity_grid::{invariants, norm2, post_collision, Stencil, VelocityGrid};

/// One halved-loop collision sample: the pair `(k, l)` with `l ≥ k` and sphere
/// node `m`. `weight` is `b μ_k μ_l ω_m`, doubled when `l > k` so that sums of
/// `k ↔ l` symmetric integrands equal the full bracket.
pub(crate) struct PairPoint {
    pub k: usize,
    pub l: usize,
    pub weight: f64,
    pub post: Stencil,
    pub post1: Stencil,
    /// `|v'|² − I|v|²(v')` and the same at `v'₁`.
    pub defect: f64,
    pub defect1: f64,
}

/// Nodewise row `r` with `c₄(G) = r · G`.
pub(crate) fn energy_row(grid: &VelocityGrid) -> Vec<f64> {
    grid.hydro_row(4)
}

/// Post-collision value of a field whose energy coefficient is `c4`.
#[inline]
pub(crate) fn post_value(s: &Stencil, defect: f64, f: &[f64], c4: f64) -> f64 {
    interp(s, f) + defect * c4
}

pub(crate) fn for_each_pair(grid: &VelocityGrid, b: f64, mut f: impl FnMut(&PairPoint)) {
    let nodes = grid.nodes();
    let mu = grid.measure();
    let sphere = grid.sphere();
    let e: Vec<f64> = nodes.iter().map(norm2).collect();
    for k in 0..grid.len() {
        for l in k..grid.len() {
            let pair = b * mu[k] * mu[l] * if l > k { 2.0 } else { 1.0 };
            for (m, sigma) in sphere.nodes.iter().enumerate() {
                let (vp, v1p) = post_collision(&nodes[k], &nodes[l], sigma);
                if !grid.contains(&vp) || !grid.contains(&v1p) {
                    continue;
                }
                let post = grid.stencil(&vp);
                let post1 = grid.stencil(&v1p);
                f(&PairPoint {
                    k,
                    l,
                    weight: pair * sphere.weights[m],
                    defect: norm2(&vp) - interp(&post, &e),
                    defect1: norm2(&v1p) - interp(&post1, &e),
                    post,
                    post1,
                });
            }
        }
    }
}

#[inline]
pub(crate) fn interp(s: &Stencil, f: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..8 {
        acc += s.w[i] * f[s.idx[i]];
    }
    acc
}

/// Dense linearised operator in the symmetric form `S = D^{1/2} 𝓛 D^{-1/2}`,
/// `D = diag(μ)`, with its kernel pinned to the collision invariants.
#[derive(Debug)]
pub(crate) struct FullOperator {
    pub sqrt_mu: Vec<f64>,
    pub s_proj: DMatrix<f64>,
    /// Orthonormal basis of `D^{1/2}𝒩`, one column per invariant.
    pub kernel: DMatrix<f64>,
    /// `max |S u|` over the invariant directions before projection.
    pub kernel_defect: f64,
}

impl FullOperator {
    pub fn build(grid: &VelocityGrid, b: f64) -> Result<Self> {
        let n = grid.len();
        // Upper triangle of W = (b/4) Σ μ_k μ_l ω ddᵀ with
        // d = e_k + e_l − s(v') − s(v'₁) − δ r, δ = defect + defect₁; the
        // sparse part d₀ is accumulated directly, the rank-one terms after.
        let r = energy_row(grid);
        let mut w = vec![0.0; n * n];
        let mut cross = vec![0.0; n];
        let mut rr = 0.0;
        let mut idx = [0usize; 18];
        let mut coef = [0.0; 18];
        for_each_pair(grid, b, |p| {
            idx[0] = p.k;
            coef[0] = 1.0;
            idx[1] = p.l;
            coef[1] = 1.0;
            for i in 0..8 {
                idx[2 + i] = p.post.idx[i];
                coef[2 + i] = -p.post.w[i];
                idx[10 + i] = p.post1.idx[i];
                coef[10 + i] = -p.post1.w[i];
            }
            let c = 0.25 * p.weight;
            let delta = p.defect + p.defect1;
            rr += c * delta * delta;
            for a in 0..18 {
                cross[idx[a]] += c * delta * coef[a];
            }
            for a in 0..18 {
                if coef[a] == 0.0 {
                    continue;
                }
                let ca = c * coef[a];
                let ia = idx[a];
                w[ia * n + ia] += ca * coef[a];
                for bb in a + 1..18 {
                    let ib = idx[bb];
                    let v = ca * coef[bb];
                    if ia == ib {
                        w[ia * n + ia] += 2.0 * v;
                    } else {
                        let (r, s) = if ia < ib { (ia, ib) } else { (ib, ia) };
                        w[r * n + s] += v;
                    }
                }
            }
        });
        let sqrt_mu: Vec<f64> = grid.measure().iter().map(|m| m.sqrt()).collect();
        let mut s = DMatrix::<f64>::zeros(n, n);
        for r in 0..n {
            for c in r..n {
                let v = w[r * n + c] / (sqrt_mu[r] * sqrt_mu[c]);
                s[(r, c)] = v;
                s[(c, r)] = v;
            }
        }
        drop(w);
        // W −= a rᵀ + r aᵀ; W += (Σ c δ²) r rᵀ, in the scaled form.
        for i in 0..n {
            let (ai, ri) = (cross[i] / sqrt_mu[i], r[i] / sqrt_mu[i]);
            for j in 0..n {
                let (aj, rj) = (cross[j] / sqrt_mu[j], r[j] / sqrt_mu[j]);
                s[(i, j)] += rr * ri * rj - ai * rj - ri * aj;
            }
        }
        let mut basis = DMatrix::<f64>::zeros(n, 5);
        for (k, v) in grid.nodes().iter().enumerate() {
            let p = invariants(v);
            for a in 0..5 {
                basis[(k, a)] = sqrt_mu[k] * p[a];
            }
        }
        let kernel = basis.qr().q();
        let su = &s * &kernel;
        let kernel_defect = su.amax();
        // Π S Π with Π = I − UUᵀ.
        let ut_s = kernel.transpose() * &s;
        let ut_s_u = &ut_s * &kernel;
        let mut s_proj = s;
        s_proj -= &kernel * &ut_s;
        s_proj -= ut_s.transpose() * kernel.transpose();
        s_proj += &kernel * ut_s_u * kernel.transpose();
        s_proj = (&s_proj + s_proj.transpose()) * 0.5;
        Ok(Self { sqrt_mu, s_proj, kernel, kernel_defect })
    }

    pub fn project(&self, z: &mut DVector<f64>) {
        let c = self.kernel.transpose() * &*z;
        *z -= &self.kernel * c;
    }

    /// `𝓛 g = D^{-1/2} S D^{1/2} g`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let z = DVector::from_iterator(g.len(), g.iter().zip(&self.sqrt_mu).map(|(a, s)| a * s));
        let y = &self.s_proj * z;
        y.iter().zip(&self.sqrt_mu).map(|(a, s)| a / s).collect()
    }

    /// Conjugate gradients for `S z = D^{1/2} h` on the orthogonal complement
    /// of the kernel. Returns `(ĥ, residual in L²(M), iterations)`.
    pub fn solve(&self, h: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64, usize)> {
        let n = h.len();
        let mut rhs = DVector::from_iterator(n, h.iter().zip(&self.sqrt_mu).map(|(a, s)| a * s));
        self.project(&mut rhs);
        let target = tol * rhs.norm().max(f64::MIN_POSITIVE);
        let mut x = DVector::<f64>::zeros(n);
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut rr = r.dot(&r);
        let mut it = 0;
        while rr.sqrt() > target && it < max_iter {
            let mut ap = &self.s_proj * &p;
            self.project(&mut ap);
            let alpha = rr / p.dot(&ap);
            x.axpy(alpha, &p, 1.0);
            self.project(&mut x);
            if it % 50 == 49 {
                r = &rhs - &self.s_proj * &x;
                self.project(&mut r);
            } else {
                r.axpy(-alpha, &ap, 1.0);
            }
            let rr_new = r.dot(&r);
            p = &r + &p * (rr_new / rr);
            self.project(&mut p);
            rr = rr_new;
            it += 1;
        }
        let mut res = &self.s_proj * &x - &rhs;
        self.project(&mut res);
        let residual = res.norm();
        if residual > target {
            return Err(Error::NoConvergence { iterations: it, residual });
        }
        Ok((x.iter().zip(&self.sqrt_mu).map(|(a, s)| a / s).collect(), residual, it))
    }

    /// Eigenvalues of `S` after discarding the five kernel directions, ascending.
    pub fn nonzero_spectrum(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.s_proj.clone());
        let mut ev: Vec<(f64, f64)> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let col = eig.eigenvectors.column(i);
                (l, (self.kernel.transpose() * col).norm())
            })
            .collect();
        // Kernel eigenvectors are those fully inside span(U).
        ev.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite overlaps"));
        let mut rest: Vec<f64> = ev[5..].iter().map(|e| e.0).collect();
        rest.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        rest
    }

    /// Factorisation of `I + τS` for implicit collision steps.
    pub fn resolvent(&self, tau: f64) -> Result<Cholesky<f64, Dyn>> {
        let n = self.s_proj.nrows();
        let m = DMatrix::<f64>::identity(n, n) + &self.s_proj * tau;
        Cholesky::new(m).ok_or_else(|| Error::Config("implicit collision matrix not positive definite".into()))
    }
}

/// Strong-form `Q(F,G)_k = (b/2) Σ_l μ_l Σ_m ω_m [F'G'₁ + G'F'₁ − F_kG_l − G_kF_l]`
/// before the conservation correction.
pub(crate) fn strong_q(grid: &VelocityGrid, b: f64, f: &[f64], g: &[f64]) -> Vec<f64> {
    let mu = grid.measure();
    let r = energy_row(grid);
    let dot = |x: &[f64]| x.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
    let (cf, cg) = (dot(f), dot(g));
    let mut out = vec![0.0; grid.len()];
    let same = std::ptr::eq(f, g);
    for_each_pair(grid, b, |p| {
        let (fp, fp1) = (post_value(&p.post, p.defect, f, cf), post_value(&p.post1, p.defect1, f, cf));
        let (gp, gp1) = if same {
            (fp, fp1)
        } else {
            (post_value(&p.post, p.defect, g, cg), post_value(&p.post1, p.defect1, g, cg))
        };
        let t = fp * gp1 + gp * fp1 - f[p.k] * g[p.l] - g[p.k] * f[p.l];
        // weight = b μ_k μ_l ω (×2 off-diagonal); each endpoint receives one copy.
        let c = 0.5 * t * p.weight;
        if p.l > p.k {
            out[p.k] += 0.5 * c / mu[p.k];
            out[p.l] += 0.5 * c / mu[p.l];
        } else {
            out[p.k] += c / mu[p.k];
        }
    });
    out
}
