//! Neumann-to-Dirichlet mode matching for the desymmetrised barrier billiard.
//!
//! In the strip 0 < x < a each transverse mode sin(kπy/b) has the exact
//! one-dimensional solution σ_k(x) with σ_k(a) = 0 and σ_k'(0) = 1. The
//! unknown is the Neumann datum ∂ₓΨ(0,y), which vanishes on the open part
//! b/2 < y < b and carries the r^{-1/2} edge singularity at the barrier tip.
//! It is expanded in odd Chebyshev functions T_j(s)/√(1-s²), s = 2y/b, on the
//! barrier continued oddly to (-b/2, b/2). Requiring Ψ(0,y) = 0 on the
//! barrier gives a symmetric J×J matrix D(E) whose eigenvalues decrease
//! monotonically between the poles of the even series; levels are the zeros
//! of its eigenvalue branches.

use super::{flag_clusters, EigenState, ExpansionBasis, Parity, Solution};
use crate::error::{Error, Result};
use crate::geometry::{BilliardKind, BilliardSpec};
use crate::special::{bessel_j_seq, brent};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use std::f64::consts::PI;

const K_BIG: usize = 8000;
const TAIL_ORDER: usize = 24;
const POLE_OFFSET: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BarrierSolver {
    pub a: f64,
    pub b: f64,
    pub e_max: f64,
    /// number of Chebyshev functions
    pub n_cheb: usize,
    /// modes summed exactly; the rest enter through the tail expansion
    pub k_exact: usize,
    s: DMatrix<f64>,
    /// coupling W_jk for k = 1..=K_BIG
    w: DMatrix<f64>,
    tail: Vec<DMatrix<f64>>,
}

impl BarrierSolver {
    /// Solver sized for energies up to `e_max`.
    pub fn new(spec: &BilliardSpec, e_max: f64) -> Result<Self> {
        let j = (20.0 + 1.3 * e_max.sqrt()) as usize;
        let k1 = (spec.b * (10.0 * e_max).sqrt() / PI) as usize + 10;
        Self::with_sizes(spec, e_max, j, k1)
    }

    pub fn with_sizes(spec: &BilliardSpec, e_max: f64, n_cheb: usize, k_exact: usize) -> Result<Self> {
        if spec.kind != BilliardKind::Barrier {
            return Err(Error::Invalid("mode matching needs a barrier billiard".into()));
        }
        if !(e_max > 0.0) {
            return Err(Error::Invalid(format!("e_max must be positive, got {e_max}")));
        }
        let (a, b) = (spec.a, spec.b);
        if k_exact >= K_BIG || (k_exact as f64 * PI / b).powi(2) < 4.0 * e_max {
            let need = (2.0 * b * e_max.sqrt() / PI).ceil() as usize + 1;
            return Err(Error::Truncation {
                q_max: n_cheb,
                k_max: need,
            });
        }
        let s = static_part(b, n_cheb);
        let w = coupling(b, n_cheb);
        let wt = w.columns(k_exact, K_BIG - k_exact).into_owned();
        let mut tail = Vec::with_capacity(TAIL_ORDER);
        let mut coef = 1.0;
        for p in 1..=TAIL_ORDER {
            coef *= (p as f64 - 0.5) / p as f64;
            let mut scaled = wt.clone();
            for (c, mut col) in scaled.column_iter_mut().enumerate() {
                let k0 = (k_exact + c + 1) as f64 * PI / b;
                col *= -(2.0 / b) * coef / k0.powi(2 * p as i32 + 1);
            }
            tail.push(&scaled * wt.transpose());
        }
        Ok(Self {
            a,
            b,
            e_max,
            n_cheb,
            k_exact,
            s,
            w,
            tail,
        })
    }

    pub fn d_matrix(&self, e: f64) -> DMatrix<f64> {
        let w1 = self.w.columns(0, self.k_exact);
        let mut scaled = w1.into_owned();
        for (c, mut col) in scaled.column_iter_mut().enumerate() {
            let k0 = (c + 1) as f64 * PI / self.b;
            col *= (2.0 / self.b) * (sigma0(self.a, e, k0) + 1.0 / k0);
        }
        let mut d = &self.s + &scaled * w1.transpose();
        let mut ep = 1.0;
        for t in &self.tail {
            ep *= e;
            d += t * ep;
        }
        d
    }

    /// Eigenvalues of D(E) in ascending order.
    pub fn eigenvalues(&self, e: f64) -> Vec<f64> {
        let mut v: Vec<f64> = self.d_matrix(e).symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Number of levels below E.
    pub fn count_below(&self, e: f64) -> usize {
        let pos = self.eigenvalues(e).iter().filter(|l| **l > 0.0).count();
        even_count(self.a, self.b, e).saturating_sub(pos)
    }

    /// All levels in (lo, hi), each to within `tol`.
    pub fn levels(&self, lo: f64, hi: f64, tol: f64) -> Result<Vec<f64>> {
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Invalid(format!("bad window [{lo}, {hi}]")));
        }
        if hi > self.e_max * (1.0 + 1e-12) {
            return Err(Error::Truncation {
                q_max: (20.0 + 1.3 * hi.sqrt()) as usize,
                k_max: (self.b * (10.0 * hi).sqrt() / PI) as usize + 10,
            });
        }
        let mut pts = vec![lo];
        pts.extend(even_poles(self.a, self.b, lo, hi));
        pts.push(hi);
        let cells: Vec<(f64, f64)> = pts
            .windows(2)
            .map(|c| {
                let e0 = if c[0] == lo { lo } else { c[0] + POLE_OFFSET * c[0].max(1.0) };
                let e1 = if c[1] == hi { hi } else { c[1] - POLE_OFFSET * c[1].max(1.0) };
                (e0, e1)
            })
            .filter(|(e0, e1)| e1 > e0)
            .collect();
        let found: Vec<Vec<f64>> = cells
            .par_iter()
            .map(|&(e0, e1)| self.cell_roots(e0, e1, tol))
            .collect::<Result<_>>()?;
        Ok(found.into_iter().flatten().collect())
    }

    fn cell_roots(&self, e0: f64, e1: f64, tol: f64) -> Result<Vec<f64>> {
        let l0 = self.eigenvalues(e0);
        let l1 = self.eigenvalues(e1);
        let n = l0.len();
        let p0 = l0.iter().filter(|l| **l > 0.0).count();
        let p1 = l1.iter().filter(|l| **l > 0.0).count();
        if p1 > p0 {
            return Err(Error::NoConvergence {
                lo: e0,
                hi: e1,
                reason: "eigenvalue branches are not monotone".into(),
            });
        }
        let mut out = Vec::with_capacity(p0 - p1);
        for r in (n - p0)..(n - p1) {
            let root = brent(|e| self.eigenvalues(e)[r], e0, e1, tol.min(1e-10))?;
            out.push(root);
        }
        out.sort_by(f64::total_cmp);
        Ok(out)
    }

    /// Normalised Neumann datum g_k, k = 1..=K_BIG, of the level at `e`.
    pub fn neumann_data(&self, e: f64) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.d_matrix(e));
        let i = eig
            .eigenvalues
            .iamin();
        let alpha: DVector<f64> = eig.eigenvectors.column(i).into_owned();
        let mut g: Vec<f64> = (self.w.transpose() * alpha)
            .iter()
            .map(|v| v * 2.0 / self.b)
            .collect();
        let mut n2 = 0.0;
        for (k, gk) in g.iter().enumerate() {
            let k0 = (k + 1) as f64 * PI / self.b;
            n2 += gk * gk * sigma_norm(self.a, e, k0);
        }
        n2 *= 0.5 * self.b;
        let s = 1.0 / n2.sqrt();
        g.iter_mut().for_each(|v| *v *= s);
        g
    }

    /// Eigenstate at a converged level, projected onto `basis` (even series)
    /// and onto the odd series of the same size.
    pub fn state(&self, e: f64, basis: &ExpansionBasis) -> Result<EigenState> {
        let g = self.neumann_data(e);
        let (even, odd) = series_coefficients(self.a, self.b, e, &g, basis);
        let sum: f64 = even.iter().map(|c| c * c).sum();
        let sum_odd: f64 = odd.iter().map(|c| c * c).sum();
        let norm_defect = 1.0 - sum;
        let (se, so) = (1.0 / sum.sqrt(), 1.0 / sum_odd.sqrt());
        Ok(EigenState {
            energy: e,
            parity: Parity::Even,
            basis: *basis,
            coeffs: even.into_iter().map(|c| c * se).collect(),
            odd_coeffs: Some(odd.into_iter().map(|c| c * so).collect()),
            norm_defect,
            cluster: false,
            solution: Solution::Barrier { g },
        })
    }

    /// Levels and states in (lo, hi).
    pub fn solve(&self, lo: f64, hi: f64, tol: f64, basis: &ExpansionBasis) -> Result<Vec<EigenState>> {
        let mut out = Vec::new();
        self.for_each_state(lo, hi, tol, basis, |s| {
            out.push(s);
            Ok(())
        })?;
        flag_clusters(&mut out, 1e-3);
        Ok(out)
    }

    /// Streams states in ascending energy without holding them all; the
    /// cluster flag is set from the neighbouring levels.
    pub fn for_each_state<F>(&self, lo: f64, hi: f64, tol: f64, basis: &ExpansionBasis, mut f: F) -> Result<usize>
    where
        F: FnMut(EigenState) -> Result<()>,
    {
        let lv = self.levels(lo, hi, tol)?;
        for (i, &e) in lv.iter().enumerate() {
            let mut st = self.state(e, basis)?;
            let near = |j: Option<usize>| j.and_then(|j| lv.get(j)).is_some_and(|x| (x - e).abs() < 1e-3);
            st.cluster = near(i.checked_sub(1)) || near(Some(i + 1));
            f(st)?;
        }
        Ok(lv.len())
    }
}

/// σ_k(0) for transverse wavenumber k0.
fn sigma0(a: f64, e: f64, k0: f64) -> f64 {
    let d = e - k0 * k0;
    if d.abs() < 1e-14 * e.max(1.0) {
        -a
    } else if d > 0.0 {
        let kap = d.sqrt();
        -(kap * a).tan() / kap
    } else {
        let g = (-d).sqrt();
        -(g * a).tanh() / g
    }
}

/// ∫₀ᵃ σ_k(x)² dx.
fn sigma_norm(a: f64, e: f64, k0: f64) -> f64 {
    let d = e - k0 * k0;
    let t = d * a * a;
    if t.abs() < 1e-4 {
        // both closed forms cancel near d = 0; series in d to O(d³)
        let num = a.powi(3) * (1.0 / 3.0 - t / 15.0 + 2.0 * t * t / 315.0);
        return num / (1.0 - t + t * t / 3.0);
    }
    if d > 0.0 {
        let kap = d.sqrt();
        let c = (kap * a).cos();
        (0.5 * a - (2.0 * kap * a).sin() / (4.0 * kap)) / (kap * c).powi(2)
    } else {
        let g = (-d).sqrt().max(1e-300);
        if g * a >= 300.0 {
            0.5 / g.powi(3)
        } else {
            ((g * a).tanh() / (2.0 * g) - 0.5 * a / (g * a).cosh().powi(2)) / (g * g)
        }
    }
}

/// σ_k(x) = -sin(κ(a-x))/(κ cos κa) or the hyperbolic continuation.
fn sigma(a: f64, e: f64, k0: f64, x: f64) -> f64 {
    let d = e - k0 * k0;
    if (d * a * a).abs() < 1e-4 {
        let u = a - x;
        let num = u * (1.0 - d * u * u / 6.0 + d * d * u.powi(4) / 120.0);
        return -num / (1.0 - 0.5 * d * a * a + d * d * a.powi(4) / 24.0);
    }
    if d > 0.0 {
        let kap = d.sqrt();
        -(kap * (a - x)).sin() / (kap * (kap * a).cos())
    } else {
        let g = (-d).sqrt().max(1e-300);
        -((-g * x).exp() - (-g * (2.0 * a - x)).exp()) / (g * (1.0 + (-2.0 * g * a).exp()))
    }
}

/// Ψ(x,y) = Σ_k g_k σ_k(x) sin(kπy/b).
pub fn mode_sum(a: f64, b: f64, e: f64, g: &[f64], x: f64, y: f64) -> f64 {
    let mut s = 0.0;
    for (k, gk) in g.iter().enumerate() {
        let k0 = (k + 1) as f64 * PI / b;
        if k0 * k0 > e && x > 0.0 && (k0 * k0 - e).sqrt() * x > 40.0 {
            break;
        }
        s += gk * sigma(a, e, k0, x) * (k0 * y).sin();
    }
    s
}

/// Even-series and odd-series coefficients of Σ g_k σ_k(x) sin(kπy/b).
pub fn series_coefficients(a: f64, b: f64, e: f64, g: &[f64], basis: &ExpansionBasis) -> (Vec<f64>, Vec<f64>) {
    let mut even = vec![0.0; basis.len()];
    let mut odd = vec![0.0; basis.len()];
    let r = (b / a).sqrt();
    for k in 1..=basis.k_max.min(g.len()) {
        let k0 = k as f64 * PI / b;
        let s0 = sigma0(a, e, k0);
        for q in 1..=basis.q_max {
            let pe = (q as f64 - 0.5) * PI / a;
            let po = q as f64 * PI / a;
            let i = basis.index(q, k);
            even[i] = r * g[k - 1] / (e - k0 * k0 - pe * pe);
            odd[i] = r * po * g[k - 1] * s0 / (k0 * k0 + po * po - e);
        }
    }
    (even, odd)
}

/// Number of even-series levels below E.
fn even_count(a: f64, b: f64, e: f64) -> usize {
    let mut n = 0;
    for k in 1.. {
        let r = e - (k as f64 * PI / b).powi(2);
        if r < 0.0 {
            break;
        }
        n += (r.sqrt() * a / PI + 0.5).floor() as usize;
    }
    n
}

fn even_poles(a: f64, b: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut p = Vec::new();
    for k in 1.. {
        let r = (k as f64 * PI / b).powi(2);
        if r > hi {
            break;
        }
        for q in 1.. {
            let e = r + ((q as f64 - 0.5) * PI / a).powi(2);
            if e > hi {
                break;
            }
            if e > lo {
                p.push(e);
            }
        }
    }
    p.sort_by(f64::total_cmp);
    p
}

fn static_part(b: f64, n_cheb: usize) -> DMatrix<f64> {
    let l = 2 * n_cheb + 40;
    let s: Vec<f64> = (0..l).map(|i| ((i as f64 + 0.5) * PI / l as f64).cos()).collect();
    let t = DMatrix::from_fn(n_cheb, l, |j, i| ((2 * j + 1) as f64 * s[i].acos()).cos());
    let ls = DMatrix::from_fn(l, l, |i, m| {
        let x = 0.25 * PI * (s[i] - s[m]);
        if x.abs() < 1e-300 {
            0.0
        } else {
            (x.sin() / x).abs().ln()
        }
    });
    let mut out = (&t * ls * t.transpose()) * (PI / l as f64).powi(2);
    for j in 0..n_cheb {
        out[(j, j)] -= PI * PI / (2.0 * (2 * j + 1) as f64);
    }
    out * ((0.5 * b).powi(2) / (2.0 * PI))
}

fn coupling(b: f64, n_cheb: usize) -> DMatrix<f64> {
    let jmax = 2 * n_cheb - 1;
    let mut w = DMatrix::zeros(n_cheb, K_BIG);
    for k in 1..=K_BIG {
        let jv = bessel_j_seq(jmax, k as f64 * PI / 2.0);
        for j in 0..n_cheb {
            let order = 2 * j + 1;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            w[(j, k - 1)] = 0.25 * b * PI * sign * jv[order];
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solver(e: f64) -> BarrierSolver {
        BarrierSolver::new(&BilliardSpec::standard_barrier(), e).unwrap()
    }

    #[test]
    fn sigma_is_continuous_through_threshold() {
        let a = 2.6;
        let k0 = 3.0;
        assert!((sigma(a, k0 * k0, k0, 0.5) + (a - 0.5)).abs() < 1e-15);
        assert!((sigma_norm(a, k0 * k0, k0) - a.powi(3) / 3.0).abs() < 1e-13);
        let edge = 1e-4 / (a * a);
        for s in [1.0, -1.0] {
            let (inside, outside) = (k0 * k0 + s * edge * 0.999_999, k0 * k0 + s * edge * 1.000_001);
            for x in [0.0, 0.7, 2.0] {
                let (p, q) = (sigma(a, inside, k0, x), sigma(a, outside, k0, x));
                assert!((p - q).abs() < 1e-10 * q.abs().max(1e-3), "x={x}: {p} vs {q}");
            }
            let (p, q) = (sigma_norm(a, inside, k0), sigma_norm(a, outside, k0));
            assert!((p - q).abs() < 1e-9 * q, "{p} vs {q}");
        }
    }

    #[test]
    fn count_follows_weyl() {
        let spec = BilliardSpec::standard_barrier();
        let s = solver(400.0);
        for e in [50.3, 100.7, 200.1, 399.2] {
            let n = s.count_below(e) as f64;
            assert!((n - spec.weyl_count(e)).abs() < 4.0, "{e}: {n} vs {}", spec.weyl_count(e));
        }
    }

    #[test]
    fn levels_match_count() {
        let s = solver(60.0);
        let lv = s.levels(0.5, 60.0, 1e-10).unwrap();
        assert_eq!(lv.len(), s.count_below(60.0) - s.count_below(0.5));
        assert!(lv.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn bracketed_by_series() {
        // Dirichlet–Neumann bracketing: the barrier levels lie between the
        // all-Neumann (even) and all-Dirichlet (odd) levels on x = 0
        let spec = BilliardSpec::standard_barrier();
        let s = solver(80.0);
        let lv = s.levels(0.5, 80.0, 1e-10).unwrap();
        let mut even = Vec::new();
        let mut odd = Vec::new();
        for q in 1..20 {
            for k in 1..20 {
                let ky = (k as f64 * PI / spec.b).powi(2);
                even.push(ky + ((q as f64 - 0.5) * PI / spec.a).powi(2));
                odd.push(ky + (q as f64 * PI / spec.a).powi(2));
            }
        }
        even.sort_by(f64::total_cmp);
        odd.sort_by(f64::total_cmp);
        for (i, e) in lv.iter().enumerate() {
            assert!(even[i] <= *e + 1e-9 && *e <= odd[i] + 1e-9, "level {i}: {e}");
        }
    }

    #[test]
    fn state_is_normalised() {
        let spec = BilliardSpec::standard_barrier();
        let s = solver(100.0);
        let lv = s.levels(80.0, 100.0, 1e-11).unwrap();
        let basis = ExpansionBasis::covering(super::super::BasisKind::Even, spec.a, spec.b, 100.0, 3.0);
        let st = s.state(lv[0], &basis).unwrap();
        let sum: f64 = st.coeffs.iter().map(|c| c * c).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(st.norm_defect.abs() < 0.05, "{}", st.norm_defect);
    }
}
