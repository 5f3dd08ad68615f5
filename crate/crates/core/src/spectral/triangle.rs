//! Method of particular solutions for the Dirichlet π/8 triangle.
//!
//! The triangle has its π/8 vertex at the origin, the long cathetus on
//! y = 0 and the short one on x = a. The functions J_{8n}(kr) sin(8nθ)
//! vanish on both sides through the vertex, so only x = a has to be
//! enforced. Levels are minima of the smallest singular value of the
//! boundary block of an orthonormalised collocation matrix that also
//! contains interior points to exclude the trivial solution.

use super::{flag_clusters, BasisKind, EigenState, ExpansionBasis, Parity, Solution};
use crate::error::{Error, Result};
use crate::geometry::{BilliardKind, BilliardSpec};
use crate::special::{bessel_j_seq, gauss_legendre_on, golden_min};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Default step of the singular-value scan.
pub const SCAN_STEP: f64 = 0.02;
/// A local minimum counts as a level below this singular value.
pub const DIP_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct TriangleSolver {
    pub a: f64,
    pub b: f64,
    pub e_max: f64,
    /// number of Fourier–Bessel terms
    pub n_terms: usize,
    boundary: Vec<(f64, f64)>,
    interior: Vec<(f64, f64)>,
}

impl TriangleSolver {
    pub fn new(spec: &BilliardSpec, e_max: f64) -> Result<Self> {
        if spec.kind != BilliardKind::TrianglePi8 {
            return Err(Error::Invalid("particular solutions need the π/8 triangle".into()));
        }
        if !(e_max > 0.0) {
            return Err(Error::Invalid(format!("e_max must be positive, got {e_max}")));
        }
        let kr = e_max.sqrt() * spec.a.hypot(spec.b);
        let n = ((kr + 10.0 * kr.cbrt()) / 8.0) as usize + 12;
        Ok(Self::with_terms(spec, e_max, n, 1))
    }

    pub fn with_terms(spec: &BilliardSpec, e_max: f64, n_terms: usize, seed: u64) -> Self {
        let (a, b) = (spec.a, spec.b);
        let nb = 3 * n_terms;
        let boundary = (0..nb)
            .map(|i| (a, b * (0.5 - 0.5 * (PI * (i as f64 + 0.5) / nb as f64).cos())))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let interior = (0..nb)
            .map(|_| {
                let x = a * rng.random::<f64>().sqrt();
                (x, x * b / a * rng.random::<f64>())
            })
            .collect();
        Self {
            a,
            b,
            e_max,
            n_terms,
            boundary,
            interior,
        }
    }

    fn collocation(&self, k: f64) -> (DMatrix<f64>, Vec<f64>) {
        let pts: Vec<&(f64, f64)> = self.boundary.iter().chain(&self.interior).collect();
        let mut m = DMatrix::zeros(pts.len(), self.n_terms);
        for (i, &&(x, y)) in pts.iter().enumerate() {
            let row = basis_row(k, self.n_terms, x, y);
            for (j, v) in row.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        let scale: Vec<f64> = m.column_iter().map(|c| c.norm().max(1e-300)).collect();
        for (j, mut c) in m.column_iter_mut().enumerate() {
            c /= scale[j];
        }
        (m, scale)
    }

    /// Smallest singular value of the boundary block and its right vector in
    /// the particular-solution basis.
    fn tension(&self, e: f64, want_vector: bool) -> (f64, Option<Vec<f64>>) {
        let k = e.sqrt();
        let (m, scale) = self.collocation(k);
        let qr = m.qr();
        let q = qr.q();
        let nb = self.boundary.len();
        let qb = q.rows(0, nb).into_owned();
        let svd = qb.svd(false, want_vector);
        let i = svd.singular_values.imin();
        let s = svd.singular_values[i];
        if !want_vector {
            return (s, None);
        }
        let vt = svd.v_t.expect("requested right vectors");
        let v = vt.row(i).transpose();
        let r = qr.r();
        let c = r
            .solve_upper_triangular(&v)
            .unwrap_or_else(|| nalgebra::DVector::zeros(self.n_terms));
        (s, Some(c.iter().zip(&scale).map(|(c, s)| c / s).collect()))
    }

    pub fn singular_value(&self, e: f64) -> f64 {
        self.tension(e, false).0
    }

    /// Levels in (lo, hi) with their dip depth.
    pub fn levels(&self, lo: f64, hi: f64, tol: f64) -> Result<Vec<(f64, f64)>> {
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Invalid(format!("bad window [{lo}, {hi}]")));
        }
        if hi > self.e_max * (1.0 + 1e-12) {
            let kr = hi.sqrt() * self.a.hypot(self.b);
            return Err(Error::Truncation {
                q_max: ((kr + 10.0 * kr.cbrt()) / 8.0) as usize + 12,
                k_max: 0,
            });
        }
        let start = (lo - 2.0 * SCAN_STEP).max(SCAN_STEP);
        let n = ((hi + 2.0 * SCAN_STEP - start) / SCAN_STEP).ceil() as usize + 1;
        let grid: Vec<f64> = (0..n).map(|i| start + i as f64 * SCAN_STEP).collect();
        let sv: Vec<f64> = grid.par_iter().map(|&e| self.singular_value(e)).collect();
        let minima: Vec<usize> = (1..n - 1)
            .filter(|&j| sv[j] < sv[j - 1] && sv[j] <= sv[j + 1])
            .collect();
        let refined: Vec<(f64, f64)> = minima
            .par_iter()
            .map(|&j| golden_min(|e| self.singular_value(e), grid[j - 1], grid[j + 1], tol.min(1e-8)))
            .collect();
        Ok(refined
            .into_iter()
            .filter(|&(e, s)| e > lo && e < hi && s < DIP_THRESHOLD)
            .collect())
    }

    /// Normalised particular-solution coefficients of the level at `e`.
    pub fn particular_coefficients(&self, e: f64) -> Vec<f64> {
        let c = self.tension(e, true).1.expect("vector requested");
        let k = e.sqrt();
        let (pts, w) = self.quadrature(k);
        let n2: f64 = pts
            .iter()
            .zip(&w)
            .map(|(&(x, y), w)| w * particular_sum(k, &c, x, y).powi(2))
            .sum();
        c.iter().map(|v| v / n2.sqrt()).collect()
    }

    /// Tensor Gauss rule on the triangle through x = a·u, y = x·(b/a)·v.
    fn quadrature(&self, k: f64) -> (Vec<(f64, f64)>, Vec<f64>) {
        let nu = (6.0 * k * self.a / PI) as usize + 40;
        let nv = (6.0 * k * self.b / PI) as usize + 20;
        let (u, wu) = gauss_legendre_on(nu, 0.0, 1.0);
        let (v, wv) = gauss_legendre_on(nv, 0.0, 1.0);
        let t = self.b / self.a;
        let mut pts = Vec::with_capacity(nu * nv);
        let mut w = Vec::with_capacity(nu * nv);
        for (ui, wui) in u.iter().zip(&wu) {
            let x = self.a * ui;
            for (vi, wvi) in v.iter().zip(&wv) {
                pts.push((x, x * t * vi));
                w.push(self.a * wui * x * t * wvi);
            }
        }
        (pts, w)
    }

    /// Coefficients of the state, continued by zero, on the bounding rectangle basis.
    pub fn rectangle_coefficients(&self, e: f64, c: &[f64], basis: &ExpansionBasis) -> Vec<f64> {
        let k = e.sqrt();
        let (pts, w) = self.quadrature(k);
        let f: Vec<f64> = pts
            .iter()
            .zip(&w)
            .map(|(&(x, y), w)| w * particular_sum(k, c, x, y))
            .collect();
        project_on_rectangle(&pts, &f, basis)
    }

    pub fn state(&self, e: f64, basis: &ExpansionBasis) -> Result<EigenState> {
        if basis.kind != BasisKind::BoundingRectangle {
            return Err(Error::BasisMismatch(format!(
                "triangle states live on the bounding rectangle, not {:?}",
                basis.kind
            )));
        }
        let c = self.particular_coefficients(e);
        let coeffs = self.rectangle_coefficients(e, &c, basis);
        let sum: f64 = coeffs.iter().map(|v| v * v).sum();
        Ok(EigenState {
            energy: e,
            parity: Parity::NotApplicable,
            basis: *basis,
            coeffs: coeffs.iter().map(|v| v / sum.sqrt()).collect(),
            odd_coeffs: None,
            norm_defect: 1.0 - sum,
            cluster: false,
            solution: Solution::Triangle { c },
        })
    }

    pub fn solve(&self, lo: f64, hi: f64, tol: f64) -> Result<Vec<EigenState>> {
        let basis = ExpansionBasis::covering(BasisKind::BoundingRectangle, self.a, self.b, hi, 2.0);
        let lv = self.levels(lo, hi, tol)?;
        let mut out = lv
            .par_iter()
            .map(|&(e, _)| self.state(e, &basis))
            .collect::<Result<Vec<_>>>()?;
        flag_clusters(&mut out, 1e-3);
        Ok(out)
    }
}

/// Quadrature projection Σ_i f_i ψ_qk(p_i) onto a product sine basis.
pub fn project_on_rectangle(pts: &[(f64, f64)], f: &[f64], basis: &ExpansionBasis) -> Vec<f64> {
    let np = pts.len();
    let norm = 2.0 / (basis.a * basis.b).sqrt();
    let sx = DMatrix::from_fn(basis.q_max, np, |q, i| {
        ((q + 1) as f64 * PI * pts[i].0 / basis.a).sin() * f[i] * norm
    });
    let sy = DMatrix::from_fn(np, basis.k_max, |i, k| ((k + 1) as f64 * PI * pts[i].1 / basis.b).sin());
    let c = sx * sy;
    let mut out = vec![0.0; basis.len()];
    for q in 1..=basis.q_max {
        for k in 1..=basis.k_max {
            out[basis.index(q, k)] = c[(q - 1, k - 1)];
        }
    }
    out
}

fn basis_row(k: f64, n: usize, x: f64, y: f64) -> Vec<f64> {
    let r = x.hypot(y);
    let th = y.atan2(x);
    let j = bessel_j_seq(8 * n, k * r);
    (1..=n).map(|i| j[8 * i] * (8.0 * i as f64 * th).sin()).collect()
}

/// Ψ(x,y) = Σ c_n J_{8n}(kr) sin(8nθ).
pub fn particular_sum(k: f64, c: &[f64], x: f64, y: f64) -> f64 {
    basis_row(k, c.len(), x, y).iter().zip(c).map(|(b, c)| b * c).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowest_level_is_simple() {
        let spec = BilliardSpec::standard_triangle();
        let s = TriangleSolver::new(&spec, 20.0).unwrap();
        let lv = s.levels(0.5, 20.0, 1e-9).unwrap();
        assert!(!lv.is_empty());
        let e1 = lv[0].0;
        assert!(e1 > 0.0);
        if lv.len() > 1 {
            assert!(lv[1].0 - e1 > 0.1);
        }
        assert!(s.singular_value(e1) < 1e-4, "{}", s.singular_value(e1));
    }

    #[test]
    fn state_vanishes_on_short_side() {
        let spec = BilliardSpec::standard_triangle();
        let s = TriangleSolver::new(&spec, 60.0).unwrap();
        let lv = s.levels(40.0, 60.0, 1e-10).unwrap();
        let c = s.particular_coefficients(lv[0].0);
        let k = lv[0].0.sqrt();
        let peak = (1..50)
            .map(|i| particular_sum(k, &c, spec.a * 0.6, spec.b * 0.6 * i as f64 / 50.0).abs())
            .fold(0.0, f64::max);
        for i in 1..10 {
            let y = spec.b * i as f64 / 10.0;
            assert!(particular_sum(k, &c, spec.a, y).abs() < 1e-4 * peak);
        }
    }
}
