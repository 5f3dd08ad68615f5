//! Wave propagation through a periodic array of slits after Wick rotation:
//! the Gaussian-kernel Fredholm problem on [-1, 1].

use crate::error::{Error, Result};
use crate::special::{gauss_legendre, leakage_constant};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct FredholmSpectrum {
    pub kappa: f64,
    /// Λ_1 >= Λ_2 >= ...
    pub eigenvalues: Vec<f64>,
    /// Ψ_n at the quadrature nodes, orthonormal under the quadrature weights
    pub eigenfunctions: Vec<Vec<f64>>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Transverse momentum p̃_n = πn/2 in units of the half width.
pub fn p_tilde(n: usize) -> f64 {
    0.5 * PI * n as f64
}

fn kernel(kappa: f64, x: f64, y: f64) -> f64 {
    (kappa / PI).sqrt() * (-kappa * (x - y) * (x - y)).exp()
}

/// Nyström solution of √(κ/π) ∫ e^{-κ(x-y)²} Ψ(y) dy = Λ Ψ(x) on Gauss–Legendre nodes.
pub fn solve_fredholm(kappa: f64, n_modes: usize, order: usize) -> Result<FredholmSpectrum> {
    if !(kappa > 0.0) {
        return Err(Error::Invalid(format!("kappa must be positive, got {kappa}")));
    }
    if n_modes == 0 || 4 * n_modes > order {
        return Err(Error::Invalid(format!(
            "{n_modes} modes need a quadrature order of at least {}",
            4 * n_modes.max(1)
        )));
    }
    if (order as f64) < 8.0 * kappa.sqrt() {
        return Err(Error::Truncation {
            q_max: (8.0 * kappa.sqrt()).ceil() as usize,
            k_max: 0,
        });
    }
    let (x, w) = gauss_legendre(order);
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let a = DMatrix::from_fn(order, order, |i, j| sw[i] * kernel(kappa, x[i], x[j]) * sw[j]);
    let eig = SymmetricEigen::new(a);
    let mut idx: Vec<usize> = (0..order).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut eigenvalues = Vec::with_capacity(n_modes);
    let mut eigenfunctions = Vec::with_capacity(n_modes);
    for (n, &c) in idx.iter().take(n_modes).enumerate() {
        eigenvalues.push(eig.eigenvalues[c]);
        let col = eig.eigenvectors.column(c);
        let mut psi: Vec<f64> = (0..order).map(|i| col[i] / sw[i]).collect();
        let p = p_tilde(n + 1);
        let probe: f64 = psi
            .iter()
            .zip(&x)
            .zip(&w)
            .map(|((v, xi), wi)| v * wi * (p * (xi + 1.0)).sin())
            .sum();
        if probe < 0.0 {
            psi.iter_mut().for_each(|p| *p = -*p);
        }
        eigenfunctions.push(psi);
    }
    Ok(FredholmSpectrum {
        kappa,
        eigenvalues,
        eigenfunctions,
        nodes: x,
        weights: w,
    })
}

impl FredholmSpectrum {
    /// Nyström extension of Ψ_n (1-based) to any x in [-1, 1].
    pub fn eval(&self, n: usize, x: f64) -> f64 {
        let psi = &self.eigenfunctions[n - 1];
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .zip(psi)
            .map(|((y, w), p)| w * kernel(self.kappa, x, *y) * p)
            .sum();
        s / self.eigenvalues[n - 1]
    }

    /// Amplitude of the best-fit slab sine sin(p̃_n (x+1)) in Ψ_n.
    pub fn sine_amplitude(&self, n: usize) -> f64 {
        let p = p_tilde(n);
        let psi = &self.eigenfunctions[n - 1];
        let (mut num, mut den) = (0.0, 0.0);
        for ((x, w), v) in self.nodes.iter().zip(&self.weights).zip(psi) {
            let s = (p * (x + 1.0)).sin();
            num += w * v * s;
            den += w * s * s;
        }
        num / den
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

/// Ψ_n(1) with Ψ_n scaled so that its interior sine fit has unit amplitude.
pub fn boundary_value(spec: &FredholmSpectrum, n: usize) -> Result<f64> {
    if n == 0 || n > spec.eigenvalues.len() {
        return Err(Error::Invalid(format!(
            "mode {n} not in 1..={}",
            spec.eigenvalues.len()
        )));
    }
    Ok(spec.eval(n, 1.0) / spec.sine_amplitude(n))
}

/// Large-κ eigenvalue asymptote 1 - p̃²/(4κ) + c p̃²/κ^{3/2}.
pub fn lambda_asymptote(kappa: f64, n: usize, c: f64) -> f64 {
    let p2 = p_tilde(n).powi(2);
    1.0 - p2 / (4.0 * kappa) + c * p2 / kappa.powf(1.5)
}

/// Large-κ boundary value |p̃_n| (1/(2√κ) - 1/(8κ)).
pub fn boundary_asymptote(kappa: f64, n: usize) -> f64 {
    p_tilde(n) * (0.5 / kappa.sqrt() - 0.125 / kappa)
}

/// Least-squares estimate of c in Λ_n = 1 - p̃²/(4κ) + c p̃²/κ^{3/2} over a κ sweep.
pub fn fit_correction_coefficient(kappas: &[f64], n: usize, order: usize) -> Result<f64> {
    let p2 = p_tilde(n).powi(2);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &kappa in kappas {
        let spec = solve_fredholm(kappa, n.max(1), order.max(4 * n))?;
        let y = spec.eigenvalues[n - 1] - 1.0 + p2 / (4.0 * kappa);
        let x = p2 / kappa.powf(1.5);
        sxy += x * y;
        sxx += x * x;
    }
    if sxx == 0.0 {
        return Err(Error::Insufficient("empty κ sweep".into()));
    }
    Ok(sxy / sxx)
}

/// Complex energy shift δE = C(1+i) p_n² √(d/(k w²)) of a wave in a slit channel.
pub fn complex_energy_shift(k: f64, d: f64, w: f64, n: usize) -> Complex64 {
    let pn = PI * n as f64 / w;
    let re = leakage_constant() * pn * pn * (d / (k * w * w)).sqrt();
    Complex64::new(re, re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigenvalue_asymptote_at_200() {
        let s = solve_fredholm(200.0, 4, 400).unwrap();
        let pred = lambda_asymptote(200.0, 1, 0.206);
        assert!((s.eigenvalues[0] - pred).abs() < 1e-3);
        assert!((s.eigenvalues[0] - 0.997_10).abs() < 1e-3);
        for l in &s.eigenvalues {
            assert!(*l > 0.0 && *l < 1.0);
        }
    }

    #[test]
    fn parity_of_modes() {
        let s = solve_fredholm(150.0, 6, 200).unwrap();
        for n in 1..=6 {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            for &x in &[0.13, 0.5, 0.91] {
                let a = s.eval(n, x);
                let b = s.eval(n, -x);
                assert!((b - sign * a).abs() < 1e-8 * a.abs().max(1.0), "n={n}");
            }
        }
    }

    #[test]
    fn trace_identity() {
        // a smooth kernel has a rapidly decaying spectrum, so 30 modes exhaust the trace
        let kappa = 0.5;
        let s = solve_fredholm(kappa, 30, 120).unwrap();
        assert!((s.trace() - 2.0 * (kappa / PI).sqrt()).abs() < 1e-8);
        assert!(s.eigenvalues.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn boundary_value_at_200() {
        let s = solve_fredholm(200.0, 3, 400).unwrap();
        let v = boundary_value(&s, 1).unwrap();
        let pred = boundary_asymptote(200.0, 1);
        assert!((v / pred - 1.0).abs() < 0.1, "{v} vs {pred}");
    }

    #[test]
    fn rejects_underresolved_kernel() {
        assert!(matches!(
            solve_fredholm(10_000.0, 2, 100),
            Err(Error::Truncation { .. })
        ));
        assert!(solve_fredholm(10.0, 30, 100).is_err());
    }

    #[test]
    fn energy_shift_consistency() {
        let (k, d, w, n) = (40.0, 3.0, 1.5, 2);
        let de = complex_energy_shift(k, d, w, n);
        assert_eq!(de.re, de.im);
        let phi = PI * n as f64 / w / k;
        let len = 17.0;
        let lhs = len / k * de.im;
        let rhs = leakage_constant() * (k * d).sqrt() * phi * phi * len / w;
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }
}
