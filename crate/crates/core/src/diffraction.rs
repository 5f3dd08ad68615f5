//! Closed-form singular diffraction: Sommerfeld half-plane field, wedge
//! coefficients, the Kirchhoff multiple-scattering sum and the small-angle
//! amplitudes of a staggered array of half-planes.

use crate::error::{Error, Result};
use crate::special::{leakage_constant, ZETA_HALF};
use num_complex::Complex64;
use std::f64::consts::PI;

pub use crate::special::fresnel;

/// Exact field of a plane wave incident from direction θ_i on a Dirichlet
/// half-plane occupying θ = 0 ≡ 2π.
pub fn halfplane_field(k: f64, r: f64, theta_i: f64, theta_f: f64) -> Complex64 {
    let s = (2.0 * k * r).sqrt();
    let term = |phi: f64| {
        Complex64::from_polar(1.0, -k * r * phi.cos()) * fresnel(-s * (0.5 * phi).cos())
    };
    term(theta_f - theta_i) - term(theta_f + theta_i)
}

/// Geometric-optics part of the half-plane field: incident and reflected
/// plane waves where they are lit.
pub fn halfplane_geometric(k: f64, r: f64, theta_i: f64, theta_f: f64) -> Complex64 {
    let mut out = Complex64::new(0.0, 0.0);
    let minus = theta_f - theta_i;
    let plus = theta_f + theta_i;
    if (0.5 * minus).cos() > 0.0 {
        out += Complex64::from_polar(1.0, -k * r * minus.cos());
    }
    if (0.5 * plus).cos() > 0.0 {
        out -= Complex64::from_polar(1.0, -k * r * plus.cos());
    }
    out
}

/// Which denominator of a diffraction coefficient vanished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpticalBoundary {
    /// θ_f = π + θ_i (shadow of the incident wave)
    Shadow,
    /// θ_f = π - θ_i (edge of the reflected wave)
    Reflection,
}

/// A diffraction coefficient; on an optical boundary the value is a signed
/// infinity and `boundary` names the divergent term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficient {
    pub value: f64,
    pub boundary: Option<OpticalBoundary>,
}

impl Coefficient {
    pub fn is_finite(&self) -> bool {
        self.boundary.is_none()
    }
}

const POLE_EPS: f64 = 1e-14;

fn combine(minus_term: Option<f64>, plus_term: Option<f64>, sign_minus: f64, sign_plus: f64) -> Coefficient {
    match (minus_term, plus_term) {
        (Some(m), Some(p)) => Coefficient {
            value: m + p,
            boundary: None,
        },
        (None, _) => Coefficient {
            value: sign_minus * f64::INFINITY,
            boundary: Some(OpticalBoundary::Shadow),
        },
        (Some(_), None) => Coefficient {
            value: sign_plus * f64::INFINITY,
            boundary: Some(OpticalBoundary::Reflection),
        },
    }
}

/// Half-plane coefficient D = 1/cos((θ_f-θ_i)/2) - 1/cos((θ_f+θ_i)/2).
pub fn halfplane_d(theta_f: f64, theta_i: f64) -> Coefficient {
    let cm = (0.5 * (theta_f - theta_i)).cos();
    let cp = (0.5 * (theta_f + theta_i)).cos();
    let tm = (cm.abs() > POLE_EPS).then(|| 1.0 / cm);
    let tp = (cp.abs() > POLE_EPS).then(|| -1.0 / cp);
    combine(tm, tp, 1.0, 1.0)
}

/// Dirichlet wedge coefficient with exterior angle α = γπ.
pub fn wedge_d(theta_f: f64, theta_i: f64, gamma: f64) -> Coefficient {
    let c0 = (PI / gamma).cos();
    let pre = 2.0 / gamma * (PI / gamma).sin();
    let dp = c0 - ((theta_f + theta_i) / gamma).cos();
    let dm = c0 - ((theta_f - theta_i) / gamma).cos();
    let tp = (dp.abs() > POLE_EPS).then(|| pre / dp);
    let tm = (dm.abs() > POLE_EPS).then(|| -pre / dm);
    combine(tm, tp, 1.0, 1.0)
}

/// Kirchhoff multiple-diffraction sum A_n = (1/π) Σ_{q=1}^{n-1} 1/√(q(n-q)).
pub fn kirchhoff_an(n: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Invalid(format!("A_n needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    // symmetric pairing keeps the small terms together
    let half = (n - 1) / 2;
    let mut s = 0.0;
    for q in (1..=half).rev() {
        let qf = q as f64;
        s += 2.0 / (qf * (nf - qf)).sqrt();
    }
    if n % 2 == 0 {
        s += 2.0 / nf;
    }
    Ok(s / PI)
}

/// Large-n asymptote 1 + 2ζ(1/2)/(π√n).
pub fn kirchhoff_asymptote(n: f64) -> f64 {
    1.0 + 2.0 * ZETA_HALF / (PI * n.sqrt())
}

/// Diffractive trace-formula term -(d/(16πk)) A_n e^{ikdn} + c.c.
pub fn rho_diff(k: f64, d: f64, n: u64) -> Result<f64> {
    let an = kirchhoff_an(n)?;
    Ok(-d / (8.0 * PI * k) * an * (k * d * n as f64).cos())
}

/// Staggered half-plane array: momentum, apex spacing, inclination, incidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterConfig {
    pub k: f64,
    pub d: f64,
    pub alpha: f64,
    pub phi: f64,
}

impl ScatterConfig {
    pub fn new(k: f64, d: f64, alpha: f64, phi: f64) -> Result<Self> {
        if !(k > 0.0 && d > 0.0) {
            return Err(Error::Invalid("k and d must be positive".into()));
        }
        if !(alpha > 0.0 && alpha < PI) {
            return Err(Error::Invalid(format!("inclination {alpha} outside (0, π)")));
        }
        Ok(Self { k, d, alpha, phi })
    }

    /// Dimensionless momentum Q = kd/π.
    pub fn q_dim(&self) -> f64 {
        self.k * self.d / PI
    }

    /// √Q·φ, which has to be small for the small-angle amplitudes.
    pub fn small_angle_parameter(&self) -> f64 {
        self.q_dim().sqrt() * self.phi.abs()
    }

    pub fn validity_warning(&self) -> Option<String> {
        let p = self.small_angle_parameter();
        (p > 0.3).then(|| format!("√Q·φ = {p:.3} exceeds 0.3; small-angle formulas are unreliable"))
    }
}

/// Specular amplitude R₀ = -1 - √Q (1-i) ζ(1/2) φ.
pub fn specular_r0(cfg: &ScatterConfig) -> Complex64 {
    let s = cfg.q_dim().sqrt() * ZETA_HALF * cfg.phi;
    Complex64::new(-1.0 - s, s)
}

/// First-order specular intensity |R₀|² = 1 - C√(kd) φ.
pub fn leakage(cfg: &ScatterConfig) -> f64 {
    1.0 - leakage_constant() * (cfg.k * cfg.d).sqrt() * cfg.phi
}

/// Σ_{m>m0} m^{-s} by Euler–Maclaurin (valid for s > 1 and large m0).
fn zeta_tail(s: f64, m0: f64) -> f64 {
    m0.powf(1.0 - s) / (s - 1.0) - 0.5 * m0.powf(-s) + s * m0.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * m0.powf(-s - 3.0) / 720.0
}

/// Power series coefficients c_j (j >= 3) of a log-factor whose leading terms cancel.
fn tail_from_series(coef: &[f64], base: f64, m0: f64) -> f64 {
    // Σ_{m>m0} Σ_j c_j (base/√m)^j = Σ_j c_j base^j ζ_tail(j/2, m0)
    coef.iter()
        .enumerate()
        .filter(|(j, c)| *j >= 3 && **c != 0.0)
        .map(|(j, c)| c * base.powi(j as i32) * zeta_tail(0.5 * j as f64, m0))
        .sum()
}

const SERIES_ORDER: usize = 16;

/// Small-order reflection intensity |r_n|² from the infinite product.
pub fn small_angle_rn(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Invalid("r_n is defined for n >= 1".into()));
    }
    let nf = n as f64;
    let cutoff = (2000 * n).max(20_000);
    let mut log_sum = 0.0;
    for m in 1..=cutoff {
        if m == n {
            continue;
        }
        let x = (nf / m as f64).sqrt();
        log_sum += ((1.0 + x) / (1.0 - x)).abs().ln() - 2.0 * x;
    }
    // ln((1+x)/(1-x)) - 2x = Σ_{j odd >= 3} 2x^j/j
    let mut coef = vec![0.0; SERIES_ORDER];
    for j in (3..SERIES_ORDER).step_by(2) {
        coef[j] = 2.0 / j as f64;
    }
    log_sum += tail_from_series(&coef, nf.sqrt(), cutoff as f64);
    let val = (2.0 * nf.sqrt() * ZETA_HALF - 2.0 + log_sum).exp() / nf;
    if !val.is_finite() {
        return Err(Error::NoConvergence {
            lo: nf,
            hi: nf,
            reason: "r_n product diverged".into(),
        });
    }
    Ok(val)
}

/// Large-angle reflection intensity |r(u)|².
pub fn large_angle_r(u: f64) -> f64 {
    if u == 0.0 {
        return 1.0;
    }
    let cutoff = ((400.0 * u * u).ceil() as u64).max(20_000);
    let mut log_sum = 0.0;
    for m in 1..=cutoff {
        let y = u / (m as f64).sqrt();
        let f = 1.0 + y;
        if f == 0.0 {
            return 0.0;
        }
        log_sum += 2.0 * f.abs().ln() + (y * y).ln_1p() - 2.0 * y;
    }
    // 2 ln(1+y) + ln(1+y²) - 2y expanded in y
    let mut coef = vec![0.0; SERIES_ORDER];
    for (j, c) in coef.iter_mut().enumerate().skip(1) {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        *c += 2.0 * sign / j as f64;
        if j % 2 == 0 {
            let i = j / 2;
            let s2 = if i % 2 == 1 { 1.0 } else { -1.0 };
            *c += s2 / i as f64;
        }
    }
    coef[1] -= 2.0;
    log_sum += tail_from_series(&coef, u, cutoff as f64);
    (2.0 * ZETA_HALF * u + log_sum).exp()
}

/// Transmission intensity |t(u)|² = 2|r(u)|².
pub fn transmission_t(u: f64) -> f64 {
    2.0 * large_angle_r(u)
}

/// Scaled distance u_n = (n - n*)/(√Q sin 2α) from the large-angle order n* = Q sin²α.
pub fn u_of(n: i64, cfg: &ScatterConfig) -> f64 {
    let q = cfg.q_dim();
    let n_star = q * cfg.alpha.sin().powi(2);
    (n as f64 - n_star) / (q.sqrt() * (2.0 * cfg.alpha).sin())
}

/// Reflected orders allowed by the grating equation with their angles.
pub fn grating_orders(cfg: &ScatterConfig) -> Vec<(i64, f64)> {
    let q = cfg.q_dim();
    let lo = (-q * (0.5 * cfg.phi).sin().powi(2)).ceil() as i64;
    let hi = (q * (0.5 * cfg.phi).cos().powi(2)).floor() as i64;
    (lo..=hi)
        .filter_map(|n| {
            let c = cfg.phi.cos() - 2.0 * PI * n as f64 / (cfg.k * cfg.d);
            (c.abs() <= 1.0).then(|| (n, c.acos()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn field_vanishes_on_screen() {
        for &ti in &[0.3, 1.1, 2.5] {
            for &r in &[0.1, 2.0, 17.0] {
                assert!(halfplane_field(3.0, r, ti, 0.0).norm() < 1e-10);
                assert!(halfplane_field(3.0, r, ti, 2.0 * PI).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn field_solves_helmholtz() {
        let (k, ti) = (2.0, 0.9);
        for &(r, t) in &[(1.3, 2.0), (3.7, 4.1), (0.8, 5.5)] {
            let h = 1e-3;
            let f = |r: f64, t: f64| halfplane_field(k, r, ti, t);
            let c = f(r, t);
            let frr = (f(r + h, t) - 2.0 * c + f(r - h, t)) / (h * h);
            let fr = (f(r + h, t) - f(r - h, t)) / (2.0 * h);
            let ftt = (f(r, t + h) - 2.0 * c + f(r, t - h)) / (h * h);
            let lap = frr + fr / r + ftt / (r * r);
            let res = (lap + k * k * c).norm();
            assert!(res < 1e-4 * k * k * c.norm().max(1.0), "residual {res}");
        }
    }

    #[test]
    fn far_field_matches_coefficient() {
        let (k, r) = (1.0, 1e4);
        for &(ti, tf) in &[(1.0, 3.5), (2.0, 1.5), (0.7, 5.0)] {
            let scattered = halfplane_field(k, r, ti, tf) - halfplane_geometric(k, r, ti, tf);
            let d = halfplane_d(tf, ti).value;
            let pred = Complex64::from_polar(d / (8.0 * PI * k * r).sqrt(), k * r - 0.75 * PI);
            assert!((scattered - pred).norm() < 0.01 * pred.norm(), "{ti} {tf}");
        }
    }

    #[test]
    fn halfplane_example_and_wedge_limit() {
        let d = halfplane_d(PI / 4.0, PI / 2.0);
        assert_abs_diff_eq!(d.value, -1.530_733_729_460_359, epsilon = 1e-12);
        for &(tf, ti) in &[(0.4, 1.3), (2.2, 0.5), (5.0, 2.9)] {
            let w = wedge_d(tf, ti, 2.0).value;
            assert_abs_diff_eq!(w, halfplane_d(tf, ti).value, epsilon = 1e-12);
        }
    }

    #[test]
    fn boundaries_are_tagged() {
        let ti = 0.6;
        let d = halfplane_d(PI + ti, ti);
        assert_eq!(d.boundary, Some(OpticalBoundary::Shadow));
        assert!(d.value.is_infinite());
        let d = halfplane_d(PI - ti, ti);
        assert_eq!(d.boundary, Some(OpticalBoundary::Reflection));
        for eps in [1e-4, 1e-6] {
            let near = halfplane_d(PI + ti - eps, ti).value;
            assert!((near * eps - 2.0).abs() < 1e-2);
            let near = halfplane_d(PI - ti + eps, ti).value;
            assert!((near * eps - 2.0).abs() < 1e-2);
        }
    }

    #[test]
    fn kirchhoff_small_and_large() {
        assert_abs_diff_eq!(kirchhoff_an(2).unwrap(), 1.0 / PI, epsilon = 1e-15);
        assert_abs_diff_eq!(kirchhoff_an(3).unwrap(), 2f64.sqrt() / PI, epsilon = 1e-15);
        let a = kirchhoff_an(10_000).unwrap();
        assert!((a - kirchhoff_asymptote(1e4)).abs() < 1e-3);
        assert!(kirchhoff_an(1).is_err());
    }

    #[test]
    fn specular_and_leakage() {
        let cfg = ScatterConfig::new(50.0, 2.0, 2.0, 0.0).unwrap();
        assert_eq!(specular_r0(&cfg), Complex64::new(-1.0, 0.0));
        assert_eq!(leakage(&cfg), 1.0);
        let cfg = ScatterConfig::new(50.0, 2.0, 2.0, 1e-6).unwrap();
        let exact = specular_r0(&cfg).norm_sqr();
        assert!((exact - leakage(&cfg)).abs() < 1e-9);
        assert!((leakage_constant() - 1.6476).abs() < 1e-3);
    }

    #[test]
    fn reflection_products() {
        assert_eq!(large_angle_r(0.0), 1.0);
        for &u in &[-0.7, 0.3, 1.5, 4.0] {
            assert_eq!(transmission_t(u), 2.0 * large_angle_r(u));
            assert!(large_angle_r(u) > 0.0);
        }
        let r1 = small_angle_rn(1).unwrap();
        let r2 = small_angle_rn(2).unwrap();
        assert!(r1 > 0.0 && r2 > 0.0 && r1.is_finite());
    }

    #[test]
    fn grating_example() {
        let cfg = ScatterConfig::new(10.0 * PI, 1.0, 2.0, 0.1).unwrap();
        let orders = grating_orders(&cfg);
        let one = orders.iter().find(|o| o.0 == 1).unwrap();
        assert_abs_diff_eq!(one.1, 0.795_004_165_278_025_8f64.acos(), epsilon = 1e-12);
        let zero = orders.iter().find(|o| o.0 == 0).unwrap();
        assert_abs_diff_eq!(zero.1, 0.1, epsilon = 1e-12);
        for (n, phin) in orders {
            let lhs = cfg.k * cfg.d * (cfg.phi.cos() - phin.cos());
            assert_abs_diff_eq!(lhs, 2.0 * PI * n as f64, epsilon = 1e-9);
        }
    }

    #[test]
    fn small_order_angles() {
        let cfg = ScatterConfig::new(1e6, 1.0, 2.0, 1e-5).unwrap();
        let q = cfg.q_dim();
        let orders = grating_orders(&cfg);
        for n in 1..4 {
            let phin = orders.iter().find(|o| o.0 == n).unwrap().1;
            assert!((phin / (2.0 * (n as f64 / q).sqrt()) - 1.0).abs() < 1e-3);
        }
    }
}
