use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// (2/√(ab)) cos((q-½)πx/a) sin(kπy/b) on the desymmetrised rectangle
    Even,
    /// (2/√(ab)) sin(qπx/a) sin(kπy/b) on the desymmetrised rectangle
    Odd,
    /// √(2/(ab)) sin(πp(x+a)/2a) sin(kπy/b) on the full rectangle (-a,a)×(0,b)
    FullRectangle,
    /// (2/√(ab)) sin(qπx/a) sin(kπy/b) on the a×b rectangle bounding the π/8 triangle,
    /// with the state continued by zero outside the triangle
    BoundingRectangle,
}

/// A truncated product basis, indices q = 1..=q_max, k = 1..=k_max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionBasis {
    pub kind: BasisKind,
    pub q_max: usize,
    pub k_max: usize,
    pub a: f64,
    pub b: f64,
}

impl ExpansionBasis {
    pub fn new(kind: BasisKind, q_max: usize, k_max: usize, a: f64, b: f64) -> Result<Self> {
        if q_max == 0 || k_max == 0 {
            return Err(Error::Invalid("basis truncation must be at least 1".into()));
        }
        Ok(Self {
            kind,
            q_max,
            k_max,
            a,
            b,
        })
    }

    /// Smallest box whose corner modes reach `radius_factor`·√E in each direction.
    pub fn covering(kind: BasisKind, a: f64, b: f64, energy: f64, radius_factor: f64) -> Self {
        let k = energy.max(0.0).sqrt() * radius_factor;
        let xlen = if kind == BasisKind::FullRectangle { 2.0 * a } else { a };
        Self {
            kind,
            q_max: (k * xlen / PI).ceil() as usize + 2,
            k_max: (k * b / PI).ceil() as usize + 2,
            a,
            b,
        }
    }

    pub fn len(&self) -> usize {
        self.q_max * self.k_max
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of (q,k), both 1-based.
    pub fn index(&self, q: usize, k: usize) -> usize {
        (q - 1) * self.k_max + (k - 1)
    }

    pub fn energy(&self, q: usize, k: usize) -> f64 {
        let ky = (k as f64 * PI / self.b).powi(2);
        let qx = match self.kind {
            BasisKind::Even => (q as f64 - 0.5) * PI / self.a,
            BasisKind::Odd | BasisKind::BoundingRectangle => q as f64 * PI / self.a,
            BasisKind::FullRectangle => q as f64 * PI / (2.0 * self.a),
        };
        qx * qx + ky
    }

    /// Whether the highest modes exceed `margin`·E in both directions.
    pub fn covers(&self, energy: f64, margin: f64) -> Result<()> {
        let need = Self::covering(self.kind, self.a, self.b, energy * margin, 1.0);
        if self.q_max < need.q_max - 2 || self.k_max < need.k_max - 2 {
            return Err(Error::Truncation {
                q_max: need.q_max,
                k_max: need.k_max,
            });
        }
        Ok(())
    }

    /// Value of basis function (q,k) at (x,y).
    pub fn eval(&self, q: usize, k: usize, x: f64, y: f64) -> f64 {
        let (qf, kf) = (q as f64, k as f64);
        let sy = (kf * PI * y / self.b).sin();
        let norm = 2.0 / (self.a * self.b).sqrt();
        match self.kind {
            BasisKind::Even => norm * ((qf - 0.5) * PI * x / self.a).cos() * sy,
            BasisKind::Odd | BasisKind::BoundingRectangle => norm * (qf * PI * x / self.a).sin() * sy,
            BasisKind::FullRectangle => {
                norm / 2f64.sqrt() * (PI * qf * (x + self.a) / (2.0 * self.a)).sin() * sy
            }
        }
    }

    pub fn same_rectangle(&self, other: &Self) -> bool {
        (self.a - other.a).abs() <= 1e-12 * self.a && (self.b - other.b).abs() <= 1e-12 * self.b
    }
}

/// Overlap of sin(mπx/a) with cos((n-½)πx/a) in units of a/2.
pub fn a_mn(m: usize, n: usize) -> f64 {
    let (m, n) = (m as f64, n as f64);
    (1.0 / (m + n - 0.5) + 1.0 / (m - n + 0.5)) / PI
}

/// Change between the odd and even series of the same rectangle.
///
/// The transverse index k is carried over unchanged; the q index is
/// transformed with the orthogonal matrix A_mn truncated to the target size.
pub fn reexpand(coeffs: &[f64], from: &ExpansionBasis, to: &ExpansionBasis) -> Result<Vec<f64>> {
    if coeffs.len() != from.len() {
        return Err(Error::BasisMismatch(format!(
            "{} coefficients for a basis of size {}",
            coeffs.len(),
            from.len()
        )));
    }
    if !from.same_rectangle(to) {
        return Err(Error::BasisMismatch("bases live on different rectangles".into()));
    }
    let kk = from.k_max.min(to.k_max);
    let mut out = vec![0.0; to.len()];
    match (from.kind, to.kind) {
        (f, t) if f == t => {
            for q in 1..=from.q_max.min(to.q_max) {
                for k in 1..=kk {
                    out[to.index(q, k)] = coeffs[from.index(q, k)];
                }
            }
        }
        (BasisKind::Odd, BasisKind::Even) => {
            for m in 1..=from.q_max {
                for n in 1..=to.q_max {
                    let c = a_mn(m, n);
                    for k in 1..=kk {
                        out[to.index(n, k)] += c * coeffs[from.index(m, k)];
                    }
                }
            }
        }
        (BasisKind::Even, BasisKind::Odd) => {
            for n in 1..=from.q_max {
                for m in 1..=to.q_max {
                    let c = a_mn(m, n);
                    for k in 1..=kk {
                        out[to.index(m, k)] += c * coeffs[from.index(n, k)];
                    }
                }
            }
        }
        (f, t) => {
            return Err(Error::BasisMismatch(format!(
                "no re-expansion from {f:?} to {t:?}"
            )))
        }
    }
    Ok(out)
}

/// Sum of a truncated series at one point.
pub fn eval_series(basis: &ExpansionBasis, coeffs: &[f64], x: f64, y: f64) -> f64 {
    let mut s = 0.0;
    for q in 1..=basis.q_max {
        for k in 1..=basis.k_max {
            let c = coeffs[basis.index(q, k)];
            if c != 0.0 {
                s += c * basis.eval(q, k, x, y);
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_is_nearly_orthogonal() {
        for &size in &[64usize, 256, 1024] {
            for m in [1usize, 5, 20] {
                let diag: f64 = (1..=size).map(|n| a_mn(m, n).powi(2)).sum();
                assert!((diag - 1.0).abs() < 2.0 / size as f64, "size {size} m {m}: {diag}");
            }
            let off: f64 = (1..=size).map(|n| a_mn(2, n) * a_mn(7, n)).sum();
            assert!(off.abs() < 4.0 / size as f64);
        }
    }

    #[test]
    fn identity_reexpansion() {
        let b = ExpansionBasis::new(BasisKind::Even, 3, 2, 1.0, 2.0).unwrap();
        let c = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        assert_eq!(reexpand(&c, &b, &b).unwrap(), c);
    }

    #[test]
    fn sine_reexpands_pointwise() {
        let a = 1.3;
        let from = ExpansionBasis::new(BasisKind::Odd, 1, 1, a, 1.0).unwrap();
        let to = ExpansionBasis::new(BasisKind::Even, 4096, 1, a, 1.0).unwrap();
        let f = reexpand(&[1.0], &from, &to).unwrap();
        for i in 2..9 {
            let x = a * i as f64 / 10.0;
            let y = 0.37;
            let exact = eval_series(&from, &[1.0], x, y);
            let approx = eval_series(&to, &f, x, y);
            assert!((exact - approx).abs() < 1e-3, "{x}: {exact} {approx}");
        }
    }

    #[test]
    fn mismatched_bases_rejected() {
        let e = ExpansionBasis::new(BasisKind::Even, 2, 2, 1.0, 1.0).unwrap();
        let f = ExpansionBasis::new(BasisKind::FullRectangle, 2, 2, 1.0, 1.0).unwrap();
        assert!(reexpand(&[0.0; 4], &e, &f).is_err());
        let g = ExpansionBasis::new(BasisKind::Odd, 2, 2, 1.5, 1.0).unwrap();
        assert!(reexpand(&[0.0; 4], &e, &g).is_err());
        assert!(reexpand(&[0.0; 3], &e, &e).is_err());
    }

    #[test]
    fn covering_box_is_large_enough() {
        let b = ExpansionBasis::covering(BasisKind::Even, 2.0, 3.0, 900.0, 1.0);
        assert!(b.covers(900.0, 1.0).is_ok());
        assert!(b.covers(4.0 * 900.0, 1.0).is_err());
    }
}
