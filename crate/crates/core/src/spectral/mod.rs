//! Eigenvalues and expansion coefficients of the π/8 triangle and the
//! desymmetrised barrier billiard.

pub mod barrier;
pub mod basis;
pub mod store;
pub mod triangle;

use crate::error::{Error, Result};
use crate::geometry::{BilliardKind, BilliardSpec};
use serde::{Deserialize, Serialize};

pub use barrier::BarrierSolver;
pub use basis::{a_mn, eval_series, reexpand, BasisKind, ExpansionBasis};
pub use triangle::TriangleSolver;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralWindow {
    pub e_lo: f64,
    pub e_hi: f64,
    #[serde(default)]
    pub target_count: Option<usize>,
}

impl SpectralWindow {
    pub fn new(e_lo: f64, e_hi: f64) -> Result<Self> {
        if !(e_lo > 0.0 && e_hi > e_lo) {
            return Err(Error::Invalid(format!(
                "window [{e_lo}, {e_hi}] must satisfy 0 < lo < hi"
            )));
        }
        Ok(Self {
            e_lo,
            e_hi,
            target_count: None,
        })
    }

    /// Parses "lo:hi".
    pub fn parse(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| Error::Invalid(format!("window '{s}' is not lo:hi")))?;
        let p = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("bad number '{t}' in window")))
        };
        Self::new(p(lo)?, p(hi)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
    NotApplicable,
}

/// Solver-native representation used for pointwise evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Solution {
    /// Neumann data ∂ₓΨ(0,y) = Σ g_k sin(kπy/b) of a barrier state
    Barrier { g: Vec<f64> },
    /// Ψ = Σ c_n J_{8n}(kr) sin(8nθ) of a triangle state
    Triangle { c: Vec<f64> },
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenState {
    pub energy: f64,
    pub parity: Parity,
    pub basis: ExpansionBasis,
    /// coefficients on `basis`, flat in (q,k) order
    pub coeffs: Vec<f64>,
    /// the same state on the odd series (barrier only)
    pub odd_coeffs: Option<Vec<f64>>,
    /// 1 - Σ coeffs² before renormalisation of the truncated series
    pub norm_defect: f64,
    /// set when another level lies closer than 10⁻³
    pub cluster: bool,
    pub solution: Solution,
}

impl EigenState {
    pub fn coeff(&self, q: usize, k: usize) -> f64 {
        self.coeffs[self.basis.index(q, k)]
    }

    pub fn odd_basis(&self) -> ExpansionBasis {
        ExpansionBasis {
            kind: BasisKind::Odd,
            ..self.basis
        }
    }

    /// Inner product of two states computed from their coefficients.
    pub fn inner(&self, other: &EigenState) -> Result<f64> {
        if self.basis != other.basis {
            return Err(Error::BasisMismatch("states use different bases".into()));
        }
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum())
    }
}

/// Flags levels that sit closer than `gap` to a neighbour.
pub(crate) fn flag_clusters(states: &mut [EigenState], gap: f64) {
    for i in 1..states.len() {
        if states[i].energy - states[i - 1].energy < gap {
            states[i].cluster = true;
            states[i - 1].cluster = true;
        }
    }
}

/// All barrier eigenstates in the window.
pub fn solve_barrier(spec: &BilliardSpec, window: &SpectralWindow, tol: f64) -> Result<Vec<EigenState>> {
    if spec.kind != BilliardKind::Barrier {
        return Err(Error::Invalid("solve_barrier needs a barrier billiard".into()));
    }
    let solver = BarrierSolver::new(spec, window.e_hi)?;
    let basis = ExpansionBasis::covering(BasisKind::Even, spec.a, spec.b, window.e_hi, 2.0);
    solver.solve(window.e_lo, window.e_hi, tol, &basis)
}

/// All triangle eigenstates in the window.
pub fn solve_triangle(spec: &BilliardSpec, window: &SpectralWindow, tol: f64) -> Result<Vec<EigenState>> {
    if spec.kind != BilliardKind::TrianglePi8 {
        return Err(Error::Invalid("solve_triangle needs the π/8 triangle".into()));
    }
    let solver = TriangleSolver::new(spec, window.e_hi)?;
    solver.solve(window.e_lo, window.e_hi, tol)
}

/// Values of a state at the given points.
pub fn evaluate_state(spec: &BilliardSpec, state: &EigenState, grid: &[(f64, f64)]) -> Result<Vec<f64>> {
    let tol = 1e-12 * (spec.a + spec.b);
    for &(x, y) in grid {
        let inside = match spec.kind {
            BilliardKind::TrianglePi8 => {
                x >= -tol && x <= spec.a + tol && y >= -tol && y <= x * spec.b / spec.a + tol
            }
            _ => x >= -tol && x <= spec.a + tol && y >= -tol && y <= spec.b + tol,
        };
        if !inside {
            return Err(Error::OutsideDomain(x, y));
        }
    }
    match &state.solution {
        Solution::Barrier { g } => Ok(grid
            .iter()
            .map(|&(x, y)| barrier::mode_sum(spec.a, spec.b, state.energy, g, x, y))
            .collect()),
        Solution::Triangle { c } => Ok(grid
            .iter()
            .map(|&(x, y)| triangle::particular_sum(state.energy.sqrt(), c, x, y))
            .collect()),
        Solution::None => Ok(grid
            .iter()
            .map(|&(x, y)| eval_series(&state.basis, &state.coeffs, x, y))
            .collect()),
    }
}
