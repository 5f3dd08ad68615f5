//! Overlaps with superscar waves, Breit–Wigner fits of their local density,
//! eigenfunction moments and spectral statistics.

use crate::error::{Error, Result};
use crate::geometry::{BilliardSpec, PencilOffset, PeriodicOrbitPencil};
use crate::special::{gauss_legendre_on, leakage_constant, linear_fit, nelder_mead};
use crate::spectral::{evaluate_state, BasisKind, EigenState, ExpansionBasis, SpectralWindow};
use crate::superscar::{admissible_n, fold_barrier, FoldedWave, SuperscarWave};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;

fn same_rectangle(a: &ExpansionBasis, b: &ExpansionBasis) -> bool {
    (a.a - b.a).abs() <= 1e-12 * a.a && (a.b - b.b).abs() <= 1e-12 * a.b
}

/// |⟨Ψ, f⟩|²/‖f‖² for a barrier state and a folded wave, in coefficient space.
///
/// The fold is split into its even and odd series on the desymmetrised
/// rectangle and paired with the state's expansions on the same series;
/// boxes of different size are compared on their common (q,k) range.
pub fn overlap(state: &EigenState, fold: &FoldedWave) -> Result<f64> {
    let odd = state
        .odd_coeffs
        .as_ref()
        .ok_or_else(|| Error::BasisMismatch("state has no odd-series coefficients".into()))?;
    if state.basis.kind != BasisKind::Even {
        return Err(Error::BasisMismatch("barrier overlaps need the even series".into()));
    }
    let (bx, fe, fo) = fold.desymmetrised();
    if !same_rectangle(&bx, &state.basis) {
        return Err(Error::BasisMismatch("fold and state live on different rectangles".into()));
    }
    let n2 = fold.desymmetrised_norm2();
    if n2 <= 0.0 {
        return Err(Error::Insufficient("fold vanishes on the billiard".into()));
    }
    let mut s = Complex64::new(0.0, 0.0);
    for q in 1..=bx.q_max.min(state.basis.q_max) {
        for k in 1..=bx.k_max.min(state.basis.k_max) {
            let i = state.basis.index(q, k);
            let j = bx.index(q, k);
            s += state.coeffs[i] * fe[j] + odd[i] * fo[j];
        }
    }
    Ok(s.norm_sqr() / n2)
}

/// (Σ c·f)²/Σf² for a real series `f` on a basis of the same kind as the state.
pub fn overlap_coeffs(state: &EigenState, basis: &ExpansionBasis, f: &[f64]) -> Result<f64> {
    if basis.kind != state.basis.kind || !same_rectangle(basis, &state.basis) {
        return Err(Error::BasisMismatch(format!(
            "{:?} series against a {:?} state",
            basis.kind, state.basis.kind
        )));
    }
    let n2: f64 = f.iter().map(|v| v * v).sum();
    if n2 <= 0.0 {
        return Err(Error::Insufficient("zero trial function".into()));
    }
    let mut s = 0.0;
    for q in 1..=basis.q_max.min(state.basis.q_max) {
        for k in 1..=basis.k_max.min(state.basis.k_max) {
            s += state.coeff(q, k) * f[basis.index(q, k)];
        }
    }
    Ok(s * s / n2)
}

/// Squared inner product of two states.
pub fn overlap_states(a: &EigenState, b: &EigenState) -> Result<f64> {
    Ok(a.inner(b)?.powi(2))
}

/// The same overlap as [`overlap`] by Gauss–Legendre quadrature of Ψ·f over
/// the desymmetrised rectangle, Ψ taken from the state's native solution.
pub fn overlap_quadrature(spec: &BilliardSpec, state: &EigenState, fold: &FoldedWave) -> Result<f64> {
    let (a, b) = (spec.a, spec.b);
    let nx = fold.basis.q_max / 2 + 60;
    let ny = fold.basis.k_max + 60;
    // panels split at y = b/2 where the barrier tip sits
    let (x, wx) = gauss_legendre_on(nx, 0.0, a);
    let (mut y, mut wy) = gauss_legendre_on(ny / 2 + 20, 0.0, 0.5 * b);
    let (y2, wy2) = gauss_legendre_on(ny / 2 + 20, 0.5 * b, b);
    y.extend(y2);
    wy.extend(wy2);
    let grid: Vec<(f64, f64)> = x.iter().flat_map(|&u| y.iter().map(move |&v| (u, v))).collect();
    let psi = evaluate_state(spec, state, &grid)?;
    let mut s = Complex64::new(0.0, 0.0);
    let mut ff = 0.0;
    let mut pp = 0.0;
    for (i, &(u, v)) in grid.iter().enumerate() {
        let w = wx[i / y.len()] * wy[i % y.len()];
        let f = fold.eval(u, v);
        s += w * psi[i] * f;
        ff += w * f.norm_sqr();
        pp += w * psi[i] * psi[i];
    }
    Ok(s.norm_sqr() / (ff * pp))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapEntry {
    pub energy: f64,
    pub m: i64,
    pub superscar_energy: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapSeries {
    pub pencil: String,
    pub n: u32,
    pub window: SpectralWindow,
    pub entries: Vec<OverlapEntry>,
}

/// Longitudinal number whose superscar energy lies nearest to `e`, among the
/// values the pencil admits; ties go to the smaller m. `None` when the
/// channel is closed at `e`.
pub fn m_of_energy(pencil: &PeriodicOrbitPencil, n: u32, e: f64) -> Option<i64> {
    let nf = n as f64;
    let (scale, rest, shift) = match pencil.offset {
        PencilOffset::Whole => (pencil.b, PI * PI * nf * nf / (pencil.a * pencil.a), 0.0),
        PencilOffset::DirichletDirichlet => (pencil.a, 4.0 * PI * PI * nf * nf / (pencil.b * pencil.b), 0.0),
        PencilOffset::DirichletNeumann => (pencil.a, 4.0 * PI * PI * nf * nf / (pencil.b * pencil.b), 0.5),
        _ => (pencil.length, PI * PI * nf * nf / pencil.w_eff().powi(2), 0.0),
    };
    if e <= rest {
        return None;
    }
    let m0 = (scale / PI * (e - rest).sqrt() + shift).round() as i64;
    (m0 - 3..=m0 + 3)
        .filter(|&m| m >= 1)
        .filter_map(|m| SuperscarWave::new(pencil, m, n).ok())
        .min_by(|x, y| {
            (x.energy - e)
                .abs()
                .total_cmp(&(y.energy - e).abs())
                .then(x.m.cmp(&y.m))
        })
        .map(|w| w.m)
}

/// Overlaps of every state in the window with the pencil's superscar wave of
/// transverse number `n` and the longitudinal number nearest its energy.
pub fn overlap_series(
    pencil: &PeriodicOrbitPencil,
    n: u32,
    window: &SpectralWindow,
    states: &[EigenState],
) -> Result<OverlapSeries> {
    if !admissible_n(pencil, window.e_hi.sqrt(), 1.0).contains(&n) {
        return Err(Error::Invalid(format!(
            "channel n = {n} of the {} pencil is closed below E = {}",
            pencil.label(),
            window.e_hi
        )));
    }
    let inside: Vec<&EigenState> = states
        .iter()
        .filter(|s| s.energy >= window.e_lo && s.energy <= window.e_hi)
        .collect();
    let basis = inside
        .first()
        .map(|s| s.basis)
        .ok_or_else(|| Error::Insufficient("no states inside the window".into()))?;
    let ms: Vec<Option<i64>> = inside.iter().map(|s| m_of_energy(pencil, n, s.energy)).collect();
    let mut wanted: Vec<i64> = ms.iter().flatten().copied().collect();
    wanted.sort_unstable();
    wanted.dedup();
    let folds: BTreeMap<i64, (f64, FoldedWave)> = wanted
        .par_iter()
        .map(|&m| {
            let wave = SuperscarWave::new(pencil, m, n)?;
            let f = fold_barrier(&wave, &basis)?;
            Ok((m, (wave.energy, f)))
        })
        .collect::<Result<_>>()?;
    let entries = inside
        .par_iter()
        .zip(&ms)
        .filter_map(|(s, m)| m.map(|m| (s, m)))
        .map(|(s, m)| {
            let (e_m, fold) = &folds[&m];
            Ok(OverlapEntry {
                energy: s.energy,
                m,
                superscar_energy: *e_m,
                c2: overlap(s, fold)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OverlapSeries {
        pencil: pencil.label(),
        n,
        window: *window,
        entries,
    })
}

/// Histogram of overlap weight against δE = E − ℰ_{m(E),n}, normalised to
/// unit area.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalDensity {
    pub lo: f64,
    pub bin_width: f64,
    /// summed weight per bin
    pub weights: Vec<f64>,
    pub samples: usize,
}

impl LocalDensity {
    /// Bins `samples` of (δE, weight) over [-half_range, half_range].
    pub fn from_samples(samples: &[(f64, f64)], half_range: f64, bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0 && half_range > 0.0) {
            return Err(Error::Invalid("bin width and range must be positive".into()));
        }
        let n = (2.0 * half_range / bin_width - 1e-9).ceil() as usize;
        let lo = -0.5 * n as f64 * bin_width;
        let mut weights = vec![0.0; n];
        let mut used = 0;
        for &(d, w) in samples {
            let i = ((d - lo) / bin_width).floor();
            if i >= 0.0 && (i as usize) < n {
                weights[i as usize] += w;
                used += 1;
            }
        }
        Ok(Self {
            lo,
            bin_width,
            weights,
            samples: used,
        })
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.bin_width * self.weights.len() as f64
    }

    pub fn centres(&self) -> Vec<f64> {
        (0..self.weights.len())
            .map(|i| self.lo + (i as f64 + 0.5) * self.bin_width)
            .collect()
    }

    /// ρ per bin, integrating to one.
    pub fn density(&self) -> Vec<f64> {
        let t: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / (t * self.bin_width)).collect()
    }
}

/// Local density of the peaks whose energies lie in [centre − e, centre + e].
pub fn local_density(series: &OverlapSeries, centre: f64, e: f64, bin_width: f64) -> Result<LocalDensity> {
    let samples: Vec<(f64, f64)> = series
        .entries
        .iter()
        .filter(|x| (x.energy - centre).abs() <= e)
        .map(|x| (x.energy - x.superscar_energy, x.c2))
        .collect();
    if samples.len() < 100 {
        return Err(Error::Insufficient(format!(
            "{} overlap samples, at least 100 are needed",
            samples.len()
        )));
    }
    let half = samples.iter().map(|s| s.0.abs()).fold(0.0, f64::max) + bin_width;
    LocalDensity::from_samples(&samples, half, bin_width)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreitWignerFit {
    pub epsilon: f64,
    pub gamma: f64,
    /// Pearson χ² of the binned weights against the fitted shape
    pub chi2: f64,
    /// Γ came out narrower than one bin
    pub degenerate: bool,
}

/// Weighted maximum-likelihood Lorentzian fit, truncated to the histogram range.
pub fn bw_fit(hist: &LocalDensity) -> Result<BreitWignerFit> {
    let total: f64 = hist.weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Insufficient("empty histogram".into()));
    }
    let h = hist.bin_width;
    let (lo, hi) = (hist.lo, hist.hi());
    let edges: Vec<f64> = (0..=hist.weights.len()).map(|i| lo + i as f64 * h).collect();
    let probs = |eps: f64, gam: f64| -> Vec<f64> {
        let cdf = |x: f64| (2.0 * (x - eps) / gam).atan() / PI;
        let norm = cdf(hi) - cdf(lo);
        edges.windows(2).map(|e| (cdf(e[1]) - cdf(e[0])) / norm).collect()
    };
    // parameters in units of the bin width so the fit is scale-free
    let nll = |p: &[f64]| -> f64 {
        let (eps, gam) = (p[0] * h, p[1].exp() * h);
        let pr = probs(eps, gam);
        -hist
            .weights
            .iter()
            .zip(&pr)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, q)| w * q.max(1e-300).ln())
            .sum::<f64>()
    };
    let quantile = |f: f64| {
        let mut acc = 0.0;
        for (i, w) in hist.weights.iter().enumerate() {
            acc += w;
            if acc >= f * total {
                return lo + (i as f64 + 0.5) * h;
            }
        }
        hi
    };
    let eps0 = quantile(0.5);
    let gam0 = (quantile(0.75) - quantile(0.25)).max(h);
    let mut start = vec![eps0 / h, (gam0 / h).ln()];
    for _ in 0..3 {
        start = nelder_mead(nll, &start, &[1.0, 0.3], 1e-13, 4000).0;
    }
    let (eps, gam) = (start[0] * h, start[1].exp() * h);
    let chi2 = hist
        .weights
        .iter()
        .zip(probs(eps, gam))
        .filter(|(_, p)| *p > 0.0)
        .map(|(w, p)| (w - total * p).powi(2) / (total * p))
        .sum();
    Ok(BreitWignerFit {
        epsilon: eps,
        gamma: gam,
        chi2,
        degenerate: gam < h,
    })
}

/// Γ = C·(πn²/w²)·√(d/(k w²)) with C = -2ζ(1/2)/√π and d the spacing of
/// singular vertices along the pencil boundary.
pub fn gamma_prediction(pencil: &PeriodicOrbitPencil, n: u32, k: f64) -> f64 {
    let w = pencil.w_eff();
    let d = pencil.vertex_spacing();
    leakage_constant() * PI * (n * n) as f64 / (w * w) * (d / (k * w * w)).sqrt()
}

/// Lorentzian δE samples of width Γ about ε, unit weights.
pub fn synthetic_lorentzian(epsilon: f64, gamma: f64, count: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = Cauchy::new(epsilon, 0.5 * gamma).expect("positive width");
    (0..count).map(|_| (c.sample(&mut rng), 1.0)).collect()
}

/// M_q = Σ|A|^{2q} and R_q = 1/M_q of one state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEntry {
    pub energy: f64,
    pub k: f64,
    pub components: usize,
    pub q: Vec<f64>,
    pub moments: Vec<f64>,
}

impl MomentEntry {
    pub fn participation(&self, q: f64) -> Option<f64> {
        self.q.iter().position(|x| *x == q).map(|i| 1.0 / self.moments[i])
    }
}

/// Moments of a normalised coefficient vector.
pub fn moments_of(coeffs: &[f64], qs: &[f64]) -> Vec<f64> {
    let n2: f64 = coeffs.iter().map(|c| c * c).sum();
    qs.iter()
        .map(|&q| coeffs.iter().map(|c| (c * c / n2).powf(q)).sum())
        .collect()
}

/// Moments of the even-series coefficients inside 1.5 times the momentum
/// circle of the state's energy.
pub fn moments(state: &EigenState, qs: &[f64]) -> Result<MomentEntry> {
    if state.basis.kind != BasisKind::Even {
        return Err(Error::BasisMismatch("moments use the even series".into()));
    }
    let (a, b) = (state.basis.a, state.basis.b);
    let cut = 2.25 * state.energy;
    let mut c = Vec::new();
    for q in 1..=state.basis.q_max {
        for k in 1..=state.basis.k_max {
            let e = PI * PI * ((q as f64 - 0.5).powi(2) / (a * a) + (k * k) as f64 / (b * b));
            if e <= cut {
                c.push(state.coeff(q, k));
            }
        }
    }
    Ok(MomentEntry {
        energy: state.energy,
        k: state.energy.sqrt(),
        components: c.len(),
        q: qs.to_vec(),
        moments: moments_of(&c, qs),
    })
}

/// Gaussian random states with ⌈c·k⌉ components at each k.
pub fn random_state_control(ks: &[f64], c: f64, qs: &[f64], seed: u64) -> Vec<MomentEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ks.iter()
        .map(|&k| {
            let n = (c * k).ceil().max(1.0) as usize;
            let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            MomentEntry {
                energy: k * k,
                k,
                components: n,
                q: qs.to_vec(),
                moments: moments_of(&v, qs),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FractalFit {
    pub q: f64,
    /// D_q = slope/(q − 1) of log R_q against log k
    pub dimension: f64,
    pub std_error: f64,
    /// R_q ≈ prefactor·k^{slope}
    pub prefactor: f64,
    pub k_min: f64,
    pub k_max: f64,
}

/// Log-log regression of R_q against k.
pub fn fractal_fit(entries: &[MomentEntry], q: f64) -> Result<FractalFit> {
    let pts: Vec<(f64, f64)> = entries
        .iter()
        .filter_map(|e| e.participation(q).map(|r| (e.k.ln(), r.ln())))
        .collect();
    if q == 1.0 {
        return Err(Error::Invalid("D_q is fitted for q ≠ 1".into()));
    }
    if pts.len() < 3 {
        return Err(Error::Insufficient("fewer than three states".into()));
    }
    let k_min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).exp();
    let k_max = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).exp();
    if k_max < 10.0 * k_min * (1.0 - 1e-12) {
        return Err(Error::Insufficient(format!(
            "k spans {k_min:.3}..{k_max:.3}, less than a decade"
        )));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (slope, icpt, se) = linear_fit(&x, &y);
    Ok(FractalFit {
        q,
        dimension: slope / (q - 1.0),
        std_error: se / (q - 1.0),
        prefactor: icpt.exp(),
        k_min,
        k_max,
    })
}

/// Levels mapped to unit mean density by the Weyl counting function.
pub fn unfold(spec: &BilliardSpec, levels: &[f64]) -> Vec<f64> {
    levels.iter().map(|&e| spec.weyl_count(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralStatistics {
    /// (bin centre, p(s)) with bins of width 0.1
    pub spacing: Vec<(f64, f64)>,
    /// (L, Σ²(L))
    pub number_variance: Vec<(f64, f64)>,
    /// slope of Σ²(L) over 5 ≤ L ≤ 15
    pub chi: f64,
    pub chi_std_error: f64,
}

/// Nearest-neighbour spacings and number variance of an unfolded spectrum.
pub fn spacing_stats(unfolded: &[f64]) -> Result<SpectralStatistics> {
    if unfolded.len() < 500 {
        return Err(Error::Insufficient(format!(
            "{} levels, at least 500 are needed",
            unfolded.len()
        )));
    }
    let mut x = unfolded.to_vec();
    x.sort_by(f64::total_cmp);
    let s: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();
    let ds = 0.1;
    let nb = (s.iter().fold(0.0, |m: f64, v| m.max(*v)) / ds).floor() as usize + 1;
    let mut hist = vec![0.0; nb];
    for v in &s {
        hist[(v / ds) as usize] += 1.0;
    }
    let spacing = hist
        .iter()
        .enumerate()
        .map(|(i, c)| ((i as f64 + 0.5) * ds, c / (s.len() as f64 * ds)))
        .collect();
    let (x0, x1) = (x[0], x[x.len() - 1]);
    let number_variance: Vec<(f64, f64)> = (2..=40)
        .map(|i| 0.5 * i as f64)
        .map(|l| {
            let steps = ((x1 - x0 - l) / 0.05).floor() as usize;
            let mut acc = 0.0;
            for j in 0..=steps {
                let a = x0 + 0.05 * j as f64;
                let n = x.partition_point(|v| *v < a + l) - x.partition_point(|v| *v < a);
                acc += (n as f64 - l).powi(2);
            }
            (l, acc / (steps + 1) as f64)
        })
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = number_variance
        .iter()
        .filter(|(l, _)| (5.0..=15.0).contains(l))
        .copied()
        .unzip();
    let (chi, _, se) = linear_fit(&lx, &ly);
    Ok(SpectralStatistics {
        spacing,
        number_variance,
        chi,
        chi_std_error: se,
    })
}

/// Unit-density Poisson sequence.
pub fn poisson_levels(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 0.0;
    (0..count)
        .map(|_| {
            let d: f64 = Exp1.sample(&mut rng);
            x += d;
            x
        })
        .collect()
}

/// Equally spaced levels.
pub fn picket_fence(count: usize) -> Vec<f64> {
    (1..=count).map(|i| i as f64).collect()
}
