//! Superscar quasi-modes: plane waves along a periodic-orbit pencil that
//! vanish on its boundaries, their energies, and their folded expansions in
//! the rectangle bases used by the eigensolvers.

use crate::error::{Error, Result};
use crate::geometry::{BilliardKind, BilliardSpec, PencilOffset, PeriodicOrbitPencil};
use crate::special::{gauss_legendre_on, linear_fit};
use crate::spectral::triangle::project_on_rectangle;
use crate::spectral::{a_mn, reexpand, BasisKind, EigenState, ExpansionBasis, Parity, Solution};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileCase {
    OddMEvenM,
    OddMOddM,
    EvenM2Mod4,
    EvenM0Mod4,
    Dd,
    Dn,
    Horizontal,
}

impl ProfileCase {
    /// Case of a genuine (M,N) pencil from M mod 4 and the parity of m.
    pub fn dispatch(mx: u64, m: i64) -> Self {
        match (mx % 4, m.rem_euclid(2)) {
            (1 | 3, 0) => ProfileCase::OddMEvenM,
            (1 | 3, _) => ProfileCase::OddMOddM,
            (2, _) => ProfileCase::EvenM2Mod4,
            _ => ProfileCase::EvenM0Mod4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperscarWave {
    pub pencil: PeriodicOrbitPencil,
    /// longitudinal quantum number
    pub m: i64,
    /// transverse quantum number
    pub n: u32,
    pub energy: f64,
    pub profile_case: ProfileCase,
    pub validity: f64,
}

impl SuperscarWave {
    /// Wave with longitudinal number `m` counted along the whole orbit.
    ///
    /// For the named orbits `m` is the index of their closed forms: the
    /// half-wavelength count along b for (0,1) and along a for the vertical
    /// bouncing balls, where the Dirichlet–Neumann one uses m - 1/2.
    pub fn new(pencil: &PeriodicOrbitPencil, m: i64, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("transverse number n must be at least 1".into()));
        }
        if m < 1 {
            return Err(Error::Invalid(format!("longitudinal number m = {m} must be positive")));
        }
        let (a, b) = (pencil.a, pencil.b);
        let (mf, nf) = (m as f64, n as f64);
        let pi2 = PI * PI;
        let (case, energy) = match pencil.offset {
            PencilOffset::Whole => (ProfileCase::Horizontal, pi2 * (mf * mf / (b * b) + nf * nf / (a * a))),
            PencilOffset::DirichletDirichlet => {
                (ProfileCase::Dd, pi2 * (mf * mf / (a * a) + 4.0 * nf * nf / (b * b)))
            }
            PencilOffset::DirichletNeumann => (
                ProfileCase::Dn,
                pi2 * ((mf - 0.5).powi(2) / (a * a) + 4.0 * nf * nf / (b * b)),
            ),
            _ => {
                if !pencil.parity_rule.admits(m) {
                    return Err(Error::Parity(format!(
                        "m = {m} is not allowed on the {:?} pencil of ({},{})",
                        pencil.offset, pencil.mx, pencil.ny
                    )));
                }
                let we = pencil.w_eff();
                (
                    ProfileCase::dispatch(pencil.mx, m),
                    pi2 * (mf * mf / pencil.length.powi(2) + nf * nf / (we * we)),
                )
            }
        };
        let k = energy.sqrt();
        let p = PI * nf / pencil.w_eff();
        Ok(Self {
            pencil: pencil.clone(),
            m,
            n,
            energy,
            profile_case: case,
            validity: p * (pencil.length / (k * PI)).sqrt(),
        })
    }

    /// Even-M wave labelled by the half-integer count m - 1/2 of its
    /// longitudinal phase, i.e. longitudinal number 2m - 1.
    pub fn with_half_index(pencil: &PeriodicOrbitPencil, m: i64, n: u32) -> Result<Self> {
        if pencil.mx % 2 != 0 || pencil.ny == 0 {
            return Err(Error::Invalid("half-index labelling applies to even-M pencils".into()));
        }
        Self::new(pencil, 2 * m - 1, n)
    }

    pub fn k(&self) -> f64 {
        self.energy.sqrt()
    }

    /// Transverse profile φ_n(η), zero outside the strip.
    pub fn transverse_profile(&self, eta: f64) -> f64 {
        let (lo, hi) = self.pencil.eta_range();
        if eta <= lo || eta >= hi {
            return 0.0;
        }
        (PI * self.n as f64 * (eta - lo) / (hi - lo)).sin()
    }
}

pub fn superscar_energy(wave: &SuperscarWave) -> f64 {
    wave.energy
}

/// Energy of the (m,n) bouncing-ball wave of the π/8 triangle.
pub fn triangle_energy(spec: &BilliardSpec, m: u32, n: u32) -> f64 {
    PI * PI * ((m as f64 / spec.a).powi(2) + (n as f64 / spec.b).powi(2))
}

/// Transverse numbers 1..=n_max with validity below λ₀; empty for a closed channel.
pub fn admissible_n(pencil: &PeriodicOrbitPencil, k: f64, lambda0: f64) -> std::ops::RangeInclusive<u32> {
    let n_max = lambda0 * pencil.w_eff() * (k / (PI * pencil.length)).sqrt();
    1..=(n_max.floor().max(0.0) as u32)
}

/// Canonical solution of M ν - N′ μ = 1 with 0 <= μ < M, returned as (ν, μ).
pub fn bezout(mx: i64, nprime: i64) -> Result<(i64, i64)> {
    if mx < 1 || nprime < 0 {
        return Err(Error::Invalid(format!("bezout needs M >= 1 and N' >= 0, got ({mx},{nprime})")));
    }
    let (mut r0, mut r1) = (nprime as i128, mx as i128);
    let (mut s0, mut s1) = (1i128, 0i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    if r0 != 1 {
        return Err(Error::Invalid(format!("M = {mx} and N' = {nprime} are not coprime")));
    }
    let m = mx as i128;
    // s0·N′ ≡ 1 (mod M), so μ = -s0 solves N′μ ≡ -1
    let mu = (-s0).rem_euclid(m);
    let nu = (1 + nprime as i128 * mu) / m;
    Ok((nu as i64, mu as i64))
}

/// Folded wave on the triangle at (z, x): the four-image alternating sum of
/// the unfolded rectangle wave.
pub fn fold_triangle(spec: &BilliardSpec, m: u32, n: u32, z: f64, x: f64) -> f64 {
    let (a, b) = (spec.a, spec.b);
    let norm = 2.0 / (a * b).sqrt();
    let psi = |z: f64, x: f64| {
        if z <= 0.0 || z >= a || x <= 0.0 || x >= b {
            0.0
        } else {
            norm * (PI * m as f64 * z / a).sin() * (PI * n as f64 * x / b).sin()
        }
    };
    let s = 0.5f64.sqrt();
    psi(z, x) - psi(s * (z + x), s * (z - x)) + psi(s * (z - x), s * (z + x)) - psi(x, z)
}

/// Coefficients of the folded triangle wave on the bounding rectangle basis.
pub fn fold_triangle_series(spec: &BilliardSpec, m: u32, n: u32, basis: &ExpansionBasis) -> Result<Vec<f64>> {
    if spec.kind != BilliardKind::TrianglePi8 || basis.kind != BasisKind::BoundingRectangle {
        return Err(Error::BasisMismatch("triangle folds live on the bounding rectangle".into()));
    }
    let k = triangle_energy(spec, m, n).sqrt();
    let nu = (6.0 * k * spec.a / PI) as usize + 40;
    let nv = (6.0 * k * spec.b / PI) as usize + 20;
    let (u, wu) = gauss_legendre_on(nu, 0.0, 1.0);
    let (v, wv) = gauss_legendre_on(nv, 0.0, 1.0);
    let t = spec.b / spec.a;
    let mut pts = Vec::with_capacity(nu * nv);
    let mut f = Vec::with_capacity(nu * nv);
    for (ui, wui) in u.iter().zip(&wu) {
        let z = spec.a * ui;
        for (vi, wvi) in v.iter().zip(&wv) {
            let x = z * t * vi;
            pts.push((z, x));
            f.push(spec.a * wui * z * t * wvi * fold_triangle(spec, m, n, z, x));
        }
    }
    Ok(project_on_rectangle(&pts, &f, basis))
}

/// A superscar wave expanded on the full-rectangle basis
/// √(2/(ab)) sin(πp(x+a)/2a) sin(πky/b) of (-a,a)×(0,b).
#[derive(Debug, Clone)]
pub struct FoldedWave {
    pub source: SuperscarWave,
    /// full-rectangle basis, p = 1..=q_max, k = 1..=k_max
    pub basis: ExpansionBasis,
    pub coeffs: Vec<Complex64>,
    /// (ν, μ) for odd M or (ν′, μ′) for even M
    pub bezout: (i64, i64),
    /// Q for odd M or Q′ for even M
    pub q_rat: f64,
    /// fraction of the analytic norm inside the truncation box
    pub captured: f64,
    /// (m′, norm of the untruncated m′ slice) before normalisation
    pub marginal: Vec<(i64, f64)>,
}

/// Signed (k, p) of the term (q, m′): odd M uses (ν, μ) with N′ = 2N, even M
/// uses (ν′, μ′) with N′ = N and M′ = M/2.
pub fn fold_indices(mx: u64, ny: u64, bez: (i64, i64), q: i64, mp: i64) -> (i64, i64) {
    let (nu, mu) = bez;
    if mx % 2 == 1 {
        (q * mx as i64 - mp * mu, -2 * q * ny as i64 + mp * nu)
    } else {
        (q * (mx / 2) as i64 - mp * mu, -q * ny as i64 + mp * nu)
    }
}

/// Offset rate of the transverse index: the η phase of term (q, m′) is
/// π(q - m′Q)η/W with W = w for odd M and W = 2w for even M. For even M this
/// is twice the Q′ of the (ν′, μ′) construction, since the transverse period
/// of the lattice exponentials is 4w there.
pub fn q_rational(spec_a: f64, spec_b: f64, mx: u64, ny: u64, bez: (i64, i64)) -> f64 {
    let (nu, mu) = (bez.0 as f64, bez.1 as f64);
    let (m, n) = (mx as f64, ny as f64);
    let (a2, b2) = (spec_a * spec_a, spec_b * spec_b);
    let den = 2.0 * m * m * a2 + 2.0 * n * n * b2;
    if mx % 2 == 1 {
        (nu * b2 * n + 2.0 * mu * m * a2) / den
    } else {
        2.0 * (2.0 * m * a2 * mu + n * b2 * nu) / den
    }
}

/// (1/2W)∫ φ_n(η) e^{-iπηt/W} dη over a strip starting at `eta0` of length `len`.
fn c_coeff(n: u32, t: f64, w: f64, eta0: f64, len: f64) -> Complex64 {
    let alpha = PI * n as f64 / len;
    let beta = PI * t / w;
    let i = Complex64::i();
    let integral = if (alpha - beta).abs() < 1e-12 * alpha {
        -i * (0.5 * len)
    } else if (alpha + beta).abs() < 1e-12 * alpha {
        i * (0.5 * len)
    } else {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        alpha * (1.0 - sign * (-i * beta * len).exp()) / (alpha * alpha - beta * beta)
    };
    (-i * beta * eta0).exp() * integral / (2.0 * w)
}

/// Expansion of the wave on the full-rectangle box matching `basis`, which
/// is an even or odd series box of the desymmetrised rectangle.
pub fn fold_barrier(wave: &SuperscarWave, basis: &ExpansionBasis) -> Result<FoldedWave> {
    let pencil = &wave.pencil;
    let (a, b) = (pencil.a, pencil.b);
    let full = ExpansionBasis::new(BasisKind::FullRectangle, 2 * basis.q_max, basis.k_max, a, b)?;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); full.len()];
    if matches!(
        wave.profile_case,
        ProfileCase::Horizontal | ProfileCase::Dd | ProfileCase::Dn
    ) {
        named_series(wave, &full, &mut coeffs);
        return Ok(FoldedWave {
            source: wave.clone(),
            basis: full,
            coeffs,
            bezout: (0, 0),
            q_rat: 0.0,
            captured: 1.0,
            marginal: vec![(wave.m, 1.0)],
        });
    }
    if !pencil.parity_rule.admits(wave.m) {
        return Err(Error::Parity(format!("m = {} does not fit the pencil", wave.m)));
    }
    let (mx, ny) = (pencil.mx, pencil.ny);
    let odd_m_pencil = mx % 2 == 1;
    let bez = if odd_m_pencil {
        bezout(mx as i64, 2 * ny as i64)?
    } else {
        bezout((mx / 2) as i64, ny as i64)?
    };
    let q_rat = q_rational(a, b, mx, ny, bez);
    let w = if odd_m_pencil { pencil.w } else { 2.0 * pencil.w };
    let (eta0, eta1) = pencil.eta_range();
    let len = eta1 - eta0;
    // Parseval total of the C coefficients over all q
    let c_total = len / (4.0 * w);
    let terms: Vec<(i64, f64)> = if odd_m_pencil {
        vec![(wave.m, 1.0)]
    } else if wave.m % 2 == 0 {
        // M ≡ 0 mod 4 with even m: e^{iπmξ/L} is itself a lattice exponential
        vec![(wave.m / 2, 1.0)]
    } else {
        // symmetric window about m - 1/2 cut where |B| < 10⁻⁴ of its peak
        let half = (wave.m + 1) / 2;
        let tail = 5000;
        (half - tail..half + tail)
            .map(|mp| (mp, 1.0 / (PI * (mp as f64 + 0.5 - half as f64))))
            .collect()
    };
    let (pm, km) = (full.q_max as i64, full.k_max as i64);
    let mut captured = 0.0;
    let mut marginal = Vec::with_capacity(terms.len());
    let step = if odd_m_pencil { mx as i64 } else { (mx / 2) as i64 };
    for &(mp, bw) in &terms {
        let kshift = mp * bez.1;
        // |k| <= km fixes the q range
        let qlo = (kshift - km).div_euclid(step) - 1;
        let qhi = (kshift + km).div_euclid(step) + 1;
        let mut slice = 0.0;
        let centre = (mp as f64 * q_rat).round() as i64;
        let full_slice: f64 = (centre - 200..=centre + 200)
            .map(|q| (bw * c_coeff(wave.n, q as f64 - mp as f64 * q_rat, w, eta0, len)).norm_sqr())
            .sum();
        for q in qlo..=qhi {
            let (k, p) = fold_indices(mx, ny, bez, q, mp);
            if k == 0 || p == 0 || k.abs() > km || p.abs() > pm {
                continue;
            }
            let t = q as f64 - mp as f64 * q_rat;
            let c = bw * c_coeff(wave.n, t, w, eta0, len);
            let phase = Complex64::from_polar(1.0, -0.5 * PI * p as f64);
            let f = -(p.signum() * k.signum()) as f64 * c * phase;
            coeffs[full.index(p.unsigned_abs() as usize, k.unsigned_abs() as usize)] += f;
            slice += c.norm_sqr();
        }
        captured += slice;
        marginal.push((mp, full_slice.sqrt()));
    }
    // the Gibbs weights 1/(π(m′+½-m)) are normalised to Σ|B|² = 1
    let captured = captured / c_total;
    let norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Truncation {
            q_max: basis.q_max * 2,
            k_max: basis.k_max * 2,
        });
    }
    let peak = coeffs
        .iter()
        .copied()
        .max_by(|x, y| x.norm_sqr().total_cmp(&y.norm_sqr()))
        .unwrap_or_default();
    let phase = peak.conj() / peak.norm() / norm;
    coeffs.iter_mut().for_each(|c| *c *= phase);
    Ok(FoldedWave {
        source: wave.clone(),
        basis: full,
        coeffs,
        bezout: bez,
        q_rat,
        captured,
        marginal,
    })
}

/// Closed forms of the (0,1) and (1,0) bouncing balls on the full-rectangle box.
fn named_series(wave: &SuperscarWave, full: &ExpansionBasis, out: &mut [Complex64]) {
    let b = full.b;
    let (m, n) = (wave.m as usize, wave.n as usize);
    // desymmetrised series (q, transverse profile along y)
    let (q, odd, ycoef): (usize, bool, Vec<f64>) = match wave.profile_case {
        ProfileCase::Horizontal => {
            let mut y = vec![0.0; full.k_max];
            if m <= full.k_max {
                y[m - 1] = 1.0;
            }
            (n, true, y)
        }
        ProfileCase::Dd => (m, true, half_sine_coeffs(b, n, full.k_max, true)),
        _ => (m, false, half_sine_coeffs(b, n, full.k_max, false)),
    };
    let p = if odd { 2 * q } else { 2 * q - 1 };
    if p > full.q_max {
        return;
    }
    let sign = if odd {
        if q % 2 == 0 { 1.0 } else { -1.0 }
    } else if q % 2 == 1 {
        1.0
    } else {
        -1.0
    };
    let norm: f64 = ycoef.iter().map(|c| c * c).sum::<f64>().sqrt();
    for (k, c) in ycoef.iter().enumerate() {
        out[full.index(p, k + 1)] = Complex64::new(sign * c / norm, 0.0);
    }
}

/// Projections of √2·sin(2πny/b) on the lower (y < b/2) or upper half onto
/// √(2/b) sin(kπy/b).
fn half_sine_coeffs(b: f64, n: usize, k_max: usize, lower: bool) -> Vec<f64> {
    let al = 2.0 * PI * n as f64 / b;
    let (y0, y1) = if lower { (0.0, 0.5 * b) } else { (0.5 * b, b) };
    let scale = 2.0 / b * 2f64.sqrt();
    (1..=k_max)
        .map(|k| {
            let be = k as f64 * PI / b;
            let prim = |y: f64| {
                if k == 2 * n {
                    0.5 * y - (2.0 * al * y).sin() / (4.0 * al)
                } else {
                    0.5 * (((al - be) * y).sin() / (al - be) - ((al + be) * y).sin() / (al + be))
                }
            };
            scale * (prim(y1) - prim(y0))
        })
        .collect()
}

impl FoldedWave {
    /// Value of the series at (x, y); the series continues the wave
    /// periodically over the unfolded plane.
    pub fn eval(&self, x: f64, y: f64) -> Complex64 {
        let (a, b) = (self.basis.a, self.basis.b);
        let norm = (2.0 / (a * b)).sqrt();
        let sx: Vec<f64> = (1..=self.basis.q_max)
            .map(|p| (PI * p as f64 * (x + a) / (2.0 * a)).sin())
            .collect();
        let sy: Vec<f64> = (1..=self.basis.k_max).map(|k| (PI * k as f64 * y / b).sin()).collect();
        let mut s = Complex64::new(0.0, 0.0);
        for (pi, px) in sx.iter().enumerate() {
            for (ki, ky) in sy.iter().enumerate() {
                let c = self.coeffs[pi * self.basis.k_max + ki];
                if c.norm_sqr() > 0.0 {
                    s += c * px * ky;
                }
            }
        }
        s * norm
    }

    /// Restriction to the desymmetrised rectangle split into the even
    /// (odd p) and odd (even p) series on a box of q_max = p_max/2.
    pub fn desymmetrised(&self) -> (ExpansionBasis, Vec<Complex64>, Vec<Complex64>) {
        let qm = self.basis.q_max / 2;
        let km = self.basis.k_max;
        let even_b = ExpansionBasis {
            kind: BasisKind::Even,
            q_max: qm,
            k_max: km,
            a: self.basis.a,
            b: self.basis.b,
        };
        let mut even = vec![Complex64::new(0.0, 0.0); even_b.len()];
        let mut odd = even.clone();
        for q in 1..=qm {
            let se = if q % 2 == 1 { 1.0 } else { -1.0 };
            let so = -se;
            for k in 1..=km {
                even[even_b.index(q, k)] = se * self.coeffs[self.basis.index(2 * q - 1, k)];
                odd[even_b.index(q, k)] = so * self.coeffs[self.basis.index(2 * q, k)];
            }
        }
        (even_b, even, odd)
    }

    /// ‖f‖² of the restriction, including the cross terms between the series.
    pub fn desymmetrised_norm2(&self) -> f64 {
        let (bx, even, odd) = self.desymmetrised();
        let mut s: f64 = even.iter().chain(&odd).map(|c| c.norm_sqr()).sum();
        if odd.iter().any(|c| c.norm_sqr() > 0.0) && even.iter().any(|c| c.norm_sqr() > 0.0) {
            let mut cross = Complex64::new(0.0, 0.0);
            for m in 1..=bx.q_max {
                for nn in 1..=bx.q_max {
                    let amn = a_mn(m, nn);
                    for k in 1..=bx.k_max {
                        cross += odd[bx.index(m, k)].conj() * amn * even[bx.index(nn, k)];
                    }
                }
            }
            s += 2.0 * cross.re;
        }
        s
    }

    /// Real part of the restriction as a state: both series carry the whole
    /// function, normalised over the desymmetrised rectangle. The second value
    /// is the largest |Im F| relative to the largest |F|.
    pub fn to_state(&self) -> Result<(EigenState, f64)> {
        let (bx, fe, fo) = self.desymmetrised();
        let n2 = self.desymmetrised_norm2();
        if n2 <= 0.0 {
            return Err(Error::Insufficient("fold vanishes on the billiard".into()));
        }
        let ob = ExpansionBasis {
            kind: BasisKind::Odd,
            ..bx
        };
        let re = |v: &[Complex64]| v.iter().map(|c| c.re).collect::<Vec<f64>>();
        let (e_re, o_re) = (re(&fe), re(&fo));
        let s = 1.0 / n2.sqrt();
        let even: Vec<f64> = reexpand(&o_re, &ob, &bx)?
            .iter()
            .zip(&e_re)
            .map(|(a, b)| (a + b) * s)
            .collect();
        let odd: Vec<f64> = reexpand(&e_re, &bx, &ob)?
            .iter()
            .zip(&o_re)
            .map(|(a, b)| (a + b) * s)
            .collect();
        let peak = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let imag = self.coeffs.iter().map(|c| c.im.abs()).fold(0.0, f64::max) / peak;
        let sum: f64 = even.iter().map(|c| c * c).sum();
        Ok((
            EigenState {
                energy: self.source.energy,
                parity: Parity::Even,
                basis: bx,
                coeffs: even,
                odd_coeffs: Some(odd),
                norm_defect: 1.0 - sum,
                cluster: false,
                solution: Solution::None,
            },
            imag,
        ))
    }

    /// Largest |F| and its (p, k).
    pub fn peak(&self) -> (usize, usize, f64) {
        let (i, c) = self
            .coeffs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.norm_sqr().total_cmp(&y.1.norm_sqr()))
            .expect("non-empty basis");
        (i / self.basis.k_max + 1, i % self.basis.k_max + 1, c.norm())
    }
}

/// Power-law exponent of the m′-marginal of an even-M fold away from its centre.
pub fn gibbs_tail_profile(fold: &FoldedWave) -> Result<f64> {
    let centre = (fold.source.m + 1) / 2;
    let pts: Vec<(f64, f64)> = fold
        .marginal
        .iter()
        .filter(|(mp, v)| {
            let d = (*mp as f64 + 0.5 - centre as f64).abs();
            (10.0..=110.0).contains(&d) && *v > 0.0
        })
        .map(|(mp, v)| ((*mp as f64 + 0.5 - centre as f64).abs().ln(), v.ln()))
        .collect();
    if fold.marginal.len() < 2 || pts.len() < 20 {
        return Err(Error::Insufficient("fold has no Gibbs tail to fit".into()));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Ok(linear_fit(&x, &y).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PeriodicOrbitPencil as P;

    fn barrier() -> BilliardSpec {
        BilliardSpec::standard_barrier()
    }

    #[test]
    fn bezout_examples() {
        assert_eq!(bezout(1, 4).unwrap(), (1, 0));
        assert_eq!(bezout(3, 2).unwrap(), (1, 1));
        assert!(bezout(4, 2).is_err());
        for m in 1..40i64 {
            for n in 0..40i64 {
                if let Ok((nu, mu)) = bezout(m, n) {
                    assert_eq!(m * nu - n * mu, 1);
                    assert!((0..m).contains(&mu));
                }
            }
        }
    }

    #[test]
    fn caption_energies() {
        let s = barrier();
        let t = BilliardSpec::standard_triangle();
        let rel = |x: f64, y: f64| (x / y - 1.0).abs();
        assert!(rel(triangle_energy(&t, 50, 1), 407.6) < 5e-4);
        assert!(rel(triangle_energy(&t, 79, 1), 1016.12) < 5e-4);
        let h = P::new(&s, 0, 1, PencilOffset::Whole).unwrap();
        assert!(rel(SuperscarWave::new(&h, 152, 1).unwrap().energy, 10088.56) < 5e-4);
        let c = P::new(&s, 1, 1, PencilOffset::Centered).unwrap();
        assert!(rel(SuperscarWave::new(&c, 348, 1).unwrap().energy, 10099.82) < 5e-4);
        let e = P::new(&s, 2, 1, PencilOffset::Symmetric).unwrap();
        assert!(rel(SuperscarWave::with_half_index(&e, 227, 1).unwrap().energy, 10017.67) < 5e-4);
        let sh = P::new(&s, 3, 1, PencilOffset::Shifted).unwrap();
        assert!(rel(SuperscarWave::new(&sh, 589, 1).unwrap().energy, 10019.80) < 5e-4);
        let c32 = P::new(&s, 3, 2, PencilOffset::Centered).unwrap();
        assert!(rel(SuperscarWave::new(&c32, 794, 1).unwrap().energy, 10157.06) < 5e-4);
        let dd = P::new(&s, 1, 0, PencilOffset::DirichletDirichlet).unwrap();
        assert!(rel(SuperscarWave::new(&dd, 85, 1).unwrap().energy, 10209.65) < 5e-4);
        let dn = P::new(&s, 1, 0, PencilOffset::DirichletNeumann).unwrap();
        assert!(rel(SuperscarWave::new(&dn, 85, 1).unwrap().energy, 10089.91) < 5e-4);
    }

    #[test]
    fn parity_is_enforced() {
        let c = P::new(&barrier(), 1, 1, PencilOffset::Centered).unwrap();
        assert!(matches!(SuperscarWave::new(&c, 347, 1), Err(Error::Parity(_))));
        let s = P::new(&barrier(), 2, 1, PencilOffset::Symmetric).unwrap();
        assert!(SuperscarWave::new(&s, 10, 1).is_err());
    }

    #[test]
    fn profiles() {
        let s = barrier();
        let c = P::new(&s, 1, 1, PencilOffset::Centered).unwrap();
        let w = c.w;
        let wv = SuperscarWave::new(&c, 20, 2).unwrap();
        assert!(wv.transverse_profile(-0.5 * w).abs() < 1e-15);
        assert!(wv.transverse_profile(0.5 * w).abs() < 1e-15);
        let sh = P::new(&s, 1, 1, PencilOffset::Shifted).unwrap();
        let wo = SuperscarWave::new(&sh, 21, 1).unwrap();
        for i in 0..20 {
            let eta = -0.5 * w + w * i as f64 / 19.0;
            assert_eq!(wo.transverse_profile(eta), 0.0);
        }
        for (pencil, m, expect) in [(&c, 20, 0.5 * w), (&sh, 21, 0.5 * w)] {
            let wv = SuperscarWave::new(pencil, m, 3).unwrap();
            let (lo, hi) = pencil.eta_range();
            let (x, wt) = gauss_legendre_on(200, lo, hi);
            let i: f64 = x.iter().zip(&wt).map(|(e, q)| q * wv.transverse_profile(*e).powi(2)).sum();
            assert!((i - expect).abs() < 1e-12);
        }
        let e = P::new(&s, 2, 1, PencilOffset::Symmetric).unwrap();
        let we = SuperscarWave::new(&e, 41, 1).unwrap();
        let (x, wt) = gauss_legendre_on(200, -e.w, e.w);
        let i: f64 = x.iter().zip(&wt).map(|(v, q)| q * we.transverse_profile(*v).powi(2)).sum();
        assert!((i - e.w).abs() < 1e-12);
    }

    #[test]
    fn profile_dispatch() {
        assert_eq!(ProfileCase::dispatch(3, 4), ProfileCase::OddMEvenM);
        assert_eq!(ProfileCase::dispatch(5, 7), ProfileCase::OddMOddM);
        assert_eq!(ProfileCase::dispatch(6, 7), ProfileCase::EvenM2Mod4);
        assert_eq!(ProfileCase::dispatch(8, 7), ProfileCase::EvenM0Mod4);
    }

    #[test]
    fn admissible_range_example() {
        let n_max = (1000.0f64 / (10.0 * PI)).sqrt().floor() as u32;
        assert_eq!(n_max, 5);
        let c = P::new(&barrier(), 1, 1, PencilOffset::Centered).unwrap();
        let r = admissible_n(&c, 1000.0, 1.0);
        let expect = (c.w * (1000.0 / (PI * c.length)).sqrt()).floor() as u32;
        assert_eq!(*r.end(), expect);
        for n in r {
            let wv_k = 1000.0;
            let p = PI * n as f64 / c.w;
            assert!(p * (c.length / (wv_k * PI)).sqrt() <= 1.0 + 1e-12);
        }
        assert!(admissible_n(&c, 1e-6, 1.0).is_empty());
    }

    #[test]
    fn triangle_fold_vanishes_on_edges_and_is_normalised() {
        let t = BilliardSpec::standard_triangle();
        for i in 1..40 {
            let z = t.a * i as f64 / 40.0;
            assert!(fold_triangle(&t, 50, 1, z, 0.0).abs() < 1e-12);
            assert!(fold_triangle(&t, 50, 1, z, z * t.b / t.a).abs() < 1e-12);
            let x = t.b * i as f64 / 40.0;
            assert!(fold_triangle(&t, 50, 1, t.a, x).abs() < 1e-12);
        }
        let basis = ExpansionBasis::covering(BasisKind::BoundingRectangle, t.a, t.b, 407.6, 2.0);
        let c = fold_triangle_series(&t, 50, 1, &basis).unwrap();
        let n2: f64 = c.iter().map(|v| v * v).sum();
        assert!((n2 - 1.0).abs() < 1e-2, "{n2}");
    }

    #[test]
    fn odd_m_fold_is_complete_and_peaked() {
        let s = barrier();
        let c = P::new(&s, 1, 1, PencilOffset::Centered).unwrap();
        let wv = SuperscarWave::new(&c, 60, 1).unwrap();
        let basis = ExpansionBasis::covering(BasisKind::Even, s.a, s.b, wv.energy, 2.0);
        let f = fold_barrier(&wv, &basis).unwrap();
        assert!(f.captured > 0.99, "{}", f.captured);
        assert_eq!(f.marginal.len(), 1);
        let n2: f64 = f.coeffs.iter().map(|c| c.norm_sqr()).sum();
        assert!((n2 - 1.0).abs() < 1e-12);
        let (p, k, _) = f.peak();
        // a single half-sine has its largest Fourier weight at t = 0
        let bez = f.bezout;
        let qs = (-60..60).filter(|&q| {
            let (k, p) = fold_indices(1, 1, bez, q, 60);
            k != 0 && p != 0 && k.unsigned_abs() as usize <= f.basis.k_max && p.unsigned_abs() as usize <= f.basis.q_max
        });
        let qstar = qs
            .min_by(|x, y| {
                let d = |q: i64| (q as f64 - 60.0 * f.q_rat).abs();
                d(*x).total_cmp(&d(*y))
            })
            .unwrap();
        let (ks, ps) = fold_indices(1, 1, bez, qstar, 60);
        assert_eq!((p, k), (ps.unsigned_abs() as usize, ks.unsigned_abs() as usize));
    }

    #[test]
    fn energy_identity_holds() {
        let s = barrier();
        for (mx, ny) in [(1u64, 1u64), (3, 1), (3, 2), (2, 1), (4, 1), (5, 3)] {
            let pencil = &P::all_for(&s, mx, ny).unwrap()[0];
            let bez = if mx % 2 == 1 {
                bezout(mx as i64, 2 * ny as i64).unwrap()
            } else {
                bezout((mx / 2) as i64, ny as i64).unwrap()
            };
            let qr = q_rational(s.a, s.b, mx, ny, bez);
            for q in -7..7 {
                for mp in [1i64, 4, 17, 60] {
                    let (k, p) = fold_indices(mx, ny, bez, q, mp);
                    let (long, big_w) = if mx % 2 == 1 {
                        (mp as f64, pencil.w)
                    } else {
                        (2.0 * mp as f64, 2.0 * pencil.w)
                    };
                    let lhs = (long / pencil.length).powi(2) + ((q as f64 - mp as f64 * qr) / big_w).powi(2);
                    let rhs = (p as f64 / (2.0 * s.a)).powi(2) + (k as f64 / s.b).powi(2);
                    assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0), "({mx},{ny}) q={q} m'={mp}");
                }
            }
        }
    }

    /// The strip wave continued over the reflection group of the full
    /// rectangle, built directly from its lattice translations.
    fn image_sum(c: &P, wv: &SuperscarWave, bez: (i64, i64), x: f64, y: f64) -> Complex64 {
        let (a, b) = (c.a, c.b);
        let (eta0, eta1) = c.eta_range();
        let period = if c.mx % 2 == 1 { 2.0 * c.w } else { 4.0 * c.w };
        let psi = |x: f64, y: f64| {
            let (_, eta) = c.to_pencil_frame(x, y);
            let sft = ((eta - eta0) / period).floor() as i64;
            let (xi, eta) = c.to_pencil_frame(x - 4.0 * a * (bez.1 * sft) as f64, y - 2.0 * b * (bez.0 * sft) as f64);
            if eta < eta0 || eta > eta1 {
                return Complex64::new(0.0, 0.0);
            }
            Complex64::from_polar(wv.transverse_profile(eta), PI * wv.m as f64 * xi / c.length)
        };
        psi(x, y) - psi(2.0 * a - x, y) - psi(x, -y) + psi(2.0 * a - x, -y)
    }

    #[test]
    fn fold_matches_image_sum() {
        let s = barrier();
        let cases = [
            (P::new(&s, 1, 1, PencilOffset::Centered).unwrap(), 40),
            (P::new(&s, 3, 2, PencilOffset::Shifted).unwrap(), 61),
            (P::new(&s, 4, 1, PencilOffset::Adjacent).unwrap(), 50),
        ];
        for (c, m) in cases {
            let wv = SuperscarWave::new(&c, m, 1).unwrap();
            let basis = ExpansionBasis::covering(BasisKind::Even, s.a, s.b, wv.energy, 3.0);
            let f = fold_barrier(&wv, &basis).unwrap();
            let pts: Vec<(f64, f64)> = (0..400)
                .map(|i| {
                    let u = (i as f64 * 0.618_033_988_749_894_9).fract();
                    let v = (i as f64 * 0.754_877_666_246_692_7).fract();
                    (-s.a + 2.0 * s.a * u, s.b * v)
                })
                .collect();
            let fu: Vec<Complex64> = pts.iter().map(|&(x, y)| f.eval(x, y)).collect();
            let gv: Vec<Complex64> = pts.iter().map(|&(x, y)| image_sum(&c, &wv, f.bezout, x, y)).collect();
            let scale = fu.iter().zip(&gv).map(|(u, v)| u * v.conj()).sum::<Complex64>()
                / gv.iter().map(|v| v.norm_sqr()).sum::<f64>();
            let res: f64 = fu.iter().zip(&gv).map(|(u, v)| (u - scale * v).norm_sqr()).sum();
            let tot: f64 = fu.iter().map(|u| u.norm_sqr()).sum();
            assert!((res / tot).sqrt() < 2e-2, "{}: {}", c.label(), (res / tot).sqrt());
        }
    }

    #[test]
    fn exported_fold_keeps_its_overlap() {
        let s = barrier();
        let c = P::new(&s, 1, 1, PencilOffset::Centered).unwrap();
        let wv = SuperscarWave::new(&c, 40, 1).unwrap();
        let basis = ExpansionBasis::covering(BasisKind::Even, s.a, s.b, wv.energy, 2.0);
        let f = fold_barrier(&wv, &basis).unwrap();
        let (st, imag) = f.to_state().unwrap();
        assert!(imag < 1e-10, "{imag}");
        assert!(st.norm_defect.abs() < 0.02, "{}", st.norm_defect);
        let n_odd: f64 = st.odd_coeffs.as_ref().unwrap().iter().map(|c| c * c).sum();
        assert!((n_odd - 1.0).abs() < 0.02, "{n_odd}");
    }

    #[test]
    fn even_m_fold_has_gibbs_tail() {
        let s = barrier();
        let e = P::new(&s, 2, 1, PencilOffset::Symmetric).unwrap();
        let wv = SuperscarWave::with_half_index(&e, 30, 1).unwrap();
        let basis = ExpansionBasis::covering(BasisKind::Even, s.a, s.b, wv.energy, 2.0);
        let f = fold_barrier(&wv, &basis).unwrap();
        let slope = gibbs_tail_profile(&f).unwrap();
        assert!((slope + 1.0).abs() < 0.1, "{slope}");
        let c = P::new(&s, 1, 1, PencilOffset::Centered).unwrap();
        let fo = fold_barrier(&SuperscarWave::new(&c, 40, 1).unwrap(), &basis).unwrap();
        assert!(gibbs_tail_profile(&fo).is_err());
    }
}
