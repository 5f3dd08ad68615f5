//! Billiard geometries, periodic-orbit pencils of the barrier billiard and
//! their combinatorial invariants.

use crate::error::{Error, Result};
use crate::special::{gcd, lcm};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A corner angle θ = π·m/n stored as a reduced integer pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Angle {
    pub m: u64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleSpec {
    pub angles: Vec<Angle>,
}

impl AngleSpec {
    pub fn new(pairs: &[(u64, u64)]) -> Result<Self> {
        let mut angles = Vec::with_capacity(pairs.len());
        for &(m, n) in pairs {
            if m == 0 || n == 0 {
                return Err(Error::Invalid(format!("angle π·{m}/{n} is not positive")));
            }
            if gcd(m, n) != 1 {
                return Err(Error::Invalid(format!("angle π·{m}/{n} is not reduced")));
            }
            angles.push(Angle { m, n });
        }
        Ok(Self { angles })
    }

    /// Angle list of a closed simple polygon; the angles must add up to (V-2)π.
    pub fn closed_polygon(pairs: &[(u64, u64)]) -> Result<Self> {
        let spec = Self::new(pairs)?;
        let den = spec.angles.iter().fold(1, |acc, a| lcm(acc, a.n));
        let num: u64 = spec.angles.iter().map(|a| a.m * (den / a.n)).sum();
        let v = spec.angles.len() as u64;
        if v < 3 || num != (v - 2) * den {
            return Err(Error::InconsistentAngles(format!(
                "{v} angles add up to π·{num}/{den}, expected {}π",
                v.saturating_sub(2)
            )));
        }
        Ok(spec)
    }
}

/// Genus of the invariant surface, g = 1 + (N/2)·Σ (m_j - 1)/n_j with N = lcm(n_j).
pub fn genus(spec: &AngleSpec) -> Result<u64> {
    let big_n = spec.angles.iter().fold(1, |acc, a| lcm(acc, a.n));
    let twice: u64 = spec
        .angles
        .iter()
        .map(|a| (a.m - 1) * (big_n / a.n))
        .sum();
    if twice % 2 != 0 {
        return Err(Error::InconsistentAngles(format!(
            "genus 1 + {twice}/2 is not an integer"
        )));
    }
    Ok(1 + twice / 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BilliardKind {
    TrianglePi8,
    Barrier,
    Rectangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub condition: Condition,
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.end[0] - self.start[0]).hypot(self.end[1] - self.start[1])
    }
}

/// Geometry and normalization of one billiard.
///
/// For the triangle the vertices are (0,0) (angle π/8), (a,0) (right angle)
/// and (a,b). The barrier billiard is the desymmetrised rectangle
/// (0,a)×(0,b) with the Neumann window on x = 0, b/2 < y < b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilliardSpec {
    pub kind: BilliardKind,
    pub a: f64,
    pub b: f64,
    pub area: f64,
    pub boundary: Vec<Segment>,
}

/// JSON form of a billiard: `{ "kind": "barrier", "area": 12.566, "aspect_ratio": 1.799 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilliardConfig {
    pub kind: BilliardKind,
    pub area: f64,
    #[serde(default)]
    pub aspect_ratio: Option<f64>,
}

pub fn barrier_aspect_ratio() -> f64 {
    (5f64.sqrt() + 1.0).sqrt()
}

impl BilliardSpec {
    /// Desymmetrised barrier billiard with given area a·b and aspect ratio b/a.
    pub fn barrier(area: f64, aspect: f64) -> Self {
        let a = (area / aspect).sqrt();
        let b = a * aspect;
        let d = Condition::Dirichlet;
        let seg = |s: [f64; 2], e: [f64; 2], c| Segment {
            start: s,
            end: e,
            condition: c,
        };
        let boundary = vec![
            seg([0.0, 0.0], [a, 0.0], d),
            seg([a, 0.0], [a, b], d),
            seg([a, b], [0.0, b], d),
            seg([0.0, b], [0.0, 0.5 * b], Condition::Neumann),
            seg([0.0, 0.5 * b], [0.0, 0.0], d),
        ];
        Self {
            kind: BilliardKind::Barrier,
            a,
            b,
            area,
            boundary,
        }
    }

    /// Dirichlet right triangle with angles π/8, 3π/8, π/2 and area a·b/2.
    pub fn triangle_pi8(area: f64) -> Self {
        let t = (PI / 8.0).tan();
        let a = (2.0 * area / t).sqrt();
        let b = a * t;
        let d = Condition::Dirichlet;
        let boundary = vec![
            Segment {
                start: [0.0, 0.0],
                end: [a, 0.0],
                condition: d,
            },
            Segment {
                start: [a, 0.0],
                end: [a, b],
                condition: d,
            },
            Segment {
                start: [a, b],
                end: [0.0, 0.0],
                condition: d,
            },
        ];
        Self {
            kind: BilliardKind::TrianglePi8,
            a,
            b,
            area,
            boundary,
        }
    }

    pub fn rectangle(a: f64, b: f64) -> Self {
        let d = Condition::Dirichlet;
        let corners = [[0.0, 0.0], [a, 0.0], [a, b], [0.0, b], [0.0, 0.0]];
        let boundary = corners
            .windows(2)
            .map(|w| Segment {
                start: w[0],
                end: w[1],
                condition: d,
            })
            .collect();
        Self {
            kind: BilliardKind::Rectangle,
            a,
            b,
            area: a * b,
            boundary,
        }
    }

    /// Barrier billiard with area 4π and b/a = √(√5+1).
    pub fn standard_barrier() -> Self {
        Self::barrier(4.0 * PI, barrier_aspect_ratio())
    }

    /// π/8 triangle with area 4π.
    pub fn standard_triangle() -> Self {
        Self::triangle_pi8(4.0 * PI)
    }

    pub fn from_config(cfg: &BilliardConfig) -> Result<Self> {
        if !(cfg.area > 0.0) {
            return Err(Error::Invalid(format!("area must be positive, got {}", cfg.area)));
        }
        match cfg.kind {
            BilliardKind::Barrier => Ok(Self::barrier(
                cfg.area,
                cfg.aspect_ratio.unwrap_or_else(barrier_aspect_ratio),
            )),
            BilliardKind::TrianglePi8 => Ok(Self::triangle_pi8(cfg.area)),
            BilliardKind::Rectangle => {
                let r = cfg
                    .aspect_ratio
                    .ok_or_else(|| Error::Invalid("rectangle needs aspect_ratio".into()))?;
                let a = (cfg.area / r).sqrt();
                Ok(Self::rectangle(a, a * r))
            }
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self.kind {
            BilliardKind::TrianglePi8 => {
                x >= 0.0 && x <= self.a && y >= 0.0 && y <= x * self.b / self.a
            }
            _ => x >= 0.0 && x <= self.a && y >= 0.0 && y <= self.b,
        }
    }

    fn boundary_length(&self, c: Condition) -> f64 {
        self.boundary
            .iter()
            .filter(|s| s.condition == c)
            .map(Segment::length)
            .sum()
    }

    /// Corner and condition-switch contribution to the mean counting function.
    pub fn weyl_constant(&self) -> f64 {
        let dd = |alpha: f64| (PI * PI - alpha * alpha) / (24.0 * PI * alpha);
        let dn = |alpha: f64| -(PI * PI + 2.0 * alpha * alpha) / (48.0 * PI * alpha);
        match self.kind {
            BilliardKind::TrianglePi8 => dd(PI / 8.0) + dd(3.0 * PI / 8.0) + dd(PI / 2.0),
            BilliardKind::Rectangle => 4.0 * dd(PI / 2.0),
            // three Dirichlet right corners, one mixed right corner, and the
            // straight-angle switch at the barrier tip
            BilliardKind::Barrier => 3.0 * dd(PI / 2.0) + dn(PI / 2.0) + dn(PI),
        }
    }

    /// Mean number of levels below E (area, perimeter and corner terms).
    pub fn weyl_count(&self, e: f64) -> f64 {
        if e <= 0.0 {
            return 0.0;
        }
        let ld = self.boundary_length(Condition::Dirichlet);
        let ln = self.boundary_length(Condition::Neumann);
        self.area * e / (4.0 * PI) - (ld - ln) * e.sqrt() / (4.0 * PI) + self.weyl_constant()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthClass {
    SingleW,
    DoubleW,
}

/// Which strip of the unfolded plane the pencil occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PencilOffset {
    /// odd M: -w/2 < η < w/2
    Centered,
    /// odd M: w/2 < η < 3w/2
    Shifted,
    /// M ≡ 2 mod 4: -w < η < w
    Symmetric,
    /// M ≡ 0 mod 4: 0 < η < 2w
    Adjacent,
    /// (0,1) bouncing ball filling the whole billiard
    Whole,
    /// (1,0) bouncing ball between the barrier and the far wall, y < b/2
    DirichletDirichlet,
    /// (1,0) bouncing ball between the Neumann window and the far wall, y > b/2
    DirichletNeumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParityRule {
    MEven,
    MOdd,
    MOddOnly,
    Any,
}

impl ParityRule {
    pub fn admits(self, m: i64) -> bool {
        match self {
            ParityRule::MEven => m % 2 == 0,
            ParityRule::MOdd | ParityRule::MOddOnly => m % 2 != 0,
            ParityRule::Any => true,
        }
    }
}

/// A family of parallel periodic orbits shifted by (2Ma, 2Nb) per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbitPencil {
    pub mx: u64,
    pub ny: u64,
    pub a: f64,
    pub b: f64,
    pub length: f64,
    /// base width 2ab/L_p
    pub w: f64,
    pub width_class: WidthClass,
    pub offset: PencilOffset,
    pub parity_rule: ParityRule,
    pub cos_theta: f64,
    pub sin_theta: f64,
    pub crossing_count: u64,
}

impl PeriodicOrbitPencil {
    /// Build the pencil of orbit (M,N) with the given offset.
    pub fn new(spec: &BilliardSpec, mx: u64, ny: u64, offset: PencilOffset) -> Result<Self> {
        if spec.kind != BilliardKind::Barrier {
            return Err(Error::Invalid("pencils are defined for the barrier billiard".into()));
        }
        if (mx, ny) == (0, 0) || gcd(mx, ny) != 1 {
            return Err(Error::Invalid(format!("({mx},{ny}) is not a primitive orbit")));
        }
        let (a, b) = (spec.a, spec.b);
        let length = (2.0 * mx as f64 * a).hypot(2.0 * ny as f64 * b);
        let w = 2.0 * a * b / length;
        let allowed: &[PencilOffset] = match (mx, ny) {
            (0, _) => &[PencilOffset::Whole],
            (_, 0) => &[PencilOffset::DirichletDirichlet, PencilOffset::DirichletNeumann],
            _ if mx % 2 == 1 => &[PencilOffset::Centered, PencilOffset::Shifted],
            _ if mx % 4 == 2 => &[PencilOffset::Symmetric],
            _ => &[PencilOffset::Adjacent],
        };
        if !allowed.contains(&offset) {
            return Err(Error::Invalid(format!(
                "offset {offset:?} is not available for orbit ({mx},{ny})"
            )));
        }
        let (width_class, parity_rule) = match offset {
            PencilOffset::Centered => (WidthClass::SingleW, ParityRule::MEven),
            PencilOffset::Shifted => (WidthClass::SingleW, ParityRule::MOdd),
            PencilOffset::Symmetric => (WidthClass::DoubleW, ParityRule::MOddOnly),
            // the crossing count is even here, so the accumulated phase is even
            PencilOffset::Adjacent => (WidthClass::DoubleW, ParityRule::MEven),
            _ => (WidthClass::SingleW, ParityRule::Any),
        };
        let crossing_count = if mx == 0 { 0 } else { crossing_count(mx, ny) };
        Ok(Self {
            mx,
            ny,
            a,
            b,
            length,
            w,
            width_class,
            offset,
            parity_rule,
            cos_theta: 2.0 * mx as f64 * a / length,
            sin_theta: 2.0 * ny as f64 * b / length,
            crossing_count,
        })
    }

    /// Every pencil of orbit (M,N).
    pub fn all_for(spec: &BilliardSpec, mx: u64, ny: u64) -> Result<Vec<Self>> {
        let offsets: &[PencilOffset] = match (mx, ny) {
            (0, _) => &[PencilOffset::Whole],
            (_, 0) => &[PencilOffset::DirichletDirichlet, PencilOffset::DirichletNeumann],
            _ if mx % 2 == 1 => &[PencilOffset::Centered, PencilOffset::Shifted],
            _ if mx % 4 == 2 => &[PencilOffset::Symmetric],
            _ => &[PencilOffset::Adjacent],
        };
        offsets
            .iter()
            .map(|&o| Self::new(spec, mx, ny, o))
            .collect()
    }

    /// Transverse width of the strip that carries the wave.
    pub fn w_eff(&self) -> f64 {
        match (self.mx, self.ny) {
            (0, _) => self.a,
            (_, 0) => 0.5 * self.b,
            _ => match self.width_class {
                WidthClass::SingleW => self.w,
                WidthClass::DoubleW => 2.0 * self.w,
            },
        }
    }

    /// η-range of the strip in the pencil frame.
    pub fn eta_range(&self) -> (f64, f64) {
        let w = self.w;
        match self.offset {
            PencilOffset::Centered => (-0.5 * w, 0.5 * w),
            PencilOffset::Shifted => (0.5 * w, 1.5 * w),
            PencilOffset::Symmetric => (-w, w),
            PencilOffset::Adjacent => (0.0, 2.0 * w),
            PencilOffset::Whole => (-self.a, 0.0),
            PencilOffset::DirichletDirichlet => (0.0, 0.5 * self.b),
            PencilOffset::DirichletNeumann => (0.5 * self.b, self.b),
        }
    }

    pub fn theta(&self) -> f64 {
        self.sin_theta.atan2(self.cos_theta)
    }

    pub fn to_pencil_frame(&self, x: f64, y: f64) -> (f64, f64) {
        (
            x * self.cos_theta + y * self.sin_theta,
            -x * self.sin_theta + y * self.cos_theta,
        )
    }

    pub fn from_pencil_frame(&self, xi: f64, eta: f64) -> (f64, f64) {
        (
            xi * self.cos_theta - eta * self.sin_theta,
            xi * self.sin_theta + eta * self.cos_theta,
        )
    }

    /// η of the singular vertex image (2aα, b/2 + bβ).
    pub fn singular_eta(&self, alpha: i64, beta: i64) -> f64 {
        self.w * (-2.0 * alpha as f64 * self.ny as f64 + beta as f64 * self.mx as f64
            + 0.5 * self.mx as f64)
    }

    /// Distance between consecutive singular vertices on one pencil boundary.
    pub fn vertex_spacing(&self) -> f64 {
        match (self.mx, self.ny) {
            (0, _) => 2.0 * self.b,
            (_, 0) => 2.0 * self.a,
            (m, n) => self.length / gcd(m, 2 * n) as f64,
        }
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.mx, self.ny)
    }
}

/// Number of Neumann-window crossings of the orbit through the origin during one period.
///
/// Interval end points hit exactly when M ≡ 0 mod 4 are resolved by shifting the
/// window by a fixed infinitesimal amount upwards.
pub fn crossing_count(mx: u64, ny: u64) -> u64 {
    assert!(mx >= 1, "crossing count needs M >= 1");
    (0..mx)
        .filter(|&j| {
            let r = (ny * j) % mx;
            let lower_ok = 4 * r > mx;
            let upper_ok = if mx % 4 == 0 { 4 * r <= 3 * mx } else { 4 * r < 3 * mx };
            lower_ok && upper_ok
        })
        .count() as u64
}

/// All primitive pencils with L_p <= l_max, sorted by length.
///
/// Coprime pairs are produced by a Stern–Brocot descent, whose mediants grow
/// in both components so every branch can be cut at the first overlong node.
pub fn enumerate_pencils(spec: &BilliardSpec, l_max: f64) -> Result<Vec<PeriodicOrbitPencil>> {
    if !(l_max > 0.0) {
        return Err(Error::Invalid("L_max must be positive".into()));
    }
    if spec.kind != BilliardKind::Barrier {
        return Err(Error::Invalid("pencils are enumerated for the barrier billiard".into()));
    }
    let len = |m: u64, n: u64| (2.0 * m as f64 * spec.a).hypot(2.0 * n as f64 * spec.b);
    let mut pairs = Vec::new();
    if len(1, 0) <= l_max {
        pairs.push((1, 0));
    }
    if len(0, 1) <= l_max {
        pairs.push((0, 1));
    }
    let mut stack = vec![((0u64, 1u64), (1u64, 0u64))];
    while let Some((l, r)) = stack.pop() {
        let med = (l.0 + r.0, l.1 + r.1);
        if len(med.0, med.1) > l_max {
            continue;
        }
        pairs.push(med);
        stack.push((l, med));
        stack.push((med, r));
    }
    let mut out = Vec::new();
    for (m, n) in pairs {
        out.extend(PeriodicOrbitPencil::all_for(spec, m, n)?);
    }
    out.sort_by(|p, q| {
        p.length
            .total_cmp(&q.length)
            .then(p.mx.cmp(&q.mx))
            .then((p.offset as u8).cmp(&(q.offset as u8)))
    });
    Ok(out)
}

/// Longest open channel at momentum k: L_max = δ k^{1/3}, δ = (A λ₀ γ/√π)^{2/3}.
pub fn max_channel_length(k: f64, spec: &BilliardSpec, lambda0: f64, gamma: f64) -> f64 {
    let delta = (spec.area * lambda0 * gamma / PI.sqrt()).powf(2.0 / 3.0);
    delta * k.cbrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn genus_examples() {
        let sq = AngleSpec::closed_polygon(&[(1, 2); 4]).unwrap();
        assert_eq!(genus(&sq).unwrap(), 1);
        let tri = AngleSpec::closed_polygon(&[(1, 8), (3, 8), (1, 2)]).unwrap();
        assert_eq!(genus(&tri).unwrap(), 2);
        let barrier = AngleSpec::new(&[(1, 2), (1, 2), (1, 2), (1, 2), (1, 2), (1, 2), (2, 1)]);
        assert_eq!(genus(&barrier.unwrap()).unwrap(), 2);
    }

    #[test]
    fn closed_polygon_rejects_bad_sum() {
        assert!(AngleSpec::closed_polygon(&[(1, 2), (1, 2), (1, 3)]).is_err());
        assert!(AngleSpec::new(&[(2, 4)]).is_err());
    }

    #[test]
    fn odd_genus_numerator_is_rejected() {
        let s = AngleSpec::new(&[(2, 3)]).unwrap();
        assert!(genus(&s).is_err());
    }

    #[test]
    fn normalizations() {
        let bar = BilliardSpec::standard_barrier();
        assert!((bar.a * bar.b - 4.0 * PI).abs() < 1e-12);
        assert!((bar.b / bar.a - barrier_aspect_ratio()).abs() < 1e-14);
        let tri = BilliardSpec::standard_triangle();
        assert!((tri.a * tri.b / 2.0 - 4.0 * PI).abs() < 1e-12);
        assert!((tri.b - tri.a * (PI / 8.0).tan()).abs() < 1e-14);
    }

    #[test]
    fn crossing_count_small_cases() {
        assert_eq!(crossing_count(1, 1), 0);
        assert_eq!(crossing_count(2, 1), 1);
        assert_eq!(crossing_count(3, 1), 2);
        assert_eq!(crossing_count(4, 1), 2);
    }

    #[test]
    fn channel_length_example() {
        let spec = BilliardSpec::standard_barrier();
        let delta = (4.0 * PI.sqrt()).powf(2.0 / 3.0);
        assert!((delta - 3.6905).abs() < 1e-3);
        let l = max_channel_length(100.0, &spec, 1.0, 1.0);
        assert!((l - delta * 100f64.cbrt()).abs() < 1e-12);
        assert!((l - 17.15).abs() < 0.05);
        let l8 = max_channel_length(800.0, &spec, 1.0, 1.0);
        assert!((l8 / l - 2.0).abs() < 1e-12);
    }
}
