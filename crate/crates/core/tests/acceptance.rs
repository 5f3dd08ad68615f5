//! Acceptance run: one PASS/FAIL line per criterion. A failing criterion is
//! reported, not panicked on. Set SUPERSCAR_STRETCH=1 to add the 2000-4000
//! width fit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;
use superscar::diffraction::{fresnel, halfplane_d, kirchhoff_an, kirchhoff_asymptote, wedge_d};
use superscar::geometry::{crossing_count, BilliardSpec, PencilOffset, PeriodicOrbitPencil, WidthClass};
use superscar::slits::{boundary_asymptote, boundary_value, fit_correction_coefficient, lambda_asymptote, solve_fredholm};
use superscar::special::gcd;
use superscar::spectral::{
    solve_triangle, BarrierSolver, BasisKind, EigenState, ExpansionBasis, SpectralWindow, TriangleSolver,
};
use superscar::stats::{
    bw_fit, fractal_fit, gamma_prediction, local_density, moments, overlap, overlap_coeffs, overlap_quadrature,
    overlap_series, poisson_levels, random_state_control, spacing_stats, synthetic_lorentzian, unfold, LocalDensity,
};
use superscar::superscar::{bezout, fold_barrier, fold_indices, fold_triangle_series, q_rational, triangle_energy, SuperscarWave};
use superscar::Result;

fn report(id: &str, name: &str, pass: bool, detail: &str) {
    println!("{} criterion {id} ({name}): {detail}", if pass { "PASS" } else { "FAIL" });
}

fn run(id: &str, name: &str, f: impl FnOnce() -> Result<(bool, String)>) {
    let t = Instant::now();
    match f() {
        Ok((pass, detail)) => report(id, name, pass, &format!("{detail} [{:.1} s]", t.elapsed().as_secs_f64())),
        Err(e) => report(id, name, false, &format!("error: {e}")),
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn kirchhoff() -> Result<(bool, String)> {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [100u64, 1000, 10_000] {
        let d = (kirchhoff_an(n)? - kirchhoff_asymptote(n as f64)).abs();
        ok &= d <= 2e-3;
        parts.push(format!("n={n}: |A_n - asym| = {d:.2e}"));
    }
    let secs = t.elapsed().as_secs_f64();
    ok &= secs < 1.0;
    Ok((ok, format!("{}; runtime {secs:.3} s", parts.join(", "))))
}

fn fredholm() -> Result<(bool, String)> {
    let t = Instant::now();
    let s = solve_fredholm(200.0, 1, 400)?;
    let lam = s.eigenvalues[0];
    let lam_a = lambda_asymptote(200.0, 1, 0.206);
    let psi = boundary_value(&s, 1)?;
    let psi_a = boundary_asymptote(200.0, 1);
    let kappas: Vec<f64> = (0..=8).map(|i| 200.0 + 100.0 * i as f64).collect();
    let c = fit_correction_coefficient(&kappas, 1, 400)?;
    let secs = t.elapsed().as_secs_f64();
    let ok = (lam - lam_a).abs() <= 1e-3
        && (psi.abs() - psi_a).abs() <= 0.1 * psi_a
        && within(c, 0.206, 0.02)
        && secs < 30.0;
    Ok((
        ok,
        format!(
            "Λ_1 = {lam:.6} vs {lam_a:.6}; Ψ_1(1) = {psi:.5} vs {psi_a:.5}; fitted c = {c:.4} (0.206 ± 0.02); runtime {secs:.1} s"
        ),
    ))
}

fn triangle() -> Result<(bool, String)> {
    let spec = BilliardSpec::standard_triangle();
    let states = solve_triangle(&spec, &SpectralWindow::new(380.0, 440.0)?, 1e-10)?;
    let f = fold_triangle_series(&spec, 50, 1, &states[0].basis)?;
    let mut best = (0.0, 0.0);
    for s in &states {
        let c2 = overlap_coeffs(s, &s.basis, &f)?;
        if c2 > best.1 {
            best = (s.energy, c2);
        }
    }
    let near = states.iter().map(|s| s.energy).min_by(|a, b| (a - 407.4).abs().total_cmp(&(b - 407.4).abs()));
    let e1 = near.unwrap_or(f64::NAN);
    let solver = TriangleSolver::new(&spec, 1018.0)?;
    let hi = solver.levels(1014.0, 1018.0, 1e-10)?;
    let e2 = hi
        .iter()
        .map(|l| l.0)
        .min_by(|a, b| (a - 1015.9).abs().total_cmp(&(b - 1015.9).abs()))
        .unwrap_or(f64::NAN);
    let ok = within(e1, 407.4, 0.1) && within(e2, 1015.9, 0.2) && best.0 == e1;
    Ok((
        ok,
        format!(
            "{} levels in [380,440], nearest 407.4 is {e1:.4}; nearest 1015.9 is {e2:.4}; max (50,1) overlap {:.3} at {:.4}",
            states.len(),
            best.1,
            best.0
        ),
    ))
}

/// Wave (m,1) on the first pencil of (M,N) admitting m; M ≡ 2 mod 4 counts
/// m along the half orbit.
fn pencil_with(spec: &BilliardSpec, mx: u64, ny: u64, m: i64) -> Result<SuperscarWave> {
    let mut last = None;
    for p in PeriodicOrbitPencil::all_for(spec, mx, ny)? {
        let w = if mx % 4 == 2 {
            SuperscarWave::with_half_index(&p, m, 1)
        } else {
            SuperscarWave::new(&p, m, 1)
        };
        match w {
            Ok(w) => return Ok(w),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("every orbit has a pencil"))
}

fn energies() -> Result<(bool, String)> {
    let t = Instant::now();
    let tri = BilliardSpec::standard_triangle();
    let bar = BilliardSpec::standard_barrier();
    let mut got = vec![
        ("E_50,1", triangle_energy(&tri, 50, 1), 407.6),
        ("E_79,1", triangle_energy(&tri, 79, 1), 1016.12),
    ];
    for (label, mx, ny, m, target) in [
        ("(0-1)_152", 0u64, 1u64, 152i64, 10088.56),
        ("(1-1)_348", 1, 1, 348, 10099.82),
        ("(2-1)_227", 2, 1, 227, 10017.67),
        ("(3-1)_589", 3, 1, 589, 10019.80),
        ("(3-2)_794", 3, 2, 794, 10157.06),
    ] {
        got.push((label, pencil_with(&bar, mx, ny, m)?.energy, target));
    }
    let secs = t.elapsed().as_secs_f64();
    let worst = got.iter().map(|g| (g.1 - g.2).abs() / g.2).fold(0.0, f64::max);
    let detail: Vec<String> = got.iter().map(|g| format!("{} = {:.2}", g.0, g.1)).collect();
    Ok((
        worst <= 5e-4 && secs < 1.0,
        format!("{}; worst relative error {worst:.1e}", detail.join(", ")),
    ))
}

fn identity() -> Result<(bool, String)> {
    let spec = BilliardSpec::standard_barrier();
    let (a, b) = (spec.a, spec.b);
    let orbits = [(1u64, 1u64), (1, 2), (2, 1), (3, 1), (3, 2), (4, 1), (4, 3), (5, 2), (5, 3), (6, 1)];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (mx, ny) = orbits[rng.random_range(0..orbits.len())];
        let p = PeriodicOrbitPencil::all_for(&spec, mx, ny)?.remove(0);
        let bez = if mx % 2 == 1 {
            bezout(mx as i64, 2 * ny as i64)?
        } else {
            bezout((mx / 2) as i64, ny as i64)?
        };
        let qr = q_rational(a, b, mx, ny, bez);
        let q: i64 = rng.random_range(-60..=60);
        let mp: i64 = rng.random_range(1..=600);
        let (k, pp) = fold_indices(mx, ny, bez, q, mp);
        // even M: longitudinal number 2m′ over the strip width W = 2w
        let (long, big_w) = if mx % 2 == 1 {
            (mp as f64, p.w)
        } else {
            (2.0 * mp as f64, 2.0 * p.w)
        };
        let lhs = (long / p.length).powi(2) + ((q as f64 - mp as f64 * qr) / big_w).powi(2);
        let rhs = (pp as f64 / (2.0 * a)).powi(2) + (k as f64 / b).powi(2);
        worst = worst.max((lhs - rhs).abs() / rhs);
    }
    Ok((worst <= 1e-12, format!("1000 tuples over 10 pencils, worst relative error {worst:.2e}")))
}

fn solve_barrier_window(lo: f64, hi: f64) -> Result<Vec<EigenState>> {
    let spec = BilliardSpec::standard_barrier();
    let solver = BarrierSolver::new(&spec, hi)?;
    let basis = ExpansionBasis::covering(BasisKind::Even, spec.a, spec.b, hi, 2.0);
    solver.solve(lo, hi, 1e-10, &basis)
}

/// Γ√k/n² of the (1-1) pencil for n = 1, 2 over the given states.
fn widths(states: &[EigenState], lo: f64, hi: f64) -> Result<Vec<(u32, f64, f64)>> {
    let spec = BilliardSpec::standard_barrier();
    let pencil = PeriodicOrbitPencil::new(&spec, 1, 1, PencilOffset::Centered)?;
    let window = SpectralWindow::new(lo, hi)?;
    let centre = 0.5 * (lo + hi);
    let k = centre.sqrt();
    let mut out = Vec::new();
    for n in [1u32, 2] {
        let nn = (n * n) as f64;
        let series = overlap_series(&pencil, n, &window, states)?;
        let bin = 0.25 * 3.52 * nn / k;
        let hist = local_density(&series, centre, 0.5 * (hi - lo), bin)?;
        let fit = bw_fit(&hist)?;
        out.push((n, fit.gamma * k.sqrt() / nn, gamma_prediction(&pencil, n, k) * k.sqrt() / nn));
    }
    Ok(out)
}

fn breit_wigner(states: &[EigenState]) -> Result<(bool, String)> {
    let w = widths(states, 800.0, 1600.0)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, g, formula) in &w {
        let dev = (g - 3.52).abs() / 3.52;
        ok &= dev <= 0.3;
        parts.push(format!(
            "n={n}: Γ√k/n² = {g:.3} vs 3.52 ({:.0}%), closed-form Γ√k/n² = {formula:.3}",
            100.0 * dev
        ));
    }
    let samples = synthetic_lorentzian(0.0, 1.0, 20_000, 7);
    let fit = bw_fit(&LocalDensity::from_samples(&samples, 20.0, 0.2)?)?;
    let syn = (fit.gamma - 1.0).abs();
    ok &= syn <= 0.05;
    parts.push(format!("synthetic Γ = 1 fitted as {:.4}", fit.gamma));
    Ok((ok, parts.join("; ")))
}

fn stretch_widths() {
    if std::env::var_os("SUPERSCAR_STRETCH").is_none() {
        println!("INFO criterion 6 stretch window 2000-4000 skipped (set SUPERSCAR_STRETCH=1)");
        return;
    }
    let t = Instant::now();
    match solve_barrier_window(2000.0, 4000.0).and_then(|s| widths(&s, 2000.0, 4000.0)) {
        Ok(w) => {
            for (n, g, _) in w {
                let dev = (g - 3.52).abs() / 3.52;
                println!(
                    "INFO criterion 6 stretch n={n}: Γ√k/n² = {g:.3} vs 3.52 ({:.0}%, {}) [{:.1} s]",
                    100.0 * dev,
                    if dev <= 0.3 { "within 30%" } else { "outside 30%" },
                    t.elapsed().as_secs_f64()
                );
            }
        }
        Err(e) => println!("INFO criterion 6 stretch failed: {e}"),
    }
}

struct Stream {
    levels: Vec<f64>,
    moments: Vec<superscar::stats::MomentEntry>,
}

fn stream(hi: f64) -> Result<Stream> {
    let spec = BilliardSpec::standard_barrier();
    let solver = BarrierSolver::new(&spec, hi)?;
    let basis = ExpansionBasis::covering(BasisKind::Even, spec.a, spec.b, hi, 2.0);
    let mut out = Stream {
        levels: Vec::new(),
        moments: Vec::new(),
    };
    solver.for_each_state(0.5, hi, 1e-10, &basis, |s| {
        out.levels.push(s.energy);
        out.moments.push(moments(&s, &[2.0])?);
        Ok(())
    })?;
    Ok(out)
}

fn fractality(s: &Stream) -> Result<(bool, String)> {
    let fit = fractal_fit(&s.moments, 2.0)?;
    let ks: Vec<f64> = (0..400).map(|i| 10.0 * 1.01f64.powi(i)).collect();
    let control = fractal_fit(&random_state_control(&ks, 20.0, &[2.0], 11), 2.0)?;
    let ok = within(fit.dimension, 0.5, 0.15) && within(control.dimension, 1.0, 0.05);
    Ok((
        ok,
        format!(
            "D_2 = {:.3} ± {:.3} from {} states, R_2 ≈ {:.2}·k^{:.3}; random control D_2 = {:.3}",
            fit.dimension,
            fit.std_error,
            s.moments.len(),
            fit.prefactor,
            fit.dimension,
            control.dimension
        ),
    ))
}

fn compressibility(s: &Stream) -> Result<(bool, String)> {
    let spec = BilliardSpec::standard_barrier();
    let st = spacing_stats(&unfold(&spec, &s.levels))?;
    let pois = spacing_stats(&poisson_levels(20_000, 5))?;
    let ok = s.levels.len() >= 2000 && within(st.chi, 0.5, 0.15) && within(pois.chi, 1.0, 0.1);
    Ok((
        ok,
        format!(
            "{} levels: χ = {:.3} ± {:.3}; Poisson control χ = {:.3}",
            s.levels.len(),
            st.chi,
            st.chi_std_error,
            pois.chi
        ),
    ))
}

fn invariants(states: &[EigenState]) -> Result<(bool, String)> {
    let spec = BilliardSpec::standard_barrier();
    let mut geometry_ok = true;
    for m in 1..=50u64 {
        for n in 1..=50u64 {
            if gcd(m, n) != 1 {
                continue;
            }
            geometry_ok &= (crossing_count(m, n) % 2 == 1) == (m % 4 == 2);
            for p in PeriodicOrbitPencil::all_for(&spec, m, n)? {
                let double = p.width_class == WidthClass::DoubleW;
                geometry_ok &= double == (m % 2 == 0);
                geometry_ok &= (p.w * p.length - 2.0 * spec.a * spec.b).abs() < 1e-12;
            }
        }
    }
    let mut optics = 0.0f64;
    for i in 1..60 {
        let tf = 0.1 * i as f64;
        for j in 1..30 {
            let ti = 0.1 * j as f64;
            let (w, h) = (wedge_d(tf, ti, 2.0), halfplane_d(tf, ti));
            if h.is_finite() {
                optics = optics.max((w.value - h.value).abs() / (1.0 + h.value.abs()));
            }
        }
        let u = -3.0 + 0.1 * i as f64;
        let fd = (fresnel(u + 1e-5) - fresnel(u - 1e-5)) / 2e-5;
        let exact = -num_complex::Complex64::from_polar(1.0, -PI / 4.0 + u * u) / PI.sqrt();
        optics = optics.max((fd - exact).norm());
    }
    let a = solve_fredholm(1000.0, 10, 400)?;
    let b = solve_fredholm(1000.0, 10, 800)?;
    let nystrom = a
        .eigenvalues
        .iter()
        .zip(&b.eigenvalues)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let pencil = PeriodicOrbitPencil::new(&spec, 1, 1, PencilOffset::Centered)?;
    let fold = fold_barrier(&SuperscarWave::new(&pencil, 98, 1)?, &states[0].basis)?;
    let mut near: Vec<&EigenState> = states.iter().collect();
    near.sort_by(|x, y| (x.energy - 802.66).abs().total_cmp(&(y.energy - 802.66).abs()));
    let mut parseval = 0.0f64;
    for s in near.iter().take(10) {
        parseval = parseval.max((overlap(s, &fold)? - overlap_quadrature(&spec, s, &fold)?).abs());
    }
    let ok = geometry_ok && optics < 1e-7 && nystrom < 1e-8 && parseval <= 1e-3;
    Ok((
        ok,
        format!(
            "parity/width rules over coprime (M,N) <= 50: {}; optics identities max error {optics:.1e}; \
             Nyström order doubling {nystrom:.1e}; Parseval max difference {parseval:.1e} over 10 pairs",
            if geometry_ok { "ok" } else { "violated" }
        ),
    ))
}

fn main() {
    run("1", "Kirchhoff asymptote", kirchhoff);
    run("2", "Fredholm asymptotics", fredholm);
    run("3", "triangle superscar", triangle);
    run("4", "superscar energies", energies);
    run("5", "fold energy identity", identity);
    let desk = solve_barrier_window(800.0, 1600.0);
    match &desk {
        Ok(states) => run("6", "Breit-Wigner width at desk scale", || breit_wigner(states)),
        Err(e) => report("6", "Breit-Wigner width at desk scale", false, &format!("error: {e}")),
    }
    stretch_widths();
    match stream(2500.0) {
        Ok(s) => {
            run("7", "fractality", || fractality(&s));
            run("8", "compressibility", || compressibility(&s));
        }
        Err(e) => {
            report("7", "fractality", false, &format!("error: {e}"));
            report("8", "compressibility", false, &format!("error: {e}"));
        }
    }
    match &desk {
        Ok(states) => run("9", "invariant suites", || invariants(states)),
        Err(e) => report("9", "invariant suites", false, &format!("error: {e}")),
    }
}
