//! Command-line front end.
//!
//! Every command writes its tables into `--out` together with
//! `<command>.manifest.json`. Usage errors exit with 2, numerical failures
//! with 1.

use crate::diffraction::{
    grating_orders, kirchhoff_an, kirchhoff_asymptote, large_angle_r, leakage, small_angle_rn, specular_r0,
    transmission_t, u_of, ScatterConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{enumerate_pencils, BilliardConfig, BilliardKind, BilliardSpec, PencilOffset, PeriodicOrbitPencil};
use crate::slits::{boundary_asymptote, boundary_value, fit_correction_coefficient, lambda_asymptote, solve_fredholm};
use crate::spectral::store::{cache_dir, StateReader, StateWriter};
use crate::spectral::{
    BarrierSolver, BasisKind, EigenState, ExpansionBasis, Parity, Solution, SpectralWindow, TriangleSolver,
};
use crate::stats::{
    bw_fit, fractal_fit, gamma_prediction, local_density, moments, overlap, overlap_coeffs, overlap_series,
    poisson_levels, random_state_control, spacing_stats, synthetic_lorentzian, unfold, LocalDensity, MomentEntry,
    OverlapEntry,
};
use crate::superscar::{admissible_n, fold_barrier, fold_triangle_series, triangle_energy, SuperscarWave};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// λ₀ of the closed-channel criterion used by the commands.
const LAMBDA0: f64 = 1.0;

#[derive(Parser, Debug)]
#[command(name = "superscar", version, about = "Superscar quasi-modes of pseudo-integrable billiards")]
pub struct Cli {
    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// output directory
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// billiard JSON, e.g. {"kind":"barrier","area":12.566,"aspect_ratio":1.799}
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// standard billiard when no config is given
    #[arg(long, global = true, value_enum)]
    pub billiard: Option<BilliardChoice>,
    /// seed of the synthetic controls
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BilliardChoice {
    Barrier,
    Triangle,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OffsetChoice {
    Centered,
    Shifted,
    Symmetric,
    Adjacent,
}

impl From<OffsetChoice> for PencilOffset {
    fn from(o: OffsetChoice) -> Self {
        match o {
            OffsetChoice::Centered => PencilOffset::Centered,
            OffsetChoice::Shifted => PencilOffset::Shifted,
            OffsetChoice::Symmetric => PencilOffset::Symmetric,
            OffsetChoice::Adjacent => PencilOffset::Adjacent,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Named {
    Horizontal,
    Dd,
    Dn,
}

/// Orbit selector: `M,N`, `horizontal`, `dd`, `dn` or `triangle-simple`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orbit {
    Pencil(u64, u64),
    Named(Named),
    TriangleSimple,
}

fn parse_orbit(s: &str) -> std::result::Result<Orbit, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "triangle-simple" | "triangle" => return Ok(Orbit::TriangleSimple),
        "horizontal" | "0,1" => return Ok(Orbit::Named(Named::Horizontal)),
        "dd" => return Ok(Orbit::Named(Named::Dd)),
        "dn" => return Ok(Orbit::Named(Named::Dn)),
        _ => {}
    }
    let (m, n) = s
        .split_once(',')
        .ok_or_else(|| format!("orbit '{s}' is not M,N or a named orbit"))?;
    let p = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("bad integer '{t}' in orbit"));
    Ok(Orbit::Pencil(p(m)?, p(n)?))
}

fn parse_window(s: &str) -> std::result::Result<SpectralWindow, String> {
    SpectralWindow::parse(s).map_err(|e| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sweep {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

fn parse_sweep(s: &str) -> std::result::Result<Sweep, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("sweep '{s}' is not lo:hi:count"));
    }
    let f = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number '{t}'"));
    let (lo, hi) = (f(parts[0])?, f(parts[1])?);
    let count = parts[2].trim().parse::<usize>().map_err(|_| format!("bad count '{}'", parts[2]))?;
    if !(lo > 0.0 && hi >= lo && count >= 1) {
        return Err(format!("sweep '{s}' needs 0 < lo <= hi and count >= 1"));
    }
    Ok(Sweep { lo, hi, count })
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Eigenvalues and eigenstates in an energy window
    Solve {
        #[arg(long, value_parser = parse_window)]
        window: SpectralWindow,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// basis radius as a multiple of √E_max
        #[arg(long, default_value_t = 2.0)]
        basis_size: f64,
        /// state file (default: $SUPERSCAR_CACHE/states.bin or <out>/states.bin)
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Primitive periodic-orbit pencils of the barrier billiard
    Pencils {
        #[arg(long = "Lmax", alias = "lmax")]
        l_max: f64,
    },
    /// Superscar wave and its fold onto the billiard
    #[command(alias = "fold")]
    Superscar {
        #[arg(long, value_parser = parse_orbit)]
        orbit: Option<Orbit>,
        #[arg(long, value_enum)]
        named: Option<Named>,
        #[arg(long, value_enum)]
        offset: Option<OffsetChoice>,
        #[arg(long)]
        m: i64,
        #[arg(long, default_value_t = 1)]
        n: u32,
        /// count m along the half orbit of a double-width pencil
        #[arg(long)]
        half_index: bool,
        #[arg(long, default_value_t = 2.0)]
        basis_size: f64,
    },
    /// Overlaps of stored eigenstates with superscar waves
    Overlap {
        #[arg(long)]
        states: Option<PathBuf>,
        #[arg(long, value_parser = parse_orbit)]
        orbit: Orbit,
        #[arg(long, value_enum)]
        offset: Option<OffsetChoice>,
        #[arg(long, default_value_t = 1)]
        n: u32,
        /// fixed longitudinal number (default: nearest per state)
        #[arg(long)]
        m: Option<i64>,
        #[arg(long, value_parser = parse_window)]
        window: Option<SpectralWindow>,
    },
    /// Breit-Wigner fit of the local density of superscar weight
    Bwfit {
        #[arg(long)]
        states: Option<PathBuf>,
        #[arg(long, value_parser = parse_orbit, default_value = "1,1")]
        orbit: Orbit,
        #[arg(long, value_enum)]
        offset: Option<OffsetChoice>,
        #[arg(long, default_value_t = 1)]
        n: u32,
        /// centre of the averaging window (default: middle of the states)
        #[arg(long)]
        centre: Option<f64>,
        /// half width e of the averaging window (default: centre/20)
        #[arg(long)]
        half_width: Option<f64>,
        /// histogram bin (default: a quarter of the predicted width)
        #[arg(long)]
        bin: Option<f64>,
        /// fit Lorentzian samples of this width instead of states
        #[arg(long)]
        synthetic: Option<f64>,
        #[arg(long, default_value_t = 20000)]
        samples: usize,
    },
    /// Closed-form diffraction amplitudes
    Diffract {
        #[command(subcommand)]
        what: Diffract,
    },
    /// Eigenvalues of the periodic-slit Fredholm operator
    Slits {
        #[arg(long, value_delimiter = ',')]
        kappa: Vec<f64>,
        #[arg(long, default_value_t = 4)]
        modes: usize,
        /// Nyström nodes (default: max(400, 10√κ))
        #[arg(long)]
        order: Option<usize>,
        /// κ sweep lo:hi:count for fitting the κ^{-3/2} coefficient of mode 1
        #[arg(long, value_parser = parse_sweep)]
        sweep: Option<Sweep>,
        /// eigenfunction samples per mode on [-1, 1] (0: none)
        #[arg(long, default_value_t = 0)]
        grid: usize,
    },
    /// Participation ratios and fractal dimensions
    Fractal {
        #[arg(long)]
        states: Option<PathBuf>,
        /// Gaussian random states instead of stored ones
        #[arg(long)]
        random: bool,
        #[arg(long, default_value_t = 10.0)]
        k_min: f64,
        #[arg(long, default_value_t = 100.0)]
        k_max: f64,
        #[arg(long, default_value_t = 400)]
        count: usize,
        /// components per unit k of the random states
        #[arg(long, default_value_t = 20.0)]
        density: f64,
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        q: Vec<f64>,
    },
    /// Spacing distribution, number variance and compressibility
    Spacing {
        #[arg(long)]
        states: Option<PathBuf>,
        /// CSV with an `energy` column
        #[arg(long)]
        levels: Option<PathBuf>,
        /// unit-density Poisson control with this many levels
        #[arg(long)]
        poisson: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
pub enum Diffract {
    /// Kirchhoff multiple-diffraction sums A_n
    An {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u64>,
    },
    /// Specular amplitude r_0 and leakage of a periodic array of half-planes
    R0 {
        #[command(flatten)]
        cfg: ScatterArgs,
    },
    /// Small-angle reflection intensities |r_n|²
    Rn {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u64>,
    },
    /// Large-angle reflection and transmission intensities
    Ru {
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        u: Vec<f64>,
    },
    /// Reflected orders of the grating with their angles and scaled offsets
    Grating {
        #[command(flatten)]
        cfg: ScatterArgs,
    },
}

#[derive(clap::Args, Debug, Clone, Copy)]
pub struct ScatterArgs {
    #[arg(long)]
    pub k: f64,
    #[arg(long)]
    pub d: f64,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub phi: f64,
}

impl ScatterArgs {
    fn config(&self) -> Result<ScatterConfig> {
        ScatterConfig::new(self.k, self.d, self.alpha, self.phi)
    }
}

/// Why a run stopped.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numeric(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numeric(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, &argv) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: &Cli, argv: &[String]) -> Outcome<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    fs::create_dir_all(&cli.out).map_err(Error::from)?;
    let mut run = Run::new(cli, argv)?;
    match &cli.command {
        Command::Solve {
            window,
            tol,
            basis_size,
            store,
        } => solve(cli, &mut run, window, *tol, *basis_size, store.as_deref())?,
        Command::Pencils { l_max } => pencils(cli, &mut run, *l_max)?,
        Command::Superscar {
            orbit,
            named,
            offset,
            m,
            n,
            half_index,
            basis_size,
        } => {
            let orbit = match (orbit, named) {
                (Some(o), None) => *o,
                (None, Some(n)) => Orbit::Named(*n),
                (Some(_), Some(_)) => return Err(Failure::Usage("give either --orbit or --named".into())),
                (None, None) => return Err(Failure::Usage("--orbit or --named is required".into())),
            };
            superscar(cli, &mut run, orbit, *offset, *m, *n, *half_index, *basis_size)?
        }
        Command::Overlap {
            states,
            orbit,
            offset,
            n,
            m,
            window,
        } => overlap_cmd(cli, &mut run, states.as_deref(), *orbit, *offset, *n, *m, window.as_ref())?,
        Command::Bwfit {
            states,
            orbit,
            offset,
            n,
            centre,
            half_width,
            bin,
            synthetic,
            samples,
        } => match synthetic {
            Some(g) => bwfit_synthetic(cli, &mut run, *g, *samples)?,
            None => bwfit(cli, &mut run, states.as_deref(), *orbit, *offset, *n, *centre, *half_width, *bin)?,
        },
        Command::Diffract { what } => diffract(&mut run, what)?,
        Command::Slits {
            kappa,
            modes,
            order,
            sweep,
            grid,
        } => slits(&mut run, kappa, *modes, *order, sweep.as_ref(), *grid)?,
        Command::Fractal {
            states,
            random,
            k_min,
            k_max,
            count,
            density,
            q,
        } => {
            if *random {
                fractal_random(cli, &mut run, *k_min, *k_max, *count, *density, q)?
            } else {
                fractal(cli, &mut run, states.as_deref(), q)?
            }
        }
        Command::Spacing {
            states,
            levels,
            poisson,
        } => spacing(cli, &mut run, states.as_deref(), levels.as_deref(), *poisson)?,
    }
    run.finish(command_name(&cli.command))?;
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Solve { .. } => "solve",
        Command::Pencils { .. } => "pencils",
        Command::Superscar { .. } => "superscar",
        Command::Overlap { .. } => "overlap",
        Command::Bwfit { .. } => "bwfit",
        Command::Diffract { .. } => "diffract",
        Command::Slits { .. } => "slits",
        Command::Fractal { .. } => "fractal",
        Command::Spacing { .. } => "spacing",
    }
}

/// Output bookkeeping of one command.
struct Run {
    out: PathBuf,
    started: Instant,
    inputs: Sha256,
    arguments: Vec<String>,
    outputs: Vec<String>,
}

impl Run {
    fn new(cli: &Cli, argv: &[String]) -> Outcome<Self> {
        let mut inputs = Sha256::new();
        // output location and thread count do not change the results
        let mut skip = false;
        for a in argv {
            if skip {
                skip = false;
                continue;
            }
            if a == "--out" || a == "--threads" {
                skip = true;
                continue;
            }
            if a.starts_with("--out=") || a.starts_with("--threads=") {
                continue;
            }
            inputs.update(a.as_bytes());
            inputs.update([0u8]);
        }
        let mut run = Self {
            out: cli.out.clone(),
            started: Instant::now(),
            inputs,
            arguments: argv.to_vec(),
            outputs: Vec::new(),
        };
        if let Some(p) = &cli.config {
            run.input_file(p)?;
        }
        Ok(run)
    }

    fn input_file(&mut self, p: &Path) -> Result<()> {
        let bytes = fs::read(p)?;
        self.inputs.update(&bytes);
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        fs::write(self.path(name), s)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn external(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    fn finish(self, command: &str) -> Result<()> {
        let hash: String = self.inputs.finalize().iter().map(|b| format!("{b:02x}")).collect();
        let manifest = json!({
            "command": command,
            "arguments": self.arguments,
            "inputs_sha256": hash,
            "versions": {
                "superscar": env!("CARGO_PKG_VERSION"),
            },
            "threads": rayon::current_num_threads(),
            "wall_time_s": self.started.elapsed().as_secs_f64(),
            "outputs": self.outputs,
        });
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        fs::write(self.out.join(format!("{command}.manifest.json")), s)?;
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn enum_str<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn spec_for(cli: &Cli, default: BilliardKind) -> Outcome<BilliardSpec> {
    if let Some(p) = &cli.config {
        let text = fs::read_to_string(p).map_err(Error::from)?;
        let cfg: BilliardConfig =
            serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", p.display())))?;
        return Ok(BilliardSpec::from_config(&cfg)?);
    }
    let kind = match cli.billiard {
        Some(BilliardChoice::Barrier) => BilliardKind::Barrier,
        Some(BilliardChoice::Triangle) => BilliardKind::TrianglePi8,
        None => default,
    };
    Ok(match kind {
        BilliardKind::TrianglePi8 => BilliardSpec::standard_triangle(),
        _ => BilliardSpec::standard_barrier(),
    })
}

fn store_path(cli: &Cli, explicit: Option<&Path>) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => cache_dir().unwrap_or_else(|| cli.out.clone()).join("states.bin"),
    }
}

/// States of a file together with the billiard they belong to.
fn load_states(cli: &Cli, run: &mut Run, explicit: Option<&Path>) -> Outcome<(BilliardSpec, Vec<EigenState>)> {
    let path = store_path(cli, explicit);
    let reader = StateReader::open(&path)?;
    let default = if reader.header.basis.kind == BasisKind::BoundingRectangle {
        BilliardKind::TrianglePi8
    } else {
        BilliardKind::Barrier
    };
    let spec = spec_for(cli, default)?;
    reader.check_spec(&spec)?;
    run.input_file(&path)?;
    let states = reader.collect::<Result<Vec<_>>>()?;
    Ok((spec, states))
}

fn pencil_for(spec: &BilliardSpec, orbit: Orbit, offset: Option<OffsetChoice>) -> Outcome<PeriodicOrbitPencil> {
    let (mx, ny, fixed) = match orbit {
        Orbit::Pencil(m, n) => (m, n, None),
        Orbit::Named(Named::Horizontal) => (0, 1, Some(PencilOffset::Whole)),
        Orbit::Named(Named::Dd) => (1, 0, Some(PencilOffset::DirichletDirichlet)),
        Orbit::Named(Named::Dn) => (1, 0, Some(PencilOffset::DirichletNeumann)),
        Orbit::TriangleSimple => {
            return Err(Failure::Usage("triangle-simple is not a barrier pencil".into()));
        }
    };
    if spec.kind != BilliardKind::Barrier {
        return Err(Failure::Usage("barrier orbits need the barrier billiard".into()));
    }
    let offset = match (fixed, offset) {
        (Some(o), None) => o,
        (Some(_), Some(_)) => return Err(Failure::Usage("named orbits take no --offset".into())),
        (None, Some(o)) => o.into(),
        (None, None) => {
            let all = PeriodicOrbitPencil::all_for(spec, mx, ny).map_err(|e| Failure::Usage(e.to_string()))?;
            all[0].offset
        }
    };
    PeriodicOrbitPencil::new(spec, mx, ny, offset).map_err(|e| Failure::Usage(e.to_string()))
}

fn solve(
    cli: &Cli,
    run: &mut Run,
    window: &SpectralWindow,
    tol: f64,
    basis_size: f64,
    store: Option<&Path>,
) -> Outcome<()> {
    if !(tol > 0.0 && basis_size >= 1.0) {
        return Err(Failure::Usage("--tol must be positive and --basis-size at least 1".into()));
    }
    let spec = spec_for(cli, BilliardKind::Barrier)?;
    let path = store_path(cli, store);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::from)?;
    }
    let (lo, hi) = (window.e_lo, window.e_hi);
    let mut rows = Vec::new();
    match spec.kind {
        BilliardKind::Barrier => {
            let solver = BarrierSolver::new(&spec, hi)?;
            let basis = ExpansionBasis::covering(BasisKind::Even, spec.a, spec.b, hi, basis_size);
            let mut writer = StateWriter::create(&path, &spec, &basis, true)?;
            solver.for_each_state(lo, hi, tol, &basis, |s| {
                rows.push((s.energy, s.norm_defect, s.cluster));
                writer.write(&s)
            })?;
            writer.finish()?;
        }
        BilliardKind::TrianglePi8 => {
            let solver = TriangleSolver::new(&spec, hi)?;
            let basis = ExpansionBasis::covering(BasisKind::BoundingRectangle, spec.a, spec.b, hi, basis_size);
            let levels = solver.levels(lo, hi, tol)?;
            let mut states = levels
                .par_iter()
                .map(|&(e, _)| solver.state(e, &basis))
                .collect::<Result<Vec<_>>>()?;
            crate::spectral::flag_clusters(&mut states, 1e-3);
            let mut writer = StateWriter::create(&path, &spec, &basis, false)?;
            for s in &states {
                rows.push((s.energy, s.norm_defect, s.cluster));
                writer.write(s)?;
            }
            writer.finish()?;
        }
        BilliardKind::Rectangle => {
            return Err(Failure::Usage("solve handles the barrier and the triangle".into()));
        }
    }
    run.external(&path);
    let weyl = spec.weyl_count(hi) - spec.weyl_count(lo);
    run.csv(
        "levels.csv",
        &["id", "energy", "norm_defect", "cluster"],
        rows.iter()
            .enumerate()
            .map(|(i, r)| vec![i.to_string(), num(r.0), num(r.1), (r.2 as u8).to_string()]),
    )?;
    run.json(
        "solve.json",
        &json!({
            "billiard": spec.kind,
            "window": window,
            "levels": rows.len(),
            "weyl_estimate": weyl,
            "store": path.display().to_string(),
        }),
    )?;
    println!("{} levels in [{lo}, {hi}] (Weyl estimate {weyl:.1})", rows.len());
    Ok(())
}

fn pencils(cli: &Cli, run: &mut Run, l_max: f64) -> Outcome<()> {
    let spec = spec_for(cli, BilliardKind::Barrier)?;
    let list = enumerate_pencils(&spec, l_max).map_err(|e| Failure::Usage(e.to_string()))?;
    run.csv(
        "pencils.csv",
        &[
            "M",
            "N",
            "offset",
            "L_p",
            "w",
            "w_eff",
            "width_class",
            "parity_rule",
            "crossing_count",
        ],
        list.iter().map(|p| {
            vec![
                p.mx.to_string(),
                p.ny.to_string(),
                enum_str(&p.offset),
                num(p.length),
                num(p.w),
                num(p.w_eff()),
                enum_str(&p.width_class),
                enum_str(&p.parity_rule),
                p.crossing_count.to_string(),
            ]
        }),
    )?;
    println!("{} pencils with L_p <= {l_max}", list.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn superscar(
    cli: &Cli,
    run: &mut Run,
    orbit: Orbit,
    offset: Option<OffsetChoice>,
    m: i64,
    n: u32,
    half_index: bool,
    basis_size: f64,
) -> Outcome<()> {
    if orbit == Orbit::TriangleSimple {
        if m < 1 || n < 1 {
            return Err(Failure::Usage("m and n must be positive".into()));
        }
        let spec = spec_for(cli, BilliardKind::TrianglePi8)?;
        if spec.kind != BilliardKind::TrianglePi8 {
            return Err(Failure::Usage("triangle-simple needs the triangle billiard".into()));
        }
        let e = triangle_energy(&spec, m as u32, n);
        let basis = ExpansionBasis::covering(BasisKind::BoundingRectangle, spec.a, spec.b, e, basis_size);
        let f = fold_triangle_series(&spec, m as u32, n, &basis)?;
        let norm2: f64 = f.iter().map(|c| c * c).sum();
        let state = EigenState {
            energy: e,
            parity: Parity::NotApplicable,
            basis,
            coeffs: f.clone(),
            odd_coeffs: None,
            norm_defect: 1.0 - norm2,
            cluster: false,
            solution: Solution::None,
        };
        export_fold(run, &spec, &state)?;
        run.csv(
            "fold_coefficients.csv",
            &["q", "k", "coefficient"],
            (1..=basis.q_max).flat_map(|q| {
                let f = &f;
                (1..=basis.k_max).map(move |k| vec![q.to_string(), k.to_string(), num(f[basis.index(q, k)])])
            }),
        )?;
        run.json(
            "superscar.json",
            &json!({"orbit": "triangle-simple", "m": m, "n": n, "energy": e, "k": e.sqrt(), "norm2": norm2}),
        )?;
        println!("triangle-simple m={m} n={n}: E = {e:.4}");
        return Ok(());
    }
    let spec = spec_for(cli, BilliardKind::Barrier)?;
    let pencil = pencil_for(&spec, orbit, offset)?;
    let wave = if half_index {
        SuperscarWave::with_half_index(&pencil, m, n)
    } else {
        SuperscarWave::new(&pencil, m, n)
    }
    .map_err(|e| Failure::Usage(e.to_string()))?;
    let basis = ExpansionBasis::covering(BasisKind::Even, spec.a, spec.b, wave.energy, basis_size);
    let fold = fold_barrier(&wave, &basis)?;
    let (state, imag) = fold.to_state()?;
    export_fold(run, &spec, &state)?;
    if fold.captured < 0.99 {
        eprintln!(
            "warning: truncation box holds {:.4} of the norm; raise --basis-size",
            fold.captured
        );
    }
    let fb = fold.basis;
    run.csv(
        "fold_coefficients.csv",
        &["p", "k", "re", "im"],
        fold.coeffs.iter().enumerate().filter(|(_, c)| c.norm() > 1e-14).map(|(i, c)| {
            vec![
                (i / fb.k_max + 1).to_string(),
                (i % fb.k_max + 1).to_string(),
                num(c.re),
                num(c.im),
            ]
        }),
    )?;
    if !fold.marginal.is_empty() {
        run.csv(
            "marginal.csv",
            &["m_prime", "norm"],
            fold.marginal.iter().map(|(mp, v)| vec![mp.to_string(), num(*v)]),
        )?;
    }
    let k = wave.k();
    let n_max = *admissible_n(&pencil, k, LAMBDA0).end();
    let (pp, pk, pv) = fold.peak();
    run.json(
        "superscar.json",
        &json!({
            "orbit": pencil.label(),
            "offset": pencil.offset,
            "m": wave.m,
            "n": wave.n,
            "energy": wave.energy,
            "k": k,
            "profile_case": wave.profile_case,
            "validity": wave.validity,
            "admissible_n_max": n_max,
            "q_rational": fold.q_rat,
            "bezout": fold.bezout,
            "captured": fold.captured,
            "peak": {"p": pp, "k": pk, "abs": pv},
            "imaginary_residue": imag,
        }),
    )?;
    println!(
        "{} {:?} m={} n={}: E = {:.4}, validity {:.3}",
        pencil.label(),
        pencil.offset,
        wave.m,
        wave.n,
        wave.energy,
        wave.validity
    );
    Ok(())
}

fn export_fold(run: &mut Run, spec: &BilliardSpec, state: &EigenState) -> Result<()> {
    let path = run.path("fold.bin");
    let mut w = StateWriter::create(&path, spec, &state.basis, state.odd_coeffs.is_some())?;
    w.write(state)?;
    w.finish()?;
    run.outputs.push("fold.bin".into());
    run.outputs.push("fold.csv".into());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn overlap_cmd(
    cli: &Cli,
    run: &mut Run,
    states: Option<&Path>,
    orbit: Orbit,
    offset: Option<OffsetChoice>,
    n: u32,
    m: Option<i64>,
    window: Option<&SpectralWindow>,
) -> Outcome<()> {
    if n == 0 || m.is_some_and(|m| m < 1) {
        return Err(Failure::Usage("m and n must be positive".into()));
    }
    let (spec, mut all) = load_states(cli, run, states)?;
    if let Some(w) = window {
        all.retain(|s| s.energy >= w.e_lo && s.energy <= w.e_hi);
    }
    if all.is_empty() {
        return Err(Error::Insufficient("no states to compare".into()).into());
    }
    let label;
    let entries: Vec<OverlapEntry> = if orbit == Orbit::TriangleSimple {
        if spec.kind != BilliardKind::TrianglePi8 {
            return Err(Failure::Usage("triangle-simple needs triangle states".into()));
        }
        label = "triangle-simple".to_string();
        let rest = PI * PI * (n as f64 / spec.b).powi(2);
        let pick = |e: f64| -> u32 {
            match m {
                Some(m) => m as u32,
                None => {
                    let m0 = (spec.a / PI * (e - rest).max(0.0).sqrt()).round().max(1.0) as u32;
                    (m0.saturating_sub(1).max(1)..=m0 + 1)
                        .min_by(|x, y| {
                            (triangle_energy(&spec, *x, n) - e)
                                .abs()
                                .total_cmp(&(triangle_energy(&spec, *y, n) - e).abs())
                        })
                        .unwrap_or(m0)
                }
            }
        };
        let ms: Vec<u32> = all.iter().map(|s| pick(s.energy)).collect();
        let mut wanted = ms.clone();
        wanted.sort_unstable();
        wanted.dedup();
        let basis = all[0].basis;
        let folds: BTreeMap<u32, Vec<f64>> = wanted
            .par_iter()
            .map(|&mm| Ok((mm, fold_triangle_series(&spec, mm, n, &basis)?)))
            .collect::<Result<_>>()?;
        all.par_iter()
            .zip(&ms)
            .map(|(s, &mm)| {
                Ok(OverlapEntry {
                    energy: s.energy,
                    m: mm as i64,
                    superscar_energy: triangle_energy(&spec, mm, n),
                    c2: overlap_coeffs(s, &s.basis, &folds[&mm])?,
                })
            })
            .collect::<Result<_>>()?
    } else {
        let pencil = pencil_for(&spec, orbit, offset)?;
        label = pencil.label();
        match m {
            Some(m) => {
                let wave = SuperscarWave::new(&pencil, m, n).map_err(|e| Failure::Usage(e.to_string()))?;
                let fold = fold_barrier(&wave, &all[0].basis)?;
                all.par_iter()
                    .map(|s| {
                        Ok(OverlapEntry {
                            energy: s.energy,
                            m,
                            superscar_energy: wave.energy,
                            c2: overlap(s, &fold)?,
                        })
                    })
                    .collect::<Result<_>>()?
            }
            None => {
                let lo = all.first().map(|s| s.energy).unwrap_or(0.0);
                let hi = all.last().map(|s| s.energy).unwrap_or(0.0);
                let w = SpectralWindow::new(lo, hi.max(lo * (1.0 + 1e-12)))?;
                overlap_series(&pencil, n, &w, &all)?.entries
            }
        }
    };
    write_overlaps(run, &entries)?;
    let peak = entries
        .iter()
        .max_by(|a, b| a.c2.total_cmp(&b.c2))
        .copied()
        .ok_or_else(|| Error::Insufficient("no overlaps".into()))?;
    run.json(
        "overlap.json",
        &json!({
            "orbit": label,
            "n": n,
            "m": m,
            "states": entries.len(),
            "peak_energy": peak.energy,
            "peak_m": peak.m,
            "peak_overlap": peak.c2,
        }),
    )?;
    println!(
        "peak overlap {:.4} at E = {:.4} (m = {}, superscar energy {:.4})",
        peak.c2, peak.energy, peak.m, peak.superscar_energy
    );
    Ok(())
}

fn write_overlaps(run: &mut Run, entries: &[OverlapEntry]) -> Result<()> {
    run.csv(
        "overlaps.csv",
        &["energy", "m", "superscar_energy", "c2"],
        entries
            .iter()
            .map(|e| vec![num(e.energy), e.m.to_string(), num(e.superscar_energy), num(e.c2)]),
    )
}

fn write_density(run: &mut Run, hist: &LocalDensity) -> Result<()> {
    run.csv(
        "local_density.csv",
        &["delta_e", "density"],
        hist.centres()
            .into_iter()
            .zip(hist.density())
            .map(|(c, d)| vec![num(c), num(d)]),
    )
}

fn bwfit_synthetic(cli: &Cli, run: &mut Run, gamma: f64, samples: usize) -> Outcome<()> {
    if !(gamma > 0.0) || samples == 0 {
        return Err(Failure::Usage("--synthetic needs a positive width and samples".into()));
    }
    let seed = cli.seed;
    let s = synthetic_lorentzian(0.0, gamma, samples, seed);
    let hist = LocalDensity::from_samples(&s, 20.0 * gamma, 0.2 * gamma)?;
    let fit = bw_fit(&hist)?;
    write_density(run, &hist)?;
    run.json(
        "bwfit.json",
        &json!({
            "synthetic_gamma": gamma,
            "samples": samples,
            "seed": seed,
            "fit": fit,
            "relative_error": (fit.gamma - gamma).abs() / gamma,
        }),
    )?;
    println!("synthetic Γ = {gamma}: fitted Γ = {:.5}, ε = {:.5}", fit.gamma, fit.epsilon);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bwfit(
    cli: &Cli,
    run: &mut Run,
    states: Option<&Path>,
    orbit: Orbit,
    offset: Option<OffsetChoice>,
    n: u32,
    centre: Option<f64>,
    half_width: Option<f64>,
    bin: Option<f64>,
) -> Outcome<()> {
    let (spec, all) = load_states(cli, run, states)?;
    let pencil = pencil_for(&spec, orbit, offset)?;
    let lo = all.first().map(|s| s.energy).unwrap_or(0.0);
    let hi = all.last().map(|s| s.energy).unwrap_or(0.0);
    let centre = centre.unwrap_or(0.5 * (lo + hi));
    let e = half_width.unwrap_or(centre / 20.0);
    let k = centre.sqrt();
    let predicted = gamma_prediction(&pencil, n, k);
    let bin = bin.unwrap_or(0.25 * predicted);
    if !(e > 0.0 && bin > 0.0) {
        return Err(Failure::Usage("half width and bin must be positive".into()));
    }
    let window = SpectralWindow::new((centre - e).max(lo), (centre + e).min(hi))?;
    let series = overlap_series(&pencil, n, &window, &all)?;
    write_overlaps(run, &series.entries)?;
    let hist = local_density(&series, centre, e, bin)?;
    let fit = bw_fit(&hist)?;
    write_density(run, &hist)?;
    let nn = (n * n) as f64;
    run.json(
        "bwfit.json",
        &json!({
            "orbit": pencil.label(),
            "offset": pencil.offset,
            "n": n,
            "centre": centre,
            "half_width": e,
            "bin_width": bin,
            "samples": hist.samples,
            "fit": fit,
            "gamma_sqrt_k_over_n2": fit.gamma * k.sqrt() / nn,
            "gamma_predicted": predicted,
        }),
    )?;
    println!(
        "Γ = {:.4} (Γ√k/n² = {:.3}), ε = {:.4}, predicted Γ = {:.4}",
        fit.gamma,
        fit.gamma * k.sqrt() / nn,
        fit.epsilon,
        predicted
    );
    Ok(())
}

fn diffract(run: &mut Run, what: &Diffract) -> Outcome<()> {
    match what {
        Diffract::An { n } => {
            let rows = n
                .iter()
                .map(|&n| Ok((n, kirchhoff_an(n)?, kirchhoff_asymptote(n as f64))))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            for (n, v, a) in &rows {
                println!("A_{n} = {v:.8} (asymptote {a:.8})");
            }
            run.csv(
                "an.csv",
                &["n", "value", "asymptote"],
                rows.iter().map(|(n, v, a)| vec![n.to_string(), num(*v), num(*a)]),
            )?;
        }
        Diffract::R0 { cfg } => {
            let c = cfg.config().map_err(|e| Failure::Usage(e.to_string()))?;
            let r0 = specular_r0(&c);
            let l = leakage(&c);
            if let Some(w) = c.validity_warning() {
                eprintln!("warning: {w}");
            }
            run.json(
                "r0.json",
                &json!({
                    "k": cfg.k, "d": cfg.d, "alpha": cfg.alpha, "phi": cfg.phi,
                    "q_dim": c.q_dim(),
                    "r0_re": r0.re, "r0_im": r0.im, "r0_abs2": r0.norm_sqr(),
                    "leakage": l,
                    "warning": c.validity_warning(),
                }),
            )?;
            println!("r0 = {:.8} {:+.8}i, leakage {:.6}", r0.re, r0.im, l);
        }
        Diffract::Rn { n } => {
            let rows = n
                .iter()
                .map(|&n| Ok((n, small_angle_rn(n)?)))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            run.csv(
                "rn.csv",
                &["n", "value"],
                rows.iter().map(|(n, v)| vec![n.to_string(), num(*v)]),
            )?;
        }
        Diffract::Ru { u } => {
            run.csv(
                "ru.csv",
                &["u", "reflection", "transmission"],
                u.iter()
                    .map(|&u| vec![num(u), num(large_angle_r(u)), num(transmission_t(u))]),
            )?;
        }
        Diffract::Grating { cfg } => {
            let c = cfg.config().map_err(|e| Failure::Usage(e.to_string()))?;
            run.csv(
                "grating.csv",
                &["n", "phi_n", "u_n"],
                grating_orders(&c)
                    .into_iter()
                    .map(|(n, p)| vec![n.to_string(), num(p), num(u_of(n, &c))]),
            )?;
        }
    }
    Ok(())
}

fn slits(
    run: &mut Run,
    kappas: &[f64],
    modes: usize,
    order: Option<usize>,
    sweep: Option<&Sweep>,
    grid: usize,
) -> Outcome<()> {
    if kappas.is_empty() && sweep.is_none() {
        return Err(Failure::Usage("give --kappa or --sweep".into()));
    }
    if modes == 0 || kappas.iter().any(|k| !(*k > 0.0)) {
        return Err(Failure::Usage("κ must be positive and --modes at least 1".into()));
    }
    let order_for = |kappa: f64| order.unwrap_or_else(|| ((10.0 * kappa.sqrt()).ceil() as usize).max(400));
    let spectra = kappas
        .par_iter()
        .map(|&kappa| solve_fredholm(kappa, modes, order_for(kappa)).map(|s| (kappa, s)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut grids = Vec::new();
    for (kappa, s) in &spectra {
        for n in 1..=modes {
            rows.push(vec![
                num(*kappa),
                n.to_string(),
                num(s.eigenvalues[n - 1]),
                num(boundary_value(s, n)?),
                num(lambda_asymptote(*kappa, n, 0.206)),
                num(boundary_asymptote(*kappa, n)),
            ]);
            for i in 0..grid {
                let x = if grid == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (grid - 1) as f64 };
                grids.push(vec![
                    num(*kappa),
                    n.to_string(),
                    num(x),
                    num(s.eval(n, x) / s.sine_amplitude(n)),
                ]);
            }
        }
    }
    if !rows.is_empty() {
        run.csv(
            "slits.csv",
            &["kappa", "n", "lambda", "psi_1", "lambda_asymptote", "abs_psi_1_asymptote"],
            rows,
        )?;
    }
    if !grids.is_empty() {
        run.csv("eigenfunctions.csv", &["kappa", "n", "x", "psi"], grids)?;
    }
    if let Some(sw) = sweep {
        let ks: Vec<f64> = (0..sw.count)
            .map(|i| {
                if sw.count == 1 {
                    sw.lo
                } else {
                    sw.lo + (sw.hi - sw.lo) * i as f64 / (sw.count - 1) as f64
                }
            })
            .collect();
        let c = fit_correction_coefficient(&ks, 1, order_for(sw.hi))?;
        run.json(
            "slits_fit.json",
            &json!({"kappa_lo": sw.lo, "kappa_hi": sw.hi, "count": sw.count, "coefficient": c}),
        )?;
        println!("κ^(-3/2) coefficient over [{}, {}]: {c:.5}", sw.lo, sw.hi);
    }
    Ok(())
}

fn write_moments(run: &mut Run, entries: &[MomentEntry], qs: &[f64]) -> Result<()> {
    let mut header = vec!["energy".to_string(), "k".into(), "components".into()];
    header.extend(qs.iter().map(|q| format!("R_{q}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    run.csv(
        "moments.csv",
        &header,
        entries.iter().map(|e| {
            let mut r = vec![num(e.energy), num(e.k), e.components.to_string()];
            r.extend(qs.iter().map(|&q| e.participation(q).map(num).unwrap_or_default()));
            r
        }),
    )
}

fn report_fits(run: &mut Run, entries: &[MomentEntry], qs: &[f64], extra: serde_json::Value) -> Outcome<()> {
    let fits = qs.iter().map(|&q| fractal_fit(entries, q)).collect::<Result<Vec<_>>>()?;
    for f in &fits {
        println!(
            "D_{} = {:.4} ± {:.4} over k in [{:.2}, {:.2}]",
            f.q, f.dimension, f.std_error, f.k_min, f.k_max
        );
    }
    run.json("fractal.json", &json!({"fits": fits, "states": entries.len(), "control": extra}))?;
    Ok(())
}

fn check_qs(qs: &[f64]) -> Outcome<()> {
    if qs.is_empty() || qs.iter().any(|q| !(*q > 1.0)) {
        return Err(Failure::Usage("every q must exceed 1".into()));
    }
    Ok(())
}

fn fractal(cli: &Cli, run: &mut Run, states: Option<&Path>, qs: &[f64]) -> Outcome<()> {
    check_qs(qs)?;
    let (spec, all) = load_states(cli, run, states)?;
    if spec.kind != BilliardKind::Barrier {
        return Err(Failure::Usage("moments are taken over barrier states".into()));
    }
    let entries = all.par_iter().map(|s| moments(s, qs)).collect::<Result<Vec<_>>>()?;
    write_moments(run, &entries, qs)?;
    report_fits(run, &entries, qs, serde_json::Value::Null)
}

fn fractal_random(
    cli: &Cli,
    run: &mut Run,
    k_min: f64,
    k_max: f64,
    count: usize,
    density: f64,
    qs: &[f64],
) -> Outcome<()> {
    check_qs(qs)?;
    if !(k_min > 0.0 && k_max > k_min && count >= 2 && density > 0.0) {
        return Err(Failure::Usage("need 0 < k_min < k_max, count >= 2 and positive density".into()));
    }
    let r = (k_max / k_min).ln();
    let ks: Vec<f64> = (0..count)
        .map(|i| k_min * (r * i as f64 / (count - 1) as f64).exp())
        .collect();
    let entries = random_state_control(&ks, density, qs, cli.seed);
    write_moments(run, &entries, qs)?;
    report_fits(
        run,
        &entries,
        qs,
        json!({"random": true, "seed": cli.seed, "density": density}),
    )
}

fn read_levels(path: &Path) -> Outcome<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(Error::from)?;
    let col = r
        .headers()
        .map_err(Error::from)?
        .iter()
        .position(|h| h == "energy")
        .ok_or_else(|| Failure::Usage(format!("{} has no energy column", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(Error::from)?;
        let v: f64 = rec[col]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad energy '{}'", &rec[col])))?;
        out.push(v);
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

fn spacing(
    cli: &Cli,
    run: &mut Run,
    states: Option<&Path>,
    levels: Option<&Path>,
    poisson: Option<usize>,
) -> Outcome<()> {
    let (unfolded, source) = match (poisson, levels) {
        (Some(_), Some(_)) => return Err(Failure::Usage("give either --poisson or --levels".into())),
        (Some(count), None) => (poisson_levels(count, cli.seed), json!({"poisson": count, "seed": cli.seed})),
        (None, lv) => {
            let path = match lv {
                Some(p) => p.to_path_buf(),
                None => store_path(cli, states).with_extension("csv"),
            };
            let e = read_levels(&path)?;
            run.input_file(&path)?;
            let spec = spec_for(cli, BilliardKind::Barrier)?;
            (unfold(&spec, &e), json!({"levels": path.display().to_string()}))
        }
    };
    let st = spacing_stats(&unfolded)?;
    run.csv(
        "spacing.csv",
        &["s", "p"],
        st.spacing.iter().map(|(s, p)| vec![num(*s), num(*p)]),
    )?;
    run.csv(
        "number_variance.csv",
        &["L", "sigma2"],
        st.number_variance.iter().map(|(l, v)| vec![num(*l), num(*v)]),
    )?;
    run.json(
        "spacing.json",
        &json!({
            "source": source,
            "levels": unfolded.len(),
            "chi": st.chi,
            "chi_std_error": st.chi_std_error,
        }),
    )?;
    println!("{} levels: χ = {:.4} ± {:.4}", unfolded.len(), st.chi, st.chi_std_error);
    Ok(())
}
