//! Eigenstate files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `SSCAR01\0` | 8 bytes |
//! | SHA-256 of the billiard spec JSON | 32 bytes |
//! | basis kind (0 even, 1 odd, 2 full rectangle, 3 bounding rectangle) | u32 |
//! | q_max, k_max | u32, u32 |
//! | odd block present | u32 |
//! | a, b | f64, f64 |
//! | state count | u64 |
//!
//! followed by one record per state: E (f64); parity, cluster flag and
//! solution tag (three u8, five bytes padding); norm_defect (f64); the dense
//! coefficient block of q_max·k_max f64 in (q,k) row-major order; the odd
//! block of the same size when present; the solution length (u64) and its
//! values.
//!
//! A CSV index with columns `id,energy,norm_defect` accompanies each file.

use super::{BasisKind, EigenState, ExpansionBasis, Parity, Solution};
use crate::error::{Error, Result};
use crate::geometry::BilliardSpec;
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 8] = b"SSCAR01\0";

/// Environment variable naming the default store directory.
pub const CACHE_ENV: &str = "SUPERSCAR_CACHE";

pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).map(PathBuf::from)
}

pub fn spec_hash(spec: &BilliardSpec) -> Result<[u8; 32]> {
    let json = serde_json::to_vec(spec)?;
    Ok(Sha256::digest(&json).into())
}

fn kind_code(k: BasisKind) -> u32 {
    match k {
        BasisKind::Even => 0,
        BasisKind::Odd => 1,
        BasisKind::FullRectangle => 2,
        BasisKind::BoundingRectangle => 3,
    }
}

fn kind_from(c: u32) -> Result<BasisKind> {
    Ok(match c {
        0 => BasisKind::Even,
        1 => BasisKind::Odd,
        2 => BasisKind::FullRectangle,
        3 => BasisKind::BoundingRectangle,
        _ => return Err(Error::Format(format!("unknown basis kind {c}"))),
    })
}

fn parity_code(p: Parity) -> u8 {
    match p {
        Parity::Even => 0,
        Parity::Odd => 1,
        Parity::NotApplicable => 2,
    }
}

fn parity_from(c: u8) -> Result<Parity> {
    Ok(match c {
        0 => Parity::Even,
        1 => Parity::Odd,
        2 => Parity::NotApplicable,
        _ => return Err(Error::Format(format!("unknown parity {c}"))),
    })
}

fn index_path(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

/// Streaming writer; call [`StateWriter::finish`] to patch the count.
pub struct StateWriter {
    out: BufWriter<File>,
    index: csv::Writer<File>,
    basis: ExpansionBasis,
    with_odd: bool,
    count: u64,
}

impl StateWriter {
    pub fn create(path: &Path, spec: &BilliardSpec, basis: &ExpansionBasis, with_odd: bool) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&spec_hash(spec)?)?;
        for v in [
            kind_code(basis.kind),
            basis.q_max as u32,
            basis.k_max as u32,
            with_odd as u32,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&basis.a.to_le_bytes())?;
        out.write_all(&basis.b.to_le_bytes())?;
        out.write_all(&0u64.to_le_bytes())?;
        let mut index = csv::Writer::from_path(index_path(path))?;
        index.write_record(["id", "energy", "norm_defect"])?;
        Ok(Self {
            out,
            index,
            basis: *basis,
            with_odd,
            count: 0,
        })
    }

    pub fn write(&mut self, s: &EigenState) -> Result<()> {
        if s.basis != self.basis {
            return Err(Error::BasisMismatch("state basis differs from the file header".into()));
        }
        let o = &mut self.out;
        o.write_all(&s.energy.to_le_bytes())?;
        let (tag, sol): (u8, &[f64]) = match &s.solution {
            Solution::None => (0, &[]),
            Solution::Barrier { g } => (1, g),
            Solution::Triangle { c } => (2, c),
        };
        o.write_all(&[parity_code(s.parity), s.cluster as u8, tag, 0, 0, 0, 0, 0])?;
        o.write_all(&s.norm_defect.to_le_bytes())?;
        write_f64s(o, &s.coeffs)?;
        if self.with_odd {
            let odd = s
                .odd_coeffs
                .as_ref()
                .ok_or_else(|| Error::Format("state lacks the odd block".into()))?;
            write_f64s(o, odd)?;
        }
        o.write_all(&(sol.len() as u64).to_le_bytes())?;
        write_f64s(o, sol)?;
        self.index.write_record(&[
            self.count.to_string(),
            format!("{:.12}", s.energy),
            format!("{:.6e}", s.norm_defect),
        ])?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        self.out.flush()?;
        let f = self.out.get_mut();
        f.seek(SeekFrom::Start(8 + 32 + 16 + 16))?;
        f.write_all(&self.count.to_le_bytes())?;
        f.flush()?;
        self.index.flush()?;
        Ok(self.count)
    }
}

fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<_, 8>(r)?))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| read_f64(r)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreHeader {
    pub spec_hash: [u8; 32],
    pub basis: ExpansionBasis,
    pub with_odd: bool,
    pub count: u64,
}

/// Sequential reader over a state file.
pub struct StateReader {
    input: BufReader<File>,
    pub header: StoreHeader,
    read: u64,
}

impl StateReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        if &read_exact::<_, 8>(&mut input)? != MAGIC {
            return Err(Error::Format(format!("{} is not a state file", path.display())));
        }
        let spec_hash = read_exact::<_, 32>(&mut input)?;
        let mut u = [0u32; 4];
        for v in u.iter_mut() {
            *v = u32::from_le_bytes(read_exact::<_, 4>(&mut input)?);
        }
        let a = read_f64(&mut input)?;
        let b = read_f64(&mut input)?;
        let count = u64::from_le_bytes(read_exact::<_, 8>(&mut input)?);
        let basis = ExpansionBasis::new(kind_from(u[0])?, u[1] as usize, u[2] as usize, a, b)?;
        Ok(Self {
            input,
            header: StoreHeader {
                spec_hash,
                basis,
                with_odd: u[3] != 0,
                count,
            },
            read: 0,
        })
    }

    /// Fails unless the file was written for `spec`.
    pub fn check_spec(&self, spec: &BilliardSpec) -> Result<()> {
        if spec_hash(spec)? != self.header.spec_hash {
            return Err(Error::Format("state file belongs to a different billiard".into()));
        }
        Ok(())
    }

    fn next_state(&mut self) -> Result<EigenState> {
        let basis = self.header.basis;
        let r = &mut self.input;
        let energy = read_f64(r)?;
        let flags = read_exact::<_, 8>(r)?;
        let norm_defect = read_f64(r)?;
        let coeffs = read_f64s(r, basis.len())?;
        let odd_coeffs = if self.header.with_odd {
            Some(read_f64s(r, basis.len())?)
        } else {
            None
        };
        let n = u64::from_le_bytes(read_exact::<_, 8>(r)?) as usize;
        let sol = read_f64s(r, n)?;
        let solution = match flags[2] {
            0 => Solution::None,
            1 => Solution::Barrier { g: sol },
            2 => Solution::Triangle { c: sol },
            t => return Err(Error::Format(format!("unknown solution tag {t}"))),
        };
        self.read += 1;
        Ok(EigenState {
            energy,
            parity: parity_from(flags[0])?,
            basis,
            coeffs,
            odd_coeffs,
            norm_defect,
            cluster: flags[1] != 0,
            solution,
        })
    }
}

impl Iterator for StateReader {
    type Item = Result<EigenState>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read >= self.header.count {
            return None;
        }
        Some(self.next_state())
    }
}

/// Writes a whole list of states.
pub fn write_states(path: &Path, spec: &BilliardSpec, states: &[EigenState]) -> Result<()> {
    let first = states
        .first()
        .ok_or_else(|| Error::Insufficient("no states to write".into()))?;
    let with_odd = states.iter().all(|s| s.odd_coeffs.is_some());
    let mut w = StateWriter::create(path, spec, &first.basis, with_odd)?;
    for s in states {
        w.write(s)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_states(path: &Path) -> Result<Vec<EigenState>> {
    StateReader::open(path)?.collect()
}
