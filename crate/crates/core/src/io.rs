//! Binary snapshot container.
//!
//! Little-endian throughout. Header: magic `CHRONOFLOW1`, `u64` clock and system
//! node counts, `f64` clock min/max, system min/max, `f64` time. A snapshot file
//! continues with the complex amplitude as interleaved re/im pairs, row-major with
//! `R` outer. A factorized file stores `φ` the same way and then a `u64` block count
//! followed by tagged blocks (`chi`, `A`, `epsilon`, `mask`).

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::factorization::FactorizedState;
use crate::model::JointState;
use crate::numgrid::{Field2D, Grid1D, ProductGrid2D};
use crate::{Error, Result};

pub const MAGIC: &[u8; 11] = b"CHRONOFLOW1";

const TAG_LEN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
enum BlockKind {
    Complex1D = 1,
    Real1D = 2,
    Mask2D = 3,
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file ends inside a record".into())
    } else {
        Error::Io(e)
    }
}

fn write_header(w: &mut impl Write, grid: &ProductGrid2D, t: f64) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u64(w, grid.clock.n as u64)?;
    put_u64(w, grid.system.n as u64)?;
    for v in [grid.clock.min, grid.clock.max, grid.system.min, grid.system.max, t] {
        put_f64(w, v)?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<(ProductGrid2D, f64)> {
    let mut magic = [0u8; 11];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing CHRONOFLOW1 magic".into()));
    }
    let nc = get_u64(r)? as usize;
    let ns = get_u64(r)? as usize;
    let (cmin, cmax, smin, smax, t) = (get_f64(r)?, get_f64(r)?, get_f64(r)?, get_f64(r)?, get_f64(r)?);
    let grid = ProductGrid2D::new(Grid1D::new(cmin, cmax, nc)?, Grid1D::new(smin, smax, ns)?)
        .map_err(|e| Error::Format(format!("bad grid in header: {e}")))?;
    Ok((grid, t))
}

fn write_complex(w: &mut impl Write, values: impl IntoIterator<Item = Complex64>) -> Result<()> {
    for z in values {
        put_f64(w, z.re)?;
        put_f64(w, z.im)?;
    }
    Ok(())
}

fn read_complex2(r: &mut impl Read, grid: &ProductGrid2D) -> Result<Array2<Complex64>> {
    let mut v = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        v.push(Complex64::new(get_f64(r)?, get_f64(r)?));
    }
    Ok(Array2::from_shape_vec(grid.shape(), v).expect("length matches grid"))
}

pub fn write_snapshot(w: &mut impl Write, state: &JointState) -> Result<()> {
    write_header(w, &state.psi.grid, state.t)?;
    write_complex(w, state.psi.values.iter().copied())
}

pub fn read_snapshot(r: &mut impl Read) -> Result<JointState> {
    let (grid, t) = read_header(r)?;
    let values = read_complex2(r, &grid)?;
    Ok(JointState { psi: Field2D::new(grid, values)?, t })
}

/// Factorized snapshot as stored on disk, in the gauge it was written in.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedRecord {
    pub grid: ProductGrid2D,
    pub t: f64,
    /// NaN where unavailable.
    pub phi: Array2<Complex64>,
    pub chi: Array1<Complex64>,
    pub a: Array1<f64>,
    pub epsilon: Array1<f64>,
    /// `true` where `φ` is available.
    pub mask: Array2<bool>,
}

impl FactorizedRecord {
    pub fn from_state(fs: &FactorizedState) -> Self {
        let phi = fs.phi();
        let mask = phi.mapv(|z| z.re.is_finite() && z.im.is_finite());
        FactorizedRecord { grid: fs.grid, t: fs.t, phi, chi: fs.chi(), a: fs.vector_potential(), epsilon: fs.epsilon.clone(), mask }
    }
}

fn write_tag(w: &mut impl Write, tag: &str, kind: BlockKind, len: usize) -> Result<()> {
    let mut t = [b' '; TAG_LEN];
    t[..tag.len()].copy_from_slice(tag.as_bytes());
    w.write_all(&t)?;
    put_u64(w, kind as u64)?;
    put_u64(w, len as u64)
}

pub fn write_factorized(w: &mut impl Write, rec: &FactorizedRecord) -> Result<()> {
    write_header(w, &rec.grid, rec.t)?;
    write_complex(w, rec.phi.iter().copied())?;
    put_u64(w, 4)?;
    write_tag(w, "chi", BlockKind::Complex1D, rec.chi.len())?;
    write_complex(w, rec.chi.iter().copied())?;
    for (tag, v) in [("A", &rec.a), ("epsilon", &rec.epsilon)] {
        write_tag(w, tag, BlockKind::Real1D, v.len())?;
        for x in v {
            put_f64(w, *x)?;
        }
    }
    write_tag(w, "mask", BlockKind::Mask2D, rec.mask.len())?;
    let bytes: Vec<u8> = rec.mask.iter().map(|&m| m as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_factorized(r: &mut impl Read) -> Result<FactorizedRecord> {
    let (grid, t) = read_header(r)?;
    let phi = read_complex2(r, &grid)?;
    let n_blocks = get_u64(r)?;
    let (mut chi, mut a, mut epsilon, mut mask) = (None, None, None, None);
    for _ in 0..n_blocks {
        let mut tag = [0u8; TAG_LEN];
        r.read_exact(&mut tag).map_err(truncated)?;
        let tag = String::from_utf8_lossy(&tag).trim_end().to_string();
        let kind = get_u64(r)?;
        let len = get_u64(r)? as usize;
        let expect = |n: usize| {
            if len == n { Ok(()) } else { Err(Error::Format(format!("block {tag} has {len} entries, expected {n}"))) }
        };
        match (tag.as_str(), kind) {
            ("chi", k) if k == BlockKind::Complex1D as u64 => {
                expect(grid.clock.n)?;
                let mut v = Vec::with_capacity(len);
                for _ in 0..len {
                    v.push(Complex64::new(get_f64(r)?, get_f64(r)?));
                }
                chi = Some(Array1::from(v));
            }
            ("A" | "epsilon", k) if k == BlockKind::Real1D as u64 => {
                expect(grid.clock.n)?;
                let mut v = Vec::with_capacity(len);
                for _ in 0..len {
                    v.push(get_f64(r)?);
                }
                if tag == "A" { a = Some(Array1::from(v)) } else { epsilon = Some(Array1::from(v)) }
            }
            ("mask", k) if k == BlockKind::Mask2D as u64 => {
                expect(grid.len())?;
                let mut b = vec![0u8; len];
                r.read_exact(&mut b).map_err(truncated)?;
                mask = Some(Array2::from_shape_vec(grid.shape(), b.into_iter().map(|x| x != 0).collect()).expect("length checked"));
            }
            _ => return Err(Error::Format(format!("unknown block {tag} of kind {kind}"))),
        }
    }
    let missing = |name: &str| Error::Format(format!("factorized file lacks the {name} block"));
    Ok(FactorizedRecord {
        grid,
        t,
        phi,
        chi: chi.ok_or_else(|| missing("chi"))?,
        a: a.ok_or_else(|| missing("A"))?,
        epsilon: epsilon.ok_or_else(|| missing("epsilon"))?,
        mask: mask.ok_or_else(|| missing("mask"))?,
    })
}
