//! Binary grid snapshots.
//!
//! Layout, all little-endian: the 8 magic bytes `WLSIM01\0`, `u32` dim,
//! `u32` kind, one `u64` size per array axis (`d` axes for x-fields, `2d`
//! for phase fields with the momentum axes last), one `f64` extent per
//! array axis, then the payload as row-major `f64` with complex values
//! interleaved `re, im`. Momentum extents are `m * dp`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{PhaseGrid, SpatialGrid};
use crate::C64;

pub const MAGIC: &[u8; 8] = b"WLSIM01\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum SnapshotKind {
    ComplexSpatial = 0,
    RealPhase = 1,
    ComplexPhase = 2,
}

impl SnapshotKind {
    fn from_u32(v: u32) -> Result<Self> {
        match v {
            0 => Ok(Self::ComplexSpatial),
            1 => Ok(Self::RealPhase),
            2 => Ok(Self::ComplexPhase),
            _ => Err(Error::Format(format!("unknown kind {v}"))),
        }
    }

    fn is_phase(self) -> bool {
        self != Self::ComplexSpatial
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dim: usize,
    pub kind: SnapshotKind,
    pub sizes: Vec<usize>,
    pub extents: Vec<f64>,
    pub payload: Payload,
}

impl Snapshot {
    pub fn spatial(grid: &SpatialGrid, values: &[C64]) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch("payload length".into()));
        }
        Ok(Self {
            dim: grid.dim(),
            kind: SnapshotKind::ComplexSpatial,
            sizes: grid.shape(),
            extents: grid.extents(),
            payload: Payload::Complex(values.to_vec()),
        })
    }

    fn phase_header(pg: &PhaseGrid) -> (Vec<usize>, Vec<f64>) {
        let mut extents = pg.spatial().extents();
        extents.extend((0..pg.dim()).map(|a| pg.momentum_extent(a)));
        (pg.shape(), extents)
    }

    pub fn real_phase(pg: &PhaseGrid, values: &[f64]) -> Result<Self> {
        if values.len() != pg.len() {
            return Err(Error::DimensionMismatch("payload length".into()));
        }
        let (sizes, extents) = Self::phase_header(pg);
        Ok(Self {
            dim: pg.dim(),
            kind: SnapshotKind::RealPhase,
            sizes,
            extents,
            payload: Payload::Real(values.to_vec()),
        })
    }

    pub fn complex_phase(pg: &PhaseGrid, values: &[C64]) -> Result<Self> {
        if values.len() != pg.len() {
            return Err(Error::DimensionMismatch("payload length".into()));
        }
        let (sizes, extents) = Self::phase_header(pg);
        Ok(Self {
            dim: pg.dim(),
            kind: SnapshotKind::ComplexPhase,
            sizes,
            extents,
            payload: Payload::Complex(values.to_vec()),
        })
    }

    /// Spatial grid described by the header (phase snapshots: the x part).
    pub fn spatial_grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(&self.sizes[..self.dim], &self.extents[..self.dim])
    }

    pub fn phase_grid(&self) -> Result<PhaseGrid> {
        if !self.kind.is_phase() {
            return Err(Error::Format("not a phase-space snapshot".into()));
        }
        PhaseGrid::with_momentum_points(self.spatial_grid()?, &self.sizes[self.dim..])
    }

    pub fn complex_values(&self) -> Result<&[C64]> {
        match &self.payload {
            Payload::Complex(v) => Ok(v),
            Payload::Real(_) => Err(Error::Format("payload is real".into())),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.kind as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        for &e in &self.extents {
            w.write_all(&e.to_le_bytes())?;
        }
        let mut buf = Vec::new();
        match &self.payload {
            Payload::Real(v) => v
                .iter()
                .for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            Payload::Complex(v) => v.iter().for_each(|z| {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }),
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let dim = read_u32(&mut r)? as usize;
        if !(1..=2).contains(&dim) {
            return Err(Error::Format(format!("dimension {dim}")));
        }
        let kind = SnapshotKind::from_u32(read_u32(&mut r)?)?;
        let axes = if kind.is_phase() { 2 * dim } else { dim };
        let sizes = (0..axes)
            .map(|_| read_u64(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let extents = (0..axes)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let count = sizes
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .ok_or_else(|| Error::Format("size overflow".into()))?;
        let payload = match kind {
            SnapshotKind::RealPhase => Payload::Real(
                (0..count)
                    .map(|_| read_f64(&mut r))
                    .collect::<Result<_>>()?,
            ),
            _ => Payload::Complex(
                (0..count)
                    .map(|_| Ok(C64::new(read_f64(&mut r)?, read_f64(&mut r)?)))
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(Self {
            dim,
            kind,
            sizes,
            extents,
            payload,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
