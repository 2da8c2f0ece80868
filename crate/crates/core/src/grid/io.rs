//! Binary `PGRD` container and CSV export.
//!
//! Layout, all little-endian: magic `PGRD`, version `u32`, dimension `u8`,
//! lattice node counts (`u32` per axis), spacings (`f64` per axis), number
//! of time levels `u32`, time step `f64`, the mask packed eight nodes per
//! byte (least significant bit first), then every value as `f64` with the
//! time level as the slowest index and the last spatial axis as the fastest.
//!
//! The container does not store the lattice origin or the initial time;
//! [`read_pgrd`] places the origin at zero and starts time at zero.

use std::io::{Read, Write};
use std::sync::Arc;

use super::{GridFunction, SpaceTimeGrid, SpatialDomain};
use crate::error::{Error, Result};

pub const PGRD_MAGIC: [u8; 4] = *b"PGRD";
pub const PGRD_VERSION: u32 = 1;

pub fn write_pgrd<W: Write>(f: &GridFunction, mut w: W) -> Result<()> {
    let grid = f.grid();
    let space = grid.space();
    let dim = space.dim();
    w.write_all(&PGRD_MAGIC)?;
    w.write_all(&PGRD_VERSION.to_le_bytes())?;
    w.write_all(&[dim as u8])?;
    for a in 0..dim {
        w.write_all(&(space.shape()[a] as u32).to_le_bytes())?;
    }
    for a in 0..dim {
        w.write_all(&space.spacing()[a].to_le_bytes())?;
    }
    w.write_all(&(grid.nt() as u32).to_le_bytes())?;
    w.write_all(&grid.dt().to_le_bytes())?;
    let mut packed = vec![0u8; space.len().div_ceil(8)];
    for (i, &m) in space.mask().iter().enumerate() {
        if m {
            packed[i / 8] |= 1 << (i % 8);
        }
    }
    w.write_all(&packed)?;
    let mut buf = Vec::with_capacity(8 * f.values().len());
    for v in f.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            Error::DimsMismatch("file ends before the declared payload".into())
        }
        _ => Error::Io(e),
    })?;
    Ok(b)
}

pub fn read_pgrd<R: Read>(mut r: R) -> Result<GridFunction> {
    let magic: [u8; 4] = read_array(&mut r)?;
    if magic != PGRD_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != PGRD_VERSION {
        return Err(Error::VersionMismatch { found: version });
    }
    let [dim] = read_array::<1, _>(&mut r)?;
    let dim = dim as usize;
    if dim != 1 && dim != 2 {
        return Err(Error::DimsMismatch(format!("dimension byte {dim}")));
    }
    let mut shape = [1usize; 2];
    for s in shape.iter_mut().take(dim) {
        *s = u32::from_le_bytes(read_array(&mut r)?) as usize;
    }
    let mut spacing = [1.0f64; 2];
    for h in spacing.iter_mut().take(dim) {
        *h = f64::from_le_bytes(read_array(&mut r)?);
    }
    let nt = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let dt = f64::from_le_bytes(read_array(&mut r)?);
    let nodes = shape[0]
        .checked_mul(shape[1])
        .filter(|&n| n > 0 && n < (1 << 31))
        .ok_or_else(|| Error::DimsMismatch(format!("lattice shape {shape:?}")))?;
    let total = nodes
        .checked_mul(nt)
        .filter(|&n| n < (1 << 31))
        .ok_or_else(|| Error::DimsMismatch(format!("{nt} time levels")))?;
    let mut packed = vec![0u8; nodes.div_ceil(8)];
    r.read_exact(&mut packed)
        .map_err(|_| Error::DimsMismatch("truncated mask".into()))?;
    let mask: Vec<bool> = (0..nodes).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
    let mut raw = vec![0u8; 8 * total];
    r.read_exact(&mut raw)
        .map_err(|_| Error::DimsMismatch(format!("expected {total} values")))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::DimsMismatch(format!("{} trailing bytes", rest.len())));
    }
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let space = SpatialDomain::from_mask(dim, shape, spacing, [0.0, 0.0], mask)?;
    let grid = SpaceTimeGrid::with_step(space, 0.0, dt, nt)?;
    GridFunction::from_values(Arc::new(grid), values)
}

/// One row `t,x[,y],value` per mask node and time level.
pub fn write_csv<W: Write>(f: &GridFunction, mut w: W) -> Result<()> {
    let grid = f.grid();
    let space = grid.space();
    if space.dim() == 1 {
        writeln!(w, "t,x,value")?;
    } else {
        writeln!(w, "t,x,y,value")?;
    }
    for k in 0..grid.nt() {
        let t = grid.time(k);
        for n in 0..space.len() {
            if !space.in_mask(n) {
                continue;
            }
            let x = space.position(n);
            let v = f.at(k, n);
            if space.dim() == 1 {
                writeln!(w, "{t},{},{v}", x[0])?;
            } else {
                writeln!(w, "{t},{},{},{v}", x[0], x[1])?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_domain, DomainKind};
    use proptest::prelude::*;

    fn sample(dim: usize) -> GridFunction {
        let kind = if dim == 1 {
            DomainKind::Interval { length: 1.0, cells: 13 }
        } else {
            DomainKind::LShape { length: 1.0, cells: 9 }
        };
        let d = make_domain(&kind).unwrap();
        let d = SpatialDomain::from_mask(d.dim(), d.shape(), d.spacing(), [0.0, 0.0], d.mask().to_vec())
            .unwrap();
        let g = Arc::new(SpaceTimeGrid::with_step(d, 0.0, 0.125, 5).unwrap());
        GridFunction::from_fn(g, |x, t| (3.0 * x[0]).sin() * (1.0 + x[1]) - t * t)
    }

    #[test]
    fn round_trip_is_bitwise() {
        for dim in [1, 2] {
            let f = sample(dim);
            let mut buf = Vec::new();
            write_pgrd(&f, &mut buf).unwrap();
            let g = read_pgrd(buf.as_slice()).unwrap();
            assert_eq!(**g.grid(), **f.grid());
            let a: Vec<u64> = f.values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = g.values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn header_errors() {
        let f = sample(2);
        let mut buf = Vec::new();
        write_pgrd(&f, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert_eq!(read_pgrd(bad.as_slice()).unwrap_err().kind(), "bad-magic");
        let mut bad = buf.clone();
        bad[4] = 2;
        assert_eq!(read_pgrd(bad.as_slice()).unwrap_err().kind(), "version-mismatch");
        let bad = &buf[..buf.len() - 3];
        assert_eq!(read_pgrd(bad).unwrap_err().kind(), "dims-mismatch");
        let mut bad = buf.clone();
        bad.push(0);
        assert_eq!(read_pgrd(bad.as_slice()).unwrap_err().kind(), "dims-mismatch");
        let mut bad = buf;
        bad[8] = 3;
        assert_eq!(read_pgrd(bad.as_slice()).unwrap_err().kind(), "dims-mismatch");
    }

    #[test]
    fn csv_has_one_row_per_mask_point() {
        let f = sample(1);
        let mut out = Vec::new();
        write_csv(&f, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let rows = text.lines().count() - 1;
        assert_eq!(rows, f.grid().nt() * f.grid().space().mask_count());
        assert!(text.starts_with("t,x,value"));
    }

    proptest! {
        #[test]
        fn round_trip_random_values(seed in proptest::collection::vec(-1e6f64..1e6, 13 * 5)) {
            let f = sample(1);
            let space = f.grid().space();
            let mut vals = vec![0.0; f.grid().len()];
            let mut it = seed.iter();
            for (i, v) in vals.iter_mut().enumerate() {
                if space.in_mask(i % space.len()) {
                    *v = *it.next().unwrap();
                }
            }
            let f = GridFunction::from_values(f.grid().clone(), vals).unwrap();
            let mut buf = Vec::new();
            write_pgrd(&f, &mut buf).unwrap();
            let g = read_pgrd(buf.as_slice()).unwrap();
            prop_assert_eq!(f.values(), g.values());
        }
    }
}
