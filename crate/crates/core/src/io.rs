//! Path and excursion serialization.
//!
//! CSV columns are `t,value` for a [`Path`] and `t,x,m,v` for a
//! [`DecomposedPath`]. The binary format is the magic `SLAB1`, a kind byte,
//! the grid (`dt` as f64, `n_steps` as u64) and the value columns, all
//! little-endian. Both formats round-trip bit-exactly: floats are written in
//! their shortest exact decimal form and grid times are `k·dt`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::excursion::{Excursion, ExcursionSet};
use crate::path::{DecomposedPath, Path, TimeGrid};

pub const MAGIC: &[u8; 5] = b"SLAB1";
const KIND_PATH: u8 = 1;
const KIND_DECOMPOSED: u8 = 3;

fn grid_from_times(times: &[f64]) -> Result<TimeGrid> {
    if times.len() < 2 {
        return Err(LabError::Format("a path needs at least two samples".into()));
    }
    if times[0] != 0.0 {
        return Err(LabError::Format(format!("first time must be 0, got {}", times[0])));
    }
    let grid = TimeGrid::new(times[1], times.len() - 1)?;
    if let Some(k) = (0..times.len()).find(|&k| times[k] != grid.time(k)) {
        return Err(LabError::Format(format!(
            "row {k}: time {} is not on the uniform grid (expected {})",
            times[k],
            grid.time(k)
        )));
    }
    Ok(grid)
}

pub fn write_path_csv<W: Write>(path: &Path, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "value"])?;
    for (k, v) in path.values().iter().enumerate() {
        wr.write_record([path.grid().time(k).to_string(), v.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_decomposed_csv<W: Write>(d: &DecomposedPath, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "x", "m", "v"])?;
    let g = d.grid();
    for k in 0..g.len() {
        wr.write_record([
            g.time(k).to_string(),
            d.x.values()[k].to_string(),
            d.m.values()[k].to_string(),
            d.v.values()[k].to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

fn read_columns<R: Read>(r: R, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rd = csv::Reader::from_reader(r);
    let h = rd.headers()?.clone();
    if h.iter().ne(header.iter().copied()) {
        return Err(LabError::Format(format!(
            "expected header `{}`, found `{}`",
            header.join(","),
            h.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        for (j, col) in cols.iter_mut().enumerate() {
            let field = rec.get(j).ok_or_else(|| LabError::Format(format!("row {row}: missing column")))?;
            col.push(
                field
                    .parse::<f64>()
                    .map_err(|e| LabError::Format(format!("row {row}, column {}: {e}", header[j])))?,
            );
        }
    }
    Ok(cols)
}

pub fn read_path_csv<R: Read>(r: R) -> Result<Path> {
    let mut cols = read_columns(r, &["t", "value"])?;
    let grid = grid_from_times(&cols[0])?;
    Path::new(grid, cols.swap_remove(1))
}

pub fn read_decomposed_csv<R: Read>(r: R) -> Result<DecomposedPath> {
    let mut cols = read_columns(r, &["t", "x", "m", "v"])?;
    let grid = grid_from_times(&cols[0])?;
    let v = Path::new(grid, cols.pop().expect("v"))?;
    let m = Path::new(grid, cols.pop().expect("m"))?;
    let x = Path::new(grid, cols.pop().expect("x"))?;
    DecomposedPath::new(x, m, v)
}

fn write_header<W: Write>(w: &mut W, kind: u8, grid: &TimeGrid) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[kind])?;
    w.write_all(&grid.dt().to_le_bytes())?;
    w.write_all(&(grid.n_steps() as u64).to_le_bytes())?;
    Ok(())
}

fn write_values<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_path_binary<W: Write>(path: &Path, mut w: W) -> Result<()> {
    write_header(&mut w, KIND_PATH, path.grid())?;
    write_values(&mut w, path.values())?;
    Ok(w.flush()?)
}

pub fn write_decomposed_binary<W: Write>(d: &DecomposedPath, mut w: W) -> Result<()> {
    write_header(&mut w, KIND_DECOMPOSED, d.grid())?;
    for p in [&d.x, &d.m, &d.v] {
        write_values(&mut w, p.values())?;
    }
    Ok(w.flush()?)
}

fn read_u64<R: Read>(r: &mut R) -> Result<[u8; 8]> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_header<R: Read>(r: &mut R, kind: u8) -> Result<TimeGrid> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic[..5] != MAGIC {
        return Err(LabError::Format("missing SLAB1 magic".into()));
    }
    if magic[5] != kind {
        return Err(LabError::Format(format!("record kind {} where {kind} was expected", magic[5])));
    }
    let dt = f64::from_le_bytes(read_u64(r)?);
    let n = u64::from_le_bytes(read_u64(r)?);
    let n = usize::try_from(n).map_err(|_| LabError::Format("grid too large".into()))?;
    TimeGrid::new(dt, n)
}

fn read_values<R: Read>(r: &mut R, grid: &TimeGrid) -> Result<Path> {
    let mut v = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        v.push(f64::from_le_bytes(read_u64(r)?));
    }
    Path::new(*grid, v)
}

pub fn read_path_binary<R: Read>(mut r: R) -> Result<Path> {
    let grid = read_header(&mut r, KIND_PATH)?;
    read_values(&mut r, &grid)
}

pub fn read_decomposed_binary<R: Read>(mut r: R) -> Result<DecomposedPath> {
    let grid = read_header(&mut r, KIND_DECOMPOSED)?;
    let x = read_values(&mut r, &grid)?;
    let m = read_values(&mut r, &grid)?;
    let v = read_values(&mut r, &grid)?;
    DecomposedPath::new(x, m, v)
}

#[derive(Debug, Serialize, Deserialize)]
struct ExcursionRow {
    g_index: Option<usize>,
    d_index: usize,
    sign: i8,
    unfinished: bool,
}

pub fn write_excursions_csv<W: Write>(set: &ExcursionSet, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for e in &set.excursions {
        wr.serialize(ExcursionRow {
            g_index: e.g_index(),
            d_index: e.d_index(),
            sign: e.sign,
            unfinished: e.unfinished,
        })?;
    }
    if set.excursions.is_empty() {
        wr.write_record(["g_index", "d_index", "sign", "unfinished"])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads excursions written by [`write_excursions_csv`] for a path on `grid`.
pub fn read_excursions_csv<R: Read>(r: R, grid: TimeGrid) -> Result<ExcursionSet> {
    let mut rd = csv::Reader::from_reader(r);
    let mut excursions = Vec::new();
    for row in rd.deserialize() {
        let row: ExcursionRow = row?;
        let first = row.g_index.map_or(0, |g| g + 1);
        let last = if row.unfinished { row.d_index } else { row.d_index.saturating_sub(1) };
        if last < first || last >= grid.len() || !(row.sign == 1 || row.sign == -1) {
            return Err(LabError::Format(format!("invalid excursion row {row:?}")));
        }
        excursions.push(Excursion {
            first,
            last,
            sign: row.sign,
            unfinished: row.unfinished,
        });
    }
    Ok(ExcursionSet {
        excursions,
        source_grid: grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excursion::excursion_decompose;
    use crate::pathgen::{gen_brownian, gen_reflected};
    use crate::seed::SeedSpec;

    fn sample() -> Path {
        gen_brownian(TimeGrid::new(1e-3, 500).unwrap(), SeedSpec::new(1, 2)).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = sample();
        let mut buf = Vec::new();
        write_path_csv(&p, &mut buf).unwrap();
        assert!(buf.starts_with(b"t,value\n"));
        assert_eq!(read_path_csv(buf.as_slice()).unwrap(), p);
        let d = gen_reflected(&p).unwrap();
        let mut buf = Vec::new();
        write_decomposed_csv(&d, &mut buf).unwrap();
        assert!(buf.starts_with(b"t,x,m,v\n"));
        assert_eq!(read_decomposed_csv(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let p = sample();
        let mut buf = Vec::new();
        write_path_binary(&p, &mut buf).unwrap();
        assert_eq!(&buf[..5], b"SLAB1");
        assert_eq!(buf.len(), 6 + 16 + 8 * p.len());
        assert_eq!(read_path_binary(buf.as_slice()).unwrap(), p);
        let d = gen_reflected(&p).unwrap();
        let mut buf = Vec::new();
        write_decomposed_binary(&d, &mut buf).unwrap();
        assert_eq!(read_decomposed_binary(buf.as_slice()).unwrap(), d);
        assert!(read_path_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(read_path_csv("t,value\n0,1\n".as_bytes()).is_err());
        assert!(read_path_csv("t,val\n0,1\n1,2\n".as_bytes()).is_err());
        assert!(read_path_csv("t,value\n0,1\n0.5,2\n0.75,3\n".as_bytes()).is_err());
        assert!(read_path_csv("t,value\n0,1\n1,NaN\n".as_bytes()).is_err());
        assert!(read_path_binary(&b"SLAB2\x01"[..]).is_err());
    }

    #[test]
    fn excursion_csv_round_trip() {
        let p = sample();
        let set = excursion_decompose(&p, 0.0).unwrap();
        let mut buf = Vec::new();
        write_excursions_csv(&set, &mut buf).unwrap();
        assert!(buf.starts_with(b"g_index,d_index,sign,unfinished\n"));
        assert_eq!(read_excursions_csv(buf.as_slice(), *p.grid()).unwrap(), set);
    }
}
