//! Binary field and flow files, and CSV export.
//!
//! Field files (`SRFLD1`): magic, `u32` axis count, `u64` node count per
//! axis, `f64` period per axis, `u32` component count, then the samples as
//! little-endian `f64` in row-major order over `(nodes..., component)`.
//!
//! Flow files (`SRFLW1`): magic, the same grid header, `f64` final time,
//! then wrapped positions (`axes` values per particle), log-Jacobians, and
//! the unwrapped displacements (`axes` values per particle).

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowMap;
use crate::grid::{Density, Grid, ScalarField, VectorField};

pub const FIELD_MAGIC: &[u8; 6] = b"SRFLD1";
pub const FLOW_MAGIC: &[u8; 6] = b"SRFLW1";

/// Grid samples with any number of components.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldData {
    pub grid: Grid,
    pub components: Vec<Vec<f64>>,
}

impl FieldData {
    pub fn scalar(f: &ScalarField) -> Self {
        Self {
            grid: *f.grid(),
            components: vec![f.values().to_vec()],
        }
    }

    pub fn vector(v: &VectorField) -> Self {
        Self {
            grid: *v.grid(),
            components: v.components().to_vec(),
        }
    }

    pub fn into_scalar(self) -> Result<ScalarField> {
        match <[Vec<f64>; 1]>::try_from(self.components) {
            Ok([values]) => ScalarField::new(self.grid, values),
            Err(c) => Err(Error::Format(format!("expected one component, found {}", c.len()))),
        }
    }

    pub fn into_density(self) -> Result<Density> {
        Density::from_field(&self.into_scalar()?)
    }
}

fn write_grid(w: &mut impl Write, grid: &Grid) -> Result<()> {
    w.write_all(&(grid.ndim() as u32).to_le_bytes())?;
    for &d in grid.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &p in grid.periods() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("file truncated while reading {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r, what)?))
}

fn read_f64(r: &mut impl Read, what: &str) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r, what)?))
}

fn read_magic(r: &mut impl Read, magic: &[u8; 6]) -> Result<()> {
    let found: [u8; 6] = read_array(r, "magic")?;
    if &found != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {}",
            String::from_utf8_lossy(&found),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn read_grid(r: &mut impl Read) -> Result<Grid> {
    let ndim = read_u32(r, "axis count")? as usize;
    if !(2..=3).contains(&ndim) {
        return Err(Error::Format(format!("unsupported axis count {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let d = u64::from_le_bytes(read_array(r, "dims")?);
        dims.push(usize::try_from(d).map_err(|_| Error::Format(format!("axis length {d} too large")))?);
    }
    let mut periods = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        periods.push(read_f64(r, "periods")?);
    }
    Grid::new(&dims, &periods).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_field_to(w: &mut impl Write, field: &FieldData) -> Result<()> {
    w.write_all(FIELD_MAGIC)?;
    write_grid(w, &field.grid)?;
    w.write_all(&(field.components.len() as u32).to_le_bytes())?;
    for i in 0..field.grid.len() {
        for c in &field.components {
            w.write_all(&c[i].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_field_from(r: &mut impl Read) -> Result<FieldData> {
    read_magic(r, FIELD_MAGIC)?;
    let grid = read_grid(r)?;
    let k = read_u32(r, "component count")? as usize;
    if k == 0 || k > 16 {
        return Err(Error::Format(format!("unsupported component count {k}")));
    }
    let mut components = vec![Vec::with_capacity(grid.len()); k];
    for _ in 0..grid.len() {
        for c in components.iter_mut() {
            c.push(read_f64(r, "samples")?);
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after samples".into()));
    }
    Ok(FieldData { grid, components })
}

pub fn write_field(path: impl AsRef<Path>, field: &FieldData) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_field_to(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<FieldData> {
    read_field_from(&mut BufReader::new(std::fs::File::open(path)?))
}

pub fn write_flow_to(w: &mut impl Write, flow: &FlowMap) -> Result<()> {
    let grid = flow.grid();
    let n = grid.ndim();
    w.write_all(FLOW_MAGIC)?;
    write_grid(w, grid)?;
    w.write_all(&flow.t_final().to_le_bytes())?;
    for p in flow.positions() {
        for v in &p[..n] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for l in flow.log_jacobian() {
        w.write_all(&l.to_le_bytes())?;
    }
    for d in flow.displacements() {
        for v in &d[..n] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_flow_from(r: &mut impl Read) -> Result<FlowMap> {
    read_magic(r, FLOW_MAGIC)?;
    let grid = read_grid(r)?;
    let n = grid.ndim();
    let t = read_f64(r, "final time")?;
    for _ in 0..grid.len() * n {
        read_f64(r, "positions")?;
    }
    let logj = (0..grid.len())
        .map(|_| read_f64(r, "log-Jacobians"))
        .collect::<Result<Vec<_>>>()?;
    let mut disp = vec![[0.0; 3]; grid.len()];
    for d in disp.iter_mut() {
        for v in d[..n].iter_mut() {
            *v = read_f64(r, "displacements")?;
        }
    }
    FlowMap::from_displacements(grid, disp, logj, t)
}

pub fn write_flow(path: impl AsRef<Path>, flow: &FlowMap) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_flow_to(&mut w, flow)?;
    w.flush()?;
    Ok(())
}

pub fn read_flow(path: impl AsRef<Path>) -> Result<FlowMap> {
    read_flow_from(&mut BufReader::new(std::fs::File::open(path)?))
}

/// One row per node: coordinates, then each component.
pub fn export_csv_to(w: &mut impl Write, field: &FieldData, names: &[&str]) -> Result<()> {
    let axes = ["x", "y", "z"];
    let n = field.grid.ndim();
    let mut header: Vec<String> = axes[..n].iter().map(|s| s.to_string()).collect();
    for k in 0..field.components.len() {
        header.push(names.get(k).map_or_else(|| format!("v{k}"), |s| s.to_string()));
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, p) in field.grid.coords().enumerate() {
        let mut row: Vec<String> = p[..n].iter().map(|v| format!("{v}")).collect();
        row.extend(field.components.iter().map(|c| format!("{:e}", c[i])));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn export_csv(path: impl AsRef<Path>, field: &FieldData, names: &[&str]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    export_csv_to(&mut w, field, names)?;
    w.flush()?;
    Ok(())
}

/// Parses a CSV written by [`export_csv`] back into values, given the grid.
pub fn import_csv_from(r: impl Read, grid: Grid) -> Result<FieldData> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))??;
    let cols = header.split(',').count();
    let n = grid.ndim();
    if cols <= n {
        return Err(Error::Format("CSV has no value columns".into()));
    }
    let mut components = vec![Vec::with_capacity(grid.len()); cols - n];
    for (row, line) in lines.enumerate() {
        let line = line?;
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != cols {
            return Err(Error::Format(format!(
                "row {} has {} columns, expected {cols}",
                row + 2,
                vals.len()
            )));
        }
        for (c, v) in components.iter_mut().zip(&vals[n..]) {
            c.push(
                v.trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("row {}: bad number `{v}`", row + 2)))?,
            );
        }
    }
    if components[0].len() != grid.len() {
        return Err(Error::Format(format!(
            "CSV has {} rows, grid has {} nodes",
            components[0].len(),
            grid.len()
        )));
    }
    Ok(FieldData { grid, components })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn field_round_trip_and_layout() {
        let g = Grid::new(&[4, 5], &[1.0, 2.0]).unwrap();
        let f = ScalarField::from_fn(g, |p| (2.0 * PI * p[0]).sin() + p[1]).unwrap();
        let mut buf = Vec::new();
        write_field_to(&mut buf, &FieldData::scalar(&f)).unwrap();
        assert_eq!(&buf[..6], b"SRFLD1");
        assert_eq!(buf.len(), 6 + 4 + 2 * 8 + 2 * 8 + 4 + 20 * 8);
        // Second sample is node (0, 1).
        let off = 6 + 4 + 32 + 4 + 8;
        assert_eq!(f64::from_le_bytes(buf[off..off + 8].try_into().unwrap()), f.values()[1]);
        let back = read_field_from(&mut buf.as_slice()).unwrap().into_scalar().unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_corrupt_files() {
        let g = Grid::cube(4, 2).unwrap();
        let mut buf = Vec::new();
        write_field_to(&mut buf, &FieldData::scalar(&ScalarField::zeros(g))).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_field_from(&mut bad.as_slice()), Err(Error::Format(_))));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(read_field_from(&mut &short[..]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_field_from(&mut long.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn flow_round_trip() {
        let g = Grid::cube(4, 3).unwrap();
        let disp: Vec<[f64; 3]> = (0..g.len()).map(|i| [0.3 * i as f64, -1.2, 0.01]).collect();
        let logj: Vec<f64> = (0..g.len()).map(|i| 1e-3 * i as f64).collect();
        let flow = FlowMap::from_displacements(g, disp, logj, 0.75).unwrap();
        let mut buf = Vec::new();
        write_flow_to(&mut buf, &flow).unwrap();
        assert_eq!(&buf[..6], b"SRFLW1");
        let back = read_flow_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.positions(), flow.positions());
        assert_eq!(back.displacements(), flow.displacements());
        assert_eq!(back.log_jacobian(), flow.log_jacobian());
        assert_eq!(back.t_final(), 0.75);
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid::cube(4, 2).unwrap();
        let f = ScalarField::from_fn(g, |p| p[0] * 3.0 - p[1]).unwrap();
        let mut buf = Vec::new();
        export_csv_to(&mut buf, &FieldData::scalar(&f), &["u"]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y,u\n0,0,"));
        let back = import_csv_from(buf.as_slice(), g).unwrap().into_scalar().unwrap();
        assert_eq!(back, f);
    }
}
