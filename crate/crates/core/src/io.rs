//! Snapshot files, trajectory directories, CSV tables and versioned JSON.
//!
//! A snapshot file is a fixed header followed by little-endian `f64` samples,
//! component-major, each component in row-major node order (last axis fastest):
//!
//! ```text
//! magic  b"PXSNAP01"
//! u32    dimension
//! u32    points per axis
//! f64    period L
//! u32    components
//! f64    time
//! f64 *  samples
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::flow::FlowMap;
use crate::grid::Grid;
use crate::parametrix::RemainderReport;
use crate::trajectory::Trajectory;

pub const SCHEMA_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PXSNAP01";

pub fn write_snapshot(path: &Path, field: &Field, time: f64) -> Result<()> {
    let grid = field.grid();
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    w.write_all(&(grid.n() as u32).to_le_bytes())?;
    w.write_all(&grid.length().to_le_bytes())?;
    w.write_all(&(field.ncomp() as u32).to_le_bytes())?;
    w.write_all(&time.to_le_bytes())?;
    for comp in field.components() {
        for v in comp {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot back as `(field, time)`.
pub fn read_snapshot(path: &Path) -> Result<(Field, f64)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let dim = cur.u32()? as usize;
    let n = cur.u32()? as usize;
    let length = cur.f64()?;
    let ncomp = cur.u32()? as usize;
    let time = cur.f64()?;
    let grid = Grid::new(dim, n, length)?;
    if ncomp == 0 || ncomp > 3 {
        return Err(Error::Format(format!("{}: {ncomp} components", path.display())));
    }
    let expected = cur.pos + 8 * ncomp * grid.len();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: expected {expected} bytes, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let mut comps = Vec::with_capacity(ncomp);
    for _ in 0..ncomp {
        comps.push((0..grid.len()).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?);
    }
    Ok((Field::new(grid, comps)?, time))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos + k;
        let out = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("truncated snapshot".into()))?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Node coordinates followed by every component, one node per line.
pub fn field_csv(field: &Field) -> String {
    let grid = field.grid();
    let axes = ["x", "y", "z"];
    let mut out = String::new();
    let mut header: Vec<String> = axes[..grid.dim()].iter().map(|s| s.to_string()).collect();
    header.extend((0..field.ncomp()).map(|c| format!("c{c}")));
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..grid.len() {
        let x = grid.node(i);
        let mut cells: Vec<String> = x[..grid.dim()].iter().map(|v| format!("{v:e}")).collect();
        cells.extend((0..field.ncomp()).map(|c| format!("{:e}", field.component(c)[i])));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub schema: u32,
    pub dim: usize,
    pub n: usize,
    pub length: f64,
    pub nu: f64,
    pub t0: f64,
    pub dt: f64,
    pub files: Vec<String>,
}

/// Writes `snap_XXXXX.bin` files and `manifest.json` into `dir`.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(traj.len());
    for (j, f) in traj.snapshots().iter().enumerate() {
        let name = format!("snap_{j:05}.bin");
        write_snapshot(&dir.join(&name), f, traj.time(j))?;
        files.push(name);
    }
    let grid = traj.grid();
    let manifest = TrajectoryManifest {
        schema: SCHEMA_VERSION,
        dim: grid.dim(),
        n: grid.n(),
        length: grid.length(),
        nu: traj.nu(),
        t0: traj.t0(),
        dt: traj.dt(),
        files,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn read_trajectory(dir: &Path) -> Result<Trajectory> {
    let manifest: TrajectoryManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.schema != SCHEMA_VERSION {
        return Err(Error::Format(format!("unsupported schema {}", manifest.schema)));
    }
    let grid = Grid::new(manifest.dim, manifest.n, manifest.length)?;
    let mut fields = Vec::with_capacity(manifest.files.len());
    for (j, name) in manifest.files.iter().enumerate() {
        let (f, t) = read_snapshot(&dir.join(name))?;
        if !f.grid().same_shape(&grid) {
            return Err(Error::Format(format!("{name}: grid differs from manifest")));
        }
        let expected = manifest.t0 + j as f64 * manifest.dt;
        if (t - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
            return Err(Error::Format(format!("{name}: time {t} but manifest expects {expected}")));
        }
        fields.push(f);
    }
    Trajectory::new(fields, manifest.t0, manifest.dt, manifest.nu)
}

/// Node, wrapped image and displacement of every grid point.
pub fn flow_csv(map: &FlowMap) -> String {
    let d = map.grid.dim();
    let axes = ["x", "y", "z"];
    let mut header: Vec<String> = axes[..d].iter().map(|a| a.to_string()).collect();
    header.extend(axes[..d].iter().map(|a| format!("theta_{a}")));
    header.extend(axes[..d].iter().map(|a| format!("disp_{a}")));
    let mut out = header.join(",") + "\n";
    for (i, (p, disp)) in map.points.iter().zip(&map.displacement).enumerate() {
        let x = map.grid.node(i);
        let cells: Vec<String> = x[..d]
            .iter()
            .chain(&p[..d])
            .chain(&disp[..d])
            .map(|v| format!("{v:e}"))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Remainder table; `zero_order` adds an `R2_zero_order` column aligned with `rows`.
pub fn remainder_csv(rows: &[RemainderReport], zero_order: Option<&[f64]>) -> Result<String> {
    if let Some(z) = zero_order {
        if z.len() != rows.len() {
            return Err(Error::SizeMismatch { expected: rows.len(), actual: z.len() });
        }
    }
    let mut out = String::from("n,k,t,R1,R2,R3,N1,N2,N3,epsilon");
    if zero_order.is_some() {
        out.push_str(",R2_zero_order");
    }
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        write!(
            out,
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.n, r.k, r.t, r.r1, r.r2, r.r3, r.n1, r.n2, r.n3, r.epsilon
        )
        .expect("write to string");
        if let Some(z) = zero_order {
            write!(out, ",{:e}", z[i]).expect("write to string");
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema: u32,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON of `value` with a leading `"schema": 1` field.
pub fn versioned_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Versioned { schema: SCHEMA_VERSION, body: value })? + "\n")
}

pub fn write_versioned_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, versioned_json(value)?)?;
    Ok(())
}

/// Creates `dir` (and parents) and returns it.
pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}
