//! Convergence tables, rate files and legacy VTK output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::afem::{Rates, RunRecord};
use crate::estimator::EstimatorReport;
use crate::mesh::Mesh;
use crate::recovery::RecoveredField;
use crate::solver::CoupledState;
use crate::{Error, Result};

pub const CSV_HEADER: &str = "step,dofs,h_max,e_phi,e_p1,e_p2,eta_phi,eta_p1,eta_p2,eff_phi,eff_p1,eff_p2";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

/// Write records in the fixed two-species schema.
pub fn write_convergence_csv<W: Write>(records: &[RunRecord], mut w: W) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no records to write".into()));
    }
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        if r.eta.len() != 3 {
            return Err(Error::InvalidConfig(format!(
                "convergence table expects 2 species, record has {}",
                r.eta.len() - 1
            )));
        }
        let e = |k: usize| opt(r.errors.as_ref().map(|v| v[k]));
        let f = |k: usize| opt(r.effectivity.as_ref().map(|v| v[k]));
        writeln!(
            w,
            "{},{},{:.12e},{},{},{},{:.12e},{:.12e},{:.12e},{},{},{}",
            r.step,
            r.dofs,
            r.h_max,
            e(0),
            e(1),
            e(2),
            r.eta[0],
            r.eta[1],
            r.eta[2],
            f(0),
            f(1),
            f(2)
        )?;
    }
    Ok(())
}

pub fn write_convergence_csv_file(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_convergence_csv(records, &mut w)?;
    w.flush()?;
    Ok(())
}

/// One parsed CSV row; `None` for empty fields.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub step: usize,
    pub dofs: usize,
    pub h_max: f64,
    pub errors: [Option<f64>; 3],
    pub eta: [f64; 3],
    pub effectivity: [Option<f64>; 3],
}

pub fn read_convergence_csv<R: BufRead>(r: R) -> Result<Vec<CsvRow>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?;
    if header.as_deref() != Some(CSV_HEADER) {
        return Err(Error::Parse("missing or unexpected header".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
    let optnum = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(Error::Parse(format!("expected 12 fields, got {}", f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
        rows.push(CsvRow {
            step: int(f[0])?,
            dofs: int(f[1])?,
            h_max: num(f[2])?,
            errors: [optnum(f[3])?, optnum(f[4])?, optnum(f[5])?],
            eta: [num(f[6])?, num(f[7])?, num(f[8])?],
            effectivity: [optnum(f[9])?, optnum(f[10])?, optnum(f[11])?],
        });
    }
    Ok(rows)
}

pub fn read_convergence_csv_file(path: &Path) -> Result<Vec<CsvRow>> {
    read_convergence_csv(BufReader::new(File::open(path)?))
}

/// `quantity=slope` lines.
pub fn write_rates<W: Write>(rates: &Rates, mut w: W) -> Result<()> {
    for (name, slope) in &rates.entries {
        writeln!(w, "{name}={slope:.6}")?;
    }
    Ok(())
}

pub fn read_rates<R: BufRead>(r: R) -> Result<Rates> {
    let mut entries = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("no `=` in `{line}`")))?;
        let v = v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{v}`: {e}")))?;
        entries.push((k.trim().to_string(), v));
    }
    Ok(Rates { entries })
}

/// Legacy ASCII VTK unstructured grid with nodal fields, per-element
/// indicators and optional recovered vector fields.
pub fn write_vtk<W: Write>(
    mesh: &Mesh,
    state: &CoupledState,
    report: Option<&EstimatorReport>,
    vectors: &[(&str, &RecoveredField)],
    mut w: W,
) -> Result<()> {
    state.check_mesh(mesh)?;
    let nv = mesh.n_vertices();
    let nt = mesh.n_triangles();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "pnp-afem step")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {nv} double")?;
    for p in mesh.vertices() {
        writeln!(w, "{:.16e} {:.16e} 0", p[0], p[1])?;
    }
    writeln!(w, "CELLS {nt} {}", 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {nv}")?;
    let scalar = |w: &mut W, name: &str, values: &[f64]| -> Result<()> {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in values {
            writeln!(w, "{v:.16e}")?;
        }
        Ok(())
    };
    scalar(&mut w, "phi", state.phi.coefficients())?;
    for (i, p) in state.p.iter().enumerate() {
        scalar(&mut w, &format!("p{}", i + 1), p.coefficients())?;
    }
    for (name, field) in vectors {
        field.check_mesh(mesh)?;
        writeln!(w, "VECTORS {name} double")?;
        for v in field.values() {
            writeln!(w, "{:.16e} {:.16e} 0", v[0], v[1])?;
        }
    }
    if let Some(r) = report {
        if r.mesh_id != mesh.id() {
            return Err(Error::MeshMismatch {
                expected: mesh.id(),
                found: r.mesh_id,
            });
        }
        writeln!(w, "CELL_DATA {nt}")?;
        scalar(&mut w, "eta_phi", &r.eta_phi)?;
        for (i, e) in r.eta_p.iter().enumerate() {
            scalar(&mut w, &format!("eta_p{}", i + 1), e)?;
        }
    }
    Ok(())
}

pub fn write_vtk_file(
    mesh: &Mesh,
    state: &CoupledState,
    report: Option<&EstimatorReport>,
    vectors: &[(&str, &RecoveredField)],
    path: &Path,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vtk(mesh, state, report, vectors, &mut w)?;
    w.flush()?;
    Ok(())
}
