//! On-disk artifacts: CSV tables, legacy ASCII VTK fields, JSON reports and
//! a gnuplot script. Every file is written to a temporary sibling and
//! renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::discretization::StrainField;
use crate::error::Result;
use crate::mesh::Mesh;
use crate::tensor::SymTensor3;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp: PathBuf = path.to_path_buf();
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    tmp.set_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| crate::Error::Input(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Shortest round-trip formatting, so reruns produce identical bytes.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Debug, Clone, Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, cells: impl IntoIterator<Item = String>) {
        let cells: Vec<String> = cells.into_iter().collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn numbers(&mut self, values: &[f64]) {
        self.row(values.iter().map(|v| num(*v)));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.text.as_bytes())
    }
}

/// Field data attached to a legacy VTK unstructured grid.
pub enum VtkData<'a> {
    PointScalar(&'a str, &'a [f64]),
    /// Interleaved `(u_x, u_y)` per node.
    PointVector(&'a str, &'a [f64]),
    CellTensor(&'a str, &'a StrainField),
}

pub fn vtk(mesh: &Mesh, title: &str, data: &[VtkData<'_>]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 2.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.node_count());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{} {} 0", num(p[0]), num(p[1]));
    }
    let ne = mesh.element_count();
    let _ = writeln!(s, "CELLS {ne} {}", 4 * ne);
    for e in &mesh.elements {
        let _ = writeln!(s, "3 {} {} {}", e.nodes[0], e.nodes[1], e.nodes[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    for _ in 0..ne {
        s.push_str("5\n");
    }
    let (mut point_started, mut cell_started) = (false, false);
    for d in data.iter().filter(|d| !matches!(d, VtkData::CellTensor(..))) {
        if !point_started {
            let _ = writeln!(s, "POINT_DATA {}", mesh.node_count());
            point_started = true;
        }
        match d {
            VtkData::PointScalar(name, v) => {
                let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                for x in v.iter() {
                    let _ = writeln!(s, "{}", num(*x));
                }
            }
            VtkData::PointVector(name, v) => {
                let _ = writeln!(s, "VECTORS {name} double");
                for c in v.chunks(2) {
                    let _ = writeln!(s, "{} {} 0", num(c[0]), num(c[1]));
                }
            }
            VtkData::CellTensor(..) => {}
        }
    }
    for d in data {
        if let VtkData::CellTensor(name, field) = d {
            if !cell_started {
                let _ = writeln!(s, "CELL_DATA {ne}");
                cell_started = true;
            }
            let _ = writeln!(s, "TENSORS {name} double");
            for v in field.iter() {
                let m = SymTensor3::from_plane(v).to_matrix();
                for r in 0..3 {
                    let _ = writeln!(s, "{} {} {}", num(m[(r, 0)]), num(m[(r, 1)]), num(m[(r, 2)]));
                }
            }
        }
    }
    s
}

/// Gnuplot script plotting the CSV files of a run directory.
pub fn plot_script(run_files: &[(&str, &str, &[&str])]) -> String {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n");
    for (file, x, ys) in run_files {
        let stem = file.trim_end_matches(".csv");
        let _ = writeln!(s, "\nset output '{stem}.png'\nset xlabel '{x}'");
        let parts: Vec<String> = ys.iter().map(|y| format!("'{file}' using '{x}':'{y}' with lines")).collect();
        let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    }
    s
}
