//! Grid CSV format and small parsing helpers.
//!
//! Grid files are row-major over `(i, j)` with `j` fastest, one header row,
//! and full-precision locale-independent numbers (17 significant digits).
//! The base columns are `i, j, x1, x2, mask, d, nearest_s`; solution or
//! residual exports append extra columns. Mask coding: 0 outside,
//! 1 interior, 2 boundary-adjacent.

use crate::fields::DiscreteField;
use crate::mesh::{DiscreteDomain, Mask};
use crate::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Full-precision float formatting shared by every CSV/JSON writer.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn mask_code(m: Mask) -> u8 {
    match m {
        Mask::Outside => 0,
        Mask::Interior => 1,
        Mask::BoundaryAdjacent => 2,
    }
}

/// Write the domain plus any number of named extra columns.
pub fn write_grid_csv(
    path: &Path,
    dom: &DiscreteDomain,
    extra: &[(&str, &DiscreteField)],
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = String::from("i,j,x1,x2,mask,d,nearest_s");
    for (name, _) in extra {
        header.push(',');
        header.push_str(name);
    }
    writeln!(out, "{header}")?;
    let g = dom.grid;
    for ix in 0..g.nx {
        for iy in 0..g.ny {
            let idx = g.idx(ix, iy);
            let p = g.pos(ix, iy);
            let mut row = format!(
                "{},{},{},{},{},{},{}",
                ix,
                iy,
                fmt_f64(p[0]),
                fmt_f64(p[1]),
                mask_code(dom.mask[idx]),
                fmt_f64(dom.distance[idx]),
                fmt_f64(dom.nearest_s[idx]),
            );
            for (_, f) in extra {
                row.push(',');
                row.push_str(&fmt_f64(f.values[idx]));
            }
            writeln!(out, "{row}")?;
        }
    }
    Ok(())
}

/// Read a polyline from a CSV with columns `x1,x2` (header optional).
pub fn read_polyline_csv(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = std::fs::read_to_string(path)?;
    let mut pts = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() < 2 {
            return Err(Error::input(format!("{}:{}: expected `x1,x2`", path.display(), ln + 1)));
        }
        match (cols[0].parse::<f64>(), cols[1].parse::<f64>()) {
            (Ok(a), Ok(b)) => pts.push([a, b]),
            _ if ln == 0 => continue, // header row
            _ => {
                return Err(Error::input(format!(
                    "{}:{}: cannot parse `{line}` as two numbers",
                    path.display(),
                    ln + 1
                )))
            }
        }
    }
    Ok(pts)
}

/// Read a numeric CSV with a header; returns (header, rows).
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::input(format!("{}: empty file", path.display())))?
        .split(',')
        .map(|c| c.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let mut row = Vec::with_capacity(header.len());
        for col in line.split(',') {
            let col = col.trim();
            let v = if col == "nan" {
                f64::NAN
            } else {
                col.parse::<f64>().map_err(|_| {
                    Error::input(format!(
                        "{}:{}: cannot parse `{col}` as a number",
                        path.display(),
                        ln + 2
                    ))
                })?
            };
            row.push(v);
        }
        rows.push(row);
    }
    Ok((header, rows))
}
