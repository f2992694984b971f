//! Turn a parsed [`RunConfig`] into the core objects: chart, boundary
//! polyline, prescribed curvature, and Dirichlet data.

use crate::config::{BoundarySpec, CurvatureSpec, DomainShape, GeometrySpec, RunConfig};
use anyhow::{anyhow, bail, Context, Result};
use pmcgraph::conditions::PrescribedCurvature;
use pmcgraph::fields::BoundaryData;
use pmcgraph::geometry::{Christoffel, GeometryChart, Sym2, Vec2};
use pmcgraph::io::{read_numeric_csv, read_polyline_csv};
use pmcgraph::mesh::Polyline;
use std::path::Path;

pub fn build_chart(spec: &GeometrySpec) -> Result<GeometryChart> {
    match spec {
        GeometrySpec::Preset(name) => Ok(GeometryChart::preset(name)?),
        GeometrySpec::Table(path) => chart_from_table(path),
    }
}

/// Tabulated geometry: per-node metric components and warping factor on a
/// structured grid, bilinearly interpolated; derivative data falls back to
/// finite differences inside the chart.
fn chart_from_table(path: &Path) -> Result<GeometryChart> {
    let (header, rows) =
        read_numeric_csv(path).with_context(|| format!("geometry table `{}`", path.display()))?;
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("geometry table misses column `{name}`"))
    };
    let (ci, cj) = (col("i")?, col("j")?);
    let (cx, cy) = (col("x1")?, col("x2")?);
    let (c11, c12, c22, cr) = (col("g11")?, col("g12")?, col("g22")?, col("rho")?);
    let ni = rows.iter().map(|r| r[ci] as usize).max().unwrap_or(0) + 1;
    let nj = rows.iter().map(|r| r[cj] as usize).max().unwrap_or(0) + 1;
    if rows.len() != ni * nj {
        bail!("geometry table is not a full {ni} x {nj} lattice");
    }
    let mut g11 = vec![0.0; ni * nj];
    let mut g12 = vec![0.0; ni * nj];
    let mut g22 = vec![0.0; ni * nj];
    let mut rho = vec![0.0; ni * nj];
    let (mut x0, mut y0, mut x1, mut y1) =
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for r in &rows {
        let (i, j) = (r[ci] as usize, r[cj] as usize);
        let k = i * nj + j;
        g11[k] = r[c11];
        g12[k] = r[c12];
        g22[k] = r[c22];
        rho[k] = r[cr];
        x0 = x0.min(r[cx]);
        y0 = y0.min(r[cy]);
        x1 = x1.max(r[cx]);
        y1 = y1.max(r[cy]);
    }
    let hx = (x1 - x0) / (ni - 1) as f64;
    let hy = (y1 - y0) / (nj - 1) as f64;
    let interp = move |table: Vec<f64>| {
        move |p: Vec2| -> f64 {
            let fx = ((p[0] - x0) / hx).clamp(0.0, (ni - 1) as f64 - 1e-9);
            let fy = ((p[1] - y0) / hy).clamp(0.0, (nj - 1) as f64 - 1e-9);
            let (i, j) = (fx.floor() as usize, fy.floor() as usize);
            let (tx, ty) = (fx - i as f64, fy - j as f64);
            table[i * nj + j] * (1.0 - tx) * (1.0 - ty)
                + table[(i + 1) * nj + j] * tx * (1.0 - ty)
                + table[i * nj + j + 1] * (1.0 - tx) * ty
                + table[(i + 1) * nj + j + 1] * tx * ty
        }
    };

    // Derivative fields are differenced on the lattice (where the data is
    // smooth node to node) and then interpolated; differencing the
    // bilinear interpolant itself would sample its cell-boundary kinks.
    let clamp_i = |i: isize| -> usize { i.clamp(0, ni as isize - 1) as usize };
    let clamp_j = |j: isize| -> usize { j.clamp(0, nj as isize - 1) as usize };
    let node_dx = |t: &[f64], i: usize, j: usize| -> f64 {
        let (ip, im) = (clamp_i(i as isize + 1), clamp_i(i as isize - 1));
        (t[ip * nj + j] - t[im * nj + j]) / ((ip - im) as f64 * hx)
    };
    let node_dy = |t: &[f64], i: usize, j: usize| -> f64 {
        let (jp, jm) = (clamp_j(j as isize + 1), clamp_j(j as isize - 1));
        (t[i * nj + jp] - t[i * nj + jm]) / ((jp - jm) as f64 * hy)
    };

    // Christoffel symbols per node from the metric differences.
    let g_at = |i: usize, j: usize| Sym2 { xx: g11[i * nj + j], xy: g12[i * nj + j], yy: g22[i * nj + j] };
    let comp = |t: &Sym2, a: usize, b: usize| match (a, b) {
        (0, 0) => t.xx,
        (1, 1) => t.yy,
        _ => t.xy,
    };
    let mut gamma_nodes: Vec<[Sym2; 2]> = vec![[Sym2::ZERO; 2]; ni * nj];
    for i in 0..ni {
        for j in 0..nj {
            let dg = [
                Sym2 {
                    xx: node_dx(&g11, i, j),
                    xy: node_dx(&g12, i, j),
                    yy: node_dx(&g22, i, j),
                },
                Sym2 {
                    xx: node_dy(&g11, i, j),
                    xy: node_dy(&g12, i, j),
                    yy: node_dy(&g22, i, j),
                },
            ];
            let gi = g_at(i, j).inverse();
            let gi_at = |a: usize, b: usize| comp(&gi, a, b);
            let mut gm = [Sym2::ZERO; 2];
            for k in 0..2 {
                let mut vals = [[0.0; 2]; 2];
                for a in 0..2 {
                    for b in a..2 {
                        let mut s = 0.0;
                        for l in 0..2 {
                            s += gi_at(k, l)
                                * (comp(&dg[a], b, l) + comp(&dg[b], a, l) - comp(&dg[l], a, b));
                        }
                        vals[a][b] = 0.5 * s;
                    }
                }
                gm[k] = Sym2 { xx: vals[0][0], xy: vals[0][1], yy: vals[1][1] };
            }
            gamma_nodes[i * nj + j] = gm;
        }
    }

    // Gauss curvature per node from lattice differences of the Christoffel
    // symbols, then Ric = K g.
    let mut kg = vec![0.0; ni * nj];
    for i in 0..ni {
        for j in 0..nj {
            let (ip, im) = (clamp_i(i as isize + 1), clamp_i(i as isize - 1));
            let (jp, jm) = (clamp_j(j as isize + 1), clamp_j(j as isize - 1));
            let dx_gamma = |k: usize, a: usize, b: usize| {
                (comp(&gamma_nodes[ip * nj + j][k], a, b)
                    - comp(&gamma_nodes[im * nj + j][k], a, b))
                    / ((ip - im) as f64 * hx)
            };
            let dy_gamma = |k: usize, a: usize, b: usize| {
                (comp(&gamma_nodes[i * nj + jp][k], a, b)
                    - comp(&gamma_nodes[i * nj + jm][k], a, b))
                    / ((jp - jm) as f64 * hy)
            };
            let g0 = &gamma_nodes[i * nj + j];
            // R^k_{1 0 1} = d_0 Gamma^k_{1 1} - d_1 Gamma^k_{0 1} + products
            let mut riem = [0.0; 2];
            for k in 0..2 {
                let mut v = dx_gamma(k, 1, 1) - dy_gamma(k, 0, 1);
                for m in 0..2 {
                    v += comp(&g0[k], 0, m) * comp(&g0[m], 1, 1)
                        - comp(&g0[k], 1, m) * comp(&g0[m], 0, 1);
                }
                riem[k] = v;
            }
            let g = g_at(i, j);
            let r0101 = g.xx * riem[0] + g.xy * riem[1];
            kg[i * nj + j] = r0101 / g.det();
        }
    }

    // rho derivatives per node (covariant Hessian uses the node gammas)
    let mut rho_dx = vec![0.0; ni * nj];
    let mut rho_dy = vec![0.0; ni * nj];
    let mut rho_hxx = vec![0.0; ni * nj];
    let mut rho_hxy = vec![0.0; ni * nj];
    let mut rho_hyy = vec![0.0; ni * nj];
    for i in 0..ni {
        for j in 0..nj {
            let dx = node_dx(&rho, i, j);
            let dy = node_dy(&rho, i, j);
            rho_dx[i * nj + j] = dx;
            rho_dy[i * nj + j] = dy;
            let (ip, im) = (clamp_i(i as isize + 1), clamp_i(i as isize - 1));
            let (jp, jm) = (clamp_j(j as isize + 1), clamp_j(j as isize - 1));
            let hxx = (rho[ip * nj + j] - 2.0 * rho[i * nj + j] + rho[im * nj + j]) / (hx * hx);
            let hyy = (rho[i * nj + jp] - 2.0 * rho[i * nj + j] + rho[i * nj + jm]) / (hy * hy);
            let hxy = (rho[ip * nj + jp] - rho[ip * nj + jm] - rho[im * nj + jp]
                + rho[im * nj + jm])
                / ((ip - im) as f64 * hx * (jp - jm) as f64 * hy);
            let g0 = &gamma_nodes[i * nj + j];
            rho_hxx[i * nj + j] = hxx - (g0[0].xx * dx + g0[1].xx * dy);
            rho_hxy[i * nj + j] = hxy - (g0[0].xy * dx + g0[1].xy * dy);
            rho_hyy[i * nj + j] = hyy - (g0[0].yy * dx + g0[1].yy * dy);
        }
    }

    let f11 = interp(g11.clone());
    let f12 = interp(g12.clone());
    let f22 = interp(g22.clone());
    let frho = interp(rho);
    let fg11 = interp(g11);
    let fg12 = interp(g12);
    let fg22 = interp(g22);
    let fkg = interp(kg);
    let frdx = interp(rho_dx);
    let frdy = interp(rho_dy);
    let frhxx = interp(rho_hxx);
    let frhxy = interp(rho_hxy);
    let frhyy = interp(rho_hyy);
    let mut gflat: Vec<Vec<f64>> = vec![vec![0.0; ni * nj]; 6];
    for (k, t) in gamma_nodes.iter().enumerate() {
        gflat[0][k] = t[0].xx;
        gflat[1][k] = t[0].xy;
        gflat[2][k] = t[0].yy;
        gflat[3][k] = t[1].xx;
        gflat[4][k] = t[1].xy;
        gflat[5][k] = t[1].yy;
    }
    let mut giter = gflat.into_iter().map(interp);
    let (c0xx, c0xy, c0yy) =
        (giter.next().unwrap(), giter.next().unwrap(), giter.next().unwrap());
    let (c1xx, c1xy, c1yy) =
        (giter.next().unwrap(), giter.next().unwrap(), giter.next().unwrap());

    let scale = (x1 - x0).max(y1 - y0);
    // stay a grid cell away from the table edge so stencils have room
    let (gx0, gy0, gx1, gy1) = (x0 + hx, y0 + hy, x1 - hx, y1 - hy);
    let chart = GeometryChart::custom(
        format!("table:{}", path.display()),
        Box::new(move |p| Sym2 { xx: f11(p), xy: f12(p), yy: f22(p) }),
        Box::new(frho),
        Box::new(move |p| p[0] >= gx0 && p[0] <= gx1 && p[1] >= gy0 && p[1] <= gy1),
        scale,
    )
    .with_derivative_callbacks(
        Some(Box::new(move |p| [frdx(p), frdy(p)])),
        Some(Box::new(move |p| Sym2 { xx: frhxx(p), xy: frhxy(p), yy: frhyy(p) })),
        Some(Box::new(move |p| {
            let k = fkg(p);
            Sym2 { xx: k * fg11(p), xy: k * fg12(p), yy: k * fg22(p) }
        })),
        Some(Box::new(move |p| Christoffel {
            gamma: [
                Sym2 { xx: c0xx(p), xy: c0xy(p), yy: c0yy(p) },
                Sym2 { xx: c1xx(p), xy: c1xy(p), yy: c1yy(p) },
            ],
        })),
    );
    Ok(chart)
}

pub fn build_polyline(cfg: &RunConfig) -> Result<Polyline> {
    match &cfg.domain {
        DomainShape::Disk { center, radius } => {
            Ok(Polyline::circle(*center, *radius, cfg.boundary_segments))
        }
        DomainShape::Rectangle { x1, x2 } => Ok(Polyline::rectangle(x1[0], x1[1], x2[0], x2[1])),
        DomainShape::PolylinePath(path) => {
            let pts = read_polyline_csv(path)
                .with_context(|| format!("boundary polyline `{}`", path.display()))?;
            Ok(Polyline::new(pts)?)
        }
    }
}

fn spatial_fn(name: &str) -> Result<Box<dyn Fn(Vec2) -> f64 + Send + Sync>> {
    Ok(match name {
        "one" => Box::new(|_| 1.0),
        "x1" => Box::new(|p: Vec2| p[0]),
        "x2" => Box::new(|p: Vec2| p[1]),
        "radial" => Box::new(|p: Vec2| (p[0] * p[0] + p[1] * p[1]).sqrt()),
        "sin_x1" => Box::new(|p: Vec2| p[0].sin()),
        other => bail!("unknown spatial function `{other}` in [curvature]"),
    })
}

fn spatial_grad(name: &str) -> Result<Box<dyn Fn(Vec2) -> Vec2 + Send + Sync>> {
    Ok(match name {
        "one" => Box::new(|_| [0.0, 0.0]),
        "x1" => Box::new(|_| [1.0, 0.0]),
        "x2" => Box::new(|_| [0.0, 1.0]),
        "radial" => Box::new(|p: Vec2| {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt().max(1e-300);
            [p[0] / r, p[1] / r]
        }),
        "sin_x1" => Box::new(|p: Vec2| [p[0].cos(), 0.0]),
        other => bail!("unknown spatial function `{other}` in [curvature]"),
    })
}

pub fn build_curvature(spec: &CurvatureSpec) -> Result<PrescribedCurvature> {
    match spec {
        CurvatureSpec::Family { c0, c1, spatial, c2, z0 } => {
            let (c0, c1, c2, z0) = (*c0, *c1, *c2, *z0);
            if z0 == 0.0 {
                bail!("[curvature] z0 must be nonzero");
            }
            let s = spatial_fn(spatial)?;
            let ds = spatial_grad(spatial)?;
            let h = PrescribedCurvature::new(move |x, z| c0 + c1 * s(x) + c2 * (z / z0).tanh())
                .with_grad(
                    move |x, _| {
                        let g = ds(x);
                        [c1 * g[0], c1 * g[1]]
                    },
                    move |_, z| {
                        let t = (z / z0).tanh();
                        c2 * (1.0 - t * t) / z0
                    },
                );
            Ok(h)
        }
        CurvatureSpec::Table(path) => curvature_from_table(path),
    }
}

/// Tabulated curvature on an (x1, x2, z) lattice in long CSV form,
/// trilinearly interpolated; derivatives fall back to finite differences.
fn curvature_from_table(path: &Path) -> Result<PrescribedCurvature> {
    let (header, rows) =
        read_numeric_csv(path).with_context(|| format!("curvature table `{}`", path.display()))?;
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("curvature table misses column `{name}`"))
    };
    let (cx, cy, cz, ch) = (col("x1")?, col("x2")?, col("z")?, col("h")?);
    let mut xs: Vec<f64> = rows.iter().map(|r| r[cx]).collect();
    let mut ys: Vec<f64> = rows.iter().map(|r| r[cy]).collect();
    let mut zs: Vec<f64> = rows.iter().map(|r| r[cz]).collect();
    for v in [&mut xs, &mut ys, &mut zs] {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    }
    let (nx, ny, nz) = (xs.len(), ys.len(), zs.len());
    if rows.len() != nx * ny * nz {
        bail!("curvature table is not a full {nx} x {ny} x {nz} lattice");
    }
    let locate = |v: f64, axis: &[f64]| -> usize {
        axis.iter().position(|a| (a - v).abs() < 1e-12).unwrap_or(usize::MAX)
    };
    let mut table = vec![f64::NAN; nx * ny * nz];
    for r in &rows {
        let (i, j, k) = (locate(r[cx], &xs), locate(r[cy], &ys), locate(r[cz], &zs));
        if i == usize::MAX || j == usize::MAX || k == usize::MAX {
            bail!("curvature table coordinates do not form a lattice");
        }
        table[(i * ny + j) * nz + k] = r[ch];
    }
    if table.iter().any(|v| v.is_nan()) {
        bail!("curvature table has missing lattice entries");
    }
    let bracket = move |axis: &[f64], v: f64| -> (usize, f64) {
        let m = axis.len();
        if v <= axis[0] {
            return (0, 0.0);
        }
        if v >= axis[m - 1] {
            return (m - 2, 1.0);
        }
        let i = axis.partition_point(|a| *a <= v).saturating_sub(1).min(m - 2);
        ((i), (v - axis[i]) / (axis[i + 1] - axis[i]))
    };
    let (z_min, z_max) = (zs[0], zs[nz - 1]);
    let h = move |x: Vec2, z: f64| -> f64 {
        let (i, tx) = bracket(&xs, x[0]);
        let (j, ty) = bracket(&ys, x[1]);
        let (k, tz) = bracket(&zs, z);
        let at = |di: usize, dj: usize, dk: usize| table[((i + di) * ny + j + dj) * nz + k + dk];
        let c00 = at(0, 0, 0) * (1.0 - tz) + at(0, 0, 1) * tz;
        let c01 = at(0, 1, 0) * (1.0 - tz) + at(0, 1, 1) * tz;
        let c10 = at(1, 0, 0) * (1.0 - tz) + at(1, 0, 1) * tz;
        let c11 = at(1, 1, 0) * (1.0 - tz) + at(1, 1, 1) * tz;
        (c00 * (1.0 - ty) + c01 * ty) * (1.0 - tx) + (c10 * (1.0 - ty) + c11 * ty) * tx
    };
    Ok(PrescribedCurvature::new(h).with_bounds(z_min, z_max))
}

pub fn build_boundary(spec: &BoundarySpec) -> Result<BoundaryData> {
    match spec {
        BoundarySpec::Linear { a0, a1, a2 } => Ok(BoundaryData::linear(*a0, *a1, *a2)),
        BoundarySpec::VertexTable(path) => {
            let (header, rows) = read_numeric_csv(path)
                .with_context(|| format!("boundary table `{}`", path.display()))?;
            let cs = header
                .iter()
                .position(|h| h == "s")
                .ok_or_else(|| anyhow!("boundary table misses column `s`"))?;
            let cp = header
                .iter()
                .position(|h| h == "phi")
                .ok_or_else(|| anyhow!("boundary table misses column `phi`"))?;
            Ok(BoundaryData::vertex_table(
                rows.iter().map(|r| (r[cs], r[cp])).collect(),
            )?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_curvature_matches_formula() {
        let spec = CurvatureSpec::Family {
            c0: 0.3,
            c1: 0.5,
            spatial: "x1".into(),
            c2: 0.2,
            z0: 2.0,
        };
        let h = build_curvature(&spec).unwrap();
        let v = h.value([1.5, 0.0], 1.0);
        assert!((v - (0.3 + 0.75 + 0.2 * (0.5f64).tanh())).abs() < 1e-14);
        // analytic derivatives wired through
        assert!((h.dz([1.5, 0.0], 0.0) - 0.1).abs() < 1e-14);
        assert_eq!(h.grad_x([9.9, 3.2], 0.4), [0.5, 0.0]);
    }

    #[test]
    fn tabulated_geometry_approximates_preset() {
        // tabulate the hyperbolic leaf and compare derived quantities
        let dir = std::env::temp_dir().join("pmcgraph_cli_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("geom.csv");
        let mut text = String::from("i,j,x1,x2,g11,g12,g22,rho\n");
        let n = 41;
        for i in 0..n {
            for j in 0..n {
                let x = -0.5 + 2.0 * i as f64 / (n - 1) as f64;
                let t = 0.5 + 2.0 * j as f64 / (n - 1) as f64;
                let w = 1.0 / (t * t);
                text.push_str(&format!("{i},{j},{x},{t},{w},0,{w},{}\n", 1.0 / t));
            }
        }
        std::fs::write(&path, text).unwrap();
        let chart = chart_from_table(&path).unwrap();
        let exact = GeometryChart::hyperbolic_leaf();
        let x = [0.3, 1.5];
        let r_tab = chart.rho(x).unwrap();
        let r_exact = exact.rho(x).unwrap();
        assert!((r_tab - r_exact).abs() / r_exact < 1e-3);
        let ric = chart.ambient_ricci_min(x).unwrap();
        assert!((ric + 2.0).abs() < 0.15, "tabulated ambient Ricci {ric} far from -2");
    }

    #[test]
    fn tabulated_curvature_interpolates() {
        let dir = std::env::temp_dir().join("pmcgraph_cli_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("h.csv");
        let mut text = String::from("x1,x2,z,h\n");
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..3 {
                    let x = i as f64 * 0.25;
                    let y = j as f64 * 0.25;
                    let z = k as f64 - 1.0;
                    text.push_str(&format!("{x},{y},{z},{}\n", x + 2.0 * y + 0.5 * z));
                }
            }
        }
        std::fs::write(&path, text).unwrap();
        let h = curvature_from_table(&path).unwrap();
        // trilinear interpolation reproduces affine data exactly
        let v = h.value([0.3, 0.6], 0.2);
        assert!((v - (0.3 + 1.2 + 0.1)).abs() < 1e-12, "got {v}");
        assert_eq!(h.z_min, -1.0);
        assert_eq!(h.z_max, 1.0);
    }
}
