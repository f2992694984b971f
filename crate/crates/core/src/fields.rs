//! Scalar fields on grid nodes and Dirichlet boundary data.

use crate::geometry::{GeometryChart, Sym2, Vec2};
use crate::mesh::DiscreteDomain;
use crate::{Error, Result};

/// Scalar field on grid nodes. Values at outside nodes are 0 unless a
/// routine fills them (for instance signed distances); consumers only read
/// inside nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(dom: &DiscreteDomain) -> DiscreteField {
        DiscreteField { values: vec![0.0; dom.grid.len()] }
    }

    pub fn from_fn(dom: &DiscreteDomain, f: impl Fn(Vec2) -> f64) -> DiscreteField {
        let values = (0..dom.grid.len())
            .map(|i| if dom.is_inside(i) { f(dom.node_pos(i)) } else { 0.0 })
            .collect();
        DiscreteField { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Infinity norm over inside nodes.
    pub fn sup_inside(&self, dom: &DiscreteDomain) -> f64 {
        dom.inside_nodes().map(|i| self.values[i].abs()).fold(0.0, f64::max)
    }

    /// Worst node of |self - other| over inside nodes.
    pub fn sup_diff(&self, other: &DiscreteField, dom: &DiscreteDomain) -> (f64, usize) {
        let mut worst = (0.0f64, 0usize);
        for i in dom.inside_nodes() {
            let d = (self.values[i] - other.values[i]).abs();
            if d > worst.0 {
                worst = (d, i);
            }
        }
        worst
    }

    /// Bilinear interpolation at a chart point; the four surrounding nodes
    /// must carry values (inside nodes). Returns None at uncovered points.
    pub fn interp(&self, dom: &DiscreteDomain, p: Vec2) -> Option<f64> {
        let g = dom.grid;
        let fx = (p[0] - g.x0) / g.hx;
        let fy = (p[1] - g.y0) / g.hy;
        let ix = fx.floor() as isize;
        let iy = fy.floor() as isize;
        if ix < 0 || iy < 0 || ix + 1 >= g.nx as isize || iy + 1 >= g.ny as isize {
            return None;
        }
        let (ix, iy) = (ix as usize, iy as usize);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let ids = [
            g.idx(ix, iy),
            g.idx(ix + 1, iy),
            g.idx(ix, iy + 1),
            g.idx(ix + 1, iy + 1),
        ];
        if !ids.iter().all(|&i| dom.is_inside(i)) {
            return None;
        }
        let v = &self.values;
        Some(
            v[ids[0]] * (1.0 - tx) * (1.0 - ty)
                + v[ids[1]] * tx * (1.0 - ty)
                + v[ids[2]] * (1.0 - tx) * ty
                + v[ids[3]] * tx * ty,
        )
    }
}

type ExtFn = Box<dyn Fn(Vec2) -> f64 + Send + Sync>;
type ExtGradFn = Box<dyn Fn(Vec2) -> Vec2 + Send + Sync>;
type ExtHessFn = Box<dyn Fn(Vec2) -> Sym2 + Send + Sync>;

/// Dirichlet boundary data. The extension variant is a chart-global
/// expression (the regularity the existence theory assumes); the vertex
/// table only knows values along the boundary and therefore cannot feed the
/// barrier machinery, which needs derivatives of the extension.
pub enum BoundaryData {
    /// Chart-global expression phi(x); its restriction to the boundary is
    /// the Dirichlet trace. Optional analytic first/second chart
    /// derivatives take precedence over the finite-difference fallback.
    Extension {
        f: ExtFn,
        grad: Option<ExtGradFn>,
        hess: Option<ExtHessFn>,
    },
    /// Piecewise-linear values over boundary arclength (s_i, phi_i), sorted.
    VertexTable(Vec<(f64, f64)>),
}

impl BoundaryData {
    pub fn constant(c: f64) -> BoundaryData {
        BoundaryData::Extension {
            f: Box::new(move |_| c),
            grad: Some(Box::new(|_| [0.0, 0.0])),
            hess: Some(Box::new(|_| Sym2::ZERO)),
        }
    }

    pub fn expr(f: impl Fn(Vec2) -> f64 + Send + Sync + 'static) -> BoundaryData {
        BoundaryData::Extension { f: Box::new(f), grad: None, hess: None }
    }

    /// Affine extension with exact derivatives.
    pub fn linear(a0: f64, a1: f64, a2: f64) -> BoundaryData {
        BoundaryData::Extension {
            f: Box::new(move |p| a0 + a1 * p[0] + a2 * p[1]),
            grad: Some(Box::new(move |_| [a1, a2])),
            hess: Some(Box::new(|_| Sym2::ZERO)),
        }
    }

    /// Attach analytic chart derivatives to an expression extension.
    pub fn with_derivatives(
        self,
        grad: impl Fn(Vec2) -> Vec2 + Send + Sync + 'static,
        hess: impl Fn(Vec2) -> Sym2 + Send + Sync + 'static,
    ) -> BoundaryData {
        match self {
            BoundaryData::Extension { f, .. } => BoundaryData::Extension {
                f,
                grad: Some(Box::new(grad)),
                hess: Some(Box::new(hess)),
            },
            other => other,
        }
    }

    pub fn vertex_table(mut rows: Vec<(f64, f64)>) -> Result<BoundaryData> {
        if rows.len() < 2 {
            return Err(Error::input("vertex table needs at least 2 rows"));
        }
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(BoundaryData::VertexTable(rows))
    }

    /// Trace value at a boundary point given by position and arclength.
    pub fn at_boundary(&self, point: Vec2, s: f64, total_len: f64) -> f64 {
        match self {
            BoundaryData::Extension { f, .. } => f(point),
            BoundaryData::VertexTable(rows) => {
                let s = s.rem_euclid(total_len);
                // wrap-around linear interpolation
                match rows.binary_search_by(|r| r.0.partial_cmp(&s).unwrap()) {
                    Ok(i) => rows[i].1,
                    Err(0) | Err(_) if s < rows[0].0 || s >= rows[rows.len() - 1].0 => {
                        let (s1, v1) = rows[rows.len() - 1];
                        let (s2, v2) = rows[0];
                        let gap = total_len - s1 + s2;
                        let t = if gap > 0.0 {
                            ((s - s1).rem_euclid(total_len)) / gap
                        } else {
                            0.0
                        };
                        v1 + t * (v2 - v1)
                    }
                    Err(i) => {
                        let (s1, v1) = rows[i - 1];
                        let (s2, v2) = rows[i];
                        let t = if s2 > s1 { (s - s1) / (s2 - s1) } else { 0.0 };
                        v1 + t * (v2 - v1)
                    }
                }
            }
        }
    }

    /// Chart-global extension value; errors for vertex tables.
    pub fn extension(&self, point: Vec2) -> Result<f64> {
        match self {
            BoundaryData::Extension { f, .. } => Ok(f(point)),
            BoundaryData::VertexTable(_) => Err(Error::Precondition(
                "boundary data given as a vertex table has no interior extension".into(),
            )),
        }
    }

    pub fn has_extension(&self) -> bool {
        matches!(self, BoundaryData::Extension { .. })
    }

    /// Chart gradient of the extension: analytic when provided, otherwise
    /// central differences.
    pub fn extension_grad(&self, point: Vec2, h: f64) -> Result<Vec2> {
        if let BoundaryData::Extension { grad: Some(g), .. } = self {
            return Ok(g(point));
        }
        let f = |p: Vec2| self.extension(p);
        Ok([
            (f([point[0] + h, point[1]])? - f([point[0] - h, point[1]])?) / (2.0 * h),
            (f([point[0], point[1] + h])? - f([point[0], point[1] - h])?) / (2.0 * h),
        ])
    }

    /// Chart second derivatives of the extension: analytic when provided,
    /// otherwise central differences.
    pub fn extension_second(&self, point: Vec2, h: f64) -> Result<Sym2> {
        if let BoundaryData::Extension { hess: Some(hs), .. } = self {
            return Ok(hs(point));
        }
        let f = |dx: f64, dy: f64| self.extension([point[0] + dx, point[1] + dy]);
        let f0 = f(0.0, 0.0)?;
        Ok(Sym2 {
            xx: (f(h, 0.0)? - 2.0 * f0 + f(-h, 0.0)?) / (h * h),
            yy: (f(0.0, h)? - 2.0 * f0 + f(0.0, -h)?) / (h * h),
            xy: (f(h, h)? - f(h, -h)? - f(-h, h)? + f(-h, -h)?) / (4.0 * h * h),
        })
    }

    /// Sup of |phi| over the closed domain (inside nodes plus boundary
    /// samples for tables).
    pub fn sup_abs(&self, dom: &DiscreteDomain) -> f64 {
        match self {
            BoundaryData::Extension { f, .. } => {
                let mut m = 0.0f64;
                for i in dom.inside_nodes() {
                    m = m.max(f(dom.node_pos(i)).abs());
                }
                let total = dom.boundary.total_len();
                for k in 0..256 {
                    let s = total * k as f64 / 256.0;
                    m = m.max(f(dom.boundary.point_at(s)).abs());
                }
                m
            }
            BoundaryData::VertexTable(rows) => {
                rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max)
            }
        }
    }

    /// Sup of |phi| over the boundary only.
    pub fn sup_abs_boundary(&self, dom: &DiscreteDomain) -> f64 {
        let total = dom.boundary.total_len();
        let mut m = 0.0f64;
        for k in 0..512 {
            let s = total * k as f64 / 512.0;
            let p = dom.boundary.point_at(s);
            m = m.max(self.at_boundary(p, s, total).abs());
        }
        m
    }

    /// C1 and C2 norm surrogates of the extension over the inside nodes,
    /// with gradient and Hessian measured in the metric g.
    pub fn c_norms(&self, dom: &DiscreteDomain, chart: &GeometryChart) -> Result<(f64, f64)> {
        let h = chart.fd_step();
        let mut c0 = 0.0f64;
        let mut grad_sup = 0.0f64;
        let mut hess_sup = 0.0f64;
        for i in dom.inside_nodes() {
            let p = dom.node_pos(i);
            let v = self.extension(p)?;
            let dg = self.extension_grad(p, h)?;
            let d2 = self.extension_second(p, h)?;
            let gamma = chart.christoffels(p)?;
            let corr = gamma.contract_covector(dg);
            let hess = Sym2 { xx: d2.xx - corr.xx, xy: d2.xy - corr.xy, yy: d2.yy - corr.yy };
            let g = chart.metric(p)?;
            let ginv = g.inverse();
            c0 = c0.max(v.abs());
            grad_sup = grad_sup.max(ginv.quad(dg).sqrt());
            hess_sup = hess_sup.max(hess.gen_eig_max_abs(&g));
        }
        let c1 = c0 + grad_sup;
        let c2 = c1 + hess_sup;
        Ok((c1, c2))
    }
}
