//! Discrete representation of the bounded base domain.
//!
//! A domain is a structured grid over the bounding box of a closed boundary
//! polyline. Nodes are classified as outside, interior (full stencil) or
//! boundary-adjacent; boundary-adjacent nodes carry Shortley-Weller
//! fractional leg lengths to the true boundary so Dirichlet data can be
//! imposed at second order. The geodesic distance to the boundary is
//! computed by first-order fast marching on the base metric, with exact
//! initialization (point-to-boundary metric distance) in a band of a few
//! cells around the boundary, extended with negative sign one collar cell
//! outside so that centered stencils of `d` remain valid at
//! boundary-adjacent nodes. Nearest boundary feet are back-traced through
//! the upwind causality, and the largest band in which feet stay coherent
//! gives the reach estimate (discrete cut-locus detection).

use crate::geometry::{AmbientTerms, GeometryChart, Sym2, Vec2};
use crate::{Error, Result};
use std::collections::BinaryHeap;

/// Closed boundary polyline in chart coordinates, stored positively
/// oriented (counter-clockwise), with cumulative chart arclength.
#[derive(Debug, Clone)]
pub struct Polyline {
    pts: Vec<Vec2>,
    /// cum[i] = chart arclength from vertex 0 to vertex i; cum[m] = total.
    cum: Vec<f64>,
}

impl Polyline {
    pub fn new(mut pts: Vec<Vec2>) -> Result<Polyline> {
        pts.dedup_by(|a, b| a == b);
        if pts.len() >= 2 && pts.first() == pts.last() {
            pts.pop();
        }
        if pts.len() < 3 {
            return Err(Error::input("boundary polyline needs at least 3 distinct vertices"));
        }
        if signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        let mut poly = Polyline { pts, cum: Vec::new() };
        if !poly.is_simple() {
            return Err(Error::input("boundary polyline is self-intersecting"));
        }
        poly.rebuild_cum();
        Ok(poly)
    }

    /// Regular polygon approximation of a circle.
    pub fn circle(center: Vec2, radius: f64, segments: usize) -> Polyline {
        let m = segments.max(8);
        let pts = (0..m)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * (k as f64) / (m as f64);
                [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
            })
            .collect();
        Polyline::new(pts).expect("circle polyline is simple")
    }

    /// Axis-aligned rectangle, counter-clockwise.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Polyline {
        Polyline::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
            .expect("rectangle polyline is simple")
    }

    fn rebuild_cum(&mut self) {
        let m = self.pts.len();
        let mut cum = Vec::with_capacity(m + 1);
        cum.push(0.0);
        for i in 0..m {
            let a = self.pts[i];
            let b = self.pts[(i + 1) % m];
            let l = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            cum.push(cum[i] + l);
        }
        self.cum = cum;
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.pts
    }

    pub fn total_len(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn is_simple(&self) -> bool {
        let m = self.pts.len();
        for i in 0..m {
            let (a1, a2) = (self.pts[i], self.pts[(i + 1) % m]);
            for j in (i + 1)..m {
                // skip adjacent edges (shared vertex)
                if j == i || (j + 1) % m == i || (i + 1) % m == j {
                    continue;
                }
                let (b1, b2) = (self.pts[j], self.pts[(j + 1) % m]);
                if segments_intersect(a1, a2, b1, b2) {
                    return false;
                }
            }
        }
        true
    }

    /// Point on the polyline at arclength `s` (wrapped).
    pub fn point_at(&self, s: f64) -> Vec2 {
        let l = self.total_len();
        let mut t = s.rem_euclid(l);
        let m = self.pts.len();
        // binary search over cum
        let mut lo = 0usize;
        let mut hi = m;
        while lo + 1 < hi {
            let mid = (lo + hi) / 2;
            if self.cum[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        t -= self.cum[lo];
        let a = self.pts[lo];
        let b = self.pts[(lo + 1) % m];
        let len = self.cum[lo + 1] - self.cum[lo];
        let f = if len > 0.0 { t / len } else { 0.0 };
        [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
    }

    /// Even-odd containment test in chart coordinates.
    pub fn contains(&self, p: Vec2) -> bool {
        let m = self.pts.len();
        let mut inside = false;
        for i in 0..m {
            let a = self.pts[i];
            let b = self.pts[(i + 1) % m];
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let t = (p[1] - a[1]) / (b[1] - a[1]);
                let xi = a[0] + t * (b[0] - a[0]);
                if p[0] < xi {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Closest point on the polyline: returns (euclidean chart distance,
    /// arclength of the foot, foot point).
    pub fn project(&self, p: Vec2) -> (f64, f64, Vec2) {
        let m = self.pts.len();
        let mut best = (f64::INFINITY, 0.0, p);
        for i in 0..m {
            let a = self.pts[i];
            let b = self.pts[(i + 1) % m];
            let ab = [b[0] - a[0], b[1] - a[1]];
            let ap = [p[0] - a[0], p[1] - a[1]];
            let den = ab[0] * ab[0] + ab[1] * ab[1];
            let t = if den > 0.0 {
                ((ap[0] * ab[0] + ap[1] * ab[1]) / den).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            if d2 < best.0 {
                best = (d2, self.cum[i] + t * (self.cum[i + 1] - self.cum[i]), q);
            }
        }
        (best.0.sqrt(), best.1, best.2)
    }

    /// First crossing of the open segment from `p` towards `q` with the
    /// polyline: returns (fraction in (0, 1], crossing point, arclength).
    pub fn first_crossing(&self, p: Vec2, q: Vec2) -> Option<(f64, Vec2, f64)> {
        let m = self.pts.len();
        let mut best: Option<(f64, Vec2, f64)> = None;
        let r = [q[0] - p[0], q[1] - p[1]];
        for i in 0..m {
            let a = self.pts[i];
            let b = self.pts[(i + 1) % m];
            let s = [b[0] - a[0], b[1] - a[1]];
            let den = cross(r, s);
            if den == 0.0 {
                continue;
            }
            let qp = [a[0] - p[0], a[1] - p[1]];
            let t = cross(qp, s) / den;
            let u = cross(qp, r) / den;
            if t > 1e-12 && t <= 1.0 + 1e-12 && (-1e-12..=1.0 + 1e-12).contains(&u) {
                let t = t.min(1.0);
                if best.map_or(true, |(bt, _, _)| t < bt) {
                    let point = [p[0] + t * r[0], p[1] + t * r[1]];
                    let s_arc = self.cum[i] + u.clamp(0.0, 1.0) * (self.cum[i + 1] - self.cum[i]);
                    best = Some((t, point, s_arc));
                }
            }
        }
        best
    }

    /// Tangent direction (not normalized) at arclength s, by central
    /// difference over a window `delta`.
    pub fn tangent_at(&self, s: f64, delta: f64) -> Vec2 {
        let a = self.point_at(s - delta);
        let b = self.point_at(s + delta);
        [b[0] - a[0], b[1] - a[1]]
    }

    /// Inward g-unit normal at arclength `s`. For a counter-clockwise
    /// boundary the inner side is to the left of the tangent; the conormal
    /// covector is converted to a vector with the inverse metric so it stays
    /// g-orthogonal to the tangent for any metric.
    pub fn inner_normal_at(&self, chart: &GeometryChart, s: f64, delta: f64) -> Result<Vec2> {
        let t = self.tangent_at(s, delta);
        let conormal = [-t[1], t[0]];
        let x = self.point_at(s);
        let ginv = chart.metric_inv(x)?;
        chart.normalize(x, ginv.mul(conormal))
    }

    /// Discrete geodesic curvature of the boundary at arclength `s` with
    /// respect to the inner normal, from a symmetric three-point stencil of
    /// half-width `delta` and the chart Christoffel symbols.
    pub fn geodesic_curvature_at(
        &self,
        chart: &GeometryChart,
        s: f64,
        delta: f64,
    ) -> Result<f64> {
        let pm = self.point_at(s - delta);
        let p0 = self.point_at(s);
        let pp = self.point_at(s + delta);
        let vel = [(pp[0] - pm[0]) / (2.0 * delta), (pp[1] - pm[1]) / (2.0 * delta)];
        let acc = [
            (pp[0] - 2.0 * p0[0] + pm[0]) / (delta * delta),
            (pp[1] - 2.0 * p0[1] + pm[1]) / (delta * delta),
        ];
        let gamma = chart.christoffels(p0)?;
        let g = chart.metric(p0)?;
        let cov_acc = [
            acc[0] + gamma.gamma[0].quad(vel),
            acc[1] + gamma.gamma[1].quad(vel),
        ];
        let n = self.inner_normal_at(chart, s, delta)?;
        let speed2 = g.quad(vel);
        if !(speed2 > 0.0) {
            return Err(Error::Geometry(format!(
                "degenerate boundary tangent at s = {s}"
            )));
        }
        Ok(g.bilin(cov_acc, n) / speed2)
    }
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn signed_area(pts: &[Vec2]) -> f64 {
    let m = pts.len();
    let mut s = 0.0;
    for i in 0..m {
        let a = pts[i];
        let b = pts[(i + 1) % m];
        s += cross(a, b);
    }
    0.5 * s
}

fn segments_intersect(a1: Vec2, a2: Vec2, b1: Vec2, b2: Vec2) -> bool {
    let d1 = cross([a2[0] - a1[0], a2[1] - a1[1]], [b1[0] - a1[0], b1[1] - a1[1]]);
    let d2 = cross([a2[0] - a1[0], a2[1] - a1[1]], [b2[0] - a1[0], b2[1] - a1[1]]);
    let d3 = cross([b2[0] - b1[0], b2[1] - b1[1]], [a1[0] - b1[0], a1[1] - b1[1]]);
    let d4 = cross([b2[0] - b1[0], b2[1] - b1[1]], [a2[0] - b1[0], a2[1] - b1[1]]);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Node classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mask {
    Outside,
    /// Inside with full central stencils in every direction.
    Interior,
    /// Inside but at least one leg is cut by the boundary (or a diagonal
    /// neighbor is missing).
    BoundaryAdjacent,
}

/// Shortley-Weller leg toward one axis neighbor.
#[derive(Debug, Clone, Copy)]
pub struct Leg {
    /// Fraction of a full grid step, in (0, 1]. 1 means the neighbor node.
    pub frac: f64,
    /// Crossing id when the leg is cut by the boundary.
    pub crossing: Option<u32>,
}

/// Point where a leg meets the boundary; Dirichlet data is imposed here.
#[derive(Debug, Clone, Copy)]
pub struct Crossing {
    pub point: Vec2,
    pub s: f64,
}

/// Axis directions for legs, in storage order.
pub const EAST: usize = 0;
pub const WEST: usize = 1;
pub const NORTH: usize = 2;
pub const SOUTH: usize = 3;

/// Diagonal directions for the mixed-derivative legs, in storage order.
pub const NE: usize = 0;
pub const SW: usize = 1;
pub const NW: usize = 2;
pub const SE: usize = 3;

/// Grid-index step and chart offset of a diagonal direction.
pub fn diag_step(dir: usize, grid: &Grid) -> (isize, [f64; 2]) {
    match dir {
        NE => (grid.ny as isize + 1, [grid.hx, grid.hy]),
        SW => (-(grid.ny as isize) - 1, [-grid.hx, -grid.hy]),
        NW => (-(grid.ny as isize) + 1, [-grid.hx, grid.hy]),
        SE => (grid.ny as isize - 1, [grid.hx, -grid.hy]),
        _ => unreachable!(),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub hx: f64,
    pub hy: f64,
}

impl Grid {
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny + iy
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.ny, idx % self.ny)
    }

    #[inline]
    pub fn pos(&self, ix: usize, iy: usize) -> Vec2 {
        [self.x0 + self.hx * ix as f64, self.y0 + self.hy * iy as f64]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h(&self) -> f64 {
        self.hx.max(self.hy)
    }
}

/// Structured-grid discretization of the bounded domain.
#[derive(Debug)]
pub struct DiscreteDomain {
    pub grid: Grid,
    pub boundary: Polyline,
    pub mask: Vec<Mask>,
    /// Per node: legs east, west, north, south. Only meaningful inside.
    pub legs: Vec<[Leg; 4]>,
    /// Per node: diagonal legs NE, SW, NW, SE (for mixed derivatives);
    /// None where no usable crossing or neighbor exists.
    pub diag_legs: Vec<[Option<Leg>; 4]>,
    pub crossings: Vec<Crossing>,
    /// Signed metric distance to the boundary: positive inside, negative in
    /// the one-to-three-cell outside collar, NaN far outside.
    pub distance: Vec<f64>,
    /// Arclength of the nearest boundary foot; NaN where unknown.
    pub nearest_s: Vec<f64>,
    /// False at nodes where back-traced feet disagree (cut-locus flag).
    pub nearest_unique: Vec<bool>,
    /// Nodes whose distance came from the exact projection initialization.
    pub exact_init: Vec<bool>,
    pub reach_estimate: f64,
}

impl DiscreteDomain {
    /// Build the classified grid and then the distance field.
    pub fn build(
        boundary: Polyline,
        resolution: usize,
        chart: &GeometryChart,
    ) -> Result<DiscreteDomain> {
        let mut dom = build_domain(boundary, resolution, chart)?;
        distance_field(&mut dom, chart)?;
        Ok(dom)
    }

    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    #[inline]
    pub fn is_inside(&self, idx: usize) -> bool {
        matches!(self.mask[idx], Mask::Interior | Mask::BoundaryAdjacent)
    }

    /// Indices of all solved (inside) nodes, in grid order.
    pub fn inside_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.grid.len()).filter(move |&i| self.is_inside(i))
    }

    /// Inside nodes within one stencil bandwidth of `idx` (the only columns
    /// a Jacobian row can touch; the one-sided stencils reach two grid
    /// lines).
    pub fn inside_nodes_near(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let band = 2 * self.grid.ny + 2;
        let lo = idx.saturating_sub(band);
        let hi = (idx + band).min(self.grid.len().saturating_sub(1));
        (lo..=hi).filter(move |&q| self.is_inside(q))
    }

    pub fn node_pos(&self, idx: usize) -> Vec2 {
        let (ix, iy) = self.grid.coords(idx);
        self.grid.pos(ix, iy)
    }

    /// Nearest boundary foot of a node, where unique.
    pub fn nearest_point(&self, idx: usize) -> Option<Vec2> {
        if self.nearest_unique[idx] && self.nearest_s[idx].is_finite() {
            Some(self.boundary.point_at(self.nearest_s[idx]))
        } else {
            None
        }
    }

    /// Nodes inside the regular band `d < reach` with coherent feet.
    pub fn is_regular(&self, idx: usize) -> bool {
        self.is_inside(idx)
            && self.nearest_unique[idx]
            && self.distance[idx].is_finite()
            && self.distance[idx] < self.reach_estimate
    }

    /// Metric length of the straight chart segment between two points, by
    /// composite Simpson quadrature of the line element.
    pub fn metric_seg_len(chart: &GeometryChart, a: Vec2, b: Vec2) -> Result<f64> {
        let d = [b[0] - a[0], b[1] - a[1]];
        let speed = |t: f64| -> Result<f64> {
            let p = [a[0] + t * d[0], a[1] + t * d[1]];
            Ok(chart.metric(p)?.quad(d).sqrt())
        };
        Ok((speed(0.0)? + 4.0 * speed(0.25)? + 2.0 * speed(0.5)? + 4.0 * speed(0.75)?
            + speed(1.0)?)
            / 12.0)
    }
}

/// Classify nodes and compute Shortley-Weller legs. The grid covers the
/// bounding box of the polyline with `resolution` nodes per axis.
pub fn build_domain(
    boundary: Polyline,
    resolution: usize,
    chart: &GeometryChart,
) -> Result<DiscreteDomain> {
    if resolution < 17 {
        return Err(Error::Resolution(format!(
            "resolution {resolution} below the minimum of 17 nodes per axis"
        )));
    }
    let (mut xmin, mut xmax, mut ymin, mut ymax) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in boundary.vertices() {
        xmin = xmin.min(p[0]);
        xmax = xmax.max(p[0]);
        ymin = ymin.min(p[1]);
        ymax = ymax.max(p[1]);
    }
    let nx = resolution;
    let ny = resolution;
    let grid = Grid {
        nx,
        ny,
        x0: xmin,
        y0: ymin,
        hx: (xmax - xmin) / (nx - 1) as f64,
        hy: (ymax - ymin) / (ny - 1) as f64,
    };
    if !(grid.hx > 0.0 && grid.hy > 0.0) {
        return Err(Error::input("degenerate boundary bounding box"));
    }

    let n = grid.len();
    let on_tol = 1e-12 * (grid.hx + grid.hy);
    let mut on_boundary = vec![false; n];
    let mut inside = vec![false; n];
    for ix in 0..nx {
        for iy in 0..ny {
            let idx = grid.idx(ix, iy);
            let p = grid.pos(ix, iy);
            if !chart.contains(p) {
                return Err(Error::input(format!(
                    "grid node ({}, {}) falls outside the geometry chart",
                    p[0], p[1]
                )));
            }
            let (dist, _, _) = boundary.project(p);
            if dist <= on_tol {
                on_boundary[idx] = true;
            } else if boundary.contains(p) {
                inside[idx] = true;
            }
        }
    }

    let mut mask = vec![Mask::Outside; n];
    let mut legs = vec![[Leg { frac: 1.0, crossing: None }; 4]; n];
    let mut crossings: Vec<Crossing> = Vec::new();
    let theta_min = 1e-6;

    let dirs: [(isize, isize, f64); 4] = [
        (1, 0, grid.hx),  // EAST
        (-1, 0, grid.hx), // WEST
        (0, 1, grid.hy),  // NORTH
        (0, -1, grid.hy), // SOUTH
    ];

    for ix in 0..nx {
        for iy in 0..ny {
            let idx = grid.idx(ix, iy);
            if !inside[idx] {
                continue;
            }
            let p = grid.pos(ix, iy);
            let mut adjacent = false;
            for (dir, &(dx, dy, _step)) in dirs.iter().enumerate() {
                let jx = ix as isize + dx;
                let jy = iy as isize + dy;
                let neighbor_state = if jx < 0 || jy < 0 || jx >= nx as isize || jy >= ny as isize
                {
                    None
                } else {
                    let jdx = grid.idx(jx as usize, jy as usize);
                    Some((jdx, inside[jdx], on_boundary[jdx]))
                };
                let q = [p[0] + dx as f64 * grid.hx, p[1] + dy as f64 * grid.hy];
                match neighbor_state {
                    Some((_, true, _)) => {
                        // full leg to an inside node; still look for a sliver
                        // crossing (can happen with non-convex boundaries)
                        if let Some((t, point, s)) = boundary.first_crossing(p, q) {
                            if t < 1.0 - 1e-9 {
                                let cid = crossings.len() as u32;
                                crossings.push(Crossing { point, s });
                                legs[idx][dir] =
                                    Leg { frac: t.max(theta_min), crossing: Some(cid) };
                                adjacent = true;
                                continue;
                            }
                        }
                    }
                    Some((_, false, true)) => {
                        // neighbor sits exactly on the boundary
                        let (_, s, foot) = boundary.project(q);
                        let cid = crossings.len() as u32;
                        crossings.push(Crossing { point: foot, s });
                        legs[idx][dir] = Leg { frac: 1.0, crossing: Some(cid) };
                        adjacent = true;
                        continue;
                    }
                    _ => {
                        // neighbor outside (or off-grid): must cross
                        let crossing = boundary.first_crossing(p, q).or_else(|| {
                            // tolerance fallback: project the neighbor
                            let (d, s, foot) = boundary.project(q);
                            if d <= 1e-9 * grid.h() {
                                Some((1.0, foot, s))
                            } else {
                                None
                            }
                        });
                        match crossing {
                            Some((t, point, s)) => {
                                let cid = crossings.len() as u32;
                                crossings.push(Crossing { point, s });
                                legs[idx][dir] =
                                    Leg { frac: t.max(theta_min), crossing: Some(cid) };
                                adjacent = true;
                                continue;
                            }
                            None => {
                                return Err(Error::Geometry(format!(
                                    "inconsistent boundary crossing at node ({}, {})",
                                    p[0], p[1]
                                )));
                            }
                        }
                    }
                }
            }
            // diagonal availability feeds the classification
            let mut diag_ok = true;
            for (dx, dy) in [(-1, -1), (-1, 1), (1, -1), (1, 1)] {
                let jx = ix as isize + dx;
                let jy = iy as isize + dy;
                let in_grid = jx >= 0 && jy >= 0 && jx < nx as isize && jy < ny as isize;
                if !in_grid || !inside[grid.idx(jx as usize, jy as usize)] {
                    diag_ok = false;
                }
            }
            mask[idx] = if adjacent || !diag_ok { Mask::BoundaryAdjacent } else { Mask::Interior };
        }
    }

    // Diagonal legs, used by the mixed-derivative stencils at cut nodes.
    let mut diag_legs = vec![[None::<Leg>; 4]; n];
    for ix in 0..nx {
        for iy in 0..ny {
            let idx = grid.idx(ix, iy);
            if !inside[idx] {
                continue;
            }
            let p = grid.pos(ix, iy);
            for dir in 0..4 {
                let (step, off) = diag_step(dir, &grid);
                let target = idx as isize + step;
                let q = [p[0] + off[0], p[1] + off[1]];
                let on_grid = {
                    let jx = ix as isize + if off[0] > 0.0 { 1 } else { -1 };
                    let jy = iy as isize + if off[1] > 0.0 { 1 } else { -1 };
                    jx >= 0 && jy >= 0 && jx < nx as isize && jy < ny as isize
                };
                let state = if on_grid {
                    let t = target as usize;
                    Some((inside[t], on_boundary[t]))
                } else {
                    None
                };
                diag_legs[idx][dir] = match state {
                    Some((true, _)) => match boundary.first_crossing(p, q) {
                        Some((t, point, s)) if t < 1.0 - 1e-9 => {
                            let cid = crossings.len() as u32;
                            crossings.push(Crossing { point, s });
                            Some(Leg { frac: t.max(theta_min), crossing: Some(cid) })
                        }
                        _ => Some(Leg { frac: 1.0, crossing: None }),
                    },
                    Some((false, true)) => {
                        let (_, s, foot) = boundary.project(q);
                        let cid = crossings.len() as u32;
                        crossings.push(Crossing { point: foot, s });
                        Some(Leg { frac: 1.0, crossing: Some(cid) })
                    }
                    _ => boundary.first_crossing(p, q).map(|(t, point, s)| {
                        let cid = crossings.len() as u32;
                        crossings.push(Crossing { point, s });
                        Leg { frac: t.max(theta_min), crossing: Some(cid) }
                    }),
                };
            }
        }
    }

    // Thin-domain detection: a solved node must keep at least one full-step
    // inside neighbor per axis, otherwise the local width is below the
    // supported minimum (~3h).
    let mut n_inside = 0usize;
    for ix in 0..nx {
        for iy in 0..ny {
            let idx = grid.idx(ix, iy);
            if mask[idx] == Mask::Outside {
                continue;
            }
            n_inside += 1;
            let lx = legs[idx][EAST].crossing.is_some() && legs[idx][WEST].crossing.is_some();
            let ly = legs[idx][NORTH].crossing.is_some() && legs[idx][SOUTH].crossing.is_some();
            if lx || ly {
                let p = grid.pos(ix, iy);
                return Err(Error::Resolution(format!(
                    "domain thinner than 3h near ({}, {}); raise the resolution",
                    p[0], p[1]
                )));
            }
        }
    }
    if n_inside == 0 {
        return Err(Error::Resolution("no interior nodes; domain unresolved".into()));
    }

    let n_total = grid.len();
    Ok(DiscreteDomain {
        grid,
        boundary,
        mask,
        legs,
        diag_legs,
        crossings,
        distance: vec![f64::NAN; n_total],
        nearest_s: vec![f64::NAN; n_total],
        nearest_unique: vec![false; n_total],
        exact_init: vec![false; n_total],
        reach_estimate: 0.0,
    })
}

/// Fast-marching distance to the boundary in the base metric, nearest-foot
/// back-tracing, and the reach estimate.
pub fn distance_field(dom: &mut DiscreteDomain, chart: &GeometryChart) -> Result<()> {
    let grid = dom.grid;
    let n = grid.len();
    let h = grid.h();
    let init_band = 3.0 * h;

    let mut d = vec![f64::NAN; n];
    let mut ns = vec![f64::NAN; n];
    let mut exact = vec![false; n];
    let mut accepted = vec![false; n];

    // Exact initialization: metric point-to-boundary distance in a band of
    // about three cells on both sides (negative outside).
    for ix in 0..grid.nx {
        for iy in 0..grid.ny {
            let idx = grid.idx(ix, iy);
            let p = grid.pos(ix, iy);
            let (de, s, foot) = dom.boundary.project(p);
            if de <= init_band {
                let dm = DiscreteDomain::metric_seg_len(chart, p, foot)?;
                let sign = if dom.is_inside(idx) { 1.0 } else { -1.0 };
                d[idx] = sign * dm;
                ns[idx] = s;
                exact[idx] = true;
                if dom.is_inside(idx) {
                    accepted[idx] = true;
                }
            }
        }
    }

    // Min-heap over (distance bits, node); f64 bits order coincides with the
    // numeric order for non-negative finite values.
    let mut heap: BinaryHeap<std::cmp::Reverse<(u64, usize)>> = BinaryHeap::new();
    for idx in 0..n {
        if accepted[idx] {
            heap.push(std::cmp::Reverse((d[idx].to_bits(), idx)));
        }
    }

    let update = |idx: usize, d: &[f64], ns: &[f64], accepted: &[bool]| -> Option<(f64, f64)> {
        let (ix, iy) = grid.coords(idx);
        let p = grid.pos(ix, iy);
        let ginv = chart.metric_inv(p).ok()?;
        let mut axis_val = [f64::INFINITY; 2]; // upwind value per axis
        let mut axis_src = [usize::MAX; 2];
        for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
            let jx = ix as isize + dx;
            let jy = iy as isize + dy;
            if jx < 0 || jy < 0 || jx >= grid.nx as isize || jy >= grid.ny as isize {
                continue;
            }
            let jdx = grid.idx(jx as usize, jy as usize);
            if accepted[jdx] && d[jdx].is_finite() {
                let axis = if dx != 0 { 0 } else { 1 };
                if d[jdx] < axis_val[axis] {
                    axis_val[axis] = d[jdx];
                    axis_src[axis] = jdx;
                }
            }
        }
        let a = [ginv.xx / (grid.hx * grid.hx), ginv.yy / (grid.hy * grid.hy)];
        let (v0, v1) = (axis_val[0], axis_val[1]);
        let two_axis = v0.is_finite() && v1.is_finite();
        if two_axis {
            let qa = a[0] + a[1];
            let qb = -2.0 * (a[0] * v0 + a[1] * v1);
            let qc = a[0] * v0 * v0 + a[1] * v1 * v1 - 1.0;
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let cand = (-qb + disc.sqrt()) / (2.0 * qa);
                if cand >= v0.max(v1) {
                    let src = if v0 <= v1 { axis_src[0] } else { axis_src[1] };
                    return Some((cand, ns[src]));
                }
            }
        }
        // single-axis fallback
        let mut best: Option<(f64, f64)> = None;
        for axis in 0..2 {
            if axis_val[axis].is_finite() {
                let cand = axis_val[axis] + 1.0 / a[axis].sqrt();
                if best.map_or(true, |(b, _)| cand < b) {
                    best = Some((cand, ns[axis_src[axis]]));
                }
            }
        }
        best
    };

    let mut trial_val = vec![f64::INFINITY; n];
    while let Some(std::cmp::Reverse((bits, idx))) = heap.pop() {
        let val = f64::from_bits(bits);
        if accepted[idx] && val > d[idx] {
            continue; // stale entry
        }
        if !accepted[idx] {
            if val > trial_val[idx] {
                continue;
            }
            accepted[idx] = true;
            d[idx] = val;
        }
        // relax inside neighbors
        let (ix, iy) = grid.coords(idx);
        for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
            let jx = ix as isize + dx;
            let jy = iy as isize + dy;
            if jx < 0 || jy < 0 || jx >= grid.nx as isize || jy >= grid.ny as isize {
                continue;
            }
            let jdx = grid.idx(jx as usize, jy as usize);
            if !dom.is_inside(jdx) || accepted[jdx] {
                continue;
            }
            if let Some((cand, foot_s)) = update(jdx, &d, &ns, &accepted) {
                if cand < trial_val[jdx] {
                    trial_val[jdx] = cand;
                    ns[jdx] = foot_s;
                    heap.push(std::cmp::Reverse((cand.to_bits(), jdx)));
                }
            }
        }
    }

    // Refine the back-traced feet by local projection, sweeping nodes in
    // increasing distance so every seed comes from an already-polished
    // upwind neighbor. This removes the O(h)-per-step quantization of the
    // inherited arclengths; the cut-locus spread test below then sees clean
    // jumps instead of inheritance noise.
    let total_len = dom.boundary.total_len();
    let refine = |p: Vec2, seed: f64| -> f64 {
        let dist_to = |s: f64| -> f64 {
            let q = dom.boundary.point_at(s);
            DiscreteDomain::metric_seg_len(chart, p, q).unwrap_or(f64::INFINITY)
        };
        let window = 5.0 * h;
        let m = 16usize;
        let mut best = (dist_to(seed), seed);
        for k in 0..=m {
            let s = seed - window + 2.0 * window * k as f64 / m as f64;
            let v = dist_to(s);
            if v < best.0 {
                best = (v, s);
            }
        }
        let gr = 0.5 * (5.0f64.sqrt() - 1.0);
        let mut lo = best.1 - 2.0 * window / m as f64;
        let mut hi = best.1 + 2.0 * window / m as f64;
        let mut c = hi - gr * (hi - lo);
        let mut dd_ = lo + gr * (hi - lo);
        let mut fc = dist_to(c);
        let mut fd = dist_to(dd_);
        for _ in 0..40 {
            if fc < fd {
                hi = dd_;
                dd_ = c;
                fd = fc;
                c = hi - gr * (hi - lo);
                fc = dist_to(c);
            } else {
                lo = c;
                c = dd_;
                fc = fd;
                dd_ = lo + gr * (hi - lo);
                fd = dist_to(dd_);
            }
        }
        (0.5 * (lo + hi)).rem_euclid(total_len)
    };
    let mut order: Vec<usize> =
        (0..n).filter(|&i| dom.is_inside(i) && d[i].is_finite()).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap().then(a.cmp(&b)));
    let mut polished = vec![false; n];
    for &idx in &order {
        if exact[idx] {
            polished[idx] = true;
            continue;
        }
        let (ix, iy) = grid.coords(idx);
        let mut seed = ns[idx];
        let mut seed_d = f64::INFINITY;
        for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
            let jx = ix as isize + dx;
            let jy = iy as isize + dy;
            if jx < 0 || jy < 0 || jx >= grid.nx as isize || jy >= grid.ny as isize {
                continue;
            }
            let jdx = grid.idx(jx as usize, jy as usize);
            if polished[jdx] && d[jdx].is_finite() && d[jdx] < seed_d && ns[jdx].is_finite() {
                seed_d = d[jdx];
                seed = ns[jdx];
            }
        }
        if seed.is_finite() {
            let p = dom.node_pos(idx);
            ns[idx] = refine(p, seed);
            // upgrade the marched value to the chord distance of the
            // polished foot: the first-order upwind error field has kinks
            // along characteristic switches, while the projection distance
            // is smooth away from the cut locus, which the Laplacian of d
            // downstream relies on
            let foot = dom.boundary.point_at(ns[idx]);
            if let Ok(chord) = DiscreteDomain::metric_seg_len(chart, p, foot) {
                if chord <= d[idx] + 2.0 * h {
                    d[idx] = chord;
                }
            }
        }
        polished[idx] = true;
    }

    // Cut-locus detection: feet of neighboring inside nodes should move
    // coherently along the boundary; a jump of more than 5h in arclength
    // marks the node irregular.
    let total = dom.boundary.total_len();
    let mut unique = vec![false; n];
    let mut reach = f64::INFINITY;
    let mut d_max: f64 = 0.0;
    let mut any_irregular = false;
    for ix in 0..grid.nx {
        for iy in 0..grid.ny {
            let idx = grid.idx(ix, iy);
            if !dom.is_inside(idx) || !d[idx].is_finite() {
                continue;
            }
            d_max = d_max.max(d[idx]);
            let mut spread: f64 = 0.0;
            for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
                let jx = ix as isize + dx;
                let jy = iy as isize + dy;
                if jx < 0 || jy < 0 || jx >= grid.nx as isize || jy >= grid.ny as isize {
                    continue;
                }
                let jdx = grid.idx(jx as usize, jy as usize);
                if d[jdx].is_finite() && ns[jdx].is_finite() && ns[idx].is_finite() {
                    let raw = (ns[idx] - ns[jdx]).abs() % total;
                    let circ = raw.min(total - raw);
                    spread = spread.max(circ);
                }
            }
            if spread > 5.0 * h {
                unique[idx] = false;
                any_irregular = true;
                reach = reach.min(d[idx]);
            } else {
                unique[idx] = ns[idx].is_finite();
            }
        }
    }
    if !any_irregular {
        reach = d_max + h;
    }

    dom.distance = d;
    dom.nearest_s = ns;
    dom.nearest_unique = unique;
    dom.exact_init = exact;
    dom.reach_estimate = reach;
    Ok(())
}

/// Chart first and second derivatives of the distance field at a node, by
/// centered differences through the signed collar values.
pub fn distance_derivatives(dom: &DiscreteDomain, idx: usize) -> Result<(Vec2, Sym2)> {
    let grid = dom.grid;
    let (ix, iy) = grid.coords(idx);
    let val = |dx: isize, dy: isize| -> Result<f64> {
        let jx = ix as isize + dx;
        let jy = iy as isize + dy;
        if jx < 0 || jy < 0 || jx >= grid.nx as isize || jy >= grid.ny as isize {
            let p = dom.node_pos(idx);
            return Err(Error::numeric("distance stencil off grid", (p[0], p[1])));
        }
        let v = dom.distance[grid.idx(jx as usize, jy as usize)];
        if v.is_finite() {
            Ok(v)
        } else {
            let p = dom.node_pos(idx);
            Err(Error::numeric("distance stencil hits undefined value", (p[0], p[1])))
        }
    };
    let c = val(0, 0)?;
    let e = val(1, 0)?;
    let w = val(-1, 0)?;
    let nn = val(0, 1)?;
    let ss = val(0, -1)?;
    let dx = (e - w) / (2.0 * grid.hx);
    let dy = (nn - ss) / (2.0 * grid.hy);
    let dxx = (e - 2.0 * c + w) / (grid.hx * grid.hx);
    let dyy = (nn - 2.0 * c + ss) / (grid.hy * grid.hy);
    // mixed term via the symmetric cross when all corners exist, otherwise
    // one-sided composition of first differences
    let corners = [val(1, 1), val(1, -1), val(-1, 1), val(-1, -1)];
    let dxy = if corners.iter().all(|c| c.is_ok()) {
        (corners[0].as_ref().unwrap() - corners[1].as_ref().unwrap()
            - corners[2].as_ref().unwrap()
            + corners[3].as_ref().unwrap())
            / (4.0 * grid.hx * grid.hy)
    } else {
        // d/dx of the centered y-difference, shifting stations inward
        let dy_at = |sx: isize| -> Result<f64> {
            Ok((val(sx, 1)? - val(sx, -1)?) / (2.0 * grid.hy))
        };
        let east = dy_at(1);
        let west = dy_at(-1);
        match (east, west) {
            (Ok(a), Ok(b)) => (a - b) / (2.0 * grid.hx),
            (Ok(a), Err(_)) => (a - dy_at(0)?) / grid.hx,
            (Err(_), Ok(b)) => (dy_at(0)? - b) / grid.hx,
            (Err(e), Err(_)) => return Err(e),
        }
    };
    Ok(([dx, dy], Sym2 { xx: dxx, xy: dxy, yy: dyy }))
}

/// Mean curvature of the hypersurface parallel to the boundary through a
/// node, with respect to the inward normal `grad d`, assembled from the
/// covariant Laplacian of the distance field and the flow acceleration:
/// `H = (-Lap d + rho^{-2} <accel, grad d>) / n`.
pub fn parallel_hypersurface_curvature(
    dom: &DiscreteDomain,
    chart: &GeometryChart,
    idx: usize,
) -> Result<f64> {
    let p = dom.node_pos(idx);
    if !dom.is_inside(idx) || !dom.distance[idx].is_finite() {
        return Err(Error::numeric("node carries no distance value", (p[0], p[1])));
    }
    if dom.distance[idx] >= dom.reach_estimate || !dom.nearest_unique[idx] {
        return Err(Error::CutLocus {
            point: (p[0], p[1]),
            d: dom.distance[idx],
            reach: dom.reach_estimate,
        });
    }
    let (dd, d2) = distance_derivatives(dom, idx)?;
    let gamma = chart.christoffels(p)?;
    let corr = gamma.contract_covector(dd);
    let hess = Sym2 { xx: d2.xx - corr.xx, xy: d2.xy - corr.xy, yy: d2.yy - corr.yy };
    let ginv = chart.metric_inv(p)?;
    let lap = ginv.xx * hess.xx + 2.0 * ginv.xy * hess.xy + ginv.yy * hess.yy;
    let rho = chart.rho(p)?;
    let accel = chart.killing_acceleration_covector(p)?;
    let gradvec = ginv.mul(dd);
    let drift = (accel[0] * gradvec[0] + accel[1] * gradvec[1]) / (rho * rho);
    let n = chart.dim() as f64;
    Ok((-lap + drift) / n)
}

/// Ambient-term cache at every grid node (inside or collar); callers index
/// it by node id.
pub fn ambient_cache(dom: &DiscreteDomain, chart: &GeometryChart) -> Result<AmbientTerms> {
    let pts: Vec<Vec2> = (0..dom.grid.len()).map(|i| dom.node_pos(i)).collect();
    AmbientTerms::compute(chart, &pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn euclid() -> GeometryChart {
        GeometryChart::euclidean()
    }

    #[test]
    fn unit_square_interior_count_matches_exact_fit() {
        let poly = Polyline::rectangle(0.0, 1.0, 0.0, 1.0);
        let n = 33;
        let dom = build_domain(poly, n, &euclid()).unwrap();
        let inside = dom.inside_nodes().count();
        assert_eq!(inside, (n - 2) * (n - 2));
    }

    #[test]
    fn disk_mask_area_close_to_pi() {
        let poly = Polyline::circle([0.0, 0.0], 1.0, 2048);
        let dom = build_domain(poly, 129, &euclid()).unwrap();
        let area = dom.inside_nodes().count() as f64 * dom.grid.hx * dom.grid.hy;
        let rel = (area - std::f64::consts::PI).abs() / std::f64::consts::PI;
        assert!(rel < 0.02, "mask area {area} deviates from pi by {rel:.4}");
    }

    #[test]
    fn self_intersecting_polyline_is_rejected() {
        let bowtie = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        let err = Polyline::new(bowtie).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn low_resolution_is_rejected() {
        let poly = Polyline::rectangle(0.0, 1.0, 0.0, 1.0);
        let err = build_domain(poly, 9, &euclid()).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)));
    }

    #[test]
    fn thin_domain_is_a_resolution_error() {
        // tilted strip whose width stays below the grid resolution of its
        // own bounding box
        let w = 0.012;
        let (c, s) = (30.0f64.to_radians().cos(), 30.0f64.to_radians().sin());
        let n = [-s * w / 2.0, c * w / 2.0];
        let poly = Polyline::new(vec![
            [n[0], n[1]],
            [c + n[0], s + n[1]],
            [c - n[0], s - n[1]],
            [-n[0], -n[1]],
        ])
        .unwrap();
        let err = build_domain(poly, 33, &euclid()).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)), "got {err:?}");
    }

    #[test]
    fn square_center_distance_is_half() {
        // the center sits on the cut locus, so first-order fast marching
        // carries its largest error there
        let poly = Polyline::rectangle(0.0, 1.0, 0.0, 1.0);
        let dom = DiscreteDomain::build(poly, 33, &euclid()).unwrap();
        let idx = dom.grid.idx(16, 16);
        assert!(
            (dom.distance[idx] - 0.5).abs() <= 2.0 * dom.h(),
            "center distance {} off 0.5 beyond 2h",
            dom.distance[idx]
        );
    }

    #[test]
    fn disk_center_hits_cut_locus() {
        let poly = Polyline::circle([0.0, 0.0], 1.0, 1024);
        let dom = DiscreteDomain::build(poly, 65, &euclid()).unwrap();
        let idx = dom.grid.idx(32, 32);
        assert!((dom.distance[idx] - 1.0).abs() < 0.03, "center distance {}", dom.distance[idx]);
        assert!(!dom.nearest_unique[idx], "center foot should be flagged non-unique");
        assert!(dom.reach_estimate > 0.6 && dom.reach_estimate <= 1.0 + dom.h());
    }

    #[test]
    fn boundary_nodes_carry_zero_distance_on_exact_fit() {
        let poly = Polyline::rectangle(0.0, 1.0, 0.0, 1.0);
        let dom = DiscreteDomain::build(poly, 33, &euclid()).unwrap();
        // node exactly on the boundary: (0, 16)
        let idx = dom.grid.idx(0, 16);
        assert_eq!(dom.mask[idx], Mask::Outside);
        assert!(dom.distance[idx].abs() < 1e-12);
    }

    #[test]
    fn fast_marching_matches_closed_form_oracle() {
        // Euclidean disk: distance = r0 - |x| exactly.
        let poly = Polyline::circle([0.0, 0.0], 1.0, 2048);
        let dom = DiscreteDomain::build(poly, 65, &euclid()).unwrap();
        let h = dom.h();
        let mut worst = 0.0f64;
        for idx in dom.inside_nodes() {
            let p = dom.node_pos(idx);
            let exact = 1.0 - (p[0] * p[0] + p[1] * p[1]).sqrt();
            worst = worst.max((dom.distance[idx] - exact).abs());
        }
        assert!(worst <= 2.0 * h, "fast-marching error {worst} above 2h = {}", 2.0 * h);
    }

    #[test]
    fn fast_marching_hyperbolic_oracle() {
        // Half-plane leaf: closed-form distance
        // dist(a, b) = arcosh(1 + |a-b|^2 / (2 a_t b_t)).
        let chart = GeometryChart::hyperbolic_leaf();
        let poly = Polyline::rectangle(0.0, 1.0, 1.0, 2.0);
        let dom = DiscreteDomain::build(poly, 65, &chart).unwrap();
        let hyper_dist = |a: Vec2, b: Vec2| {
            let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
            (1.0 + d2 / (2.0 * a[1] * b[1])).acosh()
        };
        let m = 4096;
        let total = dom.boundary.total_len();
        let samples: Vec<Vec2> =
            (0..m).map(|k| dom.boundary.point_at(total * k as f64 / m as f64)).collect();
        let h = dom.h();
        let mut worst = 0.0f64;
        for idx in dom.inside_nodes() {
            let p = dom.node_pos(idx);
            let exact = samples.iter().map(|&q| hyper_dist(p, q)).fold(f64::INFINITY, f64::min);
            worst = worst.max((dom.distance[idx] - exact).abs());
        }
        assert!(worst <= 2.0 * h, "hyperbolic FMM error {worst} above 2h = {}", 2.0 * h);
    }

    #[test]
    fn eikonal_residual_first_order() {
        let chart = euclid();
        let mut worst_by_n = Vec::new();
        for n in [33usize, 129] {
            let poly = Polyline::circle([0.0, 0.0], 1.0, 2048);
            let dom = DiscreteDomain::build(poly, n, &chart).unwrap();
            let mut worst = 0.0f64;
            for idx in dom.inside_nodes() {
                if !dom.is_regular(idx) || dom.distance[idx] > 0.8 * dom.reach_estimate {
                    continue;
                }
                if let Ok((dd, _)) = distance_derivatives(&dom, idx) {
                    let p = dom.node_pos(idx);
                    let ginv = chart.metric_inv(p).unwrap();
                    let res = (ginv.quad(dd) - 1.0).abs();
                    worst = worst.max(res);
                }
            }
            worst_by_n.push((dom.h(), worst));
        }
        for &(h, worst) in &worst_by_n {
            assert!(worst <= 8.0 * h, "eikonal residual {worst} above 8h = {}", 8.0 * h);
        }
    }

    #[test]
    fn nearest_feet_realize_distance() {
        let chart = euclid();
        let poly = Polyline::circle([0.3, -0.2], 0.8, 1024);
        let dom = DiscreteDomain::build(poly, 65, &chart).unwrap();
        let h = dom.h();
        for idx in dom.inside_nodes() {
            if !dom.is_regular(idx) {
                continue;
            }
            let p = dom.node_pos(idx);
            let foot = dom.nearest_point(idx).unwrap();
            // foot lies on the boundary
            let (gap, _, _) = dom.boundary.project(foot);
            assert!(gap < 1e-9);
            let through_foot = ((p[0] - foot[0]).powi(2) + (p[1] - foot[1]).powi(2)).sqrt();
            assert!(
                (through_foot - dom.distance[idx]).abs() <= 3.0 * h,
                "foot fails to realize distance: {} vs {}",
                through_foot,
                dom.distance[idx]
            );
        }
    }

    #[test]
    fn parallel_curvature_euclidean_disk() {
        let poly = Polyline::circle([0.0, 0.0], 1.0, 2048);
        let dom = DiscreteDomain::build(poly, 129, &euclid()).unwrap();
        // pick a node close to d = 0.5
        let mut best = (f64::INFINITY, 0usize);
        for idx in dom.inside_nodes() {
            let err = (dom.distance[idx] - 0.5).abs();
            if dom.is_regular(idx) && err < best.0 {
                best = (err, idx);
            }
        }
        let hc = parallel_hypersurface_curvature(&dom, &euclid(), best.1).unwrap();
        let d = dom.distance[best.1];
        let expect = 1.0 / (2.0 * (1.0 - d));
        assert!((hc - expect).abs() < 0.05, "parallel curvature {hc} vs {expect}");
    }

    #[test]
    fn parallel_curvature_straight_strip_vanishes() {
        let poly = Polyline::rectangle(0.0, 4.0, 0.0, 1.0);
        let dom = DiscreteDomain::build(poly, 33, &euclid()).unwrap();
        // nodes near the long edges, away from corners
        for idx in dom.inside_nodes() {
            let p = dom.node_pos(idx);
            if !dom.is_regular(idx) || p[0] < 1.0 || p[0] > 3.0 {
                continue;
            }
            if dom.distance[idx] < 0.3 {
                let hc = parallel_hypersurface_curvature(&dom, &euclid(), idx).unwrap();
                assert!(hc.abs() < 1e-6, "strip curvature {hc} at ({}, {})", p[0], p[1]);
            }
        }
    }

    #[test]
    fn parallel_curvature_rotational_cylinder() {
        // Domain r < r0 in the rotational chart bounded by {r = r0} plus a
        // far rectangle; probe nodes whose feet lie on the r = r0 side.
        let chart = GeometryChart::rotational();
        let poly = Polyline::rectangle(1.0, 3.0, 0.0, 2.0);
        let dom = DiscreteDomain::build(poly, 65, &chart).unwrap();
        let r0 = 3.0;
        for idx in dom.inside_nodes() {
            let p = dom.node_pos(idx);
            // stay in the band whose nearest boundary is the r = r0 edge
            if !dom.is_regular(idx) || p[1] < 0.8 || p[1] > 1.2 || p[0] < 2.5 {
                continue;
            }
            let hc = parallel_hypersurface_curvature(&dom, &chart, idx).unwrap();
            let expect = 1.0 / (2.0 * (r0 - dom.distance[idx]));
            assert!(
                (hc - expect).abs() < 0.02,
                "cylinder parallel curvature {hc} vs {expect} at r = {}",
                p[0]
            );
        }
    }

    #[test]
    fn disk_parallel_curvature_monotone_along_rays() {
        let poly = Polyline::circle([0.0, 0.0], 1.0, 2048);
        let chart = euclid();
        let dom = DiscreteDomain::build(poly, 65, &chart).unwrap();
        // sample curvature field on regular nodes, walk inward rays
        for k in 0..8 {
            let s = dom.boundary.total_len() * k as f64 / 8.0;
            let y = dom.boundary.point_at(s);
            let nrm = dom.boundary.inner_normal_at(&chart, s, dom.h()).unwrap();
            let mut prev = f64::NEG_INFINITY;
            let mut t = 2.0 * dom.h();
            while t < 0.6 * dom.reach_estimate {
                let p = [y[0] + t * nrm[0], y[1] + t * nrm[1]];
                let ix = ((p[0] - dom.grid.x0) / dom.grid.hx).round() as usize;
                let iy = ((p[1] - dom.grid.y0) / dom.grid.hy).round() as usize;
                let idx = dom.grid.idx(ix, iy);
                if dom.is_regular(idx) {
                    if let Ok(hc) = parallel_hypersurface_curvature(&dom, &chart, idx) {
                        assert!(
                            hc >= prev - 0.05,
                            "curvature not monotone along ray: {hc} after {prev}"
                        );
                        prev = hc;
                    }
                }
                t += dom.h();
            }
            assert!(prev > 0.5, "ray never accumulated increasing curvature");
        }
    }

    #[test]
    fn geodesic_curvature_of_circle_boundary() {
        let chart = euclid();
        let poly = Polyline::circle([0.0, 0.0], 1.0, 2048);
        let delta = poly.total_len() / 1024.0;
        for k in 0..16 {
            let s = poly.total_len() * (k as f64 + 0.37) / 16.0;
            let kappa = poly.geodesic_curvature_at(&chart, s, delta).unwrap();
            assert_relative_eq!(kappa, 1.0, max_relative = 1e-3);
        }
    }

    #[test]
    fn inner_normal_points_inward() {
        let poly = Polyline::circle([0.0, 0.0], 1.0, 512);
        let chart = euclid();
        let s = 0.3 * poly.total_len();
        let y = poly.point_at(s);
        let n = poly.inner_normal_at(&chart, s, poly.total_len() / 512.0).unwrap();
        // inward means towards the center here
        let dot = n[0] * (-y[0]) + n[1] * (-y[1]);
        assert!(dot > 0.9, "normal not inward: {n:?} at {y:?}");
    }
}
