//! Hypothesis checkers for the solvability of the Dirichlet problem.
//!
//! Three runtime checks mirror the existence hypotheses: monotonicity of the
//! prescribed curvature along the flow, the Ricci slope bound on the ambient
//! gradient of `H`, and the Serrin-type comparison between the boundary
//! cylinder curvature and `|H|` over the continuation family. A fourth,
//! diagnostic-only check verifies the inherited monotonicity of the parallel
//! cylinder curvatures along inner normal rays. All checkers report a
//! signed worst-case margin (nonnegative means pass) and where it occurred;
//! they are advisory — the solver can be forced to run with failed checks,
//! since the hypotheses are sufficient, not necessary.

use crate::fields::BoundaryData;
use crate::geometry::{GeometryChart, Vec2};
use crate::mesh::{parallel_hypersurface_curvature, DiscreteDomain};
use crate::{Error, Result};
use serde::Serialize;

type HFn = Box<dyn Fn(Vec2, f64) -> f64 + Send + Sync>;
type HGradFn = Box<dyn Fn(Vec2, f64) -> Vec2 + Send + Sync>;
type HdzFn = Box<dyn Fn(Vec2, f64) -> f64 + Send + Sync>;

/// Prescribed mean curvature `H(x, z)` with its first derivatives.
///
/// Derivative callbacks are optional; central differences with the chart
/// step provide the fallback. Evaluations are clamped-checked against
/// `[z_min, z_max]`.
pub struct PrescribedCurvature {
    h: HFn,
    dh_x: Option<HGradFn>,
    dh_z: Option<HdzFn>,
    pub z_min: f64,
    pub z_max: f64,
    fd_step: f64,
}

impl PrescribedCurvature {
    pub fn new(h: impl Fn(Vec2, f64) -> f64 + Send + Sync + 'static) -> PrescribedCurvature {
        PrescribedCurvature {
            h: Box::new(h),
            dh_x: None,
            dh_z: None,
            z_min: -1e6,
            z_max: 1e6,
            fd_step: 1e-6,
        }
    }

    pub fn constant(c: f64) -> PrescribedCurvature {
        PrescribedCurvature::new(move |_, _| c)
            .with_grad(move |_, _| [0.0, 0.0], move |_, _| 0.0)
    }

    pub fn with_grad(
        mut self,
        dh_x: impl Fn(Vec2, f64) -> Vec2 + Send + Sync + 'static,
        dh_z: impl Fn(Vec2, f64) -> f64 + Send + Sync + 'static,
    ) -> PrescribedCurvature {
        self.dh_x = Some(Box::new(dh_x));
        self.dh_z = Some(Box::new(dh_z));
        self
    }

    pub fn with_bounds(mut self, z_min: f64, z_max: f64) -> PrescribedCurvature {
        self.z_min = z_min;
        self.z_max = z_max;
        self
    }

    pub fn check_z(&self, z: f64) -> Result<()> {
        if z < self.z_min || z > self.z_max {
            return Err(Error::input(format!(
                "curvature evaluation at z = {z} outside bounds [{}, {}]",
                self.z_min, self.z_max
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: Vec2, z: f64) -> f64 {
        (self.h)(x, z)
    }

    pub fn grad_x(&self, x: Vec2, z: f64) -> Vec2 {
        if let Some(f) = &self.dh_x {
            return f(x, z);
        }
        let h = self.fd_step;
        [
            ((self.h)([x[0] + h, x[1]], z) - (self.h)([x[0] - h, x[1]], z)) / (2.0 * h),
            ((self.h)([x[0], x[1] + h], z) - (self.h)([x[0], x[1] - h], z)) / (2.0 * h),
        ]
    }

    pub fn dz(&self, x: Vec2, z: f64) -> f64 {
        if let Some(f) = &self.dh_z {
            return f(x, z);
        }
        let h = self.fd_step;
        ((self.h)(x, z + h) - (self.h)(x, z - h)) / (2.0 * h)
    }

    /// Ambient gradient norm in the warped metric:
    /// `|grad H|^2 = g^{-1}(dH_x, dH_x) + rho^{-2} (dH_z)^2`.
    pub fn ambient_grad_norm(&self, chart: &GeometryChart, x: Vec2, z: f64) -> Result<f64> {
        let dx = self.grad_x(x, z);
        let dz = self.dz(x, z);
        let ginv = chart.metric_inv(x)?;
        let rho = chart.rho(x)?;
        Ok((ginv.quad(dx) + dz * dz / (rho * rho)).sqrt())
    }
}

/// One sampled row of a checker run; meaning of the columns depends on the
/// check (see each checker).
#[derive(Debug, Clone, Serialize)]
pub struct SampleRow {
    pub x1: f64,
    pub x2: f64,
    pub z: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// Verdict of one hypothesis check.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub check: String,
    pub pass: bool,
    /// Worst (smallest) margin; the sign agrees with the verdict up to the
    /// check tolerance.
    pub margin: f64,
    pub worst_location: (f64, f64),
    pub tolerance: f64,
    /// Nodes outside the regular band skipped by band-limited checks.
    pub skipped: usize,
    #[serde(skip)]
    pub samples: Vec<SampleRow>,
}

impl ConditionReport {
    fn from_samples(
        check: &str,
        tolerance: f64,
        skipped: usize,
        samples: Vec<SampleRow>,
    ) -> ConditionReport {
        let mut margin = f64::INFINITY;
        let mut worst = (f64::NAN, f64::NAN);
        for s in &samples {
            if s.margin < margin {
                margin = s.margin;
                worst = (s.x1, s.x2);
            }
        }
        ConditionReport {
            check: check.to_string(),
            pass: margin >= -tolerance,
            margin,
            worst_location: worst,
            tolerance,
            skipped,
            samples,
        }
    }
}

/// Tolerances and sampling densities for the checkers.
#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub tol_mono: f64,
    /// None resolves to the discretization-aware default `1e-8 + 2h`.
    pub tol_serrin: Option<f64>,
    pub tol_ricci: f64,
    pub sigma_samples: usize,
    pub boundary_samples: usize,
    pub z_samples: usize,
}

impl Default for CheckConfig {
    fn default() -> CheckConfig {
        CheckConfig {
            tol_mono: 1e-9,
            tol_serrin: None,
            tol_ricci: 1e-9,
            sigma_samples: 33,
            boundary_samples: 256,
            z_samples: 33,
        }
    }
}

/// Flow monotonicity of `H`: the z-derivative of `H` must be nonnegative at
/// every sampled `(node, z)` pair with `|z| <= z_bar`.
pub fn check_flow_monotonicity(
    h: &PrescribedCurvature,
    dom: &DiscreteDomain,
    z_bar: f64,
    cfg: &CheckConfig,
) -> Result<ConditionReport> {
    h.check_z(-z_bar)?;
    h.check_z(z_bar)?;
    let m = cfg.z_samples.max(2);
    let mut samples = Vec::new();
    for idx in dom.inside_nodes() {
        let x = dom.node_pos(idx);
        let mut worst = f64::INFINITY;
        let mut worst_z = 0.0;
        for k in 0..m {
            let z = -z_bar + 2.0 * z_bar * (k as f64) / ((m - 1) as f64);
            let dz = h.dz(x, z);
            if dz < worst {
                worst = dz;
                worst_z = z;
            }
        }
        samples.push(SampleRow { x1: x[0], x2: x[1], z: worst_z, lhs: worst, rhs: 0.0, margin: worst });
    }
    Ok(ConditionReport::from_samples("flow_monotonicity", cfg.tol_mono, 0, samples))
}

fn sigma_grid(samples: usize) -> Vec<f64> {
    let m = samples.max(3);
    let mut grid: Vec<f64> = (0..m).map(|k| k as f64 / (m - 1) as f64).collect();
    // endpoint refinement: geometric clusters near 0 and 1
    let mut t = 1.0 / (m - 1) as f64;
    for _ in 0..8 {
        t *= 0.5;
        grid.push(t);
        grid.push(1.0 - t);
    }
    grid
}

/// Serrin-type boundary condition: at every boundary sample the cylinder
/// mean curvature (built from the boundary's geodesic curvature in the base
/// and the flow term) must dominate `sup_sigma |H(y, sigma phi(y))|`.
pub fn check_serrin(
    h: &PrescribedCurvature,
    dom: &DiscreteDomain,
    chart: &GeometryChart,
    phi: &BoundaryData,
    cfg: &CheckConfig,
) -> Result<ConditionReport> {
    let total = dom.boundary.total_len();
    let m = cfg.boundary_samples.max(16);
    let delta = total / (4 * m) as f64;
    let sigmas = sigma_grid(cfg.sigma_samples);
    let mut samples = Vec::with_capacity(m);
    for k in 0..m {
        let s = total * (k as f64 + 0.5) / m as f64;
        let y = dom.boundary.point_at(s);
        let kappa = dom.boundary.geodesic_curvature_at(chart, s, delta)?;
        let normal = dom.boundary.inner_normal_at(chart, s, delta)?;
        let h_cyl = chart.cylinder_mean_curvature(y, normal, kappa)?;
        let phi_y = phi.at_boundary(y, s, total);
        let mut sup = 0.0f64;
        for &sg in &sigmas {
            let z = sg * phi_y;
            h.check_z(z)?;
            sup = sup.max(h.value(y, z).abs());
        }
        samples.push(SampleRow {
            x1: y[0],
            x2: y[1],
            z: phi_y,
            lhs: sup,
            rhs: h_cyl,
            margin: h_cyl - sup,
        });
    }
    let tol = cfg.tol_serrin.unwrap_or(1e-8 + 2.0 * dom.h());
    Ok(ConditionReport::from_samples("serrin", tol, 0, samples))
}

/// Ricci slope bound: at each regular node `x` with foot `y(x)`,
/// `|grad H(x, phi(y))| <= H(x, phi(y))^2 + ricci_min(x) / n`.
pub fn check_ricci_slope(
    h: &PrescribedCurvature,
    dom: &DiscreteDomain,
    chart: &GeometryChart,
    phi: &BoundaryData,
    cfg: &CheckConfig,
) -> Result<ConditionReport> {
    let total = dom.boundary.total_len();
    let n = chart.dim() as f64;
    let mut samples = Vec::new();
    let mut skipped = 0usize;
    for idx in dom.inside_nodes() {
        if !dom.is_regular(idx) {
            skipped += 1;
            continue;
        }
        let x = dom.node_pos(idx);
        let s = dom.nearest_s[idx];
        let y = dom.boundary.point_at(s);
        let z = phi.at_boundary(y, s, total);
        h.check_z(z)?;
        let lhs = h.ambient_grad_norm(chart, x, z)?;
        let hv = h.value(x, z);
        let rhs = hv * hv + chart.ambient_ricci_min(x)? / n;
        samples.push(SampleRow { x1: x[0], x2: x[1], z, lhs, rhs, margin: rhs - lhs });
    }
    Ok(ConditionReport::from_samples("ricci_slope", cfg.tol_ricci, skipped, samples))
}

/// Diagnostic: the parallel cylinder curvature along inner normal rays must
/// stay above its boundary value (an inherited consequence of the two
/// hypotheses, not an input).
pub fn check_cylinder_monotonicity(
    dom: &DiscreteDomain,
    chart: &GeometryChart,
    cfg: &CheckConfig,
) -> Result<ConditionReport> {
    let total = dom.boundary.total_len();
    let rays = cfg.boundary_samples.clamp(16, 128);
    let delta = total / 1024.0;
    let h = dom.h();

    // curvature field on regular nodes for interpolation
    let grid = dom.grid;
    let mut field = vec![f64::NAN; grid.len()];
    for idx in dom.inside_nodes() {
        if dom.is_regular(idx) {
            if let Ok(v) = parallel_hypersurface_curvature(dom, chart, idx) {
                field[idx] = v;
            }
        }
    }
    let interp = |p: Vec2| -> Option<f64> {
        let fx = (p[0] - grid.x0) / grid.hx;
        let fy = (p[1] - grid.y0) / grid.hy;
        let ix = fx.floor() as isize;
        let iy = fy.floor() as isize;
        if ix < 0 || iy < 0 || ix + 1 >= grid.nx as isize || iy + 1 >= grid.ny as isize {
            return None;
        }
        let (ix, iy) = (ix as usize, iy as usize);
        let ids = [
            grid.idx(ix, iy),
            grid.idx(ix + 1, iy),
            grid.idx(ix, iy + 1),
            grid.idx(ix + 1, iy + 1),
        ];
        if ids.iter().any(|&i| field[i].is_nan()) {
            return None;
        }
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        Some(
            field[ids[0]] * (1.0 - tx) * (1.0 - ty)
                + field[ids[1]] * tx * (1.0 - ty)
                + field[ids[2]] * (1.0 - tx) * ty
                + field[ids[3]] * tx * ty,
        )
    };

    let mut samples = Vec::new();
    let mut skipped = 0usize;
    for k in 0..rays {
        let s = total * (k as f64 + 0.5) / rays as f64;
        let y = dom.boundary.point_at(s);
        let kappa = dom.boundary.geodesic_curvature_at(chart, s, delta)?;
        let normal = dom.boundary.inner_normal_at(chart, s, delta)?;
        let h_cyl0 = chart.cylinder_mean_curvature(y, normal, kappa)?;
        let mut t = 2.0 * h;
        let mut worst = f64::INFINITY;
        let mut hit = false;
        while t < dom.reach_estimate {
            let p = [y[0] + t * normal[0], y[1] + t * normal[1]];
            if let Some(v) = interp(p) {
                hit = true;
                worst = worst.min(v - h_cyl0);
            }
            t += h;
        }
        if !hit {
            skipped += 1;
            continue;
        }
        samples.push(SampleRow { x1: y[0], x2: y[1], z: 0.0, lhs: h_cyl0, rhs: h_cyl0 + worst, margin: worst });
    }
    let tol = 1e-6 + 4.0 * h;
    Ok(ConditionReport::from_samples("cylinder_monotonicity", tol, skipped, samples))
}
