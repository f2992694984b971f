//! Base-chart geometry and the ambient quantities of the warped product.
//!
//! A chart carries the base metric `g`, the warping factor `rho = |Y|` (the
//! length of the Killing field), and derived data: Christoffel symbols, the
//! base Ricci tensor, and the tangential acceleration of the Killing flow.
//! The ambient metric is always `g + rho^2 dz^2`; no independent ambient
//! input is accepted. Everything else — the flow-line curvature, the
//! curvature of translated hypersurfaces, the ambient Ricci bound — is
//! computed from `(g, rho)` alone.
//!
//! Sign conventions: hypersurface curvatures are taken with respect to an
//! explicitly supplied unit normal; for a closed convex boundary curve the
//! inner normal gives positive curvature.

use crate::{Error, Result};

/// Chart point / chart vector in 2 base dimensions.
pub type Vec2 = [f64; 2];

/// Symmetric 2x2 tensor in chart components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { xx: 0.0, xy: 0.0, yy: 0.0 };

    pub fn identity() -> Sym2 {
        Sym2 { xx: 1.0, xy: 0.0, yy: 1.0 }
    }

    pub fn diag(a: f64, b: f64) -> Sym2 {
        Sym2 { xx: a, xy: 0.0, yy: b }
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn inverse(&self) -> Sym2 {
        let d = self.det();
        Sym2 { xx: self.yy / d, xy: -self.xy / d, yy: self.xx / d }
    }

    /// Quadratic form v^T S v.
    pub fn quad(&self, v: Vec2) -> f64 {
        self.xx * v[0] * v[0] + 2.0 * self.xy * v[0] * v[1] + self.yy * v[1] * v[1]
    }

    /// Bilinear form a^T S b.
    pub fn bilin(&self, a: Vec2, b: Vec2) -> f64 {
        self.xx * a[0] * b[0] + self.xy * (a[0] * b[1] + a[1] * b[0]) + self.yy * a[1] * b[1]
    }

    /// Matrix-vector product S v.
    pub fn mul(&self, v: Vec2) -> Vec2 {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    /// Smallest eigenvalue in the ordinary (Euclidean) sense.
    pub fn eig_min(&self) -> f64 {
        let tr = self.xx + self.yy;
        let disc = ((self.xx - self.yy) * 0.5).hypot(self.xy);
        0.5 * tr - disc
    }

    /// Smallest generalized eigenvalue of `S v = lambda G v` for SPD `G`.
    ///
    /// This is the minimum of S(v, v) over G-unit vectors v, so the result is
    /// invariant under any change of the direction basis.
    pub fn gen_eig_min(&self, g: &Sym2) -> f64 {
        // det(S - lambda G) = a lambda^2 + b lambda + c
        let a = g.det();
        let b = -(self.xx * g.yy + self.yy * g.xx - 2.0 * self.xy * g.xy);
        let c = self.det();
        let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
        // a = det g > 0, so the smaller root is (-b - disc) / (2a).
        (-b - disc) / (2.0 * a)
    }

    /// Largest absolute generalized eigenvalue against SPD `G` (operator norm
    /// of the associated endomorphism).
    pub fn gen_eig_max_abs(&self, g: &Sym2) -> f64 {
        let a = g.det();
        let b = -(self.xx * g.yy + self.yy * g.xx - 2.0 * self.xy * g.xy);
        let c = self.det();
        let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
        let lo = (-b - disc) / (2.0 * a);
        let hi = (-b + disc) / (2.0 * a);
        lo.abs().max(hi.abs())
    }
}

/// Christoffel symbols of the base metric: `gamma[k]` is the symmetric
/// matrix Gamma^k_{ij}.
#[derive(Debug, Clone, Copy)]
pub struct Christoffel {
    pub gamma: [Sym2; 2],
}

impl Christoffel {
    pub const ZERO: Christoffel = Christoffel { gamma: [Sym2::ZERO, Sym2::ZERO] };

    /// Contraction Gamma^k_{ij} w_k for a covector w, returned as the
    /// symmetric matrix (i, j) -> Gamma^k_{ij} w_k.
    pub fn contract_covector(&self, w: Vec2) -> Sym2 {
        Sym2 {
            xx: self.gamma[0].xx * w[0] + self.gamma[1].xx * w[1],
            xy: self.gamma[0].xy * w[0] + self.gamma[1].xy * w[1],
            yy: self.gamma[0].yy * w[0] + self.gamma[1].yy * w[1],
        }
    }
}

pub type ScalarFn = Box<dyn Fn(Vec2) -> f64 + Send + Sync>;
pub type VectorFn = Box<dyn Fn(Vec2) -> Vec2 + Send + Sync>;
pub type TensorFn = Box<dyn Fn(Vec2) -> Sym2 + Send + Sync>;
pub type ChristoffelFn = Box<dyn Fn(Vec2) -> Christoffel + Send + Sync>;
pub type GuardFn = Box<dyn Fn(Vec2) -> bool + Send + Sync>;

/// Base manifold chart: metric, warping factor, and derived quantities.
///
/// Analytic callbacks for derivatives take precedence; when absent, central
/// finite differences with step `1e-5 * scale` are used. The chart guard
/// marks the validity region (for instance `x1 > 0` on the rotational
/// preset); evaluations outside it raise a domain error.
pub struct GeometryChart {
    name: String,
    dim: usize,
    metric: TensorFn,
    rho: ScalarFn,
    rho_grad: Option<VectorFn>,
    rho_hess: Option<TensorFn>,
    ricci_base: Option<TensorFn>,
    christoffel: Option<ChristoffelFn>,
    guard: GuardFn,
    scale: f64,
}

impl GeometryChart {
    /// Flat product geometry: `g = I`, `rho = 1`. The ambient is the
    /// Riemannian product of the plane with a line.
    pub fn euclidean() -> GeometryChart {
        GeometryChart {
            name: "euclidean".into(),
            dim: 2,
            metric: Box::new(|_| Sym2::identity()),
            rho: Box::new(|_| 1.0),
            rho_grad: Some(Box::new(|_| [0.0, 0.0])),
            rho_hess: Some(Box::new(|_| Sym2::ZERO)),
            ricci_base: Some(Box::new(|_| Sym2::ZERO)),
            christoffel: Some(Box::new(|_| Christoffel::ZERO)),
            guard: Box::new(|_| true),
            scale: 1.0,
        }
    }

    /// Rotational geometry: chart `(r, z)` on the meridian half-plane of
    /// flat 3-space, `g = I`, `rho = r`. The Killing field is the rotation
    /// field; graphs over this chart are helicoidal-type surfaces.
    pub fn rotational() -> GeometryChart {
        GeometryChart {
            name: "rotational".into(),
            dim: 2,
            metric: Box::new(|_| Sym2::identity()),
            rho: Box::new(|x| x[0]),
            rho_grad: Some(Box::new(|_| [1.0, 0.0])),
            rho_hess: Some(Box::new(|_| Sym2::ZERO)),
            ricci_base: Some(Box::new(|_| Sym2::ZERO)),
            christoffel: Some(Box::new(|_| Christoffel::ZERO)),
            guard: Box::new(|x| x[0] > 0.0),
            scale: 1.0,
        }
    }

    /// Totally geodesic leaf of hyperbolic 3-space in the half-space model:
    /// chart `(s, t)` with `t > 0`, `g = I / t^2`, `rho = 1/t`. The Killing
    /// field is a horizontal translation of the half-space.
    pub fn hyperbolic_leaf() -> GeometryChart {
        GeometryChart {
            name: "hyperbolic_leaf".into(),
            dim: 2,
            metric: Box::new(|x| {
                let w = 1.0 / (x[1] * x[1]);
                Sym2::diag(w, w)
            }),
            rho: Box::new(|x| 1.0 / x[1]),
            rho_grad: Some(Box::new(|x| [0.0, -1.0 / (x[1] * x[1])])),
            rho_hess: Some(Box::new(|x| {
                // Covariant Hessian of 1/t equals rho * g = t^{-3} I.
                let w = 1.0 / (x[1] * x[1] * x[1]);
                Sym2::diag(w, w)
            })),
            ricci_base: Some(Box::new(|x| {
                // Constant curvature -1: Ric = -g.
                let w = -1.0 / (x[1] * x[1]);
                Sym2::diag(w, w)
            })),
            christoffel: Some(Box::new(|x| {
                let it = 1.0 / x[1];
                Christoffel {
                    gamma: [
                        Sym2 { xx: 0.0, xy: -it, yy: 0.0 },
                        Sym2 { xx: it, xy: 0.0, yy: -it },
                    ],
                }
            })),
            guard: Box::new(|x| x[1] > 0.0),
            scale: 1.0,
        }
    }

    /// Chart from user callbacks; derivative callbacks are optional and
    /// fall back to finite differences.
    pub fn custom(
        name: impl Into<String>,
        metric: TensorFn,
        rho: ScalarFn,
        guard: GuardFn,
        scale: f64,
    ) -> GeometryChart {
        GeometryChart {
            name: name.into(),
            dim: 2,
            metric,
            rho,
            rho_grad: None,
            rho_hess: None,
            ricci_base: None,
            christoffel: None,
            guard,
            scale,
        }
    }

    /// Attach analytic (or pre-differenced) callbacks for the derived
    /// quantities; they take precedence over the finite-difference
    /// fallbacks. Tabulated charts use this to supply lattice-differenced
    /// data, since differencing a bilinear interpolant directly would pick
    /// up its cell-boundary kinks.
    pub fn with_derivative_callbacks(
        mut self,
        rho_grad: Option<VectorFn>,
        rho_hess: Option<TensorFn>,
        ricci_base: Option<TensorFn>,
        christoffel: Option<ChristoffelFn>,
    ) -> GeometryChart {
        if rho_grad.is_some() {
            self.rho_grad = rho_grad;
        }
        if rho_hess.is_some() {
            self.rho_hess = rho_hess;
        }
        if ricci_base.is_some() {
            self.ricci_base = ricci_base;
        }
        if christoffel.is_some() {
            self.christoffel = christoffel;
        }
        self
    }

    pub fn preset(name: &str) -> Result<GeometryChart> {
        match name {
            "euclidean" => Ok(GeometryChart::euclidean()),
            "rotational" => Ok(GeometryChart::rotational()),
            "hyperbolic_leaf" => Ok(GeometryChart::hyperbolic_leaf()),
            other => Err(Error::input(format!("unknown geometry preset `{other}`"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Finite-difference step used by all derivative fallbacks.
    pub fn fd_step(&self) -> f64 {
        1e-5 * self.scale
    }

    pub fn contains(&self, x: Vec2) -> bool {
        (self.guard)(x)
    }

    fn guard_point(&self, x: Vec2) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideChart { point: (x[0], x[1]) })
        }
    }

    pub fn metric(&self, x: Vec2) -> Result<Sym2> {
        self.guard_point(x)?;
        Ok((self.metric)(x))
    }

    pub fn metric_inv(&self, x: Vec2) -> Result<Sym2> {
        Ok(self.metric(x)?.inverse())
    }

    pub fn rho(&self, x: Vec2) -> Result<f64> {
        self.guard_point(x)?;
        let r = (self.rho)(x);
        if !(r > 0.0) {
            return Err(Error::Geometry(format!(
                "warping factor rho = {r} non-positive at ({}, {})",
                x[0], x[1]
            )));
        }
        Ok(r)
    }

    pub fn rho_grad(&self, x: Vec2) -> Result<Vec2> {
        self.guard_point(x)?;
        if let Some(f) = &self.rho_grad {
            return Ok(f(x));
        }
        let h = self.fd_step();
        let mut out = [0.0; 2];
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            out[k] = ((self.rho)(xp) - (self.rho)(xm)) / (2.0 * h);
        }
        Ok(out)
    }

    /// Covariant Hessian of rho (chart second derivatives corrected by the
    /// Christoffel symbols).
    pub fn rho_hess(&self, x: Vec2) -> Result<Sym2> {
        self.guard_point(x)?;
        if let Some(f) = &self.rho_hess {
            return Ok(f(x));
        }
        let h = self.fd_step();
        let r = |p: Vec2| (self.rho)(p);
        let d2 = fd_second(&r, x, h);
        let grad = self.rho_grad(x)?;
        let gamma = self.christoffels(x)?;
        let corr = gamma.contract_covector(grad);
        Ok(Sym2 { xx: d2.xx - corr.xx, xy: d2.xy - corr.xy, yy: d2.yy - corr.yy })
    }

    pub fn christoffels(&self, x: Vec2) -> Result<Christoffel> {
        self.guard_point(x)?;
        if let Some(f) = &self.christoffel {
            return Ok(f(x));
        }
        Ok(self.christoffels_fd(x))
    }

    fn christoffels_fd(&self, x: Vec2) -> Christoffel {
        let h = self.fd_step();
        // dg[l] = partial_l g
        let mut dg = [Sym2::ZERO; 2];
        for l in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[l] += h;
            xm[l] -= h;
            let gp = (self.metric)(xp);
            let gm = (self.metric)(xm);
            dg[l] = Sym2 {
                xx: (gp.xx - gm.xx) / (2.0 * h),
                xy: (gp.xy - gm.xy) / (2.0 * h),
                yy: (gp.yy - gm.yy) / (2.0 * h),
            };
        }
        let ginv = (self.metric)(x).inverse();
        let g_at = |t: &Sym2, i: usize, j: usize| match (i, j) {
            (0, 0) => t.xx,
            (1, 1) => t.yy,
            _ => t.xy,
        };
        let ginv_at = |i: usize, j: usize| g_at(&ginv, i, j);
        let mut gamma = [Sym2::ZERO; 2];
        for k in 0..2 {
            let mut vals = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in i..2 {
                    let mut s = 0.0;
                    for l in 0..2 {
                        s += ginv_at(k, l)
                            * (g_at(&dg[i], j, l) + g_at(&dg[j], i, l) - g_at(&dg[l], i, j));
                    }
                    vals[i][j] = 0.5 * s;
                }
            }
            gamma[k] = Sym2 { xx: vals[0][0], xy: vals[0][1], yy: vals[1][1] };
        }
        Christoffel { gamma }
    }

    /// Ricci tensor of the base `(M, g)`; for a surface this is `K g` with
    /// `K` the Gauss curvature, computed here from finite differences of the
    /// Christoffel symbols when no analytic callback is given.
    pub fn ricci_base(&self, x: Vec2) -> Result<Sym2> {
        self.guard_point(x)?;
        if let Some(f) = &self.ricci_base {
            return Ok(f(x));
        }
        // R^l_{kij} partial terms via FD of Gamma; for n = 2 it suffices to
        // compute R_{1212} and use Ric = K g.
        let h = self.fd_step().sqrt() * self.scale.sqrt() * 1e-1; // coarser step: second-level FD
        let gam = |p: Vec2| {
            if let Some(f) = &self.christoffel {
                f(p)
            } else {
                self.christoffels_fd(p)
            }
        };
        let g0 = gam(x);
        let mut dgam = [Christoffel::ZERO; 2];
        for l in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[l] += h;
            xm[l] -= h;
            let gp = gam(xp);
            let gm = gam(xm);
            for k in 0..2 {
                dgam[l].gamma[k] = Sym2 {
                    xx: (gp.gamma[k].xx - gm.gamma[k].xx) / (2.0 * h),
                    xy: (gp.gamma[k].xy - gm.gamma[k].xy) / (2.0 * h),
                    yy: (gp.gamma[k].yy - gm.gamma[k].yy) / (2.0 * h),
                };
            }
        }
        let at = |t: &Sym2, i: usize, j: usize| match (i, j) {
            (0, 0) => t.xx,
            (1, 1) => t.yy,
            _ => t.xy,
        };
        // R^k_{i 0 1} = d_0 Gamma^k_{1 i} - d_1 Gamma^k_{0 i}
        //             + Gamma^k_{0 m} Gamma^m_{1 i} - Gamma^k_{1 m} Gamma^m_{0 i}
        let mut riem = [[0.0; 2]; 2]; // riem[k][i] = R^k_{i 0 1}
        for k in 0..2 {
            for i in 0..2 {
                let mut v = at(&dgam[0].gamma[k], 1, i) - at(&dgam[1].gamma[k], 0, i);
                for m in 0..2 {
                    v += at(&g0.gamma[k], 0, m) * at(&g0.gamma[m], 1, i)
                        - at(&g0.gamma[k], 1, m) * at(&g0.gamma[m], 0, i);
                }
                riem[k][i] = v;
            }
        }
        let g = (self.metric)(x);
        // R_{1 2 1 2} in chart indices (0,1,0,1): lower the first index of
        // R^k_{1 0 1} ... for n = 2, R_{0101} = g_{0k} R^k_{1 0 1}.
        let r0101 = g.xx * riem[0][1] + g.xy * riem[1][1];
        let k_gauss = r0101 / g.det();
        Ok(Sym2 { xx: k_gauss * g.xx, xy: k_gauss * g.xy, yy: k_gauss * g.yy })
    }

    /// Chart representation of the tangential part of the acceleration of
    /// the Killing flow, `-1/2 g^{-1} d(rho^2)`. Pairing it with any chart
    /// vector under `g` reproduces the metric derivative `-1/2 d(rho^2)(w)`.
    pub fn tangential_killing_acceleration(&self, x: Vec2) -> Result<Vec2> {
        let cov = self.killing_acceleration_covector(x)?;
        let ginv = self.metric_inv(x)?;
        Ok(ginv.mul(cov))
    }

    /// Covector form `-1/2 d(rho^2)`, the building block of the flow-line
    /// curvature and of the first-order drift term of the operator.
    pub fn killing_acceleration_covector(&self, x: Vec2) -> Result<Vec2> {
        let r = self.rho(x)?;
        let dr = self.rho_grad(x)?;
        Ok([-r * dr[0], -r * dr[1]])
    }

    /// Minimum of the ambient Ricci form over g-unit directions tangent to
    /// the base: the smaller generalized eigenvalue of
    /// `Ric_g - Hess rho / rho` against `g`.
    pub fn ambient_ricci_min(&self, x: Vec2) -> Result<f64> {
        let ric = self.ricci_base(x)?;
        let hess = self.rho_hess(x)?;
        let rho = self.rho(x)?;
        let g = self.metric(x)?;
        let t = Sym2 {
            xx: ric.xx - hess.xx / rho,
            xy: ric.xy - hess.xy / rho,
            yy: ric.yy - hess.yy / rho,
        };
        let v = t.gen_eig_min(&g);
        if !v.is_finite() {
            return Err(Error::numeric("non-finite curvature data", (x[0], x[1])));
        }
        Ok(v)
    }

    /// Principal curvature of the flow direction on the translated
    /// hypersurface through `x` with unit normal `normal`:
    /// `kappa = rho^{-2} <acceleration, N>_g`. Linear in the normal and
    /// antisymmetric under orientation reversal.
    pub fn flow_curvature(&self, x: Vec2, normal: Vec2) -> Result<f64> {
        let cov = self.killing_acceleration_covector(x)?;
        let rho = self.rho(x)?;
        Ok((cov[0] * normal[0] + cov[1] * normal[1]) / (rho * rho))
    }

    /// Mean curvature of the translation of a hypersurface along the flow:
    /// `H = ((n-1) H_base + kappa) / n` where `H_base` is the curvature of
    /// the hypersurface inside the base and both are taken with respect to
    /// the same g-unit normal.
    pub fn cylinder_mean_curvature(
        &self,
        x: Vec2,
        normal: Vec2,
        base_curvature: f64,
    ) -> Result<f64> {
        let g = self.metric(x)?;
        let norm = g.quad(normal).sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::Contract(format!(
                "normal not g-unit at ({}, {}): |N|_g = {norm}",
                x[0], x[1]
            )));
        }
        let n = self.dim as f64;
        let kappa = self.flow_curvature(x, normal)?;
        Ok(((n - 1.0) * base_curvature + kappa) / n)
    }

    /// g-normalize a chart vector. Errors on zero vectors.
    pub fn normalize(&self, x: Vec2, v: Vec2) -> Result<Vec2> {
        let g = self.metric(x)?;
        let n = g.quad(v).sqrt();
        if !(n > 0.0) {
            return Err(Error::Geometry(format!(
                "cannot normalize zero vector at ({}, {})",
                x[0], x[1]
            )));
        }
        Ok([v[0] / n, v[1] / n])
    }
}

fn fd_second(f: &dyn Fn(Vec2) -> f64, x: Vec2, h: f64) -> Sym2 {
    let fv = |dx: f64, dy: f64| f([x[0] + dx, x[1] + dy]);
    let f0 = fv(0.0, 0.0);
    let xx = (fv(h, 0.0) - 2.0 * f0 + fv(-h, 0.0)) / (h * h);
    let yy = (fv(0.0, h) - 2.0 * f0 + fv(0.0, -h)) / (h * h);
    let xy = (fv(h, h) - fv(h, -h) - fv(-h, h) + fv(-h, -h)) / (4.0 * h * h);
    Sym2 { xx, xy, yy }
}

/// Per-node cache of the ambient quantities entering the discrete operator
/// and the hypothesis checkers.
#[derive(Debug, Clone)]
pub struct AmbientTerms {
    pub rho: Vec<f64>,
    pub inv_rho2: Vec<f64>,
    /// Covector `-1/2 d(rho^2)` per node; pairs directly with chart
    /// gradients (vectors) to give `<acceleration, v>_g`.
    pub accel_cov: Vec<Vec2>,
    pub ricci_min: Vec<f64>,
    pub rho_inf: f64,
    pub rho_sup: f64,
    /// sup over the nodes of the g-norm of the flow acceleration.
    pub accel_sup: f64,
}

impl AmbientTerms {
    /// Evaluate the cache at the given chart points. Points are expected to
    /// lie inside the chart; any outside point raises a domain error.
    pub fn compute(chart: &GeometryChart, points: &[Vec2]) -> Result<AmbientTerms> {
        let m = points.len();
        let mut rho = Vec::with_capacity(m);
        let mut inv_rho2 = Vec::with_capacity(m);
        let mut accel_cov = Vec::with_capacity(m);
        let mut ricci_min = Vec::with_capacity(m);
        let mut rho_inf = f64::INFINITY;
        let mut rho_sup = 0.0f64;
        let mut accel_sup = 0.0f64;
        for &x in points {
            let r = chart.rho(x)?;
            let cov = chart.killing_acceleration_covector(x)?;
            let ginv = chart.metric_inv(x)?;
            let a_norm = ginv.quad(cov).sqrt();
            rho_inf = rho_inf.min(r);
            rho_sup = rho_sup.max(r);
            accel_sup = accel_sup.max(a_norm);
            rho.push(r);
            inv_rho2.push(1.0 / (r * r));
            accel_cov.push(cov);
            ricci_min.push(chart.ambient_ricci_min(x)?);
        }
        Ok(AmbientTerms { rho, inv_rho2, accel_cov, ricci_min, rho_inf, rho_sup, accel_sup })
    }
}
