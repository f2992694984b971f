//! Damped Newton and sigma-continuation for the Dirichlet problem, plus
//! uniqueness and comparison probes.
//!
//! One solve is a single logical thread: residual assembly, banded
//! factorization, and the line search run sequentially, so identical
//! configurations reproduce bit-identical iterates. The continuation loop
//! marches the curvature scaling from 0 to 1 with adaptive steps,
//! warm-starting each member from the previous solution shifted by the
//! scaled boundary extension, and halving the step on Newton failure. On
//! definitive failure the report carries the boundary-gradient growth rate,
//! which separates Serrin-type gradient blow-up from plain stagnation.

use crate::conditions::{check_flow_monotonicity, CheckConfig, PrescribedCurvature};
use crate::fields::{BoundaryData, DiscreteField};
use crate::geometry::GeometryChart;
use crate::mesh::{DiscreteDomain, Mask};
use crate::operator::{jacobian, residual, OperatorContext};
use crate::{Error, Result};
use serde::Serialize;

/// Newton iteration controls. The residual tolerance is understood in the
/// infinity norm and is scaled internally by `rho_inf^{-3}` because the
/// residual carries a factor of `W^3 ~ rho^{-3}`.
#[derive(Debug, Clone, Copy)]
pub struct NewtonParams {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub min_step: f64,
}

impl Default for NewtonParams {
    fn default() -> NewtonParams {
        NewtonParams {
            tol: 1e-10,
            max_iter: 30,
            armijo_c: 1e-4,
            backtrack: 0.5,
            min_step: (0.5f64).powi(20),
        }
    }
}

/// Adaptive schedule of the continuation in sigma.
#[derive(Debug, Clone, Copy)]
pub struct SigmaSchedule {
    pub initial_step: f64,
    pub min_step: f64,
    pub growth: f64,
    pub backoff: f64,
}

impl Default for SigmaSchedule {
    fn default() -> SigmaSchedule {
        SigmaSchedule { initial_step: 0.25, min_step: 1e-4, growth: 2.0, backoff: 0.5 }
    }
}

/// Record of one Newton run inside the continuation.
#[derive(Debug, Clone, Serialize)]
pub struct NewtonRecord {
    pub sigma: f64,
    pub iterations: usize,
    pub final_residual: f64,
    /// Accepted line-search step length per iteration.
    pub damping: Vec<f64>,
    pub converged: bool,
    /// Max gradient norm over boundary-adjacent nodes after the run.
    pub boundary_grad_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceDiagnostic {
    pub last_good_sigma: f64,
    /// d(log boundary gradient)/d(sigma) over the last accepted steps.
    pub boundary_gradient_growth_rate: f64,
    pub verdict: String,
}

/// Full continuation record; `converged` is true exactly when the final
/// residual infinity norm reached the effective tolerance at sigma = 1.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub steps: Vec<NewtonRecord>,
    pub converged: bool,
    pub newton_tol_effective: f64,
    pub divergence: Option<DivergenceDiagnostic>,
    pub wall_time_s: f64,
}

fn effective_tol(ctx: &OperatorContext, params: &NewtonParams) -> f64 {
    params.tol / (ctx.rho_inf * ctx.rho_inf * ctx.rho_inf)
}

fn boundary_grad_max(ctx: &OperatorContext, u: &DiscreteField) -> f64 {
    let dom = ctx.domain;
    let mut m = 0.0f64;
    for idx in dom.inside_nodes() {
        if dom.mask[idx] == Mask::BoundaryAdjacent {
            m = m.max(ctx.grad_norm(&u.values, idx));
        }
    }
    m
}

/// Armijo-damped Newton on the interior unknowns. Non-convergence within
/// `max_iter` is reported, not thrown; a singular Jacobian is an error.
pub fn newton_solve(
    ctx: &OperatorContext,
    u0: &DiscreteField,
    params: &NewtonParams,
) -> Result<(DiscreteField, NewtonRecord)> {
    let dom = ctx.domain;
    let tol = effective_tol(ctx, params);
    let mut u = u0.clone();
    let mut r = residual(ctx, &u)?;
    let mut rnorm = r.sup_inside(dom);
    let mut damping = Vec::new();
    let mut iterations = 0usize;
    let mut converged = rnorm <= tol;

    while !converged && iterations < params.max_iter {
        let jac = jacobian(ctx, &u)?;
        let lu = jac.factor()?;
        let mut delta: Vec<f64> = r.values.iter().map(|v| -v).collect();
        for idx in 0..delta.len() {
            if !dom.is_inside(idx) {
                delta[idx] = 0.0;
            }
        }
        lu.solve(&mut delta)?;

        let mut lambda = 1.0f64;
        let mut accepted = false;
        while lambda >= params.min_step {
            let trial = DiscreteField {
                values: u
                    .values
                    .iter()
                    .zip(&delta)
                    .map(|(a, d)| a + lambda * d)
                    .collect(),
            };
            match residual(ctx, &trial) {
                Ok(rt) => {
                    let tnorm = rt.sup_inside(dom);
                    if tnorm <= (1.0 - params.armijo_c * lambda) * rnorm {
                        u = trial;
                        r = rt;
                        rnorm = tnorm;
                        accepted = true;
                        break;
                    }
                }
                Err(Error::Numeric { .. }) => {} // overshoot; shrink the step
                Err(e) => return Err(e),
            }
            lambda *= params.backtrack;
        }
        iterations += 1;
        if !accepted {
            break; // stagnation: no acceptable step
        }
        damping.push(lambda);
        converged = rnorm <= tol;
    }

    let record = NewtonRecord {
        sigma: ctx.sigma,
        iterations,
        final_residual: rnorm,
        damping,
        converged,
        boundary_grad_max: boundary_grad_max(ctx, &u),
    };
    Ok((u, record))
}

/// Continuation in sigma from the trivial member to the target problem.
pub fn continuation_solve(
    chart: &GeometryChart,
    dom: &DiscreteDomain,
    curvature: &PrescribedCurvature,
    phi: &BoundaryData,
    schedule: &SigmaSchedule,
    params: &NewtonParams,
) -> Result<(DiscreteField, SolveReport)> {
    if !(schedule.initial_step > 0.0 && schedule.min_step > 0.0 && schedule.growth >= 1.0) {
        return Err(Error::input("sigma schedule parameters must be positive"));
    }
    let t0 = std::time::Instant::now();
    let mut ctx = OperatorContext::new(chart, dom, curvature, phi, 0.0)?;
    let tol_eff = effective_tol(&ctx, params);

    let mut steps = Vec::new();
    let (mut u, rec0) = newton_solve(&ctx, &DiscreteField::zeros(dom), params)?;
    let base_ok = rec0.converged;
    steps.push(rec0);
    if !base_ok {
        let report = SolveReport {
            steps,
            converged: false,
            newton_tol_effective: tol_eff,
            divergence: Some(DivergenceDiagnostic {
                last_good_sigma: 0.0,
                boundary_gradient_growth_rate: 0.0,
                verdict: "stagnation".into(),
            }),
            wall_time_s: t0.elapsed().as_secs_f64(),
        };
        return Ok((u, report));
    }

    let mut sigma = 0.0f64;
    let mut step = schedule.initial_step;
    while sigma < 1.0 {
        let target = (sigma + step).min(1.0);
        ctx.set_sigma(phi, target)?;
        // warm start: shift by the scaled boundary extension where available
        let trial0 = if phi.has_extension() {
            let dsig = target - sigma;
            let mut t = u.clone();
            for idx in dom.inside_nodes() {
                t.values[idx] += dsig * phi.extension(dom.node_pos(idx))?;
            }
            t
        } else {
            u.clone()
        };
        let (u_next, rec) = newton_solve(&ctx, &trial0, params)?;
        let ok = rec.converged;
        if ok {
            steps.push(rec);
            u = u_next;
            sigma = target;
            step = (step * schedule.growth).min(1.0);
        } else {
            step *= schedule.backoff;
            if step < schedule.min_step {
                steps.push(rec);
                let rate = gradient_growth_rate(&steps);
                let verdict =
                    if rate > 2.0 { "gradient_blowup" } else { "stagnation" }.to_string();
                let report = SolveReport {
                    steps,
                    converged: false,
                    newton_tol_effective: tol_eff,
                    divergence: Some(DivergenceDiagnostic {
                        last_good_sigma: sigma,
                        boundary_gradient_growth_rate: rate,
                        verdict,
                    }),
                    wall_time_s: t0.elapsed().as_secs_f64(),
                };
                return Ok((u, report));
            }
        }
    }

    let report = SolveReport {
        steps,
        converged: true,
        newton_tol_effective: tol_eff,
        divergence: None,
        wall_time_s: t0.elapsed().as_secs_f64(),
    };
    Ok((u, report))
}

fn gradient_growth_rate(steps: &[NewtonRecord]) -> f64 {
    let good: Vec<&NewtonRecord> = steps.iter().filter(|r| r.converged).collect();
    if good.len() < 2 {
        return 0.0;
    }
    let a = good[good.len() - 2];
    let b = good[good.len() - 1];
    let dsig = b.sigma - a.sigma;
    if dsig <= 0.0 || a.boundary_grad_max <= 0.0 || b.boundary_grad_max <= 0.0 {
        return 0.0;
    }
    (b.boundary_grad_max / a.boundary_grad_max).ln() / dsig
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub runs: usize,
    pub all_converged: bool,
    pub max_pairwise_sup_diff: f64,
    pub threshold: f64,
    /// True when every run converged and all pairwise gaps sit below the
    /// threshold; false with `all_converged` false means inconclusive.
    pub consistent: bool,
}

/// Solve from several initial fields sharing the Dirichlet trace and compare
/// the results pairwise. Requires the flow-monotonicity check to pass.
pub fn uniqueness_probe(
    chart: &GeometryChart,
    dom: &DiscreteDomain,
    curvature: &PrescribedCurvature,
    phi: &BoundaryData,
    inits: &[DiscreteField],
    params: &NewtonParams,
    z_bar: f64,
) -> Result<UniquenessReport> {
    let mono = check_flow_monotonicity(curvature, dom, z_bar, &CheckConfig::default())?;
    if !mono.pass {
        return Err(Error::Precondition(format!(
            "flow monotonicity fails (margin {}); uniqueness probe refuses to assert",
            mono.margin
        )));
    }
    let ctx = OperatorContext::new(chart, dom, curvature, phi, 1.0)?;
    let tol_eff = effective_tol(&ctx, params);
    let mut solutions = Vec::new();
    let mut all_converged = true;
    for u0 in inits {
        let (u, rec) = newton_solve(&ctx, u0, params)?;
        all_converged &= rec.converged;
        solutions.push(u);
    }
    let mut worst = 0.0f64;
    for i in 0..solutions.len() {
        for j in (i + 1)..solutions.len() {
            let (d, _) = solutions[i].sup_diff(&solutions[j], dom);
            worst = worst.max(d);
        }
    }
    let threshold = 10.0 * tol_eff;
    Ok(UniquenessReport {
        runs: inits.len(),
        all_converged,
        max_pairwise_sup_diff: worst,
        threshold,
        consistent: all_converged && worst <= threshold,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub ordered: bool,
    pub worst_violation: f64,
    pub worst_node: (f64, f64),
    pub tol: f64,
}

/// Solve with ordered boundary data and check that the solutions order the
/// same way at every node.
pub fn comparison_probe(
    chart: &GeometryChart,
    dom: &DiscreteDomain,
    curvature: &PrescribedCurvature,
    phi_low: &BoundaryData,
    phi_high: &BoundaryData,
    schedule: &SigmaSchedule,
    params: &NewtonParams,
    z_bar: f64,
) -> Result<ComparisonReport> {
    let mono = check_flow_monotonicity(curvature, dom, z_bar, &CheckConfig::default())?;
    if !mono.pass {
        return Err(Error::Precondition(format!(
            "flow monotonicity fails (margin {}); comparison probe refuses to assert",
            mono.margin
        )));
    }
    // precondition: ordered boundary data
    let total = dom.boundary.total_len();
    for k in 0..512 {
        let s = total * k as f64 / 512.0;
        let p = dom.boundary.point_at(s);
        let lo = phi_low.at_boundary(p, s, total);
        let hi = phi_high.at_boundary(p, s, total);
        if lo > hi + 1e-14 {
            return Err(Error::Precondition(format!(
                "boundary data not ordered at s = {s}: {lo} > {hi}"
            )));
        }
    }
    let (u_low, rep_low) = continuation_solve(chart, dom, curvature, phi_low, schedule, params)?;
    let (u_high, rep_high) =
        continuation_solve(chart, dom, curvature, phi_high, schedule, params)?;
    if !(rep_low.converged && rep_high.converged) {
        return Err(Error::Solver("comparison probe: a continuation run failed".into()));
    }
    let ctx = OperatorContext::new(chart, dom, curvature, phi_low, 1.0)?;
    let tol = 10.0 * effective_tol(&ctx, params);
    let mut worst = 0.0f64;
    let mut worst_node = (f64::NAN, f64::NAN);
    for idx in dom.inside_nodes() {
        let gap = u_low.values[idx] - u_high.values[idx];
        if gap > worst {
            worst = gap;
            let p = dom.node_pos(idx);
            worst_node = (p[0], p[1]);
        }
    }
    Ok(ComparisonReport { ordered: worst <= tol, worst_violation: worst, worst_node, tol })
}
