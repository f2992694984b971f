//! Command implementations and report writing.

use crate::assemble::{build_boundary, build_chart, build_curvature, build_polyline};
use crate::config::{BarrierConfig, ReferenceSpec, RunConfig};
use crate::{CommonArgs, ReferenceFlag};
use anyhow::{anyhow, bail, Context, Result};
use pmcgraph::barriers::{
    build_boundary_barrier, build_height_barrier, certify_boundary_barrier,
    check_solution_bounds, default_a_sweep, verify_gradient_dichotomy, BoundsReport,
    CertificationReport,
};
use pmcgraph::conditions::{
    check_cylinder_monotonicity, check_flow_monotonicity, check_ricci_slope, check_serrin,
    CheckConfig, ConditionReport, PrescribedCurvature,
};
use pmcgraph::fields::{BoundaryData, DiscreteField};
use pmcgraph::geometry::GeometryChart;
use pmcgraph::io::{fmt_f64, write_grid_csv};
use pmcgraph::mesh::DiscreteDomain;
use pmcgraph::operator::{residual, OperatorContext};
use pmcgraph::solver::{continuation_solve, NewtonParams, SigmaSchedule, SolveReport};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Map an error chain onto the exit-status contract: malformed input and
/// missing files are usage errors (2), everything else that escapes a
/// command is a mathematical failure (1).
pub fn classify_error(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<pmcgraph::Error>() {
            return match core {
                pmcgraph::Error::Input(_)
                | pmcgraph::Error::Io(_)
                | pmcgraph::Error::Resolution(_)
                | pmcgraph::Error::OutsideChart { .. }
                | pmcgraph::Error::Contract(_) => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    2
}

struct Setup {
    cfg: RunConfig,
    chart: GeometryChart,
    dom: DiscreteDomain,
    curvature: PrescribedCurvature,
    phi: BoundaryData,
    out: PathBuf,
}

fn setup(args: &CommonArgs) -> Result<Setup> {
    let cfg = RunConfig::load(&args.config)?;
    let chart = build_chart(&cfg.geometry)?;
    let poly = build_polyline(&cfg)?;
    let dom = DiscreteDomain::build(poly, cfg.resolution, &chart)?;
    let curvature = build_curvature(&cfg.curvature)?;
    let phi = build_boundary(&cfg.boundary)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    std::fs::create_dir_all(&out)
        .with_context(|| format!("cannot create output dir `{}`", out.display()))?;
    Ok(Setup { cfg, chart, dom, curvature, phi, out })
}

fn newton_params(cfg: &RunConfig) -> NewtonParams {
    NewtonParams {
        tol: cfg.solver.newton_tol,
        max_iter: cfg.solver.max_iter,
        ..NewtonParams::default()
    }
}

fn sigma_schedule(cfg: &RunConfig) -> SigmaSchedule {
    SigmaSchedule {
        initial_step: cfg.solver.sigma_step,
        min_step: cfg.solver.sigma_min_step,
        growth: cfg.solver.growth,
        backoff: cfg.solver.backoff,
    }
}

fn check_config(cfg: &RunConfig) -> CheckConfig {
    CheckConfig {
        tol_mono: cfg.tolerances.tol_mono,
        tol_serrin: cfg.tolerances.tol_serrin,
        tol_ricci: cfg.tolerances.tol_ricci,
        ..CheckConfig::default()
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text.as_bytes())?;
    Ok(())
}

/// Reproducibility manifest: enough to rerun the exact configuration.
fn write_manifest(args: &CommonArgs, cfg: &RunConfig, out: &Path, command: &str) -> Result<()> {
    let bytes = std::fs::read(&args.config)?;
    let digest = Sha256::digest(&bytes);
    let manifest = serde_json::json!({
        "command": command,
        "config_path": args.config.display().to_string(),
        "config_sha256": hex::encode(digest),
        "crate_version": env!("CARGO_PKG_VERSION"),
        "resolution": cfg.resolution,
        "newton_tol": cfg.solver.newton_tol,
        "tolerances": {
            "tol_mono": cfg.tolerances.tol_mono,
            "tol_serrin": cfg.tolerances.tol_serrin,
            "tol_ricci": cfg.tolerances.tol_ricci,
        },
        "flags": {
            "force": args.force,
            "reference": format!("{:?}", args.reference),
            "threads": args.threads,
        },
    });
    write_json(&out.join("manifest.json"), &manifest)
}

fn write_condition_report(out: &Path, rep: &ConditionReport) -> Result<PathBuf> {
    let csv_path = out.join(format!("check_{}_samples.csv", rep.check));
    let mut f = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    writeln!(f, "x1,x2,z,lhs,rhs,margin")?;
    for s in &rep.samples {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            fmt_f64(s.x1),
            fmt_f64(s.x2),
            fmt_f64(s.z),
            fmt_f64(s.lhs),
            fmt_f64(s.rhs),
            fmt_f64(s.margin)
        )?;
    }
    drop(f);
    let json = serde_json::json!({
        "check": rep.check,
        "pass": rep.pass,
        "margin": rep.margin,
        "worst_location": rep.worst_location,
        "tolerance": rep.tolerance,
        "skipped": rep.skipped,
        "samples_csv_path": csv_path.display().to_string(),
    });
    let json_path = out.join(format!("check_{}.json", rep.check));
    write_json(&json_path, &json)?;
    Ok(json_path)
}

/// The sampling range in z for the flow-monotonicity check: the height
/// barrier bound is the a-priori cover for sup |u|.
fn z_range(setup: &Setup) -> Result<f64> {
    let ctx = OperatorContext::new(&setup.chart, &setup.dom, &setup.curvature, &setup.phi, 1.0)?;
    let hb = build_height_barrier(&ctx, &setup.phi, setup.cfg.barriers.mu_pad)?;
    let cover = hb.sup_bound() * 1.05 + 1e-6;
    // stay inside the evaluation bounds of tabulated curvature data
    Ok(cover.min(setup.curvature.z_max.abs().min(setup.curvature.z_min.abs())))
}

fn run_hypothesis_checks(s: &Setup) -> Result<(Vec<ConditionReport>, bool)> {
    let ccfg = check_config(&s.cfg);
    let z_bar = z_range(s)?;
    let flow = check_flow_monotonicity(&s.curvature, &s.dom, z_bar, &ccfg)?;
    let serrin = check_serrin(&s.curvature, &s.dom, &s.chart, &s.phi, &ccfg)?;
    let ricci = check_ricci_slope(&s.curvature, &s.dom, &s.chart, &s.phi, &ccfg)?;
    let pass = flow.pass && serrin.pass && ricci.pass;
    Ok((vec![flow, serrin, ricci], pass))
}

pub fn run_check(args: &CommonArgs) -> Result<u8> {
    let s = setup(args)?;
    write_manifest(args, &s.cfg, &s.out, "check")?;
    let (mut reports, pass) = run_hypothesis_checks(&s)?;
    // diagnostic, not part of the gate
    let ccfg = check_config(&s.cfg);
    reports.push(check_cylinder_monotonicity(&s.dom, &s.chart, &ccfg)?);
    for rep in &reports {
        write_condition_report(&s.out, rep)?;
        println!(
            "{:<24} {} margin {:+.6e} (tol {:.1e}, skipped {})",
            rep.check,
            if rep.pass { "pass" } else { "FAIL" },
            rep.margin,
            rep.tolerance,
            rep.skipped
        );
    }
    Ok(if pass { 0 } else { 1 })
}

fn reference_field(
    cfg: &RunConfig,
    dom: &DiscreteDomain,
) -> Result<Option<DiscreteField>> {
    let f: Box<dyn Fn([f64; 2]) -> f64> = match &cfg.reference {
        ReferenceSpec::None | ReferenceSpec::SelfFinest => return Ok(None),
        ReferenceSpec::Cap { radius } => {
            let r2 = radius * radius;
            let rim = match cfg.domain {
                crate::config::DomainShape::Disk { center, radius: rd } => {
                    let off = r2 - rd * rd;
                    if off <= 0.0 {
                        bail!("cap reference needs sphere radius above the disk radius");
                    }
                    (center, off.sqrt())
                }
                _ => bail!("cap reference needs a disk domain"),
            };
            let (center, base) = rim;
            Box::new(move |p: [f64; 2]| {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                (r2 - dx * dx - dy * dy).sqrt() - base
            })
        }
        ReferenceSpec::Helicoid { c } => {
            let c = *c;
            Box::new(move |p: [f64; 2]| p[1] / c)
        }
        ReferenceSpec::TiltedPlane { lambda } => {
            let l = *lambda;
            Box::new(move |p: [f64; 2]| l * p[1])
        }
    };
    Ok(Some(DiscreteField::from_fn(dom, &f)))
}

#[derive(Serialize)]
struct SolveArtifacts {
    converged: bool,
    checks_passed: bool,
    forced: bool,
    sup_error: Option<f64>,
    report: SolveReport,
    floor_activations: u64,
}

fn barrier_band_csv(path: &Path, cert: &CertificationReport) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "x1,x2,d,q_super,q_sub")?;
    for n in &cert.nodes {
        writeln!(
            f,
            "{},{},{},{},{}",
            fmt_f64(n.x1),
            fmt_f64(n.x2),
            fmt_f64(n.d),
            fmt_f64(n.q_super),
            fmt_f64(n.q_sub)
        )?;
    }
    Ok(())
}

fn run_barrier_stage(
    s: &Setup,
    u: Option<&DiscreteField>,
    bc: &BarrierConfig,
) -> Result<(Option<CertificationReport>, Option<BoundsReport>)> {
    let ctx = OperatorContext::new(&s.chart, &s.dom, &s.curvature, &s.phi, 1.0)?;
    let hb = build_height_barrier(&ctx, &s.phi, bc.mu_pad)?;
    let bb = build_boundary_barrier(&ctx, &s.phi, hb.sup_bound())?;
    write_json(&s.out.join("barrier_boundary.json"), &bb)?;
    write_json(&s.out.join("barrier_height.json"), &hb)?;
    let mut cert_out = None;
    if bc.certify {
        let cert = certify_boundary_barrier(&ctx, &bb, &s.phi)?;
        barrier_band_csv(&s.out.join("barrier_band.csv"), &cert)?;
        write_json(&s.out.join("barrier_certification.json"), &cert)?;
        println!(
            "barrier certification: {} ({} collar nodes, worst margins {:+.3e} / {:+.3e})",
            if cert.pass { "pass" } else { "FAIL" },
            cert.band_nodes,
            cert.worst_super_margin,
            cert.worst_sub_margin
        );
        cert_out = Some(cert);
    }
    let mut bounds_out = None;
    if bc.bounds {
        let u = u.ok_or_else(|| anyhow!("bounds check needs a solved field"))?;
        let rep = check_solution_bounds(&ctx, u, &bb, &hb, &s.phi)?;
        write_json(&s.out.join("bounds.json"), &rep)?;
        println!(
            "solution bounds: {} (height margin {:+.3e}, collar margin {:+.3e})",
            if rep.pass { "pass" } else { "FAIL" },
            rep.height.worst_margin,
            rep.collar_sandwich.worst_margin
        );
        bounds_out = Some(rep);
    }
    if bc.dichotomy {
        let u = u.ok_or_else(|| anyhow!("gradient dichotomy needs a solved field"))?;
        let rep = verify_gradient_dichotomy(
            &ctx,
            u,
            &default_a_sweep(),
            bc.tol_grad_factor * 3.0f64.sqrt(),
        )?;
        write_json(&s.out.join("dichotomy.json"), &rep)?;
        println!("gradient dichotomy: A* = {:?}", rep.a_star);
    }
    Ok((cert_out, bounds_out))
}

pub fn run_solve(args: &CommonArgs) -> Result<u8> {
    let s = setup(args)?;
    write_manifest(args, &s.cfg, &s.out, "solve")?;

    let (reports, checks_passed) = run_hypothesis_checks(&s)?;
    for rep in &reports {
        write_condition_report(&s.out, rep)?;
    }
    if !checks_passed {
        println!("hypothesis checks failed (margins written to {})", s.out.display());
        if !args.force {
            println!("stopping; rerun with --force to solve anyway");
            return Ok(1);
        }
        println!("--force given: solving despite failed checks");
    }

    let (u, report) = continuation_solve(
        &s.chart,
        &s.dom,
        &s.curvature,
        &s.phi,
        &sigma_schedule(&s.cfg),
        &newton_params(&s.cfg),
    )?;

    // solution CSV with the final residual column (and the reference error
    // when requested)
    let ctx = OperatorContext::new(&s.chart, &s.dom, &s.curvature, &s.phi, 1.0)?;
    let res = residual(&ctx, &u)?;
    let mut columns: Vec<(&str, &DiscreteField)> = vec![("u", &u), ("residual", &res)];
    let err_field;
    let mut sup_error = None;
    if args.reference == ReferenceFlag::Analytic {
        let exact = reference_field(&s.cfg, &s.dom)?
            .ok_or_else(|| anyhow!("--reference analytic needs a [reference] kind"))?;
        let mut e = DiscreteField::zeros(&s.dom);
        for idx in s.dom.inside_nodes() {
            e.values[idx] = u.values[idx] - exact.values[idx];
        }
        sup_error = Some(e.sup_inside(&s.dom));
        err_field = e;
        columns.push(("error", &err_field));
    }
    write_grid_csv(&s.out.join("solution.csv"), &s.dom, &columns)?;

    let artifacts = SolveArtifacts {
        converged: report.converged,
        checks_passed,
        forced: args.force,
        sup_error,
        report: report.clone(),
        floor_activations: ctx.floor_activations(),
    };
    write_json(&s.out.join("solve_report.json"), &artifacts)?;

    let mut ok = report.converged;
    if report.converged {
        println!(
            "converged in {} sigma steps, final residual {:.3e}{}",
            report.steps.len(),
            report.steps.last().map(|r| r.final_residual).unwrap_or(f64::NAN),
            sup_error.map(|e| format!(", sup error vs reference {e:.3e}")).unwrap_or_default()
        );
    } else {
        let d = report.divergence.as_ref();
        println!(
            "continuation failed at sigma = {:.4}: {} (boundary gradient growth rate {:.2})",
            d.map(|d| d.last_good_sigma).unwrap_or(0.0),
            d.map(|d| d.verdict.as_str()).unwrap_or("unknown"),
            d.map(|d| d.boundary_gradient_growth_rate).unwrap_or(f64::NAN),
        );
    }

    if s.cfg.barriers.certify || s.cfg.barriers.bounds || s.cfg.barriers.dichotomy {
        let (cert, bounds) = run_barrier_stage(&s, Some(&u), &s.cfg.barriers)?;
        if let Some(c) = cert {
            ok &= c.pass;
        }
        if let Some(b) = bounds {
            ok &= b.pass;
        }
    }
    Ok(if ok { 0 } else { 1 })
}

pub fn run_barriers(args: &CommonArgs) -> Result<u8> {
    let s = setup(args)?;
    write_manifest(args, &s.cfg, &s.out, "barriers")?;
    let bc = BarrierConfig { certify: true, bounds: false, dichotomy: false, ..s.cfg.barriers };
    let (cert, _) = run_barrier_stage(&s, None, &bc)?;
    Ok(if cert.map(|c| c.pass).unwrap_or(false) { 0 } else { 1 })
}

pub fn run_convergence(args: &CommonArgs, resolutions: &[usize]) -> Result<u8> {
    if resolutions.len() < 2 {
        bail!("convergence study needs at least 2 resolutions");
    }
    let cfg = RunConfig::load(&args.config)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    std::fs::create_dir_all(&out)?;
    write_manifest(args, &cfg, &out, "convergence")?;

    let chart = build_chart(&cfg.geometry)?;
    let curvature = build_curvature(&cfg.curvature)?;
    let phi = build_boundary(&cfg.boundary)?;
    let self_ref = matches!(cfg.reference, ReferenceSpec::SelfFinest);
    if matches!(cfg.reference, ReferenceSpec::None) {
        bail!("convergence needs an analytic [reference] or self_reference = true");
    }

    type SolveOut = (usize, f64, DiscreteDomain, DiscreteField, bool);
    let solve_one = |n: usize| -> Result<SolveOut> {
        let poly = build_polyline(&cfg)?;
        let dom = DiscreteDomain::build(poly, n, &chart)?;
        let (u, rep) = continuation_solve(
            &chart,
            &dom,
            &curvature,
            &phi,
            &sigma_schedule(&cfg),
            &newton_params(&cfg),
        )?;
        let h = dom.h();
        Ok((n, h, dom, u, rep.converged))
    };

    let mut runs: Vec<SolveOut> = Vec::new();
    if args.threads > 1 {
        let results: Vec<Result<SolveOut>> = std::thread::scope(|scope| {
            let handles: Vec<_> = resolutions
                .iter()
                .map(|&n| scope.spawn(move || solve_one(n)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
        });
        for r in results {
            runs.push(r?);
        }
    } else {
        for &n in resolutions {
            runs.push(solve_one(n)?);
        }
    }
    if runs.iter().any(|r| !r.4) {
        bail!(pmcgraph::Error::Solver("a convergence run failed to converge".into()));
    }

    // errors against the analytic reference, or against the finest grid
    let mut errors = Vec::new();
    if self_ref {
        let (_, _, fine_dom, fine_u, _) = runs.last().unwrap();
        for (n, _, dom, u, _) in &runs[..runs.len() - 1] {
            let mut worst = 0.0f64;
            for idx in dom.inside_nodes() {
                if let Some(v) = fine_u.interp(fine_dom, dom.node_pos(idx)) {
                    worst = worst.max((u.values[idx] - v).abs());
                }
            }
            errors.push((*n, worst));
        }
    } else {
        for (n, _, dom, u, _) in &runs {
            let exact = reference_field(&cfg, dom)?.unwrap();
            let (e, _) = u.sup_diff(&exact, dom);
            errors.push((*n, e));
        }
    }

    // exactness floor: scheme-exact references sit at the solver tolerance
    let floor = 100.0 * cfg.solver.newton_tol;
    let path = out.join("convergence.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "n,h,sup_error,order")?;
    println!("{:>6} {:>12} {:>14} {:>8}", "n", "h", "sup_error", "order");
    for i in 0..errors.len() {
        let (n, e) = errors[i];
        let h = runs.iter().find(|r| r.0 == n).unwrap().1;
        let order = if i == 0 {
            "-".to_string()
        } else {
            let (pn, pe) = errors[i - 1];
            let ph = runs.iter().find(|r| r.0 == pn).unwrap().1;
            if e <= floor && pe <= floor {
                "exact".to_string()
            } else {
                format!("{:.3}", (pe / e).ln() / (ph / h).ln())
            }
        };
        writeln!(f, "{},{},{},{}", n, fmt_f64(h), fmt_f64(e), order)?;
        println!("{n:>6} {h:>12.6} {e:>14.6e} {order:>8}");
    }
    Ok(0)
}
