//! Acceptance suite: one test per criterion, each printing a verdict line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//!
//! The reference surfaces are closed-form: the helicoid over the rotational
//! chart (scheme-exact for the linear height), the spherical cap over a
//! Euclidean disk, and the tilted equidistant plane over the hyperbolic
//! half-plane leaf (scheme-exact; its constant curvature is calibrated from
//! the residual-zero oracle on a fine grid rather than hard-coded).

use pmcgraph::barriers::{
    build_boundary_barrier, build_height_barrier, certify_boundary_barrier,
    check_solution_bounds, default_a_sweep, verify_gradient_dichotomy, DichotomyBranch,
};
use pmcgraph::conditions::{
    check_ricci_slope, check_serrin, CheckConfig, PrescribedCurvature,
};
use pmcgraph::fields::{BoundaryData, DiscreteField};
use pmcgraph::geometry::GeometryChart;
use pmcgraph::io::write_grid_csv;
use pmcgraph::mesh::{DiscreteDomain, Polyline};
use pmcgraph::operator::{jacobian, residual, OperatorContext};
use pmcgraph::solver::{
    comparison_probe, continuation_solve, uniqueness_probe, NewtonParams, SigmaSchedule,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, name: &str, pass: bool, details: &str) {
    println!("acceptance {n:02} {name}: {} ({details})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "acceptance criterion {n} ({name}) failed: {details}");
}

fn cap_exact(p: [f64; 2]) -> f64 {
    (1.0 - p[0] * p[0] - p[1] * p[1]).sqrt() - 0.75f64.sqrt()
}

fn cap_domain(n: usize) -> (GeometryChart, DiscreteDomain) {
    let chart = GeometryChart::euclidean();
    let dom = DiscreteDomain::build(Polyline::circle([0.0, 0.0], 0.5, 2048), n, &chart).unwrap();
    (chart, dom)
}

fn solve_cap(n: usize) -> (GeometryChart, DiscreteDomain, DiscreteField, bool) {
    let (chart, dom) = cap_domain(n);
    let h = PrescribedCurvature::constant(1.0);
    let phi = BoundaryData::constant(0.0);
    let (u, rep) = continuation_solve(
        &chart,
        &dom,
        &h,
        &phi,
        &SigmaSchedule::default(),
        &NewtonParams::default(),
    )
    .unwrap();
    (chart, dom, u, rep.converged)
}

#[test]
fn acceptance_01_helicoid_exactness() {
    let t0 = std::time::Instant::now();
    let chart = GeometryChart::rotational();
    let dom =
        DiscreteDomain::build(Polyline::rectangle(1.0, 2.0, 0.0, 1.0), 65, &chart).unwrap();
    let h = PrescribedCurvature::constant(0.0);
    let phi = BoundaryData::expr(|p| p[1] / 2.0);
    let ctx = OperatorContext::new(&chart, &dom, &h, &phi, 1.0).unwrap();
    let u = DiscreteField::from_fn(&dom, |p| p[1] / 2.0);
    let sup = residual(&ctx, &u).unwrap().sup_inside(&dom);
    let dt = t0.elapsed().as_secs_f64();
    verdict(
        1,
        "helicoid residual exactness",
        sup <= 1e-12 && dt < 1.0,
        &format!("residual sup = {sup:.3e}, runtime {dt:.2} s"),
    );
}

#[test]
fn acceptance_02_cap_convergence() {
    let t0 = std::time::Instant::now();
    let mut errors = Vec::new();
    let mut all_converged = true;
    for n in [33usize, 65, 129] {
        let (_, dom, u, ok) = solve_cap(n);
        all_converged &= ok;
        let exact = DiscreteField::from_fn(&dom, cap_exact);
        let (err, _) = u.sup_diff(&exact, &dom);
        errors.push(err);
    }
    let orders: Vec<f64> =
        errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let dt = t0.elapsed().as_secs_f64();
    let pass = all_converged && orders.iter().all(|&o| o >= 1.8) && dt < 60.0;
    verdict(
        2,
        "cap convergence order",
        pass,
        &format!("sup errors {errors:?}, orders {orders:?}, runtime {dt:.1} s"),
    );
}

/// Constant curvature of the tilted plane from the residual-zero oracle:
/// evaluate the residual with H = 0 and H = 1 on the exact linear field and
/// solve the affine relation per node.
fn calibrate_tilted_plane_h(lambda: f64, n: usize) -> (f64, f64) {
    let chart = GeometryChart::hyperbolic_leaf();
    let dom =
        DiscreteDomain::build(Polyline::rectangle(0.0, 1.0, 1.0, 2.0), n, &chart).unwrap();
    let phi = BoundaryData::expr(move |p| lambda * p[1]);
    let u = DiscreteField::from_fn(&dom, |p| lambda * p[1]);
    let h0 = PrescribedCurvature::constant(0.0);
    let h1 = PrescribedCurvature::constant(1.0);
    let ctx0 = OperatorContext::new(&chart, &dom, &h0, &phi, 1.0).unwrap();
    let f0 = residual(&ctx0, &u).unwrap();
    let ctx1 = OperatorContext::new(&chart, &dom, &h1, &phi, 1.0).unwrap();
    let f1 = residual(&ctx1, &u).unwrap();
    let mut vals: Vec<f64> = dom
        .inside_nodes()
        .map(|i| -f0.values[i] / (f1.values[i] - f0.values[i]))
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = vals[vals.len() / 2];
    let spread = vals[vals.len() - 1] - vals[0];
    (median, spread)
}

#[test]
fn acceptance_03_hyperbolic_equidistant_plane() {
    let lambda = 0.5;
    let (h_cal, spread) = calibrate_tilted_plane_h(lambda, 257);
    // independent closed form of the equidistant-plane curvature
    let h_closed = lambda / (1.0 + lambda * lambda).sqrt();
    let cal_ok = spread < 1e-10 && (h_cal - h_closed).abs() < 1e-10;

    let chart = GeometryChart::hyperbolic_leaf();
    let h = PrescribedCurvature::constant(h_cal);
    let phi = BoundaryData::expr(move |p| lambda * p[1]);
    let mut errors = Vec::new();
    let mut floors = Vec::new();
    let mut all_converged = true;
    for n in [33usize, 65, 129] {
        let dom =
            DiscreteDomain::build(Polyline::rectangle(0.0, 1.0, 1.0, 2.0), n, &chart).unwrap();
        let (u, rep) = continuation_solve(
            &chart,
            &dom,
            &h,
            &phi,
            &SigmaSchedule::default(),
            &NewtonParams::default(),
        )
        .unwrap();
        all_converged &= rep.converged;
        let exact = DiscreteField::from_fn(&dom, |p| lambda * p[1]);
        let (err, _) = u.sup_diff(&exact, &dom);
        errors.push(err);
        floors.push(100.0 * rep.newton_tol_effective);
    }
    // the linear height is scheme-exact, so solve errors sit at the solver
    // floor at every resolution; that counts as order "exact" (better than
    // any finite rate), mirroring the convergence-table convention
    let at_floor = errors.iter().zip(&floors).all(|(e, f)| e <= f);
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order_ok = at_floor || orders.iter().all(|&o| o >= 1.8);
    verdict(
        3,
        "hyperbolic equidistant plane",
        cal_ok && all_converged && order_ok,
        &format!(
            "H calibrated {h_cal:.12} (closed form {h_closed:.12}, spread {spread:.2e}); \
             solve errors {errors:?} vs floors {floors:?} -> {}",
            if at_floor { "exact" } else { "rate-checked" }
        ),
    );
}

#[test]
fn acceptance_04_hypothesis_checkers() {
    let chart = GeometryChart::euclidean();
    let dom =
        DiscreteDomain::build(Polyline::circle([0.0, 0.0], 1.0, 2048), 65, &chart).unwrap();
    let phi = BoundaryData::constant(0.0);
    let cfg = CheckConfig::default();

    let rep_pass = check_serrin(&PrescribedCurvature::constant(0.4), &dom, &chart, &phi, &cfg)
        .unwrap();
    let rep_fail = check_serrin(&PrescribedCurvature::constant(0.6), &dom, &chart, &phi, &cfg)
        .unwrap();

    let hchart = GeometryChart::hyperbolic_leaf();
    let hdom =
        DiscreteDomain::build(Polyline::rectangle(0.0, 1.0, 1.0, 2.0), 65, &hchart).unwrap();
    let rep_ricci =
        check_ricci_slope(&PrescribedCurvature::constant(2.0), &hdom, &hchart, &phi, &cfg)
            .unwrap();

    let serrin_ok = rep_pass.pass
        && (rep_pass.margin - 0.1).abs() <= 0.02 * 0.1
        && !rep_fail.pass
        && (rep_fail.margin + 0.1).abs() <= 0.02 * 0.1;
    let ricci_ok = rep_ricci.pass && (rep_ricci.margin - 3.0).abs() <= 0.05 * 3.0;
    verdict(
        4,
        "hypothesis checkers",
        serrin_ok && ricci_ok,
        &format!(
            "serrin margins {:+.4} / {:+.4}, ricci margin {:+.4}",
            rep_pass.margin, rep_fail.margin, rep_ricci.margin
        ),
    );
}

#[test]
fn acceptance_05_barrier_certification() {
    let (chart, dom, u, converged) = solve_cap(129);
    assert!(converged);
    let h = PrescribedCurvature::constant(1.0);
    let phi = BoundaryData::constant(0.0);
    let ctx = OperatorContext::new(&chart, &dom, &h, &phi, 1.0).unwrap();
    let hb = build_height_barrier(&ctx, &phi, 1.0).unwrap();
    let bb = build_boundary_barrier(&ctx, &phi, hb.sup_bound()).unwrap();
    let shape_dev = bb.shape_invariants_deviation();
    let cert = certify_boundary_barrier(&ctx, &bb, &phi).unwrap();
    let bounds = check_solution_bounds(&ctx, &u, &bb, &hb, &phi).unwrap();
    let pass = shape_dev <= 1e-12
        && bb.collar_ordering_holds()
        && cert.band_nodes > 0
        && cert.super_negative == cert.band_nodes
        && cert.sub_positive == cert.band_nodes
        && bounds.pass;
    verdict(
        5,
        "boundary barrier certification",
        pass,
        &format!(
            "shape dev {shape_dev:.1e}; collar nodes {}, supersolution {} / sub {} certified, \
             worst margins {:+.3e} / {:+.3e}; bounds pass = {}",
            cert.band_nodes,
            cert.super_negative,
            cert.sub_positive,
            cert.worst_super_margin,
            cert.worst_sub_margin,
            bounds.pass
        ),
    );
}

#[test]
fn acceptance_06_height_bound_on_all_solves() {
    let mut details = String::new();
    let mut pass = true;

    // cap at three resolutions
    for n in [33usize, 65, 129] {
        let (chart, dom, u, converged) = solve_cap(n);
        assert!(converged);
        let h = PrescribedCurvature::constant(1.0);
        let phi = BoundaryData::constant(0.0);
        let ctx = OperatorContext::new(&chart, &dom, &h, &phi, 1.0).unwrap();
        let hb = build_height_barrier(&ctx, &phi, 1.0).unwrap();
        let mut violations = 0usize;
        for idx in dom.inside_nodes() {
            let bound = hb.value(dom.distance[idx].max(0.0)) + hb.offset;
            if u.values[idx].abs() > bound + 1e-9 {
                violations += 1;
            }
        }
        pass &= violations == 0;
        details.push_str(&format!("cap N={n}: {violations} violations; "));
    }

    // helicoid and tilted plane
    for (name, chart, rect, h, phi) in [
        (
            "helicoid",
            GeometryChart::rotational(),
            (1.0, 2.0, 0.0, 1.0),
            PrescribedCurvature::constant(0.0),
            BoundaryData::expr(|p: [f64; 2]| p[1] / 2.0),
        ),
        (
            "tilted plane",
            GeometryChart::hyperbolic_leaf(),
            (0.0, 1.0, 1.0, 2.0),
            PrescribedCurvature::constant(0.5 / 1.25f64.sqrt()),
            BoundaryData::expr(|p: [f64; 2]| 0.5 * p[1]),
        ),
    ] {
        let dom = DiscreteDomain::build(
            Polyline::rectangle(rect.0, rect.1, rect.2, rect.3),
            65,
            &chart,
        )
        .unwrap();
        let (u, rep) = continuation_solve(
            &chart,
            &dom,
            &h,
            &phi,
            &SigmaSchedule::default(),
            &NewtonParams::default(),
        )
        .unwrap();
        assert!(rep.converged, "{name} solve failed");
        let ctx = OperatorContext::new(&chart, &dom, &h, &phi, 1.0).unwrap();
        let hb = build_height_barrier(&ctx, &phi, 1.0).unwrap();
        let mut violations = 0usize;
        for idx in dom.inside_nodes() {
            let bound = hb.value(dom.distance[idx].max(0.0)) + hb.offset;
            if u.values[idx].abs() > bound + 1e-9 {
                violations += 1;
            }
        }
        pass &= violations == 0;
        details.push_str(&format!("{name}: {violations} violations; "));
    }
    verdict(6, "height bound", pass, details.trim_end_matches("; "));
}

#[test]
fn acceptance_07_uniqueness_and_comparison() {
    let (chart, dom) = cap_domain(65);
    let h = PrescribedCurvature::constant(1.0);
    let phi = BoundaryData::constant(0.0);
    let exact = DiscreteField::from_fn(&dom, cap_exact);
    let mut perturbed = exact.clone();
    for idx in dom.inside_nodes() {
        let p = dom.node_pos(idx);
        perturbed.values[idx] +=
            0.03 * (6.0 * p[0]).sin() * (7.0 * p[1]).cos() * dom.distance[idx].max(0.0);
    }
    let inits = vec![DiscreteField::zeros(&dom), exact, perturbed];
    let uni = uniqueness_probe(&chart, &dom, &h, &phi, &inits, &NewtonParams::default(), 1.0)
        .unwrap();

    let phi_high = BoundaryData::constant(0.1);
    let cmp = comparison_probe(
        &chart,
        &dom,
        &h,
        &phi,
        &phi_high,
        &SigmaSchedule::default(),
        &NewtonParams::default(),
        1.0,
    )
    .unwrap();

    let pass = uni.consistent && uni.max_pairwise_sup_diff <= 1e-9 && cmp.ordered;
    verdict(
        7,
        "uniqueness and comparison",
        pass,
        &format!(
            "pairwise sup diff {:.2e} (threshold 1e-9), comparison worst violation {:+.2e}",
            uni.max_pairwise_sup_diff, cmp.worst_violation
        ),
    );
}

#[test]
fn acceptance_08_gradient_dichotomy() {
    let tol_grad = 0.05 * 3.0f64.sqrt();
    let mut pass = true;
    let mut details = String::new();

    let (chart, dom, u, converged) = solve_cap(65);
    assert!(converged);
    let h = PrescribedCurvature::constant(1.0);
    let phi = BoundaryData::constant(0.0);
    let ctx = OperatorContext::new(&chart, &dom, &h, &phi, 1.0).unwrap();
    let rep = verify_gradient_dichotomy(&ctx, &u, &default_a_sweep(), tol_grad).unwrap();
    pass &= rep.a_star.is_some();
    pass &= rep.records.iter().all(|r| r.branch != DichotomyBranch::Fail);
    details.push_str(&format!("cap A* = {:?}; ", rep.a_star));

    let chart = GeometryChart::rotational();
    let dom =
        DiscreteDomain::build(Polyline::rectangle(1.0, 2.0, 0.0, 1.0), 65, &chart).unwrap();
    let h = PrescribedCurvature::constant(0.0);
    let phi = BoundaryData::expr(|p: [f64; 2]| p[1] / 2.0);
    let (u, rep_solve) = continuation_solve(
        &chart,
        &dom,
        &h,
        &phi,
        &SigmaSchedule::default(),
        &NewtonParams::default(),
    )
    .unwrap();
    assert!(rep_solve.converged);
    let ctx = OperatorContext::new(&chart, &dom, &h, &phi, 1.0).unwrap();
    let rep = verify_gradient_dichotomy(&ctx, &u, &default_a_sweep(), tol_grad).unwrap();
    pass &= rep.a_star.is_some();
    pass &= rep.records.iter().all(|r| r.branch != DichotomyBranch::Fail);
    // interior-branch records must respect the slope cap
    for r in &rep.records {
        if r.branch == DichotomyBranch::InteriorSmallGradient {
            pass &= r.rho_grad_at_max <= 3.0f64.sqrt() + tol_grad;
        }
    }
    details.push_str(&format!("helicoid A* = {:?}", rep.a_star));
    verdict(8, "gradient dichotomy", pass, &details);
}

#[test]
fn acceptance_09_jacobian_fidelity() {
    let mut pass = true;
    let mut worst_rel = 0.0f64;
    for preset in ["euclidean", "rotational", "hyperbolic_leaf"] {
        let chart = GeometryChart::preset(preset).unwrap();
        let poly = match preset {
            "euclidean" => Polyline::rectangle(0.0, 1.0, 0.0, 1.0),
            "rotational" => Polyline::rectangle(1.0, 2.0, 0.0, 1.0),
            _ => Polyline::rectangle(0.0, 1.0, 1.0, 2.0),
        };
        let dom = DiscreteDomain::build(poly, 33, &chart).unwrap();
        let h = PrescribedCurvature::new(|x, z| 0.3 + 0.1 * x[0] + 0.2 * z.tanh());
        let phi = BoundaryData::constant(0.0);
        let ctx = OperatorContext::new(&chart, &dom, &h, &phi, 1.0).unwrap();
        let u = DiscreteField::from_fn(&dom, |p| 0.02 * (3.0 * p[0]).sin() * (2.0 * p[1]).cos());
        let jac = jacobian(&ctx, &u).unwrap();
        let f0 = residual(&ctx, &u).unwrap();
        let eps = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let c: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let mut v = DiscreteField {
                values: (0..dom.grid.len())
                    .map(|i| {
                        if dom.is_inside(i) {
                            let p = dom.node_pos(i);
                            c[0] + c[1] * p[0]
                                + c[2] * p[1]
                                + c[3] * (2.0 * p[0] + c[4]).sin()
                                + c[5] * (p[0] * p[1]).cos()
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            };
            let vmax = v.sup_inside(&dom).max(1e-9);
            for x in &mut v.values {
                *x *= 0.25 / vmax;
            }
            let up = DiscreteField {
                values: u.values.iter().zip(&v.values).map(|(a, b)| a + eps * b).collect(),
            };
            let f1 = residual(&ctx, &up).unwrap();
            let mut err = 0.0f64;
            let mut scale = 0.0f64;
            for idx in dom.inside_nodes() {
                let fd = (f1.values[idx] - f0.values[idx]) / eps;
                let mut jv = 0.0;
                for q in dom.inside_nodes_near(idx) {
                    jv += jac.get(idx, q) * v.values[q];
                }
                err = err.max((fd - jv).abs());
                scale = scale.max(jv.abs());
            }
            let rel = err / scale.max(1e-30);
            worst_rel = worst_rel.max(rel);
            pass &= rel <= 1e-5;
        }
    }
    verdict(
        9,
        "jacobian fidelity",
        pass,
        &format!("worst relative directional error {worst_rel:.2e} (tolerance 1e-5)"),
    );
}

#[test]
fn acceptance_10_determinism() {
    let run = || {
        let (chart, dom) = cap_domain(33);
        let h = PrescribedCurvature::constant(1.0);
        let phi = BoundaryData::constant(0.0);
        let (u, rep) = continuation_solve(
            &chart,
            &dom,
            &h,
            &phi,
            &SigmaSchedule::default(),
            &NewtonParams::default(),
        )
        .unwrap();
        let dir = std::env::temp_dir().join(format!("pmcgraph_accept_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("solution_{:x}.csv", rand::random::<u64>()));
        write_grid_csv(&path, &dom, &[("u", &u)]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::remove_file(&path).ok();
        // numeric report fields, wall time excluded (it is the one
        // non-deterministic field by construction)
        let numeric = serde_json::json!({
            "steps": rep.steps,
            "converged": rep.converged,
            "newton_tol_effective": rep.newton_tol_effective,
        });
        (bytes, serde_json::to_string(&numeric).unwrap())
    };
    let (csv1, rep1) = run();
    let (csv2, rep2) = run();
    let pass = csv1 == csv2 && rep1 == rep2;
    verdict(
        10,
        "determinism",
        pass,
        &format!("solution CSV {} bytes byte-identical: {}", csv1.len(), csv1 == csv2),
    );
}
