//! Shared fixtures for the pipeline benchmarks.

use pmcgraph::conditions::PrescribedCurvature;
use pmcgraph::fields::{BoundaryData, DiscreteField};
use pmcgraph::geometry::GeometryChart;
use pmcgraph::mesh::{DiscreteDomain, Polyline};

pub struct CapFixture {
    pub chart: GeometryChart,
    pub dom: DiscreteDomain,
    pub curvature: PrescribedCurvature,
    pub phi: BoundaryData,
    pub u: DiscreteField,
}

pub fn cap_fixture(resolution: usize) -> CapFixture {
    let chart = GeometryChart::euclidean();
    let dom = DiscreteDomain::build(Polyline::circle([0.0, 0.0], 0.5, 2048), resolution, &chart)
        .expect("cap domain builds");
    let u = DiscreteField::from_fn(&dom, |p| {
        (1.0 - p[0] * p[0] - p[1] * p[1]).sqrt() - 0.75f64.sqrt()
    });
    CapFixture {
        chart,
        dom,
        curvature: PrescribedCurvature::constant(1.0),
        phi: BoundaryData::constant(0.0),
        u,
    }
}
