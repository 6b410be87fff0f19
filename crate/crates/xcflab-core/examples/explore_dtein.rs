//! Isolate the dtEin residual: evaluate on family-exact states (no flow).

use xcflab_core::flow::{analyze_state, evolution_residuals_from, FlowState, FlowVariant};
use xcflab_core::grid::{BoundaryMode, Family, MetricGrid, TimeCtx};

fn exact_state(n: usize, h: f64, t: f64) -> FlowState {
    let fam = Family::HyperbolicHalfspace { k0: -1.0 };
    let mut grid = MetricGrid::from_family(
        [n, n, n],
        [h, h, h],
        [0.0, 0.0, 1.0],
        BoundaryMode::DirichletAnalytic,
        fam.clone(),
    )
    .unwrap();
    let nodes: Vec<[usize; 3]> = grid.nodes().collect();
    for node in nodes {
        let x = grid.pos(node);
        let id = grid.idx(node);
        grid.values[id] = fam.eval(x, &TimeCtx::at(t));
    }
    FlowState {
        t,
        step: 0,
        metric: grid,
        reference: None,
    }
}

fn main() {
    for (n, h) in [(17usize, 1.0 / 32.0), (33, 1.0 / 64.0)] {
        let t = 0.01;
        let dt = 1e-4;
        let sp = exact_state(n, h, t - dt);
        let sc = exact_state(n, h, t);
        let sn = exact_state(n, h, t + dt);
        let ap = analyze_state(&sp, FlowVariant::Raw, xcflab_core::curvature::StencilOrder::Two).unwrap();
        let ac = analyze_state(&sc, FlowVariant::Raw, xcflab_core::curvature::StencilOrder::Two).unwrap();
        let an = analyze_state(&sn, FlowVariant::Raw, xcflab_core::curvature::StencilOrder::Two).unwrap();
        let (re, rd) = evolution_residuals_from(&sc.metric, &ap, &ac, &an, dt);
        println!("exact fields h={h:.5}: resDtEin = {re:.4e}, resDtDetE = {rd:.4e}");
    }
}
