//! Scratch driver for flow parameter exploration (not part of the test suite).

use xcflab_core::curvature::{curvature_core_field, StencilOrder};
use xcflab_core::flow::{run_flow, spectral_range, DtSpec, FlowVariant, RunOptions};
use xcflab_core::grid::{BoundaryMode, Family, MetricGrid, TimeCtx};
use xcflab_core::third_order::third_order_field;

fn main() {
    let t0 = std::time::Instant::now();

    // 1. exact hyperbolic run, h = 1/32, box 0.5^3, t_end = 0.1
    let n = 17;
    let h = 1.0 / 32.0;
    let grid = MetricGrid::from_family(
        [n, n, n],
        [h, h, h],
        [0.0, 0.0, 1.4],
        BoundaryMode::DirichletAnalytic,
        Family::HyperbolicHalfspace { k0: -1.0 },
    )
    .unwrap();
    let run = run_flow(
        grid,
        RunOptions {
            variant: FlowVariant::Raw,
            t_end: 0.1,
            dt: DtSpec::Cfl(0.2),
            order: StencilOrder::Two,
            ..Default::default()
        },
    )
    .unwrap();
    println!(
        "hyperbolic run: status {:?}, dt = {:.3e}, rows = {}, elapsed {:?}",
        run.status,
        run.dt,
        run.monitors.len(),
        t0.elapsed()
    );
    let fin = &run.final_state;
    let s_exact = (4.0 * fin.t + 1.0_f64).sqrt();
    let mut worst = 0.0_f64;
    for node in fin.metric.nodes() {
        let x = fin.metric.pos(node);
        let g0 = Family::HyperbolicHalfspace { k0: -1.0 }.eval(x, &TimeCtx::ZERO);
        let got = fin.metric.values[fin.metric.idx(node)];
        for c in 0..6 {
            let expect = s_exact * g0.m[c];
            let scale = g0.m[0].abs().max(1e-30);
            worst = worst.max((got.m[c] - expect).abs() / scale);
        }
    }
    println!("  final metric max rel error vs sqrt(4t+1) g0: {worst:.3e}");
    let r0 = &run.monitors[0];
    let rl = run.monitors.last().unwrap();
    println!("  vol(0) = {:.6}, vol(end) = {:.6}, expect ratio {:.6}", r0.vol, rl.vol, (4.0*fin.t+1.0_f64).powf(0.75));
    let mid = &run.monitors[run.monitors.len() / 2];
    println!(
        "  mid row: J = {:.3e}, dVolRes = {:?}, resDtEin = {:?}, resDtDetE = {:?}, intH = {:.5}",
        mid.j_fun, mid.d_vol_residual, mid.res_dt_ein, mid.res_dt_det_e, mid.int_h
    );
    println!(
        "  harnack at mid t={:.4}: {:?}",
        mid.t, mid.harnack_min
    );

    // 2. perturbed hyperbolic: SPD range and Devil size at eps in sweep
    for eps in [0.02, 0.05, 0.1] {
        for w in [0.4, 0.6] {
            let n = 33;
            let h = 1.0 / 32.0;
            let grid = MetricGrid::from_family(
                [n, n, n],
                [h, h, h],
                [0.0, 0.0, 1.0],
                BoundaryMode::DirichletAnalytic,
                Family::PerturbedHyperbolic {
                    k0: -1.0,
                    eps,
                    bump_center: [0.5, 0.5, 1.5],
                    bump_width: w,
                },
            );
            match grid {
                Ok(g) => {
                    let core = curvature_core_field(&g, StencilOrder::Two, &TimeCtx::ZERO).unwrap();
                    let (lmin, lmax) = spectral_range(&core);
                    let third = third_order_field(&g, &core, StencilOrder::Two, &TimeCtx::ZERO);
                    match third {
                        Ok(t) => {
                            let max_devil = t
                                .data
                                .iter()
                                .map(|x| x.devil_norm2_v)
                                .fold(0.0_f64, f64::max);
                            let max_defect = t
                                .data
                                .iter()
                                .map(|x| x.codazzi_defect.iter().flatten().flatten().fold(0.0_f64, |a, &v| a.max(v.abs())))
                                .fold(0.0_f64, f64::max);
                            let max_bianchi = t
                                .data
                                .iter()
                                .map(|x| x.bianchi_defect)
                                .fold(0.0_f64, f64::max);
                            println!(
                                "eps={eps} w={w}: lam range [{lmin:.4}, {lmax:.4}], |D|^2 max {max_devil:.3e}, defect max {max_defect:.3e}, bianchi {max_bianchi:.3e}"
                            );
                        }
                        Err(e) => println!("eps={eps} w={w}: lam range [{lmin:.4}, {lmax:.4}], third failed: {e}"),
                    }
                }
                Err(e) => println!("eps={eps} w={w}: grid failed: {e}"),
            }
        }
    }
    println!("elapsed {:?}", t0.elapsed());

    // 3. monotonicity run: eps = 0.05, h = 1/32, t_end = 0.05
    let t1 = std::time::Instant::now();
    let grid = MetricGrid::from_family(
        [25, 25, 25],
        [1.0 / 32.0; 3],
        [0.0, 0.0, 1.0],
        BoundaryMode::DirichletAnalytic,
        Family::PerturbedHyperbolic {
            k0: -1.0,
            eps: 0.05,
            bump_center: [0.375, 0.375, 1.375],
            bump_width: 0.12,
        },
    )
    .unwrap();
    let run = run_flow(
        grid,
        RunOptions {
            variant: FlowVariant::Raw,
            t_end: 0.05,
            dt: DtSpec::Cfl(0.2),
            order: StencilOrder::Two,
            ..Default::default()
        },
    )
    .unwrap();
    println!(
        "perturbed run: status {:?}, dt = {:.3e}, rows = {}, elapsed {:?}",
        run.status,
        run.dt,
        run.monitors.len(),
        t1.elapsed()
    );
    let mut j_viol = 0.0_f64;
    let mut i_viol = 0.0_f64;
    for w in run.monitors.windows(2) {
        j_viol = j_viol.max(w[1].j_fun - w[0].j_fun);
        i_viol = i_viol.max(w[0].i_fun - w[1].i_fun);
    }
    println!(
        "  J(0) = {:.6e} J(end) = {:.6e} worst J increase {:.3e}",
        run.monitors[0].j_fun,
        run.monitors.last().unwrap().j_fun,
        j_viol
    );
    println!(
        "  I(0) = {:.6e} I(end) = {:.6e} worst I decrease {:.3e}",
        run.monitors[0].i_fun,
        run.monitors.last().unwrap().i_fun,
        i_viol
    );
    // dI/dt vs devilL2/4
    let dt = run.dt;
    let mut worst_rel = 0.0_f64;
    for k in 1..run.monitors.len() - 1 {
        let didt = (run.monitors[k + 1].i_fun - run.monitors[k - 1].i_fun) / (2.0 * dt);
        let d4 = 0.25 * run.monitors[k].devil_l2;
        let rel = (didt - d4).abs() / didt.abs().max(d4.abs()).max(1e-12);
        worst_rel = worst_rel.max(rel);
        if k == run.monitors.len() / 2 {
            println!("  mid: dI/dt = {didt:.6e}, devilL2/4 = {d4:.6e}");
        }
    }
    println!("  worst rel |dI/dt - devilL2/4| = {worst_rel:.3e}");
    println!("  minDetE(end) = {:.6}", run.monitors.last().unwrap().min_det_e);
    println!("total elapsed {:?}", t0.elapsed());
}
