use flatflow::flow::{run_flow_with_progress, ExportConfig, FlowConfig, GridConfig, StepTuning};
use flatflow::grid::ShapeSpec;

fn main() {
    for (n, h, w) in [(192usize, 4e-3, 0.16), (256usize, 4e-3, 0.15), (256usize, 2.5e-3, 0.15)] {
        let cfg = FlowConfig {
            shape: ShapeSpec::Dumbbell { neck_width: w, lobe_r: 0.55, separation: 1.6 },
            grid: GridConfig::square(n, 2.0),
            h,
            t_final: 0.06,
            step: StepTuning::default(),
            checks: vec!["perimeter".into()],
            export: ExportConfig::default(),
        };
        println!("--- n={n} h={h} w={w}");
        let t0 = std::time::Instant::now();
        let trace = run_flow_with_progress(&cfg, |k, r| {
            println!(
                "  k={k} t={:.4} comps={} vol={:.4} perim={:.4} s={:.3} ubc={:.4} lam={:.3} iters={} probes={}",
                r.t, r.components, r.volume, r.perimeter, r.two_point.s_norm, r.two_point.ubc_radius,
                r.lambda, r.pd_iters, r.bisection_probes
            );
        })
        .unwrap();
        println!(
            "  singular={} at {:?} states={} elapsed={:.1?}",
            trace.singular, trace.singular_time, trace.states.len(), t0.elapsed()
        );
    }
}
