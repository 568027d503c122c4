use flatflow::grid::{field_volume, rasterize, GridSpec, ShapeSpec};
use std::f64::consts::PI;

fn main() {
    // offset-averaged |volume error| vs dx for several refinement triples
    let offsets = [
        (0.0, 0.0), (0.137, 0.291), (-0.222, 0.073), (0.301, -0.181),
        (-0.073, -0.311), (0.191, 0.107),
    ];
    for ns in [[16usize, 32, 64], [24, 48, 96], [32, 64, 128], [64, 128, 256]] {
        let mut errs = Vec::new();
        for &n in &ns {
            let grid = GridSpec::square(n, 2.0).unwrap();
            let dx = grid.dx();
            let mut acc = 0.0;
            for &(ox, oy) in &offsets {
                let u = rasterize(&ShapeSpec::circle(ox * dx, oy * dx, 1.0), grid).unwrap();
                acc += (field_volume(&u) - PI).abs();
            }
            errs.push((dx, acc / offsets.len() as f64));
        }
        let slope = (errs[0].1.ln() - errs[2].1.ln()) / (errs[0].0.ln() - errs[2].0.ln());
        println!("{ns:?}: slope {slope:.3} errs {errs:?}");
    }
    // also ellipse
    for ns in [[16usize, 32, 64], [32, 64, 128]] {
        let mut errs = Vec::new();
        for &n in &ns {
            let grid = GridSpec::square(n, 2.0).unwrap();
            let dx = grid.dx();
            let mut acc = 0.0;
            for &(ox, oy) in &offsets {
                let s = ShapeSpec::Ellipse { cx: ox * dx, cy: oy * dx, a: 1.5, b: 0.75 };
                let u = rasterize(&s, grid).unwrap();
                acc += (field_volume(&u) - PI * 1.5 * 0.75).abs();
            }
            errs.push((dx, acc / offsets.len() as f64));
        }
        let slope = (errs[0].1.ln() - errs[2].1.ln()) / (errs[0].0.ln() - errs[2].0.ln());
        println!("ellipse {ns:?}: slope {slope:.3} errs {errs:?}");
    }
}
