// debug: jitter of contours extracted from (a) raster, (b) PDHG-relaxed fields
use flatflow::contour::extract_contours;
use flatflow::grid::{field_volume, rasterize, GridSpec, ScalarField, ShapeSpec};
use flatflow::step::{solve_relaxed, threshold};
use flatflow::two_point::two_point_report;

fn stats(tag: &str, c: &flatflow::contour::Contour) {
    let mut res: Vec<f64> = c.vertices.iter().map(|v| (v.norm() - 1.0).abs()).collect();
    // center correction: mean radius
    let mean_r: f64 = c.vertices.iter().map(|v| v.norm()).sum::<f64>() / c.len() as f64;
    let mut dev: Vec<f64> = c.vertices.iter().map(|v| (v.norm() - mean_r).abs()).collect();
    res.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut ks = c.kappa.clone();
    ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "{tag}: n={} mean_r={:.6} |r-mean| med {:.2e} p90 {:.2e} max {:.2e} | kappa p05 {:.3} med {:.3} p95 {:.3} | turning {:.4}",
        c.len(), mean_r, dev[dev.len()/2], dev[9*dev.len()/10], dev[dev.len()-1],
        ks[ks.len()/20], ks[ks.len()/2], ks[19*ks.len()/20], c.total_turning()
    );
}

fn main() {
    let grid = GridSpec::square(256, 2.0).unwrap();
    let u0 = rasterize(&ShapeSpec::circle(0.0, 0.0, 1.0), grid).unwrap();
    let c_raw = extract_contours(&u0, 0.5).unwrap().remove(0);
    stats("raster ", &c_raw);

    // one pure-MCF-ish solve: f = d/h - 1.0 (stationary lambda)
    let h = 5e-3;
    let f = ScalarField::from_fn(grid, |p| (p.norm() - 1.0) / h - 1.0);
    let u = solve_relaxed(&f, 1e-6, 20_000).unwrap();
    println!("relaxed volume {:.6}", field_volume(&threshold(&u, 0.5)));
    let c_pd = extract_contours(&u, 0.5).unwrap().remove(0);
    stats("relaxed", &c_pd);
    let rep = two_point_report(std::slice::from_ref(&c_pd)).unwrap();
    println!("relaxed s_norm {:.4} (want 0.5) ubc {:.4} normal_lip {:.4}", rep.s_norm, rep.ubc_radius, rep.normal_lip);
    let rep0 = two_point_report(std::slice::from_ref(&c_raw)).unwrap();
    println!("raster  s_norm {:.4} ubc {:.4}", rep0.s_norm, rep0.ubc_radius);
    // transition width of the relaxed profile along y=0
    let j = 128usize;
    let mut widths = 0;
    for i in 0..grid.nx {
        let v = u.get(i, j);
        if v > 0.02 && v < 0.98 { widths += 1; }
    }
    println!("relaxed transition cells along y=0 row: {widths}");
}
