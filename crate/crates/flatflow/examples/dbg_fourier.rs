// prototype 2: HARD fourier cutoff K, assess circle + ellipse + dumbbell
use flatflow::contour::{compute_normals_curvature, extract_contours, resample_closed};
use flatflow::grid::{rasterize, GridSpec, ScalarField, ShapeSpec};
use flatflow::step::solve_relaxed;
use flatflow::two_point::two_point_report;
use flatflow::vec2::Vec2;
use std::f64::consts::PI;

fn fourier_hard(points: &[Vec2], out_n: usize, kmax: usize) -> Vec<Vec2> {
    let n = points.len();
    let kodd = kmax.min(n / 2 - 1);
    let mut coef = Vec::new();
    for m in -(kodd as i64)..=(kodd as i64) {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, p) in points.iter().enumerate() {
            let ang = -2.0 * PI * (m as f64) * (j as f64) / n as f64;
            let (s, c) = ang.sin_cos();
            re += p.x * c - p.y * s;
            im += p.x * s + p.y * c;
        }
        coef.push((m, re / n as f64, im / n as f64));
    }
    (0..out_n)
        .map(|j| {
            let (mut x, mut y) = (0.0, 0.0);
            for &(m, re, im) in &coef {
                let ang = 2.0 * PI * (m as f64) * (j as f64) / out_n as f64;
                let (s, c) = ang.sin_cos();
                x += re * c - im * s;
                y += re * s + im * c;
            }
            Vec2::new(x, y)
        })
        .collect()
}

fn main() {
    let grid = GridSpec::square(256, 2.0).unwrap();
    let dx = grid.dx();
    let h = 5e-3;
    let f = ScalarField::from_fn(grid, |p| (p.norm() - 1.0) / h - 1.0);
    let u = solve_relaxed(&f, 1e-6, 20_000).unwrap();
    let c_pd = extract_contours(&u, 0.5).unwrap().remove(0);
    for k in [8usize, 12, 16, 24, 32] {
        let dense = resample_closed(&c_pd.vertices, dx / 2.0);
        let n_out = (c_pd.length() / dx).round() as usize;
        let c = compute_normals_curvature(resample_closed(&fourier_hard(&dense, 4 * n_out, k), dx)).unwrap();
        let rep = two_point_report(std::slice::from_ref(&c)).unwrap();
        let mean_r: f64 = c.vertices.iter().map(|v| v.norm()).sum::<f64>() / c.len() as f64;
        println!("circle K={k}: mean_r {:.6} turning {:.4} s_norm {:.4} ubc {:.4} lip {:.4}",
            mean_r, c.total_turning(), rep.s_norm, rep.ubc_radius, rep.normal_lip);
    }
    let shape = ShapeSpec::Ellipse { cx: 0.0, cy: 0.0, a: 1.5, b: 0.75 };
    let ue = rasterize(&shape, grid).unwrap();
    let ce = extract_contours(&ue, 0.5).unwrap().remove(0);
    for k in [12usize, 16, 24, 32] {
        let dense = resample_closed(&ce.vertices, dx / 2.0);
        let n_out = (ce.length() / dx).round() as usize;
        let c = compute_normals_curvature(resample_closed(&fourier_hard(&dense, 4 * n_out, k), dx)).unwrap();
        let rep = two_point_report(std::slice::from_ref(&c)).unwrap();
        let kmax_v = c.kappa.iter().cloned().fold(f64::MIN, f64::max);
        println!("ellipse K={k}: kappa_max {:.4} (2.667) ubc {:.4} (0.375) turning {:.4} s_norm {:.4}",
            kmax_v, rep.ubc_radius, c.total_turning(), rep.s_norm);
    }
    // dumbbell fidelity: narrow neck must survive smoothing
    let db = ShapeSpec::Dumbbell { neck_width: 0.15, lobe_r: 0.7, separation: 1.6 };
    let ud = rasterize(&db, grid).unwrap();
    let cd = extract_contours(&ud, 0.5).unwrap().remove(0);
    println!("dumbbell raw: len {:.4} turning {:.4}", cd.length(), cd.total_turning());
    for k in [24usize, 32, 48] {
        let dense = resample_closed(&cd.vertices, dx / 2.0);
        let n_out = (cd.length() / dx).round() as usize;
        let c = compute_normals_curvature(resample_closed(&fourier_hard(&dense, 4 * n_out, k), dx)).unwrap();
        // neck half width: min |y| over vertices with |x| < 0.2
        let neck: f64 = c.vertices.iter().filter(|v| v.x.abs() < 0.2).map(|v| v.y.abs()).fold(f64::INFINITY, f64::min);
        println!("dumbbell K={k}: len {:.4} turning {:.4} neck_half {:.4} (0.075)", c.length(), c.total_turning(), neck);
    }
}
