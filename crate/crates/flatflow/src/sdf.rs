//! Exact signed distance to polyline contours on the node grid, with
//! finite-difference derivatives and the nearest-point projection.
//!
//! Distance is the exact Euclidean distance to the nearest polyline segment
//! (uniform spatial bucketing, bucket = 4·dx, with a Lipschitz-carried upper
//! bound along each row so the ring search stays near-linear). Sign comes
//! from even–odd ray-crossing parity near the contour; the indicator field is
//! used only as a fast pre-filter far from it. Inside is negative.

use crate::contour::Contour;
use crate::grid::{GridSpec, IndicatorField};
use crate::vec2::{point_segment_closest, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SdfError {
    #[error("no closed contour supplied")]
    OpenContour,
    #[error("degenerate (zero-length) segment at component {component} index {index}")]
    DegenerateSegment { component: usize, index: usize },
    #[error("stencil would reach within 2 cells of the grid boundary")]
    BoundaryStencil,
    #[error("outside the differentiability tube: eikonal residual {residual}")]
    OutsideTube { residual: f64 },
    #[error("ambiguous projection: competing segment minima {d1} and {d2} separated along the contour")]
    AmbiguousProjection { d1: f64, d2: f64 },
    #[error("projection routes disagree by {gap} (> 3dx)")]
    ProjectionInconsistent { gap: f64 },
}

/// d_E sampled on grid nodes (cell centers), negative strictly inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedDistanceField {
    pub grid: GridSpec,
    pub d: Vec<f64>,
    pub source_contour_id: u64,
}

/// Projection of a point onto the contour together with the distance data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSample {
    pub x: Vec2,
    pub pi_x: Vec2,
    pub d_x: f64,
    pub grad_d_x: Vec2,
}

/// Nearest-segment query result against a [`PolylineIndex`].
#[derive(Debug, Clone, Copy)]
pub struct NearestSegment {
    pub distance: f64,
    pub component: usize,
    pub segment: usize,
    pub t: f64,
    pub point: Vec2,
    /// Arc-length position of the foot along its component.
    pub arc: f64,
}

struct Segment {
    a: Vec2,
    b: Vec2,
    component: u32,
    index: u32,
    arc_start: f64,
}

/// Uniform-bucket spatial index over the segments of one or more closed
/// polylines; queries are exact (expanding ring search with a distance bound).
pub struct PolylineIndex {
    segments: Vec<Segment>,
    buckets: Vec<Vec<u32>>,
    nbx: usize,
    nby: usize,
    bucket_size: f64,
    origin: Vec2,
    /// Total length per component.
    pub component_lengths: Vec<f64>,
}

impl PolylineIndex {
    pub fn build(contours: &[Contour], bucket_size: f64) -> Result<Self, SdfError> {
        if contours.is_empty() {
            return Err(SdfError::OpenContour);
        }
        let mut segments = Vec::new();
        let mut component_lengths = Vec::new();
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (ci, c) in contours.iter().enumerate() {
            let n = c.vertices.len();
            let mut arc = 0.0;
            for i in 0..n {
                let a = c.vertices[i];
                let b = c.vertices[(i + 1) % n];
                let len = (b - a).norm();
                if len < 1e-12 {
                    return Err(SdfError::DegenerateSegment {
                        component: ci,
                        index: i,
                    });
                }
                segments.push(Segment {
                    a,
                    b,
                    component: ci as u32,
                    index: i as u32,
                    arc_start: arc,
                });
                arc += len;
                lo.x = lo.x.min(a.x.min(b.x));
                lo.y = lo.y.min(a.y.min(b.y));
                hi.x = hi.x.max(a.x.max(b.x));
                hi.y = hi.y.max(a.y.max(b.y));
            }
            component_lengths.push(arc);
        }
        let origin = lo - Vec2::new(bucket_size, bucket_size);
        let span = hi - origin + Vec2::new(bucket_size, bucket_size);
        let nbx = (span.x / bucket_size).ceil() as usize + 1;
        let nby = (span.y / bucket_size).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); nbx * nby];
        for (si, seg) in segments.iter().enumerate() {
            let (i0, j0) = bucket_of(seg.a.x.min(seg.b.x), seg.a.y.min(seg.b.y), origin, bucket_size, nbx, nby);
            let (i1, j1) = bucket_of(seg.a.x.max(seg.b.x), seg.a.y.max(seg.b.y), origin, bucket_size, nbx, nby);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nbx + i].push(si as u32);
                }
            }
        }
        Ok(PolylineIndex {
            segments,
            buckets,
            nbx,
            nby,
            bucket_size,
            origin,
            component_lengths,
        })
    }

    /// Exact nearest segment; `upper_bound` (e.g. the Lipschitz bound from a
    /// neighboring node) only accelerates the search, never changes the result.
    pub fn nearest_with_bound(&self, p: Vec2, upper_bound: f64) -> NearestSegment {
        let mut best_d = upper_bound;
        let mut best: Option<u32> = None;
        let (pi, pj) = bucket_of(p.x, p.y, self.origin, self.bucket_size, self.nbx, self.nby);
        let r_cap = self.nbx.max(self.nby);
        for r in 0..=r_cap {
            if (r as f64 - 1.0) * self.bucket_size > best_d {
                break;
            }
            self.for_ring(pi, pj, r, |seg_idx| {
                let seg = &self.segments[seg_idx as usize];
                let q = point_segment_closest(p, seg.a, seg.b);
                let d = q.dist(p);
                if d < best_d || (best.is_none() && d <= best_d) {
                    best_d = d;
                    best = Some(seg_idx);
                }
            });
        }
        // an over-tight bound can only happen through misuse; fall back
        let seg_idx = match best {
            Some(s) => s,
            None => return self.nearest_with_bound(p, f64::INFINITY),
        };
        let seg = &self.segments[seg_idx as usize];
        let q = point_segment_closest(p, seg.a, seg.b);
        let seg_vec = seg.b - seg.a;
        let t = (q - seg.a).dot(seg_vec) / seg_vec.norm_sq();
        NearestSegment {
            distance: q.dist(p),
            component: seg.component as usize,
            segment: seg.index as usize,
            t,
            point: q,
            arc: seg.arc_start + t * seg_vec.norm(),
        }
    }

    pub fn nearest(&self, p: Vec2) -> NearestSegment {
        self.nearest_with_bound(p, f64::INFINITY)
    }

    /// Best distance over segments whose foot lies further than `window`
    /// along the contour from (`component`, `arc`), or on another component.
    pub fn nearest_outside_window(
        &self,
        p: Vec2,
        component: usize,
        arc: f64,
        window: f64,
    ) -> f64 {
        let mut best = f64::INFINITY;
        for seg in &self.segments {
            let q = point_segment_closest(p, seg.a, seg.b);
            let d = q.dist(p);
            if d >= best {
                continue;
            }
            if seg.component as usize != component {
                best = d;
                continue;
            }
            let total = self.component_lengths[component];
            let seg_vec = seg.b - seg.a;
            let t = (q - seg.a).dot(seg_vec) / seg_vec.norm_sq();
            let foot_arc = seg.arc_start + t.clamp(0.0, 1.0) * seg_vec.norm();
            let gap = (foot_arc - arc).abs();
            if gap.min(total - gap) > window {
                best = d;
            }
        }
        best
    }

    /// Visit segments in the Chebyshev shell of radius `r` around a bucket.
    fn for_ring(&self, pi: usize, pj: usize, r: usize, mut visit: impl FnMut(u32)) {
        let (pi, pj, r) = (pi as isize, pj as isize, r as isize);
        let mut cell = |i: isize, j: isize| {
            if i >= 0 && j >= 0 && i < self.nbx as isize && j < self.nby as isize {
                for &s in &self.buckets[j as usize * self.nbx + i as usize] {
                    visit(s);
                }
            }
        };
        if r == 0 {
            cell(pi, pj);
            return;
        }
        for i in (pi - r)..=(pi + r) {
            cell(i, pj - r);
            cell(i, pj + r);
        }
        for j in (pj - r + 1)..=(pj + r - 1) {
            cell(pi - r, j);
            cell(pi + r, j);
        }
    }
}

fn bucket_of(
    x: f64,
    y: f64,
    origin: Vec2,
    bucket_size: f64,
    nbx: usize,
    nby: usize,
) -> (usize, usize) {
    let i = ((x - origin.x) / bucket_size).floor().max(0.0) as usize;
    let j = ((y - origin.y) / bucket_size).floor().max(0.0) as usize;
    (i.min(nbx - 1), j.min(nby - 1))
}

/// Exact signed distance to the contour set, sampled at every grid node.
///
/// Sign: even–odd crossing parity against the polylines decides nodes within
/// 2·dx of the contour; the indicator (a consistent inside test) decides the
/// far field.
pub fn signed_distance(
    contours: &[Contour],
    inside_test: &IndicatorField,
    source_contour_id: u64,
) -> Result<SignedDistanceField, SdfError> {
    let (sdf, _) = signed_distance_with_index(contours, inside_test, source_contour_id)?;
    Ok(sdf)
}

pub fn signed_distance_with_index(
    contours: &[Contour],
    inside_test: &IndicatorField,
    source_contour_id: u64,
) -> Result<(SignedDistanceField, PolylineIndex), SdfError> {
    let grid = inside_test.grid;
    let dx = grid.dx();
    let index = PolylineIndex::build(contours, 4.0 * dx)?;

    // per-row crossings of the rays y = node_y for the parity test
    let mut crossings: Vec<Vec<f64>> = vec![Vec::new(); grid.ny];
    for seg in &index.segments {
        let (mut a, mut b) = (seg.a, seg.b);
        if a.y == b.y {
            continue;
        }
        if a.y > b.y {
            std::mem::swap(&mut a, &mut b);
        }
        // half-open rule [a.y, b.y) avoids double counting at shared vertices
        let j_lo = (((a.y - grid.y_min) / dx - 0.5).ceil().max(0.0)) as usize;
        for j in j_lo..grid.ny {
            let y = grid.y_min + (j as f64 + 0.5) * dx;
            if y >= b.y {
                break;
            }
            if y < a.y {
                continue;
            }
            crossings[j].push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
        }
    }
    for row in &mut crossings {
        row.sort_by(|p, q| p.partial_cmp(q).unwrap());
    }

    let mut d = vec![0.0; grid.len()];
    d.par_chunks_mut(grid.nx)
        .enumerate()
        .for_each(|(j, row)| {
            let row_crossings = &crossings[j];
            let mut carry = f64::INFINITY;
            for (i, slot) in row.iter_mut().enumerate() {
                let p = grid.center(i, j);
                let near = index.nearest_with_bound(p, carry);
                carry = near.distance + dx;
                let inside = if near.distance <= 2.0 * dx {
                    // parity: odd number of crossings strictly to the right
                    let k = row_crossings.partition_point(|&cx| cx <= p.x);
                    (row_crossings.len() - k) % 2 == 1
                } else {
                    inside_test.get(i, j) > 0.5
                };
                *slot = if inside { -near.distance } else { near.distance };
            }
        });

    Ok((
        SignedDistanceField {
            grid,
            d,
            source_contour_id,
        },
        index,
    ))
}

impl SignedDistanceField {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.grid.idx(i, j)]
    }

    fn stencil_check(&self, i: usize, j: usize) -> Result<(), SdfError> {
        if i < 2 || j < 2 || i + 2 >= self.grid.nx || j + 2 >= self.grid.ny {
            return Err(SdfError::BoundaryStencil);
        }
        Ok(())
    }

    /// Unit gradient by 2nd-order central differences at node (i, j).
    /// Errors if the eikonal residual | |∇d| − 1 | exceeds 0.1 (outside the
    /// differentiability tube).
    pub fn grad(&self, i: usize, j: usize) -> Result<Vec2, SdfError> {
        self.stencil_check(i, j)?;
        let dx = self.grid.dx();
        let g = Vec2::new(
            (self.get(i + 1, j) - self.get(i - 1, j)) / (2.0 * dx),
            (self.get(i, j + 1) - self.get(i, j - 1)) / (2.0 * dx),
        );
        let residual = (g.norm() - 1.0).abs();
        if residual > 0.1 {
            return Err(SdfError::OutsideTube { residual });
        }
        Ok(g.normalized())
    }

    /// Δd by the 5-point Laplacian; equals the curvature of the nearest level
    /// set (κ/(1 + dκ) at distance d in 2D).
    pub fn hessian_trace(&self, i: usize, j: usize) -> Result<f64, SdfError> {
        self.stencil_check(i, j)?;
        // reuse the eikonal guard from grad
        let _ = self.grad(i, j)?;
        let dx = self.grid.dx();
        Ok(
            (self.get(i + 1, j) + self.get(i - 1, j) + self.get(i, j + 1) + self.get(i, j - 1)
                - 4.0 * self.get(i, j))
                / (dx * dx),
        )
    }

    /// Bilinear sample of d at an arbitrary point.
    pub fn sample(&self, p: Vec2) -> f64 {
        let field = crate::grid::ScalarField {
            grid: self.grid,
            values: self.d.clone(),
        };
        field.sample(p)
    }

    /// Node grid as CSV, row-major (one row of nodes per line).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.grid.ny {
            let row: Vec<String> = (0..self.grid.nx)
                .map(|i| format!("{}", self.get(i, j)))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Nearest-point projection computed two ways: (a) x − d ∇d from field
/// stencils, (b) exact nearest point on the polyline. The routes must agree
/// within 3·dx; the returned `pi_x` is (b).
pub fn project(
    sdf: &SignedDistanceField,
    contours: &[Contour],
    index: &PolylineIndex,
    x: Vec2,
) -> Result<ProjectionSample, SdfError> {
    let dx = sdf.grid.dx();
    let near = index.nearest(x);

    // ambiguity: a nearly-equal minimum far away along the contour
    let rival = index.nearest_outside_window(x, near.component, near.arc, 10.0 * dx);
    if rival - near.distance < dx && rival.is_finite() {
        return Err(SdfError::AmbiguousProjection {
            d1: near.distance,
            d2: rival,
        });
    }

    // route (a): x − d ∇d with bilinear samples of the node field
    let d_here = sdf.sample(x);
    let grad = Vec2::new(
        (sdf.sample(x + Vec2::new(dx, 0.0)) - sdf.sample(x - Vec2::new(dx, 0.0))) / (2.0 * dx),
        (sdf.sample(x + Vec2::new(0.0, dx)) - sdf.sample(x - Vec2::new(0.0, dx))) / (2.0 * dx),
    );
    let residual = (grad.norm() - 1.0).abs();
    if residual > 0.1 {
        return Err(SdfError::OutsideTube { residual });
    }
    let grad = grad.normalized();
    let pi_a = x - grad * d_here;
    let gap = (pi_a - near.point).norm();
    if gap > 3.0 * dx {
        return Err(SdfError::ProjectionInconsistent { gap });
    }

    // sign of d at x from the contour normal at the foot
    let c = &contours[near.component];
    let outward = c.normal_at(near.segment, near.t);
    let signed = if (x - near.point).dot(outward) >= 0.0 {
        near.distance
    } else {
        -near.distance
    };
    Ok(ProjectionSample {
        x,
        pi_x: near.point,
        d_x: signed,
        grad_d_x: grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::polygonize;
    use crate::grid::{rasterize, ShapeSpec};
    use crate::oracles::brute_pair_distance;
    use rand::{Rng, SeedableRng};

    fn circle_setup(n_grid: usize) -> (Vec<Contour>, IndicatorField) {
        let grid = GridSpec::square(n_grid, 2.0).unwrap();
        let shape = ShapeSpec::circle(0.0, 0.0, 1.0);
        let u = rasterize(&shape, grid).unwrap();
        let contours = polygonize(&shape, 1024).unwrap();
        (contours, u)
    }

    #[test]
    fn circle_distance_matches_analytic() {
        let (contours, u) = circle_setup(128);
        let sdf = signed_distance(&contours, &u, 0).unwrap();
        let grid = sdf.grid;
        for j in (0..grid.ny).step_by(7) {
            for i in (0..grid.nx).step_by(7) {
                let p = grid.center(i, j);
                let expected = p.norm() - 1.0;
                assert!(
                    (sdf.get(i, j) - expected).abs() < 1e-4,
                    "at {p:?}: {} vs {expected}",
                    sdf.get(i, j)
                );
            }
        }
    }

    #[test]
    fn node_on_contour_vertex_is_zero() {
        let grid = GridSpec::square(64, 2.0).unwrap();
        // circle passing exactly through node (40, 32): radius = node.x
        let node = grid.center(40, 32);
        let shape = ShapeSpec::circle(0.0, node.y, node.x);
        let u = rasterize(&shape, grid).unwrap();
        let contours = polygonize(&shape, 4096).unwrap();
        let sdf = signed_distance(&contours, &u, 0).unwrap();
        assert!(sdf.get(40, 32).abs() < 1e-5, "d = {}", sdf.get(40, 32));
    }

    #[test]
    fn two_disjoint_circles_min_distance_and_sign() {
        let grid = GridSpec::square(128, 2.0).unwrap();
        let shape = ShapeSpec::UnionOfCircles {
            circles: vec![(-0.9, 0.0, 0.5), (0.9, 0.0, 0.5)],
        };
        let u = rasterize(&shape, grid).unwrap();
        let contours = polygonize(&shape, 512).unwrap();
        let sdf = signed_distance(&contours, &u, 0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let i = rng.gen_range(0..grid.nx);
            let j = rng.gen_range(0..grid.ny);
            let p = grid.center(i, j);
            let brute = brute_pair_distance(&[p], &contours)[0];
            assert!(
                (sdf.get(i, j).abs() - brute).abs() <= 1e-12 * brute.max(1.0),
                "|d| {} vs brute {brute}",
                sdf.get(i, j).abs()
            );
            let inside = shape.inside(p);
            if brute > grid.dx() {
                assert_eq!(sdf.get(i, j) < 0.0, inside, "sign at {p:?}");
            }
        }
    }

    #[test]
    fn exactness_against_brute_force() {
        for shape in [
            ShapeSpec::circle(0.1, -0.2, 0.9),
            ShapeSpec::Ellipse {
                cx: 0.0,
                cy: 0.0,
                a: 1.5,
                b: 0.75,
            },
            ShapeSpec::FourierStar {
                r0: 1.0,
                k: 3,
                amplitude: 0.2,
            },
        ] {
            let grid = GridSpec::square(128, 2.0).unwrap();
            let u = rasterize(&shape, grid).unwrap();
            let contours = polygonize(&shape, 777).unwrap();
            let sdf = signed_distance(&contours, &u, 0).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
            let mut points = Vec::new();
            let mut nodes = Vec::new();
            for _ in 0..100 {
                let i = rng.gen_range(0..grid.nx);
                let j = rng.gen_range(0..grid.ny);
                points.push(grid.center(i, j));
                nodes.push((i, j));
            }
            let brute = brute_pair_distance(&points, &contours);
            for (k, &(i, j)) in nodes.iter().enumerate() {
                assert!(
                    (sdf.get(i, j).abs() - brute[k]).abs() <= 1e-12 * brute[k].max(1.0),
                    "{} vs {}",
                    sdf.get(i, j).abs(),
                    brute[k]
                );
            }
        }
    }

    #[test]
    fn gradient_and_hessian_on_circle() {
        let (contours, u) = circle_setup(256);
        let sdf = signed_distance(&contours, &u, 0).unwrap();
        let grid = sdf.grid;
        // nearest node to (1.2, 0)
        let i = ((1.2 - grid.x_min) / grid.dx() - 0.5).round() as usize;
        let j = ((0.0 - grid.y_min) / grid.dx() - 0.5).round() as usize;
        let p = grid.center(i, j);
        let g = sdf.grad(i, j).unwrap();
        assert!((g - p.normalized()).norm() < 0.02, "grad {g:?}");
        let hess = sdf.hessian_trace(i, j).unwrap();
        let expected = 1.0 / p.norm();
        assert!((hess - expected).abs() < 0.05, "hess {hess} vs {expected}");
    }

    #[test]
    fn hessian_vanishes_on_straight_edge() {
        let grid = GridSpec::square(128, 2.0).unwrap();
        let stadium = ShapeSpec::Dumbbell {
            neck_width: 1.2,
            lobe_r: 0.6,
            separation: 1.6,
        };
        let u = rasterize(&stadium, grid).unwrap();
        let contours = polygonize(&stadium, 2048).unwrap();
        let sdf = signed_distance(&contours, &u, 0).unwrap();
        // node just above the straight top edge y = 0.6, x = 0
        let i = grid.nx / 2;
        let j = ((0.7 - grid.y_min) / grid.dx() - 0.5).round() as usize;
        let hess = sdf.hessian_trace(i, j).unwrap();
        assert!(hess.abs() < 0.02, "hess {hess}");
    }

    #[test]
    fn hessian_at_ellipse_vertex_offset() {
        let grid = GridSpec::square(256, 2.0).unwrap();
        let shape = ShapeSpec::Ellipse {
            cx: 0.0,
            cy: 0.0,
            a: 1.5,
            b: 0.75,
        };
        let u = rasterize(&shape, grid).unwrap();
        let contours = polygonize(&shape, 4096).unwrap();
        let sdf = signed_distance(&contours, &u, 0).unwrap();
        let dx = grid.dx();
        let kappa = 1.5 / (0.75 * 0.75);
        // outward of the vertex (a, 0) by 2dx
        let target = Vec2::new(1.5 + 2.0 * dx, 0.0);
        let i = ((target.x - grid.x_min) / dx - 0.5).round() as usize;
        let j = ((target.y - grid.y_min) / dx - 0.5).round() as usize;
        let p = grid.center(i, j);
        let d = p.x - 1.5; // distance along the axis
        let expected = kappa / (1.0 + d * kappa);
        let hess = sdf.hessian_trace(i, j).unwrap();
        assert!(
            (hess - expected).abs() < 0.05 * expected,
            "hess {hess} vs {expected}"
        );
    }

    #[test]
    fn projection_on_circle() {
        let (contours, u) = circle_setup(256);
        let (sdf, index) = signed_distance_with_index(&contours, &u, 0).unwrap();
        let sample = project(&sdf, &contours, &index, Vec2::new(1.5, 0.0)).unwrap();
        assert!((sample.pi_x - Vec2::new(1.0, 0.0)).norm() < 1e-4);
        assert!((sample.d_x - 0.5).abs() < 1e-4);
        assert!((sample.grad_d_x - Vec2::new(1.0, 0.0)).norm() < 0.03);

        // a point on the contour projects to itself
        let on = contours[0].vertices[17];
        let sample = project(&sdf, &contours, &index, on).unwrap();
        assert!((sample.pi_x - on).norm() < 1e-9);
        assert!(sample.d_x.abs() < 1e-9);
    }

    #[test]
    fn dumbbell_neck_midpoint_is_ambiguous() {
        let grid = GridSpec::square(128, 2.0).unwrap();
        let shape = ShapeSpec::Dumbbell {
            neck_width: 0.3,
            lobe_r: 0.6,
            separation: 1.6,
        };
        let u = rasterize(&shape, grid).unwrap();
        let contours = polygonize(&shape, 2048).unwrap();
        let (sdf, index) = signed_distance_with_index(&contours, &u, 0).unwrap();
        let err = project(&sdf, &contours, &index, Vec2::new(0.0, 0.0)).unwrap_err();
        assert!(matches!(err, SdfError::AmbiguousProjection { .. }), "{err}");
    }

    #[test]
    fn eikonal_inside_tube() {
        let grid = GridSpec::square(256, 2.0).unwrap();
        let shape = ShapeSpec::Ellipse {
            cx: 0.0,
            cy: 0.0,
            a: 1.5,
            b: 0.75,
        };
        let u = rasterize(&shape, grid).unwrap();
        let contours = polygonize(&shape, 2048).unwrap();
        let sdf = signed_distance(&contours, &u, 0).unwrap();
        let reach = 0.375;
        let mut checked = 0usize;
        for j in 2..grid.ny - 2 {
            for i in 2..grid.nx - 2 {
                if sdf.get(i, j).abs() < reach / 2.0 {
                    let dx = grid.dx();
                    let g = Vec2::new(
                        (sdf.get(i + 1, j) - sdf.get(i - 1, j)) / (2.0 * dx),
                        (sdf.get(i, j + 1) - sdf.get(i, j - 1)) / (2.0 * dx),
                    );
                    assert!(
                        (g.norm() - 1.0).abs() <= 0.05,
                        "eikonal residual {} at ({i},{j}) d {}",
                        (g.norm() - 1.0).abs(),
                        sdf.get(i, j)
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn gradient_lipschitz_inside_tube() {
        let grid = GridSpec::square(256, 2.0).unwrap();
        let shape = ShapeSpec::Ellipse {
            cx: 0.0,
            cy: 0.0,
            a: 1.5,
            b: 0.75,
        };
        let u = rasterize(&shape, grid).unwrap();
        let contours = polygonize(&shape, 2048).unwrap();
        let sdf = signed_distance(&contours, &u, 0).unwrap();
        let reach = 0.375;
        let rho = reach / 2.0;
        let bound = 1.2 / (reach - rho);
        let dx = grid.dx();
        for j in (2..grid.ny - 3).step_by(3) {
            for i in (2..grid.nx - 3).step_by(3) {
                if sdf.get(i, j).abs() < rho && sdf.get(i + 1, j).abs() < rho {
                    let (Ok(g1), Ok(g2)) = (sdf.grad(i, j), sdf.grad(i + 1, j)) else {
                        continue;
                    };
                    let quotient = (g1 - g2).norm() / dx;
                    assert!(
                        quotient <= bound,
                        "Lipschitz quotient {quotient} vs bound {bound} at ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn projection_routes_agree_in_tube() {
        let (contours, u) = circle_setup(256);
        let (sdf, index) = signed_distance_with_index(&contours, &u, 0).unwrap();
        let dx = sdf.grid.dx();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r: f64 = rng.gen_range(0.7..1.3);
            let p = Vec2::new(r * theta.cos(), r * theta.sin());
            let sample = project(&sdf, &contours, &index, p).unwrap();
            // route (a) recomputed here must also be 3dx-consistent
            let pi_a = p - sample.grad_d_x * sample.d_x;
            assert!((pi_a - sample.pi_x).norm() <= 3.0 * dx);
        }
    }

    #[test]
    fn boundary_stencil_and_tube_errors() {
        let (contours, u) = circle_setup(64);
        let sdf = signed_distance(&contours, &u, 0).unwrap();
        assert_eq!(sdf.grad(1, 30).unwrap_err(), SdfError::BoundaryStencil);
        // center of the circle: medial point, gradient not eikonal
        let c = sdf.grid.nx / 2;
        assert!(matches!(
            sdf.grad(c, c),
            Err(SdfError::OutsideTube { .. })
        ));
    }

    #[test]
    fn degenerate_segment_rejected() {
        let mut c = polygonize(&ShapeSpec::circle(0.0, 0.0, 1.0), 64)
            .unwrap()
            .remove(0);
        c.vertices[3] = c.vertices[4];
        let grid = GridSpec::square(32, 2.0).unwrap();
        let u = IndicatorField::constant(grid, 0.0).unwrap();
        assert!(matches!(
            signed_distance(&[c], &u, 0),
            Err(SdfError::DegenerateSegment { .. })
        ));
    }
}
