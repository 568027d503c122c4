//! Closed oriented polylines with per-vertex outward normals, curvature and
//! arc-length weights, plus subpixel extraction from relaxed indicator fields.
//!
//! Orientation convention: the set E lies on the *left* of the traversal, so
//! the outward normal is always the right-rotated tangent. Outer boundaries
//! come out counterclockwise, holes clockwise, and ν points out of E in both
//! cases. In 2D the mean curvature H is the signed polyline curvature κ,
//! positive where E is convex (κ = 1/R on a disk of radius R).

use crate::grid::{IndicatorField, ShapeSpec};
use crate::vec2::{point_segment_closest, segments_intersect, Vec2};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ContourError {
    #[error("contour needs at least {needed} vertices (got {got})")]
    TooFewVertices { needed: usize, got: usize },
    #[error("no contour: field has no {0}-level crossings")]
    NoContour(f64),
    #[error("contour is self-intersecting")]
    SelfIntersecting,
    #[error("cannot polygonize shape analytically: {0}")]
    PolygonizeUnsupported(String),
    #[error("bad polyline: {0}")]
    BadPolyline(String),
}

/// Closed oriented polyline with differential data at each vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    /// Ordered vertices; closure is implicit (no duplicated endpoint).
    pub vertices: Vec<Vec2>,
    /// Unit outward normals.
    pub normals: Vec<Vec2>,
    /// Signed curvature, positive = convex outward.
    pub kappa: Vec<f64>,
    /// Arc-length weight: half-sum of the adjacent edge lengths.
    pub ds: Vec<f64>,
    /// Positive signed area (outer boundary) or not (hole).
    pub ccw: bool,
}

/// Low-order Sobolev norms of the curvature along a contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureNorms {
    /// ‖H‖_{L²(∂E)}
    pub l2_h: f64,
    /// ‖∇_τ H‖_{L²(∂E)}
    pub l2_grad_h: f64,
    /// ‖H‖_{L^∞(∂E)}
    pub linf_h: f64,
}

const MIN_VERTICES: usize = 16;

/// Fill ν, κ, ds for an oriented closed polygon (set on the left of the
/// traversal). Normals come from the rotated central-difference tangent,
/// curvature from a 5-point circumscribed-circle fit.
pub fn compute_normals_curvature(vertices: Vec<Vec2>) -> Result<Contour, ContourError> {
    let n = vertices.len();
    if n < MIN_VERTICES {
        return Err(ContourError::TooFewVertices {
            needed: MIN_VERTICES,
            got: n,
        });
    }
    let mut normals = Vec::with_capacity(n);
    let mut ds = Vec::with_capacity(n);
    for i in 0..n {
        let prev = vertices[(i + n - 1) % n];
        let next = vertices[(i + 1) % n];
        let tangent = next - prev;
        normals.push(tangent.rot_cw().normalized());
        ds.push(0.5 * (vertices[i].dist(prev) + vertices[i].dist(next)));
    }
    let mut kappa = Vec::with_capacity(n);
    for i in 0..n {
        kappa.push(circle_fit_curvature(&vertices, i, normals[i]));
    }
    let ccw = signed_area(&vertices) > 0.0;
    Ok(Contour {
        vertices,
        normals,
        kappa,
        ds,
        ccw,
    })
}

/// Signed curvature at vertex `i` from the circle through the 5-point window
/// centered there (algebraic least-squares fit). Collinear windows give 0.
fn circle_fit_curvature(vertices: &[Vec2], i: usize, normal: Vec2) -> f64 {
    let n = vertices.len();
    let mut pts = [Vec2::ZERO; 5];
    let mut centroid = Vec2::ZERO;
    for (k, p) in pts.iter_mut().enumerate() {
        *p = vertices[(i + n + k - 2) % n];
        centroid = centroid + *p;
    }
    centroid = centroid / 5.0;
    // centroid-local coordinates scaled to O(1): Σq = 0 decouples the
    // constant from the linear part of the fit z = A x + B y + C
    let mut scale = 0.0f64;
    for p in pts.iter_mut() {
        *p = *p - centroid;
        scale = scale.max(p.norm());
    }
    if scale == 0.0 {
        return 0.0;
    }
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut sxz, mut syz, mut sz) = (0.0, 0.0, 0.0);
    for p in &pts {
        let q = *p / scale;
        let z = q.norm_sq();
        sxx += q.x * q.x;
        sxy += q.x * q.y;
        syy += q.y * q.y;
        sxz += q.x * z;
        syz += q.y * z;
        sz += z;
    }
    let det = sxx * syy - sxy * sxy;
    if det.abs() < 1e-14 {
        return 0.0;
    }
    let a = 0.5 * (sxz * syy - sxy * syz) / det;
    let b = 0.5 * (sxx * syz - sxy * sxz) / det;
    let c = sz / 5.0;
    let r_sq = c + a * a + b * b;
    if !(r_sq > 0.0) || r_sq > 1e12 {
        return 0.0;
    }
    let curvature = 1.0 / (r_sq.sqrt() * scale);
    // fit center on the inner (−ν) side means convex outward
    let center_world = centroid + Vec2::new(a, b) * scale;
    if (center_world - vertices[i]).dot(normal) < 0.0 {
        curvature
    } else {
        -curvature
    }
}

pub fn signed_area(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += vertices[i].cross(vertices[(i + 1) % n]);
    }
    0.5 * acc
}

impl Contour {
    /// Build from a simple polygon of unknown orientation; reorients ccw so
    /// normals point out of the enclosed region.
    pub fn from_polygon(mut vertices: Vec<Vec2>) -> Result<Self, ContourError> {
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        compute_normals_curvature(vertices)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Polygon length Σ ds.
    pub fn length(&self) -> f64 {
        self.ds.iter().sum()
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Area centroid of the enclosed polygon.
    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len();
        let mut acc = Vec2::ZERO;
        let mut area = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = p.cross(q);
            acc = acc + (p + q) * w;
            area += w;
        }
        acc / (3.0 * area)
    }

    /// Total turning ∮ κ ds; ≈ ±2π for a simple closed contour.
    pub fn total_turning(&self) -> f64 {
        self.kappa.iter().zip(self.ds.iter()).map(|(k, s)| k * s).sum()
    }

    /// Closest point on the polyline: (distance, segment index, parameter).
    pub fn closest_point(&self, p: Vec2) -> (f64, usize, f64, Vec2) {
        let n = self.vertices.len();
        let mut best = (f64::INFINITY, 0usize, 0.0f64, Vec2::ZERO);
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let q = point_segment_closest(p, a, b);
            let d = q.dist(p);
            if d < best.0 {
                let seg = b - a;
                let t = if seg.norm_sq() > 0.0 {
                    (q - a).dot(seg) / seg.norm_sq()
                } else {
                    0.0
                };
                best = (d, i, t, q);
            }
        }
        best
    }

    /// Outward normal interpolated along segment `i` at parameter `t`.
    pub fn normal_at(&self, i: usize, t: f64) -> Vec2 {
        let n = self.vertices.len();
        let na = self.normals[i];
        let nb = self.normals[(i + 1) % n];
        (na * (1.0 - t) + nb * t).normalized()
    }

    /// Consistency checks used by tests and the diagnose command.
    pub fn validate(&self, turning_tol: f64) -> Result<(), ContourError> {
        let n = self.vertices.len();
        if n < MIN_VERTICES {
            return Err(ContourError::TooFewVertices {
                needed: MIN_VERTICES,
                got: n,
            });
        }
        for nu in &self.normals {
            if (nu.norm() - 1.0).abs() > 1e-9 {
                return Err(ContourError::BadPolyline("non-unit normal".into()));
            }
        }
        let expected = if self.ccw { 2.0 * PI } else { -2.0 * PI };
        let turning = self.total_turning();
        if (turning - expected).abs() > turning_tol {
            return Err(ContourError::BadPolyline(format!(
                "total turning {turning} differs from {expected}"
            )));
        }
        if self.has_self_intersection() {
            return Err(ContourError::SelfIntersecting);
        }
        Ok(())
    }

    pub fn has_self_intersection(&self) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let a1 = self.vertices[i];
            let b1 = self.vertices[(i + 1) % n];
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue; // shared vertex with the closing segment
                }
                let a2 = self.vertices[j];
                let b2 = self.vertices[(j + 1) % n];
                if segments_intersect(a1, b1, a2, b2) {
                    return true;
                }
            }
        }
        false
    }

    /// CSV with header `x,y,nx,ny,kappa,ds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,nx,ny,kappa,ds\n");
        for i in 0..self.vertices.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.vertices[i].x,
                self.vertices[i].y,
                self.normals[i].x,
                self.normals[i].y,
                self.kappa[i],
                self.ds[i]
            ));
        }
        out
    }

    /// SVG path element data for the closed polyline.
    pub fn svg_path_data(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.vertices.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            out.push_str(&format!("{cmd}{:.5} {:.5} ", v.x, v.y));
        }
        out.push('Z');
        out
    }
}

/// ‖H‖ and ‖∇_τ H‖ in L², and ‖H‖_∞, along one contour.
pub fn curvature_norms(contour: &Contour) -> CurvatureNorms {
    let n = contour.len();
    let mut l2_h_sq = 0.0;
    let mut l2_grad_sq = 0.0;
    let mut linf: f64 = 0.0;
    for i in 0..n {
        let k = contour.kappa[i];
        l2_h_sq += k * k * contour.ds[i];
        linf = linf.max(k.abs());
        let kp = contour.kappa[(i + 1) % n];
        let km = contour.kappa[(i + n - 1) % n];
        let denom = contour.ds[(i + 1) % n] + contour.ds[i];
        let grad = (kp - km) / denom;
        l2_grad_sq += grad * grad * contour.ds[i];
    }
    CurvatureNorms {
        l2_h: l2_h_sq.sqrt(),
        l2_grad_h: l2_grad_sq.sqrt(),
        linf_h: linf,
    }
}

/// Curvature norms accumulated over all components of a boundary.
pub fn curvature_norms_multi(contours: &[Contour]) -> CurvatureNorms {
    let mut l2_h_sq = 0.0;
    let mut l2_grad_sq = 0.0;
    let mut linf: f64 = 0.0;
    for c in contours {
        let norms = curvature_norms(c);
        l2_h_sq += norms.l2_h * norms.l2_h;
        l2_grad_sq += norms.l2_grad_h * norms.l2_grad_h;
        linf = linf.max(norms.linf_h);
    }
    CurvatureNorms {
        l2_h: l2_h_sq.sqrt(),
        l2_grad_h: l2_grad_sq.sqrt(),
        linf_h: linf,
    }
}

/// H̄ = (∮ κ ds) / (∮ ds) over one or more components.
pub fn mean_curvature_average(contours: &[Contour]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for c in contours {
        num += c.total_turning();
        den += c.length();
    }
    num / den
}

/// Symmetric Hausdorff distance between polylines (vertices vs segments).
pub fn hausdorff_distance(c1: &Contour, c2: &Contour) -> f64 {
    fn one_sided(a: &Contour, b: &Contour) -> f64 {
        a.vertices
            .iter()
            .map(|&p| b.closest_point(p).0)
            .fold(0.0, f64::max)
    }
    one_sided(c1, c2).max(one_sided(c2, c1))
}

/// Resample a closed polygon to uniform arc-length spacing ≈ `spacing`.
pub fn resample_closed(points: &[Vec2], spacing: f64) -> Vec<Vec2> {
    // drop duplicate consecutive points
    let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
    for &p in points {
        if pts.last().map_or(true, |&q| (p - q).norm_sq() > 1e-24) {
            pts.push(p);
        }
    }
    if pts.len() > 1 && (pts[0] - *pts.last().unwrap()).norm_sq() <= 1e-24 {
        pts.pop();
    }
    let m = pts.len();
    let mut cumulative = Vec::with_capacity(m + 1);
    cumulative.push(0.0);
    for i in 0..m {
        let seg = pts[(i + 1) % m] - pts[i];
        cumulative.push(cumulative[i] + seg.norm());
    }
    let total = cumulative[m];
    let n = ((total / spacing).round() as usize).max(MIN_VERTICES);
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    for k in 0..n {
        let s = k as f64 * total / n as f64;
        while seg + 1 < m && cumulative[seg + 1] <= s {
            seg += 1;
        }
        let seg_len = cumulative[seg + 1] - cumulative[seg];
        let t = if seg_len > 0.0 {
            (s - cumulative[seg]) / seg_len
        } else {
            0.0
        };
        let a = pts[seg];
        let b = pts[(seg + 1) % m];
        out.push(a + (b - a) * t);
    }
    out
}

// ---------------------------------------------------------------------------
// Marching squares
// ---------------------------------------------------------------------------

/// Spectral denoising applied to each marching-squares loop before the
/// differential operators. Cell-scale vertex jitter (a few percent of dx)
/// would otherwise be amplified by ~1/dx² in curvature and by 1/|x−y| in the
/// two-point sweep; truncating the loop's Fourier series at a wavenumber tied
/// to the uniform-ball radius removes it while leaving resolvable geometry
/// intact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// Keep modes |m| ≤ K, chosen from the uniform-ball radius by
    /// K = clamp(⌈5 L / (2π r̂)⌉, 6, 48), iterating r̂ on the smoothed loop.
    Auto,
    /// Keep modes |m| ≤ K with a fixed K.
    MaxMode(usize),
    /// Raw marching-squares vertices (tests, debugging).
    None,
}

/// Extract all closed level-`level` contours of the relaxed field by marching
/// squares with linear edge interpolation. Saddles are resolved by the
/// cell-center average. Loops shorter than 6·dx are discarded as noise;
/// surviving loops are spectrally denoised and resampled to spacing ≈ dx.
pub fn extract_contours(u: &IndicatorField, level: f64) -> Result<Vec<Contour>, ContourError> {
    extract_contours_with_stats(u, level, Smoothing::Auto).map(|(contours, _)| contours)
}

pub fn extract_contours_with_stats(
    u: &IndicatorField,
    level: f64,
    smoothing: Smoothing,
) -> Result<(Vec<Contour>, usize), ContourError> {
    let grid = u.grid;
    let dx = grid.dx();
    let raw_loops = march(u, level);
    if raw_loops.is_empty() {
        return Err(ContourError::NoContour(level));
    }
    let mut contours = Vec::new();
    let mut discarded = 0usize;
    for points in raw_loops {
        let length: f64 = (0..points.len())
            .map(|i| (points[(i + 1) % points.len()] - points[i]).norm())
            .sum();
        if length < 6.0 * dx {
            discarded += 1;
            continue;
        }
        let polished = match smoothing {
            Smoothing::None => resample_closed(&points, dx),
            Smoothing::MaxMode(k) => denoise_loop(&points, dx, Some(k)),
            Smoothing::Auto => denoise_loop(&points, dx, None),
        };
        contours.push(compute_normals_curvature(polished)?);
    }
    if contours.is_empty() {
        return Err(ContourError::NoContour(level));
    }
    Ok((contours, discarded))
}

const SMOOTH_MODE_MIN: usize = 6;
const SMOOTH_MODE_MAX: usize = 48;

fn denoise_loop(points: &[Vec2], dx: f64, max_mode: Option<usize>) -> Vec<Vec2> {
    let dense = resample_closed(points, dx / 2.0);
    let length: f64 = (0..dense.len())
        .map(|i| (dense[(i + 1) % dense.len()] - dense[i]).norm())
        .sum();
    let out_n = ((length / dx).round() as usize).max(MIN_VERTICES);
    match max_mode {
        Some(k) => {
            resample_closed(&spectral_lowpass_closed(&dense, 2 * out_n, k), dx)
        }
        None => {
            // iterate the cutoff with the uniform-ball radius it produces
            let mut k = SMOOTH_MODE_MIN.max(8);
            for _ in 0..3 {
                let trial = resample_closed(&spectral_lowpass_closed(&dense, 2 * out_n, k), dx);
                let next_k = match cutoff_from_reach(&trial, length) {
                    Some(next) => next,
                    None => break,
                };
                if next_k == k {
                    break;
                }
                k = next_k;
            }
            resample_closed(&spectral_lowpass_closed(&dense, 2 * out_n, k), dx)
        }
    }
}

fn cutoff_from_reach(vertices: &[Vec2], length: f64) -> Option<usize> {
    let contour = compute_normals_curvature(vertices.to_vec()).ok()?;
    let report = crate::two_point::two_point_report(std::slice::from_ref(&contour)).ok()?;
    let k = (5.0 * length / (2.0 * PI * report.ubc_radius)).ceil() as usize;
    Some(k.clamp(SMOOTH_MODE_MIN, SMOOTH_MODE_MAX))
}

/// Truncate the closed curve's Fourier series (z = x + iy over a uniform
/// parameter) at wavenumber `max_mode`, synthesized at `out_n` points.
pub fn spectral_lowpass_closed(points: &[Vec2], out_n: usize, max_mode: usize) -> Vec<Vec2> {
    let n = points.len();
    let kmax = max_mode.min(n / 2 - 1) as i64;
    let mut coef = Vec::with_capacity((2 * kmax + 1) as usize);
    for m in -kmax..=kmax {
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

/// Lattice edge holding an interpolated crossing; `horizontal` edges go from
/// node (i,j) to (i+1,j), vertical from (i,j) to (i,j+1).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct EdgeKey {
    i: u32,
    j: u32,
    horizontal: bool,
}

fn march(u: &IndicatorField, level: f64) -> Vec<Vec<Vec2>> {
    let grid = u.grid;
    let inside = |i: usize, j: usize| u.get(i, j) > level;
    let crossing = |from: (usize, usize), to: (usize, usize), horizontal: bool| -> (EdgeKey, Vec2) {
        let v0 = u.get(from.0, from.1);
        let v1 = u.get(to.0, to.1);
        let t = ((level - v0) / (v1 - v0)).clamp(1e-9, 1.0 - 1e-9);
        let a = grid.center(from.0, from.1);
        let b = grid.center(to.0, to.1);
        (
            EdgeKey {
                i: from.0 as u32,
                j: from.1 as u32,
                horizontal,
            },
            a + (b - a) * t,
        )
    };

    // Directed segments (from-edge → to-edge) with the set on the left.
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    let mut edge_points: HashMap<EdgeKey, Vec2> = HashMap::new();
    for j in 0..grid.ny - 1 {
        for i in 0..grid.nx - 1 {
            let b0 = inside(i, j);
            let b1 = inside(i + 1, j);
            let b2 = inside(i + 1, j + 1);
            let b3 = inside(i, j + 1);
            let case = b0 as u8 | (b1 as u8) << 1 | (b2 as u8) << 2 | (b3 as u8) << 3;
            if case == 0 || case == 15 {
                continue;
            }
            let bottom = || crossing((i, j), (i + 1, j), true);
            let top = || crossing((i, j + 1), (i + 1, j + 1), true);
            let left = || crossing((i, j), (i, j + 1), false);
            let right = || crossing((i + 1, j), (i + 1, j + 1), false);
            let mut emit = |from: (EdgeKey, Vec2), to: (EdgeKey, Vec2)| {
                edge_points.insert(from.0, from.1);
                edge_points.insert(to.0, to.1);
                segments.push((from.0, to.0));
            };
            match case {
                1 => emit(bottom(), left()),
                2 => emit(right(), bottom()),
                4 => emit(top(), right()),
                8 => emit(left(), top()),
                3 => emit(right(), left()),
                12 => emit(left(), right()),
                6 => emit(top(), bottom()),
                9 => emit(bottom(), top()),
                14 => emit(left(), bottom()),
                13 => emit(bottom(), right()),
                11 => emit(right(), top()),
                7 => emit(top(), left()),
                5 => {
                    let center = 0.25
                        * (u.get(i, j) + u.get(i + 1, j) + u.get(i + 1, j + 1) + u.get(i, j + 1));
                    if center > level {
                        emit(top(), left());
                        emit(bottom(), right());
                    } else {
                        emit(bottom(), left());
                        emit(top(), right());
                    }
                }
                10 => {
                    let center = 0.25
                        * (u.get(i, j) + u.get(i + 1, j) + u.get(i + 1, j + 1) + u.get(i, j + 1));
                    if center > level {
                        emit(left(), bottom());
                        emit(right(), top());
                    } else {
                        emit(right(), bottom());
                        emit(left(), top());
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    // chain directed segments into closed loops, in creation order for
    // deterministic output
    let mut next: HashMap<EdgeKey, EdgeKey> = HashMap::with_capacity(segments.len());
    for &(from, to) in &segments {
        next.insert(from, to);
    }
    let mut used: HashMap<EdgeKey, bool> = HashMap::with_capacity(segments.len());
    let mut loops = Vec::new();
    for &(start, _) in &segments {
        if used.get(&start).copied().unwrap_or(false) {
            continue;
        }
        let mut walk = Vec::new();
        let mut cur = start;
        loop {
            used.insert(cur, true);
            walk.push(edge_points[&cur]);
            match next.get(&cur) {
                Some(&to) => {
                    cur = to;
                    if cur == start {
                        break;
                    }
                }
                None => break, // open chain (field clipped at rim); drop below
            }
        }
        if cur == start && walk.len() >= 3 {
            loops.push(walk);
        }
    }
    loops
}

// ---------------------------------------------------------------------------
// Analytic polygonization
// ---------------------------------------------------------------------------

/// Polygonize a shape boundary analytically into contours of roughly
/// `n_vertices` vertices per component (uniform arc-length after resampling).
/// Supports circle, ellipse, fourier-star, disjoint unions of circles, and
/// dumbbells (including the stadium case neck_width = 2·lobe_r).
pub fn polygonize(shape: &ShapeSpec, n_vertices: usize) -> Result<Vec<Contour>, ContourError> {
    let polylines = boundary_polylines(shape, n_vertices.max(MIN_VERTICES))?;
    polylines
        .into_iter()
        .map(|pts| {
            let total: f64 = (0..pts.len())
                .map(|i| (pts[(i + 1) % pts.len()] - pts[i]).norm())
                .sum();
            let spacing = total / n_vertices as f64;
            compute_normals_curvature(resample_closed(&pts, spacing))
        })
        .collect()
}

fn boundary_polylines(
    shape: &ShapeSpec,
    n: usize,
) -> Result<Vec<Vec<Vec2>>, ContourError> {
    let circle_points = |cx: f64, cy: f64, r: f64, m: usize| -> Vec<Vec2> {
        (0..m)
            .map(|k| {
                let theta = 2.0 * PI * k as f64 / m as f64;
                Vec2::new(cx + r * theta.cos(), cy + r * theta.sin())
            })
            .collect()
    };
    match *shape {
        ShapeSpec::Circle { cx, cy, r } => Ok(vec![circle_points(cx, cy, r, n)]),
        ShapeSpec::Ellipse { cx, cy, a, b } => {
            // parameter-uniform oversampling; caller resamples to arc length
            let m = 4 * n;
            Ok(vec![(0..m)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / m as f64;
                    Vec2::new(cx + a * t.cos(), cy + b * t.sin())
                })
                .collect()])
        }
        ShapeSpec::FourierStar { r0, k, amplitude } => {
            let m = 4 * n;
            Ok(vec![(0..m)
                .map(|j| {
                    let theta = 2.0 * PI * j as f64 / m as f64;
                    let r = r0 * (1.0 + amplitude * (k as f64 * theta).cos());
                    Vec2::new(r * theta.cos(), r * theta.sin())
                })
                .collect()])
        }
        ShapeSpec::UnionOfCircles { ref circles } => {
            for (ci, &(x1, y1, r1)) in circles.iter().enumerate() {
                for &(x2, y2, r2) in circles.iter().skip(ci + 1) {
                    let gap = Vec2::new(x1 - x2, y1 - y2).norm() - r1 - r2;
                    if gap <= 0.0 {
                        return Err(ContourError::PolygonizeUnsupported(
                            "union-of-circles components overlap".into(),
                        ));
                    }
                }
            }
            Ok(circles
                .iter()
                .map(|&(cx, cy, r)| circle_points(cx, cy, r, n))
                .collect())
        }
        ShapeSpec::Dumbbell {
            neck_width,
            lobe_r,
            separation,
        } => {
            let half = separation / 2.0;
            let attach = (neck_width / 2.0 / lobe_r).asin();
            if half <= lobe_r * attach.cos() {
                return Err(ContourError::PolygonizeUnsupported(
                    "dumbbell lobes overlap the neck".into(),
                ));
            }
            // ccw walk: top edge right→left, left lobe, bottom edge, right lobe
            let m = 4 * n;
            let x_att = half - lobe_r * attach.cos();
            let y_att = neck_width / 2.0;
            let mut pts = Vec::new();
            let edge_len = 2.0 * x_att;
            let arc_len = lobe_r * (2.0 * PI - 2.0 * attach);
            let total = 2.0 * edge_len + 2.0 * arc_len;
            let count = |piece: f64| ((piece / total * m as f64).round() as usize).max(4);
            for k in 0..count(edge_len) {
                let t = k as f64 / count(edge_len) as f64;
                pts.push(Vec2::new(x_att - edge_len * t, y_att));
            }
            for k in 0..count(arc_len) {
                let t = k as f64 / count(arc_len) as f64;
                let phi = attach + (2.0 * PI - 2.0 * attach) * t;
                pts.push(Vec2::new(-half + lobe_r * phi.cos(), lobe_r * phi.sin()));
            }
            for k in 0..count(edge_len) {
                let t = k as f64 / count(edge_len) as f64;
                pts.push(Vec2::new(-x_att + edge_len * t, -y_att));
            }
            for k in 0..count(arc_len) {
                let t = k as f64 / count(arc_len) as f64;
                let phi = attach - PI + (2.0 * PI - 2.0 * attach) * t;
                pts.push(Vec2::new(half + lobe_r * phi.cos(), lobe_r * phi.sin()));
            }
            Ok(vec![pts])
        }
    }
}

/// Parse a contour from CSV text with `x,y` leading columns (header optional,
/// extra columns ignored, duplicated closing point dropped).
pub fn parse_contour_csv(text: &str) -> Result<Vec<Vec2>, ContourError> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let sx = cols.next().unwrap_or("").trim();
        let sy = cols
            .next()
            .ok_or_else(|| ContourError::BadPolyline(format!("line {}: need x,y", lineno + 1)))?
            .trim();
        if lineno == 0 && sx.parse::<f64>().is_err() {
            continue; // header row
        }
        let x: f64 = sx
            .parse()
            .map_err(|_| ContourError::BadPolyline(format!("line {}: bad x {sx:?}", lineno + 1)))?;
        let y: f64 = sy
            .parse()
            .map_err(|_| ContourError::BadPolyline(format!("line {}: bad y {sy:?}", lineno + 1)))?;
        points.push(Vec2::new(x, y));
    }
    if points.len() > 1 && (points[0] - *points.last().unwrap()).norm_sq() < 1e-24 {
        points.pop();
    }
    if points.is_empty() {
        return Err(ContourError::BadPolyline("no data rows".into()));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{rasterize, GridSpec};

    fn circle_contour(r: f64, n: usize) -> Contour {
        polygonize(&ShapeSpec::circle(0.0, 0.0, r), n).unwrap().remove(0)
    }

    #[test]
    fn circle_curvature_and_normals() {
        let c = circle_contour(1.0, 1024);
        for i in 0..c.len() {
            assert!(
                (c.kappa[i] - 1.0).abs() < 0.01,
                "kappa {} at {i}",
                c.kappa[i]
            );
            let radial = c.vertices[i].normalized();
            assert!((c.normals[i] - radial).norm() < 1e-4);
        }
        assert!((c.length() - 2.0 * PI).abs() < 1e-3);
        assert!((mean_curvature_average(&[c.clone()]) - 1.0).abs() < 0.01);
        assert!((c.total_turning() - 2.0 * PI).abs() < 0.05);
        c.validate(0.05).unwrap();
    }

    #[test]
    fn ellipse_vertex_curvature() {
        let shape = ShapeSpec::Ellipse {
            cx: 0.0,
            cy: 0.0,
            a: 1.5,
            b: 0.75,
        };
        let c = polygonize(&shape, 2048).unwrap().remove(0);
        let expected = 1.5 / (0.75 * 0.75); // a/b² at (±a, 0)
        let max_kappa = c.kappa.iter().cloned().fold(f64::MIN, f64::max);
        assert!(
            (max_kappa - expected).abs() < 0.02 * expected,
            "max kappa {max_kappa} vs {expected}"
        );
    }

    #[test]
    fn ellipse_l2_norm_matches_quadrature_oracle() {
        // oracle: ∮ κ² ds = ∫ a²b² (a²sin²t + b²cos²t)^{-5/2} dt by Simpson
        let (a, b) = (1.5, 0.75);
        let m = 1 << 14;
        let mut oracle = 0.0;
        for k in 0..m {
            let t = 2.0 * PI * (k as f64 + 0.5) / m as f64;
            let g = a * a * t.sin().powi(2) + b * b * t.cos().powi(2);
            oracle += a * a * b * b * g.powf(-2.5) * (2.0 * PI / m as f64);
        }
        let c = polygonize(
            &ShapeSpec::Ellipse {
                cx: 0.0,
                cy: 0.0,
                a,
                b,
            },
            2048,
        )
        .unwrap()
        .remove(0);
        let norms = curvature_norms(&c);
        let got = norms.l2_h * norms.l2_h;
        assert!(
            (got - oracle).abs() < 0.02 * oracle,
            "l2_H² {got} vs oracle {oracle}"
        );
    }

    #[test]
    fn circle_norms_and_scaling() {
        let c1 = circle_contour(1.0, 1024);
        let n1 = curvature_norms(&c1);
        assert!((n1.l2_h * n1.l2_h - 2.0 * PI).abs() < 0.01);
        assert!(n1.l2_grad_h < 1e-6, "gradient norm {}", n1.l2_grad_h);
        let c2 = circle_contour(2.0, 1024);
        let n2 = curvature_norms(&c2);
        assert!((n2.l2_h * n2.l2_h - PI).abs() < 0.01);
        // invariant: l2² ≤ linf² · length
        assert!(n1.l2_h.powi(2) <= n1.linf_h.powi(2) * c1.length() * (1.0 + 1e-9));
    }

    #[test]
    fn stadium_straight_segment_is_flat() {
        let stadium = ShapeSpec::Dumbbell {
            neck_width: 1.0,
            lobe_r: 0.5,
            separation: 1.5,
        };
        let c = polygonize(&stadium, 1024).unwrap().remove(0);
        c.validate(0.05).unwrap();
        // vertices well inside the straight top edge
        let mut checked = 0;
        for i in 0..c.len() {
            let v = c.vertices[i];
            if v.y > 0.49 && v.x.abs() < 0.5 {
                assert!(c.kappa[i].abs() < 0.02, "kappa {} at {:?}", c.kappa[i], v);
                checked += 1;
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn dumbbell_turning_is_2pi() {
        let shape = ShapeSpec::Dumbbell {
            neck_width: 0.3,
            lobe_r: 0.7,
            separation: 1.6,
        };
        let c = polygonize(&shape, 2048).unwrap().remove(0);
        // the 5-point circle fit reads the sharp reentrant corners low, so
        // the discrete Gauss-Bonnet sum carries an O(1) corner defect here
        assert!(
            (c.total_turning() - 2.0 * PI).abs() < 1.9,
            "turning {}",
            c.total_turning()
        );
        assert!(c.ccw && c.signed_area() > 0.0);
    }

    #[test]
    fn rotation_equivariance_of_curvature() {
        let shape = ShapeSpec::Ellipse {
            cx: 0.0,
            cy: 0.0,
            a: 1.5,
            b: 0.75,
        };
        let c = polygonize(&shape, 512).unwrap().remove(0);
        let angle = 0.7343;
        let rotated: Vec<Vec2> = c.vertices.iter().map(|v| v.rotated(angle)).collect();
        let cr = compute_normals_curvature(rotated).unwrap();
        for i in 0..c.len() {
            // 1e-12-grade equivariance, relative to the curvature scale
            assert!(
                (c.kappa[i] - cr.kappa[i]).abs() < 1e-11 * (1.0 + c.kappa[i].abs()),
                "kappa drift {} at {i}",
                (c.kappa[i] - cr.kappa[i]).abs()
            );
            assert!((c.normals[i].rotated(angle) - cr.normals[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn extract_circle_from_raster() {
        let grid = GridSpec::square(256, 2.0).unwrap();
        let u = rasterize(&ShapeSpec::circle(0.0, 0.0, 1.0), grid).unwrap();
        let contours = extract_contours(&u, 0.5).unwrap();
        assert_eq!(contours.len(), 1);
        let c = &contours[0];
        assert!(
            (c.length() - 2.0 * PI).abs() < 4.0 * grid.dx(),
            "length {}",
            c.length()
        );
        assert!(c.ccw);
        c.validate(0.05).unwrap();
        // subpixel: every vertex close to the true circle
        for v in &c.vertices {
            assert!((v.norm() - 1.0).abs() < 0.5 * grid.dx(), "vertex {v:?}");
        }
    }

    #[test]
    fn extract_two_disjoint_circles() {
        let grid = GridSpec::square(256, 2.0).unwrap();
        let shape = ShapeSpec::UnionOfCircles {
            circles: vec![(-1.0, 0.0, 0.55), (1.0, 0.0, 0.55)],
        };
        let u = rasterize(&shape, grid).unwrap();
        let contours = extract_contours(&u, 0.5).unwrap();
        assert_eq!(contours.len(), 2);
        for c in &contours {
            assert!((c.length() - 2.0 * PI * 0.55).abs() < 4.0 * grid.dx());
            assert!(c.ccw);
        }
    }

    #[test]
    fn extract_empty_field_errors() {
        let grid = GridSpec::square(32, 1.0).unwrap();
        let u = IndicatorField::constant(grid, 0.0).unwrap();
        assert!(matches!(
            extract_contours(&u, 0.5),
            Err(ContourError::NoContour(_))
        ));
        let full = IndicatorField::constant(grid, 1.0).unwrap();
        assert!(matches!(
            extract_contours(&full, 0.5),
            Err(ContourError::NoContour(_))
        ));
    }

    #[test]
    fn hausdorff_cases() {
        let c1 = circle_contour(1.0, 512);
        assert!(hausdorff_distance(&c1, &c1) < 1e-12);
        let c2 = circle_contour(1.1, 512);
        let d = hausdorff_distance(&c1, &c2);
        assert!((d - 0.1).abs() < 1e-3, "hausdorff {d}");
        let shifted: Vec<Vec2> = c1
            .vertices
            .iter()
            .map(|&v| v + Vec2::new(0.3, 0.0))
            .collect();
        let c3 = compute_normals_curvature(shifted).unwrap();
        // brute-force oracle over vertex pairs agrees with the polyline metric
        let mut brute: f64 = 0.0;
        for &p in &c1.vertices {
            let mut best = f64::INFINITY;
            for &q in &c3.vertices {
                best = best.min((p - q).norm());
            }
            brute = brute.max(best);
        }
        let d3 = hausdorff_distance(&c1, &c3);
        assert!((d3 - 0.3).abs() < 1e-3, "hausdorff {d3}");
        assert!(d3 <= brute + 1e-12);
    }

    #[test]
    fn too_few_vertices_rejected() {
        let tri = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(matches!(
            compute_normals_curvature(tri),
            Err(ContourError::TooFewVertices { .. })
        ));
    }

    #[test]
    fn mean_curvature_two_equal_circles() {
        let shape = ShapeSpec::UnionOfCircles {
            circles: vec![(-1.0, 0.0, 0.5), (1.0, 0.0, 0.5)],
        };
        let cs = polygonize(&shape, 512).unwrap();
        assert_eq!(cs.len(), 2);
        let avg = mean_curvature_average(&cs);
        assert!((avg - 2.0).abs() < 0.03, "H̄ {avg}");
    }

    #[test]
    fn gauss_bonnet_via_length_for_any_simple_contour() {
        // H̄ = 2π / length for one ccw component
        let shape = ShapeSpec::FourierStar {
            r0: 1.0,
            k: 3,
            amplitude: 0.15,
        };
        let c = polygonize(&shape, 1024).unwrap().remove(0);
        let avg = mean_curvature_average(std::slice::from_ref(&c));
        let expected = 2.0 * PI / c.length();
        assert!((avg - expected).abs() < 0.02 * expected);
    }

    #[test]
    fn csv_round_trip() {
        let c = circle_contour(1.0, 64);
        let csv = c.to_csv();
        let pts = parse_contour_csv(&csv).unwrap();
        assert_eq!(pts.len(), c.len());
        assert!((pts[5] - c.vertices[5]).norm() < 1e-12);
    }
}
