//! The two-point function S_E(x,y) = (x−y)·ν(x) / |x−y|², its ε-regularized
//! variant, and the uniform-ball radius read off from its sup norm:
//! 2‖S_E‖_∞ = 1/r_E. The sup is taken by an exhaustive sweep over all ordered
//! vertex pairs of the discrete boundary (all components together, so a pair
//! may straddle a gap between components — that is where necks bind).

use crate::contour::Contour;
use crate::vec2::Vec2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TwoPointError {
    #[error("two-point function undefined for coincident points")]
    CoincidentPoints,
    #[error("two-point sweep needs at least {needed} vertices (got {got})")]
    TooFewVertices { needed: usize, got: usize },
}

/// S_E(x, y) with ν = ν_E(x). Errors on coincident points.
pub fn s_value(x: Vec2, nu_x: Vec2, y: Vec2) -> Result<f64, TwoPointError> {
    let diff = x - y;
    let dist_sq = diff.norm_sq();
    if dist_sq == 0.0 {
        return Err(TwoPointError::CoincidentPoints);
    }
    Ok(diff.dot(nu_x) / dist_sq)
}

/// Regularized S_{E,ε}(x, y) = (x−y)·ν(x) / (|x−y|² + ε); coincident points
/// are allowed (value 0 for ε > 0).
pub fn s_eps_value(x: Vec2, nu_x: Vec2, y: Vec2, eps: f64) -> f64 {
    let diff = x - y;
    let denom = diff.norm_sq() + eps;
    if denom == 0.0 {
        return 0.0;
    }
    diff.dot(nu_x) / denom
}

/// Sup-norm report of the two-point function over a discrete boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPointReport {
    /// ‖S_E‖_∞ over ordered vertex pairs.
    pub s_norm: f64,
    /// Flattened vertex indices (i, j) attaining the max.
    pub argmax_pair: (usize, usize),
    /// Sign of S at the argmax.
    pub s_sign: f64,
    /// 1 / (2 ‖S_E‖_∞), the discrete uniform-ball radius.
    pub ubc_radius: f64,
    /// max over pairs of |ν(x) − ν(y)| / |x − y|.
    pub normal_lip: f64,
    /// Pairs within 0.1% of the max; large counts witness the degenerate
    /// (constant-S, i.e. circular) case.
    pub near_max_pairs: usize,
    /// Geometry cached at the argmax pair.
    pub x: Vec2,
    pub nu_x: Vec2,
    pub kappa_x: f64,
    pub y: Vec2,
    pub nu_y: Vec2,
}

struct FlatBoundary {
    vertices: Vec<Vec2>,
    normals: Vec<Vec2>,
    kappa: Vec<f64>,
}

fn flatten(contours: &[Contour]) -> FlatBoundary {
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut kappa = Vec::new();
    for c in contours {
        vertices.extend_from_slice(&c.vertices);
        normals.extend_from_slice(&c.normals);
        kappa.extend_from_slice(&c.kappa);
    }
    FlatBoundary {
        vertices,
        normals,
        kappa,
    }
}

const MIN_SWEEP_VERTICES: usize = 32;

/// Exhaustive O(V²) sweep of |S_E| and the normal Lipschitz quotient over all
/// ordered vertex pairs, parallel over the first index. Adjacent pairs are
/// included: their S approximates κ/2, consistently with |κ| ≤ 2‖S_E‖.
pub fn two_point_report(contours: &[Contour]) -> Result<TwoPointReport, TwoPointError> {
    let flat = flatten(contours);
    let n = flat.vertices.len();
    if n < MIN_SWEEP_VERTICES {
        return Err(TwoPointError::TooFewVertices {
            needed: MIN_SWEEP_VERTICES,
            got: n,
        });
    }

    struct RowBest {
        abs_s: f64,
        signed_s: f64,
        j: usize,
        lip: f64,
    }

    let row_sweep = |i: usize| -> RowBest {
        let x = flat.vertices[i];
        let nu = flat.normals[i];
        let mut best = RowBest {
            abs_s: -1.0,
            signed_s: 0.0,
            j: usize::MAX,
            lip: 0.0,
        };
        for j in 0..n {
            if j == i {
                continue;
            }
            let diff = x - flat.vertices[j];
            let dist_sq = diff.norm_sq();
            if dist_sq == 0.0 {
                continue;
            }
            let s = diff.dot(nu) / dist_sq;
            if s.abs() > best.abs_s {
                best.abs_s = s.abs();
                best.signed_s = s;
                best.j = j;
            }
            let dn = (nu - flat.normals[j]).norm_sq();
            best.lip = best.lip.max(dn / dist_sq);
        }
        best
    };

    let rows: Vec<RowBest> = (0..n).into_par_iter().map(row_sweep).collect();

    let mut s_norm = -1.0;
    let mut argmax = (0usize, 0usize);
    let mut signed = 0.0;
    let mut lip_sq: f64 = 0.0;
    for (i, row) in rows.iter().enumerate() {
        if row.abs_s > s_norm {
            s_norm = row.abs_s;
            signed = row.signed_s;
            argmax = (i, row.j);
        }
        lip_sq = lip_sq.max(row.lip);
    }
    let near_max_pairs = rows
        .iter()
        .filter(|row| row.abs_s >= 0.999 * s_norm)
        .count();

    Ok(TwoPointReport {
        s_norm,
        argmax_pair: argmax,
        s_sign: signed.signum(),
        ubc_radius: 1.0 / (2.0 * s_norm),
        normal_lip: lip_sq.sqrt(),
        near_max_pairs,
        x: flat.vertices[argmax.0],
        nu_x: flat.normals[argmax.0],
        kappa_x: flat.kappa[argmax.0],
        y: flat.vertices[argmax.1],
        nu_y: flat.normals[argmax.1],
    })
}

/// max over ordered vertex pairs of |S_{E,ε}| (coincident pairs contribute 0).
pub fn two_point_eps_norm(contours: &[Contour], eps: f64) -> f64 {
    let flat = flatten(contours);
    let n = flat.vertices.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best: f64 = 0.0;
            for j in 0..n {
                best = best.max(
                    s_eps_value(flat.vertices[i], flat.normals[i], flat.vertices[j], eps).abs(),
                );
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// Residuals of the critical-pair identity B_E(x)(x−y) = 2 S P_{∂E}(x)(x−y)
/// at the argmax pair. In 2D the identity factors: either the pair is
/// normal-aligned (tangential component ≈ 0) or κ(x) = 2 S.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPairResiduals {
    /// |τ(x)·(x−y)| / |x−y| — alignment of the pair with the normal at x.
    pub tangential: f64,
    /// |κ(x) − 2 S| — curvature form of the first critical identity.
    pub curvature: f64,
    /// |τ(y)·ν(x) − 2 S τ(y)·(x−y)| — the reduced second identity.
    pub reduced: f64,
    /// S is constant over the boundary (circle); residuals defined as 0.
    pub degenerate: bool,
}

pub fn critical_pair_check(contours: &[Contour], report: &TwoPointReport) -> CriticalPairResiduals {
    // a constant-S boundary makes every pair a maximizer and the argmax
    // arbitrary; the disk is the unique shape attaining the isoperimetric
    // lower bound of ‖S‖, so near-attainment witnesses the degeneracy
    if report.s_norm <= 1.01 * isoperimetric_s_lower_bound(contours) {
        return CriticalPairResiduals {
            tangential: 0.0,
            curvature: 0.0,
            reduced: 0.0,
            degenerate: true,
        };
    }
    let diff = report.x - report.y;
    let dist = diff.norm();
    let tau_x = Vec2::new(-report.nu_x.y, report.nu_x.x);
    let tau_y = Vec2::new(-report.nu_y.y, report.nu_y.x);
    let s_signed = report.s_sign * report.s_norm;
    CriticalPairResiduals {
        tangential: (tau_x.dot(diff) / dist).abs(),
        curvature: (report.kappa_x - 2.0 * s_signed).abs(),
        reduced: (tau_y.dot(report.nu_x) - 2.0 * s_signed * tau_y.dot(diff)).abs(),
        degenerate: false,
    }
}

/// Isoperimetric lower bound ‖S_E‖ ≥ 1/(2 √(area/π)), sharp for the disk.
pub fn isoperimetric_s_lower_bound(contours: &[Contour]) -> f64 {
    let area: f64 = contours.iter().map(|c| c.signed_area()).sum();
    1.0 / (2.0 * (area.abs() / PI).sqrt())
}
