//! One minimizing-movements step: minimize P(F) + (1/h)∫_F d_E over sets F,
//! with the volume penalty (1/√h)||F| − m₀| handled by exact convex duality.
//!
//! The set problem is relaxed to u ∈ [0,1] with discrete energy
//!
//!   E(u) = Σ |∇⁺u| dx² + Σ u f dx²,     f = d/h − λ,
//!
//! solved by a first-order primal–dual iteration (dual field |p| ≤ 1,
//! στ‖∇‖² ≤ 1). The piecewise-linear volume penalty is equivalent to
//! minimizing over λ ∈ [−1/√h, 1/√h]; λ is located by bisection on the
//! thresholded volume, which is nondecreasing in λ. If the target volume is
//! unreachable even at an endpoint, the multiplier saturates: |λ| = 1/√h.

use crate::grid::{field_volume, GridError, GridSpec, IndicatorField, ScalarField};
use crate::sdf::{PolylineIndex, SignedDistanceField};
use crate::contour::Contour;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StepError {
    #[error("primal-dual iteration did not converge: relative gap {gap} after {iters} iterations (h too small for the grid?)")]
    Nonconvergence { gap: f64, iters: u32 },
    #[error("bad step config: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Discrete total-variation used by the relaxed energy. The isotropic form is
/// the main path; the anisotropic form matches the min-cut oracle exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TvKind {
    Isotropic,
    Anisotropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    /// Time step (time units).
    pub h: f64,
    /// Target volume m₀.
    pub m0: f64,
    /// Relative primal–dual gap tolerance.
    pub pd_tol: f64,
    /// Iteration cap per inner solve.
    pub pd_max_iter: u32,
    /// Absolute volume tolerance for the bisection.
    pub vol_tol: f64,
    /// Threshold level s.
    pub threshold_level: f64,
}

impl StepConfig {
    pub fn defaults(h: f64, m0: f64, grid: GridSpec) -> Self {
        let dx2 = grid.cell_area();
        StepConfig {
            h,
            m0,
            pd_tol: 1e-6,
            pd_max_iter: 20_000,
            vol_tol: 4.0 * dx2,
            threshold_level: 0.5,
        }
    }

    pub fn validate(&self, grid: GridSpec) -> Result<(), StepError> {
        let dx = grid.dx();
        if !(self.h > 0.0) {
            return Err(StepError::Config("h must be > 0".into()));
        }
        if self.h < dx * dx / 4.0 {
            return Err(StepError::Config(format!(
                "h = {} below the parabolic resolution floor dx²/4 = {}",
                self.h,
                dx * dx / 4.0
            )));
        }
        if !(self.m0 > 0.0) {
            return Err(StepError::Config("m0 must be > 0".into()));
        }
        if !(self.pd_tol > 0.0 && self.pd_tol <= 1e-3) {
            return Err(StepError::Config("pd_tol must lie in (0, 1e-3]".into()));
        }
        if self.vol_tol < grid.cell_area() {
            return Err(StepError::Config("vol_tol must be >= dx²".into()));
        }
        if !(0.0 < self.threshold_level && self.threshold_level < 1.0) {
            return Err(StepError::Config("threshold level must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Primal and dual iterates, carried across solves as a warm start.
#[derive(Debug, Clone)]
pub struct PdState {
    pub u: Vec<f64>,
    pub px: Vec<f64>,
    pub py: Vec<f64>,
}

impl PdState {
    pub fn cold(grid: GridSpec) -> Self {
        PdState {
            u: vec![0.0; grid.len()],
            px: vec![0.0; grid.len()],
            py: vec![0.0; grid.len()],
        }
    }

    pub fn from_indicator(u: &IndicatorField) -> Self {
        PdState {
            u: u.values.clone(),
            px: vec![0.0; u.values.len()],
            py: vec![0.0; u.values.len()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iters: u32,
    pub gap: f64,
    pub converged: bool,
}

const GAP_CHECK_EVERY: u32 = 16;

/// Minimize Σ|∇⁺u| dx² + Σ u f dx² over u ∈ [0,1] (isotropic TV).
pub fn solve_relaxed(
    f: &ScalarField,
    pd_tol: f64,
    pd_max_iter: u32,
) -> Result<IndicatorField, StepError> {
    let (u, _, _) = solve_relaxed_with(f, TvKind::Isotropic, pd_tol, pd_max_iter, None)?;
    Ok(u)
}

/// Full-control variant: TV kind selection and warm starting.
pub fn solve_relaxed_with(
    f: &ScalarField,
    kind: TvKind,
    pd_tol: f64,
    pd_max_iter: u32,
    warm: Option<PdState>,
) -> Result<(IndicatorField, PdState, SolveStats), StepError> {
    let grid = f.grid;
    let (nx, ny) = (grid.nx, grid.ny);
    let n = grid.len();
    let dx = grid.dx();
    let cell = grid.cell_area();

    // Cells with |f| dx² above the largest possible TV change (4 dx) are
    // pinned to 0/1 no matter their neighbors, so clamping f at ±8/dx leaves
    // the minimizer set unchanged while bounding the energy scale.
    let clamp_mag = 8.0 / dx;
    let f_eff: Vec<f64> = f.values.iter().map(|&v| v.clamp(-clamp_mag, clamp_mag)).collect();

    let mut state = warm.unwrap_or_else(|| PdState::cold(grid));
    debug_assert_eq!(state.u.len(), n);
    let mut ubar = state.u.clone();
    let mut u_prev = vec![0.0; n];

    // στ ‖∇‖² = 1 with ‖∇‖² ≤ 8/dx²
    let sigma = dx / (8.0f64).sqrt();
    let tau = dx / (8.0f64).sqrt();

    let gap_of = |u: &[f64], px: &[f64], py: &[f64]| -> (f64, f64) {
        let mut primal = 0.0;
        let mut dual = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let gx = if i + 1 < nx { (u[k + 1] - u[k]) / dx } else { 0.0 };
                let gy = if j + 1 < ny { (u[k + nx] - u[k]) / dx } else { 0.0 };
                let tv = match kind {
                    TvKind::Isotropic => (gx * gx + gy * gy).sqrt(),
                    TvKind::Anisotropic => gx.abs() + gy.abs(),
                };
                primal += (tv + f_eff[k] * u[k]) * cell;
                let div = (if i + 1 < nx { px[k] } else { 0.0 }
                    - if i > 0 { px[k - 1] } else { 0.0 })
                    / dx
                    + (if j + 1 < ny { py[k] } else { 0.0 }
                        - if j > 0 { py[k - nx] } else { 0.0 })
                        / dx;
                dual += cell * (f_eff[k] - div).min(0.0);
            }
        }
        let gap = primal - dual;
        let scale = primal.abs().max(dual.abs()).max(1.0);
        (gap / scale, gap)
    };

    let mut iters = 0u32;
    let (mut rel_gap, _) = gap_of(&state.u, &state.px, &state.py);
    while rel_gap > pd_tol && iters < pd_max_iter {
        for _ in 0..GAP_CHECK_EVERY {
            // dual ascent with pointwise projection
            state
                .px
                .par_chunks_mut(nx)
                .zip(state.py.par_chunks_mut(nx))
                .enumerate()
                .for_each(|(j, (px_row, py_row))| {
                    let base = j * nx;
                    for i in 0..nx {
                        let k = base + i;
                        let gx = if i + 1 < nx { (ubar[k + 1] - ubar[k]) / dx } else { 0.0 };
                        let gy = if j + 1 < ny { (ubar[k + nx] - ubar[k]) / dx } else { 0.0 };
                        let mut px = px_row[i] + sigma * gx;
                        let mut py = py_row[i] + sigma * gy;
                        match kind {
                            TvKind::Isotropic => {
                                let norm = (px * px + py * py).sqrt();
                                if norm > 1.0 {
                                    px /= norm;
                                    py /= norm;
                                }
                            }
                            TvKind::Anisotropic => {
                                px = px.clamp(-1.0, 1.0);
                                py = py.clamp(-1.0, 1.0);
                            }
                        }
                        px_row[i] = px;
                        py_row[i] = py;
                    }
                });
            // primal descent with box projection, then extrapolation
            std::mem::swap(&mut u_prev, &mut state.u);
            let px = &state.px;
            let py = &state.py;
            let u_old = &u_prev;
            let f_ref = &f_eff;
            state
                .u
                .par_chunks_mut(nx)
                .enumerate()
                .for_each(|(j, u_row)| {
                    let base = j * nx;
                    for i in 0..nx {
                        let k = base + i;
                        let div = (if i + 1 < nx { px[k] } else { 0.0 }
                            - if i > 0 { px[k - 1] } else { 0.0 })
                            / dx
                            + (if j + 1 < ny { py[k] } else { 0.0 }
                                - if j > 0 { py[k - nx] } else { 0.0 })
                                / dx;
                        u_row[i] = (u_old[k] + tau * (div - f_ref[k])).clamp(0.0, 1.0);
                    }
                });
            let u_new = &state.u;
            ubar.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
                let base = j * nx;
                for i in 0..nx {
                    row[i] = 2.0 * u_new[base + i] - u_old[base + i];
                }
            });
            iters += 1;
            if iters >= pd_max_iter {
                break;
            }
        }
        rel_gap = gap_of(&state.u, &state.px, &state.py).0;
    }

    let converged = rel_gap <= pd_tol;
    if !converged && rel_gap > 10.0 * pd_tol {
        return Err(StepError::Nonconvergence {
            gap: rel_gap,
            iters,
        });
    }
    let field = IndicatorField::new(grid, state.u.clone())?;
    Ok((
        field,
        state,
        SolveStats {
            iters,
            gap: rel_gap,
            converged,
        },
    ))
}

/// Coarea selection: binary field 1 where u > s.
pub fn threshold(u: &IndicatorField, s: f64) -> IndicatorField {
    let values: Vec<f64> = u.values.iter().map(|&v| if v > s { 1.0 } else { 0.0 }).collect();
    IndicatorField {
        grid: u.grid,
        values,
    }
}

/// Result of one volume-constrained minimizing-movements step.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Relaxed minimizer at the accepted λ.
    pub u: IndicatorField,
    /// Thresholded set.
    pub binary: IndicatorField,
    pub lambda: f64,
    /// λ saturated at ±1/√h with the volume still unmatched.
    pub lambda_clamped: bool,
    /// Discrete F_h of the thresholded set against the previous set.
    pub energy: f64,
    /// Volume of the thresholded set.
    pub volume: f64,
    /// Inner iterations summed over all λ probes.
    pub pd_iters: u32,
    /// Relative gap of the accepted solve.
    pub pd_residual: f64,
    /// (λ, thresholded volume) for every probe, in probe order.
    pub bisection_log: Vec<(f64, f64)>,
    /// Energies of the s = 0.3 / 0.5 / 0.7 superlevel sets (s-robustness).
    pub threshold_energies: [f64; 3],
    /// Warm-start state for the next step.
    pub warm: PdState,
}

/// Isotropic discrete energy of a binary field against a linear term.
pub fn isotropic_energy(u: &[f64], f: &ScalarField) -> f64 {
    let grid = f.grid;
    let dx = grid.dx();
    let cell = grid.cell_area();
    let mut energy = 0.0;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.idx(i, j);
            let gx = if i + 1 < grid.nx { (u[grid.idx(i + 1, j)] - u[k]) / dx } else { 0.0 };
            let gy = if j + 1 < grid.ny { (u[grid.idx(i, j + 1)] - u[k]) / dx } else { 0.0 };
            energy += ((gx * gx + gy * gy).sqrt() + f.values[k] * u[k]) * cell;
        }
    }
    energy
}

/// Bisection on λ ∈ [−1/√h, 1/√h] of f = d/h − λ until the thresholded
/// volume matches m₀ within vol_tol. `lambda_guess` (e.g. last step's λ) and
/// `warm` only accelerate; V(λ) is nondecreasing so an exponential bracket
/// hunt around the guess followed by plain bisection locates the same root.
pub fn volume_bisection(
    sdf_prev: &SignedDistanceField,
    cfg: &StepConfig,
    lambda_guess: f64,
    warm: Option<PdState>,
) -> Result<StepResult, StepError> {
    let grid = sdf_prev.grid;
    cfg.validate(grid)?;
    let lambda_max = 1.0 / cfg.h.sqrt();
    let base_f: Vec<f64> = sdf_prev.d.iter().map(|&d| d / cfg.h).collect();

    struct Probe {
        lambda: f64,
        volume: f64,
        u: IndicatorField,
        binary: IndicatorField,
        stats: SolveStats,
    }

    struct Evaluator<'a> {
        grid: GridSpec,
        base_f: &'a [f64],
        cfg: &'a StepConfig,
        log: Vec<(f64, f64)>,
        total_iters: u32,
        carry: Option<PdState>,
    }

    impl Evaluator<'_> {
        fn eval(&mut self, lambda: f64) -> Result<Probe, StepError> {
            let f = ScalarField {
                grid: self.grid,
                values: self.base_f.iter().map(|&v| v - lambda).collect(),
            };
            let (u, state, stats) = solve_relaxed_with(
                &f,
                TvKind::Isotropic,
                self.cfg.pd_tol,
                self.cfg.pd_max_iter,
                self.carry.take(),
            )?;
            self.carry = Some(state);
            let binary = threshold(&u, self.cfg.threshold_level);
            let volume = field_volume(&binary);
            self.total_iters += stats.iters;
            self.log.push((lambda, volume));
            Ok(Probe {
                lambda,
                volume,
                u,
                binary,
                stats,
            })
        }
    }

    let mut ev = Evaluator {
        grid,
        base_f: &base_f,
        cfg,
        log: Vec::new(),
        total_iters: 0,
        carry: warm,
    };

    let guess = lambda_guess.clamp(-lambda_max, lambda_max);
    let mut best = ev.eval(guess)?;
    let mut lo = -lambda_max;
    let mut hi = lambda_max;
    let mut clamped = false;

    if (best.volume - cfg.m0).abs() > cfg.vol_tol {
        // exponential bracket hunt around the guess
        let need_larger = best.volume < cfg.m0;
        if need_larger {
            lo = best.lambda;
        } else {
            hi = best.lambda;
        }
        let mut delta = 0.25;
        loop {
            let next = if need_larger {
                (lo + delta).min(lambda_max)
            } else {
                (hi - delta).max(-lambda_max)
            };
            let probe = ev.eval(next)?;
            let done = (probe.volume - cfg.m0).abs() <= cfg.vol_tol;
            let straddles = (probe.volume < cfg.m0) != need_larger;
            if (probe.volume - cfg.m0).abs() < (best.volume - cfg.m0).abs() {
                best = probe;
            } else if done || straddles {
                best = probe;
            }
            if done {
                break;
            }
            if straddles {
                if need_larger {
                    hi = next;
                } else {
                    lo = next;
                }
                break;
            }
            if need_larger {
                lo = next;
                if next >= lambda_max {
                    clamped = true;
                    break;
                }
            } else {
                hi = next;
                if next <= -lambda_max {
                    clamped = true;
                    break;
                }
            }
            delta *= 2.0;
        }

        // plain bisection inside the bracket
        if !clamped && (best.volume - cfg.m0).abs() > cfg.vol_tol {
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                let probe = ev.eval(mid)?;
                let err = (probe.volume - cfg.m0).abs();
                if err < (best.volume - cfg.m0).abs() {
                    best = probe;
                    if err <= cfg.vol_tol {
                        break;
                    }
                    if best.volume < cfg.m0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                } else {
                    if probe.volume < cfg.m0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            }
        }
    }

    // the accepted iterate must come from the accepted λ: re-solve if the
    // last inner solve was for a different probe
    if ev.log.last().map(|&(l, _)| l) != Some(best.lambda) {
        best = ev.eval(best.lambda)?;
    }
    let lambda_clamped = clamped
        || (best.lambda.abs() >= lambda_max && (best.volume - cfg.m0).abs() > cfg.vol_tol);
    let lambda = if lambda_clamped {
        if best.volume < cfg.m0 {
            lambda_max
        } else {
            -lambda_max
        }
    } else {
        best.lambda
    };
    // paper dichotomy: a clamped multiplier sits exactly at ±1/√h
    let best = if lambda_clamped && best.lambda != lambda {
        ev.eval(lambda)?
    } else {
        best
    };

    let f_full = ScalarField {
        grid,
        values: base_f.clone(),
    };
    let energy_at = |s: f64| -> f64 {
        let b = threshold(&best.u, s);
        isotropic_energy(&b.values, &f_full)
            + (field_volume(&b) - cfg.m0).abs() / cfg.h.sqrt()
    };
    let threshold_energies = [energy_at(0.3), energy_at(cfg.threshold_level), energy_at(0.7)];
    let energy = isotropic_energy(&best.binary.values, &f_full)
        + (best.volume - cfg.m0).abs() / cfg.h.sqrt();

    Ok(StepResult {
        lambda,
        lambda_clamped,
        energy,
        volume: best.volume,
        pd_iters: ev.total_iters,
        pd_residual: best.stats.gap,
        bisection_log: ev.log,
        threshold_energies,
        warm: ev.carry.expect("at least one solve ran"),
        u: best.u,
        binary: best.binary,
    })
}

/// Per-vertex residual of d_prev/h + κ − λ on the new contour, with L² and
/// L^∞ norms (the discrete Euler–Lagrange balance).
pub fn euler_lagrange_residual(
    contour_new: &Contour,
    prev_index: &PolylineIndex,
    prev_contours: &[Contour],
    lambda: f64,
    h: f64,
) -> (f64, f64) {
    let mut l2_sq = 0.0;
    let mut linf: f64 = 0.0;
    for i in 0..contour_new.len() {
        let x = contour_new.vertices[i];
        let near = prev_index.nearest(x);
        let outward = prev_contours[near.component].normal_at(near.segment, near.t);
        let d_signed = if (x - near.point).dot(outward) >= 0.0 {
            near.distance
        } else {
            -near.distance
        };
        let r = d_signed / h + contour_new.kappa[i] - lambda;
        l2_sq += r * r * contour_new.ds[i];
        linf = linf.max(r.abs());
    }
    (l2_sq.sqrt(), linf)
}
