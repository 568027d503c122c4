//! Flow engine: iterate the minimizing-movements scheme, assemble the trace,
//! and run the quantitative verification checks over it.
//!
//! Each step takes the previous thresholded set and its contour, builds the
//! exact signed distance field, locates the volume multiplier by bisection,
//! thresholds the relaxed minimizer, extracts the new contour, and records
//! diagnostics (two-point report, curvature norms, Euler–Lagrange and
//! normal-transport residuals). The run terminates early, flagged singular,
//! when the uniform-ball radius falls below the 3·dx resolution floor or a
//! contour vanishes.

use crate::contour::{
    curvature_norms_multi, extract_contours_with_stats, polygonize, Contour, ContourError,
    CurvatureNorms, Smoothing,
};
use crate::grid::{field_volume, rasterize, GridError, GridSpec, ShapeSpec};
use crate::oracles::rolling_ball;
use crate::sdf::{signed_distance_with_index, PolylineIndex, SdfError};
use crate::step::{euler_lagrange_residual, isotropic_energy, threshold, StepConfig, StepError};
use crate::two_point::{two_point_report, TwoPointReport};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("bad flow config: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Contour(#[from] ContourError),
    #[error(transparent)]
    Sdf(#[from] SdfError),
}

/// Known verification check names for `FlowConfig::checks`.
pub const CHECK_NAMES: [&str; 7] = [
    "perimeter",
    "distance-bound",
    "s-iteration",
    "smoothing",
    "maaginen",
    "consistency",
    "ubc-cross",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    /// x_min, x_max, y_min, y_max
    pub bounds: [f64; 4],
}

impl GridConfig {
    pub fn to_spec(self) -> Result<GridSpec, GridError> {
        GridSpec::new(
            self.nx,
            self.ny,
            self.bounds[0],
            self.bounds[1],
            self.bounds[2],
            self.bounds[3],
        )
    }

    pub fn square(n: usize, half: f64) -> Self {
        GridConfig {
            nx: n,
            ny: n,
            bounds: [-half, half, -half, half],
        }
    }
}

/// Inner-solver tuning; `vol_tol = 0` resolves to 4·dx² at run time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTuning {
    #[serde(default = "default_pd_tol")]
    pub pd_tol: f64,
    #[serde(default = "default_pd_max_iter")]
    pub pd_max_iter: u32,
    #[serde(default)]
    pub vol_tol: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_pd_tol() -> f64 {
    1e-6
}
fn default_pd_max_iter() -> u32 {
    20_000
}
fn default_threshold() -> f64 {
    0.5
}

impl Default for StepTuning {
    fn default() -> Self {
        StepTuning {
            pd_tol: default_pd_tol(),
            pd_max_iter: default_pd_max_iter(),
            vol_tol: 0.0,
            threshold: default_threshold(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExportConfig {
    /// Write every `svg_stride`-th frame; 0 disables frames.
    #[serde(default = "default_svg_stride")]
    pub svg_stride: usize,
    #[serde(default = "default_csv")]
    pub csv: bool,
}

fn default_svg_stride() -> usize {
    10
}
fn default_csv() -> bool {
    true
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig {
            svg_stride: default_svg_stride(),
            csv: default_csv(),
        }
    }
}

/// Fully deterministic description of one flow run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub shape: ShapeSpec,
    pub grid: GridConfig,
    pub h: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default)]
    pub step: StepTuning,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub export: ExportConfig,
}

impl FlowConfig {
    pub fn validate(&self) -> Result<GridSpec, FlowError> {
        let grid = self.grid.to_spec()?;
        self.shape.validate().map_err(FlowError::Config)?;
        if self.t_final < self.h {
            return Err(FlowError::Config(format!(
                "T = {} must be at least one step h = {}",
                self.t_final, self.h
            )));
        }
        for name in &self.checks {
            if !CHECK_NAMES.contains(&name.as_str()) {
                return Err(FlowError::Config(format!(
                    "unknown check {name:?} (known: {})",
                    CHECK_NAMES.join(", ")
                )));
            }
        }
        let dx = grid.dx();
        if self.h < dx * dx / 4.0 {
            return Err(FlowError::Config(format!(
                "h = {} below the parabolic resolution floor dx²/4 = {}",
                self.h,
                dx * dx / 4.0
            )));
        }
        Ok(grid)
    }

    fn step_config(&self, m0: f64, grid: GridSpec) -> StepConfig {
        let vol_tol = if self.step.vol_tol > 0.0 {
            self.step.vol_tol
        } else {
            4.0 * grid.cell_area()
        };
        StepConfig {
            h: self.h,
            m0,
            pd_tol: self.step.pd_tol,
            pd_max_iter: self.step.pd_max_iter,
            vol_tol,
            threshold_level: self.step.threshold,
        }
    }
}

/// Per-step record serialized into the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub t: f64,
    pub volume: f64,
    pub vol_error: f64,
    pub perimeter: f64,
    pub lambda: f64,
    pub lambda_clamped: bool,
    pub energy: f64,
    /// F_h(E_prev, E_prev): comparison baseline for minimality.
    pub energy_prev: f64,
    /// max |d_prev| over the new contour.
    pub sup_abs_d: f64,
    pub pd_iters: u32,
    pub pd_residual: f64,
    pub bisection_probes: u32,
    /// Relative energy gap between the s = 0.3 and s = 0.7 superlevel sets.
    pub threshold_spread: f64,
    pub el_residual_l2: f64,
    pub el_residual_linf: f64,
    pub maaginen_l2: f64,
    pub maaginen_linf: f64,
    pub components: u32,
    pub discarded_loops: u32,
    pub two_point: TwoPointReport,
    pub curvature: CurvatureNorms,
    pub rolling_ball: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub contours: Vec<Contour>,
    pub report: StepReport,
}

/// Verdict of one verification check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub constants: BTreeMap<String, f64>,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<(f64, f64)>,
}

impl Verdict {
    pub fn new(pass: bool, detail: String) -> Self {
        Verdict {
            pass,
            constants: BTreeMap::new(),
            detail,
            series: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub config: FlowConfig,
    pub m0: f64,
    /// Uniform-ball radius of the initial contour.
    pub r0_hat: f64,
    pub states: Vec<FlowState>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub singular: bool,
    pub singular_time: Option<f64>,
    /// Solver failure note when the trace is partial.
    pub error: Option<String>,
}

/// Uniform-ball resolution floor: below 3·dx the discrete S_E and the
/// stencil derivatives are meaningless.
const UBC_FLOOR_CELLS: f64 = 3.0;
/// Penetration slack handed to the per-step rolling-ball cross-check.
const ROLLING_SLACK_CELLS: f64 = 0.02;

pub fn run_flow(cfg: &FlowConfig) -> Result<FlowTrace, FlowError> {
    run_flow_with_progress(cfg, |_, _| {})
}

pub fn run_flow_with_progress(
    cfg: &FlowConfig,
    mut progress: impl FnMut(usize, &StepReport),
) -> Result<FlowTrace, FlowError> {
    let grid = cfg.validate()?;
    let dx = grid.dx();

    let u0 = rasterize(&cfg.shape, grid)?;
    let binary0 = threshold(&u0, cfg.step.threshold);
    let m0 = field_volume(&binary0);
    let step_cfg = cfg.step_config(m0, grid);
    step_cfg.validate(grid)?;

    // initial contour: analytic boundary of the shape at ≈ dx spacing
    let rough = polygonize(&cfg.shape, 512)?;
    let perimeter0: f64 = rough.iter().map(|c| c.length()).sum();
    let n0 = ((perimeter0 / dx / rough.len() as f64).round() as usize).max(64);
    let contours0 = polygonize(&cfg.shape, n0)?;

    let want = |name: &str| cfg.checks.iter().any(|c| c == name);
    let rolling_slack = ROLLING_SLACK_CELLS * dx;

    let mut trace = FlowTrace {
        config: cfg.clone(),
        m0,
        r0_hat: 0.0,
        states: Vec::new(),
        verdicts: BTreeMap::new(),
        singular: false,
        singular_time: None,
        error: None,
    };

    let report0 = {
        let tp = two_point_report(&contours0).map_err(|e| FlowError::Config(e.to_string()))?;
        let ball = want("ubc-cross").then(|| rolling_ball(&contours0, rolling_slack));
        StepReport {
            t: 0.0,
            volume: m0,
            vol_error: 0.0,
            perimeter: contours0.iter().map(|c| c.length()).sum(),
            lambda: 0.0,
            lambda_clamped: false,
            energy: 0.0,
            energy_prev: 0.0,
            sup_abs_d: 0.0,
            pd_iters: 0,
            pd_residual: 0.0,
            bisection_probes: 0,
            threshold_spread: 0.0,
            el_residual_l2: 0.0,
            el_residual_linf: 0.0,
            maaginen_l2: 0.0,
            maaginen_linf: 0.0,
            components: contours0.len() as u32,
            discarded_loops: 0,
            two_point: tp,
            curvature: curvature_norms_multi(&contours0),
            rolling_ball: ball,
        }
    };
    trace.r0_hat = report0.two_point.ubc_radius;
    trace.states.push(FlowState {
        t: 0.0,
        contours: contours0,
        report: report0,
    });

    let total_steps = (cfg.t_final / cfg.h).round() as usize;
    let mut binary_prev = binary0;
    let mut lambda_guess = 0.0;
    let mut warm = None;

    for k in 1..=total_steps {
        let t = k as f64 * cfg.h;
        let prev_state = trace.states.last().unwrap();
        let contours_prev = prev_state.contours.clone();
        let ubc_prev = prev_state.report.two_point.ubc_radius;
        let perim_prev = prev_state.report.perimeter;

        let (sdf, prev_index) =
            signed_distance_with_index(&contours_prev, &binary_prev, (k - 1) as u64)?;
        let energy_prev = {
            let f_full = crate::grid::ScalarField {
                grid,
                values: sdf.d.iter().map(|&d| d / cfg.h).collect(),
            };
            isotropic_energy(&binary_prev.values, &f_full)
        };

        let result =
            match crate::step::volume_bisection(&sdf, &step_cfg, lambda_guess, warm.take()) {
                Ok(r) => r,
                Err(e) => {
                    trace.error = Some(format!("step {k}: {e}"));
                    return Ok(trace);
                }
            };

        // spectral cutoff for the new contour from the previous reach
        let max_mode = ((5.0 * perim_prev / (2.0 * PI * ubc_prev)).ceil() as usize).clamp(6, 48);
        let extraction = extract_contours_with_stats(
            &result.u,
            cfg.step.threshold,
            Smoothing::MaxMode(max_mode),
        );
        let (contours_new, discarded) = match extraction {
            Ok(pair) => pair,
            Err(ContourError::NoContour(_)) => {
                trace.singular = true;
                trace.singular_time = Some(t);
                return Ok(trace);
            }
            Err(e) => return Err(e.into()),
        };

        let two_point = match two_point_report(&contours_new) {
            Ok(tp) => tp,
            Err(_) => {
                // boundary shrank below the sweep's resolution: singular stop
                trace.singular = true;
                trace.singular_time = Some(t);
                return Ok(trace);
            }
        };

        let sup_abs_d = contours_new
            .iter()
            .flat_map(|c| c.vertices.iter())
            .map(|&v| prev_index.nearest(v).distance)
            .fold(0.0, f64::max);

        let (mut el_l2_sq, mut el_linf) = (0.0, 0.0f64);
        for c in &contours_new {
            let (l2, linf) =
                euler_lagrange_residual(c, &prev_index, &contours_prev, result.lambda, cfg.h);
            el_l2_sq += l2 * l2;
            el_linf = el_linf.max(linf);
        }

        let (mg_l2, mg_linf) = normal_transport_residual(&contours_new, &contours_prev, &prev_index);

        let ball = want("ubc-cross").then(|| rolling_ball(&contours_new, rolling_slack));

        let threshold_spread = {
            let [e03, _, e07] = result.threshold_energies;
            (e03 - e07).abs() / e03.abs().max(1.0)
        };

        let report = StepReport {
            t,
            volume: result.volume,
            vol_error: (result.volume - m0).abs(),
            perimeter: contours_new.iter().map(|c| c.length()).sum(),
            lambda: result.lambda,
            lambda_clamped: result.lambda_clamped,
            energy: result.energy,
            energy_prev,
            sup_abs_d,
            pd_iters: result.pd_iters,
            pd_residual: result.pd_residual,
            bisection_probes: result.bisection_log.len() as u32,
            threshold_spread,
            el_residual_l2: el_l2_sq.sqrt(),
            el_residual_linf: el_linf,
            maaginen_l2: mg_l2,
            maaginen_linf: mg_linf,
            components: contours_new.len() as u32,
            discarded_loops: discarded as u32,
            two_point,
            curvature: curvature_norms_multi(&contours_new),
            rolling_ball: ball,
        };
        progress(k, &report);

        let ubc_now = report.two_point.ubc_radius;
        trace.states.push(FlowState {
            t,
            contours: contours_new,
            report,
        });

        if ubc_now < UBC_FLOOR_CELLS * dx {
            trace.singular = true;
            trace.singular_time = Some(t);
            break;
        }

        binary_prev = result.binary;
        lambda_guess = result.lambda;
        warm = Some(result.warm);
    }

    for name in cfg.checks.clone() {
        let verdict = run_check(&name, &trace);
        trace.verdicts.insert(name, verdict);
    }
    Ok(trace)
}

/// Residual of ν_prev∘π = ∇_τ d_prev + √(1 − |∇_τ d_prev|²) ν_new on the new
/// contour (ds-weighted L² and L^∞ over vertices).
pub fn normal_transport_residual(
    contours_new: &[Contour],
    contours_prev: &[Contour],
    prev_index: &PolylineIndex,
) -> (f64, f64) {
    let mut l2_sq = 0.0;
    let mut linf = 0.0f64;
    for c in contours_new {
        let n = c.len();
        // signed distance of each new vertex to the previous boundary
        let d: Vec<f64> = (0..n)
            .map(|i| {
                let near = prev_index.nearest(c.vertices[i]);
                let outward = contours_prev[near.component].normal_at(near.segment, near.t);
                if (c.vertices[i] - near.point).dot(outward) >= 0.0 {
                    near.distance
                } else {
                    -near.distance
                }
            })
            .collect();
        for i in 0..n {
            let x = c.vertices[i];
            let near = prev_index.nearest(x);
            let nu_prev = contours_prev[near.component].normal_at(near.segment, near.t);
            // tangential derivative of d_prev along the new contour
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            let span = (c.vertices[ip] - x).norm() + (x - c.vertices[im]).norm();
            let dd = (d[ip] - d[im]) / span;
            let tau = Vec2::new(-c.normals[i].y, c.normals[i].x);
            let grad_tau = tau * dd;
            let cos_part = (1.0 - grad_tau.norm_sq()).max(0.0).sqrt();
            let residual = (nu_prev - (grad_tau + c.normals[i] * cos_part)).norm();
            l2_sq += residual * residual * c.ds[i];
            linf = linf.max(residual);
        }
    }
    (l2_sq.sqrt(), linf)
}

fn run_check(name: &str, trace: &FlowTrace) -> Verdict {
    match name {
        "perimeter" => check_perimeter(trace),
        "distance-bound" => check_distance_bound(trace),
        "s-iteration" => check_s_iteration(trace),
        "smoothing" => check_smoothing(trace),
        "maaginen" => check_maaginen(trace),
        "consistency" => check_consistency(trace),
        "ubc-cross" => check_ubc_cross(trace),
        _ => Verdict::new(false, format!("unknown check {name}")),
    }
}

/// P(E_{k+1}) ≤ P(E_k) + 4dx for every step.
pub fn check_perimeter(trace: &FlowTrace) -> Verdict {
    let dx = trace
        .config
        .grid
        .to_spec()
        .map(|g| g.dx())
        .unwrap_or(f64::NAN);
    let mut worst = f64::NEG_INFINITY;
    let mut series = Vec::new();
    for w in trace.states.windows(2) {
        let growth = w[1].report.perimeter - w[0].report.perimeter;
        worst = worst.max(growth);
        series.push((w[1].t, w[1].report.perimeter));
    }
    let pass = worst <= 4.0 * dx;
    let mut v = Verdict::new(
        pass,
        format!("max perimeter growth {worst:.3e} vs slack {:.3e}", 4.0 * dx),
    );
    v.constants.insert("max_growth".into(), worst);
    v.constants.insert("slack".into(), 4.0 * dx);
    v.series = series;
    v
}

/// sup|d_prev| over each new contour: the coarse bound 2√h must always hold;
/// the linear-in-h constant C = max_k D_k r̂_{k−1} / h is reported.
pub fn check_distance_bound(trace: &FlowTrace) -> Verdict {
    let h = trace.config.h;
    let mut coarse_ok = true;
    let mut c_fit = 0.0f64;
    let mut d_max = 0.0f64;
    let mut series = Vec::new();
    for w in trace.states.windows(2) {
        let d_k = w[1].report.sup_abs_d;
        let r_prev = w[0].report.two_point.ubc_radius;
        coarse_ok &= d_k <= 2.0 * h.sqrt();
        c_fit = c_fit.max(d_k * r_prev / h);
        d_max = d_max.max(d_k);
        series.push((w[1].t, d_k));
    }
    let mut v = Verdict::new(
        coarse_ok,
        format!(
            "sup|d| max {d_max:.3e}, coarse cap {:.3e}, fitted C {c_fit:.3}",
            2.0 * h.sqrt()
        ),
    );
    v.constants.insert("C_fit".into(), c_fit);
    v.constants.insert("sup_d_max".into(), d_max);
    v.constants.insert("coarse_cap".into(), 2.0 * h.sqrt());
    v.series = series;
    v
}

/// Ĉ = max_k (s_{k+1} − s_k)₊ / (h s_k³), the discrete cubic iteration
/// constant, plus the window condition r̂_k ≥ r̂₀/2 for t ≤ T̂₀ = r̂₀²/(2Ĉ).
pub fn check_s_iteration(trace: &FlowTrace) -> Verdict {
    let h = trace.config.h;
    let r0 = trace.r0_hat;
    let mut c_hat = 0.0f64;
    let mut series = Vec::new();
    for w in trace.states.windows(2) {
        let s0 = w[0].report.two_point.s_norm;
        let s1 = w[1].report.two_point.s_norm;
        let inc = (s1 - s0).max(0.0);
        c_hat = c_hat.max(inc / (h * s0 * s0 * s0));
        series.push((w[1].t, s1));
    }
    let t0_hat = if c_hat > 0.0 {
        r0 * r0 / (2.0 * c_hat)
    } else {
        f64::MAX
    };
    let mut window_ok = true;
    for state in &trace.states {
        if state.t <= t0_hat && state.report.two_point.ubc_radius < r0 / 2.0 {
            window_ok = false;
        }
    }
    let mut v = Verdict::new(
        window_ok && c_hat.is_finite(),
        format!("Ĉ = {c_hat:.3}, T̂₀ = {t0_hat:.3e}, UBC ≥ r̂₀/2 within window: {window_ok}"),
    );
    v.constants.insert("C_hat".into(), c_hat);
    v.constants.insert("T0_hat".into(), t0_hat.min(1e300));
    v.constants.insert("r0_hat".into(), r0);
    v.series = series;
    v
}

/// a₁(t) = t‖∇_τ H‖²_{L²} stays within 3× its median over the UBC window, and
/// ‖H‖²_{L²} stays bounded the same way (no blow-up).
pub fn check_smoothing(trace: &FlowTrace) -> Verdict {
    let r0 = trace.r0_hat;
    let mut a1 = Vec::new();
    let mut hsq = Vec::new();
    for state in trace.states.iter().skip(1) {
        if state.report.two_point.ubc_radius < r0 / 2.0 {
            break;
        }
        let g = state.report.curvature.l2_grad_h;
        a1.push((state.t, state.t * g * g));
        let h2 = state.report.curvature.l2_h;
        hsq.push(h2 * h2);
    }
    let median = |xs: &[f64]| -> f64 {
        let mut v: Vec<f64> = xs.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if v.is_empty() {
            0.0
        } else {
            v[v.len() / 2]
        }
    };
    let a1_vals: Vec<f64> = a1.iter().map(|&(_, v)| v).collect();
    let (a1_med, a1_sup) = (
        median(&a1_vals),
        a1_vals.iter().cloned().fold(0.0, f64::max),
    );
    let (h_med, h_sup) = (median(&hsq), hsq.iter().cloned().fold(0.0, f64::max));
    let pass = a1_sup <= 3.0 * a1_med + 1e-12 && h_sup <= 3.0 * h_med + 1e-12;
    let mut v = Verdict::new(
        pass,
        format!(
            "sup t‖∇H‖² = {a1_sup:.3e} vs 3×median {:.3e}; sup ‖H‖² = {h_sup:.3e} vs {:.3e}",
            3.0 * a1_med,
            3.0 * h_med
        ),
    );
    v.constants.insert("a1_sup".into(), a1_sup);
    v.constants.insert("a1_median".into(), a1_med);
    v.constants.insert("h2_sup".into(), h_sup);
    v.constants.insert("h2_median".into(), h_med);
    v.series = a1;
    v
}

/// Sanity bound on the per-step normal-transport residual; the refinement
/// halving lives in the verification suite (it needs a companion run).
pub fn check_maaginen(trace: &FlowTrace) -> Verdict {
    let mut max_linf = 0.0f64;
    let mut series = Vec::new();
    for state in trace.states.iter().skip(1) {
        max_linf = max_linf.max(state.report.maaginen_linf);
        series.push((state.t, state.report.maaginen_linf));
    }
    let pass = max_linf <= 0.5;
    let mut v = Verdict::new(pass, format!("max L∞ residual {max_linf:.3e}"));
    v.constants.insert("max_linf".into(), max_linf);
    v.series = series;
    v
}

/// |2 ‖S‖ · rolling_ball − 1| ≤ 0.05 at every step where the oracle ran.
pub fn check_ubc_cross(trace: &FlowTrace) -> Verdict {
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut series = Vec::new();
    for state in &trace.states {
        if let Some(ball) = state.report.rolling_ball {
            let gap = (2.0 * state.report.two_point.s_norm * ball - 1.0).abs();
            worst = worst.max(gap);
            checked += 1;
            series.push((state.t, gap));
        }
    }
    let pass = checked > 0 && worst <= 0.05;
    let mut v = Verdict::new(
        pass,
        format!("max |2‖S‖r_ball − 1| = {worst:.4} over {checked} states"),
    );
    v.constants.insert("max_gap".into(), worst);
    v.series = series;
    v
}

/// Fourier mode-k amplitude of the radial graph of a single star-shaped
/// contour about its centroid.
pub fn radial_mode_amplitude(contour: &Contour, k: u32) -> Result<f64, ContourError> {
    let c = contour.centroid();
    let n = contour.len();
    let mut angles = Vec::with_capacity(n);
    let mut radii = Vec::with_capacity(n);
    for v in &contour.vertices {
        let q = *v - c;
        angles.push(q.y.atan2(q.x));
        radii.push(q.norm());
    }
    let wrap = |mut dt: f64| -> f64 {
        while dt > PI {
            dt -= 2.0 * PI;
        }
        while dt < -PI {
            dt += 2.0 * PI;
        }
        dt
    };
    // star-shapedness: the polar angle must wind monotonically
    let mut winding = 0.0;
    for i in 0..n {
        let dt = wrap(angles[(i + 1) % n] - angles[i]);
        if dt.abs() > PI / 2.0 {
            return Err(ContourError::BadPolyline(
                "contour not star-shaped about its centroid".into(),
            ));
        }
        winding += dt;
    }
    if (winding.abs() - 2.0 * PI).abs() > 0.1 {
        return Err(ContourError::BadPolyline(
            "contour not star-shaped about its centroid".into(),
        ));
    }
    let (mut re, mut im) = (0.0, 0.0);
    for i in 0..n {
        let w = wrap(angles[(i + 1) % n] - angles[(i + n - 1) % n]).abs() / 2.0;
        re += radii[i] * (k as f64 * angles[i]).cos() * w;
        im += radii[i] * (k as f64 * angles[i]).sin() * w;
    }
    Ok((re * re + im * im).sqrt() / PI)
}

/// Exponential decay rate of the mode-k star perturbation against the
/// linearized rate of the flow around the unit disk.
pub fn check_consistency(trace: &FlowTrace) -> Verdict {
    let mode = match trace.config.shape {
        ShapeSpec::FourierStar { k, .. } => k,
        _ => {
            return Verdict::new(
                false,
                "consistency check needs a fourier-star initial shape".into(),
            )
        }
    };
    let expected = match crate::oracles::linearized_rate(mode) {
        Ok(r) => r,
        Err(e) => return Verdict::new(false, e.to_string()),
    };
    // log-amplitude series while the contour stays star-shaped and the
    // amplitude stays above the extraction noise floor
    let mut series = Vec::new();
    for state in &trace.states {
        if state.contours.len() != 1 {
            break;
        }
        match radial_mode_amplitude(&state.contours[0], mode) {
            Ok(amp) if amp > 2e-4 => series.push((state.t, amp.ln())),
            _ => break,
        }
    }
    if series.len() < 4 {
        return Verdict::new(false, "too few usable states for a rate fit".into());
    }
    // least-squares slope of ln a(t)
    let n = series.len() as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for &(t, y) in &series {
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let slope = (n * sty - st * sy) / (n * stt - st * st);
    let rate = -slope;
    let rel = (rate - expected).abs() / expected;
    let pass = rel <= 0.20;
    let mut v = Verdict::new(
        pass,
        format!("fitted rate {rate:.3} vs linearized {expected:.3} (rel {rel:.3})"),
    );
    v.constants.insert("rate_fit".into(), rate);
    v.constants.insert("rate_linearized".into(), expected);
    v.constants.insert("rel_error".into(), rel);
    v.series = series;
    v
}

impl FlowTrace {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// Per-step scalar series with the header
    /// `t,volume,perimeter,lambda,lambda_clamped,s_norm,r_ubc,sup_d,l2_H2,l2_gradH2`.
    pub fn series_csv(&self) -> String {
        let mut out = String::from(
            "t,volume,perimeter,lambda,lambda_clamped,s_norm,r_ubc,sup_d,l2_H2,l2_gradH2\n",
        );
        for state in &self.states {
            let r = &state.report;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.t,
                r.volume,
                r.perimeter,
                r.lambda,
                r.lambda_clamped as u8,
                r.two_point.s_norm,
                r.two_point.ubc_radius,
                r.sup_abs_d,
                r.curvature.l2_h * r.curvature.l2_h,
                r.curvature.l2_grad_h * r.curvature.l2_grad_h,
            ));
        }
        out
    }

    /// One SVG frame: the state's contours over the grid box, with the
    /// initial boundary dashed for reference.
    pub fn frame_svg(&self, state_index: usize) -> String {
        let b = self.config.grid.bounds;
        let (w, h) = (b[1] - b[0], b[3] - b[2]);
        let state = &self.states[state_index];
        let mut paths = String::new();
        for c in &self.states[0].contours {
            paths.push_str(&format!(
                "  <path d=\"{}\" fill=\"none\" stroke=\"#999\" stroke-dasharray=\"0.04 0.03\" stroke-width=\"0.008\"/>\n",
                c.svg_path_data()
            ));
        }
        for c in &state.contours {
            paths.push_str(&format!(
                "  <path d=\"{}\" fill=\"#9ec5e8\" fill-opacity=\"0.35\" stroke=\"#1f5fa8\" stroke-width=\"0.015\"/>\n",
                c.svg_path_data()
            ));
        }
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\" width=\"640\" height=\"640\">\n<g transform=\"translate(0,{}) scale(1,-1)\">\n<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"white\" stroke=\"#444\" stroke-width=\"0.01\"/>\n{}</g>\n<text x=\"{}\" y=\"{}\" font-size=\"{}\">t = {:.4}</text>\n</svg>\n",
            b[0], b[2], w, h,
            b[2] + b[3],
            b[0], b[2], w, h,
            paths,
            b[0] + 0.03 * w,
            b[2] + 0.07 * h,
            0.05 * h,
            state.t,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_circle_config() -> FlowConfig {
        FlowConfig {
            shape: ShapeSpec::circle(0.0, 0.0, 1.0),
            grid: GridConfig::square(96, 2.0),
            h: 8e-3,
            t_final: 4.0 * 8e-3,
            step: StepTuning::default(),
            checks: vec!["perimeter".into(), "distance-bound".into()],
            export: ExportConfig::default(),
        }
    }

    #[test]
    fn stationary_circle_short_flow() {
        let trace = run_flow(&small_circle_config()).unwrap();
        assert_eq!(trace.states.len(), 5);
        assert!(!trace.singular);
        let c0 = &trace.states[0].contours[0];
        let cn = trace.states.last().unwrap().contours.last().unwrap();
        let drift = crate::contour::hausdorff_distance(c0, cn);
        let dx = trace.config.grid.to_spec().unwrap().dx();
        assert!(drift <= 2.0 * dx, "drift {drift} vs 2dx {}", 2.0 * dx);
        for state in trace.states.iter().skip(1) {
            assert!(!state.report.lambda_clamped);
            assert!(state.report.vol_error <= 4.0 * dx * dx + 1e-12);
        }
        assert!(
            trace.verdicts["perimeter"].pass,
            "{:?}",
            trace.verdicts["perimeter"]
        );
        assert!(trace.verdicts["distance-bound"].pass);
    }

    #[test]
    fn trace_is_deterministic() {
        let cfg = FlowConfig {
            t_final: 2.0 * 8e-3,
            ..small_circle_config()
        };
        let a = run_flow(&cfg).unwrap().to_json().unwrap();
        let b = run_flow(&cfg).unwrap().to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_round_trip_is_idempotent() {
        let raw = r#"{
            "shape": {"kind": "circle", "cx": 0.0, "cy": 0.0, "r": 1.0},
            "grid": {"nx": 96, "ny": 96, "bounds": [-2.0, 2.0, -2.0, 2.0]},
            "h": 0.008, "T": 0.04
        }"#;
        let cfg: FlowConfig = serde_json::from_str(raw).unwrap();
        let once = serde_json::to_string(&cfg).unwrap();
        let twice =
            serde_json::to_string(&serde_json::from_str::<FlowConfig>(&once).unwrap()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn unknown_check_rejected() {
        let mut cfg = small_circle_config();
        cfg.checks.push("bogus".into());
        assert!(matches!(run_flow(&cfg), Err(FlowError::Config(_))));
    }

    #[test]
    fn dumbbell_pinches_before_horizon() {
        let cfg = FlowConfig {
            shape: ShapeSpec::Dumbbell {
                neck_width: 0.15,
                lobe_r: 0.55,
                separation: 1.6,
            },
            grid: GridConfig::square(128, 2.0),
            h: 2e-3,
            t_final: 0.2,
            step: StepTuning::default(),
            checks: vec!["perimeter".into()],
            export: ExportConfig::default(),
        };
        let trace = run_flow(&cfg).unwrap();
        assert!(trace.singular, "dumbbell should hit the resolution floor");
        assert!(trace.singular_time.unwrap() < 0.2);
        assert!(
            trace.verdicts["perimeter"].pass,
            "{:?}",
            trace.verdicts["perimeter"]
        );
        // s_norm must blow up approaching the pinch
        let s_first = trace.states[1].report.two_point.s_norm;
        let s_last = trace.states.last().unwrap().report.two_point.s_norm;
        assert!(s_last > 2.0 * s_first, "s {s_first} -> {s_last}");
    }

    #[test]
    fn csv_header_matches_contract() {
        let cfg = FlowConfig {
            t_final: 8e-3,
            ..small_circle_config()
        };
        let trace = run_flow(&cfg).unwrap();
        let csv = trace.series_csv();
        assert!(csv.starts_with(
            "t,volume,perimeter,lambda,lambda_clamped,s_norm,r_ubc,sup_d,l2_H2,l2_gradH2\n"
        ));
        assert_eq!(csv.lines().count(), trace.states.len() + 1);
        let svg = trace.frame_svg(trace.states.len() - 1);
        assert!(svg.contains("<svg") && svg.contains("path"));
    }

    #[test]
    fn star_mode_amplitude_extraction() {
        let star = ShapeSpec::FourierStar {
            r0: 1.0,
            k: 2,
            amplitude: 0.1,
        };
        let c = crate::contour::polygonize(&star, 1024).unwrap().remove(0);
        let a2 = radial_mode_amplitude(&c, 2).unwrap();
        assert!((a2 - 0.1).abs() < 5e-3, "a2 {a2}");
        let a3 = radial_mode_amplitude(&c, 3).unwrap();
        assert!(a3 < 5e-3, "a3 {a3}");
    }
}
