//! Consensus ADMM over trajectory segments.
//!
//! Each segment owns its polynomial coefficients and agrees with its
//! neighbours through consensus variables `z` stored at the interfaces. One
//! iteration is
//!
//! 1. a per-segment x-update (a 6×6 solve per axis, independent across segments),
//! 2. the interface z-update (average of the two incident boundary estimates
//!    plus their scaled duals) and the projection of the constraint samples,
//! 3. the scaled dual updates and residual bookkeeping.
//!
//! Corridor and dynamic limits are handled by sampled projection blocks: a
//! fixed set of sample times per segment whose position, velocity and
//! acceleration are tied to projected auxiliary variables with their own duals.

use std::collections::VecDeque;

use nalgebra::{Cholesky, Matrix6, Vector6, U6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::CorridorBox;
use crate::trajectory::{
    basis_row, dot6, fit_boundary, log10_floored, AxisCoeffs, BoundaryState, Segment, Trajectory,
    TrajectoryError, BOUNDARY_ORDER, NUM_COEFFS,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("normal system of segment {segment} is singular (duration {duration})")]
    Conditioning { segment: usize, duration: f64 },
    #[error("split of segment {segment} at t = {t} touches a segment boundary (duration {duration})")]
    DegenerateSplit { segment: usize, t: f64, duration: f64 },
    #[error("segment index {0} out of range")]
    SegmentIndex(usize),
    #[error("solver already terminated")]
    Terminated,
    #[error("inconsistent problem setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// Fraction of a segment's duration kept clear of its ends when splitting.
pub const SPLIT_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// ADMM penalty weight.
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Hard iteration cap; reaching it without convergence is a failure.
    pub max_iter: usize,
    /// ADMM iterations per decision step.
    pub k_dec: usize,
    /// Constraint sample times per segment (endpoints included).
    pub samples_per_segment: usize,
    /// Per-axis velocity bound.
    pub v_max: f64,
    /// Per-axis acceleration bound.
    pub a_max: f64,
    /// Length of the per-segment log-residual window.
    pub history_len: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            eps_abs: 1e-4,
            eps_rel: 1e-3,
            max_iter: 2000,
            k_dec: 25,
            samples_per_segment: 8,
            v_max: 3.0,
            a_max: 6.0,
            history_len: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SolverError::InvalidConfig(msg.to_owned()));
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be positive");
        }
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_iter == 0 || self.k_dec == 0 {
            return bad("max_iter and k_dec must be at least 1");
        }
        if self.samples_per_segment == 1 {
            return bad("a sampled segment needs at least two sample times");
        }
        if !(self.v_max > 0.0 && self.a_max > 0.0) {
            return bad("dynamic limits must be positive");
        }
        if self.history_len < 2 {
            return bad("residual history needs at least two entries");
        }
        Ok(())
    }

    /// Same settings without any constraint samples or dynamic limits.
    pub fn unconstrained(mut self) -> Self {
        self.samples_per_segment = 0;
        self.v_max = f64::INFINITY;
        self.a_max = f64::INFINITY;
        self
    }
}

/// Consensus variable at the junction of two segments.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceVar {
    pub z: BoundaryState,
    /// Scaled dual of the segment that ends at this interface.
    pub u_before: Vec<f64>,
    /// Scaled dual of the segment that starts at this interface.
    pub u_after: Vec<f64>,
    /// Start and goal states never move.
    pub fixed: bool,
}

impl InterfaceVar {
    pub fn new(z: BoundaryState, fixed: bool) -> Self {
        let len = z.as_slice().len();
        Self {
            z,
            u_before: vec![0.0; len],
            u_after: vec![0.0; len],
            fixed,
        }
    }
}

/// Sampled constraint rows of one segment.
#[derive(Debug, Clone)]
struct SampleBlock {
    /// Derivative order of each row.
    orders: Vec<usize>,
    /// Basis row of each constrained quantity, sample-major.
    rows: Vec<AxisCoeffs>,
    /// Projected targets, `rows.len() × axes`.
    w: Vec<f64>,
    /// Scaled duals, same layout as `w`.
    u: Vec<f64>,
}

impl SampleBlock {
    fn build(duration: f64, axes: usize, region: &CorridorBox, cfg: &SolverConfig) -> Self {
        let mut constrained = Vec::new();
        if region.is_bounded() {
            constrained.push(0);
        }
        if cfg.v_max.is_finite() {
            constrained.push(1);
        }
        if cfg.a_max.is_finite() {
            constrained.push(2);
        }
        let count = if constrained.is_empty() { 0 } else { cfg.samples_per_segment };
        let mut orders = Vec::new();
        let mut rows = Vec::new();
        for k in 0..count {
            let t = duration * k as f64 / (count - 1) as f64;
            for &order in &constrained {
                orders.push(order);
                rows.push(basis_row(t, order));
            }
        }
        let len = rows.len() * axes;
        Self {
            orders,
            rows,
            w: vec![0.0; len],
            u: vec![0.0; len],
        }
    }

    fn len(&self) -> usize {
        self.rows.len()
    }
}

#[inline]
fn project(order: usize, axis: usize, value: f64, region: &CorridorBox, cfg: &SolverConfig) -> f64 {
    match order {
        0 => region.clamp_axis(axis, value),
        1 => value.clamp(-cfg.v_max, cfg.v_max),
        _ => value.clamp(-cfg.a_max, cfg.a_max),
    }
}

/// Per-segment solver context.
#[derive(Debug, Clone)]
pub struct SegmentCtx {
    segment: Segment,
    region: CorridorBox,
    samples: SampleBlock,
    factor: Cholesky<f64, U6>,
    history: VecDeque<f64>,
    eps_left: f64,
    eps_right: f64,
}

impl SegmentCtx {
    /// Wraps `segment` and initializes its sample targets at their projections.
    pub fn new(segment: Segment, region: CorridorBox, cfg: &SolverConfig) -> Result<Self> {
        let axes = segment.axes();
        if region.axes() != axes {
            return Err(SolverError::Setup(format!(
                "region has {} axes, segment {}",
                region.axes(),
                axes
            )));
        }
        let samples = SampleBlock::build(segment.duration(), axes, &region, cfg);
        let factor = normal_factor(segment.duration(), &samples.rows, cfg.rho).ok_or(
            SolverError::Conditioning {
                segment: 0,
                duration: segment.duration(),
            },
        )?;
        let mut ctx = Self {
            segment,
            region,
            samples,
            factor,
            history: VecDeque::with_capacity(cfg.history_len),
            eps_left: 0.0,
            eps_right: 0.0,
        };
        ctx.reset_samples(cfg);
        Ok(ctx)
    }

    fn reset_samples(&mut self, cfg: &SolverConfig) {
        let axes = self.segment.axes();
        for (r, row) in self.samples.rows.iter().enumerate() {
            let order = self.samples.orders[r];
            for axis in 0..axes {
                let s = dot6(&self.segment.coeffs()[axis], row);
                self.samples.w[r * axes + axis] = project(order, axis, s, &self.region, cfg);
                self.samples.u[r * axes + axis] = 0.0;
            }
        }
    }

    pub fn segment(&self) -> &Segment {
        &self.segment
    }

    pub fn region(&self) -> &CorridorBox {
        &self.region
    }

    /// Recent `log10 ε` values, oldest first.
    pub fn history(&self) -> &VecDeque<f64> {
        &self.history
    }

    pub fn eps_left(&self) -> f64 {
        self.eps_left
    }

    pub fn eps_right(&self) -> f64 {
        self.eps_right
    }

    /// Total residual `ε_i = ε_left + ε_right`.
    pub fn eps(&self) -> f64 {
        self.eps_left + self.eps_right
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }
}

/// Factorization of `2G + ρ(BᵀB + ΣΦᵀΦ)` for one segment duration.
fn normal_factor(duration: f64, sample_rows: &[AxisCoeffs], rho: f64) -> Option<Cholesky<f64, U6>> {
    let gram = crate::trajectory::jerk_gram(duration);
    let mut m = Matrix6::from_fn(|j, k| 2.0 * gram[j][k]);
    let mut add_row = |row: &AxisCoeffs| {
        for j in 0..NUM_COEFFS {
            for k in 0..NUM_COEFFS {
                m[(j, k)] += rho * row[j] * row[k];
            }
        }
    };
    for order in 0..BOUNDARY_ORDER {
        add_row(&basis_row(0.0, order));
        add_row(&basis_row(duration, order));
    }
    for row in sample_rows {
        add_row(row);
    }
    Cholesky::new(m)
}

/// x-update of one segment against its two interfaces.
///
/// Minimizes `J(c) + ρ/2‖B c − z̃ + u‖² + ρ/2 Σ_k ‖Φ_k c − w_k + u_k‖²` per axis.
pub fn local_update(ctx: &SegmentCtx, left: &InterfaceVar, right: &InterfaceVar, cfg: &SolverConfig) -> Segment {
    let seg = &ctx.segment;
    let axes = seg.axes();
    let duration = seg.duration();
    let rho = cfg.rho;
    let start_rows: [AxisCoeffs; BOUNDARY_ORDER] = std::array::from_fn(|o| basis_row(0.0, o));
    let end_rows: [AxisCoeffs; BOUNDARY_ORDER] = std::array::from_fn(|o| basis_row(duration, o));
    let mut coeffs = Vec::with_capacity(axes);
    for axis in 0..axes {
        let mut rhs = Vector6::zeros();
        for o in 0..BOUNDARY_ORDER {
            let idx = o * axes + axis;
            let target_l = left.z.as_slice()[idx] - left.u_after[idx];
            let target_r = right.z.as_slice()[idx] - right.u_before[idx];
            for j in 0..NUM_COEFFS {
                rhs[j] += rho * (start_rows[o][j] * target_l + end_rows[o][j] * target_r);
            }
        }
        for (r, row) in ctx.samples.rows.iter().enumerate() {
            let idx = r * axes + axis;
            let target = ctx.samples.w[idx] - ctx.samples.u[idx];
            for j in 0..NUM_COEFFS {
                rhs[j] += rho * row[j] * target;
            }
        }
        let c = ctx.factor.solve(&rhs);
        coeffs.push(std::array::from_fn(|j| c[j]));
    }
    Segment::new(coeffs, duration).expect("duration unchanged")
}

/// Residual split of one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentResidual {
    pub eps: f64,
    pub eps_left: f64,
    pub eps_right: f64,
}

/// Global residual norms used by the stopping test.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ResidualNorms {
    pub primal: f64,
    pub dual: f64,
    pub primal_tol: f64,
    pub dual_tol: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolverStatus {
    pub iteration: usize,
    pub converged: bool,
    pub failed: bool,
    /// `‖ε‖∞` over segments.
    pub max_residual: f64,
    /// Mean of `ε_i` over segments.
    pub mean_residual: f64,
    pub norms: ResidualNorms,
}

impl SolverStatus {
    pub fn terminated(&self) -> bool {
        self.converged || self.failed
    }
}

/// Boyd-style stopping test: both residual norms within their tolerances.
pub fn check_converged(norms: &ResidualNorms) -> bool {
    norms.primal <= norms.primal_tol && norms.dual <= norms.dual_tol
}

/// Consensus ADMM state over the whole trajectory.
#[derive(Debug, Clone)]
pub struct AdmmSolver {
    cfg: SolverConfig,
    interfaces: Vec<InterfaceVar>,
    segments: Vec<SegmentCtx>,
    status: SolverStatus,
    /// `Δz` of every interface from the last consensus step.
    dz: Vec<Vec<f64>>,
    /// Squared `Δw` per segment from the last consensus step.
    dw_sq: Vec<f64>,
    /// Whether residuals have been computed since the last structural change.
    fresh: bool,
}

impl AdmmSolver {
    /// Builds the solver from interface states (start and goal fixed), per-segment
    /// durations and constraint regions. Segments start as min-jerk fits between
    /// their interface states.
    pub fn new(
        cfg: SolverConfig,
        interface_states: Vec<BoundaryState>,
        durations: &[f64],
        regions: Vec<CorridorBox>,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = durations.len();
        if n == 0 || interface_states.len() != n + 1 || regions.len() != n {
            return Err(SolverError::Setup(format!(
                "{} interfaces, {} durations, {} regions",
                interface_states.len(),
                n,
                regions.len()
            )));
        }
        let mut segments = Vec::with_capacity(n);
        for (i, (region, &duration)) in regions.into_iter().zip(durations).enumerate() {
            let seg = fit_boundary(&interface_states[i], &interface_states[i + 1], duration)?.segment;
            let ctx = SegmentCtx::new(seg, region, &cfg).map_err(|e| match e {
                SolverError::Conditioning { duration, .. } => SolverError::Conditioning { segment: i, duration },
                other => other,
            })?;
            segments.push(ctx);
        }
        let last = interface_states.len() - 1;
        let interfaces: Vec<InterfaceVar> = interface_states
            .into_iter()
            .enumerate()
            .map(|(j, z)| InterfaceVar::new(z, j == 0 || j == last))
            .collect();
        let zlen = interfaces[0].z.as_slice().len();
        Ok(Self {
            dz: vec![vec![0.0; zlen]; interfaces.len()],
            dw_sq: vec![0.0; n],
            cfg,
            interfaces,
            segments,
            status: SolverStatus::default(),
            fresh: false,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn status(&self) -> SolverStatus {
        self.status
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> &[SegmentCtx] {
        &self.segments
    }

    pub fn interfaces(&self) -> &[InterfaceVar] {
        &self.interfaces
    }

    /// Whether residuals reflect the current structure.
    pub fn has_fresh_residuals(&self) -> bool {
        self.fresh
    }

    /// Norm of the segment's two consensus duals, `‖ρ [u_left; u_right]‖`.
    pub fn dual_norm(&self, i: usize) -> f64 {
        let left = &self.interfaces[i].u_after;
        let right = &self.interfaces[i + 1].u_before;
        self.cfg.rho * left.iter().chain(right).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory::new(
            self.segments.iter().map(|s| s.segment.clone()).collect(),
            self.status.converged,
        )
        .expect("solver always holds at least one segment")
    }

    pub fn jerk_energy(&self) -> f64 {
        self.segments.iter().map(|s| s.segment.jerk_energy()).sum()
    }

    /// Continuous trajectory obtained by refitting every segment between its
    /// two consensus states. Exactly continuous even before convergence and
    /// within O(residual²) of the local segments' energy near the optimum.
    pub fn consensus_trajectory(&self) -> Trajectory {
        let segments = self
            .segments
            .iter()
            .enumerate()
            .map(|(i, ctx)| {
                fit_boundary(&self.interfaces[i].z, &self.interfaces[i + 1].z, ctx.segment.duration())
                    .expect("interface states share the segment's dimension")
                    .segment
            })
            .collect();
        Trajectory::new(segments, true).expect("solver always holds at least one segment")
    }

    /// Largest violation of corridor, velocity and acceleration limits over
    /// `per_segment` uniformly spaced samples of every segment.
    pub fn max_constraint_violation(&self, per_segment: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for ctx in &self.segments {
            let seg = &ctx.segment;
            for k in 0..per_segment {
                let t = seg.duration() * k as f64 / (per_segment - 1).max(1) as f64;
                let p = seg.evaluate_unchecked(t, 0);
                if ctx.region.is_bounded() {
                    worst = worst.max(ctx.region.violation(&p));
                }
                for v in seg.evaluate_unchecked(t, 1) {
                    worst = worst.max(v.abs() - self.cfg.v_max);
                }
                for a in seg.evaluate_unchecked(t, 2) {
                    worst = worst.max(a.abs() - self.cfg.a_max);
                }
            }
        }
        worst.max(0.0)
    }

    /// Runs the x-update of every segment. Segments are independent, so the map
    /// is spread over the rayon pool when more than one worker is available.
    pub fn local_updates(&mut self) {
        let interfaces = &self.interfaces;
        let cfg = &self.cfg;
        let update = |(i, ctx): (usize, &mut SegmentCtx)| {
            ctx.segment = local_update(ctx, &interfaces[i], &interfaces[i + 1], cfg);
        };
        if rayon::current_num_threads() > 1 && self.segments.len() > 1 {
            self.segments.par_iter_mut().enumerate().for_each(update);
        } else {
            self.segments.iter_mut().enumerate().for_each(update);
        }
    }

    /// z-update, scaled-dual updates and sample projections.
    pub fn consensus_and_dual_update(&mut self) {
        let n = self.segments.len();
        let starts: Vec<BoundaryState> = self.segments.iter().map(|s| s.segment.start_state()).collect();
        let ends: Vec<BoundaryState> = self.segments.iter().map(|s| s.segment.end_state()).collect();

        for j in 0..=n {
            let iface = &mut self.interfaces[j];
            let dz = &mut self.dz[j];
            dz.iter_mut().for_each(|v| *v = 0.0);
            if !iface.fixed && j > 0 && j < n {
                let before = ends[j - 1].as_slice();
                let after = starts[j].as_slice();
                for (idx, z) in iface.z.as_mut_slice().iter_mut().enumerate() {
                    let new = 0.5 * ((before[idx] + iface.u_before[idx]) + (after[idx] + iface.u_after[idx]));
                    dz[idx] = new - *z;
                    *z = new;
                }
            }
            let z = iface.z.as_slice();
            if j > 0 {
                for (idx, u) in iface.u_before.iter_mut().enumerate() {
                    *u += ends[j - 1].as_slice()[idx] - z[idx];
                }
            }
            if j < n {
                for (idx, u) in iface.u_after.iter_mut().enumerate() {
                    *u += starts[j].as_slice()[idx] - z[idx];
                }
            }
        }

        let cfg = &self.cfg;
        for (ctx, dw_sq) in self.segments.iter_mut().zip(self.dw_sq.iter_mut()) {
            let axes = ctx.segment.axes();
            let mut acc = 0.0;
            for r in 0..ctx.samples.len() {
                let order = ctx.samples.orders[r];
                for axis in 0..axes {
                    let idx = r * axes + axis;
                    let s = dot6(&ctx.segment.coeffs()[axis], &ctx.samples.rows[r]);
                    let w_new = project(order, axis, s + ctx.samples.u[idx], &ctx.region, cfg);
                    let d = w_new - ctx.samples.w[idx];
                    acc += d * d;
                    ctx.samples.w[idx] = w_new;
                    ctx.samples.u[idx] += s - w_new;
                }
            }
            *dw_sq = acc;
        }
    }

    /// Per-segment residuals, appended to each residual history, plus the
    /// global stopping norms.
    pub fn compute_residuals(&mut self) -> (Vec<SegmentResidual>, ResidualNorms) {
        let rho = self.cfg.rho;
        let n = self.segments.len();
        let mut primal_sq = 0.0;
        let mut dual_sq = 0.0;
        let mut ax_sq = 0.0;
        let mut z_sq = 0.0;
        let mut y_sq = 0.0;
        let mut rows = 0usize;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let ctx = &self.segments[i];
            let start = ctx.segment.start_state();
            let end = ctx.segment.end_state();
            let left = &self.interfaces[i];
            let right = &self.interfaces[i + 1];
            let side = |b: &BoundaryState, z: &BoundaryState, dz: &[f64]| {
                let r: f64 = b.as_slice().iter().zip(z.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum();
                let d: f64 = dz.iter().map(|v| rho * rho * v * v).sum();
                (r, d)
            };
            let (rl, dl) = side(&start, &left.z, &self.dz[i]);
            let (rr, dr) = side(&end, &right.z, &self.dz[i + 1]);
            primal_sq += rl + rr;
            dual_sq += dl + dr;
            ax_sq += start.norm_sq() + end.norm_sq();
            z_sq += left.z.norm_sq() + right.z.norm_sq();
            y_sq += left.u_after.iter().chain(&right.u_before).map(|v| v * v).sum::<f64>();
            rows += start.as_slice().len() * 2;

            let axes = ctx.segment.axes();
            for r in 0..ctx.samples.len() {
                for axis in 0..axes {
                    let idx = r * axes + axis;
                    let s = dot6(&ctx.segment.coeffs()[axis], &ctx.samples.rows[r]);
                    let w = ctx.samples.w[idx];
                    primal_sq += (s - w) * (s - w);
                    ax_sq += s * s;
                    z_sq += w * w;
                    y_sq += ctx.samples.u[idx] * ctx.samples.u[idx];
                }
            }
            rows += ctx.samples.len() * axes;
            dual_sq += rho * rho * self.dw_sq[i];

            let res = SegmentResidual {
                eps: rl + dl + rr + dr,
                eps_left: rl + dl,
                eps_right: rr + dr,
            };
            let ctx = &mut self.segments[i];
            ctx.eps_left = res.eps_left;
            ctx.eps_right = res.eps_right;
            if ctx.history.len() == self.cfg.history_len {
                ctx.history.pop_front();
            }
            ctx.history.push_back(log10_floored(res.eps));
            out.push(res);
        }
        let sqrt_rows = (rows as f64).sqrt();
        let norms = ResidualNorms {
            primal: primal_sq.sqrt(),
            dual: dual_sq.sqrt(),
            primal_tol: self.cfg.eps_abs * sqrt_rows + self.cfg.eps_rel * ax_sq.sqrt().max(z_sq.sqrt()),
            dual_tol: self.cfg.eps_abs * sqrt_rows + self.cfg.eps_rel * rho * y_sq.sqrt(),
        };
        let max = out.iter().map(|r| r.eps).fold(0.0, f64::max);
        let mean = out.iter().map(|r| r.eps).sum::<f64>() / n as f64;
        self.status.max_residual = max;
        self.status.mean_residual = mean;
        self.status.norms = norms;
        self.fresh = true;
        (out, norms)
    }

    /// One full ADMM iteration, including the stopping test.
    fn iterate_once(&mut self) {
        self.local_updates();
        self.consensus_and_dual_update();
        let (_, norms) = self.compute_residuals();
        self.status.iteration += 1;
        if check_converged(&norms) {
            self.status.converged = true;
        } else if self.status.iteration >= self.cfg.max_iter {
            self.status.failed = true;
        }
    }

    /// Runs up to `k` iterations, stopping early on convergence or at the cap.
    pub fn iterate_block(&mut self, k: usize) -> SolverStatus {
        for _ in 0..k {
            if self.status.terminated() {
                break;
            }
            if self.status.iteration >= self.cfg.max_iter {
                self.status.failed = true;
                break;
            }
            self.iterate_once();
        }
        self.status
    }

    /// Runs until convergence or failure.
    pub fn solve(&mut self) -> SolverStatus {
        while !self.status.terminated() {
            self.iterate_block(self.cfg.max_iter);
        }
        self.status
    }

    /// Replaces segment `i` by two children meeting at the parent's state at
    /// local time `t_split`.
    ///
    /// Children last `τ·T·(1+η)` and `(1−τ)·T·(1+η)`. The new interface takes the
    /// parent's state at `t_split`, time-dilated by `1+η` (velocity scaled by
    /// `1/(1+η)`, acceleration by `1/(1+η)²`), with zero duals. Both children are
    /// refit between their interface states and inherit the parent's region.
    pub fn split_segment(&mut self, i: usize, t_split: f64, time_ratio: f64, inflation: f64) -> Result<()> {
        if self.status.terminated() {
            return Err(SolverError::Terminated);
        }
        let parent = self.segments.get(i).ok_or(SolverError::SegmentIndex(i))?;
        let duration = parent.segment.duration();
        if !(t_split > 0.0 && t_split < duration) || !t_split.is_finite() {
            return Err(SolverError::DegenerateSplit {
                segment: i,
                t: t_split,
                duration,
            });
        }
        let t_split = t_split.clamp(SPLIT_MARGIN * duration, (1.0 - SPLIT_MARGIN) * duration);
        let time_ratio = time_ratio.clamp(0.1, 0.9);
        let inflation = inflation.clamp(0.0, 0.3);
        let dilation = 1.0 + inflation;

        let mut mid = parent.segment.state_at(t_split)?;
        let axes = mid.axes();
        for axis in 0..axes {
            mid.set(1, axis, mid.get(1, axis) / dilation);
            mid.set(2, axis, mid.get(2, axis) / (dilation * dilation));
        }
        let region = parent.region.clone();
        let t_left = time_ratio * duration * dilation;
        let t_right = (1.0 - time_ratio) * duration * dilation;
        let left_fit = fit_boundary(&self.interfaces[i].z, &mid, t_left)?;
        let right_fit = fit_boundary(&mid, &self.interfaces[i + 1].z, t_right)?;
        let conditioning = |duration| SolverError::Conditioning { segment: i, duration };
        let left = SegmentCtx::new(left_fit.segment, region.clone(), &self.cfg).map_err(|_| conditioning(t_left))?;
        let right = SegmentCtx::new(right_fit.segment, region, &self.cfg).map_err(|_| conditioning(t_right))?;
        self.segments.splice(i..=i, [left, right]);
        self.interfaces.insert(i + 1, InterfaceVar::new(mid, false));
        self.dz.insert(i + 1, vec![0.0; axes * BOUNDARY_ORDER]);
        self.dw_sq.splice(i..=i, [0.0, 0.0]);
        self.fresh = false;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line_solver(cfg: SolverConfig, n: usize) -> AdmmSolver {
        // Straight line with interior interfaces initialized off the optimum.
        let mut states = Vec::new();
        for j in 0..=n {
            let x = j as f64;
            let mut s = BoundaryState::rest(&[x, 0.5 * x]);
            if j != 0 && j != n {
                s.set(0, 1, s.get(0, 1) + 0.3);
                s.set(1, 0, 0.2);
            }
            states.push(s);
        }
        let regions = vec![CorridorBox::unbounded(2); n];
        AdmmSolver::new(cfg, states, &vec![2.0; n], regions).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let mut cfg = SolverConfig::default();
        cfg.rho = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::default();
        cfg.k_dec = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn consensus_already_held_keeps_duals_zero() {
        let cfg = SolverConfig::default().unconstrained();
        let a = BoundaryState::rest(&[0.0, 0.0]);
        let mid = BoundaryState::from_derivatives(&[1.0, 1.0], &[1.0, 0.5], &[0.0, 0.0]);
        let b = BoundaryState::rest(&[2.0, 1.0]);
        let mut solver = AdmmSolver::new(cfg, vec![a, mid.clone(), b], &[1.0, 1.0], vec![CorridorBox::unbounded(2); 2]).unwrap();
        // skip the x-update: boundaries coincide with z by construction
        solver.consensus_and_dual_update();
        assert!(solver.interfaces[1].z.as_slice().iter().zip(mid.as_slice()).all(|(x, y)| (x - y).abs() < 1e-12));
        for iface in &solver.interfaces {
            assert!(iface.u_before.iter().chain(&iface.u_after).all(|u| u.abs() < 1e-12));
        }
        let (res, _) = solver.compute_residuals();
        assert!(res.iter().all(|r| r.eps < 1e-20));
    }

    #[test]
    fn z_update_is_the_mean_and_duals_accumulate() {
        let cfg = SolverConfig::default().unconstrained();
        let a = BoundaryState::rest(&[0.0, 0.0]);
        let b = BoundaryState::rest(&[1.0, 0.0]);
        let c = BoundaryState::rest(&[2.0, 0.0]);
        let mut solver = AdmmSolver::new(cfg, vec![a, b.clone(), c], &[1.0, 1.0], vec![CorridorBox::unbounded(2); 2]).unwrap();
        // Left segment ends at x = 1, right segment starts at x = 0.
        let first = fit_boundary(&BoundaryState::rest(&[0.0, 0.0]), &b, 1.0).unwrap().segment;
        let second = fit_boundary(&BoundaryState::rest(&[0.0, 0.0]), &BoundaryState::rest(&[2.0, 0.0]), 1.0).unwrap().segment;
        solver.segments[0].segment = first;
        solver.segments[1].segment = second;
        solver.consensus_and_dual_update();
        assert_abs_diff_eq!(solver.interfaces[1].z.get(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(solver.interfaces[1].u_before[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(solver.interfaces[1].u_after[0], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn dual_residual_matches_rho_delta_z() {
        let mut cfg = SolverConfig::default().unconstrained();
        cfg.rho = 1.0;
        let mut solver = line_solver(cfg, 3);
        let z_before: Vec<Vec<f64>> = solver.interfaces.iter().map(|f| f.z.as_slice().to_vec()).collect();
        solver.local_updates();
        solver.consensus_and_dual_update();
        let (res, _) = solver.compute_residuals();
        for i in 0..3 {
            let start = solver.segments[i].segment.start_state();
            let z = &solver.interfaces[i].z;
            let primal: f64 = start.as_slice().iter().zip(z.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
            let dual: f64 = z.as_slice().iter().zip(&z_before[i]).map(|(a, b)| (a - b).powi(2)).sum();
            assert_abs_diff_eq!(res[i].eps_left, primal + dual, epsilon = 1e-12);
        }
    }

    #[test]
    fn fixed_point_is_stationary() {
        let cfg = SolverConfig::default();
        // Zero duals make this a fixed point only when the jerk gradient vanishes.
        let a = BoundaryState::from_derivatives(&[0.0, 0.0], &[0.5, 0.25], &[0.0, 0.0]);
        let b = BoundaryState::from_derivatives(&[1.0, 0.5], &[0.5, 0.25], &[0.0, 0.0]);
        let region = CorridorBox::new(vec![-1.0, -1.0], vec![2.0, 2.0]);
        let solver = AdmmSolver::new(cfg.clone(), vec![a, b], &[2.0], vec![region]).unwrap();
        let before = solver.segments[0].segment.clone();
        let after = local_update(&solver.segments[0], &solver.interfaces[0], &solver.interfaces[1], &cfg);
        for (x, y) in before.coeffs().iter().flatten().zip(after.coeffs().iter().flatten()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn large_penalty_reproduces_boundary_fit() {
        let mut cfg = SolverConfig::default().unconstrained();
        cfg.rho = 1e12;
        let a = BoundaryState::from_derivatives(&[0.0, 1.0], &[0.5, 0.0], &[0.0, -1.0]);
        let b = BoundaryState::from_derivatives(&[2.0, -1.0], &[0.0, 1.0], &[0.3, 0.0]);
        let solver = AdmmSolver::new(cfg.clone(), vec![a.clone(), b.clone()], &[1.5], vec![CorridorBox::unbounded(2)]).unwrap();
        let mut ctx = solver.segments[0].clone();
        ctx.segment = Segment::constant(&[0.0, 0.0], 1.5).unwrap();
        let got = local_update(&ctx, &solver.interfaces[0], &solver.interfaces[1], &cfg);
        let want = fit_boundary(&a, &b, 1.5).unwrap().segment;
        for (x, y) in got.coeffs().iter().flatten().zip(want.coeffs().iter().flatten()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-6);
        }
    }

    #[test]
    fn block_advances_counter_and_stops_when_converged() {
        let mut solver = line_solver(SolverConfig::default().unconstrained(), 3);
        let status = solver.iterate_block(25);
        assert_eq!(status.iteration, 25);
        assert!(!status.converged);
        let status = solver.solve();
        assert!(status.converged);
        let it = status.iteration;
        assert_eq!(solver.iterate_block(25).iteration, it);
    }

    #[test]
    fn unconstrained_line_converges_within_200() {
        let cfg = SolverConfig::default().unconstrained();
        let eps_abs = cfg.eps_abs;
        let mut solver = line_solver(cfg, 3);
        solver.iterate_block(200);
        assert!(solver.status().max_residual < eps_abs, "{:?}", solver.status());
    }

    #[test]
    fn iteration_cap_marks_failure() {
        let mut cfg = SolverConfig::default().unconstrained();
        cfg.max_iter = 5;
        let mut solver = line_solver(cfg, 4);
        let status = solver.iterate_block(100);
        assert_eq!(status.iteration, 5);
        assert!(status.failed && !status.converged);
        assert_eq!(solver.iterate_block(10).iteration, 5);
    }

    #[test]
    fn stopping_threshold_is_strict() {
        let mut norms = ResidualNorms {
            primal: 0.0,
            dual: 0.0,
            primal_tol: 1.0,
            dual_tol: 1.0,
        };
        assert!(check_converged(&norms));
        norms.primal = 1.01;
        assert!(!check_converged(&norms));
        norms.primal = 1.0;
        norms.dual = 1.01;
        assert!(!check_converged(&norms));
    }

    #[test]
    fn split_bookkeeping() {
        let mut solver = line_solver(SolverConfig::default(), 3);
        solver.iterate_block(10);
        let duals: Vec<InterfaceVar> = solver.interfaces.clone();
        let parent = solver.segments[1].segment.clone();
        let t = parent.duration() / 2.0;
        solver.split_segment(1, t, 0.5, 0.0).unwrap();
        assert_eq!(solver.num_segments(), 4);
        assert_abs_diff_eq!(solver.segments[1].segment.duration(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(solver.segments[2].segment.duration(), 1.0, epsilon = 1e-15);
        let mid = parent.evaluate(t, 0).unwrap();
        assert_eq!(solver.interfaces[2].z.position(), mid.as_slice());
        assert!(solver.segments[1].history().is_empty());
        // every pre-existing interface keeps its duals bit for bit
        for (old, new) in duals.iter().zip([0, 1, 3, 4]) {
            assert_eq!(old.u_before, solver.interfaces[new].u_before);
            assert_eq!(old.u_after, solver.interfaces[new].u_after);
        }
        assert!(solver.interfaces[2].u_before.iter().all(|u| *u == 0.0));
    }

    #[test]
    fn split_with_inflation_stretches_duration() {
        let mut solver = line_solver(SolverConfig::default(), 2);
        solver.split_segment(0, 0.8, 0.3, 0.3).unwrap();
        let total = solver.segments[0].segment.duration() + solver.segments[1].segment.duration();
        assert_abs_diff_eq!(total, 2.6, epsilon = 1e-12);
    }

    #[test]
    fn split_rejects_boundary_times_and_clamps_near_ones() {
        let mut solver = line_solver(SolverConfig::default(), 2);
        assert!(matches!(solver.split_segment(0, 0.0, 0.5, 0.0), Err(SolverError::DegenerateSplit { .. })));
        assert!(matches!(solver.split_segment(0, 2.0, 0.5, 0.0), Err(SolverError::DegenerateSplit { .. })));
        assert!(matches!(solver.split_segment(5, 0.5, 0.5, 0.0), Err(SolverError::SegmentIndex(5))));
        let parent = solver.segments[0].segment.clone();
        solver.split_segment(0, 0.01, 0.5, 0.0).unwrap();
        let expected = parent.state_at(0.1).unwrap();
        assert_eq!(solver.interfaces[1].z, expected);
    }
}
