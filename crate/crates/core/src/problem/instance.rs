use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admm::{AdmmSolver, SolverConfig};
use crate::geometry::CorridorBox;
use crate::trajectory::BoundaryState;

use super::corridor::build_corridor;
use super::grid::{generate_grid, Cell, OccupancyGrid};
use super::path::plan_path;
use super::{ProblemError, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Trajectory length class, by straight-line start/goal distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleClass {
    Short,
    Medium,
    Long,
}

impl ScaleClass {
    pub const ALL: [ScaleClass; 3] = [ScaleClass::Short, ScaleClass::Medium, ScaleClass::Long];

    /// Start/goal distance range in meters.
    pub fn distance_range(self) -> (f64, f64) {
        match self {
            ScaleClass::Short => (6.0, 12.0),
            ScaleClass::Medium => (12.0, 36.0),
            ScaleClass::Long => (36.0, 46.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScaleClass::Short => "short",
            ScaleClass::Medium => "medium",
            ScaleClass::Long => "long",
        }
    }
}

impl fmt::Display for ScaleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ScaleClass {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "short" => Ok(ScaleClass::Short),
            "medium" => Ok(ScaleClass::Medium),
            "long" => Ok(ScaleClass::Long),
            other => Err(ProblemError::Config(format!("unknown scale class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Side length of the square workspace in meters.
    pub workspace: f64,
    pub cell_size: f64,
    pub v_max: f64,
    pub a_max: f64,
    /// Cruise speed of the time-allocation profile, as a fraction of `v_max`.
    pub speed_fraction: f64,
    /// Acceleration of the time-allocation profile, as a fraction of `a_max`.
    pub accel_fraction: f64,
    /// Longest waypoint spacing per axis in meters.
    pub max_span: f64,
    /// Start and goal cells are cleared within this Chebyshev radius (cells).
    pub clear_radius: usize,
    /// Keep start and goal this far from the workspace edge (meters).
    pub margin: f64,
    pub max_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            workspace: 48.0,
            cell_size: 0.25,
            v_max: 3.0,
            a_max: 6.0,
            speed_fraction: 0.6,
            accel_fraction: 0.6,
            max_span: 12.0,
            clear_radius: 2,
            margin: 1.0,
            max_attempts: 100,
        }
    }
}

impl GeneratorConfig {
    pub fn dims(&self) -> [usize; 2] {
        let n = (self.workspace / self.cell_size).round() as usize;
        [n, n]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.workspace,
            self.cell_size,
            self.v_max,
            self.a_max,
            self.speed_fraction,
            self.accel_fraction,
            self.max_span,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ProblemError::Config("sizes, limits and fractions must be positive".into()));
        }
        if self.max_attempts == 0 {
            return Err(ProblemError::Config("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Trapezoidal speed profile along a path of length `length`.
#[derive(Debug, Clone, Copy)]
pub struct Trapezoid {
    length: f64,
    accel: f64,
    peak: f64,
    ramp: f64,
}

impl Trapezoid {
    pub fn new(length: f64, cruise: f64, accel: f64) -> Self {
        let peak = cruise.min((accel * length).sqrt());
        let ramp = peak * peak / (2.0 * accel);
        Self {
            length,
            accel,
            peak,
            ramp,
        }
    }

    pub fn total_time(&self) -> f64 {
        if self.length <= 0.0 {
            return 0.0;
        }
        2.0 * self.peak / self.accel + (self.length - 2.0 * self.ramp) / self.peak
    }

    /// Time at which arc length `s` is reached.
    pub fn time_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length);
        if s <= self.ramp {
            (2.0 * s / self.accel).sqrt()
        } else if s <= self.length - self.ramp {
            self.peak / self.accel + (s - self.ramp) / self.peak
        } else {
            self.total_time() - (2.0 * (self.length - s) / self.accel).sqrt()
        }
    }

    pub fn speed_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length);
        (2.0 * self.accel * s)
            .sqrt()
            .min(self.peak)
            .min((2.0 * self.accel * (self.length - s)).sqrt())
    }
}

/// A benchmark problem: rest-to-rest flight through a corridor of boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub version: u32,
    pub seed: u64,
    pub rho: f64,
    pub grid_dims: [usize; 2],
    pub cell_size: f64,
    /// Start state values, order-major (positions, velocities, accelerations).
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub waypoints: Vec<Vec<f64>>,
    pub boxes: Vec<CorridorBox>,
    pub durations: Vec<f64>,
    pub v_max: f64,
    pub a_max: f64,
    /// Iterations used by the fixed-structure baseline, when known.
    pub k_base: Option<usize>,
}

impl ProblemInstance {
    pub fn num_segments(&self) -> usize {
        self.durations.len()
    }

    pub fn axes(&self) -> usize {
        self.waypoints.first().map_or(2, Vec::len)
    }

    /// Structural checks on a loaded or generated instance.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ProblemError::Format(msg));
        if self.version != FORMAT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        let n = self.durations.len();
        if n == 0 || self.waypoints.len() != n + 1 || self.boxes.len() != n {
            return bad(format!(
                "{} waypoints, {} boxes, {} durations",
                self.waypoints.len(),
                self.boxes.len(),
                n
            ));
        }
        let m = self.axes();
        if self.waypoints.iter().any(|w| w.len() != m) || self.boxes.iter().any(|b| b.axes() != m) {
            return bad("mixed dimensions".into());
        }
        if self.start.len() != 3 * m || self.goal.len() != 3 * m {
            return bad("start/goal must hold position, velocity and acceleration".into());
        }
        if self.durations.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad("durations must be positive".into());
        }
        Ok(())
    }

    pub fn start_state(&self) -> BoundaryState {
        BoundaryState::new(self.axes(), self.start.clone()).expect("validated instance")
    }

    pub fn goal_state(&self) -> BoundaryState {
        BoundaryState::new(self.axes(), self.goal.clone()).expect("validated instance")
    }

    /// Initial interface states: the fixed endpoints plus interior waypoints
    /// moving at the allocation profile's speed along the local path direction.
    pub fn interface_states(&self) -> Vec<BoundaryState> {
        let n = self.num_segments();
        let m = self.axes();
        let mut arc = vec![0.0; n + 1];
        for i in 0..n {
            arc[i + 1] = arc[i] + dist(&self.waypoints[i], &self.waypoints[i + 1]);
        }
        let mut out = Vec::with_capacity(n + 1);
        out.push(self.start_state());
        for j in 1..n {
            let prev = &self.waypoints[j - 1];
            let next = &self.waypoints[j + 1];
            let dir: Vec<f64> = (0..m).map(|a| next[a] - prev[a]).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            // speed implied by the stored durations around the waypoint
            let speed = (arc[j + 1] - arc[j - 1]) / (self.durations[j - 1] + self.durations[j]);
            let vel: Vec<f64> = if norm > 0.0 {
                dir.iter().map(|v| v / norm * speed).collect()
            } else {
                vec![0.0; m]
            };
            out.push(BoundaryState::from_derivatives(&self.waypoints[j], &vel, &vec![0.0; m]));
        }
        out.push(self.goal_state());
        out
    }

    /// Solver settings for this instance: `base` with the instance's limits.
    pub fn solver_config(&self, base: &SolverConfig) -> SolverConfig {
        SolverConfig {
            v_max: self.v_max,
            a_max: self.a_max,
            ..base.clone()
        }
    }

    /// Fresh solver over the instance's initial segmentation.
    pub fn build_solver(&self, base: &SolverConfig) -> Result<AdmmSolver> {
        self.validate()?;
        Ok(AdmmSolver::new(
            self.solver_config(base),
            self.interface_states(),
            &self.durations,
            self.boxes.clone(),
        )?)
    }

    /// Regenerates the occupancy grid the instance was built on.
    pub fn grid(&self, cfg: &GeneratorConfig) -> Result<OccupancyGrid> {
        let mut grid = generate_grid(self.seed, self.rho, self.grid_dims, self.cell_size)?;
        for p in [&self.start[..2], &self.goal[..2]] {
            grid.clear_around(grid.cell_at([p[0], p[1]]), cfg.clear_radius);
        }
        Ok(grid)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats);
        self.serialize(&mut ser)?;
        buf.push(b'\n');
        Ok(String::from_utf8(buf).expect("serializer emits UTF-8"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Compact JSON with every float written as 17 significant digits.
struct ExactFloats;

impl serde_json::ser::Formatter for ExactFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Per-segment durations from a trapezoidal profile over the whole path.
pub fn allocate_durations(waypoints: &[Vec<f64>], cruise: f64, accel: f64) -> Vec<f64> {
    let mut arc = vec![0.0];
    for w in waypoints.windows(2) {
        arc.push(arc.last().unwrap() + dist(&w[0], &w[1]));
    }
    let profile = Trapezoid::new(*arc.last().unwrap(), cruise, accel);
    arc.windows(2)
        .map(|s| profile.time_at(s[1]) - profile.time_at(s[0]))
        .collect()
}

/// Generates one instance and records the fixed-structure baseline iterations.
pub fn make_instance(
    seed: u64,
    density: f64,
    scale: ScaleClass,
    cfg: &GeneratorConfig,
    solver: &SolverConfig,
) -> Result<ProblemInstance> {
    let (mut inst, _) = sample_instance(seed, density, scale, cfg)?;
    let mut baseline = inst.build_solver(solver)?;
    let status = baseline.solve();
    inst.k_base = Some(status.iteration);
    Ok(inst)
}

/// Geometry and time allocation without the baseline run, plus the grid used.
pub fn sample_instance(
    seed: u64,
    density: f64,
    scale: ScaleClass,
    cfg: &GeneratorConfig,
) -> Result<(ProblemInstance, OccupancyGrid)> {
    cfg.validate()?;
    let dims = cfg.dims();
    let base_grid = generate_grid(seed, density, dims, cfg.cell_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + scale as u64);
    let (d_lo, d_hi) = scale.distance_range();
    let lo = cfg.margin;
    let hi = cfg.workspace - cfg.margin;
    let max_span = ((cfg.max_span / cfg.cell_size).floor() as usize).max(1);

    for _ in 0..cfg.max_attempts {
        let Some((start, goal)) = (0..1000).find_map(|_| {
            let s = [rng.gen_range(lo..hi), rng.gen_range(lo..hi)];
            let d = rng.gen_range(d_lo..d_hi);
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let g = [s[0] + d * angle.cos(), s[1] + d * angle.sin()];
            (g[0] >= lo && g[0] <= hi && g[1] >= lo && g[1] <= hi).then_some((s, g))
        }) else {
            continue;
        };
        let mut grid = base_grid.clone();
        let sc = grid.cell_at(start);
        let gc = grid.cell_at(goal);
        grid.clear_around(sc, cfg.clear_radius);
        grid.clear_around(gc, cfg.clear_radius);
        let Ok(cells) = plan_path(&grid, sc, gc, max_span) else {
            continue;
        };
        if cells.len() < 2 {
            continue;
        }
        let boxes = build_corridor(&grid, &cells)?;
        let waypoints: Vec<Vec<f64>> = cells.iter().map(|&c| grid.center(c).to_vec()).collect();
        let durations = allocate_durations(
            &waypoints,
            cfg.speed_fraction * cfg.v_max,
            cfg.accel_fraction * cfg.a_max,
        );
        let zeros = [0.0; 4];
        let rest = |c: Cell| [&grid.center(c)[..], &zeros[..]].concat();
        let inst = ProblemInstance {
            version: FORMAT_VERSION,
            seed,
            rho: density,
            grid_dims: dims,
            cell_size: cfg.cell_size,
            start: rest(sc),
            goal: rest(gc),
            waypoints,
            boxes,
            durations,
            v_max: cfg.v_max,
            a_max: cfg.a_max,
            k_base: None,
        };
        inst.validate()?;
        return Ok((inst, grid));
    }
    Err(ProblemError::Infeasible(format!(
        "no {scale} start/goal pair found for seed {seed} at density {density} after {} attempts",
        cfg.max_attempts
    )))
}
