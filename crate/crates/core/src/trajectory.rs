//! Piecewise-polynomial flat-output trajectories.
//!
//! Every segment is a quintic per axis, written in its local time variable
//! `t ∈ [0, T]` as `σ(t) = c0 + c1 t + … + c5 t^5`. Adjacent segments meet at
//! interfaces where position, velocity and acceleration are shared, and the
//! smoothness cost is the integral of squared jerk.

use thiserror::Error;

/// Continuity order `d`: boundary states carry position, velocity and acceleration.
pub const BOUNDARY_ORDER: usize = 3;

/// Coefficients per axis (`2d`), i.e. a degree-5 polynomial.
pub const NUM_COEFFS: usize = 2 * BOUNDARY_ORDER;

/// Derivative order penalized by the cost (jerk).
pub const COST_ORDER: usize = 3;

/// Number of chords used to tabulate arc length.
pub const ARC_SAMPLES: usize = 64;

/// Per-axis coefficients `c0..c5`.
pub type AxisCoeffs = [f64; NUM_COEFFS];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("time {t} outside segment domain [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("segment duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("boundary state length {got} does not match {expected}")]
    BoundaryLength { expected: usize, got: usize },
    #[error("axis count must be 2 or 3, got {0}")]
    AxisCount(usize),
    #[error("split fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("a trajectory needs at least one segment")]
    Empty,
}

pub type Result<T> = std::result::Result<T, TrajectoryError>;

fn check_axes(axes: usize) -> Result<()> {
    if axes == 2 || axes == 3 {
        Ok(())
    } else {
        Err(TrajectoryError::AxisCount(axes))
    }
}

fn check_duration(duration: f64) -> Result<()> {
    if duration > 0.0 && duration.is_finite() {
        Ok(())
    } else {
        Err(TrajectoryError::InvalidDuration(duration))
    }
}

/// Row `r` such that `r · c` is the `order`-th derivative of the polynomial at `t`.
#[inline]
pub fn basis_row(t: f64, order: usize) -> AxisCoeffs {
    let mut row = [0.0; NUM_COEFFS];
    if order >= NUM_COEFFS {
        return row;
    }
    let mut tp = 1.0;
    for (j, slot) in row.iter_mut().enumerate().skip(order) {
        // j! / (j - order)!
        let mut falling = 1.0;
        for q in 0..order {
            falling *= (j - q) as f64;
        }
        *slot = falling * tp;
        tp *= t;
    }
    row
}

#[inline]
pub(crate) fn dot6(a: &AxisCoeffs, b: &AxisCoeffs) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stacked derivative chain at one endpoint: `[p, v, a]`, each of length `m`.
///
/// Values are stored order-major, so `values[order * m + axis]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryState {
    axes: usize,
    values: Vec<f64>,
}

impl BoundaryState {
    pub fn new(axes: usize, values: Vec<f64>) -> Result<Self> {
        check_axes(axes)?;
        let expected = axes * BOUNDARY_ORDER;
        if values.len() != expected {
            return Err(TrajectoryError::BoundaryLength {
                expected,
                got: values.len(),
            });
        }
        Ok(Self { axes, values })
    }

    pub fn zeros(axes: usize) -> Self {
        Self {
            axes,
            values: vec![0.0; axes * BOUNDARY_ORDER],
        }
    }

    /// A state at rest at `position`.
    pub fn rest(position: &[f64]) -> Self {
        let axes = position.len();
        let mut state = Self::zeros(axes);
        state.values[..axes].copy_from_slice(position);
        state
    }

    pub fn from_derivatives(position: &[f64], velocity: &[f64], acceleration: &[f64]) -> Self {
        let axes = position.len();
        assert!(velocity.len() == axes && acceleration.len() == axes);
        let mut values = Vec::with_capacity(axes * BOUNDARY_ORDER);
        values.extend_from_slice(position);
        values.extend_from_slice(velocity);
        values.extend_from_slice(acceleration);
        Self { axes, values }
    }

    #[inline]
    pub fn axes(&self) -> usize {
        self.axes
    }

    #[inline]
    pub fn get(&self, order: usize, axis: usize) -> f64 {
        self.values[order * self.axes + axis]
    }

    #[inline]
    pub fn set(&mut self, order: usize, axis: usize, value: f64) {
        self.values[order * self.axes + axis] = value;
    }

    pub fn derivative(&self, order: usize) -> &[f64] {
        &self.values[order * self.axes..(order + 1) * self.axes]
    }

    pub fn position(&self) -> &[f64] {
        self.derivative(0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// The three boundary values `[p, v, a]` of a single axis.
    #[inline]
    pub fn axis_chain(&self, axis: usize) -> [f64; BOUNDARY_ORDER] {
        [self.get(0, axis), self.get(1, axis), self.get(2, axis)]
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn is_rest(&self) -> bool {
        self.values[self.axes..].iter().all(|v| *v == 0.0)
    }
}

/// One polynomial piece of the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    coeffs: Vec<AxisCoeffs>,
    duration: f64,
}

impl Segment {
    pub fn new(coeffs: Vec<AxisCoeffs>, duration: f64) -> Result<Self> {
        check_axes(coeffs.len())?;
        check_duration(duration)?;
        Ok(Self { coeffs, duration })
    }

    /// A stationary segment holding `position`.
    pub fn constant(position: &[f64], duration: f64) -> Result<Self> {
        let coeffs = position
            .iter()
            .map(|&p| {
                let mut c = [0.0; NUM_COEFFS];
                c[0] = p;
                c
            })
            .collect();
        Self::new(coeffs, duration)
    }

    #[inline]
    pub fn duration(&self) -> f64 {
        self.duration
    }

    #[inline]
    pub fn axes(&self) -> usize {
        self.coeffs.len()
    }

    #[inline]
    pub fn coeffs(&self) -> &[AxisCoeffs] {
        &self.coeffs
    }

    /// `order`-th time derivative at local time `t`, per axis.
    ///
    /// Orders above the polynomial degree yield the zero vector.
    pub fn evaluate(&self, t: f64, order: usize) -> Result<Vec<f64>> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(TrajectoryError::TimeOutOfRange {
                t,
                duration: self.duration,
            });
        }
        Ok(self.evaluate_unchecked(t, order))
    }

    pub(crate) fn evaluate_unchecked(&self, t: f64, order: usize) -> Vec<f64> {
        let row = basis_row(t, order);
        self.coeffs.iter().map(|c| dot6(c, &row)).collect()
    }

    /// Boundary state at `t`, i.e. position, velocity and acceleration.
    pub fn state_at(&self, t: f64) -> Result<BoundaryState> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(TrajectoryError::TimeOutOfRange {
                t,
                duration: self.duration,
            });
        }
        let axes = self.axes();
        let mut state = BoundaryState::zeros(axes);
        for order in 0..BOUNDARY_ORDER {
            let row = basis_row(t, order);
            for (axis, c) in self.coeffs.iter().enumerate() {
                state.set(order, axis, dot6(c, &row));
            }
        }
        Ok(state)
    }

    pub fn start_state(&self) -> BoundaryState {
        self.state_at(0.0).expect("0 is always in range")
    }

    pub fn end_state(&self) -> BoundaryState {
        self.state_at(self.duration).expect("T is always in range")
    }

    /// Exact `∫_0^T ‖σ'''(t)‖² dt`.
    pub fn jerk_energy(&self) -> f64 {
        let gram = jerk_gram(self.duration);
        self.coeffs
            .iter()
            .map(|c| {
                let mut acc = 0.0;
                for j in COST_ORDER..NUM_COEFFS {
                    for k in COST_ORDER..NUM_COEFFS {
                        acc += c[j] * gram[j][k] * c[k];
                    }
                }
                acc
            })
            .sum::<f64>()
            .max(0.0)
    }

    /// Local time at which the traversed arc length reaches `fraction` of the total.
    ///
    /// Arc length is tabulated with [`ARC_SAMPLES`] uniform chords and
    /// inverted by linear interpolation, so the map is monotone in `fraction`.
    pub fn arc_time(&self, fraction: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(TrajectoryError::FractionOutOfRange(fraction));
        }
        let dt = self.duration / ARC_SAMPLES as f64;
        let mut cumulative = [0.0; ARC_SAMPLES + 1];
        let mut prev = self.evaluate_unchecked(0.0, 0);
        for (j, slot) in cumulative.iter_mut().enumerate().skip(1) {
            let t = if j == ARC_SAMPLES { self.duration } else { j as f64 * dt };
            let next = self.evaluate_unchecked(t, 0);
            let chord = prev
                .iter()
                .zip(&next)
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt();
            *slot = chord;
            prev = next;
        }
        for j in 1..=ARC_SAMPLES {
            cumulative[j] += cumulative[j - 1];
        }
        let total = cumulative[ARC_SAMPLES];
        if total <= 1e-12 {
            return Ok(fraction * self.duration);
        }
        if fraction >= 1.0 {
            return Ok(self.duration);
        }
        let target = fraction * total;
        // first index whose cumulative length reaches the target
        let hi = cumulative.partition_point(|&c| c < target).max(1);
        let lo = hi - 1;
        let span = cumulative[hi] - cumulative[lo];
        let local = if span > 0.0 {
            (target - cumulative[lo]) / span
        } else {
            0.0
        };
        Ok(((lo as f64 + local) * dt).clamp(0.0, self.duration))
    }

    /// `J / T` on a log scale, floored for jerk-free segments.
    pub fn log_energy_density(&self) -> f64 {
        log10_floored(self.jerk_energy() / self.duration)
    }
}

/// Floor applied to logarithmic features of vanishing quantities.
pub const LOG_FLOOR: f64 = -12.0;

#[inline]
pub fn log10_floored(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        x.log10().max(LOG_FLOOR)
    } else if x.is_infinite() && x > 0.0 {
        f64::MAX.log10()
    } else {
        LOG_FLOOR
    }
}

/// Gram matrix of the jerk basis over `[0, T]`: `G[j][k] = ∫ b_j''' b_k''' dt`.
pub fn jerk_gram(duration: f64) -> [[f64; NUM_COEFFS]; NUM_COEFFS] {
    let mut gram = [[0.0; NUM_COEFFS]; NUM_COEFFS];
    let falling = |j: usize| (j * (j - 1) * (j - 2)) as f64;
    for j in COST_ORDER..NUM_COEFFS {
        for k in COST_ORDER..NUM_COEFFS {
            let power = (j + k - 2 * COST_ORDER + 1) as i32;
            gram[j][k] = falling(j) * falling(k) * duration.powi(power) / power as f64;
        }
    }
    gram
}

/// Result of a boundary-value fit.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFit {
    pub segment: Segment,
    /// Set when the boundary system is badly scaled (very short or very long
    /// duration), in which case boundary reproduction loses digits.
    pub ill_conditioned: bool,
}

/// Per-axis min-jerk quintic matching `[p0, v0, a0]` at 0 and `[p1, v1, a1]` at `T`.
pub fn fit_axis(left: [f64; 3], right: [f64; 3], duration: f64) -> AxisCoeffs {
    let [p0, v0, a0] = left;
    let [p1, v1, a1] = right;
    let t = duration;
    let t2 = t * t;
    let t3 = t2 * t;
    let dp = p1 - p0;
    [
        p0,
        v0,
        0.5 * a0,
        (20.0 * dp - (8.0 * v1 + 12.0 * v0) * t - (3.0 * a0 - a1) * t2) / (2.0 * t3),
        (-30.0 * dp + (14.0 * v1 + 16.0 * v0) * t + (3.0 * a0 - 2.0 * a1) * t2) / (2.0 * t3 * t),
        (12.0 * dp - 6.0 * (v1 + v0) * t - (a0 - a1) * t2) / (2.0 * t3 * t2),
    ]
}

/// Min-jerk segment between two boundary states.
///
/// With both endpoint chains pinned the quintic is unique, so it is also the
/// jerk-optimal polynomial among all interpolants of the boundary data.
pub fn fit_boundary(left: &BoundaryState, right: &BoundaryState, duration: f64) -> Result<BoundaryFit> {
    check_duration(duration)?;
    if left.axes() != right.axes() {
        return Err(TrajectoryError::BoundaryLength {
            expected: left.as_slice().len(),
            got: right.as_slice().len(),
        });
    }
    let coeffs = (0..left.axes())
        .map(|axis| fit_axis(left.axis_chain(axis), right.axis_chain(axis), duration))
        .collect();
    // The boundary matrix scales like T^5 in its extreme entries.
    let spread = duration.max(1.0 / duration).powi(5);
    Ok(BoundaryFit {
        segment: Segment::new(coeffs, duration)?,
        ill_conditioned: spread > 1e12,
    })
}

/// Convenience wrapper around [`Segment::evaluate`].
pub fn evaluate(seg: &Segment, t: f64, order: usize) -> Result<Vec<f64>> {
    seg.evaluate(t, order)
}

/// Convenience wrapper around [`Segment::jerk_energy`].
pub fn jerk_energy(seg: &Segment) -> f64 {
    seg.jerk_energy()
}

/// Convenience wrapper around [`Segment::arc_time`].
pub fn arc_time(seg: &Segment, fraction: f64) -> Result<f64> {
    seg.arc_time(fraction)
}

/// Ordered sequence of segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    segments: Vec<Segment>,
    consistent: bool,
}

impl Trajectory {
    pub fn new(segments: Vec<Segment>, consistent: bool) -> Result<Self> {
        if segments.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        Ok(Self { segments, consistent })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Whether interface continuity through acceleration is expected to hold.
    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    pub fn jerk_energy(&self) -> f64 {
        self.segments.iter().map(Segment::jerk_energy).sum()
    }

    /// Largest mismatch of the derivative chains across interior interfaces.
    pub fn max_continuity_gap(&self) -> f64 {
        self.segments
            .windows(2)
            .map(|pair| {
                let a = pair[0].end_state();
                let b = pair[1].start_state();
                a.as_slice()
                    .iter()
                    .zip(b.as_slice())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}
