use serde::{Deserialize, Serialize};

use super::noise::GradientNoise;
use super::{ProblemError, Result};

/// Largest supported obstacle density.
pub const MAX_DENSITY: f64 = 0.6;

/// Noise lattice period of the coarsest octave, in cells.
const NOISE_PERIOD: f64 = 24.0;
const NOISE_OCTAVES: usize = 3;

/// Integer cell coordinate `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// Two-dimensional occupancy grid stored as a packed bitset, row-major in `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    dims: [usize; 2],
    cell_size: f64,
    bits: Vec<u64>,
    seed: u64,
    density: f64,
}

impl OccupancyGrid {
    pub fn empty(dims: [usize; 2], cell_size: f64) -> Self {
        let words = (dims[0] * dims[1]).div_ceil(64);
        Self {
            dims,
            cell_size,
            bits: vec![0; words],
            seed: 0,
            density: 0.0,
        }
    }

    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Requested density, as opposed to [`OccupancyGrid::occupied_fraction`].
    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn num_cells(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.y * self.dims[0] + cell.x
    }

    #[inline]
    pub fn cell_of(&self, index: usize) -> Cell {
        Cell::new(index % self.dims[0], index / self.dims[0])
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.dims[0] && (y as usize) < self.dims[1]
    }

    #[inline]
    pub fn is_occupied(&self, cell: Cell) -> bool {
        let i = self.index(cell);
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn is_free(&self, cell: Cell) -> bool {
        !self.is_occupied(cell)
    }

    pub fn set(&mut self, cell: Cell, occupied: bool) {
        let i = self.index(cell);
        if occupied {
            self.bits[i / 64] |= 1 << (i % 64);
        } else {
            self.bits[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.occupied_count() as f64 / self.num_cells() as f64
    }

    /// Frees every cell within Chebyshev distance `radius` of `center`.
    pub fn clear_around(&mut self, center: Cell, radius: usize) {
        let x0 = center.x.saturating_sub(radius);
        let y0 = center.y.saturating_sub(radius);
        let x1 = (center.x + radius).min(self.dims[0] - 1);
        let y1 = (center.y + radius).min(self.dims[1] - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                self.set(Cell::new(x, y), false);
            }
        }
    }

    /// Whether every cell of the inclusive rectangle `[lo, hi]` is free.
    pub fn rect_free(&self, lo: Cell, hi: Cell) -> bool {
        (lo.y..=hi.y).all(|y| (lo.x..=hi.x).all(|x| self.is_free(Cell::new(x, y))))
    }

    /// Metric coordinates of a cell center.
    pub fn center(&self, cell: Cell) -> [f64; 2] {
        [
            (cell.x as f64 + 0.5) * self.cell_size,
            (cell.y as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Cell containing a metric point (clamped to the grid).
    pub fn cell_at(&self, point: [f64; 2]) -> Cell {
        let clamp = |v: f64, n: usize| ((v / self.cell_size).floor().max(0.0) as usize).min(n - 1);
        Cell::new(clamp(point[0], self.dims[0]), clamp(point[1], self.dims[1]))
    }
}

/// Builds a grid whose occupied cells are the `round(ρ·cells)` highest values of
/// a fractal gradient-noise field.
pub fn generate_grid(seed: u64, density: f64, dims: [usize; 2], cell_size: f64) -> Result<OccupancyGrid> {
    if !(0.0..=MAX_DENSITY).contains(&density) {
        return Err(ProblemError::Density(density));
    }
    if dims[0] == 0 || dims[1] == 0 || !(cell_size > 0.0) {
        return Err(ProblemError::Config(format!("bad grid shape {dims:?} x {cell_size}")));
    }
    let mut grid = OccupancyGrid::empty(dims, cell_size);
    grid.seed = seed;
    grid.density = density;
    let total = grid.num_cells();
    let target = (density * total as f64).round() as usize;
    if target == 0 {
        return Ok(grid);
    }

    let noise = GradientNoise::new(seed);
    let field: Vec<f64> = (0..total)
        .map(|i| {
            let c = grid.cell_of(i);
            noise.fractal(
                (c.x as f64 + 0.5) / NOISE_PERIOD,
                (c.y as f64 + 0.5) / NOISE_PERIOD,
                NOISE_OCTAVES,
            )
        })
        .collect();
    // Order statistics pick exactly `target` cells; ties broken by index.
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_unstable_by(|&a, &b| field[b].total_cmp(&field[a]).then(a.cmp(&b)));
    for &i in &order[..target] {
        let c = grid.cell_of(i);
        grid.set(c, true);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_density_is_empty() {
        let g = generate_grid(3, 0.0, [64, 64], 0.25).unwrap();
        assert_eq!(g.occupied_count(), 0);
    }

    #[test]
    fn density_hits_target_and_is_deterministic() {
        for seed in 0..5 {
            let g = generate_grid(seed, 0.2, [96, 80], 0.25).unwrap();
            let counted = (0..80)
                .flat_map(|y| (0..96).map(move |x| Cell::new(x, y)))
                .filter(|&c| g.is_occupied(c))
                .count();
            let frac = counted as f64 / (96.0 * 80.0);
            assert!((0.18..=0.22).contains(&frac), "{frac}");
            assert_eq!(g, generate_grid(seed, 0.2, [96, 80], 0.25).unwrap());
        }
    }

    #[test]
    fn rejects_bad_density() {
        assert!(generate_grid(0, 0.61, [8, 8], 0.25).is_err());
        assert!(generate_grid(0, -0.1, [8, 8], 0.25).is_err());
    }

    #[test]
    fn bit_access_and_clearing() {
        let mut g = OccupancyGrid::empty([10, 7], 0.5);
        g.set(Cell::new(9, 6), true);
        g.set(Cell::new(3, 2), true);
        assert!(g.is_occupied(Cell::new(9, 6)));
        assert_eq!(g.occupied_count(), 2);
        g.clear_around(Cell::new(4, 3), 1);
        assert!(g.is_free(Cell::new(3, 2)));
        assert!(!g.rect_free(Cell::new(8, 5), Cell::new(9, 6)));
        assert_eq!(g.cell_at(g.center(Cell::new(5, 4))), Cell::new(5, 4));
    }
}
