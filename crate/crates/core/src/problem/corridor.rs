use crate::geometry::CorridorBox;

use super::grid::{Cell, OccupancyGrid};
use super::path::visible;
use super::{ProblemError, Result};

/// Maximum outward growth of each box face, in cells.
pub const INFLATION_CAP: usize = 5;

/// Inclusive cell rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub lo: Cell,
    pub hi: Cell,
}

impl CellRect {
    pub fn spanning(a: Cell, b: Cell) -> Self {
        Self {
            lo: Cell::new(a.x.min(b.x), a.y.min(b.y)),
            hi: Cell::new(a.x.max(b.x), a.y.max(b.y)),
        }
    }

    /// Metric box covering the rectangle's cells.
    pub fn to_box(self, cell_size: f64) -> CorridorBox {
        CorridorBox::new(
            vec![self.lo.x as f64 * cell_size, self.lo.y as f64 * cell_size],
            vec![(self.hi.x + 1) as f64 * cell_size, (self.hi.y + 1) as f64 * cell_size],
        )
    }
}

/// Grows `rect` one cell at a time on each face (in the order −x, +x, −y, +y)
/// until that face meets an occupied cell, the grid edge, or the cap.
pub fn inflate(grid: &OccupancyGrid, mut rect: CellRect, cap: usize) -> CellRect {
    let [nx, ny] = grid.dims();
    let mut grown = [0usize; 4];
    let mut open = [true; 4];
    while open.iter().any(|&o| o) {
        for face in 0..4 {
            if !open[face] {
                continue;
            }
            if grown[face] == cap {
                open[face] = false;
                continue;
            }
            let candidate = match face {
                0 if rect.lo.x > 0 => Some(CellRect {
                    lo: Cell::new(rect.lo.x - 1, rect.lo.y),
                    hi: Cell::new(rect.lo.x - 1, rect.hi.y),
                }),
                1 if rect.hi.x + 1 < nx => Some(CellRect {
                    lo: Cell::new(rect.hi.x + 1, rect.lo.y),
                    hi: Cell::new(rect.hi.x + 1, rect.hi.y),
                }),
                2 if rect.lo.y > 0 => Some(CellRect {
                    lo: Cell::new(rect.lo.x, rect.lo.y - 1),
                    hi: Cell::new(rect.hi.x, rect.lo.y - 1),
                }),
                3 if rect.hi.y + 1 < ny => Some(CellRect {
                    lo: Cell::new(rect.lo.x, rect.hi.y + 1),
                    hi: Cell::new(rect.hi.x, rect.hi.y + 1),
                }),
                _ => None,
            };
            match candidate {
                Some(strip) if grid.rect_free(strip.lo, strip.hi) => {
                    match face {
                        0 => rect.lo.x -= 1,
                        1 => rect.hi.x += 1,
                        2 => rect.lo.y -= 1,
                        _ => rect.hi.y += 1,
                    }
                    grown[face] += 1;
                }
                _ => open[face] = false,
            }
        }
    }
    rect
}

/// One inflated box per consecutive waypoint pair, in cell units.
pub fn build_corridor_cells(grid: &OccupancyGrid, waypoints: &[Cell]) -> Result<Vec<CellRect>> {
    waypoints
        .windows(2)
        .map(|w| {
            if !visible(grid, w[0], w[1]) {
                return Err(ProblemError::Infeasible(format!(
                    "waypoints {:?} and {:?} are not mutually visible",
                    w[0], w[1]
                )));
            }
            Ok(inflate(grid, CellRect::spanning(w[0], w[1]), INFLATION_CAP))
        })
        .collect()
}

/// Metric corridor boxes for consecutive waypoint pairs.
pub fn build_corridor(grid: &OccupancyGrid, waypoints: &[Cell]) -> Result<Vec<CorridorBox>> {
    Ok(build_corridor_cells(grid, waypoints)?
        .into_iter()
        .map(|r| r.to_box(grid.cell_size()))
        .collect())
}

/// Exhaustive check that no occupied cell overlaps the interior of any box.
pub fn corridor_is_safe(grid: &OccupancyGrid, boxes: &[CorridorBox]) -> bool {
    let cs = grid.cell_size();
    let [nx, ny] = grid.dims();
    boxes.iter().all(|b| {
        (0..ny).all(|y| {
            (0..nx).all(|x| {
                let overlaps = (x as f64 * cs) < b.hi[0]
                    && ((x + 1) as f64 * cs) > b.lo[0]
                    && (y as f64 * cs) < b.hi[1]
                    && ((y + 1) as f64 * cs) > b.lo[1];
                !overlaps || grid.is_free(Cell::new(x, y))
            })
        })
    })
}
