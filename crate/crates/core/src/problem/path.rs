use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::grid::{Cell, OccupancyGrid};
use super::{ProblemError, Result};

/// Integer step costs keep the search exactly reproducible.
pub const STRAIGHT_COST: u64 = 1_000_000;
pub const DIAGONAL_COST: u64 = 1_414_214;

const NEIGHBORS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Octile distance in integer cost units.
pub fn octile(a: Cell, b: Cell) -> u64 {
    let dx = a.x.abs_diff(b.x) as u64;
    let dy = a.y.abs_diff(b.y) as u64;
    let (lo, hi) = (dx.min(dy), dx.max(dy));
    STRAIGHT_COST * (hi - lo) + DIAGONAL_COST * lo
}

/// Free neighbors of `cell` with their step costs. Diagonal moves require both
/// adjacent orthogonal cells to be free, so paths never cut obstacle corners.
pub fn neighbors(grid: &OccupancyGrid, cell: Cell) -> impl Iterator<Item = (Cell, u64)> + '_ {
    NEIGHBORS.iter().filter_map(move |&(dx, dy)| {
        let nx = cell.x as i64 + dx;
        let ny = cell.y as i64 + dy;
        if !grid.in_bounds(nx, ny) {
            return None;
        }
        let next = Cell::new(nx as usize, ny as usize);
        if grid.is_occupied(next) {
            return None;
        }
        if dx != 0 && dy != 0 {
            let side_a = Cell::new(nx as usize, cell.y);
            let side_b = Cell::new(cell.x, ny as usize);
            if grid.is_occupied(side_a) || grid.is_occupied(side_b) {
                return None;
            }
            Some((next, DIAGONAL_COST))
        } else {
            Some((next, STRAIGHT_COST))
        }
    })
}

/// Shortest 8-connected cell path with its cost. Equal-priority entries are
/// expanded in cell-index order.
pub fn astar(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Result<(Vec<Cell>, u64)> {
    for c in [start, goal] {
        if !grid.in_bounds(c.x as i64, c.y as i64) || grid.is_occupied(c) {
            return Err(ProblemError::Infeasible(format!("endpoint {c:?} is blocked")));
        }
    }
    let n = grid.num_cells();
    let mut cost = vec![u64::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let s = grid.index(start);
    let g = grid.index(goal);
    cost[s] = 0;
    open.push(Reverse((octile(start, goal), s)));
    while let Some(Reverse((_, idx))) = open.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if idx == g {
            let mut path = vec![goal];
            let mut cur = idx;
            while cur != s {
                cur = parent[cur];
                path.push(grid.cell_of(cur));
            }
            path.reverse();
            return Ok((path, cost[g]));
        }
        let cell = grid.cell_of(idx);
        for (next, step) in neighbors(grid, cell) {
            let j = grid.index(next);
            let candidate = cost[idx] + step;
            if candidate < cost[j] {
                cost[j] = candidate;
                parent[j] = idx;
                open.push(Reverse((candidate + octile(next, goal), j)));
            }
        }
    }
    Err(ProblemError::Infeasible(format!("no path from {start:?} to {goal:?}")))
}

/// Two cells see each other when the cell rectangle they span is entirely free.
/// This is stricter than a ray test and makes every pair's bounding box a
/// valid corridor seed.
pub fn visible(grid: &OccupancyGrid, a: Cell, b: Cell) -> bool {
    let lo = Cell::new(a.x.min(b.x), a.y.min(b.y));
    let hi = Cell::new(a.x.max(b.x), a.y.max(b.y));
    grid.rect_free(lo, hi)
}

/// Greedy pruning: from each kept cell, jump to the farthest later path cell
/// that is still visible (and within `max_span` cells on both axes).
pub fn prune(grid: &OccupancyGrid, path: &[Cell], max_span: usize) -> Vec<Cell> {
    let Some(&first) = path.first() else {
        return Vec::new();
    };
    let mut out = vec![first];
    let mut i = 0;
    while i + 1 < path.len() {
        let mut best = i + 1;
        for j in (i + 2)..path.len() {
            let span_ok = path[i].x.abs_diff(path[j].x) <= max_span && path[i].y.abs_diff(path[j].y) <= max_span;
            if span_ok && visible(grid, path[i], path[j]) {
                best = j;
            } else {
                break;
            }
        }
        out.push(path[best]);
        i = best;
    }
    out
}

/// A* followed by pruning; `start == goal` yields a single waypoint.
pub fn plan_path(grid: &OccupancyGrid, start: Cell, goal: Cell, max_span: usize) -> Result<Vec<Cell>> {
    let (path, _) = astar(grid, start, goal)?;
    Ok(prune(grid, &path, max_span))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    /// Breadth-first hop distances under the same move rules.
    fn bfs_hops(grid: &OccupancyGrid, start: Cell) -> Vec<Option<usize>> {
        let mut dist = vec![None; grid.num_cells()];
        dist[grid.index(start)] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            let d = dist[grid.index(c)].unwrap();
            for (n, _) in neighbors(grid, c) {
                if dist[grid.index(n)].is_none() {
                    dist[grid.index(n)] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Plain Dijkstra with the same integer costs.
    fn dijkstra(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Option<u64> {
        let mut cost = vec![u64::MAX; grid.num_cells()];
        let mut heap = BinaryHeap::new();
        cost[grid.index(start)] = 0;
        heap.push(Reverse((0u64, grid.index(start))));
        while let Some(Reverse((c, i))) = heap.pop() {
            if c > cost[i] {
                continue;
            }
            for (n, step) in neighbors(grid, grid.cell_of(i)) {
                let j = grid.index(n);
                if c + step < cost[j] {
                    cost[j] = c + step;
                    heap.push(Reverse((c + step, j)));
                }
            }
        }
        let c = cost[grid.index(goal)];
        (c != u64::MAX).then_some(c)
    }

    fn path_is_connected(grid: &OccupancyGrid, path: &[Cell]) -> bool {
        path.windows(2)
            .all(|w| neighbors(grid, w[0]).any(|(n, _)| n == w[1]))
    }

    #[test]
    fn straight_line_on_empty_grid() {
        let g = OccupancyGrid::empty([30, 30], 0.25);
        let wp = plan_path(&g, Cell::new(2, 5), Cell::new(25, 5), 64).unwrap();
        assert_eq!(wp, vec![Cell::new(2, 5), Cell::new(25, 5)]);
    }

    #[test]
    fn start_equals_goal() {
        let g = OccupancyGrid::empty([10, 10], 0.25);
        let wp = plan_path(&g, Cell::new(4, 4), Cell::new(4, 4), 64).unwrap();
        assert_eq!(wp, vec![Cell::new(4, 4)]);
    }

    #[test]
    fn wall_with_single_gap() {
        let mut g = OccupancyGrid::empty([21, 21], 0.25);
        for y in 0..21 {
            if y != 3 {
                g.set(Cell::new(10, y), true);
            }
        }
        let start = Cell::new(2, 15);
        let goal = Cell::new(18, 15);
        let (path, cost) = astar(&g, start, goal).unwrap();
        assert!(path.contains(&Cell::new(10, 3)));
        assert!(path_is_connected(&g, &path));
        // the gap is the only passage: BFS from either side must meet there
        let from_start = bfs_hops(&g, start);
        let from_goal = bfs_hops(&g, goal);
        let gap = g.index(Cell::new(10, 3));
        assert!(from_start[gap].is_some() && from_goal[gap].is_some());
        let mut blocked = g.clone();
        blocked.set(Cell::new(10, 3), true);
        assert!(bfs_hops(&blocked, start)[g.index(goal)].is_none());
        assert!(astar(&blocked, start, goal).is_err());
        assert_eq!(Some(cost), dijkstra(&g, start, goal));
    }

    #[test]
    fn matches_dijkstra_on_noise_grids() {
        for seed in 0..6 {
            let g = super::super::grid::generate_grid(seed, 0.25, [48, 48], 0.25).unwrap();
            let free: Vec<Cell> = (0..g.num_cells()).map(|i| g.cell_of(i)).filter(|&c| g.is_free(c)).collect();
            let a = free[seed as usize * 7 % free.len()];
            let b = free[free.len() - 1 - seed as usize * 13 % free.len()];
            match astar(&g, a, b) {
                Ok((path, cost)) => {
                    assert_eq!(Some(cost), dijkstra(&g, a, b));
                    assert!(path_is_connected(&g, &path));
                    let wp = prune(&g, &path, 64);
                    assert_eq!(wp.first(), Some(&a));
                    assert_eq!(wp.last(), Some(&b));
                    assert!(wp.windows(2).all(|w| visible(&g, w[0], w[1])));
                }
                Err(_) => assert!(dijkstra(&g, a, b).is_none()),
            }
        }
    }

    #[test]
    fn span_cap_subdivides() {
        let g = OccupancyGrid::empty([40, 5], 0.25);
        let wp = plan_path(&g, Cell::new(0, 2), Cell::new(39, 2), 10).unwrap();
        assert_eq!(wp.len(), 5);
        assert!(wp.windows(2).all(|w| w[0].x.abs_diff(w[1].x) <= 10));
    }
}
