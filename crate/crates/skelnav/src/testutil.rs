//! Shared test fixtures.

use crate::grid::Dims;
use crate::mapping::{CellState, OccupancyGrid};

/// Occupancy grid from ascii rows: `.` free, `#` occupied, anything else
/// unknown.
pub(crate) fn grid_from_rows(rows: &[&str]) -> OccupancyGrid {
    let dims = Dims::new(rows[0].len() as i32, rows.len() as i32, 0.25);
    let mut cells = Vec::with_capacity(dims.cell_count());
    for row in rows {
        for ch in row.chars() {
            cells.push(match ch {
                '.' => CellState::Free,
                '#' => CellState::Occupied,
                _ => CellState::Unknown,
            });
        }
    }
    OccupancyGrid::from_labels(dims, cells)
}

/// 15x15 plus-shaped corridor pair: two 3-wide corridors crossing at the
/// center. Thins to four endpoint arms meeting at one junction.
pub(crate) fn plus_grid() -> OccupancyGrid {
    let mut rows = Vec::new();
    for y in 0..15 {
        let mut row = String::new();
        for x in 0..15 {
            let in_h = (6..9).contains(&y);
            let in_v = (6..9).contains(&x);
            row.push(if in_h || in_v { '.' } else { '#' });
        }
        rows.push(row);
    }
    let refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
    grid_from_rows(&refs)
}
