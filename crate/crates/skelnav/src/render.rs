//! Portable-image renders: map layers as PGM, overlays and trajectories as
//! PPM, each with a JSON sidecar carrying the grid frame. All output bytes
//! are pure functions of the rendered state.

use std::io::Write;
use std::path::Path;

use crate::grid::{Cell, Dims};
use crate::mapping::{CellState, OccupancyGrid, ValueMap};
use crate::skeleton::{PixelKind, SkeletonMask};
use crate::ssmg::Ssmg;

pub type Rgb = [u8; 3];

const COL_FREE: Rgb = [255, 255, 255];
const COL_OCCUPIED: Rgb = [20, 20, 20];
const COL_UNKNOWN: Rgb = [127, 127, 127];
const COL_SKELETON: Rgb = [40, 160, 40];
const COL_ENDPOINT: Rgb = [40, 80, 240];
const COL_JUNCTION: Rgb = [220, 40, 40];
const COL_OBJECT: Rgb = [240, 180, 40];
const COL_START: Rgb = [0, 200, 0];
const COL_GOALPT: Rgb = [200, 0, 200];

/// Binary PGM (P5) with optional header comments.
pub fn write_pgm(
    path: &Path,
    width: i32,
    height: i32,
    pixels: &[u8],
    comments: &[String],
) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    write!(f, "P5\n")?;
    for c in comments {
        writeln!(f, "# {c}")?;
    }
    write!(f, "{width} {height}\n255\n")?;
    f.write_all(pixels)
}

/// Binary PPM (P6) with optional header comments.
pub fn write_ppm(
    path: &Path,
    width: i32,
    height: i32,
    pixels: &[Rgb],
    comments: &[String],
) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    write!(f, "P6\n")?;
    for c in comments {
        writeln!(f, "# {c}")?;
    }
    write!(f, "{width} {height}\n255\n")?;
    let flat: Vec<u8> = pixels.iter().flatten().copied().collect();
    f.write_all(&flat)
}

/// Grid-frame sidecar next to an image.
pub fn write_meta(path: &Path, dims: Dims) -> std::io::Result<()> {
    let meta = serde_json::json!({
        "width": dims.width,
        "height": dims.height,
        "resolution_m": dims.resolution,
        "origin_m": [0.0, 0.0],
    });
    std::fs::write(path, serde_json::to_string_pretty(&meta).unwrap())
}

pub fn occupancy_pixels(grid: &OccupancyGrid) -> Vec<u8> {
    grid.cells
        .iter()
        .map(|s| match s {
            CellState::Free => 255u8,
            CellState::Occupied => 0,
            CellState::Unknown => 127,
        })
        .collect()
}

/// Value layer shaded by value; unobserved cells render black.
pub fn value_pixels(vmap: &ValueMap) -> Vec<u8> {
    vmap.value
        .iter()
        .zip(&vmap.confidence)
        .map(|(v, c)| {
            if *c > 0.0 {
                (v.clamp(0.0, 1.0) * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect()
}

fn base_rgb(grid: &OccupancyGrid) -> Vec<Rgb> {
    grid.cells
        .iter()
        .map(|s| match s {
            CellState::Free => COL_FREE,
            CellState::Occupied => COL_OCCUPIED,
            CellState::Unknown => COL_UNKNOWN,
        })
        .collect()
}

fn paint(pixels: &mut [Rgb], dims: Dims, c: Cell, color: Rgb) {
    if dims.contains(c) {
        pixels[dims.idx(c)] = color;
    }
}

/// Occupancy base with the skeleton mask and node kinds painted over it.
pub fn skeleton_overlay(grid: &OccupancyGrid, mask: &SkeletonMask, ssmg: &Ssmg) -> Vec<Rgb> {
    let dims = grid.dims;
    let mut pixels = base_rgb(grid);
    for c in mask.set_pixels() {
        paint(&mut pixels, dims, c, COL_SKELETON);
    }
    for node in &ssmg.nodes {
        let color = match node.kind {
            PixelKind::Endpoint => COL_ENDPOINT,
            PixelKind::Junction => COL_JUNCTION,
            PixelKind::Connector => COL_SKELETON,
        };
        paint(&mut pixels, dims, node.cell, color);
    }
    pixels
}

/// Memory-graph overlay: skeleton edges, node kinds, and attached-object
/// cells.
pub fn ssmg_overlay(grid: &OccupancyGrid, ssmg: &Ssmg, omap: &crate::mapping::ObjectMap) -> Vec<Rgb> {
    let dims = grid.dims;
    let mut pixels = base_rgb(grid);
    for edge in &ssmg.edges {
        for &c in &edge.chain {
            paint(&mut pixels, dims, c, COL_SKELETON);
        }
    }
    for rec in omap.records.values() {
        for &c in &rec.footprint {
            paint(&mut pixels, dims, c, COL_OBJECT);
        }
    }
    for node in &ssmg.nodes {
        let color = match node.kind {
            PixelKind::Endpoint => COL_ENDPOINT,
            PixelKind::Junction => COL_JUNCTION,
            PixelKind::Connector => COL_SKELETON,
        };
        paint(&mut pixels, dims, node.cell, color);
    }
    pixels
}

/// Ground-truth base with one subtask's pose trace painted as a ramp from
/// start (green) to the final pose (magenta).
pub fn trajectory_overlay(
    world: &crate::sim::WorldMap,
    trace: &[(f64, f64)],
) -> Vec<Rgb> {
    let dims = world.dims;
    let mut pixels: Vec<Rgb> = world
        .cells
        .iter()
        .map(|s| match s {
            crate::sim::GtCell::FreeGt => COL_FREE,
            crate::sim::GtCell::OccupiedGt => COL_OCCUPIED,
        })
        .collect();
    for obj in &world.objects {
        for &c in &obj.footprint {
            paint(&mut pixels, dims, c, COL_OBJECT);
        }
    }
    let n = trace.len().max(2) as f64;
    for (i, &(x, y)) in trace.iter().enumerate() {
        let t = i as f64 / (n - 1.0);
        let color = [
            (60.0 + 160.0 * t) as u8,
            (60.0 + 60.0 * (1.0 - t)) as u8,
            (220.0 * t) as u8,
        ];
        paint(&mut pixels, dims, dims.cell_of(crate::grid::Point::new(x, y)), color);
    }
    if let Some(&(x, y)) = trace.first() {
        paint(&mut pixels, dims, dims.cell_of(crate::grid::Point::new(x, y)), COL_START);
    }
    if let Some(&(x, y)) = trace.last() {
        paint(&mut pixels, dims, dims.cell_of(crate::grid::Point::new(x, y)), COL_GOALPT);
    }
    pixels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::plus_grid;

    #[test]
    fn pgm_bytes_are_deterministic() {
        let grid = plus_grid();
        let dir = std::env::temp_dir().join("skelnav-render-test");
        std::fs::create_dir_all(&dir).unwrap();
        let a = dir.join("a.pgm");
        let b = dir.join("b.pgm");
        let px = occupancy_pixels(&grid);
        write_pgm(&a, grid.dims.width, grid.dims.height, &px, &[]).unwrap();
        write_pgm(&b, grid.dims.width, grid.dims.height, &px, &[]).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let bytes = std::fs::read(&a).unwrap();
        assert!(bytes.starts_with(b"P5\n15 15\n255\n"));
    }

    #[test]
    fn overlay_paints_node_kinds() {
        let grid = plus_grid();
        let mask = crate::skeleton::thin(&grid).unwrap();
        let graph = crate::skeleton::extract_graph(&mask);
        let ssmg = crate::ssmg::attach_objects(&graph, &crate::mapping::ObjectMap::new(0.25));
        let px = skeleton_overlay(&grid, &mask, &ssmg);
        assert!(px.iter().any(|p| *p == COL_ENDPOINT));
        assert!(px.iter().any(|p| *p == COL_JUNCTION));
        assert!(px.iter().any(|p| *p == COL_SKELETON));
    }
}
