//! Agent-inflated occupancy grid over the floor.

use std::collections::VecDeque;

use super::hull::{convex_hull, distance_outside};
use crate::{par, Vec2};

/// Floor cells, row-major with x fastest. A cell is occupied when its
/// center lies within the agent radius of any object footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub origin: Vec2,
    pub cell: f64,
    pub dims: [usize; 2],
    pub occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64 + 0.5, j as f64 + 0.5) * self.cell
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.dims[0] * j
    }

    /// Cells whose center is within `radius` of the convex hull of `points`.
    pub fn footprint_mask(&self, points: &[Vec2], radius: f64) -> Vec<bool> {
        let hull = convex_hull(points);
        let rows = par::map_range(self.dims[1], |j| {
            (0..self.dims[0]).map(|i| distance_outside(&hull, &self.center(i, j)) <= radius).collect::<Vec<bool>>()
        });
        rows.concat()
    }

    /// 4-connected components of free cells, as a label per cell
    /// (`usize::MAX` for occupied) and the size of each component.
    pub fn free_components(&self) -> (Vec<usize>, Vec<usize>) {
        let [nx, ny] = self.dims;
        let mut label = vec![usize::MAX; nx * ny];
        let mut sizes = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..nx * ny {
            if self.occupied[start] || label[start] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            let mut size = 0;
            label[start] = id;
            queue.push_back(start);
            while let Some(c) = queue.pop_front() {
                size += 1;
                let (i, j) = (c % nx, c / nx);
                let mut visit = |ni: usize, nj: usize| {
                    let n = ni + nx * nj;
                    if !self.occupied[n] && label[n] == usize::MAX {
                        label[n] = id;
                        queue.push_back(n);
                    }
                };
                if i > 0 {
                    visit(i - 1, j);
                }
                if i + 1 < nx {
                    visit(i + 1, j);
                }
                if j > 0 {
                    visit(i, j - 1);
                }
                if j + 1 < ny {
                    visit(i, j + 1);
                }
            }
            sizes.push(size);
        }
        (label, sizes)
    }
}
