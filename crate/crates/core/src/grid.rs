//! Masked uniform 2D grids.
//!
//! A [`Grid2D`] is a rectangular array of `nx * ny` cells of size `hx * hy`
//! together with a boolean mask selecting the cells that belong to the
//! computational domain. Active cells are numbered `0..N` in row-major order
//! (`j` outer, `i` inner). The domain boundary is never stored explicitly:
//! any face between an active cell and an inactive or out-of-bounds cell is a
//! boundary face, and the flux operators simply omit it.

use crate::error::{Error, Result};

/// An interior face shared by two active cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    /// Active index of the cell on the low side (west or south).
    pub lo: usize,
    /// Active index of the cell on the high side (east or north).
    pub hi: usize,
    /// `1 / h^2` for the direction normal to the face.
    pub inv_h2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    mask: Vec<bool>,
    active_index: Vec<Option<usize>>,
    cells: Vec<(usize, usize)>,
    faces: Vec<Face>,
}

/// Build a grid from a row-major mask (`mask[j][i]`, `ny` rows of `nx` entries).
pub fn build_grid(mask_bitmap: &[Vec<bool>], hx: f64, hy: f64) -> Result<Grid2D> {
    let ny = mask_bitmap.len();
    let nx = mask_bitmap.first().map_or(0, Vec::len);
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidGrid(
            "mask dimensions must be at least 1x1".into(),
        ));
    }
    if mask_bitmap.iter().any(|row| row.len() != nx) {
        return Err(Error::InvalidGrid("mask rows have unequal lengths".into()));
    }
    let flat: Vec<bool> = mask_bitmap.iter().flatten().copied().collect();
    Grid2D::from_flat_mask(nx, ny, hx, hy, flat)
}

impl Grid2D {
    /// Build a grid from a flat row-major mask of length `nx * ny`.
    pub fn from_flat_mask(nx: usize, ny: usize, hx: f64, hy: f64, mask: Vec<bool>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid(
                "mask dimensions must be at least 1x1".into(),
            ));
        }
        if !(hx > 0.0 && hx.is_finite() && hy > 0.0 && hy.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "cell spacings must be positive and finite (hx = {hx}, hy = {hy})"
            )));
        }
        if mask.len() != nx * ny {
            return Err(Error::InvalidGrid(format!(
                "mask has {} entries, expected {}",
                mask.len(),
                nx * ny
            )));
        }

        let mut active_index = vec![None; nx * ny];
        let mut cells = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if mask[j * nx + i] {
                    active_index[j * nx + i] = Some(cells.len());
                    cells.push((i, j));
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::EmptyDomain);
        }

        let (wx, wy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
        let mut faces = Vec::new();
        for (a, &(i, j)) in cells.iter().enumerate() {
            if i + 1 < nx {
                if let Some(b) = active_index[j * nx + i + 1] {
                    faces.push(Face {
                        lo: a,
                        hi: b,
                        inv_h2: wx,
                    });
                }
            }
            if j + 1 < ny {
                if let Some(b) = active_index[(j + 1) * nx + i] {
                    faces.push(Face {
                        lo: a,
                        hi: b,
                        inv_h2: wy,
                    });
                }
            }
        }

        Ok(Grid2D {
            nx,
            ny,
            hx,
            hy,
            mask,
            active_index,
            cells,
            faces,
        })
    }

    /// Full rectangular grid (every cell active).
    pub fn square(nx: usize, ny: usize, hx: f64, hy: f64) -> Result<Self> {
        Self::from_flat_mask(nx, ny, hx, hy, vec![true; nx * ny])
    }

    /// Disk of `radius` cells centered on the middle of the grid. A cell is
    /// active when its center lies within `radius` cell widths of the middle.
    pub fn disk(nx: usize, ny: usize, radius: f64, hx: f64, hy: f64) -> Result<Self> {
        let (cx, cy) = (nx as f64 / 2.0, ny as f64 / 2.0);
        let mask = (0..ny)
            .flat_map(|j| {
                (0..nx).map(move |i| {
                    let dx = i as f64 + 0.5 - cx;
                    let dy = j as f64 + 0.5 - cy;
                    dx * dx + dy * dy <= radius * radius
                })
            })
            .collect();
        Self::from_flat_mask(nx, ny, hx, hy, mask)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    /// Area of one cell.
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Number of active cells.
    pub fn num_active(&self) -> usize {
        self.cells.len()
    }

    /// Measure of the masked domain.
    pub fn area(&self) -> f64 {
        self.num_active() as f64 * self.cell_area()
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        i < self.nx && j < self.ny && self.mask[j * self.nx + i]
    }

    /// Row-major mask, `nx * ny` entries.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Active index of cell `(i, j)`, if it is inside the domain.
    pub fn active_index(&self, i: usize, j: usize) -> Option<usize> {
        if i < self.nx && j < self.ny {
            self.active_index[j * self.nx + i]
        } else {
            None
        }
    }

    /// `(i, j)` position of an active cell.
    pub fn cell(&self, k: usize) -> (usize, usize) {
        self.cells[k]
    }

    /// Physical center of an active cell, with the grid origin at the lower-left corner.
    pub fn cell_center(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.cells[k];
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    /// Interior faces (both neighbors active).
    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Number of the four faces of active cell `k` that lie on the boundary.
    pub fn boundary_faces(&self, k: usize) -> usize {
        let (i, j) = self.cells[k];
        let neighbors = [
            i.checked_sub(1).map(|im| (im, j)),
            Some((i + 1, j)),
            j.checked_sub(1).map(|jm| (i, jm)),
            Some((i, j + 1)),
        ];
        neighbors
            .iter()
            .filter(|n| match n {
                Some((a, b)) => !self.is_active(*a, *b),
                None => true,
            })
            .count()
    }

    /// Largest index distance between the two cells of any face.
    pub fn bandwidth(&self) -> usize {
        self.faces.iter().map(|f| f.hi - f.lo).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_mask_counts_every_cell() {
        let mask = vec![vec![true; 4]; 4];
        let g = build_grid(&mask, 1.0, 1.0).unwrap();
        assert_eq!(g.num_active(), 16);
        // 2 * 4 * 3 interior faces
        assert_eq!(g.faces().len(), 24);
        assert_eq!(g.area(), 16.0);
    }

    #[test]
    fn isolated_cell_has_four_boundary_faces() {
        let mut mask = vec![vec![false; 3]; 3];
        mask[1][1] = true;
        let g = build_grid(&mask, 1.0, 1.0).unwrap();
        assert_eq!(g.num_active(), 1);
        assert_eq!(g.boundary_faces(0), 4);
        assert!(g.faces().is_empty());
    }

    #[test]
    fn disk_count_matches_enumeration() {
        let g = Grid2D::disk(32, 32, 12.0, 1.0, 1.0).unwrap();
        let mut count = 0;
        for j in 0..32 {
            for i in 0..32 {
                let x = i as f64 + 0.5 - 16.0;
                let y = j as f64 + 0.5 - 16.0;
                if (x * x + y * y).sqrt() <= 12.0 {
                    count += 1;
                }
            }
        }
        assert_eq!(g.num_active(), count);
    }

    #[test]
    fn active_index_is_a_bijection() {
        let g = Grid2D::disk(17, 13, 5.5, 0.5, 0.7).unwrap();
        for k in 0..g.num_active() {
            let (i, j) = g.cell(k);
            assert_eq!(g.active_index(i, j), Some(k));
        }
        let masked = g.mask().iter().filter(|&&m| m).count();
        assert_eq!(masked, g.num_active());
    }

    #[test]
    fn rejects_empty_and_bad_spacing() {
        let mask = vec![vec![false; 3]; 2];
        assert!(matches!(
            build_grid(&mask, 1.0, 1.0),
            Err(Error::EmptyDomain)
        ));
        let mask = vec![vec![true; 3]; 2];
        assert!(matches!(
            build_grid(&mask, 0.0, 1.0),
            Err(Error::InvalidGrid(_))
        ));
        assert!(matches!(
            build_grid(&mask, 1.0, -2.0),
            Err(Error::InvalidGrid(_))
        ));
        assert!(build_grid(&[], 1.0, 1.0).is_err());
    }
}
