use crate::foragingtask::{DOMAIN_HALF, EXCLUSION_RADIUS};

/// Side length of the square map domain, in meters.
pub const EXTENT: f64 = 2.0 * DOMAIN_HALF;

/// Square lattice over the map domain; row 0 is the far (+y) edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    pub resolution: usize,
}

impl Grid {
    pub fn new(resolution: usize) -> Self {
        assert!(resolution >= 2, "a map needs at least 2 cells per side");
        Self { resolution }
    }

    pub fn spacing(&self) -> f64 {
        EXTENT / (self.resolution - 1) as f64
    }

    /// Cell center relative to the organism, in meters.
    pub fn position(&self, row: usize, col: usize) -> [f64; 2] {
        let s = self.spacing();
        [-DOMAIN_HALF + col as f64 * s, DOMAIN_HALF - row as f64 * s]
    }

    pub fn excluded(&self, row: usize, col: usize) -> bool {
        is_excluded(self.resolution, row, col)
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.resolution).flat_map(move |r| (0..self.resolution).map(move |c| (r, c)))
    }

    pub fn active_count(&self) -> usize {
        self.cells().filter(|&(r, c)| !self.excluded(r, c)).count()
    }
}

/// Whether cell `(row, col)` lies strictly inside the exclusion disk.
///
/// Evaluated in integers so lattice points exactly on the circle are never
/// misclassified by rounding: with `a = 2 col - (res - 1)` the cell's x is
/// `a * half / (res - 1)`, and likewise for y.
pub fn is_excluded(resolution: usize, row: usize, col: usize) -> bool {
    let n = resolution as i64 - 1;
    let a = 2 * col as i64 - n;
    let b = 2 * row as i64 - n;
    let half = DOMAIN_HALF as i64;
    let r = EXCLUSION_RADIUS as i64;
    (a * a + b * b) * half * half < r * r * n * n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_matches_resolution() {
        assert_eq!(Grid::new(11).spacing(), 2.0);
        assert!((Grid::new(101).spacing() - 0.2).abs() < 1e-15);
        assert_eq!(Grid::new(11).position(0, 0), [-10.0, 10.0]);
        assert_eq!(Grid::new(11).position(5, 5), [0.0, 0.0]);
        assert_eq!(Grid::new(11).position(10, 10), [10.0, -10.0]);
    }

    #[test]
    fn eleven_by_eleven_has_112_active_cells() {
        let g = Grid::new(11);
        assert_eq!(g.active_count(), 112);
        // A cell 4 m out on an axis sits on the circle and stays active.
        assert!(!g.excluded(5, 7));
        assert!(g.excluded(4, 4));
    }
}
