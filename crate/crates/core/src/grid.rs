//! Minimal dense row-major matrix used for Q-tables, kernel tables, and
//! policy-chain transition matrices.

use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<V> {
    rows: usize,
    cols: usize,
    data: Vec<V>,
}

impl<V: Clone> Grid<V> {
    pub fn fill(rows: usize, cols: usize, value: V) -> Self {
        Grid {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<V>>) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Grid {
            rows: n_rows,
            cols: n_cols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<V>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Grid { rows, cols, data }
    }

    pub fn reset(&mut self, value: V) {
        self.data.fill(value);
    }
}

impl<V> Grid<V> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[V] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [V] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Row-major flat view.
    pub fn flat(&self) -> &[V] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[V]> {
        self.data.chunks(self.cols)
    }
}

impl<V> Index<(usize, usize)> for Grid<V> {
    type Output = V;

    fn index(&self, (r, c): (usize, usize)) -> &V {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<V> IndexMut<(usize, usize)> for Grid<V> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut V {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let g = Grid::from_rows(vec![vec![1, 2, 3], vec![4, 5, 6]]);
        assert_eq!(g[(0, 2)], 3);
        assert_eq!(g[(1, 0)], 4);
        assert_eq!(g.flat(), &[1, 2, 3, 4, 5, 6]);
        assert_eq!(g.row(1), &[4, 5, 6]);
    }

    #[test]
    fn fill_and_reset() {
        let mut g = Grid::fill(2, 2, 0.0f64);
        g[(1, 1)] = 3.5;
        g.reset(1.0);
        assert!(g.flat().iter().all(|&v| v == 1.0));
    }
}
