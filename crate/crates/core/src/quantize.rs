//! State quantizers: partitions of a compact interval into finitely many
//! cells, each with a representative state.
//!
//! Cells are the Voronoi regions of the representative points. A state on a
//! cell boundary maps to the lower cell index, so the map is total and
//! deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantizer<T> {
    lo: T,
    hi: T,
    /// Representative states, strictly increasing, all inside `[lo, hi]`.
    reps: Vec<T>,
    /// Cell edges: midpoints between consecutive representatives. Cell `j`
    /// is `(edges[j-1], edges[j]]` intersected with `[lo, hi]`; an edge point
    /// belongs to the cell below it.
    edges: Vec<T>,
}

impl<T: Scalar> Quantizer<T> {
    /// Nearest-representative quantizer for an arbitrary set of points.
    pub fn from_representatives(lo: T, hi: T, reps: Vec<T>) -> Result<Self> {
        if !(lo <= hi) {
            return Err(CoreError::invalid(format!(
                "interval [{lo}, {hi}] is empty"
            )));
        }
        if reps.is_empty() {
            return Err(CoreError::invalid("quantizer needs at least one representative"));
        }
        for w in reps.windows(2) {
            if !(w[0] < w[1]) {
                return Err(CoreError::invalid(
                    "representatives must be strictly increasing",
                ));
            }
        }
        if reps[0] < lo || *reps.last().unwrap() > hi {
            return Err(CoreError::invalid("representatives outside the interval"));
        }
        let two = T::from_f64_const(2.0);
        let edges = reps.windows(2).map(|w| (w[0] + w[1]) / two).collect();
        Ok(Quantizer { lo, hi, reps, edges })
    }

    /// Uniform quantizer with `m` evenly spaced representatives on `[lo, hi]`:
    /// `lo + k·(hi-lo)/(m-1)` for `m >= 2`, the midpoint for `m = 1`.
    pub fn uniform(lo: T, hi: T, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(CoreError::invalid("quantizer needs at least one bin"));
        }
        if !(lo < hi) {
            return Err(CoreError::invalid(format!(
                "uniform quantizer needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        let reps = if m == 1 {
            vec![(lo + hi) / T::from_f64_const(2.0)]
        } else {
            let span = hi - lo;
            let denom = T::from_usize(m - 1).unwrap();
            (0..m)
                .map(|k| {
                    if k == m - 1 {
                        hi
                    } else {
                        lo + span * T::from_usize(k).unwrap() / denom
                    }
                })
                .collect()
        };
        Self::from_representatives(lo, hi, reps)
    }

    /// Identity-style quantizer for a finite set `{0, 1, ..., m-1}` embedded
    /// in `[0, m-1]`: one cell per integer point.
    pub fn identity(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(CoreError::invalid("quantizer needs at least one bin"));
        }
        let reps = (0..m).map(|k| T::from_usize(k).unwrap()).collect();
        Self::from_representatives(T::zero(), T::from_usize(m - 1).unwrap(), reps)
    }

    pub fn bins(&self) -> usize {
        self.reps.len()
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn representatives(&self) -> &[T] {
        &self.reps
    }

    pub fn representative(&self, bin: usize) -> T {
        self.reps[bin]
    }

    /// Maps a state to its bin index. Boundary points go to the lower bin.
    pub fn quantize(&self, x: T) -> Result<usize> {
        if x < self.lo || x > self.hi || x.is_nan() {
            return Err(CoreError::invalid(format!(
                "state {x} outside [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(self.edges.partition_point(|&e| e < x))
    }

    /// Closed bounds of cell `j` as an interval of the same measure; the
    /// shared edge between cells belongs to the lower cell.
    pub fn cell_bounds(&self, j: usize) -> (T, T) {
        let lo = if j == 0 { self.lo } else { self.edges[j - 1] };
        let hi = if j == self.bins() - 1 {
            self.hi
        } else {
            self.edges[j]
        };
        (lo, hi)
    }

    /// Largest cell width. With `exclude_last`, the final cell is left out of
    /// the maximum (the convention that supports unbounded final cells); for
    /// a single excluded-last bin the maximum over no cells is zero.
    pub fn max_bin_diameter(&self, exclude_last: bool) -> T {
        let count = if exclude_last {
            self.bins() - 1
        } else {
            self.bins()
        };
        (0..count)
            .map(|j| {
                let (a, b) = self.cell_bounds(j);
                b - a
            })
            .fold(T::zero(), T::max)
    }
}
