//! A single agent's finite environment model: averaged cost and transition
//! tables over quantizer cells, for a fixed profile of opponent policies,
//! plus value iteration on that model.
//!
//! Table entries are cell averages of the underlying game under a weighting
//! measure. The default weighting is uniform on each cell; the occupation
//! weighting draws within-cell states from a long behavior trajectory, which
//! is the measure the tabular learning process actually converges under.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::game::{GameSpec, JointAction, PerturbedPolicy};
use crate::grid::Grid;
use crate::learning::QTable;
use crate::quantize::Quantizer;
use crate::rng::{child_rng, child_seed, SimRng};
use crate::scalar::{index_in, uniform_in, Scalar};

/// How within-cell states are drawn when averaging the model tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellWeighting<T> {
    /// Uniform (Lebesgue) on each cell.
    Uniform,
    /// Empirical within-cell distribution of a behavior trajectory: the
    /// modeled agent plays `own` while the opponents play their fixed
    /// policies, for `steps` steps from `x0`. Cells never visited cannot be
    /// sampled and produce an error naming the bin.
    Occupation { own: PerturbedPolicy<T>, steps: usize, x0: T },
}

/// Where the table entries came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelProvenance {
    /// Exact enumeration over a finite game.
    Exact,
    /// Monte Carlo estimation with the recorded number of samples per cell.
    MonteCarlo { samples_per_cell: usize },
}

/// Finite environment model of one agent: bins × own actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteEnvModel<T> {
    pub bins: usize,
    pub n_actions: usize,
    pub beta: T,
    /// Averaged cost per (bin, action).
    pub cost: Grid<T>,
    /// Row-stochastic transitions: row `(bin * n_actions + action)`, column
    /// = next bin.
    pub kernel: Grid<T>,
    /// Standard error of each cost entry.
    pub cost_se: Grid<T>,
    /// Standard error of each kernel probability (binomial).
    pub kernel_se: Grid<T>,
    pub provenance: ModelProvenance,
}

impl<T: Scalar> FiniteEnvModel<T> {
    pub fn validate(&self) -> Result<()> {
        if self.cost.rows() != self.bins || self.cost.cols() != self.n_actions {
            return Err(CoreError::invalid("cost table has wrong shape"));
        }
        if self.kernel.rows() != self.bins * self.n_actions || self.kernel.cols() != self.bins {
            return Err(CoreError::invalid("kernel table has wrong shape"));
        }
        let tol = T::stochastic_tol(self.bins).max(T::from_f64_const(1e-9));
        for (r, row) in self.kernel.iter_rows().enumerate() {
            if row.iter().any(|&p| p < T::zero()) {
                return Err(CoreError::invalid(format!(
                    "negative probability in kernel row {r}"
                )));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(CoreError::invalid(format!(
                    "kernel row {r} sums to {sum}"
                )));
            }
        }
        if !(self.beta >= T::zero() && self.beta < T::one()) {
            return Err(CoreError::invalid("discount must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn kernel_row(&self, bin: usize, action: usize) -> &[T] {
        self.kernel.row(bin * self.n_actions + action)
    }
}

/// Normalizes a non-negative row to sum exactly to one.
fn renormalize<T: Scalar>(row: &mut [T]) {
    let sum: T = row.iter().copied().sum();
    if sum > T::zero() {
        for p in row.iter_mut() {
            *p = *p / sum;
        }
    }
}

/// Per-cell reservoir of within-cell states collected from a trajectory.
fn collect_occupation<T: Scalar>(
    game: &GameSpec<T>,
    agent: usize,
    own: &PerturbedPolicy<T>,
    others: &[PerturbedPolicy<T>],
    quantizer: &Quantizer<T>,
    quantizers_others: &[Quantizer<T>],
    steps: usize,
    x0: T,
    rng: &mut SimRng,
) -> Result<Vec<Vec<T>>> {
    const RESERVOIR_CAP: usize = 65_536;
    let n = game.n_agents();
    let mut samples: Vec<Vec<T>> = vec![Vec::new(); quantizer.bins()];
    let mut x = x0;
    let mut action = JointAction::new(vec![0; n]);
    let mut seen = vec![0u64; quantizer.bins()];
    for _ in 0..steps {
        let bin = quantizer.quantize(x)?;
        seen[bin] += 1;
        let slot = samples[bin].len();
        if slot < RESERVOIR_CAP {
            samples[bin].push(x);
        } else {
            // Reservoir sampling keeps the cell sample unbiased once full.
            let j = index_in::<T, _>(seen[bin] as usize, rng);
            if j < RESERVOIR_CAP {
                samples[bin][j] = x;
            }
        }
        let mut other_iter = others.iter().zip(quantizers_others);
        for a in 0..n {
            if a == agent {
                action.indices[a] = own.perturbed_action(bin, rng);
            } else {
                let (policy, q) = other_iter.next().expect("one policy per opponent");
                action.indices[a] = policy.perturbed_action(q.quantize(x)?, rng);
            }
        }
        x = game.sample_transition(x, &action, rng)?;
    }
    Ok(samples)
}

/// Builds agent `agent`'s finite environment model against the fixed
/// opponent profile `others` (ascending agent order, skipping `agent`).
///
/// Each (bin, action) cell is estimated from `samples_per_bin` draws on its
/// own derived random stream, so the construction parallelizes without
/// affecting results. Opponents are assumed to quantize with `opponent_qs`
/// (ascending, skipping `agent`).
#[allow(clippy::too_many_arguments)]
pub fn build_finite_env<T: Scalar>(
    game: &GameSpec<T>,
    agent: usize,
    others: &[PerturbedPolicy<T>],
    quantizer: &Quantizer<T>,
    opponent_qs: &[Quantizer<T>],
    weighting: &CellWeighting<T>,
    samples_per_bin: usize,
    seed: u64,
) -> Result<FiniteEnvModel<T>> {
    let n = game.n_agents();
    if agent >= n {
        return Err(CoreError::invalid(format!("no agent {agent}")));
    }
    if others.len() != n - 1 || opponent_qs.len() != n - 1 {
        return Err(CoreError::invalid(
            "need one policy and one quantizer per opponent",
        ));
    }
    if samples_per_bin == 0 {
        return Err(CoreError::invalid("samples_per_bin must be positive"));
    }
    let bins = quantizer.bins();
    let n_actions = game.n_actions(agent);

    // Occupation weighting: one shared trajectory pass, then per-cell
    // resampling. Seed index 0 is reserved for the trajectory.
    let occupation: Option<Vec<Vec<T>>> = match weighting {
        CellWeighting::Uniform => None,
        CellWeighting::Occupation { own, steps, x0 } => {
            let mut rng = child_rng(seed, 0);
            let samples = collect_occupation(
                game,
                agent,
                own,
                others,
                quantizer,
                opponent_qs,
                *steps,
                *x0,
                &mut rng,
            )?;
            if let Some(bin) = samples.iter().position(Vec::is_empty) {
                return Err(CoreError::EmptyBin {
                    bin,
                    reason: format!("never visited in a {steps}-step behavior trajectory"),
                });
            }
            Some(samples)
        }
    };

    let cells: Vec<(usize, usize)> = (0..bins)
        .flat_map(|y| (0..n_actions).map(move |u| (y, u)))
        .collect();

    struct CellEstimate<T> {
        cost_mean: T,
        cost_se: T,
        probs: Vec<T>,
        probs_se: Vec<T>,
    }

    let estimates: Vec<Result<CellEstimate<T>>> = cells
        .par_iter()
        .map(|&(y, u)| {
            let ordinal = (y * n_actions + u) as u64 + 1;
            let mut rng = child_rng(seed, ordinal);
            let (cell_lo, cell_hi) = quantizer.cell_bounds(y);
            let mut action = JointAction::new(vec![0; n]);
            let mut counts = vec![0usize; bins];
            // Welford keeps constant cost streams bitwise exact.
            let mut mean = T::zero();
            let mut m2 = T::zero();
            for s in 0..samples_per_bin {
                let x = match &occupation {
                    None => uniform_in(cell_lo, cell_hi, &mut rng),
                    Some(cells) => {
                        let pool = &cells[y];
                        pool[index_in::<T, _>(pool.len(), &mut rng)]
                    }
                };
                let mut other_iter = others.iter().zip(opponent_qs);
                for a in 0..n {
                    if a == agent {
                        action.indices[a] = u;
                    } else {
                        let (policy, q) = other_iter.next().expect("one policy per opponent");
                        action.indices[a] = policy.perturbed_action(q.quantize(x)?, &mut rng);
                    }
                }
                let c = game.stage_cost(agent, x, &action)?;
                let x_next = game.sample_transition(x, &action, &mut rng)?;
                counts[quantizer.quantize(x_next)?] += 1;
                let count = T::from_usize(s + 1).unwrap();
                let delta = c - mean;
                mean = mean + delta / count;
                m2 = m2 + delta * (c - mean);
            }
            let n_s = T::from_usize(samples_per_bin).unwrap();
            let cost_se = if samples_per_bin > 1 {
                (m2 / (n_s - T::one()) / n_s).sqrt()
            } else {
                T::zero()
            };
            let mut probs: Vec<T> = counts
                .iter()
                .map(|&c| T::from_usize(c).unwrap() / n_s)
                .collect();
            renormalize(&mut probs);
            let probs_se = probs
                .iter()
                .map(|&p| (p * (T::one() - p) / n_s).sqrt())
                .collect();
            Ok(CellEstimate {
                cost_mean: mean,
                cost_se,
                probs,
                probs_se,
            })
        })
        .collect();

    let mut cost = Grid::fill(bins, n_actions, T::zero());
    let mut cost_se = Grid::fill(bins, n_actions, T::zero());
    let mut kernel = Grid::fill(bins * n_actions, bins, T::zero());
    let mut kernel_se = Grid::fill(bins * n_actions, bins, T::zero());
    for (&(y, u), est) in cells.iter().zip(estimates) {
        let est = est?;
        cost[(y, u)] = est.cost_mean;
        cost_se[(y, u)] = est.cost_se;
        let row = y * n_actions + u;
        kernel.row_mut(row).copy_from_slice(&est.probs);
        kernel_se.row_mut(row).copy_from_slice(&est.probs_se);
    }

    let model = FiniteEnvModel {
        bins,
        n_actions,
        beta: game.discount(agent),
        cost,
        kernel,
        cost_se,
        kernel_se,
        provenance: ModelProvenance::MonteCarlo {
            samples_per_cell: samples_per_bin,
        },
    };
    model.validate()?;
    Ok(model)
}

/// Convenience: derive the per-cell seed protocol for callers that need to
/// reproduce the sampling of one cell (diagnostics, tests).
pub fn cell_seed(seed: u64, bin: usize, action: usize, n_actions: usize) -> u64 {
    child_seed(seed, (bin * n_actions + action) as u64 + 1)
}

/// Result of value iteration: the fixed-point table and the residual path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueIterationOutcome<T> {
    pub q: QTable<T>,
    pub iterations: usize,
    pub residual: T,
    /// Sup-norm change per sweep, for contraction diagnostics.
    pub residual_history: Vec<T>,
}

/// Solves `Q(y,u) = C(y,u) + beta · Σ_y' P(y'|y,u) · min_v Q(y',v)` by
/// synchronous sweeps from the all-zero table.
pub fn value_iteration<T: Scalar>(
    model: &FiniteEnvModel<T>,
    tol: T,
    max_iters: usize,
) -> Result<ValueIterationOutcome<T>> {
    model.validate()?;
    let (bins, n_actions) = (model.bins, model.n_actions);
    let mut q = Grid::fill(bins, n_actions, T::zero());
    let mut next = q.clone();
    let mut history = Vec::new();
    for iter in 1..=max_iters {
        // min over actions of the current table, per bin
        let mins: Vec<T> = (0..bins)
            .map(|y| {
                q.row(y)
                    .iter()
                    .copied()
                    .fold(T::infinity(), T::min)
            })
            .collect();
        let mut residual = T::zero();
        for y in 0..bins {
            for u in 0..n_actions {
                let row = model.kernel_row(y, u);
                let expect = row
                    .iter()
                    .zip(&mins)
                    .fold(T::zero(), |acc, (&p, &m)| acc + p * m);
                let value = model.cost[(y, u)] + model.beta * expect;
                residual = residual.max((value - q[(y, u)]).abs());
                next[(y, u)] = value;
            }
        }
        std::mem::swap(&mut q, &mut next);
        history.push(residual);
        if residual <= tol {
            return Ok(ValueIterationOutcome {
                q: QTable::from_values(q),
                iterations: iter,
                residual,
                residual_history: history,
            });
        }
    }
    Err(CoreError::NoConvergence {
        iterations: max_iters,
        residual: history.last().and_then(|r| r.to_f64()).unwrap_or(f64::NAN),
    })
}

/// Default value-iteration tolerance.
pub fn default_vi_tol<T: Scalar>() -> T {
    T::from_f64_const(1e-10)
}

/// Default value-iteration iteration cap.
pub const DEFAULT_VI_MAX_ITERS: usize = 100_000;
