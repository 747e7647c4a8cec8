//! Built-in two-player team game on `[lo, hi]`.
//!
//! Both agents pay `-x` and move the state up by `step` when their actions
//! agree, down by `step` otherwise, with occasional uniform noise; the kernel
//! clips into the interval. The team's interest is to coordinate and drift
//! toward the upper end.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

use super::{GameSpec, NoisePrimitive};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeamGameParams<T> {
    pub lo: T,
    pub hi: T,
    /// Drift magnitude per step.
    pub step: T,
    /// Probability that the noise term is active.
    pub noise_prob: T,
    /// Scale of the uniform noise term.
    pub noise_scale: T,
    pub discounts: [T; 2],
}

impl<T: Scalar> Default for TeamGameParams<T> {
    fn default() -> Self {
        TeamGameParams {
            lo: T::zero(),
            hi: T::one(),
            step: T::from_f64_const(0.1),
            noise_prob: T::from_f64_const(0.1),
            noise_scale: T::from_f64_const(0.1),
            discounts: [T::from_f64_const(0.8), T::from_f64_const(0.8)],
        }
    }
}

/// Builds the team game: actions `{-1, +1}` per agent, cost `-x` for both,
/// kernel `x' = clip(x + step·u1·u2 + noise_scale·xi·nu)` with
/// `xi ~ Bernoulli(noise_prob)` and `nu ~ Uniform(-1, 1)`.
pub fn build_team_game<T: Scalar>(params: &TeamGameParams<T>) -> Result<GameSpec<T>> {
    if !(params.lo < params.hi) {
        return Err(CoreError::invalid("team game needs lo < hi"));
    }
    if !(params.step > T::zero()) {
        return Err(CoreError::invalid("team game needs a positive step"));
    }
    if params.noise_prob < T::zero() || params.noise_prob > T::one() {
        return Err(CoreError::invalid("noise_prob must lie in [0, 1]"));
    }
    if params.noise_scale < T::zero() {
        return Err(CoreError::invalid("noise_scale must be non-negative"));
    }
    let actions = vec![-T::one(), T::one()];
    let (lo, hi) = (params.lo, params.hi);
    let (step, scale) = (params.step, params.noise_scale);
    let kernel = Arc::new(move |x: T, u: &[T], w: &[T]| {
        let drift = step * u[0] * u[1];
        let noise = scale * w[0] * w[1];
        (x + drift + noise).max(lo).min(hi)
    });
    let cost = Arc::new(move |x: T, _: &[T]| -x);
    let c_max = params.lo.abs().max(params.hi.abs());
    GameSpec::new(
        "team",
        params.lo,
        params.hi,
        vec![actions.clone(), actions],
        vec![
            NoisePrimitive::Bernoulli {
                p: params.noise_prob,
            },
            NoisePrimitive::Uniform {
                lo: -T::one(),
                hi: T::one(),
            },
        ],
        kernel,
        vec![cost.clone(), cost],
        params.discounts.to_vec(),
        c_max,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::JointAction;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    #[test]
    fn default_matches_declared_constants() {
        let game = build_team_game(&TeamGameParams::<f64>::default()).unwrap();
        assert_eq!(game.n_agents(), 2);
        assert_eq!(game.action_set(0), &[-1.0, 1.0]);
        assert_eq!(game.state_lo(), 0.0);
        assert_eq!(game.state_hi(), 1.0);
        assert_eq!(game.c_max(), 1.0);
        assert_eq!(game.discount(0), 0.8);
    }

    #[test]
    fn large_step_reaches_clip_in_two_moves() {
        let game = build_team_game(&TeamGameParams {
            step: 0.5,
            noise_prob: 0.0,
            ..TeamGameParams::<f64>::default()
        })
        .unwrap();
        let mut rng = SimRng::seed_from_u64(0);
        let coop = JointAction::new(vec![0, 0]); // (-1)·(-1) = +1 also drifts up
        let x1 = game.sample_transition(0.0, &coop, &mut rng).unwrap();
        let x2 = game.sample_transition(x1, &coop, &mut rng).unwrap();
        assert_eq!(x1, 0.5);
        assert_eq!(x2, 1.0);
    }

    #[test]
    fn zero_noise_prob_is_deterministic_walk() {
        let game = build_team_game(&TeamGameParams {
            noise_prob: 0.0,
            ..TeamGameParams::<f64>::default()
        })
        .unwrap();
        let mut rng = SimRng::seed_from_u64(3);
        let anti = JointAction::new(vec![0, 1]);
        let mut x = 0.75;
        for expect in [0.65, 0.55, 0.45] {
            x = game.sample_transition(x, &anti, &mut rng).unwrap();
            assert!((x - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = TeamGameParams {
            noise_prob: 1.5,
            ..TeamGameParams::<f64>::default()
        };
        assert!(build_team_game(&bad).is_err());
    }
}
