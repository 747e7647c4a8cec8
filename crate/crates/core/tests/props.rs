//! Property tests over randomized inputs: index round-trips, stochasticity
//! of assembled chains, and the structure of policy updates.

use proptest::prelude::*;

use decq::dynamics::{
    agent_transition_row, classify_and_canonicalize, joint_transition_matrix, BestReplyGraph,
    BrProvenance, JointPolicySpace,
};
use decq::grid::Grid;
use decq::learning::{admissible_actions, q_update, select_next_policy, QTable, UpdateRule};
use decq::rng::SimRng;
use rand::SeedableRng;

fn arb_space() -> impl Strategy<Value = JointPolicySpace> {
    (1usize..=3, 2usize..=3, 1usize..=3).prop_map(|(agents, actions, bins)| {
        JointPolicySpace::new(&vec![actions; agents], &vec![bins; agents]).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_indices_round_trip(space in arb_space(), joint_raw in 0u64..1_000_000) {
        let joint = joint_raw % space.total();
        prop_assert_eq!(space.encode(&space.decode(joint)), joint);
    }

    #[test]
    fn policy_indices_round_trip(space in arb_space(), idx_raw in 0u64..1_000_000) {
        for agent in 0..space.n_agents() {
            let idx = idx_raw % space.agent_policy_count(agent);
            let policy = space.policy_from_index(agent, idx);
            prop_assert_eq!(space.policy_index(&policy), idx);
            prop_assert_eq!(policy.bins(), space.bins(agent));
        }
    }

    #[test]
    fn opponent_profiles_reassemble(space in arb_space(), joint_raw in 0u64..1_000_000) {
        let joint = joint_raw % space.total();
        let digits = space.decode(joint);
        for agent in 0..space.n_agents() {
            let profile = space.opponent_profile_of(agent, joint);
            prop_assert!(profile < space.opponent_profile_count(agent));
            prop_assert_eq!(space.joint_with(agent, digits[agent], profile), joint);
        }
    }

    #[test]
    fn assembled_chains_are_row_stochastic(
        seed in 0u64..10_000,
        inertia in 0.0f64..0.9,
        explore_raw in 0.0f64..0.9,
    ) {
        let explore = explore_raw.min(1.0 - inertia - 1e-9).max(0.0);
        // Random per-bin admissible sets over a 2-agent, 2-action, 2-bin space.
        let space = JointPolicySpace::new(&[2, 2], &[2, 2]).unwrap();
        let mut rng = SimRng::seed_from_u64(seed);
        let mut sets = Vec::new();
        for agent in 0..2 {
            let mut per_profile = Vec::new();
            for _ in 0..space.opponent_profile_count(agent) {
                let bins: Vec<Vec<usize>> = (0..2)
                    .map(|_| match rand::Rng::gen_range(&mut rng, 0..3) {
                        0 => vec![0],
                        1 => vec![1],
                        _ => vec![0, 1],
                    })
                    .collect();
                per_profile.push(bins);
            }
            sets.push(per_profile);
        }
        let graph = BestReplyGraph::from_sets(
            space,
            sets,
            vec![0.01, 0.01],
            vec![0.05, 0.05],
            BrProvenance::Exact,
        )
        .unwrap();
        let rules = vec![
            UpdateRule::new(inertia, explore).unwrap(),
            UpdateRule::new(explore, inertia.min(1.0 - explore)).unwrap(),
        ];
        let matrix = joint_transition_matrix(&graph, &rules).unwrap();
        for row in matrix.iter_rows() {
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
        }
        // Absorbing states of the classified chain are exactly the joint
        // policies where every agent's row is a point mass on itself.
        let chain = classify_and_canonicalize(matrix).unwrap();
        for joint in 0..graph.space.total() {
            let point_mass = (0..2).all(|agent| {
                let row = agent_transition_row(&graph, joint, agent, &rules[agent]);
                row[graph.space.decode(joint)[agent] as usize] == 1.0
            });
            prop_assert_eq!(chain.absorbing.contains(&(joint as usize)), point_mass);
        }
    }

    #[test]
    fn updates_touch_one_cell(
        bins in 1usize..6,
        actions in 1usize..4,
        cost in -10.0f64..10.0,
        beta in 0.0f64..0.99,
        seed in 0u64..1000,
    ) {
        let mut rng = SimRng::seed_from_u64(seed);
        let y = rand::Rng::gen_range(&mut rng, 0..bins);
        let u = rand::Rng::gen_range(&mut rng, 0..actions);
        let y_next = rand::Rng::gen_range(&mut rng, 0..bins);
        let mut table = QTable::<f64>::new(bins, actions, 0.25);
        q_update(&mut table, y, u, cost, y_next, beta);
        let expected = 0.5 * 0.25 + 0.5 * (cost + beta * 0.25);
        prop_assert_eq!(table.values[(y, u)], expected);
        let untouched = table
            .values
            .flat()
            .iter()
            .filter(|&&v| v == 0.25)
            .count();
        prop_assert!(untouched >= bins * actions - 1);
        prop_assert_eq!(table.visits.flat().iter().sum::<u64>(), 1);
    }

    #[test]
    fn selected_policies_stay_admissible(seed in 0u64..2000) {
        // With no exploration, whatever the rule draws must lie in the
        // per-bin admissible sets (or be the unchanged admissible current).
        let mut rng = SimRng::seed_from_u64(seed);
        let mut table = QTable::<f64>::new(3, 3, 0.0);
        for _ in 0..20 {
            let y = rand::Rng::gen_range(&mut rng, 0..3);
            let u = rand::Rng::gen_range(&mut rng, 0..3);
            let c: f64 = rand::Rng::gen::<f64>(&mut rng) - 0.5;
            q_update(&mut table, y, u, c, (y + 1) % 3, 0.7);
        }
        let admissible = admissible_actions(&table, 0.05);
        let current = decq::game::QuantizedPolicy::new(0, 3, vec![2, 2, 2]).unwrap();
        let rule = UpdateRule::new(0.3, 0.0).unwrap();
        let next = select_next_policy(&current, &admissible, &rule, &mut rng);
        let kept = next == current;
        let inside = next
            .actions
            .iter()
            .zip(&admissible)
            .all(|(a, set)| set.contains(a));
        prop_assert!(kept || inside);
    }

    #[test]
    fn classification_blocks_agree_with_matrix(seed in 0u64..500) {
        // Random 5-state chains with a guaranteed absorbing state.
        let mut rng = SimRng::seed_from_u64(seed);
        let n = 5;
        let mut rows = Vec::new();
        for i in 0..n {
            if i == 0 {
                let mut row = vec![0.0; n];
                row[0] = 1.0;
                rows.push(row);
                continue;
            }
            let mut row: Vec<f64> = (0..n)
                .map(|_| rand::Rng::gen::<f64>(&mut rng))
                .collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
            rows.push(row);
        }
        let chain = classify_and_canonicalize(Grid::from_rows(rows)).unwrap();
        prop_assert!(chain.absorbing.contains(&0));
        let t = chain.transient.len();
        let r = chain.absorbing.len();
        prop_assert_eq!(chain.canonical_order.len(), n);
        for (ti, &orig_i) in chain.transient.iter().enumerate() {
            for (tj, &orig_j) in chain.transient.iter().enumerate() {
                prop_assert_eq!(chain.q_block[(ti, tj)], chain.matrix[(orig_i, orig_j)]);
            }
            for (aj, &orig_j) in chain.absorbing.iter().enumerate() {
                prop_assert_eq!(chain.r_block[(ti, aj)], chain.matrix[(orig_i, orig_j)]);
            }
        }
        prop_assert_eq!(chain.q_block.rows(), t);
        prop_assert_eq!(chain.r_block.cols(), r);
        // Fully random positive rows reach state 0 with probability one.
        prop_assert!(chain.is_absorbing_chain);
        let probs = chain
            .absorption_probabilities(&vec![1.0 / n as f64; n])
            .unwrap();
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
