pub mod analyze;
pub mod sim_study;
pub mod solve_env;
