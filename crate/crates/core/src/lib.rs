//! Best-response dynamics for two-player zero-sum LQG games with asymmetric
//! information, and decay analysis of the players' belief dynamics.

pub mod belief_analysis;
pub mod best_response;
pub mod experiments;
pub mod game_model;
pub mod numerics;
