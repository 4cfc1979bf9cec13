pub mod analysis;
pub mod control;
pub mod convergence;
pub mod elliptic;
pub mod error;
pub mod located;
pub mod manufactured;
pub mod mesh;
pub mod parabolic;
pub mod solver;
pub mod time_grid;
