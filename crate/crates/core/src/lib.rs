pub mod config;
pub mod connectivity;
pub mod cpo;
pub mod env;
pub mod eval;
pub mod expert;
pub mod linalg;
pub mod net;
pub mod rl;
pub mod train;
pub mod world;
