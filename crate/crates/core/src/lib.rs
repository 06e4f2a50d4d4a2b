pub mod cli;
pub mod estimators;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod ndiff;
pub mod synth;
pub mod train;
