pub mod dataset;
pub mod metrics;
pub mod nn;
pub mod signal;
pub mod stream;
pub mod study;
pub mod train;
