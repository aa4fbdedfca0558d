pub mod bench_cmd;
pub mod eval;
pub mod export;
pub mod sweep;
pub mod train;
