pub mod expr;
pub mod field;
pub mod graph;
pub mod paths;
pub mod engine;
pub mod robot;
pub mod scenario;
pub mod cli;
