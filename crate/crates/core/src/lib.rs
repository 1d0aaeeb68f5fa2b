pub mod action;
pub mod backends;
pub mod config;
pub mod digest;
pub mod engine;
pub mod eval;
pub mod events;
pub mod graph;
pub mod planner;
pub mod searcher;
pub mod service;
pub mod templates;
pub mod trace;
