pub mod backend;
pub mod bench;
pub mod cli;
pub mod metrics;
pub mod orchestrator;
pub mod response;
pub mod script;
