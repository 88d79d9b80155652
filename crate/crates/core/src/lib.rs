pub mod collector;
pub mod fsutil;
pub mod instrument;
pub mod manifest;
pub mod orchestrator;
pub mod workspace;
