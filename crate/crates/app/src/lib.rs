//! Service and CLI around the pipeline: configuration, sessions, HTTP routes.

pub mod cli;
pub mod cohort;
pub mod config;
pub mod http;
pub mod service;
pub mod session;

pub use config::AppConfig;
pub use service::{ApiError, AppState, Database};
