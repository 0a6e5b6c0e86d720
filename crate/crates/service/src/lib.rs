//! Command-line tools and the HTTP session service built on `retouch-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod http;
pub mod remote;
pub mod session;

pub use config::ServiceConfig;
pub use error::ServiceError;
pub use session::Service;

/// Schema string carried by every JSON document the service emits.
pub const SCHEMA: &str = "pertouch/1";
