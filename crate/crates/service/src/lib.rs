//! Session service and command line for chart template workspaces.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod session;
pub mod state;

pub use error::ServiceError;
pub use state::AppState;
