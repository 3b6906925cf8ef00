//! HTTP/JSON service, persistence and CLI plumbing around [`ses_core`].

pub mod api;
pub mod client;
pub mod config;
pub mod scenario;
pub mod server;
pub mod store;

pub use api::{ApiError, Request};
pub use store::{Store, StoreConfig};
