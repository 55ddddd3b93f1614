//! Pre-filtering of bundle resources and the identifier catalog the chat
//! model selects from.

mod catalog;
mod config;
mod filter;
mod identifier;

pub use catalog::{build_catalog, Catalog, CatalogEntry, MatchKind};
pub use config::{ConfigError, FilterConfig};
pub use filter::{filter_medications, latest_per_code};
pub use identifier::{compute_identifier, ResourceIdentifier};
