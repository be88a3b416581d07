//! Data ingestion and design construction for the command line interface.

pub mod adl;
pub mod data;
