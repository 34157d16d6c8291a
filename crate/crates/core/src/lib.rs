pub mod chunker;
pub mod embedding;
pub mod evalkit;
mod http;
pub mod ingest;
pub mod mcp;
pub mod orchestrate;
pub mod pubmed;
pub mod retry;
pub mod vindex;
