//! Text-to-SQL over a local clinical database: only schema metadata and
//! demonstrations reach the model; rows stay in-process.

pub mod demo_store;
pub mod eval_harness;
pub mod execution_sandbox;
pub mod llm_gateway;
pub mod prompt_builder;
pub mod query_result;
pub mod schema_catalog;
pub mod sql_postprocess;
pub mod viz_spec;

pub use demo_store::{DemoStore, Demonstration, Embedder, HashingEmbedder};
pub use execution_sandbox::{execute_sql, run_pipeline, ExecLimits, PipelineContext, PipelineFlags, PipelineOutcome};
pub use llm_gateway::{Backend, Gateway, ModelConfig};
pub use query_result::{Column, QueryResult, Value};
pub use schema_catalog::SchemaCatalog;

/// Durations on the wire are fractional milliseconds.
pub(crate) mod serde_duration_ms {
    use std::time::Duration;

    use serde::Serializer;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1000.0)
    }
}
