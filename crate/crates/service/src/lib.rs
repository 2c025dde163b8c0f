//! Run orchestration, content-addressed artifact store, HTTP API and CLI.

pub mod api;
pub mod bench;
pub mod cli;
pub mod compare;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod registry;
pub mod store;
pub mod views;

pub use api::{router, serve, AppState};
pub use bench::{BenchReport, BenchRow};
pub use compare::{CompareRequest, ComparisonPayload};
pub use error::{Result, ServiceError};
pub use manifest::{run_id, RunManifest, RunSpec, RunStatus, TrainSummary};
pub use pipeline::RunOutcome;
pub use registry::{DatasetEntry, DatasetRegistry};
pub use store::Store;
pub use views::{ExportFormat, LatentsPayload, MapPayload, MapPoint, MetricsPayload, TreePayload};
