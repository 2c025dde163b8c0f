//! Event-file parsing, preprocessing and synthetic datasets.

pub mod archive;
pub mod error;
pub mod labels;
pub mod pipeline;
pub mod record;
pub mod segment;
pub mod signal;
pub mod synth;

pub use archive::{archive_fingerprint, fingerprint, read_archive, write_archive};
pub use error::{IngestError, Result};
pub use labels::{parse_label_tags, LabelSet, LabelTaxonomy, TaxonomyNode};
pub use pipeline::{load_dataset, preprocess_dataset, preprocess_records, PreprocessConfig};
pub use record::{parse_event_file, ChannelSchema, RawRecord};
pub use segment::{normalize_segments, segment_and_pad, NormStats, Segment, SegmentSet, StatsSource};
pub use signal::{cycle_len_samples, detect_event_regions, resample_linear, EventRegion};
pub use synth::{generate_synthetic_dataset, ClassSpec, DisturbanceKind, SyntheticSpec};
