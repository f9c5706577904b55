//! Persistent artifacts: configuration, object tables, volumes, manifests.

pub mod config;
pub mod manifest;
pub mod nrrd;
pub mod table;

pub use config::{apply_overrides, parse_config, read_config_value, resolve_config, SimulationConfig};
pub use manifest::{Manifest, MANIFEST_FILE};
pub use nrrd::{read_volume, write_volume, NrrdType};
pub use table::{read_object_table, write_object_table, ObjectTableRow, OBJECT_TABLE_HEADER};
