//! Citation-based maps of IPC classes: aggregation of primary-class citations,
//! cosine basemaps with stress-minimizing layouts and Louvain clusters, patent
//! set overlays with Rao-Stirling diversity, and VOSviewer/Pajek file output.

pub mod aggregate;
pub mod analysis;
pub mod community;
pub mod error;
pub mod fetch;
pub mod formats;
pub mod ingest;
pub mod layout;
pub mod model;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    parse_ipc, validate, BaseEntry, BaseMap, ClassCitationMatrix, IpcCode, IpcScheme, Kind, Level, Overlay,
    PatentRecord,
};
