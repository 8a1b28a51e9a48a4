//! Differentially private trajectory publishing.
//!
//! The engine perturbs two frequency views of each trajectory's signature
//! points, the per-trajectory point frequency (PF) and the dataset-level
//! trajectory frequency (TF), with Laplace noise, then edits the trajectories
//! with minimum-loss insertions and deletions until they match the noisy
//! frequencies. Nearest-segment searches behind the edits run over a
//! hierarchical grid index.
//!
//! Module map:
//!
//! * [`geo`]: normalization, location snapping, trajectories, segments,
//!   distances.
//! * [`signature`]: PF/TF counting, point weights, top-m signatures and the
//!   per-trajectory perturbation point list.
//! * [`dp`]: Laplace sampling, global TF and two-stage local PF
//!   perturbation, budget accounting.
//! * [`edit`]: insertion/deletion operations and their utility losses.
//! * [`index`]: hierarchical grid index and K-nearest-segment search
//!   strategies (plus the linear and uniform-grid baselines).
//! * [`modifier`]: intra- and inter-trajectory modification and the
//!   end-to-end pipeline.
//! * [`metrics`]: linking accuracy and utility metrics.
//! * [`io`], [`config`], [`synth`], [`bench`]: CSV ingestion, run
//!   configuration, the synthetic corpus generator and the efficiency
//!   harness.

pub mod bench;
pub mod config;
pub mod dp;
pub mod edit;
pub mod geo;
pub mod index;
pub mod io;
pub mod metrics;
pub mod modifier;
pub mod signature;
pub mod synth;

mod error;

pub use error::{Error, Result};
pub use geo::{BBox, Dataset, Location, Point, RawSample, Segment, SegmentId, TrajPoint, Trajectory};
pub use index::Strategy;
