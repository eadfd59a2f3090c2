//! Metal-hydride discovery toolkit.
//!
//! Scores known hydrides, finds score-relevant features by constraint-based
//! causal discovery, trains a small variational autoencoder to propose new
//! compositions, and filters and ranks the proposals against a reference set.

pub mod causal;
pub mod chem;
pub mod cif;
pub mod dataset;
pub mod fixture;
pub mod genvae;
pub mod linalg;
pub mod pcr;
pub mod scoring;
pub mod screen;

pub use causal::{Mark, PartialAncestralGraph};
pub use chem::{parse_formula, Composition, Element};
pub use cif::Structure;
pub use dataset::{MaterialRecord, SplitSpec};
pub use genvae::{VaeModel, Vocab};
pub use scoring::ScoreVariant;
pub use screen::{FilterConfig, MatchKind, ScoredCandidate};
