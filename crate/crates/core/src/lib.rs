//! Export-panel reconstruction and Economic Fitness and Complexity
//! analytics.
//!
//! The crate reconstructs missing entries of a country x activity x year
//! services panel, merges goods and services into a universal panel, and
//! computes the downstream analytics: RCA / market-share / binary
//! competitiveness matrices, the fitness-complexity fixed point, a
//! statistically validated directed network of activity progressions, and
//! lagged fitness-vs-GDP correlations with bootstrap bands.
//!
//! Everything randomized takes an explicit seed and derives per-task seeds
//! from it ([`seed::derive`]), so results are reproducible bit for bit
//! regardless of worker count.

pub mod analysis;
pub mod bicm;
pub mod complexity;
pub mod error;
pub mod fixtures;
pub mod impute;
pub mod panel;
pub mod progression;
pub mod seed;
mod stats;
pub mod taxonomy;

pub use error::{Error, Result};
pub use panel::{ExportPanel, PanelFormat, PanelMask, SmoothingConfig};
pub use taxonomy::TaxonomyTree;
