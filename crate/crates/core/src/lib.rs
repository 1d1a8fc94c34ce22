//! Circuit-aware configuration prediction for PDR model checking.
//!
//! The pipeline reads AIGER circuits, extracts static features and a graph of
//! the cone of influence, trains a GraphSAGE runtime predictor over the 114
//! valid PDR flag assignments, ranks configurations for new circuits and
//! drives an external engine over the top candidates.

pub mod aiger;
pub mod coi;
pub mod features;
pub mod graphdata;
pub mod model;
pub mod params;
pub mod predict;
pub mod runner;
pub mod synth;
pub mod train;
