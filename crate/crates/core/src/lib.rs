//! Optimal sparse decision trees for weighted classification data.

pub mod data;
pub mod model;
pub mod objective;
pub mod reference;
pub mod search;
pub mod weights;
pub mod oracle;
pub mod bench;
pub mod pipeline;
