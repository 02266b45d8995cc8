//! Experiment harness: batch runs over an experiment matrix, the framed
//! server/robot protocol, networked trials and the `live` command line.

pub mod batch;
pub mod cli;
pub mod net;
pub mod protocol;
