//! File formats, experiment drivers and the command-line front end for
//! [`surfadapt_core`].

pub use surfadapt_core as core;

pub mod experiments;
pub mod io;
