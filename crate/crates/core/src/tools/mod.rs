//! Inputs files, plotfiles, the heat demo and the microbenchmarks behind the
//! `miniamr` binary.

pub mod bench;
pub mod heat;
pub mod inputs;
pub mod plotfile;

pub use heat::{run_heat, run_heat_demo, GaussianPulse, HeatConfig, HeatReport};
pub use inputs::{InputValue, InputsTable};
pub use plotfile::{read_plotfile, write_plotfile, Plotfile, PlotLevel};
