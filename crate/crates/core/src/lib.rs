//! Model checking of and-inverter graphs with function-valued latch resets,
//! periodic-signal preprocessing, and self-contained safety certificates.

pub mod aiger_io;
pub mod certcheck;
pub mod cli;
pub mod engine;
pub mod netlist;
pub mod oracle;
pub mod periodic;
pub mod satkit;
pub mod tersim;
pub mod transform;
pub mod witness;

pub use netlist::{Circuit, CircuitBuilder, Lit};
