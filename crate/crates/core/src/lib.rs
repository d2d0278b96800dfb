//! Fault-injection ground truth and graph-convolutional prediction of the
//! vulnerability metrics of duplicated (DMR) hardware designs.
//!
//! The crate is organised along the pipeline:
//!
//! * [`netlist`]: data model and EDIF reader/writer.
//! * [`sim`]: cycle-accurate simulation with flip-flop bit flips.
//! * [`campaign`]: exhaustive single-fault campaigns and derived double-fault rates.
//! * [`graph`]: netlist to graph conversion and one-hot node features.
//! * [`gnn`]: the graph-convolutional regressor and its training loop.
//! * [`designgen`]: seed circuits, diversity transforms and DMR wrappers.

pub mod campaign;
pub mod designgen;
pub mod gnn;
pub mod graph;
pub mod netlist;
pub mod sim;
