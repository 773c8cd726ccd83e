//! Simulator for active teleportation of a vacuum/one-photon qubit.
//!
//! [`fock`] holds the sparse photon-number states, [`optics`] the linear
//! elements acting on them, and [`bench`] the text format that wires
//! elements into a setup. [`protocol`] runs trials and sweeps on a bench,
//! [`stochastics`] and [`timing`] supply detector noise and the feed-forward
//! race, and [`analysis`] fits the resulting fringes.

pub mod analysis;
pub mod bench;
pub mod cli;
pub mod fock;
pub mod optics;
pub mod protocol;
pub mod stochastics;
pub mod timing;
