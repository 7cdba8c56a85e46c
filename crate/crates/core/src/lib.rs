//! Simulator for a three-cavity Kerr circuit that emits individual pairs of
//! color-conjugated photons through resonant four-wave mixing and photon
//! blockade.

pub mod circuit;
pub mod dense;
pub mod fock;
pub mod lindblad;
pub mod observables;
pub mod sweep;
