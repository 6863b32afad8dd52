//! Lagrangian particle simulation of the Vlasov-Poisson system in a
//! half-space or a ball with a grounded boundary and specular reflection.

pub mod cli;
pub mod diagnostics;
pub mod ensemble;
pub mod fields;
pub mod flow;
pub mod geometry;
pub mod selfconsistent;
pub mod vector;
