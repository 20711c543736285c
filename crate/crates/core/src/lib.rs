//! Passivity-based primary frequency control for power networks.
//!
//! The crate models a network of buses joined by lossless lines, with
//! generation and demand controllers attached to the buses. It simulates
//! the resulting differential-algebraic dynamics, solves the optimal supply
//! and load control problem that the equilibria of suitably designed
//! controllers solve, and checks the passivity conditions that make those
//! equilibria stable.

pub mod analysis;
pub mod cli;
pub mod controllers;
pub mod network;
pub mod oslc;
pub mod passivity;
pub mod report;
pub mod scenario;
pub mod simulator;
pub mod studies;
pub mod system;

mod numeric;
