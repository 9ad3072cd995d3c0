//! Disturbance-decoupled functional observers for nonlinear systems.
//!
//! The crate is organized bottom-up:
//!
//! * [`expr`] — symbolic expressions, differentiation and Lie derivatives;
//! * [`model`] — plant description files, structure extraction, steady
//!   states, deviation form and fault exo-systems;
//! * [`design`] — existence conditions, sampled least-squares solve for the
//!   output weights, companion-form realization and identity checks;
//! * [`sim`] — fixed-step RK4 co-simulation of plant and observer;
//! * [`diagnose`] — one observer per fault, detection and estimation.

pub mod expr;
pub mod model;
pub mod design;
pub mod sim;
pub mod diagnose;
