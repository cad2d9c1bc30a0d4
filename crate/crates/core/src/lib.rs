//! Ultraweak discontinuous Petrov–Galerkin discretisation of the
//! Kirchhoff–Love plate, with and without a gradient variable.
//!
//! The crate is organised bottom-up: [`poly`] and [`mesh`] provide the
//! geometric and algebraic substrate, [`transforms`] and [`trace_spaces`]
//! the element-level function spaces, [`dpg_core`] and [`estimator`] the
//! discretisation and adaptive loop, [`fortin_lab`] the reference-element
//! Fortin operators, [`problems`] the model problems and [`cli`] the driver.

pub mod mesh;
pub mod poly;
pub mod dpg_core;
pub mod trace_spaces;
pub mod transforms;
pub mod estimator;
pub mod problems;
pub mod fortin_lab;
pub mod cli;
