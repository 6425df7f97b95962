//! Numerical toolkit for the nonlocal reaction–diffusion problem
//!
//! ```text
//! u_t = Δu + λ f(u) / (∫_Ω f(u) dx)^p,   u = 0 on ∂Ω,
//! ```
//!
//! on intervals and balls: local steady states and the bifurcation curve
//! `λ(μ)`, method-of-lines dynamics with blow-up detection, quasi-steady
//! comparison envelopes, and blow-up rate asymptotics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod comparison;
pub mod domain;
pub mod error;
pub mod evolution;
pub mod io;
pub mod nonlinearity;
pub mod ode;
pub mod quadrature;
pub mod roots;
pub mod steady;

pub use domain::DomainSpec;
pub use error::{Error, Result};
pub use nonlinearity::{Nonlinearity, TailForm};
