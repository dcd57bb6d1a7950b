//! Finite-volume simulator and verification harness for the chemotaxis
//! system with logistic source and nonlinear Neumann boundary flux
//!
//! ```text
//! u_t      = Δu − χ∇·(u∇v) + au − μu²      ∂u/∂ν = |u|^p
//! τ v_t    = Δv + αu − βv                  ∂v/∂ν = 0
//! ```
//!
//! together with the scalar problem `U_t = ΔU − μU^Q`, `∂U/∂ν = U^P`.

pub mod grid;
pub mod harness;
pub mod inequality_lab;
pub mod model;
pub mod monitors;
pub mod operators;
pub mod stepper;
