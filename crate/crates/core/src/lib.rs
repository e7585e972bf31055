//! Hybrid Krylov projection methods for discrete linear inverse problems.
//!
//! The crate solves `b = A x + e` for matrix-free operators by growing a
//! Krylov subspace (Golub-Kahan, Arnoldi or their flexible variants) and
//! applying Tikhonov regularization to the small projected problem, with the
//! regularization parameter chosen afresh at every iteration.
//!
//! ```
//! use hybrid_krylov::hybrid::{run_hybrid, HybridOptions, Method};
//! use hybrid_krylov::paramselect::{Rule, RuleConfig};
//! use hybrid_krylov::testproblems::{make_deblur_problem, PsfParams};
//!
//! let prob = make_deblur_problem(16, PsfParams::default(), 1e-2, 7).unwrap();
//! let mut opts = HybridOptions::new(Method::HybridLsqr, RuleConfig::new(Rule::Gcv));
//! opts.max_iter = 20;
//! let log = run_hybrid(prob.a.as_ref(), &prob.b, &opts, Some(&prob.x_true)).unwrap();
//! assert!(!log.records.is_empty());
//! ```

pub mod cli;
pub mod direct;
pub mod error;
pub mod hybrid;
pub mod krylov;
pub mod linalg;
pub mod nonlinear;
pub mod operators;
pub mod paramselect;
pub mod projected;
pub mod testproblems;

pub use error::{Error, Result};
pub use operators::LinearMap;
