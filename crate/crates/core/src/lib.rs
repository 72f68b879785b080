//! Bayesian inference for under-reported counts with the hierarchical
//! Poisson–logistic thinning ("Pogit") model.
//!
//! The crate covers the model itself ([`model`]), covariate bases
//! ([`ortho_poly`]), a purpose-built MCMC engine ([`mcmc`]), corrected-count
//! prediction ([`prediction`]), predictive checks ([`checking`]), simulation
//! studies ([`simulation`], [`experiments`]) and prior elicitation
//! ([`elicitation`]), plus plain-text I/O ([`io`]).

pub mod checking;
pub mod data;
pub mod dist;
pub mod elicitation;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod hash;
pub mod io;
pub mod mcmc;
pub mod model;
pub mod ortho_poly;
pub mod prediction;
pub mod rng;
pub mod simulation;

pub use error::{Error, ErrorClass, Result};
