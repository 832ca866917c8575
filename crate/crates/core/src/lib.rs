//! Coset CFT data and SLE martingale relations, with a Loewner-flow Monte
//! Carlo harness for the stochastic side.
//!
//! The algebraic half ([`liealg`], [`coset`], [`martingale`]) is exact: every
//! quantity is a `BigRational`. The stochastic half ([`loewner`], [`mcheck`])
//! is 64-bit floating point with counter-based, per-trajectory random streams
//! so ensembles are reproducible under any thread count.

pub mod error;
pub mod exact;
pub mod coset;
pub mod liealg;
pub mod martingale;
pub mod rng;
pub mod loewner;
pub mod mcheck;

pub use error::{Error, Result};
pub use exact::Rational;
pub use coset::{make_family, CosetConfig, CosetSpec, Factor, Family, HConvention, PrimaryLabel, RawCosetData};
pub use liealg::{Kind, SimpleAlgebra, Weight};
pub use martingale::{build_system, scan, solve, Classification, MartingaleSolution, MartingaleSystem, SolutionRecord};
pub use rng::RngSpec;
pub use loewner::{covariance_check, evolve_points, generate_trace, FlowParams, FlowState, GroupNoise, LoewnerFlow, Side, Trace, TrackedPoint};
pub use mcheck::{drift_test, drift_test_many, left_passage_estimate, schramm_formula, DriftParams, DriftReport, Observable, PassageEstimate, PassageMethod, PassageParams};
