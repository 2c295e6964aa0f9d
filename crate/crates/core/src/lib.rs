//! Concentration bounds for sums of independent univariate random variables
//! with fixed moments.
//!
//! Given `n` independent random variables with known support and known
//! moments (mean, and optionally higher orders), this crate computes upper
//! bounds on the tail probability
//!
//! ```text
//! P( X_1 + ... + X_n >= n*t + sum_i E[X_i] )
//! ```
//!
//! alongside independent lower-bound oracles and worst-case distribution
//! reconstructions. Several bound families are available:
//!
//! * textbook closed forms: Hoeffding, Bernstein, Bennett, Chernoff
//!   ([`closed_form`]),
//! * the exact univariate moment-problem value and its linear-family twin
//!   ([`closed_form::exact_univariate`], [`closed_form::linear_bound`]),
//! * the product-function (variational) bound, solved over the vertices of
//!   the tail polytope ([`variational`]),
//! * sum-of-squares bounds for second-order moment assumptions, backed by a
//!   self-contained dense conic solver ([`sos`], [`sdp`]),
//! * discretized-LP, product-search and Monte Carlo verification oracles
//!   ([`oracle`]), and worst-case distribution reconstruction ([`extremal`]).

pub mod closed_form;
pub mod extremal;
pub mod moments;
pub mod oracle;
pub mod poly;
pub mod sdp;
pub mod sos;
pub mod variational;

pub use moments::{
    AffineMap, BoundResult, DeviationQuery, Diagnostics, DiscreteDistribution, Method,
    MomentError, MomentSpec, ProductDistribution, SolveStatus, SupportInterval,
};
