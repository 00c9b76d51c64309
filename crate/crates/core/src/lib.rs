//! Numerical laboratory for greedy-type approximation with respect to
//! finite minimal systems.
//!
//! A [`MinimalSystem`] is a finite family `x_1..x_N` in a normed `R^d` with
//! biorthogonal functionals. On top of it the crate provides greedy and
//! branch greedy sums, Chebyshev `m`-term approximants, exact best `m`-term
//! errors, corpus-based lower bounds for the usual greedy-type constants,
//! and the explicit counterexample families together with their claimed
//! bounds.

pub mod approx;
pub mod checks;
pub mod constants;
pub mod constructions;
pub mod error;
pub mod greedy;
pub mod lp;
pub mod spaces;

pub use approx::{chebyshev_approximant, sigma_m, sigma_tilde_m, Backend, ChebSolution, MTermError};
pub use checks::{check_inequalities, KnownBound, Knowns, Status};
pub use constants::{Constant, ConstantEstimate, Corpus, CorpusSpec, Direction, Lab};
pub use constructions::{build_example, ExampleSpec, ExampleSystem, Family};
pub use error::{Error, Result};
pub use greedy::{
    branch_active_set, branch_greedy_sum, greedy_ordering, greedy_set, greedy_sum, BranchSelector, SelectionRule,
    ThresholdingSet,
};
pub use spaces::{CoeffVec, IndexSet, MinimalSystem, NormSpec};
