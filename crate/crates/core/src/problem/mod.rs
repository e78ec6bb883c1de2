//! Model description, the effective potential `K~`, the envelope `H`, and
//! numerical evidence for the growth assumptions.

pub mod assumptions;
pub mod bounds;
pub mod field;
pub mod model;
pub mod quadrature;

pub use assumptions::{check_assumptions, AssumptionReport, DetectedBranch, RatioTrace, Verdict};
pub use bounds::{
    ball_infimum_ktilde, bound_h, growth_exponents_admissible, mu_h_integral,
    weighted_envelope_integral, BoundParams, Branch, Envelope,
};
pub use field::ScalarField;
pub use model::{effective_potential, ModelSpec};
pub use quadrature::{integrate_decaying, QuadOutcome, QuadStatus};
