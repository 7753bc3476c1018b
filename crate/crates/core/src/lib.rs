//! Compositional assume-guarantee verification over lenses.
//!
//! The toolkit represents open systems and the patterns that couple them as
//! *lenses*: a forward map on observations together with a backward map on
//! actions. Everything else is built on that shape.
//!
//! * [`symbol`], [`lens`] — finite carriers, interfaces `⟨A_o|O⟩`, lenses
//!   `⟨w♯|w⟩`, charts `⟨f♯|f⟩`, and the wiring algebra (parallel, cascade,
//!   feedback).
//! * [`machine`] — generalized Moore machines `⟨u|v⟩` over a change structure
//!   (deterministic or powerset), coupling by wiring, simulation maps, traces.
//! * [`certbool`] — boolean certificates `(φ, α, γ)` on finite carriers,
//!   exhaustive certification of lenses and machines, certificate pullback
//!   along charts, and the two proof rules: coupling certified machines
//!   through a certified wiring ([`certbool::comp_rule`]) and transporting a
//!   certificate backwards along a simulation ([`certbool::subst_rule`]).
//! * [`plfun`], [`quant`] — exact piecewise-linear comparison functions
//!   (𝒦 / 𝒦∞ / 𝒦∞⁰), lexicographic value/displacement pairs, and
//!   grid-checked quantitative certificates with additive slack.
//! * [`expr`], [`ode`] — arithmetic expression ASTs with symbolic
//!   differentiation, open ODEs, LISS Lyapunov certificate checking,
//!   𝒦-approximation of storage functions, RK4 simulation, and ISS trajectory
//!   bounds.
//! * [`dsl`] — line-oriented text formats for machines, wirings,
//!   certificates, ODE systems, and simulations, with span-carrying errors
//!   and canonical printers (`parse ∘ print = id`).
//!
//! All values are immutable after construction and every operation is a pure
//! function; grid and enumeration work can be partitioned across workers
//! ([`par`]) with deterministic results.

pub mod certbool;
pub mod dsl;
pub mod error;
pub mod expr;
pub mod lens;
pub mod machine;
pub mod ode;
pub mod par;
pub mod plfun;
pub mod quant;
pub mod symbol;
pub mod verdict;

pub use error::AglError;
pub use lens::{
    compose_chart, compose_lens, identity_chart, identity_lens, make_cascade, make_feedback,
    parallel_lens, Chart, Interface, Lens,
};
pub use machine::{
    check_simulation, couple, parallel_machines, run_trace, Change, ChangeKind, Machine,
    Simulation,
};
pub use symbol::{FiniteSet, Symbol};
pub use verdict::{BoolVerdict, CheckOpts, QuantVerdict};
