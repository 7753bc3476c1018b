//! Piecewise-linear comparison functions and the lexicographic order.
//!
//! Comparison functions (class 𝒦: strictly increasing with f(0)=0; 𝒦∞:
//! additionally unbounded; 𝒦∞⁰ := 𝒦∞ ∪ {0}) are represented as piecewise-
//! linear functions on `[0, ∞)` with finitely many breakpoints and a final
//! slope. The representation is closed under the two operations the slack
//! algebra needs — addition and composition — and both are *exact* on it:
//! the only floating-point effect is evaluation rounding, never structural
//! drift.
//!
//! One collapse is worth knowing: a piecewise-linear 𝒦 function has finitely
//! many segments, so "strictly increasing" forces a positive final slope and
//! hence unboundedness. Every PL 𝒦 function is therefore 𝒦∞, and
//! [`classify`] returns the strongest applicable tag (`KInf`, or `KInf0` for
//! the constant zero).

use crate::error::AglError;

/// Relative tolerance for declaring adjacent segment slopes collinear when
/// canonicalizing.
const COLLINEAR_REL_TOL: f64 = 1e-12;

/// Absolute tie band on the base component of the lexicographic order.
pub const EPS_TIE: f64 = 1e-9;

/// Piecewise-linear function on `[0, ∞)`: linear interpolation between
/// breakpoints, linear extension with `final_slope` beyond the last one.
///
/// The representation is canonical — breakpoints are strictly increasing in
/// `r`, start at `r = 0`, and contain no collinear interior points — so
/// structural equality (`==`) coincides with pointwise equality up to the
/// canonicalization tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct PLFun {
    breakpoints: Vec<(f64, f64)>,
    final_slope: f64,
}

fn slopes_collinear(s1: f64, s2: f64) -> bool {
    (s1 - s2).abs() <= COLLINEAR_REL_TOL * s1.abs().max(s2.abs()).max(1.0)
}

impl PLFun {
    pub fn new(breakpoints: Vec<(f64, f64)>, final_slope: f64) -> Result<Self, AglError> {
        if breakpoints.is_empty() {
            return Err(AglError::InvalidPlFun(
                "at least one breakpoint is required".to_string(),
            ));
        }
        if breakpoints[0].0 != 0.0 {
            return Err(AglError::InvalidPlFun(format!(
                "the first breakpoint must sit at r=0, found r={}",
                breakpoints[0].0
            )));
        }
        if !final_slope.is_finite() {
            return Err(AglError::InvalidPlFun("final slope is not finite".to_string()));
        }
        for window in breakpoints.windows(2) {
            if !(window[1].0 > window[0].0) {
                return Err(AglError::InvalidPlFun(format!(
                    "breakpoint radii must be strictly increasing, found {} after {}",
                    window[1].0, window[0].0
                )));
            }
        }
        for &(r, v) in &breakpoints {
            if !r.is_finite() || !v.is_finite() {
                return Err(AglError::InvalidPlFun(format!(
                    "non-finite breakpoint ({r}, {v})"
                )));
            }
        }

        // Canonicalize: drop interior breakpoints collinear with their
        // neighbours, then trailing breakpoints collinear with the final ray.
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(breakpoints.len());
        for next in breakpoints {
            while out.len() >= 2 {
                let a = out[out.len() - 2];
                let b = out[out.len() - 1];
                let s1 = (b.1 - a.1) / (b.0 - a.0);
                let s2 = (next.1 - b.1) / (next.0 - b.0);
                if slopes_collinear(s1, s2) {
                    out.pop();
                } else {
                    break;
                }
            }
            out.push(next);
        }
        while out.len() >= 2 {
            let a = out[out.len() - 2];
            let b = out[out.len() - 1];
            let s_in = (b.1 - a.1) / (b.0 - a.0);
            if slopes_collinear(s_in, final_slope) {
                out.pop();
            } else {
                break;
            }
        }
        Ok(PLFun {
            breakpoints: out,
            final_slope,
        })
    }

    /// The identity `r ↦ r`.
    pub fn identity() -> Self {
        PLFun {
            breakpoints: vec![(0.0, 0.0)],
            final_slope: 1.0,
        }
    }

    /// The constant zero function.
    pub fn zero() -> Self {
        PLFun {
            breakpoints: vec![(0.0, 0.0)],
            final_slope: 0.0,
        }
    }

    /// The linear function `r ↦ slope · r`.
    pub fn linear(slope: f64) -> Result<Self, AglError> {
        PLFun::new(vec![(0.0, 0.0)], slope)
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn final_slope(&self) -> f64 {
        self.final_slope
    }

    /// Evaluate at `r ≥ 0`.
    pub fn eval(&self, r: f64) -> Result<f64, AglError> {
        if r < 0.0 || !r.is_finite() {
            return Err(AglError::NegativePlArg(r));
        }
        Ok(self.eval_unchecked(r))
    }

    /// Evaluate with tiny negative arguments clamped to 0. Storage and
    /// guarantee values are mathematically nonnegative but can round to
    /// values like −1e−17; clamping keeps those calls total without hiding
    /// genuinely negative inputs at the call sites that validate them.
    pub fn eval_clamped(&self, r: f64) -> f64 {
        self.eval_unchecked(r.max(0.0))
    }

    fn eval_unchecked(&self, r: f64) -> f64 {
        let last = *self.breakpoints.last().expect("nonempty");
        if r >= last.0 {
            return last.1 + self.final_slope * (r - last.0);
        }
        // Find the segment containing r: the last breakpoint with radius ≤ r.
        let idx = match self
            .breakpoints
            .binary_search_by(|probe| probe.0.partial_cmp(&r).expect("finite radii"))
        {
            Ok(i) => return self.breakpoints[i].1,
            Err(i) => i - 1, // i ≥ 1 because breakpoints[0].0 = 0 ≤ r
        };
        let (r0, v0) = self.breakpoints[idx];
        let (r1, v1) = self.breakpoints[idx + 1];
        v0 + (v1 - v0) * (r - r0) / (r1 - r0)
    }

    /// True iff the function is nonnegative on all of `[0, ∞)`. Exact for
    /// the PL representation: every value is a convex combination of
    /// breakpoint values, and the tail is controlled by the final slope.
    pub fn is_nonnegative(&self) -> bool {
        self.breakpoints.iter().all(|&(_, v)| v >= 0.0) && self.final_slope >= 0.0
    }

    fn is_strictly_increasing(&self) -> bool {
        let increasing_segments = self
            .breakpoints
            .windows(2)
            .all(|w| w[1].1 > w[0].1);
        increasing_segments && self.final_slope > 0.0
    }
}

/// Comparison-function class tags, most specific applicable:
///
/// * `K`: strictly increasing with `f(0) = 0` (unused by [`classify`] on the
///   PL representation — see the module docs — but part of the vocabulary).
/// * `KInf`: `K` and unbounded.
/// * `KInf0`: the constant zero (together with `KInf`, these are the members
///   of 𝒦∞⁰).
/// * `None`: not a comparison function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlClass {
    K,
    KInf,
    KInf0,
    None,
}

impl PlClass {
    /// Membership in 𝒦∞⁰ = 𝒦∞ ∪ {0}.
    pub fn in_kinf0(self) -> bool {
        matches!(self, PlClass::KInf | PlClass::KInf0)
    }

    /// Membership in 𝒦∞.
    pub fn in_kinf(self) -> bool {
        matches!(self, PlClass::KInf)
    }
}

/// Evaluate `f(r)`; errors on negative `r`.
pub fn pl_eval(f: &PLFun, r: f64) -> Result<f64, AglError> {
    f.eval(r)
}

/// Exact pointwise sum over the merged breakpoints.
pub fn pl_add(f: &PLFun, g: &PLFun) -> PLFun {
    let mut radii: Vec<f64> = f
        .breakpoints
        .iter()
        .chain(g.breakpoints.iter())
        .map(|&(r, _)| r)
        .collect();
    radii.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
    radii.dedup();
    let bps: Vec<(f64, f64)> = radii
        .into_iter()
        .map(|r| (r, f.eval_unchecked(r) + g.eval_unchecked(r)))
        .collect();
    PLFun::new(bps, f.final_slope + g.final_slope).expect("sum of valid PL functions is valid")
}

/// Exact composition `f ∘ g`. The result's breakpoints are `g`'s own plus
/// every radius where `g` crosses a breakpoint radius of `f`; between any
/// two of those, `f ∘ g` is genuinely linear.
///
/// Requires `g ≥ 0` everywhere (automatic for 𝒦-class inner functions) so
/// that `f`'s domain is respected.
pub fn pl_compose(f: &PLFun, g: &PLFun) -> Result<PLFun, AglError> {
    if !g.is_nonnegative() {
        return Err(AglError::ComparisonClass(
            "the inner function of a composition must be nonnegative on [0, ∞)".to_string(),
        ));
    }
    let mut radii: Vec<f64> = g.breakpoints.iter().map(|&(r, _)| r).collect();
    // Crossings inside g's interior segments.
    for w in g.breakpoints.windows(2) {
        let (r0, v0) = w[0];
        let (r1, v1) = w[1];
        if v0 == v1 {
            continue;
        }
        for &(s, _) in &f.breakpoints {
            let t = (s - v0) / (v1 - v0);
            if t > 0.0 && t < 1.0 {
                radii.push(r0 + t * (r1 - r0));
            }
        }
    }
    // Crossings on g's final ray.
    let (r_last, v_last) = *g.breakpoints.last().expect("nonempty");
    if g.final_slope > 0.0 {
        for &(s, _) in &f.breakpoints {
            if s > v_last {
                radii.push(r_last + (s - v_last) / g.final_slope);
            }
        }
    }
    radii.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
    radii.dedup_by(|b, a| (*b - *a).abs() <= 1e-12 * a.abs().max(1.0));

    let bps: Vec<(f64, f64)> = radii
        .into_iter()
        .map(|r| (r, f.eval_unchecked(g.eval_unchecked(r))))
        .collect();
    let final_slope = if g.final_slope == 0.0 {
        0.0
    } else {
        f.final_slope * g.final_slope
    };
    PLFun::new(bps, final_slope)
}

/// Classify into the strongest applicable comparison-function class (see
/// the module docs for the PL collapse 𝒦 ⟹ 𝒦∞).
pub fn classify(f: &PLFun) -> PlClass {
    let is_zero = f.breakpoints.iter().all(|&(_, v)| v == 0.0) && f.final_slope == 0.0;
    if is_zero {
        return PlClass::KInf0;
    }
    if f.eval_unchecked(0.0) == 0.0 && f.is_strictly_increasing() {
        return PlClass::KInf;
    }
    PlClass::None
}

/// The function `r ↦ r − f(r)` (exact on the shared breakpoints).
pub fn id_minus(f: &PLFun) -> PLFun {
    let bps: Vec<(f64, f64)> = f.breakpoints.iter().map(|&(r, v)| (r, r - v)).collect();
    PLFun::new(bps, 1.0 - f.final_slope).expect("id − f inherits a valid breakpoint list")
}

/// The decrease-rate side condition `id − λ ∈ 𝒦∞`: equivalently `λ(0) = 0`
/// and every slope of `λ` (including the final one) is < 1. The constant
/// zero has this property.
pub fn id_minus_in_kinf(lambda: &PLFun) -> bool {
    classify(&id_minus(lambda)) == PlClass::KInf
}

/// A value paired with its instantaneous rate, ordered lexicographically: a
/// strictly larger base dominates regardless of the rates, and rates break
/// ties. Base comparisons use the absolute tie band [`EPS_TIE`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LexPair {
    pub base: f64,
    pub tangent: f64,
}

impl LexPair {
    pub fn new(base: f64, tangent: f64) -> Self {
        LexPair { base, tangent }
    }
}

/// `p ⪰ q`: `p.base > q.base` beyond the tie band, or a base tie with
/// `p.tangent ≥ q.tangent`.
pub fn lex_geq(p: LexPair, q: LexPair) -> bool {
    if p.base > q.base + EPS_TIE {
        return true;
    }
    if q.base > p.base + EPS_TIE {
        return false;
    }
    p.tangent >= q.tangent
}

/// `p ⪯ q`, i.e. `lex_geq(q, p)`.
pub fn lex_leq(p: LexPair, q: LexPair) -> bool {
    lex_geq(q, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pl(bps: &[(f64, f64)], slope: f64) -> PLFun {
        PLFun::new(bps.to_vec(), slope).unwrap()
    }

    #[test]
    fn eval_identity_and_zero() {
        assert_eq!(PLFun::identity().eval(2.5).unwrap(), 2.5);
        for r in [0.0, 0.3, 7.0] {
            assert_eq!(PLFun::zero().eval(r).unwrap(), 0.0);
        }
    }

    #[test]
    fn eval_beyond_last_breakpoint_follows_the_final_ray() {
        let f = pl(&[(0.0, 0.0), (1.0, 2.0)], 0.5);
        assert_eq!(f.eval(3.0).unwrap(), 3.0); // 2 + 0.5·2
        assert_eq!(f.eval(0.5).unwrap(), 1.0);
        assert_eq!(f.eval(1.0).unwrap(), 2.0);
    }

    #[test]
    fn negative_arguments_are_rejected_but_dust_is_clamped() {
        let f = PLFun::identity();
        assert!(matches!(f.eval(-0.1), Err(AglError::NegativePlArg(_))));
        assert_eq!(f.eval_clamped(-1e-17), 0.0);
    }

    #[test]
    fn add_unit_and_doubling() {
        let f = pl(&[(0.0, 0.0), (1.0, 2.0)], 0.5);
        assert_eq!(pl_add(&f, &PLFun::zero()), f);
        let two_id = pl_add(&PLFun::identity(), &PLFun::identity());
        assert_eq!(two_id, PLFun::linear(2.0).unwrap());
    }

    #[test]
    fn canonicalization_removes_collinear_points() {
        let f = pl(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)], 1.0);
        assert_eq!(f, PLFun::identity());
        // A breakpoint whose incoming slope equals the final slope is
        // likewise dropped.
        let g = pl(&[(0.0, 0.0), (1.0, 3.0)], 3.0);
        assert_eq!(g, PLFun::linear(3.0).unwrap());
    }

    #[test]
    fn invalid_breakpoint_lists_are_rejected() {
        assert!(PLFun::new(vec![], 1.0).is_err());
        assert!(PLFun::new(vec![(0.5, 0.0)], 1.0).is_err());
        assert!(PLFun::new(vec![(0.0, 0.0), (0.0, 1.0)], 1.0).is_err());
        assert!(PLFun::new(vec![(0.0, f64::NAN)], 1.0).is_err());
    }

    #[test]
    fn compose_matches_the_pointwise_oracle() {
        let f = pl(&[(0.0, 0.0), (1.0, 2.0)], 0.5);
        let g = pl(&[(0.0, 0.0), (2.0, 1.0)], 0.5);
        let fg = pl_compose(&f, &g).unwrap();
        assert_eq!(fg.eval(2.0).unwrap(), 2.0); // f(g(2)) = f(1) = 2
        for k in 0..100 {
            let r = 0.07 * k as f64;
            let direct = f.eval(g.eval(r).unwrap()).unwrap();
            assert!(
                (fg.eval(r).unwrap() - direct).abs() <= 1e-12,
                "mismatch at r={r}"
            );
        }
    }

    #[test]
    fn compose_rejects_negative_inner_functions() {
        let f = PLFun::identity();
        let g = pl(&[(0.0, -1.0)], 1.0);
        assert!(pl_compose(&f, &g).is_err());
        let h = pl(&[(0.0, 0.0)], -1.0); // eventually negative
        assert!(pl_compose(&f, &h).is_err());
    }

    #[test]
    fn classification() {
        assert_eq!(classify(&PLFun::identity()), PlClass::KInf);
        assert_eq!(classify(&PLFun::zero()), PlClass::KInf0);
        assert!(PlClass::KInf0.in_kinf0() && PlClass::KInf.in_kinf0());
        assert!(!PlClass::KInf0.in_kinf());
        // f(0) ≠ 0 is out.
        assert_eq!(classify(&pl(&[(0.0, 1.0)], 1.0)), PlClass::None);
        // A flat segment breaks strict monotonicity.
        assert_eq!(
            classify(&pl(&[(0.0, 0.0), (1.0, 0.0)], 1.0)),
            PlClass::None
        );
        // Bounded (zero final slope) is not 𝒦∞ and, being nonzero, not 𝒦∞⁰.
        assert_eq!(
            classify(&pl(&[(0.0, 0.0), (1.0, 1.0)], 0.0)),
            PlClass::None
        );
    }

    #[test]
    fn decrease_rate_side_condition() {
        assert!(id_minus_in_kinf(&PLFun::zero()));
        assert!(id_minus_in_kinf(&PLFun::linear(0.5).unwrap()));
        assert!(!id_minus_in_kinf(&PLFun::identity()));
        assert!(!id_minus_in_kinf(&pl(&[(0.0, 0.0), (1.0, 0.2)], 2.0)));
        // λ(0) ≠ 0 fails regardless of slopes.
        assert!(!id_minus_in_kinf(&pl(&[(0.0, 0.5)], 0.1)));
    }

    #[test]
    fn lexicographic_order_examples() {
        let p = |b, t| LexPair::new(b, t);
        assert!(lex_geq(p(1.0, -5.0), p(0.0, 100.0)));
        assert!(!lex_geq(p(1.0, 1.0), p(1.0, 2.0)));
        assert!(lex_geq(p(1.0, 2.0), p(1.0, 2.0)));
        assert!(lex_leq(p(0.0, 100.0), p(1.0, -5.0)));
        // Within the tie band the tangents decide.
        assert!(lex_geq(p(1.0, 3.0), p(1.0 + 1e-12, 2.0)));
    }

    fn arb_kinf() -> impl Strategy<Value = PLFun> {
        (
            proptest::collection::vec((0.1f64..3.0, 0.1f64..3.0), 0..5),
            0.1f64..3.0,
        )
            .prop_map(|(segments, final_slope)| {
                let mut bps = vec![(0.0, 0.0)];
                let (mut r, mut v) = (0.0, 0.0);
                for (dr, slope) in segments {
                    r += dr;
                    v += dr * slope;
                    bps.push((r, v));
                }
                PLFun::new(bps, final_slope).unwrap()
            })
    }

    proptest! {
        #[test]
        fn add_agrees_with_the_pointwise_oracle(f in arb_kinf(), g in arb_kinf(), rs in proptest::collection::vec(0.0f64..20.0, 10)) {
            let sum = pl_add(&f, &g);
            for r in rs {
                let direct = f.eval(r).unwrap() + g.eval(r).unwrap();
                prop_assert!((sum.eval(r).unwrap() - direct).abs() <= 1e-12);
            }
        }

        #[test]
        fn compose_agrees_with_the_pointwise_oracle(f in arb_kinf(), g in arb_kinf(), rs in proptest::collection::vec(0.0f64..20.0, 10)) {
            let fg = pl_compose(&f, &g).unwrap();
            for r in rs {
                let direct = f.eval(g.eval(r).unwrap()).unwrap();
                prop_assert!((fg.eval(r).unwrap() - direct).abs() <= 1e-12);
            }
        }

        #[test]
        fn kinf_is_closed_under_add_and_compose(f in arb_kinf(), g in arb_kinf()) {
            prop_assert_eq!(classify(&f), PlClass::KInf);
            prop_assert_eq!(classify(&pl_add(&f, &g)), PlClass::KInf);
            prop_assert_eq!(classify(&pl_compose(&f, &g).unwrap()), PlClass::KInf);
        }

        #[test]
        fn lex_order_laws(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, t1 in -5.0f64..5.0, t2 in -5.0f64..5.0, t3 in -5.0f64..5.0) {
            let p = LexPair::new(a, t1);
            let q = LexPair::new(b, t2);
            let r = LexPair::new(c, t3);
            prop_assert!(lex_geq(p, p), "reflexive");
            prop_assert!(lex_geq(p, q) || lex_geq(q, p), "total");
            // A strictly larger base dominates regardless of tangents.
            if a > b + EPS_TIE {
                prop_assert!(lex_geq(p, q));
                prop_assert!(!lex_geq(q, p));
            }
            // Transitivity away from the tie band.
            if (a - b).abs() > 2.0 * EPS_TIE && (b - c).abs() > 2.0 * EPS_TIE && (a - c).abs() > 2.0 * EPS_TIE
                && lex_geq(p, q) && lex_geq(q, r) {
                prop_assert!(lex_geq(p, r));
            }
        }
    }
}
