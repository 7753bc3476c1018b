//! Quantitative certificates with slack, checked on sampling grids.
//!
//! A quantitative certificate over an observation/action space pair is a
//! pair of scalar bounds `⟨α|γ⟩`; a lens `⟨w♯|w⟩` between two certified
//! spaces is certified *with slack* `κ ∈ 𝒦∞⁰` when, at every point,
//!
//! ```text
//! α₂(w(o₁), a₂) + κ(γ₁(o₁)) ≥ α₁(o₁, w♯(o₁,a₂))      (assumption-slack)
//! γ₁(o₁) ≥ γ₂(w(o₁))                                  (guarantee-monotone)
//! ```
//!
//! Slacks add under composition: if the inner lens is certified with κ₁ and
//! the outer with κ₂, the composite is certified with κ₁ + κ₂ (the
//! composite is nevertheless re-verified on its own grid before being
//! returned, so tolerance interactions surface instead of accumulating).
//!
//! A note on the κ side condition in the sequential (cascade) setting: one
//! natural reading requires κ(γ₁) to dominate the *first* system's
//! assumption α₁, but the inequality chain that actually discharges the
//! composite requires κ(γ₁(m)) to dominate the *second* system's assumption
//! fed by the first's guarantee, i.e. α₂(m). The checkers here take no side
//! on the reading: [`certify_quant_lens`] evaluates the two displayed
//! inequalities directly, and the sequential examples in the tests document
//! which instantiation passes.
//!
//! All checks are grid-based. The grid ([`SamplePlan`]) is recorded in every
//! verdict, sample points are enumerated in a fixed row-major order (first
//! dimension slowest), and the worst sample is selected by
//! `(margin, sample index, condition)` — so verdicts are reproducible
//! bit-for-bit at any worker count.

use serde::Serialize;

use crate::error::AglError;
use crate::expr::{check_vars, eval_expr, shift_vars, substitute, Env, Expr};
use crate::par::try_fold_min;
use crate::plfun::{classify, pl_add, PLFun};
use crate::verdict::{CheckOpts, QuantVerdict, Tolerances};

/// Rectangular sampling grid: per-dimension closed ranges, one shared step.
/// Dimension 0 varies slowest in the enumeration order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplePlan {
    ranges: Vec<(f64, f64)>,
    step: f64,
}

impl SamplePlan {
    pub fn new(ranges: Vec<(f64, f64)>, step: f64) -> Result<Self, AglError> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(AglError::InvalidSamplePlan(format!(
                "step must be a positive finite number, got {step}"
            )));
        }
        for &(lo, hi) in &ranges {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(AglError::InvalidSamplePlan(format!(
                    "range [{lo}, {hi}] is not a finite closed interval"
                )));
            }
        }
        Ok(SamplePlan { ranges, step })
    }

    pub fn dims(&self) -> usize {
        self.ranges.len()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    /// Number of samples along dimension `d`: the lattice `lo, lo+step, …`
    /// clipped to the closed range (with a tiny slack so that ranges that
    /// are exact multiples of the step include their upper endpoint).
    pub fn points_per_dim(&self, d: usize) -> usize {
        let (lo, hi) = self.ranges[d];
        ((hi - lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn total_points(&self) -> usize {
        (0..self.dims()).map(|d| self.points_per_dim(d)).product()
    }

    /// The `index`-th sample in row-major order (dimension 0 slowest).
    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let mut coords = vec![0.0; self.dims()];
        for d in (0..self.dims()).rev() {
            let n = self.points_per_dim(d);
            let i = index % n;
            index /= n;
            coords[d] = self.ranges[d].0 + i as f64 * self.step;
        }
        coords
    }

    /// Restriction to a contiguous subset of the dimensions.
    pub fn slice(&self, range: std::ops::Range<usize>) -> SamplePlan {
        SamplePlan {
            ranges: self.ranges[range].to_vec(),
            step: self.step,
        }
    }

    /// Side-by-side product of two plans; the steps must agree.
    pub fn concat(&self, other: &SamplePlan) -> Result<SamplePlan, AglError> {
        if self.step != other.step {
            return Err(AglError::InvalidSamplePlan(format!(
                "cannot concatenate plans with different steps {} and {}",
                self.step, other.step
            )));
        }
        let mut ranges = self.ranges.clone();
        ranges.extend_from_slice(&other.ranges);
        Ok(SamplePlan { ranges, step: self.step })
    }
}

/// One grid sample together with the condition it violates least; the fold
/// over a grid keeps the minimum by `(margin, index, condition)`.
#[derive(Clone, Debug)]
pub(crate) struct WorstSample {
    pub margin: f64,
    pub index: usize,
    pub cond: usize,
    pub point: Vec<f64>,
}

impl WorstSample {
    /// Non-finite margins (overflow, 0/0 in user expressions) count as
    /// unbounded violations so they can never be out-ranked by a finite one.
    pub fn new(margin: f64, index: usize, cond: usize, point: Vec<f64>) -> Self {
        let margin = if margin.is_finite() {
            margin
        } else {
            f64::NEG_INFINITY
        };
        WorstSample {
            margin,
            index,
            cond,
            point,
        }
    }
}

pub(crate) fn worse(a: WorstSample, b: WorstSample) -> WorstSample {
    let b_wins = b.margin < a.margin
        || (b.margin == a.margin
            && (b.index < a.index || (b.index == a.index && b.cond < a.cond)));
    if b_wins {
        b
    } else {
        a
    }
}

/// Scalar assume-guarantee bounds over a `(observation, action)` space of
/// declared dimensions: `γ` over observation variables `o1..`, `α` over
/// observation and action variables. `γ` must vanish at the base point
/// (the origin).
#[derive(Clone, Debug, PartialEq)]
pub struct QuantCertificate {
    obs_dim: usize,
    act_dim: usize,
    gamma: Expr,
    alpha: Expr,
}

impl QuantCertificate {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        gamma: Expr,
        alpha: Expr,
    ) -> Result<Self, AglError> {
        check_vars(&gamma, 0, 0, obs_dim)?;
        check_vars(&alpha, 0, act_dim, obs_dim)?;
        let origin = vec![0.0; obs_dim];
        let at_base = eval_expr(&gamma, &Env::new(&[], &[], &origin))?;
        if at_base.abs() > 1e-9 {
            return Err(AglError::InvalidCandidate(format!(
                "γ must vanish at the base point; γ(0) = {at_base:e}"
            )));
        }
        Ok(QuantCertificate {
            obs_dim,
            act_dim,
            gamma,
            alpha,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn gamma(&self) -> &Expr {
        &self.gamma
    }

    pub fn alpha(&self) -> &Expr {
        &self.alpha
    }

    pub fn gamma_at(&self, o: &[f64]) -> Result<f64, AglError> {
        eval_expr(&self.gamma, &Env::new(&[], &[], o))
    }

    pub fn alpha_at(&self, o: &[f64], a: &[f64]) -> Result<f64, AglError> {
        eval_expr(&self.alpha, &Env::new(&[], a, o))
    }

    /// Sampled definiteness: `γ > tol_def` at every plan sample at distance
    /// ≥ `r_excl` from the origin. The plan must range over the observation
    /// space.
    pub fn check_definite(
        &self,
        plan: &SamplePlan,
        tol_def: f64,
        r_excl: f64,
    ) -> Result<(), AglError> {
        if plan.dims() != self.obs_dim {
            return Err(AglError::InvalidSamplePlan(format!(
                "definiteness plan has {} dimensions, the observation space has {}",
                plan.dims(),
                self.obs_dim
            )));
        }
        for i in 0..plan.total_points() {
            let o = plan.point(i);
            let radius = o.iter().map(|c| c * c).sum::<f64>().sqrt();
            if radius < r_excl {
                continue;
            }
            let v = self.gamma_at(&o)?;
            if !(v > tol_def) {
                return Err(AglError::InvalidCandidate(format!(
                    "γ is not definite: γ({o:?}) = {v:e} at distance {radius:e} from the base point"
                )));
            }
        }
        Ok(())
    }
}

/// A lens between observation/action spaces given by expressions:
/// `fwd : O₁ → O₂` over source observation variables, and
/// `bwd : O₁ × A₂ → A₁` over source observation and target action variables.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantLens {
    obs_src: usize,
    act_src: usize,
    obs_dst: usize,
    act_dst: usize,
    fwd: Vec<Expr>,
    bwd: Vec<Expr>,
}

impl QuantLens {
    pub fn new(
        obs_src: usize,
        act_src: usize,
        obs_dst: usize,
        act_dst: usize,
        fwd: Vec<Expr>,
        bwd: Vec<Expr>,
    ) -> Result<Self, AglError> {
        if fwd.len() != obs_dst {
            return Err(AglError::DimensionMismatch(format!(
                "forward map has {} components, the target observation space has {}",
                fwd.len(),
                obs_dst
            )));
        }
        if bwd.len() != act_src {
            return Err(AglError::DimensionMismatch(format!(
                "backward map has {} components, the source action space has {}",
                bwd.len(),
                act_src
            )));
        }
        for e in &fwd {
            check_vars(e, 0, 0, obs_src)?;
        }
        for e in &bwd {
            check_vars(e, 0, act_dst, obs_src)?;
        }
        Ok(QuantLens {
            obs_src,
            act_src,
            obs_dst,
            act_dst,
            fwd,
            bwd,
        })
    }

    pub fn identity(obs_dim: usize, act_dim: usize) -> Self {
        QuantLens {
            obs_src: obs_dim,
            act_src: act_dim,
            obs_dst: obs_dim,
            act_dst: act_dim,
            fwd: (1..=obs_dim).map(|i| Expr::Var(crate::expr::VarKind::Obs, i)).collect(),
            bwd: (1..=act_dim).map(|i| Expr::Var(crate::expr::VarKind::Input, i)).collect(),
        }
    }

    pub fn obs_src(&self) -> usize {
        self.obs_src
    }

    pub fn act_src(&self) -> usize {
        self.act_src
    }

    pub fn obs_dst(&self) -> usize {
        self.obs_dst
    }

    pub fn act_dst(&self) -> usize {
        self.act_dst
    }

    pub fn fwd(&self) -> &[Expr] {
        &self.fwd
    }

    pub fn bwd(&self) -> &[Expr] {
        &self.bwd
    }

    pub fn fwd_at(&self, o1: &[f64]) -> Result<Vec<f64>, AglError> {
        let env = Env::new(&[], &[], o1);
        self.fwd.iter().map(|e| eval_expr(e, &env)).collect()
    }

    pub fn bwd_at(&self, o1: &[f64], a2: &[f64]) -> Result<Vec<f64>, AglError> {
        let env = Env::new(&[], a2, o1);
        self.bwd.iter().map(|e| eval_expr(e, &env)).collect()
    }

    /// Composite `outer ∘ inner` by expression substitution:
    /// forward `o₁ ↦ outer.fwd(inner.fwd(o₁))`, backward
    /// `(o₁,a₃) ↦ inner.bwd(o₁, outer.bwd(inner.fwd(o₁), a₃))`.
    pub fn compose(outer: &QuantLens, inner: &QuantLens) -> Result<QuantLens, AglError> {
        if inner.obs_dst != outer.obs_src || inner.act_dst != outer.act_src {
            return Err(AglError::DimensionMismatch(format!(
                "cannot compose: inner target is ({}, {})-dimensional, outer source is ({}, {})",
                inner.obs_dst, inner.act_dst, outer.obs_src, outer.act_src
            )));
        }
        let fwd = outer
            .fwd
            .iter()
            .map(|e| substitute(e, None, None, Some(&inner.fwd)))
            .collect::<Result<Vec<_>, _>>()?;
        // Expressions for a₂ = outer.bwd(inner.fwd(o₁), a₃), over source
        // observations and outermost actions.
        let mid_actions = outer
            .bwd
            .iter()
            .map(|e| substitute(e, None, None, Some(&inner.fwd)))
            .collect::<Result<Vec<_>, _>>()?;
        let bwd = inner
            .bwd
            .iter()
            .map(|e| substitute(e, None, Some(&mid_actions), None))
            .collect::<Result<Vec<_>, _>>()?;
        QuantLens::new(
            inner.obs_src,
            inner.act_src,
            outer.obs_dst,
            outer.act_dst,
            fwd,
            bwd,
        )
    }
}

const COND_NAMES: [&str; 2] = ["assumption-slack", "guarantee-monotone"];

/// Check the two slack inequalities at every sample of `plan` (which ranges
/// over the source observation space followed by the target action space).
/// The verdict holds iff the worst margin is ≥ −tol.
pub fn certify_quant_lens(
    lens: &QuantLens,
    c1: &QuantCertificate,
    c2: &QuantCertificate,
    kappa: &PLFun,
    plan: &SamplePlan,
    opts: &CheckOpts,
) -> Result<QuantVerdict, AglError> {
    if c1.obs_dim != lens.obs_src || c1.act_dim != lens.act_src {
        return Err(AglError::DimensionMismatch(format!(
            "source certificate is ({}, {})-dimensional, the lens source is ({}, {})",
            c1.obs_dim, c1.act_dim, lens.obs_src, lens.act_src
        )));
    }
    if c2.obs_dim != lens.obs_dst || c2.act_dim != lens.act_dst {
        return Err(AglError::DimensionMismatch(format!(
            "target certificate is ({}, {})-dimensional, the lens target is ({}, {})",
            c2.obs_dim, c2.act_dim, lens.obs_dst, lens.act_dst
        )));
    }
    if !classify(kappa).in_kinf0() {
        return Err(AglError::SlackClass(format!(
            "classified as {:?}",
            classify(kappa)
        )));
    }
    if plan.dims() != lens.obs_src + lens.act_dst {
        return Err(AglError::InvalidSamplePlan(format!(
            "plan has {} dimensions; the check ranges over {} observation + {} action dimensions",
            plan.dims(),
            lens.obs_src,
            lens.act_dst
        )));
    }

    let total = plan.total_points();
    let worst = try_fold_min(
        total,
        opts.jobs,
        |i| {
            let p = plan.point(i);
            let (o1, a2) = p.split_at(lens.obs_src);
            let o2 = lens.fwd_at(o1)?;
            let a1 = lens.bwd_at(o1, a2)?;
            let g1 = c1.gamma_at(o1)?;
            let slack_margin =
                c2.alpha_at(&o2, a2)? + kappa.eval_clamped(g1) - c1.alpha_at(o1, &a1)?;
            let mono_margin = g1 - c2.gamma_at(&o2)?;
            let w1 = WorstSample::new(slack_margin, i, 0, p.clone());
            let w2 = WorstSample::new(mono_margin, i, 1, p);
            Ok(Some(worse(w1, w2)))
        },
        worse,
    )?
    .expect("sample plans always contain at least one point");

    Ok(QuantVerdict {
        holds: worst.margin >= -opts.tol,
        worst_margin: worst.margin,
        witness_point: worst.point,
        condition: COND_NAMES[worst.cond].to_string(),
        grid: plan.clone(),
        tolerances: Tolerances::new(opts.tol, None, None),
        gradient_check: None,
        global_capable: None,
    })
}

/// A lens whose slack certification has been checked; the witnessing grid
/// and slack travel with it so composition can re-verify.
#[derive(Clone, Debug)]
pub struct CertifiedQuantLens {
    lens: QuantLens,
    src_cert: QuantCertificate,
    dst_cert: QuantCertificate,
    kappa: PLFun,
    plan: SamplePlan,
}

impl CertifiedQuantLens {
    /// Certify and package; fails if the verdict does not hold.
    pub fn certify(
        lens: QuantLens,
        src_cert: QuantCertificate,
        dst_cert: QuantCertificate,
        kappa: PLFun,
        plan: SamplePlan,
        opts: &CheckOpts,
    ) -> Result<(Self, QuantVerdict), AglError> {
        let verdict = certify_quant_lens(&lens, &src_cert, &dst_cert, &kappa, &plan, opts)?;
        if !verdict.holds {
            return Err(AglError::PremiseFailed {
                rule: "quant-lens",
                condition: format!("the {} inequality holds on the grid", verdict.condition),
                witness: format!(
                    "; worst margin {:e} at {:?}",
                    verdict.worst_margin, verdict.witness_point
                ),
            });
        }
        Ok((
            CertifiedQuantLens {
                lens,
                src_cert,
                dst_cert,
                kappa,
                plan,
            },
            verdict,
        ))
    }

    pub fn lens(&self) -> &QuantLens {
        &self.lens
    }

    pub fn src_cert(&self) -> &QuantCertificate {
        &self.src_cert
    }

    pub fn dst_cert(&self) -> &QuantCertificate {
        &self.dst_cert
    }

    pub fn kappa(&self) -> &PLFun {
        &self.kappa
    }

    pub fn plan(&self) -> &SamplePlan {
        &self.plan
    }
}

/// Compose two certified lenses; the slack of the composite is the sum
/// `κ₁ + κ₂`. Both premises are re-verified, the certificates at the shared
/// interface must agree structurally, and the composite is re-verified on a
/// grid assembled from the inner observation ranges and the outer action
/// ranges. A composite re-verification failure indicates a tolerance
/// interaction and is reported with its margins.
pub fn compose_quant_cert(
    outer: &CertifiedQuantLens,
    inner: &CertifiedQuantLens,
    opts: &CheckOpts,
) -> Result<(CertifiedQuantLens, QuantVerdict), AglError> {
    for (name, cl) in [("inner", inner), ("outer", outer)] {
        let v = certify_quant_lens(&cl.lens, &cl.src_cert, &cl.dst_cert, &cl.kappa, &cl.plan, opts)?;
        if !v.holds {
            return Err(AglError::PremiseFailed {
                rule: "quant-compose",
                condition: format!("the {name} lens is certified"),
                witness: format!(
                    "; {} fails with margin {:e} at {:?}",
                    v.condition, v.worst_margin, v.witness_point
                ),
            });
        }
    }
    if inner.dst_cert != outer.src_cert {
        return Err(AglError::PremiseFailed {
            rule: "quant-compose",
            condition: "the inner target certificate equals the outer source certificate"
                .to_string(),
            witness: String::new(),
        });
    }
    let lens = QuantLens::compose(&outer.lens, &inner.lens)?;
    let kappa = pl_add(&inner.kappa, &outer.kappa);
    let obs_part = inner.plan.slice(0..inner.lens.obs_src);
    let act_part = outer
        .plan
        .slice(outer.lens.obs_src..outer.plan.dims());
    let plan = obs_part.concat(&act_part)?;
    let verdict = certify_quant_lens(&lens, &inner.src_cert, &outer.dst_cert, &kappa, &plan, opts)?;
    if !verdict.holds {
        return Err(AglError::PremiseFailed {
            rule: "quant-compose",
            condition: "composite re-verification (tolerance interaction)".to_string(),
            witness: format!(
                "; {} fails with margin {:e} at {:?}",
                verdict.condition, verdict.worst_margin, verdict.witness_point
            ),
        });
    }
    Ok((
        CertifiedQuantLens {
            lens,
            src_cert: inner.src_cert.clone(),
            dst_cert: outer.dst_cert.clone(),
            kappa,
            plan,
        },
        verdict,
    ))
}

/// Componentwise sum of two certificates on the product space: observation
/// and action variables of the second operand are shifted past those of the
/// first, and the bounds add.
pub fn sum_bundle_predicates(
    c1: &QuantCertificate,
    c2: &QuantCertificate,
) -> QuantCertificate {
    let gamma = Expr::add(
        c1.gamma.clone(),
        shift_vars(&c2.gamma, 0, 0, c1.obs_dim),
    );
    let alpha = Expr::add(
        c1.alpha.clone(),
        shift_vars(&c2.alpha, 0, c1.act_dim, c1.obs_dim),
    );
    QuantCertificate::new(c1.obs_dim + c2.obs_dim, c1.act_dim + c2.act_dim, gamma, alpha)
        .expect("sum of valid certificates is valid: both γ's vanish at the base point")
}
