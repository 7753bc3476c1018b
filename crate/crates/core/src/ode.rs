//! Open ODEs, Lyapunov-style certificates, and trajectory checks.
//!
//! An open ODE `ẋ = f(x, a)` with observable `o = v(x)` on a box domain is
//! certified by a storage function φ, an input bound α, an observation
//! bound γ, and a decrease rate λ (with `id − λ ∈ 𝒦∞`) when, on the grid,
//!
//! ```text
//! α(a) ≥ ∇φ(x)·f(x,a) + (id−λ)(φ(x))        (decrease)
//! φ(x) ≥ γ(v(x))                             (the storage dominates the guarantee)
//! ```
//!
//! Gradients are computed symbolically and cross-checked against central
//! finite differences at every sample; a disagreement aborts the check
//! rather than demoting it to a warning, because a wrong gradient silently
//! converts the decrease condition into a different inequality.
//!
//! Trajectory-level claims (the ISS bound of the form
//! `|x(t)| ≤ κ₁(κ₂(|x(0)|)e^{−t}) + κ₃(‖a‖∞)`) are validated on simulated
//! trajectories with piecewise-constant inputs. Domains are always bounded
//! boxes, so "global" capability is only ever reported as sampled evidence
//! (growth trends of γ∘v and ‖v‖ across radial shells), never as a verified
//! fact.

use serde::Serialize;

use crate::error::AglError;
use crate::expr::{check_vars, diff_expr, eval_expr, var_limits, Env, Expr, VarKind};
use crate::par::try_fold_min;
use crate::plfun::{classify, id_minus, id_minus_in_kinf, PLFun};
use crate::quant::{worse, SamplePlan, WorstSample};
use crate::verdict::{CheckOpts, GradientCheck, QuantVerdict, Tolerances};

/// Residual tolerance for the equilibrium condition `f(x₀, a₀) = 0`.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;

/// Definiteness threshold: storage values away from the base point must
/// exceed this.
pub const TOL_DEF: f64 = 1e-10;

/// Central-difference step and relative-error limit for the gradient gate.
const GRAD_H: f64 = 1e-4;
const GRAD_LIMIT: f64 = 1e-4;

/// `ẋ = f(x, a)`, `o = v(x)` on a box, with a designated equilibrium
/// `(x₀, a₀)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenODE {
    state_dim: usize,
    input_dim: usize,
    obs_dim: usize,
    field: Vec<Expr>,
    view: Vec<Expr>,
    x0: Vec<f64>,
    a0: Vec<f64>,
    domain: Vec<(f64, f64)>,
    input_domain: Vec<(f64, f64)>,
}

impl OpenODE {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        obs_dim: usize,
        field: Vec<Expr>,
        view: Vec<Expr>,
        x0: Vec<f64>,
        a0: Vec<f64>,
        domain: Vec<(f64, f64)>,
        input_domain: Vec<(f64, f64)>,
    ) -> Result<Self, AglError> {
        if field.len() != state_dim {
            return Err(AglError::DimensionMismatch(format!(
                "field has {} components for {} state dimensions",
                field.len(),
                state_dim
            )));
        }
        if view.len() != obs_dim {
            return Err(AglError::DimensionMismatch(format!(
                "view has {} components for {} observation dimensions",
                view.len(),
                obs_dim
            )));
        }
        if x0.len() != state_dim
            || a0.len() != input_dim
            || domain.len() != state_dim
            || input_domain.len() != input_dim
        {
            return Err(AglError::DimensionMismatch(
                "x0/a0/domain/input ranges must match the declared dimensions".to_string(),
            ));
        }
        for e in &field {
            check_vars(e, state_dim, input_dim, 0)?;
        }
        for e in &view {
            check_vars(e, state_dim, 0, 0)?;
        }
        for (ranges, point, what) in [(&domain, &x0, "x0"), (&input_domain, &a0, "a0")] {
            for (i, (&(lo, hi), &c)) in ranges.iter().zip(point.iter()).enumerate() {
                if !lo.is_finite() || !hi.is_finite() || lo > hi {
                    return Err(AglError::DimensionMismatch(format!(
                        "range [{lo}, {hi}] in dimension {i} is not a finite closed interval"
                    )));
                }
                if c < lo || c > hi {
                    return Err(AglError::OutsideDomain(format!(
                        "{what} = {point:?} (dimension {i} outside [{lo}, {hi}])"
                    )));
                }
            }
        }
        let ode = OpenODE {
            state_dim,
            input_dim,
            obs_dim,
            field,
            view,
            x0,
            a0,
            domain,
            input_domain,
        };
        let residual = ode
            .field_at(&ode.x0, &ode.a0)?
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if residual > EQUILIBRIUM_TOL {
            return Err(AglError::NotEquilibrium {
                residual,
                tol: EQUILIBRIUM_TOL,
            });
        }
        Ok(ode)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn field(&self) -> &[Expr] {
        &self.field
    }

    pub fn view(&self) -> &[Expr] {
        &self.view
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn a0(&self) -> &[f64] {
        &self.a0
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn input_domain(&self) -> &[(f64, f64)] {
        &self.input_domain
    }

    pub fn field_at(&self, x: &[f64], a: &[f64]) -> Result<Vec<f64>, AglError> {
        let env = Env::new(x, a, &[]);
        self.field.iter().map(|e| eval_expr(e, &env)).collect()
    }

    pub fn view_at(&self, x: &[f64]) -> Result<Vec<f64>, AglError> {
        let env = Env::new(x, &[], &[]);
        self.view.iter().map(|e| eval_expr(e, &env)).collect()
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.domain)
            .all(|(&c, &(lo, hi))| c >= lo && c <= hi)
    }

    /// The default certification grid: the state box alongside the input
    /// box, one shared step.
    pub fn default_plan(&self, step: f64) -> Result<SamplePlan, AglError> {
        let mut ranges = self.domain.clone();
        ranges.extend_from_slice(&self.input_domain);
        SamplePlan::new(ranges, step)
    }
}

/// A storage/bound/decrease-rate quadruple `(φ, α, γ, λ)`. φ is over the
/// state, α over the input **only** (its independence from the state is a
/// syntactic requirement, not a sampled one), γ over the observation.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovCandidate {
    pub phi: Expr,
    pub alpha: Expr,
    pub gamma: Expr,
    pub lambda: PLFun,
}

impl LyapunovCandidate {
    /// Check the candidate's side conditions against an ODE: variable
    /// scoping, `id − λ ∈ 𝒦∞`, and vanishing at the base points
    /// (`φ(x₀) = 0`, `α(a₀) = 0`, `γ(v(x₀)) = 0`, all within 1e−9).
    pub fn validate(&self, ode: &OpenODE) -> Result<(), AglError> {
        check_vars(&self.phi, ode.state_dim, 0, 0)?;
        let (ax, _, ao) = var_limits(&self.alpha);
        if ax > 0 {
            return Err(AglError::InvalidCandidate(format!(
                "α must not depend on the state; found x{ax}"
            )));
        }
        if ao > 0 {
            return Err(AglError::InvalidCandidate(format!(
                "α must not depend on the observation; found o{ao}"
            )));
        }
        check_vars(&self.alpha, 0, ode.input_dim, 0)?;
        check_vars(&self.gamma, 0, 0, ode.obs_dim)?;
        if !id_minus_in_kinf(&self.lambda) {
            return Err(AglError::ComparisonClass(
                "id−λ must be of class 𝒦∞: λ(0)=0 with every slope < 1".to_string(),
            ));
        }
        let vanish = |name: &str, value: f64| -> Result<(), AglError> {
            if value.abs() > 1e-9 {
                return Err(AglError::InvalidCandidate(format!(
                    "{name} must vanish at its base point; found {value:e}"
                )));
            }
            Ok(())
        };
        vanish("φ", eval_expr(&self.phi, &Env::new(&ode.x0, &[], &[]))?)?;
        vanish("α", eval_expr(&self.alpha, &Env::new(&[], &ode.a0, &[]))?)?;
        let o0 = ode.view_at(&ode.x0)?;
        vanish("γ", eval_expr(&self.gamma, &Env::new(&[], &[], &o0))?)?;
        Ok(())
    }
}

/// Check that φ is a storage function on the sampled box: `|φ(x₀)| ≤ tol`
/// and `φ(x) > tol_def` at every sample at distance ≥ `r_excl` (one grid
/// step) from the base point. Unlike the inequality checks, the verdict's
/// margins here already have the tolerances folded in, so it holds iff the
/// worst margin is positive.
pub fn check_storage(
    phi: &Expr,
    x0: &[f64],
    plan: &SamplePlan,
    opts: &CheckOpts,
) -> Result<QuantVerdict, AglError> {
    check_vars(phi, plan.dims(), 0, 0)?;
    if x0.len() != plan.dims() {
        return Err(AglError::DimensionMismatch(format!(
            "base point has {} coordinates, the plan has {} dimensions",
            x0.len(),
            plan.dims()
        )));
    }
    let r_excl = plan.step();
    let at_base = eval_expr(phi, &Env::new(x0, &[], &[]))?;
    let base_sample = WorstSample::new(opts.tol - at_base.abs(), 0, 0, x0.to_vec());

    let worst_def = try_fold_min(
        plan.total_points(),
        opts.jobs,
        |i| {
            let x = plan.point(i);
            let dist = x
                .iter()
                .zip(x0)
                .map(|(c, c0)| (c - c0) * (c - c0))
                .sum::<f64>()
                .sqrt();
            if dist < r_excl {
                return Ok(None);
            }
            let v = eval_expr(phi, &Env::new(&x, &[], &[]))?;
            Ok(Some(WorstSample::new(v - TOL_DEF, i, 1, x)))
        },
        worse,
    )?;

    let worst = match worst_def {
        Some(d) => worse(base_sample, d),
        None => base_sample,
    };
    Ok(QuantVerdict {
        holds: worst.margin > 0.0,
        worst_margin: worst.margin,
        witness_point: worst.point,
        condition: ["vanishes-at-base", "definite"][worst.cond].to_string(),
        grid: plan.clone(),
        tolerances: Tolerances::new(opts.tol, Some(TOL_DEF), Some(r_excl)),
        gradient_check: None,
        global_capable: None,
    })
}

/// Per-sample gradient agreement statistics carried through the fold.
#[derive(Clone, Debug)]
struct GradInfo {
    max_rel: f64,
    index: usize,
    at: Vec<f64>,
    checked: usize,
}

fn merge_grad(a: GradInfo, b: GradInfo) -> GradInfo {
    let checked = a.checked + b.checked;
    let mut keep = if b.max_rel > a.max_rel || (b.max_rel == a.max_rel && b.index < a.index) {
        b
    } else {
        a
    };
    keep.checked = checked;
    keep
}

const SHELLS: usize = 4;

#[derive(Clone, Debug)]
struct LissSample {
    worst: WorstSample,
    grad: GradInfo,
    /// Per radial shell: (max γ(v(x)), max |v(x)|).
    shells: [(f64, f64); SHELLS],
}

fn merge_liss(a: LissSample, b: LissSample) -> LissSample {
    let mut shells = a.shells;
    for (s, t) in shells.iter_mut().zip(b.shells) {
        s.0 = s.0.max(t.0);
        s.1 = s.1.max(t.1);
    }
    LissSample {
        worst: worse(a.worst, b.worst),
        grad: merge_grad(a.grad, b.grad),
        shells,
    }
}

/// Exhaustive grid check of the two certificate inequalities (see the
/// module docs). The plan must range over the state box followed by the
/// input box. Storage values fed to the decrease rate are clamped at zero
/// ([`PLFun::eval_clamped`]); validate φ itself with [`check_storage`].
///
/// Errors abort the check: candidate side-condition violations, and any
/// sample where the symbolic gradient and the central finite difference
/// disagree by more than 1e−4 relative.
pub fn certify_liss(
    ode: &OpenODE,
    cand: &LyapunovCandidate,
    plan: &SamplePlan,
    opts: &CheckOpts,
) -> Result<QuantVerdict, AglError> {
    cand.validate(ode)?;
    let n = ode.state_dim;
    let m = ode.input_dim;
    if plan.dims() != n + m {
        return Err(AglError::InvalidSamplePlan(format!(
            "plan has {} dimensions; the check ranges over {} state + {} input dimensions",
            plan.dims(),
            n,
            m
        )));
    }
    let grad: Vec<Expr> = (1..=n)
        .map(|i| diff_expr(&cand.phi, VarKind::State, i))
        .collect::<Result<_, _>>()?;
    let decay = id_minus(&cand.lambda);
    // Outer radius of the state box around x0, for the shell statistics.
    let r_max = ode
        .domain
        .iter()
        .zip(&ode.x0)
        .map(|(&(lo, hi), &c)| (c - lo).abs().max((hi - c).abs()).powi(2))
        .sum::<f64>()
        .sqrt();

    let folded = try_fold_min(
        plan.total_points(),
        opts.jobs,
        |i| {
            let p = plan.point(i);
            let (x, a) = p.split_at(n);

            // Gradient gate: symbolic vs central differences, every sample.
            let mut max_rel = 0.0f64;
            let env = Env::new(x, &[], &[]);
            let mut xp = x.to_vec();
            for d in 0..n {
                let sym = eval_expr(&grad[d], &env)?;
                xp[d] = x[d] + GRAD_H;
                let hi = eval_expr(&cand.phi, &Env::new(&xp, &[], &[]))?;
                xp[d] = x[d] - GRAD_H;
                let lo = eval_expr(&cand.phi, &Env::new(&xp, &[], &[]))?;
                xp[d] = x[d];
                let fd = (hi - lo) / (2.0 * GRAD_H);
                let rel = (sym - fd).abs() / sym.abs().max(fd.abs()).max(1.0);
                if rel >= GRAD_LIMIT {
                    return Err(AglError::GradientGate {
                        point: format!("{x:?}"),
                        rel_err: rel,
                        limit: GRAD_LIMIT,
                    });
                }
                max_rel = max_rel.max(rel);
            }

            let f = ode.field_at(x, a)?;
            let phi_x = eval_expr(&cand.phi, &env)?;
            let directional: f64 = grad
                .iter()
                .zip(&f)
                .map(|(g, fi)| Ok::<f64, AglError>(eval_expr(g, &env)? * fi))
                .sum::<Result<f64, _>>()?;
            let alpha_a = eval_expr(&cand.alpha, &Env::new(&[], a, &[]))?;
            let decrease = alpha_a - (directional + decay.eval_clamped(phi_x));

            let o = ode.view_at(x)?;
            let gamma_o = eval_expr(&cand.gamma, &Env::new(&[], &[], &o))?;
            let dominate = phi_x - gamma_o;

            let radius = x
                .iter()
                .zip(&ode.x0)
                .map(|(c, c0)| (c - c0) * (c - c0))
                .sum::<f64>()
                .sqrt();
            let shell = if r_max > 0.0 {
                (((radius / r_max) * SHELLS as f64) as usize).min(SHELLS - 1)
            } else {
                0
            };
            let mut shells = [(f64::NEG_INFINITY, f64::NEG_INFINITY); SHELLS];
            let v_norm = o.iter().map(|c| c * c).sum::<f64>().sqrt();
            shells[shell] = (gamma_o, v_norm);
            let grad_info = GradInfo {
                max_rel,
                index: i,
                at: x.to_vec(),
                checked: 1,
            };

            let worst = worse(
                WorstSample::new(decrease, i, 0, p.clone()),
                WorstSample::new(dominate, i, 1, p),
            );

            Ok(Some(LissSample {
                worst,
                grad: grad_info,
                shells,
            }))
        },
        merge_liss,
    )?
    .expect("sample plans always contain at least one point");

    // GLOBAL-capable on sampled evidence only: both γ∘v and ‖v‖ must grow
    // strictly across every radial shell of the state box.
    let global_capable = folded.shells.windows(2).all(|w| {
        w[0].0.is_finite() && w[1].0.is_finite() && w[1].0 > w[0].0 && w[1].1 > w[0].1
    });

    Ok(QuantVerdict {
        holds: folded.worst.margin >= -opts.tol,
        worst_margin: folded.worst.margin,
        witness_point: folded.worst.point,
        condition: ["liss-decrease", "storage-dominates-guarantee"][folded.worst.cond]
            .to_string(),
        grid: plan.clone(),
        tolerances: Tolerances::new(opts.tol, Some(TOL_DEF), Some(plan.step())),
        gradient_check: Some(GradientCheck {
            max_rel_err: folded.grad.max_rel,
            at: folded.grad.at,
            points_checked: folded.grad.checked,
        }),
        global_capable: Some(global_capable),
    })
}

/// Radial envelopes of a storage function over the box, from a lattice
/// anchored at `x0` with the given step: the upper function is
/// `r ↦ max {φ(x) : |x−x₀| ≤ r}` and the lower one is
/// `r ↦ min {φ(x) : |x−x₀| ≥ r}` (both restricted to lattice samples, with
/// breakpoints at every distinct sampled radius). Beyond the largest
/// sampled radius both extend flat. At every lattice sample the sandwich
/// `lower(|x−x₀|) ≤ φ(x) ≤ upper(|x−x₀|)` holds by construction.
///
/// φ must pass [`check_storage`] on the same box first.
pub fn k_approx(
    phi: &Expr,
    domain: &[(f64, f64)],
    x0: &[f64],
    step: f64,
    opts: &CheckOpts,
) -> Result<(PLFun, PLFun), AglError> {
    let plan = SamplePlan::new(domain.to_vec(), step)?;
    let storage = check_storage(phi, x0, &plan, opts)?;
    if !storage.holds {
        return Err(AglError::StorageCheck(format!(
            "{} fails with margin {:e} at {:?}",
            storage.condition, storage.worst_margin, storage.witness_point
        )));
    }

    // Lattice anchored at x0 so that r = 0 is always a knot.
    let offsets: Vec<(i64, i64)> = domain
        .iter()
        .zip(x0)
        .map(|(&(lo, hi), &c)| {
            let k_lo = ((lo - c) / step - 1e-9).ceil() as i64;
            let k_hi = ((hi - c) / step + 1e-9).floor() as i64;
            (k_lo, k_hi)
        })
        .collect();
    let counts: Vec<usize> = offsets
        .iter()
        .map(|&(lo, hi)| (hi - lo + 1) as usize)
        .collect();
    let total: usize = counts.iter().product();

    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(total);
    for mut index in 0..total {
        let mut x = vec![0.0; domain.len()];
        let mut radius2 = 0.0;
        for d in (0..domain.len()).rev() {
            let k = offsets[d].0 + (index % counts[d]) as i64;
            index /= counts[d];
            let offset = k as f64 * step;
            x[d] = x0[d] + offset;
            radius2 += offset * offset;
        }
        let v = eval_expr(phi, &Env::new(&x, &[], &[]))?;
        samples.push((radius2.sqrt(), v));
    }
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite radii"));

    // Group by distinct radius, then run the prefix-max / suffix-min.
    let mut knots: Vec<(f64, f64, f64)> = Vec::new(); // (r, max at r, min at r)
    for (r, v) in samples {
        match knots.last_mut() {
            Some(k) if k.0 == r => {
                k.1 = k.1.max(v);
                k.2 = k.2.min(v);
            }
            _ => knots.push((r, v, v)),
        }
    }
    let mut upper: Vec<(f64, f64)> = Vec::with_capacity(knots.len());
    let mut running_max = f64::NEG_INFINITY;
    for &(r, hi, _) in &knots {
        running_max = running_max.max(hi);
        upper.push((r, running_max));
    }
    let mut lower: Vec<(f64, f64)> = vec![(0.0, 0.0); knots.len()];
    let mut running_min = f64::INFINITY;
    for (i, &(r, _, lo)) in knots.iter().enumerate().rev() {
        running_min = running_min.min(lo);
        lower[i] = (r, running_min);
    }
    Ok((PLFun::new(upper, 0.0)?, PLFun::new(lower, 0.0)?))
}

/// Sampled evidence that a radial envelope pair behaves like a 𝒦∞ pair:
/// both vanish at 0 (within the certificate tolerance) and increase
/// strictly knot to knot. With bounded box domains this is a trend
/// statement about the sampled range, never a proof of unboundedness.
pub fn sandwich_kinf_evidence(upper: &PLFun, lower: &PLFun, tol: f64) -> bool {
    let increasing = |f: &PLFun| {
        f.breakpoints().windows(2).all(|w| w[1].1 > w[0].1)
            && f.breakpoints()[0].1.abs() <= tol
    };
    increasing(upper) && increasing(lower)
}

/// Piecewise-constant input signal: `values[i]` applies on
/// `[times[i], times[i+1])`, with the last value extended to +∞.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstant {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PiecewiseConstant {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, AglError> {
        if times.is_empty() || times.len() != values.len() {
            return Err(AglError::InvalidSignal(format!(
                "{} switch times for {} values",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(AglError::InvalidSignal(format!(
                "the first piece must start at t=0, found {}",
                times[0]
            )));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(AglError::InvalidSignal(format!(
                    "switch times must increase strictly, found {} after {}",
                    w[1], w[0]
                )));
            }
        }
        let dims = values[0].len();
        if values.iter().any(|v| v.len() != dims) {
            return Err(AglError::InvalidSignal(
                "all pieces must have the same input dimension".to_string(),
            ));
        }
        Ok(PiecewiseConstant { times, values })
    }

    pub fn constant(value: Vec<f64>) -> Self {
        PiecewiseConstant {
            times: vec![0.0],
            values: vec![value],
        }
    }

    pub fn dims(&self) -> usize {
        self.values[0].len()
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        let idx = self.times.partition_point(|&s| s <= t);
        &self.values[idx.saturating_sub(1).min(self.values.len() - 1)]
    }

    /// Largest Euclidean deviation of any piece from the reference input.
    pub fn sup_deviation(&self, a0: &[f64]) -> f64 {
        self.values
            .iter()
            .map(|v| {
                v.iter()
                    .zip(a0)
                    .map(|(c, c0)| (c - c0) * (c - c0))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Sampled solution curve. If the state left the box, the trajectory is
/// truncated at the last in-domain sample and `exited_domain` is set.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub exited_domain: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Classical 4th-order Runge–Kutta integration with step `h` (the last step
/// is shortened to land exactly on `t_end`). Inputs are sampled at the
/// stage times of each step.
pub fn simulate(
    ode: &OpenODE,
    x_init: &[f64],
    signal: &PiecewiseConstant,
    t_end: f64,
    h: f64,
) -> Result<Trajectory, AglError> {
    if x_init.len() != ode.state_dim {
        return Err(AglError::DimensionMismatch(format!(
            "initial state has {} coordinates for {} state dimensions",
            x_init.len(),
            ode.state_dim
        )));
    }
    if signal.dims() != ode.input_dim {
        return Err(AglError::InvalidSignal(format!(
            "signal provides {} input components, the system has {}",
            signal.dims(),
            ode.input_dim
        )));
    }
    if !(h > 0.0) || !h.is_finite() || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(AglError::InvalidSimulation(format!(
            "need a positive step and nonnegative horizon, got h={h}, t_end={t_end}"
        )));
    }
    if !ode.in_domain(x_init) {
        return Err(AglError::OutsideDomain(format!("{x_init:?}")));
    }

    let axpy = |x: &[f64], scale: f64, k: &[f64]| -> Vec<f64> {
        x.iter().zip(k).map(|(xi, ki)| xi + scale * ki).collect()
    };

    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x_init.to_vec()],
        inputs: vec![signal.value_at(0.0).to_vec()],
        exited_domain: false,
    };
    let mut x = x_init.to_vec();
    let mut t = 0.0;
    let mut step = 0usize;
    while t < t_end - 1e-12 {
        let dt = h.min(t_end - t);
        let k1 = ode.field_at(&x, signal.value_at(t))?;
        let mid_input = signal.value_at(t + dt / 2.0);
        let k2 = ode.field_at(&axpy(&x, dt / 2.0, &k1), mid_input)?;
        let k3 = ode.field_at(&axpy(&x, dt / 2.0, &k2), mid_input)?;
        let end_input = signal.value_at(t + dt);
        let k4 = ode.field_at(&axpy(&x, dt, &k3), end_input)?;
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += dt;
        step += 1;
        if x.iter().any(|c| !c.is_finite()) {
            return Err(AglError::NonFiniteState { step });
        }
        if !ode.in_domain(&x) {
            traj.exited_domain = true;
            break;
        }
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.inputs.push(signal.value_at(t).to_vec());
    }
    Ok(traj)
}

/// Result of checking the decay-plus-offset bound on trajectories.
#[derive(Clone, Debug, Serialize)]
pub struct IssVerdict {
    pub holds: bool,
    /// Worst value of `bound + tol − |x(t) − x₀|` across all samples.
    pub worst_margin: f64,
    pub trajectory: usize,
    pub time: f64,
    pub state_norm: f64,
    pub bound: f64,
    pub sup_input: f64,
    pub tol: f64,
}

impl IssVerdict {
    pub fn describe(&self) -> String {
        if self.holds {
            format!(
                "holds: worst margin {:e} on trajectory {} at t={}",
                self.worst_margin, self.trajectory, self.time
            )
        } else {
            format!(
                "fails on trajectory {} at t={}: |x−x0| = {:e} exceeds bound {:e} (‖a‖∞ = {:e})",
                self.trajectory, self.time, self.state_norm, self.bound, self.sup_input
            )
        }
    }
}

/// Validate `|x(t) − x₀| ≤ κ₁(κ₂(|x(0) − x₀|)·e^{−t}) + κ₃(‖a − a₀‖∞)` at
/// every sample of every trajectory, within `opts.tol`. κ₁ and κ₂ must be
/// 𝒦∞; κ₃ must be 𝒦∞⁰ (the zero slot is for closed systems). The input sup
/// norm is taken over the trajectory's sampled inputs.
pub fn check_iss_bound(
    ode: &OpenODE,
    trajectories: &[Trajectory],
    k1: &PLFun,
    k2: &PLFun,
    k3: &PLFun,
    opts: &CheckOpts,
) -> Result<IssVerdict, AglError> {
    for (name, k, want_kinf) in [("κ₁", k1, true), ("κ₂", k2, true), ("κ₃", k3, false)] {
        let class = classify(k);
        let ok = if want_kinf {
            class.in_kinf()
        } else {
            class.in_kinf0()
        };
        if !ok {
            return Err(AglError::ComparisonClass(format!(
                "{name} classified as {class:?}; the bound needs {}",
                if want_kinf { "𝒦∞" } else { "𝒦∞⁰" }
            )));
        }
    }

    let norm = |x: &[f64], c: &[f64]| -> f64 {
        x.iter()
            .zip(c)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };

    let mut worst: Option<IssVerdict> = None;
    for (ti, traj) in trajectories.iter().enumerate() {
        if traj.is_empty() {
            continue;
        }
        let r0 = norm(&traj.states[0], &ode.x0);
        let sup_input = traj
            .inputs
            .iter()
            .map(|a| norm(a, &ode.a0))
            .fold(0.0, f64::max);
        let offset = k3.eval_clamped(sup_input);
        let k2_r0 = k2.eval_clamped(r0);
        for (j, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
            let lhs = norm(x, &ode.x0);
            let bound = k1.eval_clamped(k2_r0 * (-t).exp()) + offset;
            let margin = bound + opts.tol - lhs;
            let candidate = IssVerdict {
                holds: margin >= 0.0,
                worst_margin: margin,
                trajectory: ti,
                time: *t,
                state_norm: lhs,
                bound,
                sup_input,
                tol: opts.tol,
            };
            let replace = match &worst {
                None => true,
                Some(w) => {
                    margin < w.worst_margin
                        || (margin == w.worst_margin && (ti, j) < (w.trajectory, usize::MAX))
                }
            };
            if replace {
                worst = Some(candidate);
            }
        }
    }
    worst.ok_or_else(|| AglError::InvalidSignal("no trajectory samples to check".to_string()))
}

/// Margin of the weaker of the two certificate inequalities at one point,
/// gradient gate omitted (used by the refinement search).
fn liss_margin_at(
    ode: &OpenODE,
    cand: &LyapunovCandidate,
    grad: &[Expr],
    decay: &PLFun,
    x: &[f64],
    a: &[f64],
) -> Result<f64, AglError> {
    let env = Env::new(x, &[], &[]);
    let f = ode.field_at(x, a)?;
    let phi_x = eval_expr(&cand.phi, &env)?;
    let directional: f64 = grad
        .iter()
        .zip(&f)
        .map(|(g, fi)| Ok::<f64, AglError>(eval_expr(g, &env)? * fi))
        .sum::<Result<f64, _>>()?;
    let alpha_a = eval_expr(&cand.alpha, &Env::new(&[], a, &[]))?;
    let decrease = alpha_a - (directional + decay.eval_clamped(phi_x));
    let o = ode.view_at(x)?;
    let gamma_o = eval_expr(&cand.gamma, &Env::new(&[], &[], &o))?;
    let dominate = phi_x - gamma_o;
    Ok(decrease.min(dominate))
}

/// Search for a strict certificate violation by coordinate descent from the
/// worst grid sample. The grid pass itself is not budget-counted; each
/// refinement step costs one margin evaluation. Returns a point with margin
/// < −tol, or `None` if the budget runs out (or is zero).
pub fn falsify(
    ode: &OpenODE,
    cand: &LyapunovCandidate,
    plan: &SamplePlan,
    budget: usize,
    opts: &CheckOpts,
) -> Result<Option<Vec<f64>>, AglError> {
    if budget == 0 {
        return Ok(None);
    }
    cand.validate(ode)?;
    let n = ode.state_dim;
    if plan.dims() != n + ode.input_dim {
        return Err(AglError::InvalidSamplePlan(format!(
            "plan has {} dimensions; the search ranges over {} state + {} input dimensions",
            plan.dims(),
            n,
            ode.input_dim
        )));
    }
    let grad: Vec<Expr> = (1..=n)
        .map(|i| diff_expr(&cand.phi, VarKind::State, i))
        .collect::<Result<_, _>>()?;
    let decay = id_minus(&cand.lambda);

    // Seed: worst grid sample.
    let seed = try_fold_min(
        plan.total_points(),
        opts.jobs,
        |i| {
            let p = plan.point(i);
            let (x, a) = p.split_at(n);
            let m = liss_margin_at(ode, cand, &grad, &decay, x, a)?;
            Ok(Some(WorstSample::new(m, i, 0, p)))
        },
        worse,
    )?
    .expect("sample plans always contain at least one point");

    let mut current = seed.point;
    let mut evals = 0usize;
    let mut margin = {
        evals += 1;
        let (x, a) = current.split_at(n);
        liss_margin_at(ode, cand, &grad, &decay, x, a)?
    };
    if margin < -opts.tol {
        return Ok(Some(current));
    }

    let ranges = plan.ranges();
    let mut step = plan.step();
    while step >= 1e-12 {
        let mut improved = false;
        for d in 0..current.len() {
            for dir in [1.0, -1.0] {
                if evals >= budget {
                    return Ok(None);
                }
                let mut probe = current.clone();
                probe[d] = (probe[d] + dir * step).clamp(ranges[d].0, ranges[d].1);
                if probe[d] == current[d] {
                    continue;
                }
                let m = {
                    evals += 1;
                    let (x, a) = probe.split_at(n);
                    liss_margin_at(ode, cand, &grad, &decay, x, a)?
                };
                if m < margin {
                    margin = m;
                    current = probe;
                    improved = true;
                    if margin < -opts.tol {
                        return Ok(Some(current));
                    }
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    Ok(None)
}
