//! Boolean assume-guarantee certificates and the two proof rules.
//!
//! An interface certificate `⟨α|γ⟩` picks out guaranteed observations
//! (`γ : O → bool`) and assumed actions (`α : (o, a ∈ A_o) → bool`), subject
//! to well-formedness `α(o,a) ⇒ γ(o)`: assumptions are only stated where the
//! guarantee holds. A machine certificate adds a state spec `φ` with the two
//! machine conditions
//!
//! ```text
//! φ(s) ∧ α(v(s), a) ⇒ Lift φ(u(s, a))        (the spec is preserved)
//! φ(s) ⇒ γ(v(s))                             (the spec implies the guarantee)
//! ```
//!
//! and a lens is certified between two interface certificates when
//!
//! ```text
//! γ₁(o₁) ∧ α₂(w(o₁), a₂) ⇒ α₁(o₁, w♯(o₁,a₂))  (assumptions route backward)
//! γ₁(o₁) ⇒ γ₂(w(o₁))                          (guarantees route forward)
//! ```
//!
//! The two rules compose these facts: [`comp_rule`] certifies a coupled
//! machine from certified components and a certified wiring, and
//! [`subst_rule`] transports a certificate backwards along a simulation.
//! Both rules re-verify their conclusions exhaustively before returning —
//! a conclusion that fails re-verification is an internal soundness error
//! and aborts.

use crate::error::AglError;
use crate::lens::{Chart, Interface, Lens};
use crate::machine::{check_simulation, couple, Change, Machine, Simulation};
use crate::symbol::{FiniteSet, Symbol};
use crate::verdict::BoolVerdict;

/// Total boolean predicate over a finite carrier.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Predicate {
    carrier: FiniteSet,
    truth: Vec<bool>,
}

impl Predicate {
    pub fn from_fn(carrier: FiniteSet, f: impl Fn(&Symbol) -> bool) -> Self {
        let truth = carrier.iter().map(f).collect();
        Predicate { carrier, truth }
    }

    pub fn constant(carrier: FiniteSet, value: bool) -> Self {
        let truth = vec![value; carrier.len()];
        Predicate { carrier, truth }
    }

    /// Predicate true exactly on the listed symbols (which must belong to
    /// the carrier).
    pub fn from_true_set(carrier: FiniteSet, trues: &[Symbol]) -> Result<Self, AglError> {
        let mut truth = vec![false; carrier.len()];
        for s in trues {
            truth[carrier.require(s)?] = true;
        }
        Ok(Predicate { carrier, truth })
    }

    pub fn carrier(&self) -> &FiniteSet {
        &self.carrier
    }

    pub fn eval(&self, s: &Symbol) -> Result<bool, AglError> {
        Ok(self.truth[self.carrier.require(s)?])
    }

    pub fn eval_idx(&self, i: usize) -> bool {
        self.truth[i]
    }

    pub fn true_symbols(&self) -> Vec<&Symbol> {
        self.carrier
            .iter()
            .enumerate()
            .filter(|(i, _)| self.truth[*i])
            .map(|(_, s)| s)
            .collect()
    }
}

/// Pull two predicates back along maps into a common carrier and conjoin
/// them pointwise: `c ↦ p(to_p(c)) ∧ q(to_q(c))`.
pub fn conjoin_predicates(
    p: &Predicate,
    q: &Predicate,
    common: &FiniteSet,
    to_p: impl Fn(&Symbol) -> Symbol,
    to_q: impl Fn(&Symbol) -> Symbol,
) -> Result<Predicate, AglError> {
    let mut truth = Vec::with_capacity(common.len());
    for c in common.iter() {
        truth.push(p.eval(&to_p(c))? && q.eval(&to_q(c))?);
    }
    Ok(Predicate {
        carrier: common.clone(),
        truth,
    })
}

/// Lift a state predicate to a predicate on changes: the identity for a
/// deterministic change, `∀s ∈ U. φ(s)` for a powerset change (so the empty
/// set lifts to true).
pub fn lift_predicate(phi: &Predicate, change: &Change) -> Result<bool, AglError> {
    match change {
        Change::Next(s) => phi.eval(s),
        Change::Set(us) => {
            for s in us {
                if !phi.eval(s)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

/// `⟨α|γ⟩` over an interface, with well-formedness `α(o,a) ⇒ γ(o)` enforced
/// at construction.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct InterfaceCertificate {
    iface: Interface,
    gamma: Predicate,
    /// `alpha[o][a]` aligned with the observation carrier and its fibers.
    alpha: Vec<Vec<bool>>,
}

impl InterfaceCertificate {
    pub fn from_fns(
        iface: Interface,
        gamma: Predicate,
        alpha: impl Fn(&Symbol, &Symbol) -> bool,
    ) -> Result<Self, AglError> {
        if gamma.carrier() != iface.obs() {
            return Err(AglError::CarrierMismatch(format!(
                "guarantee is over {{{}}} but the interface observes {{{}}}",
                gamma.carrier().describe(),
                iface.obs().describe()
            )));
        }
        let mut table = Vec::with_capacity(iface.obs().len());
        for (i, o) in iface.obs().iter().enumerate() {
            let mut row = Vec::with_capacity(iface.fiber_at(i).len());
            for a in iface.fiber_at(i).iter() {
                let holds = alpha(o, a);
                if holds && !gamma.eval_idx(i) {
                    return Err(AglError::IllFormedCertificate {
                        obs: o.to_string(),
                        action: a.to_string(),
                    });
                }
                row.push(holds);
            }
            table.push(row);
        }
        Ok(InterfaceCertificate {
            iface,
            gamma,
            alpha: table,
        })
    }

    pub fn iface(&self) -> &Interface {
        &self.iface
    }

    pub fn gamma(&self) -> &Predicate {
        &self.gamma
    }

    pub fn alpha(&self, o: &Symbol, a: &Symbol) -> Result<bool, AglError> {
        let i = self.iface.obs().require(o)?;
        let j = self
            .iface
            .fiber_at(i)
            .position(a)
            .ok_or_else(|| AglError::FiberMismatch {
                obs: o.to_string(),
                action: a.to_string(),
            })?;
        Ok(self.alpha[i][j])
    }

    pub fn alpha_idx(&self, o: usize, a: usize) -> bool {
        self.alpha[o][a]
    }
}

/// Certificate in simple form over a simple interface: `γ = γ̄` and
/// `α(o,a) = γ̄(o) ∧ ᾱ(a)`. Well-formed by construction.
pub fn simple_certificate(gamma_bar: &Predicate, alpha_bar: &Predicate) -> InterfaceCertificate {
    let iface = Interface::simple(gamma_bar.carrier().clone(), alpha_bar.carrier().clone());
    InterfaceCertificate::from_fns(iface, gamma_bar.clone(), |o, a| {
        gamma_bar.eval(o).expect("observation in carrier")
            && alpha_bar.eval(a).expect("action in carrier")
    })
    .expect("simple certificates are well-formed by construction")
}

/// Conjunction certificate over the product interface: guarantees and
/// assumptions are evaluated componentwise and conjoined. This is the input
/// certificate a wiring sees when every inner box is certified.
pub fn parallel_certificate(
    c1: &InterfaceCertificate,
    c2: &InterfaceCertificate,
) -> InterfaceCertificate {
    let iface = c1.iface.product(&c2.iface);
    let gamma = Predicate::from_fn(iface.obs().clone(), |o| {
        let (o1, o2) = o.as_pair().expect("product observation");
        c1.gamma.eval(o1).expect("left observation")
            && c2.gamma.eval(o2).expect("right observation")
    });
    InterfaceCertificate::from_fns(iface, gamma, |o, a| {
        let (o1, o2) = o.as_pair().expect("product observation");
        let (a1, a2) = a.as_pair().expect("product action");
        c1.alpha(o1, a1).expect("left pair") && c2.alpha(o2, a2).expect("right pair")
    })
    .expect("conjunction of well-formed certificates is well-formed")
}

/// Left-nested conjunction of one or more certificates.
pub fn parallel_certificates(certs: &[&InterfaceCertificate]) -> InterfaceCertificate {
    assert!(!certs.is_empty(), "conjunction of no certificates");
    let mut acc = certs[0].clone();
    for c in &certs[1..] {
        acc = parallel_certificate(&acc, c);
    }
    acc
}

/// Exhaustively check that a lens carries `c1` (on its source) to `c2` (on
/// its target):
///
/// * `guarantee-implication`: `γ₁(o₁) ⇒ γ₂(w(o₁))`
/// * `assumption-implication`: `γ₁(o₁) ∧ α₂(w(o₁),a₂) ⇒ α₁(o₁, w♯(o₁,a₂))`
///
/// Observations are scanned in carrier order (the guarantee first, then the
/// target fiber in order), so a failing verdict carries the
/// lexicographically smallest counterexample.
pub fn certify_lens(
    lens: &Lens,
    c1: &InterfaceCertificate,
    c2: &InterfaceCertificate,
) -> Result<BoolVerdict, AglError> {
    if let Some(detail) = c1.iface.first_mismatch(lens.src()) {
        return Err(AglError::InterfaceMismatch(format!(
            "source certificate does not match the lens source: {detail}"
        )));
    }
    if let Some(detail) = c2.iface.first_mismatch(lens.dst()) {
        return Err(AglError::InterfaceMismatch(format!(
            "target certificate does not match the lens target: {detail}"
        )));
    }
    for (o1_idx, o1) in lens.src().obs().iter().enumerate() {
        if !c1.gamma.eval_idx(o1_idx) {
            continue;
        }
        let o2_idx = lens.fwd_idx(o1_idx);
        if !c2.gamma.eval_idx(o2_idx) {
            return Ok(BoolVerdict::fail(
                "guarantee-implication",
                vec![
                    o1.to_string(),
                    format!("w(o1)={}", lens.dst().obs().get(o2_idx)),
                ],
            ));
        }
    }
    for (o1_idx, o1) in lens.src().obs().iter().enumerate() {
        if !c1.gamma.eval_idx(o1_idx) {
            continue;
        }
        let o2_idx = lens.fwd_idx(o1_idx);
        for (a2_idx, a2) in lens.dst().fiber_at(o2_idx).iter().enumerate() {
            if !c2.alpha_idx(o2_idx, a2_idx) {
                continue;
            }
            let a1_idx = lens.bwd_idx(o1_idx, a2_idx);
            if !c1.alpha_idx(o1_idx, a1_idx) {
                return Ok(BoolVerdict::fail(
                    "assumption-implication",
                    vec![
                        o1.to_string(),
                        a2.to_string(),
                        format!(
                            "w♯(o1,a2)={}",
                            lens.src().fiber_at(o1_idx).get(a1_idx)
                        ),
                    ],
                ));
            }
        }
    }
    Ok(BoolVerdict::pass())
}

/// A machine together with its state spec and interface certificate.
#[derive(Clone, Debug)]
pub struct MachineCertificate {
    machine: Machine,
    phi: Predicate,
    icert: InterfaceCertificate,
}

impl MachineCertificate {
    pub fn new(
        machine: Machine,
        phi: Predicate,
        icert: InterfaceCertificate,
    ) -> Result<Self, AglError> {
        if phi.carrier() != machine.states() {
            return Err(AglError::CarrierMismatch(format!(
                "spec is over {{{}}} but the machine has states {{{}}}",
                phi.carrier().describe(),
                machine.states().describe()
            )));
        }
        if let Some(detail) = icert.iface.first_mismatch(machine.iface()) {
            return Err(AglError::InterfaceMismatch(format!(
                "certificate interface does not match the machine interface: {detail}"
            )));
        }
        Ok(MachineCertificate {
            machine,
            phi,
            icert,
        })
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    pub fn phi(&self) -> &Predicate {
        &self.phi
    }

    pub fn icert(&self) -> &InterfaceCertificate {
        &self.icert
    }
}

/// Exhaustively check the two machine conditions:
///
/// * `spec-implies-guarantee`: `φ(s) ⇒ γ(v(s))`
/// * `spec-preserved`: `φ(s) ∧ α(v(s),a) ⇒ Lift φ(u(s,a))`
///
/// States are scanned in carrier order (the guarantee condition first, then
/// the fiber in order), so the reported counterexample is deterministic.
pub fn certify_machine(m: &Machine, mc: &MachineCertificate) -> Result<BoolVerdict, AglError> {
    if mc.phi.carrier() != m.states() {
        return Err(AglError::CarrierMismatch(format!(
            "spec is over {{{}}} but the machine has states {{{}}}",
            mc.phi.carrier().describe(),
            m.states().describe()
        )));
    }
    if let Some(detail) = mc.icert.iface.first_mismatch(m.iface()) {
        return Err(AglError::InterfaceMismatch(format!(
            "certificate interface does not match the machine interface: {detail}"
        )));
    }
    for (s_idx, s) in m.states().iter().enumerate() {
        if !mc.phi.eval_idx(s_idx) {
            continue;
        }
        let o_idx = m.view_idx(s_idx);
        if !mc.icert.gamma.eval_idx(o_idx) {
            return Ok(BoolVerdict::fail(
                "spec-implies-guarantee",
                vec![
                    s.to_string(),
                    format!("v(s)={}", m.iface().obs().get(o_idx)),
                ],
            ));
        }
        for (a_idx, a) in m.iface().fiber_at(o_idx).iter().enumerate() {
            if !mc.icert.alpha_idx(o_idx, a_idx) {
                continue;
            }
            let change = m.update_idx(s_idx, a_idx);
            if !lift_predicate(&mc.phi, change)? {
                return Ok(BoolVerdict::fail(
                    "spec-preserved",
                    vec![
                        s.to_string(),
                        a.to_string(),
                        format!("u(s,a)={}", change.describe()),
                    ],
                ));
            }
        }
    }
    Ok(BoolVerdict::pass())
}

/// Pull a certificate on the chart's target back to its source:
/// `γ′ = γ ∘ f` and `α′(o,a) = α(f(o), f♯(o,a))`. Well-formedness is
/// preserved (and re-validated by construction).
pub fn pullback_certificate(
    f: &Chart,
    c: &InterfaceCertificate,
) -> Result<InterfaceCertificate, AglError> {
    if let Some(detail) = c.iface.first_mismatch(f.dst()) {
        return Err(AglError::InterfaceMismatch(format!(
            "certificate does not match the chart target: {detail}"
        )));
    }
    let gamma = Predicate::from_fn(f.src().obs().clone(), |o| {
        c.gamma
            .eval(f.fwd(o).expect("chart forward is total"))
            .expect("target observation")
    });
    InterfaceCertificate::from_fns(f.src().clone(), gamma, |o, a| {
        let fo = f.fwd(o).expect("chart forward is total");
        let fa = f.push(o, a).expect("chart push is total");
        c.alpha(fo, fa).expect("target pair")
    })
}

/// Rule 1 — coupling preserves certification. Given
///
/// * component machines each certified by `(φᵢ, cᵢ)`,
/// * `c_in` equal to the parallel conjunction `c₁ ∧ ⋯ ∧ cₙ`, and
/// * the wiring certified from `c_in` to `c_out`,
///
/// the coupled machine is certified by `(φ₁ ∧ ⋯ ∧ φₙ, c_out)`. All premises
/// are checked, and the conclusion is re-verified exhaustively before being
/// returned.
pub fn comp_rule(
    wiring: &Lens,
    c_in: &InterfaceCertificate,
    c_out: &InterfaceCertificate,
    certified: &[MachineCertificate],
) -> Result<MachineCertificate, AglError> {
    assert!(!certified.is_empty(), "coupling requires at least one machine");
    for (i, mc) in certified.iter().enumerate() {
        let verdict = certify_machine(&mc.machine, mc)?;
        if !verdict.holds {
            return Err(AglError::PremiseFailed {
                rule: "comp",
                condition: format!("component {i} is certified"),
                witness: format!("; {}", verdict.describe_failure()),
            });
        }
    }

    let icerts: Vec<&InterfaceCertificate> = certified.iter().map(|mc| &mc.icert).collect();
    let conjunction = parallel_certificates(&icerts);
    if let Some(detail) = first_certificate_difference(c_in, &conjunction) {
        return Err(AglError::PremiseFailed {
            rule: "comp",
            condition: "the input certificate equals the parallel conjunction of the component certificates".to_string(),
            witness: format!("; {detail}"),
        });
    }

    let verdict = certify_lens(wiring, c_in, c_out)?;
    if !verdict.holds {
        return Err(AglError::PremiseFailed {
            rule: "comp",
            condition: "the wiring is certified".to_string(),
            witness: format!("; {}", verdict.describe_failure()),
        });
    }

    let machines: Vec<Machine> = certified.iter().map(|mc| mc.machine.clone()).collect();
    let coupled = couple(&machines, wiring)?;
    let n = machines.len();
    let phi = Predicate::from_fn(coupled.states().clone(), |s| {
        let parts = s.split_product(n).expect("product state");
        parts
            .iter()
            .zip(certified)
            .all(|(si, mc)| mc.phi.eval(si).expect("component state"))
    });
    let conclusion = MachineCertificate::new(coupled, phi, c_out.clone())?;
    let recheck = certify_machine(&conclusion.machine, &conclusion)?;
    if !recheck.holds {
        return Err(AglError::InternalSoundness {
            rule: "comp",
            detail: recheck.describe_failure(),
        });
    }
    Ok(conclusion)
}

/// Rule 2 — certificates transport backwards along simulations. Given a
/// simulation `σ` (with chart `⟨f♯|f⟩`) whose squares commute and a certified
/// target, the source is certified by `(φ ∘ σ, ⟨α∘f♯ | γ∘f⟩)`. The
/// conclusion is re-verified exhaustively before being returned.
pub fn subst_rule(
    sim: &Simulation,
    target: &MachineCertificate,
) -> Result<MachineCertificate, AglError> {
    if target.machine != *sim.dst() {
        return Err(AglError::CarrierMismatch(
            "the target certificate is not a certificate of the simulation's target machine"
                .to_string(),
        ));
    }
    let verdict = check_simulation(sim);
    if !verdict.holds {
        return Err(AglError::PremiseFailed {
            rule: "subst",
            condition: "the simulation squares commute".to_string(),
            witness: format!("; {}", verdict.describe_failure()),
        });
    }
    let verdict = certify_machine(sim.dst(), target)?;
    if !verdict.holds {
        return Err(AglError::PremiseFailed {
            rule: "subst",
            condition: "the target machine is certified".to_string(),
            witness: format!("; {}", verdict.describe_failure()),
        });
    }

    let phi = Predicate::from_fn(sim.src().states().clone(), |s| {
        target
            .phi
            .eval(sim.map(s).expect("state map is total"))
            .expect("target state")
    });
    let icert = pullback_certificate(sim.chart(), &target.icert)?;
    let conclusion = MachineCertificate::new(sim.src().clone(), phi, icert)?;
    let recheck = certify_machine(&conclusion.machine, &conclusion)?;
    if !recheck.holds {
        return Err(AglError::InternalSoundness {
            rule: "subst",
            detail: recheck.describe_failure(),
        });
    }
    Ok(conclusion)
}

fn first_certificate_difference(
    a: &InterfaceCertificate,
    b: &InterfaceCertificate,
) -> Option<String> {
    if let Some(detail) = a.iface.first_mismatch(&b.iface) {
        return Some(detail);
    }
    for (i, o) in a.iface.obs().iter().enumerate() {
        if a.gamma.eval_idx(i) != b.gamma.eval_idx(i) {
            return Some(format!("guarantees differ at `{o}`"));
        }
        for (j, act) in a.iface.fiber_at(i).iter().enumerate() {
            if a.alpha[i][j] != b.alpha[i][j] {
                return Some(format!("assumptions differ at (`{o}`, `{act}`)"));
            }
        }
    }
    None
}

/// The four simple carriers of a cascade, with the interfaces the three
/// boxes expose.
#[derive(Clone, Debug)]
pub struct CascadeCarriers {
    pub a: FiniteSet,
    pub o1: FiniteSet,
    pub m: FiniteSet,
    pub o2: FiniteSet,
}

impl CascadeCarriers {
    /// First inner box: observes `O₁×M`, consumes `A`.
    pub fn first_iface(&self) -> Interface {
        Interface::simple(self.o1.product(&self.m), self.a.clone())
    }

    /// Second inner box: observes `O₂`, consumes `M×A`.
    pub fn second_iface(&self) -> Interface {
        Interface::simple(self.o2.clone(), self.m.product(&self.a))
    }

    /// Outer box: observes `O₁×O₂`, consumes `A`.
    pub fn outer_iface(&self) -> Interface {
        Interface::simple(self.o1.product(&self.o2), self.a.clone())
    }

    pub fn lens(&self) -> Lens {
        crate::lens::make_cascade(&self.a, &self.o1, &self.m, &self.o2)
    }
}

/// The specialized sufficient conditions for certifying the cascade lens
/// between *simple* certificates:
///
/// * `outer-assumption-reused`: `ᾱ₃(a) ⇒ ᾱ₁(a)`
/// * `intermediate-assumption`: `γ̄₁(o₁,m) ∧ ᾱ₃(a) ⇒ ᾱ₂(m,a)`
/// * `guarantee-aggregation`:   `γ̄₁(o₁,m) ∧ γ̄₂(o₂) ⇒ γ̄₃(o₁,o₂)`
///
/// These imply that [`certify_lens`] holds on the cascade lens. The converse
/// fails in corner cases: when `γ̄₁` (or `γ̄₂`) is unsatisfiable, the generic
/// check holds vacuously while condition (i) can still fail — see the unit
/// tests for a two-line counterexample. Both directions do hold whenever
/// `γ̄₁` and `γ̄₂` are each satisfiable.
#[allow(clippy::too_many_arguments)]
pub fn cascade_conditions_simple(
    carriers: &CascadeCarriers,
    gbar1: &Predicate,
    abar1: &Predicate,
    gbar2: &Predicate,
    abar2: &Predicate,
    gbar3: &Predicate,
    abar3: &Predicate,
) -> Result<BoolVerdict, AglError> {
    let o1m = carriers.o1.product(&carriers.m);
    let ma = carriers.m.product(&carriers.a);
    let o1o2 = carriers.o1.product(&carriers.o2);
    let expect = |name: &str, got: &FiniteSet, want: &FiniteSet| -> Result<(), AglError> {
        if got != want {
            return Err(AglError::CarrierMismatch(format!(
                "{name} is over {{{}}} but the cascade needs {{{}}}",
                got.describe(),
                want.describe()
            )));
        }
        Ok(())
    };
    expect("γ̄₁", gbar1.carrier(), &o1m)?;
    expect("ᾱ₁", abar1.carrier(), &carriers.a)?;
    expect("γ̄₂", gbar2.carrier(), &carriers.o2)?;
    expect("ᾱ₂", abar2.carrier(), &ma)?;
    expect("γ̄₃", gbar3.carrier(), &o1o2)?;
    expect("ᾱ₃", abar3.carrier(), &carriers.a)?;

    for a in carriers.a.iter() {
        if abar3.eval(a)? && !abar1.eval(a)? {
            return Ok(BoolVerdict::fail(
                "outer-assumption-reused",
                vec![a.to_string()],
            ));
        }
    }
    for o1 in carriers.o1.iter() {
        for m in carriers.m.iter() {
            let g1 = gbar1.eval(&Symbol::pair(o1.clone(), m.clone()))?;
            if !g1 {
                continue;
            }
            for a in carriers.a.iter() {
                if abar3.eval(a)? && !abar2.eval(&Symbol::pair(m.clone(), a.clone()))? {
                    return Ok(BoolVerdict::fail(
                        "intermediate-assumption",
                        vec![o1.to_string(), m.to_string(), a.to_string()],
                    ));
                }
            }
        }
    }
    for o1 in carriers.o1.iter() {
        for m in carriers.m.iter() {
            if !gbar1.eval(&Symbol::pair(o1.clone(), m.clone()))? {
                continue;
            }
            for o2 in carriers.o2.iter() {
                if gbar2.eval(o2)? && !gbar3.eval(&Symbol::pair(o1.clone(), o2.clone()))? {
                    return Ok(BoolVerdict::fail(
                        "guarantee-aggregation",
                        vec![o1.to_string(), m.to_string(), o2.to_string()],
                    ));
                }
            }
        }
    }
    Ok(BoolVerdict::pass())
}
