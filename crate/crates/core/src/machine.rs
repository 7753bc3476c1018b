//! Generalized Moore machines and their coupling.
//!
//! A machine `⟨u|v⟩` over states `S` exposes an interface `⟨A_o|O⟩`: the view
//! `v : S → O` says what the machine currently shows, and the update
//! `u : (s, a ∈ A[v(s)]) → T_sS` says how a permitted action changes state.
//! The change structure `T` is either deterministic (`T_sS = S`) or powerset
//! (`T_sS = 𝒫S`); the pairing `μ_T` used when machines run in parallel is
//! the identity in the first case and the set product
//! `μ(U₁,U₂) = U₁ × U₂` in the second.
//!
//! Coupling is lens composition: `couple(machines, wiring)` is the machine
//! `wiring ∘ (m₁ ∥ ⋯ ∥ mₙ)`, with product states, views fed through the
//! wiring's forward map, and actions routed back through its backward map.

use std::collections::BTreeSet;

use crate::error::AglError;
use crate::lens::{Chart, Interface, Lens};
use crate::symbol::{FiniteSet, Symbol};
use crate::verdict::BoolVerdict;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ChangeKind {
    Deterministic,
    Nondeterministic,
}

impl ChangeKind {
    pub fn name(self) -> &'static str {
        match self {
            ChangeKind::Deterministic => "deterministic",
            ChangeKind::Nondeterministic => "nondeterministic",
        }
    }
}

/// A change of state: the next state, or the set of possible next states.
/// Sets are canonically sorted, so equality is set equality.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Change {
    Next(Symbol),
    Set(BTreeSet<Symbol>),
}

impl Change {
    pub fn kind(&self) -> ChangeKind {
        match self {
            Change::Next(_) => ChangeKind::Deterministic,
            Change::Set(_) => ChangeKind::Nondeterministic,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Change::Next(s) => s.to_string(),
            Change::Set(us) => {
                let names: Vec<String> = us.iter().map(|s| s.to_string()).collect();
                format!("{{{}}}", names.join(" "))
            }
        }
    }

    /// Pushforward along a state map: functorial image (identity shape for
    /// deterministic changes, elementwise image for sets).
    pub fn map(&self, f: impl Fn(&Symbol) -> Symbol) -> Change {
        match self {
            Change::Next(s) => Change::Next(f(s)),
            Change::Set(us) => Change::Set(us.iter().map(|s| f(s)).collect()),
        }
    }
}

/// `⟨u|v⟩ : ⟨T_sS|S⟩ ⇄ ⟨A_o|O⟩`, stored as index tables.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Machine {
    states: FiniteSet,
    iface: Interface,
    change: ChangeKind,
    /// `view[s] = index of v(s) in iface.obs`
    view: Vec<usize>,
    /// `update[s][a] = u(s,a)` for `a` indexing `iface.fiber(v(s))`
    update: Vec<Vec<Change>>,
}

impl Machine {
    /// Build and validate. `update` is invoked exactly on the
    /// fiber-compatible pairs `(s, a ∈ A[v(s)])`; its values must match the
    /// change structure and stay within the state set.
    pub fn from_maps(
        states: FiniteSet,
        iface: Interface,
        change: ChangeKind,
        view: impl Fn(&Symbol) -> Symbol,
        update: impl Fn(&Symbol, &Symbol) -> Change,
    ) -> Result<Self, AglError> {
        let mut view_tab = Vec::with_capacity(states.len());
        let mut update_tab = Vec::with_capacity(states.len());
        for s in states.iter() {
            let o = view(s);
            let o_idx = iface.obs().require(&o)?;
            view_tab.push(o_idx);
            let fiber = iface.fiber_at(o_idx);
            let mut row = Vec::with_capacity(fiber.len());
            for a in fiber.iter() {
                let c = update(s, a);
                if c.kind() != change {
                    return Err(AglError::MixedChangeStructure(format!(
                        "update({s}, {a}) is {} but the machine is {}",
                        c.kind().name(),
                        change.name()
                    )));
                }
                match &c {
                    Change::Next(t) => {
                        states.require(t)?;
                    }
                    Change::Set(us) => {
                        for t in us {
                            states.require(t)?;
                        }
                    }
                }
                row.push(c);
            }
            update_tab.push(row);
        }
        Ok(Machine {
            states,
            iface,
            change,
            view: view_tab,
            update: update_tab,
        })
    }

    pub fn states(&self) -> &FiniteSet {
        &self.states
    }

    pub fn iface(&self) -> &Interface {
        &self.iface
    }

    pub fn change(&self) -> ChangeKind {
        self.change
    }

    pub fn view(&self, s: &Symbol) -> Result<&Symbol, AglError> {
        let i = self.states.require(s)?;
        Ok(self.iface.obs().get(self.view[i]))
    }

    pub fn view_idx(&self, s: usize) -> usize {
        self.view[s]
    }

    /// Actions currently permitted: the fiber over the view.
    pub fn enabled(&self, s: &Symbol) -> Result<&FiniteSet, AglError> {
        let i = self.states.require(s)?;
        Ok(self.iface.fiber_at(self.view[i]))
    }

    pub fn update(&self, s: &Symbol, a: &Symbol) -> Result<&Change, AglError> {
        let i = self.states.require(s)?;
        let fiber = self.iface.fiber_at(self.view[i]);
        let j = fiber.position(a).ok_or_else(|| AglError::FiberMismatch {
            obs: self.iface.obs().get(self.view[i]).to_string(),
            action: a.to_string(),
        })?;
        Ok(&self.update[i][j])
    }

    pub fn update_idx(&self, s: usize, a: usize) -> &Change {
        &self.update[s][a]
    }
}

/// Couple machines through a wiring lens: the composite
/// `wiring ∘ (m₁ ∥ ⋯ ∥ mₙ)`. States are left-nested product tuples (a single
/// machine stays unwrapped), views feed the wiring's forward map, and each
/// outer action is routed backward into per-component actions whose updates
/// are recombined with `μ_T`.
pub fn couple(machines: &[Machine], wiring: &Lens) -> Result<Machine, AglError> {
    assert!(!machines.is_empty(), "coupling requires at least one machine");
    let change = machines[0].change;
    for m in machines {
        if m.change != change {
            return Err(AglError::MixedChangeStructure(format!(
                "cannot couple a {} machine with a {} machine",
                change.name(),
                m.change.name()
            )));
        }
    }

    let mut product_iface = machines[0].iface.clone();
    for m in &machines[1..] {
        product_iface = product_iface.product(&m.iface);
    }
    if let Some(detail) = product_iface.first_mismatch(wiring.src()) {
        return Err(AglError::InterfaceMismatch(format!(
            "parallel product of the machine interfaces does not match the wiring source: {detail}"
        )));
    }

    let mut states = machines[0].states.clone();
    for m in &machines[1..] {
        states = states.product(&m.states);
    }

    let n = machines.len();
    Machine::from_maps(
        states,
        wiring.dst().clone(),
        change,
        |s| {
            let parts = s.split_product(n).expect("product state");
            let views: Vec<Symbol> = parts
                .iter()
                .zip(machines)
                .map(|(si, m)| m.view(si).expect("component view").clone())
                .collect();
            wiring
                .fwd(&Symbol::product(&views))
                .expect("wiring forward")
                .clone()
        },
        |s, a| {
            let parts = s.split_product(n).expect("product state");
            let views: Vec<Symbol> = parts
                .iter()
                .zip(machines)
                .map(|(si, m)| m.view(si).expect("component view").clone())
                .collect();
            let inner = wiring
                .bwd(&Symbol::product(&views), a)
                .expect("wiring backward")
                .clone();
            let actions = inner.split_product(n).expect("product action");
            let changes: Vec<&Change> = parts
                .iter()
                .zip(actions.iter())
                .zip(machines)
                .map(|((si, ai), m)| m.update(si, ai).expect("component update"))
                .collect();
            pair_changes(&changes)
        },
    )
}

/// Recombine component changes with `μ_T`: tuple the next states, or take
/// the set product of the next-state sets.
fn pair_changes(changes: &[&Change]) -> Change {
    if changes.len() == 1 {
        return changes[0].clone();
    }
    match changes[0] {
        Change::Next(_) => {
            let nexts: Vec<Symbol> = changes
                .iter()
                .map(|c| match c {
                    Change::Next(t) => t.clone(),
                    Change::Set(_) => unreachable!("mixed change structures are rejected earlier"),
                })
                .collect();
            Change::Next(Symbol::product(&nexts))
        }
        Change::Set(_) => {
            let sets: Vec<&BTreeSet<Symbol>> = changes
                .iter()
                .map(|c| match c {
                    Change::Set(us) => us,
                    Change::Next(_) => unreachable!("mixed change structures are rejected earlier"),
                })
                .collect();
            let mut acc: Vec<Vec<Symbol>> = vec![vec![]];
            for set in sets {
                let mut next = Vec::with_capacity(acc.len() * set.len());
                for prefix in &acc {
                    for t in set {
                        let mut row = prefix.clone();
                        row.push(t.clone());
                        next.push(row);
                    }
                }
                acc = next;
            }
            Change::Set(acc.into_iter().map(|row| Symbol::product(&row)).collect())
        }
    }
}

/// Both machines run simultaneously without interacting: coupling through
/// the identity lens on the product interface.
pub fn parallel_machines(m1: &Machine, m2: &Machine) -> Result<Machine, AglError> {
    let wiring = crate::lens::identity_lens(&m1.iface.product(&m2.iface));
    couple(&[m1.clone(), m2.clone()], &wiring)
}

/// A machine map: a chart between the interfaces plus a state map `σ` that
/// must commute with views and updates. Construction validates shapes only;
/// the two commuting equations are checked by [`check_simulation`].
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    src: Machine,
    dst: Machine,
    chart: Chart,
    /// `map[s₁] = index of σ(s₁) in dst.states`
    map: Vec<usize>,
}

impl Simulation {
    pub fn from_map(
        src: Machine,
        dst: Machine,
        chart: Chart,
        map: impl Fn(&Symbol) -> Symbol,
    ) -> Result<Self, AglError> {
        if let Some(detail) = chart.src().first_mismatch(src.iface()) {
            return Err(AglError::InterfaceMismatch(format!(
                "chart source does not match the source machine interface: {detail}"
            )));
        }
        if let Some(detail) = chart.dst().first_mismatch(dst.iface()) {
            return Err(AglError::InterfaceMismatch(format!(
                "chart target does not match the target machine interface: {detail}"
            )));
        }
        if src.change != dst.change {
            return Err(AglError::MixedChangeStructure(format!(
                "source is {} but target is {}",
                src.change.name(),
                dst.change.name()
            )));
        }
        let mut tab = Vec::with_capacity(src.states.len());
        for s in src.states.iter() {
            tab.push(dst.states.require(&map(s))?);
        }
        Ok(Simulation {
            src,
            dst,
            chart,
            map: tab,
        })
    }

    pub fn src(&self) -> &Machine {
        &self.src
    }

    pub fn dst(&self) -> &Machine {
        &self.dst
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn map(&self, s: &Symbol) -> Result<&Symbol, AglError> {
        let i = self.src.states.require(s)?;
        Ok(self.dst.states.get(self.map[i]))
    }
}

/// Check the two commuting squares of a machine map:
/// `v₂(σ(s)) = f(v₁(s))` and `u₂(σ(s), f♯(v₁(s),a)) = Tσ(u₁(s,a))`
/// for every state `s` and permitted action `a`. The first failure in scan
/// order (states, then fiber actions) is reported.
pub fn check_simulation(sim: &Simulation) -> BoolVerdict {
    let src = &sim.src;
    let dst = &sim.dst;
    for (s_idx, s) in src.states.iter().enumerate() {
        let sigma_s = dst.states.get(sim.map[s_idx]);
        let v1 = src.iface.obs().get(src.view[s_idx]);
        let f_v1 = sim.chart.fwd(v1).expect("chart forward is total");
        let v2 = dst.view(sigma_s).expect("target view is total");
        if v2 != f_v1 {
            return BoolVerdict::fail(
                "view-square",
                vec![s.to_string(), format!("v2(σ(s))={v2}"), format!("f(v1(s))={f_v1}")],
            );
        }
        for a in src.iface.fiber_at(src.view[s_idx]).iter() {
            let pushed = sim.chart.push(v1, a).expect("chart push is total");
            let lhs = dst.update(sigma_s, pushed).expect("target update is total");
            let rhs = src
                .update(s, a)
                .expect("source update is total")
                .map(|t| {
                    let t_idx = src.states.position(t).expect("source state");
                    dst.states.get(sim.map[t_idx]).clone()
                });
            if *lhs != rhs {
                return BoolVerdict::fail(
                    "update-square",
                    vec![
                        s.to_string(),
                        a.to_string(),
                        format!("u2(σ(s),f♯(a))={}", lhs.describe()),
                        format!("Tσ(u1(s,a))={}", rhs.describe()),
                    ],
                );
            }
        }
    }
    BoolVerdict::pass()
}

/// Deterministic execution: apply the actions in order, checking each is
/// permitted by the fiber over the current view. Returns all visited states
/// (`|actions| + 1` of them).
pub fn run_trace(m: &Machine, s0: &Symbol, actions: &[Symbol]) -> Result<Vec<Symbol>, AglError> {
    if m.change != ChangeKind::Deterministic {
        return Err(AglError::RequiresDeterministic("run_trace"));
    }
    m.states.require(s0)?;
    let mut trace = Vec::with_capacity(actions.len() + 1);
    trace.push(s0.clone());
    let mut cur = s0.clone();
    for (step, a) in actions.iter().enumerate() {
        let enabled = m.enabled(&cur)?;
        if !enabled.contains(a) {
            return Err(AglError::TraceActionMismatch {
                step,
                detail: format!(
                    "action `{a}` at state `{cur}` (view `{}` permits {{{}}})",
                    m.view(&cur)?,
                    enabled.describe()
                ),
            });
        }
        cur = match m.update(&cur, a)? {
            Change::Next(t) => t.clone(),
            Change::Set(_) => unreachable!("deterministic machine"),
        };
        trace.push(cur.clone());
    }
    Ok(trace)
}
