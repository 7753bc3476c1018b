//! Interfaces, lenses, charts, and the wiring algebra.
//!
//! An interface `⟨A_o | o:O⟩` is a finite observation set with an action set
//! per observation. A lens `⟨w♯|w⟩ : ⟨A₁|O₁⟩ ⇄ ⟨A₂|O₂⟩` maps observations
//! forward (`w : O₁ → O₂`) and actions backward along the forward map
//! (`w♯ : (o₁, a₂ ∈ A₂[w(o₁)]) → A₁[o₁]`). A chart `⟨f♯|f⟩` maps both
//! components forward; certificates pull back along charts.
//!
//! Lenses are stored as explicit function tables over the finite carriers,
//! which makes exhaustive checking trivial and equality decidable
//! table-for-table. Coupling patterns are lenses too:
//!
//! ```text
//! parallel:  ⟨A₁|O₁⟩ ∥ ⟨A₂|O₂⟩ ⇄ ⟨A₁×A₂|O₁×O₂⟩   ((o₁,o₂),(a₁,a₂)) ↦ (a₁,a₂)
//! cascade:   ⟨A|O₁×M⟩ ∥ ⟨M×A|O₂⟩ ⇄ ⟨A|O₁×O₂⟩     (((o₁,m),o₂),a) ↦ (a,(m,a))
//! feedback:  ⟨A×M|M×O⟩ ⇄ ⟨A|O⟩                    ((m,o),a) ↦ (a,m)
//! ```

use crate::error::AglError;
use crate::symbol::{FiniteSet, Symbol};

/// `⟨A_o | o : O⟩`: observations plus one action fiber per observation.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Interface {
    obs: FiniteSet,
    fibers: Vec<FiniteSet>,
}

impl Interface {
    pub fn new(obs: FiniteSet, fibers: Vec<FiniteSet>) -> Result<Self, AglError> {
        if fibers.len() != obs.len() {
            return Err(AglError::InterfaceMismatch(format!(
                "{} observations but {} action fibers",
                obs.len(),
                fibers.len()
            )));
        }
        Ok(Interface { obs, fibers })
    }

    /// Interface with the same action set over every observation.
    pub fn simple(obs: FiniteSet, actions: FiniteSet) -> Self {
        let fibers = vec![actions; obs.len()];
        Interface { obs, fibers }
    }

    pub fn obs(&self) -> &FiniteSet {
        &self.obs
    }

    pub fn fiber_at(&self, obs_index: usize) -> &FiniteSet {
        &self.fibers[obs_index]
    }

    pub fn fiber(&self, o: &Symbol) -> Result<&FiniteSet, AglError> {
        Ok(&self.fibers[self.obs.require(o)?])
    }

    /// The common action set, if every fiber is the same.
    pub fn simple_actions(&self) -> Option<&FiniteSet> {
        let first = self.fibers.first()?;
        self.fibers.iter().all(|f| f == first).then_some(first)
    }

    /// Require simplicity, reporting the first offending fiber.
    pub fn require_simple(&self) -> Result<&FiniteSet, AglError> {
        match self.simple_actions() {
            Some(a) => Ok(a),
            None => {
                let first = self.obs.get(0);
                let bad = (1..self.obs.len())
                    .find(|&i| self.fibers[i] != self.fibers[0])
                    .expect("non-simple interface has a differing fiber");
                Err(AglError::NonSimpleInterface {
                    obs: self.obs.get(bad).to_string(),
                    first: first.to_string(),
                })
            }
        }
    }

    /// Product interface: observations multiply and fibers pair up
    /// componentwise.
    pub fn product(&self, other: &Interface) -> Interface {
        let obs = self.obs.product(&other.obs);
        let mut fibers = Vec::with_capacity(obs.len());
        for i in 0..self.obs.len() {
            for j in 0..other.obs.len() {
                fibers.push(self.fibers[i].product(&other.fibers[j]));
            }
        }
        Interface { obs, fibers }
    }

    /// Human-readable description of the first place two interfaces differ,
    /// or `None` if they are structurally equal.
    pub fn first_mismatch(&self, other: &Interface) -> Option<String> {
        for i in 0..self.obs.len().min(other.obs.len()) {
            if self.obs.get(i) != other.obs.get(i) {
                return Some(format!(
                    "observation {} is `{}` on one side and `{}` on the other",
                    i,
                    self.obs.get(i),
                    other.obs.get(i)
                ));
            }
            if self.fibers[i] != other.fibers[i] {
                return Some(format!(
                    "action fiber over `{}` is {:?} on one side and {:?} on the other",
                    self.obs.get(i),
                    self.fibers[i],
                    other.fibers[i]
                ));
            }
        }
        if self.obs.len() != other.obs.len() {
            return Some(format!(
                "observation sets have sizes {} and {}",
                self.obs.len(),
                other.obs.len()
            ));
        }
        None
    }

    fn require_equal(&self, other: &Interface, context: &str) -> Result<(), AglError> {
        match self.first_mismatch(other) {
            None => Ok(()),
            Some(detail) => Err(AglError::InterfaceMismatch(format!("{context}: {detail}"))),
        }
    }
}

/// `⟨w♯|w⟩ : src ⇄ dst`, stored as index tables aligned with the carriers.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Lens {
    src: Interface,
    dst: Interface,
    /// `fwd[o₁] = index of w(o₁) in dst.obs`
    fwd: Vec<usize>,
    /// `bwd[o₁][a₂] = index of w♯(o₁,a₂) in src.fiber(o₁)`,
    /// where `a₂` indexes `dst.fiber(w(o₁))`
    bwd: Vec<Vec<usize>>,
}

impl Lens {
    /// Build and validate a lens from forward/backward functions. The
    /// backward map is invoked exactly on the pairs `(o₁, a₂)` with
    /// `a₂ ∈ A₂[w(o₁)]` and its values must land in the fiber over `o₁`.
    pub fn from_maps(
        src: Interface,
        dst: Interface,
        fwd: impl Fn(&Symbol) -> Symbol,
        bwd: impl Fn(&Symbol, &Symbol) -> Symbol,
    ) -> Result<Self, AglError> {
        let mut fwd_tab = Vec::with_capacity(src.obs().len());
        let mut bwd_tab = Vec::with_capacity(src.obs().len());
        for (i, o1) in src.obs().iter().enumerate() {
            let o2 = fwd(o1);
            let o2_idx = dst.obs().require(&o2)?;
            fwd_tab.push(o2_idx);
            let out_fiber = dst.fiber_at(o2_idx);
            let in_fiber = src.fiber_at(i);
            let mut row = Vec::with_capacity(out_fiber.len());
            for a2 in out_fiber.iter() {
                let a1 = bwd(o1, a2);
                let a1_idx = in_fiber.position(&a1).ok_or_else(|| AglError::FiberMismatch {
                    obs: o1.to_string(),
                    action: a1.to_string(),
                })?;
                row.push(a1_idx);
            }
            bwd_tab.push(row);
        }
        Ok(Lens {
            src,
            dst,
            fwd: fwd_tab,
            bwd: bwd_tab,
        })
    }

    pub fn src(&self) -> &Interface {
        &self.src
    }

    pub fn dst(&self) -> &Interface {
        &self.dst
    }

    pub fn fwd(&self, o1: &Symbol) -> Result<&Symbol, AglError> {
        let i = self.src.obs().require(o1)?;
        Ok(self.dst.obs().get(self.fwd[i]))
    }

    pub fn bwd(&self, o1: &Symbol, a2: &Symbol) -> Result<&Symbol, AglError> {
        let i = self.src.obs().require(o1)?;
        let out_fiber = self.dst.fiber_at(self.fwd[i]);
        let j = out_fiber.position(a2).ok_or_else(|| AglError::FiberMismatch {
            obs: self.dst.obs().get(self.fwd[i]).to_string(),
            action: a2.to_string(),
        })?;
        Ok(self.src.fiber_at(i).get(self.bwd[i][j]))
    }

    pub(crate) fn fwd_idx(&self, o1: usize) -> usize {
        self.fwd[o1]
    }

    pub(crate) fn bwd_idx(&self, o1: usize, a2: usize) -> usize {
        self.bwd[o1][a2]
    }
}

/// Identity lens: `fwd = id`, `bwd(o,a) = a`.
pub fn identity_lens(iface: &Interface) -> Lens {
    Lens::from_maps(iface.clone(), iface.clone(), Symbol::clone, |_, a| a.clone())
        .expect("identity lens is always well-formed")
}

/// Composite `t ∘ w` (apply `w` first): `fwd = t.fwd ∘ w.fwd` and
/// `bwd(o₁,a₃) = w.bwd(o₁, t.bwd(w.fwd(o₁), a₃))`.
pub fn compose_lens(t: &Lens, w: &Lens) -> Result<Lens, AglError> {
    w.dst.require_equal(&t.src, "composing lenses")?;
    let fwd: Vec<usize> = w.fwd.iter().map(|&m| t.fwd[m]).collect();
    let bwd: Vec<Vec<usize>> = (0..w.src.obs().len())
        .map(|o1| {
            let o2 = w.fwd[o1];
            let o3 = t.fwd[o2];
            (0..t.dst.fiber_at(o3).len())
                .map(|a3| w.bwd[o1][t.bwd[o2][a3]])
                .collect()
        })
        .collect();
    Ok(Lens {
        src: w.src.clone(),
        dst: t.dst.clone(),
        fwd,
        bwd,
    })
}

/// Parallel product: both lenses act componentwise on the product
/// interfaces.
pub fn parallel_lens(l1: &Lens, l2: &Lens) -> Lens {
    let src = l1.src.product(&l2.src);
    let dst = l1.dst.product(&l2.dst);
    Lens::from_maps(
        src,
        dst,
        |o| {
            let (o1, o2) = o.as_pair().expect("product observation");
            Symbol::pair(
                l1.fwd(o1).expect("left observation").clone(),
                l2.fwd(o2).expect("right observation").clone(),
            )
        },
        |o, a| {
            let (o1, o2) = o.as_pair().expect("product observation");
            let (a1, a2) = a.as_pair().expect("product action");
            Symbol::pair(
                l1.bwd(o1, a1).expect("left action").clone(),
                l2.bwd(o2, a2).expect("right action").clone(),
            )
        },
    )
    .expect("parallel product of well-formed lenses is well-formed")
}

/// Cascade coupling pattern over the simple carriers `A, O₁, M, O₂`:
/// the first box reports `O₁×M` and consumes `A`, the second reports `O₂`
/// and consumes `M×A` (the first box's extra output `m` plus the outer
/// action). As a lens:
/// `⟨A|O₁×M⟩ ∥ ⟨M×A|O₂⟩ ⇄ ⟨A|O₁×O₂⟩` with
/// `(((o₁,m),o₂), a) ↦ (a, (m,a))` and `((o₁,m),o₂) ↦ (o₁,o₂)`.
pub fn make_cascade(a: &FiniteSet, o1: &FiniteSet, m: &FiniteSet, o2: &FiniteSet) -> Lens {
    let first = Interface::simple(o1.product(m), a.clone());
    let second = Interface::simple(o2.clone(), m.product(a));
    let src = first.product(&second);
    let dst = Interface::simple(o1.product(o2), a.clone());
    Lens::from_maps(
        src,
        dst,
        |o| {
            let (o1m, o2) = o.as_pair().expect("cascade observation");
            let (o1, _m) = o1m.as_pair().expect("first-box observation");
            Symbol::pair(o1.clone(), o2.clone())
        },
        |o, a| {
            let (o1m, _o2) = o.as_pair().expect("cascade observation");
            let (_o1, m) = o1m.as_pair().expect("first-box observation");
            Symbol::pair(a.clone(), Symbol::pair(m.clone(), a.clone()))
        },
    )
    .expect("cascade lens is well-formed by construction")
}

/// Feedback coupling pattern over the simple carriers `A, M, O`: the box
/// reports `M×O` and consumes `A×M`, the fed-back `m` component being both
/// produced and consumed by the box itself. As a lens:
/// `⟨A×M|M×O⟩ ⇄ ⟨A|O⟩` with `((m,o), a) ↦ (a, m)` and `(m,o) ↦ o`.
pub fn make_feedback(a: &FiniteSet, m: &FiniteSet, o: &FiniteSet) -> Lens {
    let src = Interface::simple(m.product(o), a.product(m));
    let dst = Interface::simple(o.clone(), a.clone());
    Lens::from_maps(
        src,
        dst,
        |mo| {
            let (_m, o) = mo.as_pair().expect("feedback observation");
            o.clone()
        },
        |mo, a| {
            let (m, _o) = mo.as_pair().expect("feedback observation");
            Symbol::pair(a.clone(), m.clone())
        },
    )
    .expect("feedback lens is well-formed by construction")
}

/// `⟨f♯|f⟩ : src → dst`: observations and actions both map forward. The
/// covariant action component is what lets certificates pull back:
/// `α′(o,a) = α(f(o), f♯(o,a))`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Chart {
    src: Interface,
    dst: Interface,
    /// `fwd[o₁] = index of f(o₁) in dst.obs`
    fwd: Vec<usize>,
    /// `push[o₁][a₁] = index of f♯(o₁,a₁) in dst.fiber(f(o₁))`
    push: Vec<Vec<usize>>,
}

impl Chart {
    pub fn from_maps(
        src: Interface,
        dst: Interface,
        fwd: impl Fn(&Symbol) -> Symbol,
        push: impl Fn(&Symbol, &Symbol) -> Symbol,
    ) -> Result<Self, AglError> {
        let mut fwd_tab = Vec::with_capacity(src.obs().len());
        let mut push_tab = Vec::with_capacity(src.obs().len());
        for (i, o1) in src.obs().iter().enumerate() {
            let o2 = fwd(o1);
            let o2_idx = dst.obs().require(&o2)?;
            fwd_tab.push(o2_idx);
            let out_fiber = dst.fiber_at(o2_idx);
            let mut row = Vec::with_capacity(src.fiber_at(i).len());
            for a1 in src.fiber_at(i).iter() {
                let a2 = push(o1, a1);
                let a2_idx = out_fiber.position(&a2).ok_or_else(|| AglError::FiberMismatch {
                    obs: o2.to_string(),
                    action: a2.to_string(),
                })?;
                row.push(a2_idx);
            }
            push_tab.push(row);
        }
        Ok(Chart {
            src,
            dst,
            fwd: fwd_tab,
            push: push_tab,
        })
    }

    pub fn src(&self) -> &Interface {
        &self.src
    }

    pub fn dst(&self) -> &Interface {
        &self.dst
    }

    pub fn fwd(&self, o1: &Symbol) -> Result<&Symbol, AglError> {
        let i = self.src.obs().require(o1)?;
        Ok(self.dst.obs().get(self.fwd[i]))
    }

    pub fn push(&self, o1: &Symbol, a1: &Symbol) -> Result<&Symbol, AglError> {
        let i = self.src.obs().require(o1)?;
        let j = self
            .src
            .fiber_at(i)
            .position(a1)
            .ok_or_else(|| AglError::FiberMismatch {
                obs: o1.to_string(),
                action: a1.to_string(),
            })?;
        Ok(self.dst.fiber_at(self.fwd[i]).get(self.push[i][j]))
    }
}

pub fn identity_chart(iface: &Interface) -> Chart {
    Chart::from_maps(iface.clone(), iface.clone(), Symbol::clone, |_, a| a.clone())
        .expect("identity chart is always well-formed")
}

/// Composite `g ∘ f` (apply `f` first): both components compose forward,
/// `push(o,a) = g.push(f.fwd(o), f.push(o,a))`.
pub fn compose_chart(g: &Chart, f: &Chart) -> Result<Chart, AglError> {
    f.dst.require_equal(&g.src, "composing charts")?;
    let fwd: Vec<usize> = f.fwd.iter().map(|&m| g.fwd[m]).collect();
    let push: Vec<Vec<usize>> = (0..f.src.obs().len())
        .map(|o1| {
            let o2 = f.fwd[o1];
            (0..f.src.fiber_at(o1).len())
                .map(|a1| g.push[o2][f.push[o1][a1]])
                .collect()
        })
        .collect();
    Ok(Chart {
        src: f.src.clone(),
        dst: g.dst.clone(),
        fwd,
        push,
    })
}
