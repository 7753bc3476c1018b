//! Random generators and brute-force oracles shared by the acceptance
//! criteria. Everything is seeded, so failures reproduce exactly.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use agl_core::certbool::{
    parallel_certificates, InterfaceCertificate, MachineCertificate, Predicate,
};
use agl_core::dsl::{
    BoolCertDoc, Document, MachineDoc, OdeDoc, QuantCertBody, QuantCertDoc, SimulationDoc,
    WiringDoc, WiringSpec,
};
use agl_core::expr::{Expr, VarKind};
use agl_core::lens::{
    identity_lens, make_cascade, make_feedback, Chart, Interface, Lens,
};
use agl_core::machine::{parallel_machines, Change, ChangeKind, Machine, Simulation};
use agl_core::ode::OpenODE;
use agl_core::plfun::PLFun;
use agl_core::quant::QuantCertificate;
use agl_core::{FiniteSet, Symbol};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn coin(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.gen::<f64>() < p
}

pub fn rand_set(rng: &mut ChaCha8Rng, prefix: &str, max: usize) -> FiniteSet {
    let n = rng.gen_range(1..=max);
    FiniteSet::from_names((0..n).map(|i| format!("{prefix}{i}"))).expect("distinct names")
}

/// Interface with a random observation carrier and one random fiber per
/// observation.
pub fn rand_iface(rng: &mut ChaCha8Rng, tag: &str, max_obs: usize, max_act: usize) -> Interface {
    let obs = rand_set(rng, &format!("{tag}o"), max_obs);
    let fibers: Vec<FiniteSet> = (0..obs.len())
        .map(|i| rand_set(rng, &format!("{tag}a{i}_"), max_act))
        .collect();
    Interface::new(obs, fibers).expect("aligned fibers")
}

/// Uniformly random lens: any forward map, any choice function backward.
pub fn rand_lens(rng: &mut ChaCha8Rng, src: &Interface, dst: &Interface) -> Lens {
    let fwd_tab: Vec<usize> = (0..src.obs().len())
        .map(|_| rng.gen_range(0..dst.obs().len()))
        .collect();
    let bwd_tab: Vec<Vec<usize>> = (0..src.obs().len())
        .map(|i| {
            (0..dst.fiber_at(fwd_tab[i]).len())
                .map(|_| rng.gen_range(0..src.fiber_at(i).len()))
                .collect()
        })
        .collect();
    Lens::from_maps(
        src.clone(),
        dst.clone(),
        |o| {
            let i = src.obs().position(o).expect("source observation");
            dst.obs().get(fwd_tab[i]).clone()
        },
        |o, a2| {
            let i = src.obs().position(o).expect("source observation");
            let j = dst
                .fiber_at(fwd_tab[i])
                .position(a2)
                .expect("target action");
            src.fiber_at(i).get(bwd_tab[i][j]).clone()
        },
    )
    .expect("tables are total by construction")
}

pub fn rand_machine(
    rng: &mut ChaCha8Rng,
    change: ChangeKind,
    tag: &str,
    max_states: usize,
    max_obs: usize,
    max_act: usize,
) -> Machine {
    let states = rand_set(rng, &format!("{tag}s"), max_states);
    let iface = rand_iface(rng, tag, max_obs, max_act);
    let view_tab: Vec<usize> = (0..states.len())
        .map(|_| rng.gen_range(0..iface.obs().len()))
        .collect();
    let update_tab: Vec<Vec<Change>> = (0..states.len())
        .map(|si| {
            let fiber = iface.fiber_at(view_tab[si]);
            (0..fiber.len())
                .map(|_| match change {
                    ChangeKind::Deterministic => {
                        Change::Next(states.get(rng.gen_range(0..states.len())).clone())
                    }
                    ChangeKind::Nondeterministic => {
                        let set: BTreeSet<Symbol> = states
                            .iter()
                            .filter(|_| rng.gen::<f64>() < 0.5)
                            .cloned()
                            .collect();
                        Change::Set(set)
                    }
                })
                .collect()
        })
        .collect();
    Machine::from_maps(
        states.clone(),
        iface.clone(),
        change,
        |s| {
            let si = states.position(s).expect("state");
            iface.obs().get(view_tab[si]).clone()
        },
        |s, a| {
            let si = states.position(s).expect("state");
            let fiber = iface.fiber_at(view_tab[si]);
            let aj = fiber.position(a).expect("enabled action");
            update_tab[si][aj].clone()
        },
    )
    .expect("tables are total by construction")
}

/// Random assumption/guarantee plus the greatest state spec closed under
/// them, so the resulting certificate always verifies.
pub fn invariant_certificate(rng: &mut ChaCha8Rng, m: &Machine) -> MachineCertificate {
    let obs = m.iface().obs().clone();
    let gamma_tab: Vec<bool> = (0..obs.len()).map(|_| coin(rng, 0.7)).collect();
    let alpha_tab: Vec<Vec<bool>> = (0..obs.len())
        .map(|oi| {
            (0..m.iface().fiber_at(oi).len())
                .map(|_| gamma_tab[oi] && coin(rng, 0.7))
                .collect()
        })
        .collect();

    let mut phi: Vec<bool> = (0..m.states().len())
        .map(|si| gamma_tab[m.view_idx(si)])
        .collect();
    loop {
        let mut changed = false;
        for si in 0..m.states().len() {
            if !phi[si] {
                continue;
            }
            let oi = m.view_idx(si);
            for aj in 0..m.iface().fiber_at(oi).len() {
                if !alpha_tab[oi][aj] {
                    continue;
                }
                let preserved = match m.update_idx(si, aj) {
                    Change::Next(t) => phi[m.states().position(t).expect("state")],
                    Change::Set(us) => us
                        .iter()
                        .all(|t| phi[m.states().position(t).expect("state")]),
                };
                if !preserved {
                    phi[si] = false;
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let gamma = Predicate::from_fn(obs.clone(), |o| {
        gamma_tab[obs.position(o).expect("observation")]
    });
    let icert = InterfaceCertificate::from_fns(m.iface().clone(), gamma, |o, a| {
        let oi = obs.position(o).expect("observation");
        let aj = m.iface().fiber_at(oi).position(a).expect("action");
        alpha_tab[oi][aj]
    })
    .expect("assumptions only where the guarantee holds");
    let spec = Predicate::from_fn(m.states().clone(), |s| {
        phi[m.states().position(s).expect("state")]
    });
    MachineCertificate::new(m.clone(), spec, icert).expect("carriers match")
}

/// The strongest certificate on the wiring target that the source
/// certificate supports: the guarantee is the forward image, the assumption
/// is everything the inner assumptions allow. The wiring is certified
/// against this pair by construction.
pub fn image_certificate(wiring: &Lens, c_in: &InterfaceCertificate) -> InterfaceCertificate {
    let dst = wiring.dst().clone();
    let gamma = Predicate::from_fn(dst.obs().clone(), |o2| {
        wiring.src().obs().iter().any(|o1| {
            wiring.fwd(o1).expect("total") == o2 && c_in.gamma().eval(o1).expect("carrier")
        })
    });
    let gamma_for_alpha = gamma.clone();
    InterfaceCertificate::from_fns(dst, gamma, move |o2, a2| {
        gamma_for_alpha.eval(o2).expect("carrier")
            && wiring.src().obs().iter().all(|o1| {
                if wiring.fwd(o1).expect("total") != o2 || !c_in.gamma().eval(o1).expect("carrier")
                {
                    return true;
                }
                let a1 = wiring.bwd(o1, a2).expect("total");
                c_in.alpha(o1, a1).expect("carrier")
            })
    })
    .expect("alpha implies gamma by construction")
}

pub fn conjunction_certificate(certs: &[MachineCertificate]) -> InterfaceCertificate {
    let icerts: Vec<&InterfaceCertificate> = certs.iter().map(|c| c.icert()).collect();
    parallel_certificates(&icerts)
}

/// Direct quantifier sweep of the two machine conditions, written
/// independently of the library checker.
pub fn naive_certificate_holds(mc: &MachineCertificate) -> bool {
    let m = mc.machine();
    for (si, _s) in m.states().iter().enumerate() {
        if !mc.phi().eval_idx(si) {
            continue;
        }
        let oi = m.view_idx(si);
        if !mc.icert().gamma().eval_idx(oi) {
            return false;
        }
        for aj in 0..m.iface().fiber_at(oi).len() {
            if !mc.icert().alpha_idx(oi, aj) {
                continue;
            }
            let preserved = match m.update_idx(si, aj) {
                Change::Next(t) => mc.phi().eval(t).expect("carrier"),
                Change::Set(us) => us.iter().all(|t| mc.phi().eval(t).expect("carrier")),
            };
            if !preserved {
                return false;
            }
        }
    }
    true
}

/// A simulation onto `target` whose squares commute by construction: the
/// source machine refines every state, observation, and action of the
/// target with tags, and everything collapses back under the chart and the
/// state map.
pub fn cover_simulation(rng: &mut ChaCha8Rng, target: &Machine) -> Simulation {
    let obs_tags = rand_set(rng, "ot", 2);
    let act_tags = rand_set(rng, "at", 2);
    let state_tags = rand_set(rng, "st", 2);

    let mut obs_syms = Vec::new();
    let mut fibers = Vec::new();
    for (oi, o) in target.iface().obs().iter().enumerate() {
        for t in obs_tags.iter() {
            obs_syms.push(Symbol::pair(o.clone(), t.clone()));
            let fiber: Vec<Symbol> = target
                .iface()
                .fiber_at(oi)
                .iter()
                .flat_map(|a| act_tags.iter().map(move |u| Symbol::pair(a.clone(), u.clone())))
                .collect();
            fibers.push(FiniteSet::new(fiber).expect("distinct pairs"));
        }
    }
    let src_iface = Interface::new(FiniteSet::new(obs_syms).expect("distinct pairs"), fibers)
        .expect("aligned fibers");
    let chart = Chart::from_maps(
        src_iface.clone(),
        target.iface().clone(),
        |om| om.as_pair().expect("pair observation").0.clone(),
        |_om, am| am.as_pair().expect("pair action").0.clone(),
    )
    .expect("projections are chart maps");

    let mut state_syms = Vec::new();
    for s in target.states().iter() {
        for w in state_tags.iter() {
            state_syms.push(Symbol::pair(s.clone(), w.clone()));
        }
    }
    let src_states = FiniteSet::new(state_syms).expect("distinct pairs");

    let view_tag: Vec<usize> = (0..src_states.len())
        .map(|_| rng.gen_range(0..obs_tags.len()))
        .collect();
    let view_of = |sm: &Symbol| -> Symbol {
        let si = src_states.position(sm).expect("state");
        let (s, _w) = sm.as_pair().expect("pair state");
        let o = target.view(s).expect("total view");
        Symbol::pair(o.clone(), obs_tags.get(view_tag[si]).clone())
    };

    // Tag choices for successor states, fixed up front so the closure is
    // deterministic.
    let succ_tag: Vec<usize> = (0..src_states.len() * target.states().len() * 4)
        .map(|_| rng.gen_range(0..state_tags.len()))
        .collect();
    let tag_for = |key: usize| state_tags.get(succ_tag[key % succ_tag.len()]).clone();

    let machine = Machine::from_maps(
        src_states.clone(),
        src_iface.clone(),
        target.change(),
        view_of,
        |sm, am| {
            let si = src_states.position(sm).expect("state");
            let (s, _w) = sm.as_pair().expect("pair state");
            let (a, _u) = am.as_pair().expect("pair action");
            match target.update(s, a).expect("total update") {
                Change::Next(t) => {
                    let ti = target.states().position(t).expect("state");
                    Change::Next(Symbol::pair(t.clone(), tag_for(si * 31 + ti)))
                }
                Change::Set(us) => Change::Set(
                    us.iter()
                        .map(|t| {
                            let ti = target.states().position(t).expect("state");
                            Symbol::pair(t.clone(), tag_for(si * 31 + ti))
                        })
                        .collect(),
                ),
            }
        },
    )
    .expect("cover tables are total");

    Simulation::from_map(machine, target.clone(), chart, |sm| {
        sm.as_pair().expect("pair state").0.clone()
    })
    .expect("interfaces and kinds agree")
}

// ---------------------------------------------------------------------------
// Document generators (used by the round-trip criterion).

const NAME_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_-";

pub fn rand_name(rng: &mut ChaCha8Rng, stem: &str) -> String {
    let mut s = String::from(stem);
    for _ in 0..rng.gen_range(2..6) {
        s.push(NAME_CHARS[rng.gen_range(0..NAME_CHARS.len())] as char);
    }
    s
}

const COEFFS: &[f64] = &[0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0];

/// One multiplicative term in the shape the expression grammar produces:
/// an optional leading coefficient times powered variables, left-nested.
fn rand_term(rng: &mut ChaCha8Rng, vars: &[(VarKind, usize)], vanish: bool) -> Expr {
    let mut factors: Vec<Expr> = Vec::new();
    if !vanish || coin(rng, 0.6) {
        factors.push(Expr::Const(COEFFS[rng.gen_range(0..COEFFS.len())]));
    }
    let n_vars = if vanish {
        rng.gen_range(1..=2)
    } else {
        rng.gen_range(0..=2)
    };
    for _ in 0..n_vars {
        let (kind, dim) = vars[rng.gen_range(0..vars.len())];
        let v = Expr::Var(kind, rng.gen_range(1..=dim));
        factors.push(if coin(rng, 0.4) {
            Expr::Pow(Box::new(v), rng.gen_range(2..=3))
        } else {
            v
        });
    }
    if factors.is_empty() {
        factors.push(Expr::Const(COEFFS[rng.gen_range(0..COEFFS.len())]));
    }
    let mut e = factors.remove(0);
    for f in factors {
        e = Expr::Mul(Box::new(e), Box::new(f));
    }
    e
}

/// Random polynomial over the listed variable families, built in the exact
/// left-nested shape the parser produces. With `vanish`, every term carries
/// a variable factor so the whole expression is zero at the origin.
pub fn rand_poly(rng: &mut ChaCha8Rng, vars: &[(VarKind, usize)], vanish: bool) -> Expr {
    let mut e = rand_term(rng, vars, vanish);
    for _ in 0..rng.gen_range(0..3) {
        let t = rand_term(rng, vars, vanish);
        e = if coin(rng, 0.3) {
            Expr::Sub(Box::new(e), Box::new(t))
        } else {
            Expr::Add(Box::new(e), Box::new(t))
        };
    }
    e
}

/// A slack function: zero at zero, slopes strictly below 1 so that
/// `id − λ` stays strictly increasing.
pub fn rand_lambda(rng: &mut ChaCha8Rng) -> PLFun {
    const SLOPES: &[f64] = &[0.0, 0.25, 0.5, 0.75];
    let mut pts = vec![(0.0, 0.0)];
    let mut r = 0.0;
    let mut v = 0.0;
    for _ in 0..rng.gen_range(0..3) {
        let dr = [0.5, 1.0][rng.gen_range(0..2)];
        let s = SLOPES[rng.gen_range(0..SLOPES.len())];
        r += dr;
        v += s * dr;
        pts.push((r, v));
    }
    PLFun::new(pts, SLOPES[rng.gen_range(0..SLOPES.len())]).expect("valid breakpoints")
}

fn rand_change_kind(rng: &mut ChaCha8Rng) -> ChangeKind {
    if coin(rng, 0.5) {
        ChangeKind::Deterministic
    } else {
        ChangeKind::Nondeterministic
    }
}

fn rand_machine_doc(rng: &mut ChaCha8Rng) -> Document {
    let kind = rand_change_kind(rng);
    let m = if coin(rng, 0.25) {
        let m1 = rand_machine(rng, kind, "l", 2, 2, 2);
        let m2 = rand_machine(rng, kind, "r", 2, 2, 2);
        parallel_machines(&m1, &m2).expect("same change kind")
    } else {
        rand_machine(rng, kind, "g", 3, 3, 3)
    };
    Document::Machine(MachineDoc::new(rand_name(rng, "m"), m))
}

fn rand_wiring_doc(rng: &mut ChaCha8Rng) -> Document {
    let name = rand_name(rng, "w");
    let (spec, lens) = match rng.gen_range(0..4) {
        0 => {
            let obs1 = rand_set(rng, "p", 3);
            let actions1 = rand_set(rng, "b", 3);
            let obs2 = rand_set(rng, "q", 3);
            let actions2 = rand_set(rng, "c", 3);
            let lens = identity_lens(
                &Interface::simple(obs1.clone(), actions1.clone())
                    .product(&Interface::simple(obs2.clone(), actions2.clone())),
            );
            (
                WiringSpec::Parallel {
                    obs1,
                    actions1,
                    obs2,
                    actions2,
                },
                lens,
            )
        }
        1 => {
            let actions = rand_set(rng, "b", 3);
            let obs1 = rand_set(rng, "p", 3);
            let mid = rand_set(rng, "h", 3);
            let obs2 = rand_set(rng, "q", 3);
            let lens = make_cascade(&actions, &obs1, &mid, &obs2);
            (
                WiringSpec::Cascade {
                    actions,
                    obs1,
                    mid,
                    obs2,
                },
                lens,
            )
        }
        2 => {
            let actions = rand_set(rng, "b", 3);
            let mid = rand_set(rng, "h", 3);
            let obs = rand_set(rng, "p", 3);
            let lens = make_feedback(&actions, &mid, &obs);
            (WiringSpec::Feedback { actions, mid, obs }, lens)
        }
        _ => {
            let src = Interface::simple(rand_set(rng, "p", 3), rand_set(rng, "b", 3));
            let dst = Interface::simple(rand_set(rng, "q", 3), rand_set(rng, "c", 3));
            let lens = rand_lens(rng, &src, &dst);
            (
                WiringSpec::Explicit {
                    src_obs: src.obs().clone(),
                    src_actions: src.simple_actions().expect("simple").clone(),
                    dst_obs: dst.obs().clone(),
                    dst_actions: dst.simple_actions().expect("simple").clone(),
                },
                lens,
            )
        }
    };
    Document::Wiring(WiringDoc { name, spec, lens })
}

fn rand_bool_cert_doc(rng: &mut ChaCha8Rng) -> Document {
    let obs = rand_set(rng, "p", 3);
    let actions = rand_set(rng, "b", 3);
    let gamma: Vec<Symbol> = obs.iter().filter(|_| coin(rng, 0.6)).cloned().collect();
    let mut alpha = Vec::new();
    for o in &gamma {
        for a in actions.iter() {
            if coin(rng, 0.5) {
                alpha.push((o.clone(), a.clone()));
            }
        }
    }
    let phi = if coin(rng, 0.5) {
        let states = rand_set(rng, "s", 4);
        Some(states.iter().filter(|_| coin(rng, 0.5)).cloned().collect())
    } else {
        None
    };
    Document::BoolCert(BoolCertDoc {
        name: rand_name(rng, "c"),
        obs,
        actions,
        gamma,
        alpha,
        phi,
    })
}

fn rand_quant_cert_doc(rng: &mut ChaCha8Rng) -> Document {
    let name = rand_name(rng, "q");
    let body = if coin(rng, 0.5) {
        let obs_dim = rng.gen_range(1..=3);
        let act_dim = rng.gen_range(1..=3);
        let gamma = rand_poly(rng, &[(VarKind::Obs, obs_dim)], true);
        let alpha = rand_poly(
            rng,
            &[(VarKind::Obs, obs_dim), (VarKind::Input, act_dim)],
            false,
        );
        QuantCertBody::Interface(
            QuantCertificate::new(obs_dim, act_dim, gamma, alpha).expect("gamma vanishes"),
        )
    } else {
        let state_dim = rng.gen_range(1..=3);
        let input_dim = rng.gen_range(1..=3);
        let obs_dim = rng.gen_range(1..=3);
        QuantCertBody::Lyapunov {
            phi: rand_poly(rng, &[(VarKind::State, state_dim)], true),
            alpha: rand_poly(rng, &[(VarKind::Input, input_dim)], false),
            gamma: rand_poly(rng, &[(VarKind::Obs, obs_dim)], true),
            lambda: rand_lambda(rng),
        }
    };
    Document::QuantCert(QuantCertDoc { name, body })
}

fn rand_range(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let lo = [-2.0, -1.5, -1.0][rng.gen_range(0..3)];
    let hi = [1.0, 1.5, 2.0][rng.gen_range(0..3)];
    (lo, hi)
}

fn rand_ode_doc(rng: &mut ChaCha8Rng) -> Document {
    let state_dim = rng.gen_range(1..=2);
    let input_dim = rng.gen_range(0..=2);
    let obs_dim = rng.gen_range(1..=2);
    let mut vars = vec![(VarKind::State, state_dim)];
    if input_dim > 0 {
        vars.push((VarKind::Input, input_dim));
    }
    let field: Vec<Expr> = (0..state_dim).map(|_| rand_poly(rng, &vars, true)).collect();
    let view: Vec<Expr> = (0..obs_dim)
        .map(|_| rand_poly(rng, &[(VarKind::State, state_dim)], true))
        .collect();
    let ode = OpenODE::new(
        state_dim,
        input_dim,
        obs_dim,
        field,
        view,
        vec![0.0; state_dim],
        vec![0.0; input_dim],
        (0..state_dim).map(|_| rand_range(rng)).collect(),
        (0..input_dim).map(|_| rand_range(rng)).collect(),
    )
    .expect("origin is an equilibrium of a vanishing field");
    Document::Ode(OdeDoc {
        name: rand_name(rng, "d"),
        ode,
    })
}

fn rand_simulation_doc(rng: &mut ChaCha8Rng) -> Document {
    let kind = rand_change_kind(rng);
    let target = rand_machine(rng, kind, "t", 2, 2, 2);
    let sim = cover_simulation(rng, &target);
    Document::Simulation(SimulationDoc {
        name: rand_name(rng, "s"),
        sim,
    })
}

pub fn rand_document(rng: &mut ChaCha8Rng) -> Document {
    match rng.gen_range(0..6) {
        0 => rand_machine_doc(rng),
        1 => rand_wiring_doc(rng),
        2 => rand_bool_cert_doc(rng),
        3 => rand_quant_cert_doc(rng),
        4 => rand_ode_doc(rng),
        _ => rand_simulation_doc(rng),
    }
}
