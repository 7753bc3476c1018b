//! Benchmarks for the hot paths: lens composition, boolean machine
//! certification, quantitative grid certification, RK4 simulation, and
//! radial envelope extraction.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use agl_core::certbool::{certify_machine, InterfaceCertificate, MachineCertificate, Predicate};
use agl_core::expr::{Expr, VarKind};
use agl_core::lens::{compose_lens, Interface, Lens};
use agl_core::machine::{Change, ChangeKind, Machine};
use agl_core::ode::{k_approx, simulate, OpenODE, PiecewiseConstant};
use agl_core::plfun::PLFun;
use agl_core::quant::{certify_quant_lens, QuantCertificate, QuantLens, SamplePlan};
use agl_core::verdict::CheckOpts;
use agl_core::FiniteSet;

fn random_interface(tag: &str, obs: usize, actions: usize) -> Interface {
    let obs_set = FiniteSet::from_names((0..obs).map(|i| format!("{tag}o{i}"))).unwrap();
    let fibers = (0..obs)
        .map(|i| FiniteSet::from_names((0..actions).map(|j| format!("{tag}a{i}_{j}"))).unwrap())
        .collect();
    Interface::new(obs_set, fibers).unwrap()
}

fn random_lens(rng: &mut ChaCha8Rng, src: &Interface, dst: &Interface) -> Lens {
    let fwd: Vec<usize> = (0..src.obs().len())
        .map(|_| rng.gen_range(0..dst.obs().len()))
        .collect();
    let bwd: Vec<Vec<usize>> = (0..src.obs().len())
        .map(|i| {
            (0..dst.fiber_at(fwd[i]).len())
                .map(|_| rng.gen_range(0..src.fiber_at(i).len()))
                .collect()
        })
        .collect();
    Lens::from_maps(
        src.clone(),
        dst.clone(),
        |o| {
            let i = src.obs().position(o).unwrap();
            dst.obs().get(fwd[i]).clone()
        },
        |o, a| {
            let i = src.obs().position(o).unwrap();
            let j = dst.fiber_at(fwd[i]).position(a).unwrap();
            src.fiber_at(i).get(bwd[i][j]).clone()
        },
    )
    .unwrap()
}

fn bench_compose_lens(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let i1 = random_interface("w", 4, 4);
    let i2 = random_interface("x", 4, 4);
    let i3 = random_interface("y", 4, 4);
    let l1 = random_lens(&mut rng, &i1, &i2);
    let l2 = random_lens(&mut rng, &i2, &i3);
    c.bench_function("compose_lens/obs4_act4", |b| {
        b.iter(|| compose_lens(black_box(&l2), black_box(&l1)).unwrap())
    });
}

fn shift_machine(states: usize, obs: usize) -> Machine {
    let state_set = FiniteSet::from_names((0..states).map(|i| format!("s{i}"))).unwrap();
    let obs_set = FiniteSet::from_names((0..obs).map(|i| format!("o{i}"))).unwrap();
    let actions = FiniteSet::from_names(["go", "stay"]).unwrap();
    let iface = Interface::simple(obs_set.clone(), actions);
    let ss = state_set.clone();
    let os = obs_set;
    Machine::from_maps(
        state_set.clone(),
        iface,
        ChangeKind::Deterministic,
        move |s| {
            let i = ss.position(s).unwrap();
            os.get(i % obs).clone()
        },
        move |s, a| {
            let i = state_set.position(s).unwrap();
            let next = (2 * i + usize::from(a.to_string() == "go")) % states;
            Change::Next(state_set.get(next).clone())
        },
    )
    .unwrap()
}

fn bench_certify_machine(c: &mut Criterion) {
    let m = shift_machine(64, 4);
    let gamma = Predicate::constant(m.iface().obs().clone(), true);
    let icert = InterfaceCertificate::from_fns(m.iface().clone(), gamma, |_, _| true).unwrap();
    let phi = Predicate::constant(m.states().clone(), true);
    let cert = MachineCertificate::new(m.clone(), phi, icert).unwrap();
    c.bench_function("certify_machine/states64", |b| {
        b.iter(|| certify_machine(black_box(&m), black_box(&cert)).unwrap())
    });
}

fn quad(kind: VarKind, dim: usize, scale: f64) -> Expr {
    let mut sum: Option<Expr> = None;
    for j in 1..=dim {
        let sq = Expr::Pow(Box::new(Expr::Var(kind, j)), 2);
        sum = Some(match sum {
            None => sq,
            Some(e) => Expr::Add(Box::new(e), Box::new(sq)),
        });
    }
    Expr::Mul(Box::new(Expr::Const(scale)), Box::new(sum.unwrap()))
}

fn bench_certify_quant_lens(c: &mut Criterion) {
    let n = 2;
    let halve: Vec<Expr> = (1..=n)
        .map(|j| {
            Expr::Mul(
                Box::new(Expr::Const(0.5)),
                Box::new(Expr::Var(VarKind::Obs, j)),
            )
        })
        .collect();
    let damp: Vec<Expr> = (1..=n)
        .map(|j| {
            Expr::Mul(
                Box::new(Expr::Const(0.5)),
                Box::new(Expr::Var(VarKind::Input, j)),
            )
        })
        .collect();
    let lens = QuantLens::new(n, n, n, n, halve, damp).unwrap();
    let alpha = |e: f64, f: f64| {
        Expr::Add(
            Box::new(quad(VarKind::Input, n, e)),
            Box::new(quad(VarKind::Obs, n, f)),
        )
    };
    let src = QuantCertificate::new(n, n, quad(VarKind::Obs, n, 1.0), alpha(1.0, 0.5)).unwrap();
    let dst = QuantCertificate::new(n, n, quad(VarKind::Obs, n, 1.0), alpha(1.0, 0.5)).unwrap();
    let kappa = PLFun::linear(0.5).unwrap();
    let plan = SamplePlan::new(vec![(-1.0, 1.0); 2 * n], 0.25).unwrap();
    let opts = CheckOpts::default();
    c.bench_function("certify_quant_lens/grid6561", |b| {
        b.iter(|| {
            certify_quant_lens(
                black_box(&lens),
                black_box(&src),
                black_box(&dst),
                &kappa,
                &plan,
                &opts,
            )
            .unwrap()
        })
    });
}

fn leaky_ode() -> OpenODE {
    OpenODE::new(
        1,
        1,
        1,
        vec![Expr::Add(
            Box::new(Expr::Neg(Box::new(Expr::Var(VarKind::State, 1)))),
            Box::new(Expr::Var(VarKind::Input, 1)),
        )],
        vec![Expr::Var(VarKind::State, 1)],
        vec![0.0],
        vec![0.0],
        vec![(-3.0, 3.0)],
        vec![(-1.0, 1.0)],
    )
    .unwrap()
}

fn bench_simulate(c: &mut Criterion) {
    let ode = leaky_ode();
    let signal = PiecewiseConstant::constant(vec![0.3]);
    c.bench_function("simulate_rk4/steps10k", |b| {
        b.iter(|| simulate(black_box(&ode), &[0.5], &signal, 10.0, 1e-3).unwrap())
    });
}

fn bench_k_approx(c: &mut Criterion) {
    let phi = Expr::Mul(
        Box::new(Expr::Pow(Box::new(Expr::Var(VarKind::State, 1)), 2)),
        Box::new(Expr::Add(
            Box::new(Expr::Const(2.0)),
            Box::new(Expr::Cos(Box::new(Expr::Mul(
                Box::new(Expr::Const(10.0)),
                Box::new(Expr::Var(VarKind::State, 1)),
            )))),
        )),
    );
    let opts = CheckOpts::default();
    c.bench_function("k_approx/samples4001", |b| {
        b.iter(|| k_approx(black_box(&phi), &[(-2.0, 2.0)], &[0.0], 1e-3, &opts).unwrap())
    });
}

criterion_group!(
    benches,
    bench_compose_lens,
    bench_certify_machine,
    bench_certify_quant_lens,
    bench_simulate,
    bench_k_approx
);
criterion_main!(benches);
