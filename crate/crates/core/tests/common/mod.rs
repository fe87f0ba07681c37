//! Generators shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use h2cert::dpm::{BarSpec, DpmManifest, DpmModel, MassModel, NodeAverage, NodeSourceDecl};
use h2cert::linalg::SparseMatrix;
use h2cert::lpm::{parse_lpm, LpmNetwork};
use h2cert::{InputSignal, SecondOrderSystem, StateSpaceSystem};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn oscillator(m: f64, r: f64, k: f64) -> SecondOrderSystem<f64> {
    SecondOrderSystem::new(
        SparseMatrix::from_diagonal(&[m]),
        SparseMatrix::from_diagonal(&[k]),
        SparseMatrix::from_diagonal(&[r]),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
    )
    .unwrap()
}

/// `A = −(XXᵀ + δI) − s(Y − Yᵀ)`: negative definite symmetric part, so stable.
pub fn random_stable(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> StateSpaceSystem<f64> {
    let mut u = || rng.random_range(-1.0f64..1.0);
    let x = DMatrix::from_fn(n, n, |_, _| u());
    let y = DMatrix::from_fn(n, n, |_, _| u());
    let skew = 0.5 + 4.0 * u().abs();
    let a = -(&x * x.transpose() / n as f64 + DMatrix::identity(n, n) * 0.05) - (&y - y.transpose()) * skew;
    let b = DMatrix::from_fn(n, m, |_, _| u());
    let c = DMatrix::from_fn(p, n, |_, _| u());
    StateSpaceSystem::from_dense(a, b, c).unwrap()
}

/// Chain of `n` masses grounded at the first node, with random extra
/// grounded springs and dampers and random long-range dampers.
pub fn random_mechanical(rng: &mut ChaCha8Rng, n: usize, rayleigh: bool) -> SecondOrderSystem<f64> {
    let masses: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut k = Vec::new();
    let mut r = Vec::new();
    let link = |t: &mut Vec<(usize, usize, f64)>, i: usize, j: Option<usize>, c: f64| {
        t.push((i, i, c));
        if let Some(j) = j {
            t.push((j, j, c));
            t.push((i, j, -c));
            t.push((j, i, -c));
        }
    };
    link(&mut k, 0, None, rng.random_range(0.5..5.0));
    for i in 1..n {
        link(&mut k, i, Some(i - 1), rng.random_range(0.5..5.0));
    }
    for i in 0..n {
        if rng.random_bool(0.2) {
            link(&mut k, i, None, rng.random_range(0.1..2.0));
        }
    }
    let mass = SparseMatrix::from_diagonal(&masses);
    let stiff = SparseMatrix::from_triplets(n, n, &k).unwrap();
    let damp = if rayleigh {
        let (alpha, beta) = (rng.random_range(0.01..0.3), rng.random_range(0.001..0.05));
        mass.lin_comb(alpha, &stiff, beta).unwrap()
    } else {
        link(&mut r, 0, None, rng.random_range(0.05..0.5));
        for _ in 0..n.max(2) {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let c = rng.random_range(0.01..0.3);
            link(&mut r, i, (i != j).then_some(j), c);
        }
        SparseMatrix::from_triplets(n, n, &r).unwrap()
    };
    let f = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0));
    SecondOrderSystem::new(mass, stiff, damp, f, c).unwrap()
}

/// Finite-energy signal of one of the four kinds, timed against `period`.
pub fn random_signal(rng: &mut ChaCha8Rng, period: f64, kind: usize) -> InputSignal {
    let amplitude = rng.random_range(0.5..2.0);
    match kind % 4 {
        0 => InputSignal::RampHold {
            amplitude,
            rise: period * rng.random_range(0.1..1.0),
            end: period * rng.random_range(1.5..4.0),
        },
        1 => InputSignal::SineBurst {
            amplitude,
            frequency: rng.random_range(0.5..1.5) / period,
            duration: period * rng.random_range(1.0..4.0),
        },
        2 => InputSignal::Step {
            amplitude,
            horizon: Some(period * rng.random_range(0.5..3.0)),
        },
        _ => {
            let t1 = period * rng.random_range(0.2..1.0);
            InputSignal::Sampled {
                times: vec![0.0, t1, 2.0 * t1, 3.0 * t1],
                values: vec![0.0, amplitude, -0.5 * amplitude, 0.0],
            }
        }
    }
}

/// A clamped bar DPM with `elements` elements and a lumped LPM matched to
/// it in mass, load and observed point (C1 and C2 hold by construction).
/// The LPM stiffness is perturbed, so the pair may or may not pass C3.
pub struct MatchedPair {
    pub lpm: LpmNetwork,
    pub dpm: DpmModel<f64>,
    pub bar: BarSpec,
}

pub fn matched_pair(rng: &mut ChaCha8Rng, elements: usize, index: usize) -> MatchedPair {
    let omega1: f64 = rng.random_range(2.0..20.0);
    let density = rng.random_range(500.0..5000.0);
    // first clamped-free mode (π/2)·sqrt(E/ρ)/L with L = 1
    let youngs = density * (omega1 / std::f64::consts::FRAC_PI_2).powi(2);
    let (alpha, beta) = (rng.random_range(0.05..0.5), rng.random_range(1e-4..2e-3));
    let bar = BarSpec {
        length: 1.0,
        area: 1.0,
        youngs_modulus: youngs,
        density,
        elements,
        rayleigh: (alpha, beta),
        mass_model: MassModel::Consistent,
    };
    let period = 2.0 * std::f64::consts::PI / omega1;
    let signal = random_signal(rng, period, index);
    let load = rng.random_range(10.0..1000.0);
    let tip = elements - 1;
    let manifest = DpmManifest {
        format: 1,
        matrices: None,
        bar: Some(bar.clone()),
        inputs: vec![],
        sources: vec![NodeSourceDecl {
            nodes: vec![tip],
            weights: Some(vec![load]),
            signal: signal.clone(),
        }],
        boi: vec![NodeAverage {
            label: Some("tip".into()),
            nodes: vec![tip],
            weights: None,
        }],
        initial: Default::default(),
        projection: Default::default(),
    };
    let dpm = manifest.build::<f64>(Path::new(".")).unwrap();

    let total = bar.clamped_mass();
    let ea = youngs * bar.area / bar.length;
    let perturb = rng.random_range(0.8..1.25);
    let signal_json = serde_json::to_string(&signal).unwrap();
    let text = if index % 2 == 0 {
        // two halves joined by springs of 2EA/L
        let (m1, m2) = (0.5 * total, 0.5 * total);
        let k = 2.0 * ea * perturb;
        format!(
            r#"{{"format": 1,
            "masses": [{{"id": "m1", "value": {m1}}}, {{"id": "m2", "value": {m2}}}],
            "springs": [{{"id": "k1", "between": ["ground", "m1"], "k": {k}}},
                        {{"id": "k2", "between": ["m1", "m2"], "k": {k}}}],
            "dampers": [{{"id": "r1", "between": ["ground", "m1"], "r": {r1}}},
                        {{"id": "r2", "between": ["m1", "m2"], "r": {r2}}},
                        {{"id": "r3", "between": ["ground", "m2"], "r": {r3}}}],
            "signals": {{"h": {signal_json}}},
            "sources": [{{"mass": "m2", "signal": "h", "scale": {load}}}],
            "boi": [{{"label": "tip", "masses": ["m2"]}}]}}"#,
            r1 = beta * k + alpha * m1,
            r2 = beta * k,
            r3 = alpha * m2,
        )
    } else {
        // single mass tuned to the first mode
        let k = total * omega1 * omega1 * perturb;
        format!(
            r#"{{"format": 1,
            "masses": [{{"id": "m", "value": {total}}}],
            "springs": [{{"id": "k", "between": ["ground", "m"], "k": {k}}}],
            "dampers": [{{"id": "r", "between": ["ground", "m"], "r": {r}}}],
            "signals": {{"h": {signal_json}}},
            "sources": [{{"mass": "m", "signal": "h", "scale": {load}}}],
            "boi": [{{"label": "tip", "masses": ["m"]}}]}}"#,
            r = alpha * total + beta * k,
        )
    };
    MatchedPair {
        lpm: parse_lpm(&text).unwrap(),
        dpm,
        bar,
    }
}
