//! Finite-difference verification of every analytic gradient.
//!
//! Each case compares the analytic gradient vector `a` with central
//! differences `n` (step [`FD_STEP`]) using
//! `max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|, 1e-6)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::nn::{Activation, Mlp, ProjectionHead};
use super::*;

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const CASES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub name: &'static str,
    pub cases: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    diff / inf(analytic).max(inf(numeric)).max(1e-6)
}

/// Central differences of `f` at `x` for the coordinates in `coords`.
pub fn numeric_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], coords: &[usize]) -> Vec<f64> {
    let mut p = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            p[i] = x[i] + FD_STEP;
            let up = f(&p);
            p[i] = x[i] - FD_STEP;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn report(name: &'static str, errors: &[f64]) -> GradCheckReport {
    let max_rel_error = errors.iter().copied().fold(0.0, f64::max);
    GradCheckReport {
        name,
        cases: errors.len(),
        max_rel_error,
        tolerance: TOLERANCE,
        passed: errors.iter().all(|e| *e <= TOLERANCE),
    }
}

fn normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn near_kink(r: f64) -> bool {
    (r.abs() - 1.0).abs() < 1e-6
}

pub fn check_smooth_l1<R: Rng + ?Sized>(rng: &mut R) -> GradCheckReport {
    let mut errors = Vec::with_capacity(CASES);
    while errors.len() < CASES {
        let x = rng.random_range(-3.0..3.0);
        if near_kink(x) {
            continue;
        }
        let n = numeric_gradient(&mut |p| smooth_l1(p[0]), &[x], &[0]);
        errors.push(relative_error(&[smooth_l1_grad(x)], &n));
    }
    report("smooth_l1", &errors)
}

pub fn check_proposal<R: Rng + ?Sized>(rng: &mut R) -> GradCheckReport {
    let w = BoxWeights::default();
    let mut errors = Vec::with_capacity(CASES);
    while errors.len() < CASES {
        let s = rng.random_range(0.05..0.95);
        let pred: [f64; 5] = std::array::from_fn(|_| rng.random_range(-2.5..2.5));
        let gt: [f64; 5] = std::array::from_fn(|_| rng.random_range(-2.5..2.5));
        if (0..5).any(|i| near_kink(gt[i] - pred[i])) {
            continue;
        }
        let gt_d = BoxDelta::from_array(gt);
        let x: Vec<f64> = std::iter::once(s).chain(pred).collect();
        let mut f = |p: &[f64]| {
            let pd = BoxDelta::from_array(std::array::from_fn(|i| p[i + 1]));
            proposal_loss(p[0], &pd, &gt_d, &w).expect("score in range")
        };
        let n = numeric_gradient(&mut f, &x, &(0..6).collect::<Vec<_>>());
        let g = proposal_loss_grad(s, &BoxDelta::from_array(pred), &gt_d, &w).unwrap();
        let a: Vec<f64> = std::iter::once(g.d_s_pos).chain(g.d_pred.to_array()).collect();
        errors.push(relative_error(&a, &n));
    }
    report("proposal_loss", &errors)
}

pub fn check_refinement<R: Rng + ?Sized>(rng: &mut R) -> GradCheckReport {
    let mut errors = Vec::with_capacity(CASES);
    while errors.len() < CASES {
        let (gh, g): (f64, f64) = (rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
        let (zh, z): (f64, f64) = (rng.random_range(0.3..1.2), rng.random_range(0.3..1.2));
        let (lg, lz) = (rng.random_range(0.1..5.0), rng.random_range(0.1..5.0));
        if (gh - g).abs() < 1e-3 || (zh - z).abs() < 1e-3 {
            continue;
        }
        let mut f = |p: &[f64]| refinement_loss(p[0], g, p[1], z, lg, lz);
        let n = numeric_gradient(&mut f, &[gh, zh], &[0, 1]);
        errors.push(relative_error(&refinement_loss_grad(gh, g, zh, z, lg, lz), &n));
    }
    report("refinement_loss", &errors)
}

pub fn check_info_nce<R: Rng + ?Sized>(rng: &mut R) -> GradCheckReport {
    const DIM: usize = 16;
    const KEYS: usize = 8;
    let mut errors = Vec::with_capacity(CASES);
    for _ in 0..CASES {
        let tau = rng.random_range(0.05..1.0);
        let unit = |rng: &mut R| {
            let v = normal_vec(DIM, rng);
            let n = dot(&v, &v).sqrt();
            v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
        };
        let q = unit(rng);
        let keys: Vec<Vec<f64>> = (0..KEYS).map(|_| unit(rng)).collect();
        // Flatten q and every key into one parameter vector.
        let x: Vec<f64> = q.iter().chain(keys.iter().flatten()).copied().collect();
        let mut f = |p: &[f64]| {
            let ks: Vec<&[f64]> = p[DIM..].chunks_exact(DIM).collect();
            info_nce_keys(&p[..DIM], &ks, tau).unwrap()
        };
        let n = numeric_gradient(&mut f, &x, &(0..x.len()).collect::<Vec<_>>());
        let refs: Vec<&[f64]> = keys.iter().map(|k| k.as_slice()).collect();
        let g = info_nce_grad(&q, &refs, tau).unwrap();
        let a: Vec<f64> = g.d_q.iter().chain(g.d_keys.iter().flatten()).copied().collect();
        errors.push(relative_error(&a, &n));
    }
    report("info_nce", &errors)
}

pub fn check_overall<R: Rng + ?Sized>(rng: &mut R) -> GradCheckReport {
    let schedule = StageSchedule::default();
    let mut errors = Vec::with_capacity(CASES);
    for _ in 0..CASES {
        let w = schedule.weights_for(rng.random_range(0..40));
        let x = [rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)];
        let n = numeric_gradient(&mut |p| overall_loss(p[0], p[1], p[2], &w), &x, &[0, 1, 2]);
        errors.push(relative_error(&[w.proposal, w.refinement, w.contrastive], &n));
    }
    report("overall_loss", &errors)
}

/// Backpropagation through encoder, head and normalization into an
/// in-batch InfoNCE loss, on a small network.
pub fn check_backprop<R: Rng + ?Sized>(rng: &mut R) -> GradCheckReport {
    const BATCH: usize = 4;
    const INPUT: usize = 12;
    const COORDS: usize = 12;
    let mut errors = Vec::with_capacity(CASES);
    for _ in 0..CASES {
        let enc = Mlp::random(&[INPUT, 10, 8], &[Activation::Tanh, Activation::Tanh], rng).unwrap();
        let head = ProjectionHead::new(8, 6, 0.5, rng).unwrap();
        let inputs: Vec<Vec<f64>> = (0..BATCH).map(|_| normal_vec(INPUT, rng)).collect();
        let keys: Vec<Vec<f64>> = (0..BATCH)
            .map(|_| {
                let v = normal_vec(6, rng);
                let n = dot(&v, &v).sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let tau = 0.2;
        let n_enc = enc.num_params();
        let loss = |enc_p: &[f64], head_p: &[f64]| {
            let e = Mlp {
                params: enc_p.to_vec(),
                ..enc.clone()
            };
            let h = ProjectionHead {
                mlp: Mlp {
                    params: head_p.to_vec(),
                    ..head.mlp.clone()
                },
            };
            (0..BATCH)
                .map(|i| {
                    let q = h.project(e.forward(&inputs[i]).output());
                    let mut ks: Vec<&[f64]> = vec![&keys[i]];
                    ks.extend((0..BATCH).filter(|j| *j != i).map(|j| keys[j].as_slice()));
                    info_nce_keys(&q, &ks, tau).unwrap()
                })
                .sum::<f64>()
                / BATCH as f64
        };
        let mut g_enc = vec![0.0; n_enc];
        let mut g_head = vec![0.0; head.mlp.num_params()];
        for i in 0..BATCH {
            let ec = enc.forward(&inputs[i]);
            let hc = head.forward(ec.output());
            let mut ks: Vec<&[f64]> = vec![&keys[i]];
            ks.extend((0..BATCH).filter(|j| *j != i).map(|j| keys[j].as_slice()));
            let g = info_nce_grad(&hc.output, &ks, tau).unwrap();
            let d_q: Vec<f64> = g.d_q.iter().map(|d| d / BATCH as f64).collect();
            let d_feat = head.backward(&hc, &d_q, &mut g_head);
            enc.backward(&ec, &d_feat, &mut g_enc);
        }
        let all: Vec<f64> = enc.params.iter().chain(&head.mlp.params).copied().collect();
        let analytic_all: Vec<f64> = g_enc.iter().chain(&g_head).copied().collect();
        let coords: Vec<usize> = (0..COORDS).map(|_| rng.random_range(0..all.len())).collect();
        let mut f = |p: &[f64]| loss(&p[..n_enc], &p[n_enc..]);
        let n = numeric_gradient(&mut f, &all, &coords);
        let a: Vec<f64> = coords.iter().map(|&c| analytic_all[c]).collect();
        errors.push(relative_error(&a, &n));
    }
    report("encoder_backprop", &errors)
}

/// Runs every suite with its own seeded stream.
pub fn run_all(seed: u64) -> Vec<GradCheckReport> {
    let checks: [fn(&mut ChaCha8Rng) -> GradCheckReport; 6] = [
        check_smooth_l1,
        check_proposal,
        check_refinement,
        check_info_nce,
        check_overall,
        check_backprop,
    ];
    checks
        .iter()
        .enumerate()
        .map(|(i, check)| check(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64))))
        .collect()
}
