#![allow(dead_code)]

//! Dense reference QP for the tracking problem, built independently of the
//! solver: outputs are condensed into an explicit affine map of the stacked
//! inputs and the resulting box/rate constrained QP is solved by FISTA with
//! a Dykstra projection.

use iampc_core::linearization::LinearSsModel;
use iampc_core::mpc::{MpcConfig, MpcProblem, PredictionModel};
use iampc_core::ss2arx::{ArxHistory, ArxModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct OracleSolution {
    pub u_seq: Vec<DVector<f64>>,
    pub objective: f64,
    pub iterations: usize,
}

fn predict(problem: &MpcProblem, u: &[DVector<f64>]) -> Vec<DVector<f64>> {
    match &problem.model {
        PredictionModel::Arx { model, history } => {
            let p = model.order();
            let mut ys: Vec<DVector<f64>> =
                (0..p).rev().map(|i| history.output(i).clone()).collect();
            let mut us: Vec<DVector<f64>> =
                (0..p).rev().map(|i| history.input(i).clone()).collect();
            let mut out = Vec::new();
            for uk in u {
                us.push(uk.clone());
                let mut y = model.zeta.clone();
                for i in 1..=p {
                    y += &model.psi[i - 1] * &ys[ys.len() - i];
                    y += &model.omega[i - 1] * &us[us.len() - i];
                }
                ys.push(y.clone());
                out.push(y);
            }
            out
        }
        PredictionModel::Ss { model, x0 } => {
            let mut x = x0.clone();
            u.iter()
                .map(|uk| {
                    x = &model.a * &x + &model.b * uk + &model.e;
                    &model.c * &x + &model.h
                })
                .collect()
        }
    }
}

fn split(v: &DVector<f64>, t: usize, n_u: usize) -> Vec<DVector<f64>> {
    (0..t).map(|k| v.rows(k * n_u, n_u).into_owned()).collect()
}

/// Projection onto `{lo ≤ u_k ≤ hi, dlo ≤ u_k − u_{k−1} ≤ dhi}` by Dykstra's
/// algorithm over three simple sets.
fn project(v: &DVector<f64>, problem: &MpcProblem) -> DVector<f64> {
    let cfg = &problem.config;
    let (t, n_u) = (cfg.horizon, cfg.n_u());
    let box_proj = |w: &DVector<f64>| {
        let mut out = w.clone();
        for k in 0..t {
            for m in 0..n_u {
                let mut lo = cfg.u_min[m];
                let mut hi = cfg.u_max[m];
                if k == 0 {
                    lo = lo.max(problem.u_prev[m] + cfg.du_min[m]);
                    hi = hi.min(problem.u_prev[m] + cfg.du_max[m]);
                }
                out[k * n_u + m] = w[k * n_u + m].clamp(lo, hi);
            }
        }
        out
    };
    let pair_proj = |w: &DVector<f64>, first: usize| {
        let mut out = w.clone();
        let mut k = first;
        while k < t {
            for m in 0..n_u {
                let (a, b) = (w[(k - 1) * n_u + m], w[k * n_u + m]);
                let d = (b - a).clamp(cfg.du_min[m], cfg.du_max[m]);
                let mid = 0.5 * (a + b);
                out[(k - 1) * n_u + m] = mid - 0.5 * d;
                out[k * n_u + m] = mid + 0.5 * d;
            }
            k += 2;
        }
        out
    };
    let violation = |w: &DVector<f64>| {
        let mut worst = (w - box_proj(w)).amax();
        for k in 1..t {
            for m in 0..n_u {
                let d = w[k * n_u + m] - w[(k - 1) * n_u + m];
                worst = worst.max(cfg.du_min[m] - d).max(d - cfg.du_max[m]);
            }
        }
        worst
    };
    let mut x = v.clone();
    let mut incs = vec![DVector::zeros(v.len()); 3];
    for _ in 0..100_000 {
        let before = x.clone();
        let mut inc_change = 0.0f64;
        for (s, inc) in incs.iter_mut().enumerate() {
            let shifted = &x + &*inc;
            let next = match s {
                0 => box_proj(&shifted),
                1 => pair_proj(&shifted, 1),
                _ => pair_proj(&shifted, 2),
            };
            let new_inc = &shifted - &next;
            inc_change = inc_change.max((&new_inc - &*inc).amax());
            *inc = new_inc;
            x = next;
        }
        if (&x - &before).amax() < 1e-15 && inc_change < 1e-15 && violation(&x) <= 1e-13 {
            break;
        }
    }
    x
}

pub fn objective(problem: &MpcProblem, u: &[DVector<f64>]) -> f64 {
    let cfg = &problem.config;
    let ys = predict(problem, u);
    let mut f = 0.0;
    let mut last = problem.u_prev.clone();
    for k in 0..cfg.horizon {
        let e = &ys[k] - &problem.reference[k];
        f += 0.5 * e.dot(&(&cfg.w_y * &e));
        let du = &u[k] - &last;
        f += 0.5 * du.dot(&(&cfg.w_du * &du));
        last = u[k].clone();
    }
    f
}

/// Output box constraints are not supported by the reference solver.
pub fn dense_qp_oracle(problem: &MpcProblem) -> OracleSolution {
    let cfg = &problem.config;
    let (t, n_u, n_y) = (cfg.horizon, cfg.n_u(), cfg.n_y());
    let n = t * n_u;
    let zero = vec![DVector::zeros(n_u); t];
    let y_free: Vec<_> = predict(problem, &zero);
    let mut g = DMatrix::zeros(t * n_y, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        let ys = predict(problem, &split(&e, t, n_u));
        for k in 0..t {
            for l in 0..n_y {
                g[(k * n_y + l, j)] = ys[k][l] - y_free[k][l];
            }
        }
    }
    let mut wy = DMatrix::zeros(t * n_y, t * n_y);
    let mut r_minus_free = DVector::zeros(t * n_y);
    for k in 0..t {
        wy.view_mut((k * n_y, k * n_y), (n_y, n_y))
            .copy_from(&cfg.w_y);
        for l in 0..n_y {
            r_minus_free[k * n_y + l] = problem.reference[k][l] - y_free[k][l];
        }
    }
    // Δu = D u − d0
    let mut d = DMatrix::zeros(n, n);
    let mut wd = DMatrix::zeros(n, n);
    let mut d0 = DVector::zeros(n);
    for k in 0..t {
        for m in 0..n_u {
            d[(k * n_u + m, k * n_u + m)] = 1.0;
            if k > 0 {
                d[(k * n_u + m, (k - 1) * n_u + m)] = -1.0;
            } else {
                d0[m] = problem.u_prev[m];
            }
        }
        wd.view_mut((k * n_u, k * n_u), (n_u, n_u))
            .copy_from(&cfg.w_du);
    }
    let h = g.transpose() * &wy * &g + d.transpose() * &wd * &d;
    let q = -(g.transpose() * &wy * &r_minus_free) - d.transpose() * &wd * &d0;
    let lip = h.clone().symmetric_eigen().eigenvalues.amax().max(1e-12);

    let mut u = project(
        &DVector::from_fn(n, |i, _| problem.u_prev[i % n_u]),
        problem,
    );
    let mut v = u.clone();
    let mut tk = 1.0f64;
    let mut iterations = 0;
    for it in 0..200_000 {
        iterations = it + 1;
        let grad = &h * &v + &q;
        let next = project(&(&v - grad / lip), problem);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let step = &next - &u;
        // Gradient-mapping restart keeps the iteration monotone in practice.
        if (&v - &next).dot(&step) > 0.0 {
            tk = 1.0;
            v = next.clone();
        } else {
            v = &next + &step * ((tk - 1.0) / t_next);
            tk = t_next;
        }
        let change = step.amax();
        u = next;
        if change < 1e-12 && it > 10 {
            break;
        }
    }
    let u_seq = split(&u, t, n_u);
    let objective = objective(problem, &u_seq);
    OracleSolution {
        u_seq,
        objective,
        iterations,
    }
}

pub fn random_config(rng: &mut ChaCha8Rng, t: usize, n_u: usize) -> MpcConfig {
    let mut cfg = MpcConfig::new(
        t,
        n_u,
        1,
        rng.gen_range(0.5..10.0),
        rng.gen_range(0.05..1.0),
    );
    for m in 0..n_u {
        cfg.u_min[m] = -rng.gen_range(0.3..1.5);
        cfg.u_max[m] = rng.gen_range(0.3..1.5);
        cfg.du_min[m] = -rng.gen_range(0.05..0.6);
        cfg.du_max[m] = rng.gen_range(0.05..0.6);
    }
    cfg
}

pub fn random_arx(rng: &mut ChaCha8Rng) -> MpcProblem {
    let t = rng.gen_range(1..=5);
    let n_u = rng.gen_range(1..=2);
    let p = rng.gen_range(1..=3);
    let psi: Vec<_> = (0..p)
        .map(|_| DMatrix::from_fn(1, 1, |_, _| rng.gen_range(-0.5..0.5)))
        .collect();
    let omega: Vec<_> = (0..p)
        .map(|_| DMatrix::from_fn(1, n_u, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let arx = ArxModel::new(
        psi,
        omega,
        DVector::from_fn(1, |_, _| rng.gen_range(-0.3..0.3)),
    )
    .unwrap();
    let outs = (0..p)
        .map(|_| DVector::from_fn(1, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let ins = (0..p)
        .map(|_| DVector::from_fn(n_u, |_, _| rng.gen_range(-0.3..0.3)))
        .collect();
    let hist = ArxHistory::from_windows(outs, ins).unwrap();
    let cfg = random_config(rng, t, n_u);
    let reference = (0..t)
        .map(|_| DVector::from_fn(1, |_, _| rng.gen_range(-2.0..2.0)))
        .collect();
    MpcProblem::arx(cfg, arx, hist, reference).unwrap()
}

pub fn random_ss(rng: &mut ChaCha8Rng) -> MpcProblem {
    let t = rng.gen_range(1..=5);
    let n_u = rng.gen_range(1..=2);
    let n_x = rng.gen_range(1..=3);
    let a = DMatrix::from_fn(n_x, n_x, |_, _| rng.gen_range(-0.5..0.5));
    let b = DMatrix::from_fn(n_x, n_u, |_, _| rng.gen_range(-1.0..1.0));
    let c = DMatrix::from_fn(1, n_x, |_, _| rng.gen_range(-1.0..1.0));
    let e = DVector::from_fn(n_x, |_, _| rng.gen_range(-0.2..0.2));
    let h = DVector::from_fn(1, |_, _| rng.gen_range(-0.2..0.2));
    let model = LinearSsModel::new(a, b, e, c, h, 1.0).unwrap();
    let x0 = DVector::from_fn(n_x, |_, _| rng.gen_range(-1.0..1.0));
    let u_prev = DVector::from_fn(n_u, |_, _| rng.gen_range(-0.3..0.3));
    let cfg = random_config(rng, t, n_u);
    let reference = (0..t)
        .map(|_| DVector::from_fn(1, |_, _| rng.gen_range(-2.0..2.0)))
        .collect();
    MpcProblem::ss(cfg, model, x0, u_prev, reference).unwrap()
}
