//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls the library's quadrature or closed forms: the gamma
//! CRM is simulated directly and integrals use composite Gauss–Legendre.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma};
use survmoments::gibbs::{ChainConfig, Gibbs};
use survmoments::hazard::{LatentState, SurvivalDataset};

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre over consecutive breakpoints, `panels` equal
/// sub-panels per piece.
pub fn composite<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let mut total = 0.0;
    for b in breaks.windows(2) {
        let h = (b[1] - b[0]) / panels as f64;
        for p in 0..panels {
            let lo = b[0] + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                total += 0.5 * h * wi * f(lo + 0.5 * h * (xi + 1.0));
            }
        }
    }
    total
}

fn k_total(y: f64, times: &[f64], beta: f64) -> f64 {
    times.iter().map(|&x| beta * (x - y).max(0.0)).sum()
}

/// E[S̃(t)^r | X, Y] from the defining Lévy-intensity double integral over
/// (s, y) and explicit jump integrals, all by brute-force quadrature.
pub fn brute_force_moment(t: f64, r: f64, times: &[f64], distinct: &[(f64, usize)], c: f64, beta: f64) -> f64 {
    let rate = 3.0;
    let mut ybreaks = vec![0.0];
    let mut xs: Vec<f64> = times.iter().copied().filter(|&x| x < t).collect();
    xs.sort_by(f64::total_cmp);
    ybreaks.extend(xs);
    ybreaks.push(t);
    ybreaks.dedup();

    let outer = composite(
        |y| {
            let kx = k_total(y, times, beta);
            let kt = beta * (t - y).max(0.0);
            let a = r * kt;
            let top = 50.0 / (1.0 + kx);
            // (1 − e^{−a s}) e^{−K_X s} s⁻¹ e^{−s}
            let inner = composite(
                |s| {
                    let lead = if s == 0.0 { a } else { -(-a * s).exp_m1() / s };
                    lead * (-(1.0 + kx) * s).exp()
                },
                &[0.0, top * 0.05, top * 0.25, top],
                8,
                20,
            );
            inner * c * rate * (-rate * y).exp()
        },
        &ybreaks,
        16,
        20,
    );
    let mut log_m = -outer;
    for &(y, n) in distinct {
        let kx = k_total(y, times, beta);
        let kt = beta * (t - y).max(0.0);
        let jump = |u: f64| {
            let top = (60.0 + 4.0 * n as f64) / (1.0 + u);
            composite(
                |s| s.powi(n as i32 - 1) * (-(1.0 + u) * s).exp(),
                &[0.0, top * 0.1, top * 0.4, top],
                8,
                20,
            )
        };
        log_m += jump(kx + r * kt).ln() - jump(kx).ln();
    }
    log_m.exp()
}

/// Atoms (location, jump) of a gamma CRM with intensity s⁻¹e⁻ˢ ds · c·Exp(3)(dy),
/// via total mass times stick-breaking weights.
pub fn gamma_crm<R: Rng + ?Sized>(c: f64, rng: &mut R) -> Vec<(f64, f64)> {
    let total: f64 = Gamma::new(c, 1.0).unwrap().sample(rng);
    let stick = Beta::new(1.0, c).unwrap();
    let loc = Exp::new(3.0).unwrap();
    let mut left = 1.0;
    let mut atoms = Vec::new();
    while left > 1e-12 {
        let v: f64 = stick.sample(rng);
        atoms.push((loc.sample(rng), total * left * v));
        left *= 1.0 - v;
        if atoms.len() > 100_000 {
            break;
        }
    }
    atoms
}

/// Posterior CRM given (X, Y, c, β): the gamma CRM with jumps shrunk by
/// 1/(1 + K_X(y)) plus Gamma(n_j, 1 + K_X(Y*_j)) jumps at the latent locations.
pub fn posterior_crm<R: Rng + ?Sized>(times: &[f64], distinct: &[(f64, usize)], c: f64, beta: f64, rng: &mut R) -> Vec<(f64, f64)> {
    let mut atoms: Vec<(f64, f64)> = gamma_crm(c, rng)
        .into_iter()
        .map(|(y, j)| (y, j / (1.0 + k_total(y, times, beta))))
        .collect();
    for &(y, n) in distinct {
        let rate = 1.0 + k_total(y, times, beta);
        atoms.push((y, Gamma::new(n as f64, 1.0 / rate).unwrap().sample(rng)));
    }
    atoms
}

/// ∫₀ᵗ h(s) ds = β Σ_k J_k (t − y_k)₊.
pub fn cumulative_hazard(t: f64, atoms: &[(f64, f64)], beta: f64) -> f64 {
    atoms.iter().map(|&(y, j)| beta * j * (t - y).max(0.0)).sum()
}

/// Survival times from the hazard β μ((0, t]) and their latent atoms.
pub fn simulate_given_measure<R: Rng + ?Sized>(n: usize, atoms: &[(f64, f64)], beta: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let unit = Exp::new(1.0).unwrap();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let e: f64 = unit.sample(rng);
        // invert the piecewise-linear cumulative hazard
        let (mut h, mut slope, mut prev) = (0.0, 0.0, 0.0);
        let mut x = f64::INFINITY;
        for &(y, j) in &sorted {
            let next = h + slope * (y - prev);
            if slope > 0.0 && next >= e {
                x = prev + (e - h) / slope;
                break;
            }
            h = next;
            prev = y;
            slope += beta * j;
        }
        if !x.is_finite() {
            x = prev + (e - h) / slope;
        }
        // latent atom ∝ J_k 1(y_k ≤ x)
        let mass: f64 = sorted.iter().filter(|a| a.0 <= x).map(|a| a.1).sum();
        let mut u = rng.random::<f64>() * mass;
        let mut pick = sorted[0].0;
        for &(y, j) in sorted.iter().filter(|a| a.0 <= x) {
            pick = y;
            if u < j {
                break;
            }
            u -= j;
        }
        xs.push(x);
        ys.push(pick);
    }
    (xs, ys)
}

/// One draw of (c, β, X, Y) from the joint prior.
///
/// For c below ~1e-3 the total mass can underflow to zero and survival
/// times become infinite; those draws are redrawn.
pub fn prior_joint<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (SurvivalDataset, LatentState) {
    let prior = Gamma::new(1.0, 3.0).unwrap();
    loop {
        let c: f64 = prior.sample(rng);
        let beta: f64 = prior.sample(rng);
        let atoms = gamma_crm(c, rng);
        let (xs, ys) = simulate_given_measure(n, &atoms, beta, rng);
        if xs.iter().all(|x| x.is_finite()) && ys.iter().all(|y| *y > 0.0) {
            return (
                SurvivalDataset::uncensored(xs).unwrap(),
                LatentState::new(&ys, c, beta).unwrap(),
            );
        }
    }
}

/// Redraws (X, Y) given (c, β, Y) by passing through the posterior CRM.
pub fn resample_data<R: Rng + ?Sized>(data: &SurvivalDataset, state: &LatentState, rng: &mut R) -> (SurvivalDataset, LatentState) {
    let atoms = posterior_crm(data.times(), &state.distinct(), state.c, state.beta, rng);
    let (xs, ys) = simulate_given_measure(data.len(), &atoms, state.beta, rng);
    (
        SurvivalDataset::uncensored(xs).unwrap(),
        LatentState::new(&ys, state.c, state.beta).unwrap(),
    )
}

/// Monte-Carlo E[S̃(t)^r | X, Y] by simulating the posterior CRM.
pub fn monte_carlo_moment<R: Rng + ?Sized>(
    t: f64,
    r: f64,
    times: &[f64],
    distinct: &[(f64, usize)],
    c: f64,
    beta: f64,
    reps: usize,
    rng: &mut R,
) -> (f64, f64) {
    let draws: Vec<f64> = (0..reps)
        .map(|_| {
            let atoms = posterior_crm(times, distinct, c, beta, rng);
            (-r * cumulative_hazard(t, &atoms, beta)).exp()
        })
        .collect();
    let m = draws.iter().sum::<f64>() / reps as f64;
    let v = draws.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (reps as f64 - 1.0);
    (m, (v / reps as f64).sqrt())
}

/// Weibull(shape, scale) survival.
pub fn weibull_survival(t: f64, shape: f64, scale: f64) -> f64 {
    (-(t / scale).powf(shape)).exp()
}

/// Random small configuration: n ≤ 5 observations (some censored), latents
/// below their times with occasional ties, c and β in a moderate range.
pub fn random_config(rng: &mut ChaCha8Rng) -> (SurvivalDataset, LatentState) {
    let n = rng.random_range(1..=5);
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
    let mut events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
    events[0] = true;
    let data = SurvivalDataset::new(times.clone(), events.clone()).unwrap();
    let mut ys: Vec<f64> = Vec::new();
    for (i, &x) in times.iter().enumerate() {
        if !events[i] {
            continue;
        }
        // share an earlier admissible latent a third of the time
        match ys.iter().copied().find(|&y| y <= x) {
            Some(y) if rng.random_bool(0.33) => ys.push(y),
            _ => ys.push(rng.random_range(0.01..x)),
        }
    }
    let c = rng.random_range(0.2..4.0);
    let beta = rng.random_range(0.2..3.0);
    (data, LatentState::new(&ys, c, beta).unwrap())
}

/// Marginal-conditional and successive-conditional draws of (c, β, k).
pub fn geweke(n: usize, samples: usize, thin: usize, seed: u64) -> ([Vec<f64>; 3], [Vec<f64>; 3]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut forward = [Vec::new(), Vec::new(), Vec::new()];
    for _ in 0..samples {
        let (_, s) = prior_joint(n, &mut rng);
        forward[0].push(s.c);
        forward[1].push(s.beta);
        forward[2].push(s.n_clusters() as f64);
    }

    let cfg = ChainConfig {
        mh_step: 1.0,
        ..Default::default()
    };
    let (mut data, mut state) = prior_joint(n, &mut rng);
    let mut chain_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut backward = [Vec::new(), Vec::new(), Vec::new()];
    for step in 0..samples * thin {
        let mut g = Gibbs::new(&data, state, &cfg, chain_rng).unwrap();
        g.sweep().unwrap();
        let (s, r) = g.into_parts();
        chain_rng = r;
        let (d, s) = resample_data(&data, &s, &mut rng);
        data = d;
        state = s;
        if step % thin == thin - 1 {
            backward[0].push(state.c);
            backward[1].push(state.beta);
            backward[2].push(state.n_clusters() as f64);
        }
    }
    (forward, backward)
}
