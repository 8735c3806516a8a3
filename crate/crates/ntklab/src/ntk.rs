//! Empirical NTK matrices in the truncated eigenbasis, concentration
//! against the analytic kernel, perturbation-supremum estimation,
//! partition-overlap checks, and Bernstein tail evaluators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{NtkLabError, Result};
use crate::network::ShallowNet;
use crate::spectral::{eigen_frequency, eigen_phase, ntk_eigenvalue, weighted_operator_norm, KernelMatrix};

/// Eigenbasis coefficient of the r-th partial derivative,
/// `c_rk = (a_r / (w_k sqrt(m))) cos(w_k theta_r - p_k)`.
fn derivative_coeff(sign: f64, theta: f64, m: usize, k: usize) -> f64 {
    let w = eigen_frequency(k);
    sign / (w * (m as f64).sqrt()) * (w * theta - eigen_phase(k)).cos()
}

/// The empirical kernel `M_kl = sum_r c_rk c_rl` as a K x K matrix.
pub fn empirical_ntk(net: &ShallowNet, truncation: usize) -> Result<KernelMatrix> {
    if truncation == 0 {
        return Err(NtkLabError::Config("truncation K must be >= 1".into()));
    }
    let m = net.width();
    let mut out = KernelMatrix::zeros(truncation);
    let mut row = vec![0.0; truncation];
    for r in 0..m {
        for (k, c) in row.iter_mut().enumerate() {
            *c = derivative_coeff(net.signs[r], net.biases[r], m, k);
        }
        for k in 0..truncation {
            let ck = row[k];
            for l in k..truncation {
                let v = out.get(k, l) + ck * row[l];
                out.set(k, l, v);
                if l != k {
                    out.set(l, k, v);
                }
            }
        }
    }
    Ok(out)
}

/// The analytic kernel: diagonal with entries `1/(2 w_k^2)`.
pub fn analytic_ntk(truncation: usize) -> Result<KernelMatrix> {
    if truncation == 0 {
        return Err(NtkLabError::Config("truncation K must be >= 1".into()));
    }
    let diag: Vec<f64> = (0..truncation).map(ntk_eigenvalue).collect();
    Ok(KernelMatrix::from_diagonal(&diag))
}

/// The concentration constant `mu(s) = 2 (sum_k w_k^{2s-2})^{1/2}`,
/// summed over 1e5 modes with an integral tail correction.
pub fn mu_constant(s: f64) -> Result<f64> {
    if s >= 0.5 {
        return Err(NtkLabError::Domain(format!(
            "mu(s) diverges for s >= 1/2, got s = {s}"
        )));
    }
    const TERMS: usize = 100_000;
    let mut acc = 0.0;
    for k in 0..TERMS {
        acc += eigen_frequency(k).powf(2.0 * s - 2.0);
    }
    // tail: (2/pi) int_{w_K - pi/4}^inf w^{2s-2} dw
    let edge = eigen_frequency(TERMS) - std::f64::consts::PI / 4.0;
    acc += 2.0 / std::f64::consts::PI * edge.powf(2.0 * s - 1.0) / (1.0 - 2.0 * s);
    Ok(2.0 * acc.sqrt())
}

/// Bernstein deviation threshold `sqrt(8 mu^4 tau / m) + 2 mu^2 tau / (3m)`.
pub fn concentration_threshold(mu: f64, tau: f64, m: usize) -> f64 {
    let mf = m as f64;
    (8.0 * mu.powi(4) * tau / mf).sqrt() + 2.0 * mu * mu * tau / (3.0 * mf)
}

/// Dimension-free Bernstein tail `min(1, 2 k tau (e^tau - tau - 1)^{-1})`.
pub fn bernstein_tail(tau: f64, k: f64) -> Result<f64> {
    if tau <= 0.0 {
        return Err(NtkLabError::Domain(format!("tau must be positive, got {tau}")));
    }
    Ok((2.0 * k * tau / (tau.exp() - tau - 1.0)).min(1.0))
}

/// Per-tau row of a concentration report.
#[derive(Debug, Clone)]
pub struct TauRow {
    pub tau: f64,
    pub threshold: f64,
    pub tail_bound: f64,
    pub exceedance_frequency: f64,
}

/// Deviation statistics of the empirical kernel at one width.
#[derive(Debug, Clone)]
pub struct ConcentrationReport {
    pub m: usize,
    pub trials: usize,
    pub truncation: usize,
    pub s: f64,
    pub mu: f64,
    pub norms: Vec<f64>,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub tau_rows: Vec<TauRow>,
}

fn quartiles(sorted: &[f64]) -> (f64, f64, f64) {
    let q = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    (q(0.25), q(0.5), q(0.75))
}

/// Draws `trials` nets at each width and measures `||H_theta - H||_{0,s}`
/// against the Bernstein threshold at each tau.
pub fn concentration_experiment(
    widths: &[usize],
    trials: usize,
    truncation: usize,
    s: f64,
    tau_list: &[f64],
    seed: u64,
) -> Result<Vec<ConcentrationReport>> {
    if s >= 0.5 {
        return Err(NtkLabError::Domain("concentration requires s < 1/2".into()));
    }
    let mu = mu_constant(s)?;
    let analytic = analytic_ntk(truncation)?;
    widths
        .iter()
        .map(|&m| {
            let norms: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|trial| {
                    // per-(width, trial) seed stream, independent of order
                    let run_seed = seed
                        .wrapping_mul(1_000_003)
                        .wrapping_add(m as u64)
                        .wrapping_mul(1_000_003)
                        .wrapping_add(trial as u64);
                    let (net, _) = ShallowNet::init(m, run_seed, false)?;
                    let diff = empirical_ntk(&net, truncation)?.sub(&analytic);
                    weighted_operator_norm(&diff, 0.0, s)
                })
                .collect::<Result<_>>()?;
            let mut sorted = norms.clone();
            sorted.sort_by(f64::total_cmp);
            let (q1, median, q3) = quartiles(&sorted);
            let tau_rows = tau_list
                .iter()
                .map(|&tau| {
                    let threshold = concentration_threshold(mu, tau, m);
                    let exceed = norms.iter().filter(|&&n| n > threshold).count();
                    Ok(TauRow {
                        tau,
                        threshold,
                        tail_bound: bernstein_tail(tau, 1.0)?,
                        exceedance_frequency: exceed as f64 / trials as f64,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(ConcentrationReport {
                m,
                trials,
                truncation,
                s,
                mu,
                norms,
                q1,
                median,
                q3,
                tau_rows,
            })
        })
        .collect()
}

/// Serializes per-trial concentration rows at a fixed tau.
pub fn concentration_csv(reports: &[ConcentrationReport], tau: f64) -> String {
    let mut out = String::from("m,trial,norm_0s,threshold_tau,bound_tau\n");
    for rep in reports {
        let row = rep
            .tau_rows
            .iter()
            .find(|r| r.tau == tau)
            .expect("tau present in report");
        for (trial, &n) in rep.norms.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.12e}\n",
                rep.m, trial, n, row.threshold, row.tail_bound
            ));
        }
    }
    out
}

/// Ordinary least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Greedy sup-estimate of the local kernel perturbation (Lemma-style
/// `sup_{||nu||_inf <= 1} ||Delta^T nu||_s`).
#[derive(Debug, Clone)]
pub struct PerturbationReport {
    pub m: usize,
    pub h: f64,
    pub s: f64,
    pub estimate: f64,
    /// Unit-constant envelope shape `sqrt(m) h^{1-s}`.
    pub envelope: f64,
    /// Triangle-inequality cap `sum_r ||Delta_r||_s`; the estimate can
    /// never exceed it.
    pub triangle_cap: f64,
    pub restarts: usize,
}

/// Shifts every bias by +-h (random signs), forms the coefficient-space
/// difference rows, and maximizes `||Delta^T nu||_s` over the sign cube by
/// greedy coordinate ascent from random vertices. The objective is a
/// seminorm, so its max over the cube sits at a vertex; the returned value
/// is a certified lower bound on the supremum.
pub fn perturbation_sup_estimate(
    net: &ShallowNet,
    h: f64,
    s: f64,
    truncation: usize,
    restarts: usize,
    seed: u64,
) -> Result<PerturbationReport> {
    if !(0.0..=1.0).contains(&h) {
        return Err(NtkLabError::Domain(format!("radius h must lie in [0, 1], got {h}")));
    }
    if !(0.0..0.5).contains(&s) {
        return Err(NtkLabError::Domain(format!("smoothness s must lie in [0, 1/2), got {s}")));
    }
    let m = net.width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // rows already weighted by w_k^s, so the objective is a Euclidean norm
    let mut rows = vec![vec![0.0; truncation]; m];
    for (r, row) in rows.iter_mut().enumerate() {
        let shift = if rng.gen::<bool>() { h } else { -h };
        let shifted = net.biases[r] + shift;
        for (k, c) in row.iter_mut().enumerate() {
            let d = derivative_coeff(net.signs[r], net.biases[r], m, k)
                - derivative_coeff(net.signs[r], shifted, m, k);
            *c = eigen_frequency(k).powf(s) * d;
        }
    }
    let triangle_cap = rows
        .iter()
        .map(|row| row.iter().map(|c| c * c).sum::<f64>().sqrt())
        .sum();

    let mut best = 0.0f64;
    for _ in 0..restarts.max(1) {
        let mut nu: Vec<f64> = (0..m)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let mut w = vec![0.0; truncation];
        for (r, row) in rows.iter().enumerate() {
            for (k, &c) in row.iter().enumerate() {
                w[k] += nu[r] * c;
            }
        }
        let mut norm_sq: f64 = w.iter().map(|x| x * x).sum();
        loop {
            let mut improved = false;
            for (r, row) in rows.iter().enumerate() {
                // flipping nu_r changes ||w||^2 by 4||row||^2 - 4 nu_r <w, row>
                let dot: f64 = w.iter().zip(row).map(|(a, b)| a * b).sum();
                let row_sq: f64 = row.iter().map(|c| c * c).sum();
                let gain = 4.0 * row_sq - 4.0 * nu[r] * dot;
                if gain > 1e-14 * norm_sq.max(1.0) {
                    for (wk, &c) in w.iter_mut().zip(row) {
                        *wk -= 2.0 * nu[r] * c;
                    }
                    nu[r] = -nu[r];
                    norm_sq += gain;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        best = best.max(norm_sq.sqrt());
    }

    Ok(PerturbationReport {
        m,
        h,
        s,
        estimate: best,
        envelope: (m as f64).sqrt() * h.powf(1.0 - s),
        triangle_cap,
        restarts: restarts.max(1),
    })
}

/// Serializes perturbation reports.
pub fn perturbation_csv(reports: &[PerturbationReport]) -> String {
    let mut out = String::from("m,h,s,estimate,envelope,restarts\n");
    for r in reports {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
            r.m, r.h, r.s, r.estimate, r.envelope, r.restarts
        ));
    }
    out
}

/// Max over width-2h cells (each extended by h on both sides) of the
/// normalized bias count `(1/m) sum_r chi(theta_r)`.
pub fn partition_overlap_max(biases: &[f64], h: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&h) || h == 0.0 {
        return Err(NtkLabError::Domain(format!("cell width h must lie in (0, 1], got {h}")));
    }
    if biases.is_empty() {
        return Err(NtkLabError::Config("empty bias sequence".into()));
    }
    let cells = (1.0 / h).ceil() as usize;
    let width = 2.0 / cells as f64;
    let m = biases.len() as f64;
    let mut best = 0.0f64;
    for c in 0..cells {
        let lo = -1.0 + c as f64 * width - h;
        let hi = -1.0 + (c + 1) as f64 * width + h;
        let count = biases.iter().filter(|&&t| t >= lo && t <= hi).count();
        best = best.max(count as f64 / m);
    }
    Ok(best)
}

/// Monte-Carlo check of the rank-one Bernstein inequality: spectral-norm
/// deviation of averaged rank-one matrices `v u^T` against the threshold
/// `sqrt(8 mu^2 nu^2 tau / n) + 2 mu nu tau / (3n)`.
#[derive(Debug, Clone)]
pub struct BernsteinBench {
    pub n: usize,
    pub dim: usize,
    pub trials: usize,
    pub tau: f64,
    pub threshold: f64,
    pub tail_bound: f64,
    pub exceedance_frequency: f64,
    pub deviations: Vec<f64>,
}

pub fn rank_one_bernstein_bench(
    n: usize,
    mu: f64,
    nu: f64,
    dim: usize,
    trials: usize,
    tau: f64,
    seed: u64,
) -> Result<BernsteinBench> {
    if n == 0 || dim == 0 || trials == 0 || mu <= 0.0 || nu <= 0.0 {
        return Err(NtkLabError::Domain("all bench parameters must be positive".into()));
    }
    let threshold = (8.0 * mu * mu * nu * nu * tau / n as f64).sqrt()
        + 2.0 * mu * nu * tau / (3.0 * n as f64);
    let tail_bound = bernstein_tail(tau, 1.0)?;

    let deviations: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(trial as u64),
            );
            let mut sum = KernelMatrix::zeros(dim);
            let mut u = vec![0.0; dim];
            let mut v = vec![0.0; dim];
            for _ in 0..n {
                // centered construction: uniform sphere directions with
                // uniform radii, so E[v u^T] = 0
                sample_scaled_sphere(&mut rng, mu, &mut u);
                sample_scaled_sphere(&mut rng, nu, &mut v);
                for i in 0..dim {
                    for j in 0..dim {
                        sum.set(i, j, sum.get(i, j) + v[i] * u[j]);
                    }
                }
            }
            let inv_n = 1.0 / n as f64;
            let mut avg = KernelMatrix::zeros(dim);
            for i in 0..dim {
                for j in 0..dim {
                    avg.set(i, j, sum.get(i, j) * inv_n);
                }
            }
            spectral_norm(&avg)
        })
        .collect::<Result<_>>()?;

    let exceed = deviations.iter().filter(|&&d| d > threshold).count();
    Ok(BernsteinBench {
        n,
        dim,
        trials,
        tau,
        threshold,
        tail_bound,
        exceedance_frequency: exceed as f64 / trials as f64,
        deviations,
    })
}

/// Spectral norm of a plain matrix (no smoothness weighting).
pub fn spectral_norm(m: &KernelMatrix) -> Result<f64> {
    // zero-order weights are all 1, so this is sigma_max(M)
    weighted_operator_norm(m, 0.0, 0.0)
}

fn sample_scaled_sphere(rng: &mut ChaCha8Rng, radius: f64, out: &mut [f64]) {
    // Box-Muller normals, normalized to the sphere, scaled by a uniform
    // radius in (0, radius]
    loop {
        let mut norm_sq = 0.0;
        let mut i = 0;
        while i < out.len() {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = (-2.0 * u1.ln()).sqrt();
            out[i] = r * u2.cos();
            if i + 1 < out.len() {
                out[i + 1] = r * u2.sin();
            }
            i += 2;
        }
        for x in out.iter() {
            norm_sq += x * x;
        }
        if norm_sq > 1e-300 {
            let scale = radius * rng.gen_range(0.0f64..1.0).max(f64::MIN_POSITIVE) / norm_sq.sqrt();
            for x in out.iter_mut() {
                *x *= scale;
            }
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::eigen_frequency;
    use std::f64::consts::PI;

    #[test]
    fn single_unit_empirical_entries() {
        let net = ShallowNet {
            signs: vec![1.0],
            biases: vec![-1.0],
            train_signs: false,
        };
        let m = empirical_ntk(&net, 2).unwrap();
        // c_00 = 4/pi, so M_00 = (4/pi)^2
        assert!((m.get(0, 0) - (4.0 / PI) * (4.0 / PI)).abs() < 1e-10);
        assert!((m.get(0, 0) - 1.6211389).abs() < 1e-6);

        let dead = ShallowNet {
            signs: vec![1.0],
            biases: vec![1.0],
            train_signs: false,
        };
        let z = empirical_ntk(&dead, 4).unwrap();
        for k in 0..4 {
            for l in 0..4 {
                assert!(z.get(k, l).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empirical_matches_coeff_outer_product() {
        let (net, _) = ShallowNet::init(5, 3, false).unwrap();
        let m = empirical_ntk(&net, 8).unwrap();
        for k in 0..8 {
            for l in 0..8 {
                let mut expect = 0.0;
                for r in 0..5 {
                    let v = net.partial_derivative_coeffs(r, 8).unwrap();
                    expect += v.coeffs()[k] * v.coeffs()[l];
                }
                assert!((m.get(k, l) - expect).abs() < 1e-12);
                assert_eq!(m.get(k, l), m.get(l, k));
            }
        }
    }

    #[test]
    fn empirical_is_positive_semidefinite() {
        // Gram structure: v^T M v = ||C v||^2 >= 0 for random v
        let (net, _) = ShallowNet::init(30, 55, false).unwrap();
        let m = empirical_ntk(&net, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let v: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut quad = 0.0;
            for k in 0..12 {
                for l in 0..12 {
                    quad += v[k] * m.get(k, l) * v[l];
                }
            }
            assert!(quad >= -1e-10);
        }
    }

    #[test]
    fn monte_carlo_mean_matches_analytic_lambda0() {
        // average of M_00 over single-unit nets estimates lambda_0
        let trials = 10_000;
        let mut vals = Vec::with_capacity(trials);
        for t in 0..trials {
            let (net, _) = ShallowNet::init(1, 40_000 + t as u64, false).unwrap();
            vals.push(empirical_ntk(&net, 1).unwrap().get(0, 0));
        }
        let mean: f64 = vals.iter().sum::<f64>() / trials as f64;
        let var: f64 =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (trials - 1) as f64;
        let stderr = (var / trials as f64).sqrt();
        assert!(
            (mean - ntk_eigenvalue(0)).abs() <= 3.0 * stderr,
            "mean {mean} vs {} (3se = {})",
            ntk_eigenvalue(0),
            3.0 * stderr
        );
    }

    #[test]
    fn analytic_trace_partial_sum() {
        let h = analytic_ntk(64).unwrap();
        let mut trace = 0.0;
        let mut oracle = 0.0;
        for k in 0..64 {
            trace += h.get(k, k);
            // direct summation oracle 8/(pi^2 (2k+1)^2)
            oracle += 8.0 / (PI * PI * (2 * k + 1) as f64 * (2 * k + 1) as f64);
            for l in 0..64 {
                if l != k {
                    assert_eq!(h.get(k, l), 0.0);
                }
            }
        }
        assert!((trace - oracle).abs() < 1e-14);
        assert!(trace < 1.0 && trace > 0.99);
        assert!((analytic_ntk(1).unwrap().get(0, 0) - 0.8105695).abs() < 1e-7);
    }

    #[test]
    fn mu_constant_matches_brute_force() {
        // independent oracle: much longer direct summation
        for &s in &[0.0, 0.25] {
            let mut acc = 0.0;
            let terms = 2_000_000usize;
            for k in 0..terms {
                acc += eigen_frequency(k).powf(2.0 * s - 2.0);
            }
            // same midpoint-integral tail as the implementation, but from
            // a 20x later cutoff
            let edge = eigen_frequency(terms) - std::f64::consts::PI / 4.0;
            acc += 2.0 / std::f64::consts::PI * edge.powf(2.0 * s - 1.0) / (1.0 - 2.0 * s);
            let brute = 2.0 * acc.sqrt();
            let mu = mu_constant(s).unwrap();
            assert!(
                (mu - brute).abs() / brute < 1e-8,
                "s={s}: {mu} vs {brute}"
            );
        }
        assert!(mu_constant(0.5).is_err());
    }

    #[test]
    fn bernstein_tail_values() {
        // tau=1: 2/(e-2) > 1 so clipped
        assert_eq!(bernstein_tail(1.0, 1.0).unwrap(), 1.0);
        let t8 = bernstein_tail(8.0, 1.0).unwrap();
        assert!((t8 - 16.0 / (8.0f64.exp() - 9.0)).abs() < 1e-15);
        assert!((t8 - 0.005384).abs() < 1e-6);
        assert!(bernstein_tail(0.0, 1.0).is_err());
        assert!(bernstein_tail(-2.0, 1.0).is_err());
        // monotone decreasing past tau = 3
        let mut prev = bernstein_tail(3.0, 1.0).unwrap();
        for i in 1..40 {
            let cur = bernstein_tail(3.0 + i as f64 * 0.5, 1.0).unwrap();
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn concentration_medians_shrink_with_width() {
        let reports =
            concentration_experiment(&[50, 800], 12, 32, 0.25, &[8.0], 77).unwrap();
        assert!(reports[1].median < reports[0].median);
        for rep in &reports {
            assert!(rep.q1 <= rep.median && rep.median <= rep.q3);
            assert!(rep.norms.iter().all(|&n| n >= 0.0));
        }
        let csv = concentration_csv(&reports, 8.0);
        assert!(csv.starts_with("m,trial,norm_0s,threshold_tau,bound_tau"));
        assert_eq!(csv.lines().count(), 1 + 2 * 12);
    }

    #[test]
    fn log_log_slope_exact_power_laws() {
        let xs = [100.0, 400.0, 1600.0];
        let ys: Vec<f64> = xs.iter().map(|&x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((log_log_slope(&xs, &ys) + 0.5).abs() < 1e-12);
        let flat: Vec<f64> = xs.iter().map(|_| 2.0).collect();
        assert!(log_log_slope(&xs, &flat).abs() < 1e-12);
    }

    #[test]
    fn perturbation_zero_radius() {
        let (net, _) = ShallowNet::init(20, 9, false).unwrap();
        let rep = perturbation_sup_estimate(&net, 0.0, 0.25, 32, 5, 1).unwrap();
        assert_eq!(rep.estimate, 0.0);
        assert_eq!(rep.envelope, 0.0);
    }

    #[test]
    fn perturbation_single_unit_is_exact() {
        // one sign: sup over {-1, +1} is the row norm itself
        let (net, _) = ShallowNet::init(1, 33, false).unwrap();
        let rep = perturbation_sup_estimate(&net, 0.01, 0.25, 64, 3, 2).unwrap();
        assert!((rep.estimate - rep.triangle_cap).abs() < 1e-12);
        assert!(rep.estimate > 0.0);
    }

    #[test]
    fn perturbation_respects_triangle_cap() {
        for seed in 0..5 {
            let (net, _) = ShallowNet::init(50, 100 + seed, false).unwrap();
            let rep = perturbation_sup_estimate(&net, 0.02, 0.25, 48, 10, seed).unwrap();
            assert!(rep.estimate <= rep.triangle_cap + 1e-9);
            assert!(rep.estimate >= 0.0);
        }
        let (net, _) = ShallowNet::init(10, 4, false).unwrap();
        let reports = vec![perturbation_sup_estimate(&net, 0.01, 0.0, 16, 2, 0).unwrap()];
        let csv = perturbation_csv(&reports);
        assert!(csv.starts_with("m,h,s,estimate,envelope,restarts"));
    }

    #[test]
    fn partition_overlap_cases() {
        assert_eq!(partition_overlap_max(&[0.3], 0.1).unwrap(), 1.0);

        // equispaced biases, h = 2/m: each extended window has width 8/m,
        // so it holds at most 5 points of an (2/m)-spaced sequence
        let m = 50;
        let biases: Vec<f64> = (0..m)
            .map(|i| -1.0 + (2 * i + 1) as f64 / m as f64)
            .collect();
        let max = partition_overlap_max(&biases, 2.0 / m as f64).unwrap();
        assert!(max <= 5.0 / m as f64 + 1e-12, "max {max}");

        assert!(partition_overlap_max(&[0.0], 0.0).is_err());
        assert!(partition_overlap_max(&[], 0.1).is_err());
    }

    #[test]
    fn partition_overlap_uniform_biases_stay_bounded() {
        let h = 0.05;
        for seed in 0..20 {
            let (net, _) = ShallowNet::init(5000, 900 + seed, false).unwrap();
            let max = partition_overlap_max(&net.biases, h).unwrap();
            // expected mass per extended window is ~2h; allow constant 3
            assert!(max <= 3.0 * 2.0 * h, "seed {seed}: {max}");
            assert!(max >= h / 2.0);
        }
    }

    #[test]
    fn bernstein_bench_threshold_arithmetic() {
        // threshold at n=1e4, mu=nu=1, tau=6: sqrt(48/1e4) + 12/3e4
        let expect = (48.0f64 / 1e4).sqrt() + 12.0 / 3e4;
        assert!((expect - 0.069682).abs() < 1e-6);
        let bench = rank_one_bernstein_bench(10_000, 1.0, 1.0, 4, 3, 6.0, 5).unwrap();
        assert!((bench.threshold - expect).abs() < 1e-12);
        assert!((bench.tail_bound - 12.0 / (6.0f64.exp() - 7.0)).abs() < 1e-15);
        assert!(bench.deviations.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn sphere_samples_have_bounded_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut v = vec![0.0; 16];
        let mut mean = vec![0.0; 16];
        let trials = 20_000;
        for _ in 0..trials {
            sample_scaled_sphere(&mut rng, 1.0, &mut v);
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm <= 1.0 + 1e-12);
            for (m, x) in mean.iter_mut().zip(&v) {
                *m += x / trials as f64;
            }
        }
        // centered: each coordinate mean near zero
        for m in &mean {
            assert!(m.abs() < 0.01);
        }
    }

    #[test]
    fn spectral_norm_identity_and_rank_one() {
        let mut id = KernelMatrix::zeros(6);
        for i in 0..6 {
            id.set(i, i, 1.0);
        }
        assert!((spectral_norm(&id).unwrap() - 1.0).abs() < 1e-9);

        // rank one v u^T has spectral norm ||u|| ||v||
        let u = [1.0, 2.0, 2.0];
        let v = [3.0, 0.0, 4.0];
        let mut m = KernelMatrix::zeros(3);
        for i in 0..3 {
            for j in 0..3 {
                m.set(i, j, v[i] * u[j]);
            }
        }
        assert!((spectral_norm(&m).unwrap() - 15.0).abs() < 1e-8);
    }
}
