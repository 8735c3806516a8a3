//! Gradient-flow integration of the infinite-sample loss and practical
//! Adam training on sampled losses, with trajectory recording and
//! NTK-regime runtime checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NtkLabError, Result};
use crate::grid::GridFunction;
use crate::network::{LossGradient, ShallowNet};
use crate::spectral::project;

/// Truncation for the s-norm of residuals along trajectories.
pub const TRAJECTORY_TRUNCATION: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk4,
}

/// Gradient-flow run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dt: f64,
    pub horizon: f64,
    pub integrator: Integrator,
    pub record_every: usize,
    /// Smoothness order tracked along the trajectory.
    pub s: f64,
}

impl FlowConfig {
    /// Defaults: rk4 with dt = 0.01/sqrt(m); gradient magnitudes grow as
    /// breakpoints concentrate, so the step shrinks with width.
    pub fn default_for_width(m: usize, horizon: f64) -> Self {
        FlowConfig {
            dt: 0.01 / (m as f64).sqrt(),
            horizon,
            integrator: Integrator::Rk4,
            record_every: 50,
            s: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 || self.horizon <= 0.0 {
            return Err(NtkLabError::Config("dt and horizon must be positive".into()));
        }
        if self.record_every == 0 {
            return Err(NtkLabError::Config("record_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Adam run configuration. The defaults fill in hyperparameters the
/// training protocol leaves open: moment rates 0.9/0.999, epsilon 1e-8,
/// rate 0.01, decay x0.5 every 1e4 steps; all overridable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_period: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub iterations: usize,
    /// Number of training samples; defaults to 2m when zero.
    pub samples: usize,
    /// Redraw the samples every step instead of fixing the design once.
    pub resample: bool,
    pub record_every: usize,
    pub s: f64,
    /// Stop when relative loss improvement over `convergence_window`
    /// steps drops below this; zero disables early stopping.
    pub convergence_rel_tol: f64,
    pub convergence_window: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            decay_factor: 0.5,
            decay_period: 10_000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            iterations: 50_000,
            samples: 0,
            resample: false,
            record_every: 1000,
            s: 0.25,
            convergence_rel_tol: 1e-6,
            convergence_window: 1000,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(NtkLabError::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(NtkLabError::Config("moment rates must lie in (0,1)".into()));
        }
        if self.record_every == 0 {
            return Err(NtkLabError::Config("record_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// One trajectory record. `kappa_time_integral` is the running trapezoid
/// integral of ||kappa||_0 over time (gradient flow only).
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub t: f64,
    pub loss: f64,
    pub l2_err: f64,
    pub s_norm: f64,
    pub wdist_inf: f64,
    pub kappa_time_integral: f64,
    pub bias_hash: u64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub final_net: ShallowNet,
    pub initial_biases: Vec<f64>,
    /// Largest gradient component magnitude seen along the run.
    pub max_grad_inf: f64,
    /// Step size at the end of the run (gradient flow may have halved it).
    pub final_dt: f64,
    pub steps_taken: usize,
}

impl Trajectory {
    pub fn final_record(&self) -> &TrajectoryRecord {
        self.records.last().expect("trajectory has at least one record")
    }

    /// CSV with columns run_id, t_or_step, loss, l2_err, s_norm,
    /// wdist_inf, kappa_time_integral.
    pub fn to_csv(&self, run_id: &str) -> String {
        let mut out =
            String::from("run_id,t_or_step,loss,l2_err,s_norm,wdist_inf,kappa_time_integral\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                run_id, r.t, r.loss, r.l2_err, r.s_norm, r.wdist_inf, r.kappa_time_integral
            ));
        }
        out
    }
}

/// Parses a trajectory CSV back into per-run record lists (the inverse of
/// [`Trajectory::to_csv`], minus the bias hashes and step indices).
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<(String, Vec<TrajectoryRecord>)>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != "run_id,t_or_step,loss,l2_err,s_norm,wdist_inf,kappa_time_integral" {
        return Err(NtkLabError::Config(format!(
            "unexpected trajectory header {header:?}"
        )));
    }
    let mut runs: Vec<(String, Vec<TrajectoryRecord>)> = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(NtkLabError::Config(format!("bad trajectory row {line:?}")));
        }
        let parse = |i: usize| -> Result<f64> {
            cols[i]
                .parse()
                .map_err(|_| NtkLabError::Config(format!("bad number {:?} in {line:?}", cols[i])))
        };
        let run_id = cols[0].to_string();
        if runs.last().map(|(id, _)| id != &run_id).unwrap_or(true) {
            runs.push((run_id, Vec::new()));
        }
        let records = &mut runs.last_mut().expect("just pushed").1;
        records.push(TrajectoryRecord {
            step: records.len(),
            t: parse(1)?,
            loss: parse(2)?,
            l2_err: parse(3)?,
            s_norm: parse(4)?,
            wdist_inf: parse(5)?,
            kappa_time_integral: parse(6)?,
            bias_hash: 0,
        });
    }
    Ok(runs)
}

fn fnv1a_hash(biases: &[f64]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in biases {
        for byte in b.to_bits().to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    hash
}

fn wdist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

struct FlowState<'a> {
    g: &'a GridFunction,
}

impl FlowState<'_> {
    fn gradient(&self, net: &ShallowNet) -> LossGradient {
        net.loss_gradient(self.g)
    }

    fn step(&self, net: &ShallowNet, dt: f64, integrator: Integrator) -> (ShallowNet, LossGradient) {
        let g1 = self.gradient(net);
        match integrator {
            Integrator::Euler => {
                let next = apply_step(net, &[(&g1, dt)]);
                (next, g1)
            }
            Integrator::Rk4 => {
                let mid1 = apply_step(net, &[(&g1, dt / 2.0)]);
                let g2 = self.gradient(&mid1);
                let mid2 = apply_step(net, &[(&g2, dt / 2.0)]);
                let g3 = self.gradient(&mid2);
                let end = apply_step(net, &[(&g3, dt)]);
                let g4 = self.gradient(&end);
                let next = apply_step(
                    net,
                    &[
                        (&g1, dt / 6.0),
                        (&g2, dt / 3.0),
                        (&g3, dt / 3.0),
                        (&g4, dt / 6.0),
                    ],
                );
                (next, g1)
            }
        }
    }
}

/// theta <- theta - sum_i w_i * grad_i (and likewise for trainable signs).
fn apply_step(net: &ShallowNet, grads: &[(&LossGradient, f64)]) -> ShallowNet {
    let mut next = net.clone();
    for (grad, w) in grads {
        for (t, d) in next.biases.iter_mut().zip(&grad.biases) {
            *t -= w * d;
        }
        if let Some(sg) = &grad.signs {
            for (a, d) in next.signs.iter_mut().zip(sg) {
                *a -= w * d;
            }
        }
    }
    next
}

const DESCENT_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 20;

/// Integrates `d theta/dt = -grad L` against the infinite-sample loss.
/// A step that increases the loss by more than 1e-8 is retried with a
/// halved dt (the reduction is kept), at most 20 times.
pub fn gradient_flow(net: &ShallowNet, g: &GridFunction, cfg: &FlowConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let state = FlowState { g };
    let initial_biases = net.biases.clone();
    let mut current = net.clone();
    let mut dt = cfg.dt;
    let mut t = 0.0;
    let mut records = Vec::new();
    let mut kappa_integral = 0.0;
    let mut max_grad_inf = 0.0f64;

    let mut loss = current.l2_loss(g);
    let mut kappa_norm = (2.0 * loss).max(0.0).sqrt();
    let record = |net: &ShallowNet, step: usize, t: f64, loss: f64, integral: f64| {
        let kappa = net.residual(g);
        let s_norm = project(&kappa, TRAJECTORY_TRUNCATION)
            .expect("truncation is positive")
            .smoothness_norm(cfg.s);
        TrajectoryRecord {
            step,
            t,
            loss,
            l2_err: kappa.l2_norm(),
            s_norm,
            wdist_inf: wdist_inf(&net.biases, &initial_biases),
            kappa_time_integral: integral,
            bias_hash: fnv1a_hash(&net.biases),
        }
    };
    records.push(record(&current, 0, 0.0, loss, 0.0));

    let mut step = 0usize;
    while t < cfg.horizon - 1e-12 {
        step += 1;
        let mut halvings = 0usize;
        let (next, next_loss, grad) = loop {
            let (candidate, grad) = state.step(&current, dt, cfg.integrator);
            let candidate_loss = candidate.l2_loss(g);
            if candidate_loss <= loss + DESCENT_TOL {
                break (candidate, candidate_loss, grad);
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(NtkLabError::StepUnderflow { t, halvings });
            }
            dt *= 0.5;
        };
        max_grad_inf = max_grad_inf.max(grad.max_abs());
        let next_kappa_norm = (2.0 * next_loss).max(0.0).sqrt();
        kappa_integral += 0.5 * dt * (kappa_norm + next_kappa_norm);
        t += dt;
        current = next;
        loss = next_loss;
        kappa_norm = next_kappa_norm;
        if step % cfg.record_every == 0 || t >= cfg.horizon - 1e-12 {
            records.push(record(&current, step, t, loss, kappa_integral));
        }
    }
    if records.last().map(|r| r.step) != Some(step) {
        records.push(record(&current, step, t, loss, kappa_integral));
    }

    Ok(Trajectory {
        records,
        final_net: current,
        initial_biases,
        max_grad_inf,
        final_dt: dt,
        steps_taken: step,
    })
}

/// One row of the Lemma-style weight-distance report.
#[derive(Debug, Clone)]
pub struct WeightDistanceRow {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Checks `||theta(t) - theta(0)||_inf <= sqrt(2/m) int_0^t ||kappa||_0`
/// at every record, with integrator slack `10 dt max ||grad L||_inf`.
pub fn weight_distance_check(traj: &Trajectory, m: usize) -> Vec<WeightDistanceRow> {
    let slack = 10.0 * traj.final_dt * traj.max_grad_inf;
    traj.records
        .iter()
        .map(|r| {
            let rhs = (2.0 / m as f64).sqrt() * r.kappa_time_integral + slack;
            WeightDistanceRow {
                t: r.t,
                lhs: r.wdist_inf,
                rhs,
                pass: r.wdist_inf <= rhs,
            }
        })
        .collect()
}

/// Minimizes the sampled loss `(1/n) sum_i (f(x_i) - g(x_i))^2` with Adam
/// and a step-decay schedule. Function norms in the records are evaluated
/// on the full quadrature grid `g`.
pub fn adam_train<F: Fn(f64) -> f64>(
    net: &ShallowNet,
    target: F,
    grid: &GridFunction,
    cfg: &AdamConfig,
    seed: u64,
) -> Result<Trajectory> {
    cfg.validate()?;
    let m = net.width();
    let n = if cfg.samples == 0 { 2 * m } else { cfg.samples };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Samples are kept sorted so losses and gradients can reuse the
    // prefix-sum forward pass.
    let mut xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    xs.sort_by(f64::total_cmp);
    let mut ys: Vec<f64> = xs.iter().map(|&x| target(x)).collect();
    let target_grid = GridFunction::sample(grid.nodes(), &target)?;

    let mut current = net.clone();
    let initial_biases = net.biases.clone();
    let mut mom_b = vec![0.0; m];
    let mut vel_b = vec![0.0; m];
    let mut mom_s = vec![0.0; m];
    let mut vel_s = vec![0.0; m];
    let mut records = Vec::new();
    let mut max_grad_inf = 0.0f64;

    let record = |net: &ShallowNet, step: usize, loss: f64| {
        let kappa = net.residual(&target_grid);
        let s_norm = project(&kappa, TRAJECTORY_TRUNCATION)
            .expect("truncation is positive")
            .smoothness_norm(cfg.s);
        TrajectoryRecord {
            step,
            t: step as f64,
            loss,
            l2_err: kappa.l2_norm(),
            s_norm,
            wdist_inf: wdist_inf(&net.biases, &initial_biases),
            kappa_time_integral: 0.0,
            bias_hash: fnv1a_hash(&net.biases),
        }
    };

    let mut loss = sample_loss(&current, &xs, &ys);
    records.push(record(&current, 0, loss));
    let mut window_anchor = loss;
    let mut steps_taken = 0usize;

    for iter in 1..=cfg.iterations {
        if cfg.resample {
            for x in xs.iter_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
            xs.sort_by(f64::total_cmp);
            for (x, y) in xs.iter().zip(ys.iter_mut()) {
                *y = target(*x);
            }
        }
        let (grad_b, grad_s) = sample_gradient(&current, &xs, &ys);
        let lr = cfg.learning_rate * cfg.decay_factor.powi((iter / cfg.decay_period.max(1)) as i32);
        let bc1 = 1.0 - cfg.beta1.powi(iter as i32);
        let bc2 = 1.0 - cfg.beta2.powi(iter as i32);
        for r in 0..m {
            max_grad_inf = max_grad_inf.max(grad_b[r].abs());
            mom_b[r] = cfg.beta1 * mom_b[r] + (1.0 - cfg.beta1) * grad_b[r];
            vel_b[r] = cfg.beta2 * vel_b[r] + (1.0 - cfg.beta2) * grad_b[r] * grad_b[r];
            current.biases[r] -= lr * (mom_b[r] / bc1) / ((vel_b[r] / bc2).sqrt() + cfg.epsilon);
        }
        if current.train_signs {
            let gs = grad_s.as_ref().expect("sign gradient present");
            for r in 0..m {
                mom_s[r] = cfg.beta1 * mom_s[r] + (1.0 - cfg.beta1) * gs[r];
                vel_s[r] = cfg.beta2 * vel_s[r] + (1.0 - cfg.beta2) * gs[r] * gs[r];
                current.signs[r] -= lr * (mom_s[r] / bc1) / ((vel_s[r] / bc2).sqrt() + cfg.epsilon);
            }
        }
        loss = sample_loss(&current, &xs, &ys);
        if !loss.is_finite() {
            return Err(NtkLabError::NonFiniteLoss { iteration: iter });
        }
        steps_taken = iter;
        if iter % cfg.record_every == 0 {
            records.push(record(&current, iter, loss));
        }
        if cfg.convergence_rel_tol > 0.0
            && cfg.convergence_window > 0
            && iter % cfg.convergence_window == 0
        {
            let improvement = (window_anchor - loss) / window_anchor.abs().max(1e-300);
            if improvement < cfg.convergence_rel_tol {
                break;
            }
            window_anchor = loss;
        }
    }
    if records.last().map(|r| r.step) != Some(steps_taken) {
        records.push(record(&current, steps_taken, loss));
    }

    Ok(Trajectory {
        records,
        final_net: current,
        initial_biases,
        max_grad_inf,
        final_dt: 0.0,
        steps_taken,
    })
}

/// Sampled loss over points given in ascending order.
fn sample_loss(net: &ShallowNet, xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    net.forward_sorted(xs)
        .iter()
        .zip(ys)
        .map(|(&f, &y)| {
            let d = f - y;
            d * d
        })
        .sum::<f64>()
        / n
}

/// Gradient of the sampled loss via sorted suffix sums:
/// `dL/dtheta_r = -(2 a_r)/(n sqrt(m)) sum_{x_i > theta_r} kappa_i`.
/// Sample points must be in ascending order.
fn sample_gradient(net: &ShallowNet, xs: &[f64], ys: &[f64]) -> (Vec<f64>, Option<Vec<f64>>) {
    let m = net.width();
    let n = xs.len();
    let scale = 1.0 / (m as f64).sqrt();

    let sorted_x = xs;
    let kappa: Vec<f64> = net
        .forward_sorted(xs)
        .iter()
        .zip(ys)
        .map(|(&f, &y)| f - y)
        .collect();

    // suffix sums of kappa and kappa * x over the sorted samples
    let mut suffix_k = vec![0.0; n + 1];
    let mut suffix_kx = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix_k[i] = suffix_k[i + 1] + kappa[i];
        suffix_kx[i] = suffix_kx[i + 1] + kappa[i] * sorted_x[i];
    }

    let mut grad_b = Vec::with_capacity(m);
    let mut grad_s = if net.train_signs {
        Some(Vec::with_capacity(m))
    } else {
        None
    };
    for r in 0..m {
        let theta = net.biases[r];
        let idx = sorted_x.partition_point(|&x| x <= theta);
        grad_b.push(-2.0 * net.signs[r] * scale / n as f64 * suffix_k[idx]);
        if let Some(gs) = grad_s.as_mut() {
            gs.push(2.0 * scale / n as f64 * (suffix_kx[idx] - theta * suffix_k[idx]));
        }
    }
    (grad_b, grad_s)
}
