//! The shallow bias-trained ReLU network: evaluation, residual, L2 loss,
//! exact bias gradient, and eigenbasis coefficients of the partial
//! derivatives.
//!
//! `f(x) = (1/sqrt(m)) sum_r a_r relu(x - theta_r)` with signs a_r in
//! {-1, +1} (real-valued when sign training is enabled) and biases
//! theta_r, which double as the breakpoints of the piecewise linear
//! output.
//!
//! Loss convention: `L = 1/2 ||f - g||_0^2`, so the gradient is exactly
//! the adjoint derivative applied to the residual with no stray factors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NtkLabError, Result};
use crate::grid::GridFunction;
use crate::spectral::{eigen_frequency, eigen_phase, SpectralFunction};

/// Width, output signs and biases of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowNet {
    pub signs: Vec<f64>,
    pub biases: Vec<f64>,
    pub train_signs: bool,
}

/// Everything needed to replay an initialization bit-exactly.
#[derive(Debug, Clone)]
pub struct InitRecord {
    pub seed: u64,
    pub initial_biases: Vec<f64>,
    pub initial_signs: Vec<f64>,
}

impl ShallowNet {
    pub fn width(&self) -> usize {
        self.biases.len()
    }

    /// Draws biases i.i.d. uniform on [-1, 1] and signs +-1 with equal
    /// probability. The generator is ChaCha8, a counter-based stream
    /// cipher keyed by `seed`, so the draw is bit-identical across
    /// platforms and replays.
    pub fn init(m: usize, seed: u64, train_signs: bool) -> Result<(ShallowNet, InitRecord)> {
        if m == 0 {
            return Err(NtkLabError::Config("width m must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let biases: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let signs: Vec<f64> = (0..m)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let record = InitRecord {
            seed,
            initial_biases: biases.clone(),
            initial_signs: signs.clone(),
        };
        Ok((
            ShallowNet {
                signs,
                biases,
                train_signs,
            },
            record,
        ))
    }

    /// Network output at a single point.
    pub fn forward(&self, x: f64) -> f64 {
        let scale = 1.0 / (self.width() as f64).sqrt();
        let mut acc = 0.0;
        for (a, t) in self.signs.iter().zip(&self.biases) {
            let z = x - t;
            if z > 0.0 {
                acc += a * z;
            }
        }
        scale * acc
    }

    /// Network output sampled on a uniform grid. Uses sorted prefix sums,
    /// O((m + n) log m) instead of O(m n).
    pub fn forward_grid(&self, nodes: usize) -> Result<GridFunction> {
        let m = self.width();
        let scale = 1.0 / (m as f64).sqrt();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| self.biases[i].total_cmp(&self.biases[j]));

        let mut values = Vec::with_capacity(nodes);
        if nodes < 3 || nodes % 2 == 0 {
            return Err(NtkLabError::Config(format!(
                "grid node count must be odd and >= 3, got {nodes}"
            )));
        }
        let h = 2.0 / (nodes - 1) as f64;
        let mut sum_a = 0.0;
        let mut sum_at = 0.0;
        let mut next = 0usize;
        for i in 0..nodes {
            let x = -1.0 + i as f64 * h;
            while next < m && self.biases[order[next]] <= x {
                let r = order[next];
                sum_a += self.signs[r];
                sum_at += self.signs[r] * self.biases[r];
                next += 1;
            }
            values.push(scale * (x * sum_a - sum_at));
        }
        GridFunction::from_values(values)
    }

    /// Network output at many points given in ascending order, via the
    /// same sorted prefix sums as [`forward_grid`](Self::forward_grid).
    pub fn forward_sorted(&self, xs: &[f64]) -> Vec<f64> {
        debug_assert!(xs.windows(2).all(|w| w[0] <= w[1]));
        let m = self.width();
        let scale = 1.0 / (m as f64).sqrt();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| self.biases[i].total_cmp(&self.biases[j]));
        let mut sum_a = 0.0;
        let mut sum_at = 0.0;
        let mut next = 0usize;
        xs.iter()
            .map(|&x| {
                while next < m && self.biases[order[next]] <= x {
                    let r = order[next];
                    sum_a += self.signs[r];
                    sum_at += self.signs[r] * self.biases[r];
                    next += 1;
                }
                scale * (x * sum_a - sum_at)
            })
            .collect()
    }

    /// Residual f - g on g's grid.
    pub fn residual(&self, g: &GridFunction) -> GridFunction {
        let f = self
            .forward_grid(g.nodes())
            .expect("target grid already validated");
        f.sub(g)
    }

    /// `L = 1/2 ||f - g||_0^2` by trapezoid quadrature.
    pub fn l2_loss(&self, g: &GridFunction) -> f64 {
        let kappa = self.residual(g);
        0.5 * kappa.inner(&kappa)
    }

    /// Exact loss gradient. The bias component is
    /// `dL/dtheta_r = -(a_r/sqrt(m)) int_{theta_r}^1 kappa(y) dy`,
    /// with the quadrature cell containing theta_r split linearly. When
    /// sign training is on, the sign component
    /// `dL/da_r = (1/sqrt(m)) int relu(y - theta_r) kappa(y) dy`
    /// is returned as well.
    pub fn loss_gradient(&self, g: &GridFunction) -> LossGradient {
        let kappa = self.residual(g);
        self.loss_gradient_from_residual(&kappa)
    }

    /// Same as `loss_gradient` but with a precomputed residual.
    pub fn loss_gradient_from_residual(&self, kappa: &GridFunction) -> LossGradient {
        let m = self.width();
        let scale = 1.0 / (m as f64).sqrt();
        let tails = kappa.tail_integrals(&self.biases);
        let biases = tails
            .iter()
            .zip(&self.signs)
            .map(|(&tail, &a)| -a * scale * tail)
            .collect();
        let signs = if self.train_signs {
            Some(
                self.biases
                    .iter()
                    .map(|&t| {
                        let weighted = GridFunction::from_values(
                            (0..kappa.nodes())
                                .map(|i| (kappa.node(i) - t).max(0.0) * kappa.values()[i])
                                .collect(),
                        )
                        .expect("same node count");
                        let one = GridFunction::sample(kappa.nodes(), |_| 1.0)
                            .expect("validated node count");
                        scale * weighted.inner(&one)
                    })
                    .collect(),
            )
        } else {
            None
        };
        LossGradient { biases, signs }
    }

    /// Eigenbasis coefficients of the partial derivative with respect to
    /// theta_r (up to the overall sign convention of the derivative, the
    /// indicator `(a_r/sqrt(m)) step(x - theta_r)`):
    /// `coeff_k = (a_r / (w_k sqrt(m))) cos(w_k theta_r - p_k)`.
    /// The companion boundary term `cos(w_k - p_k)` vanishes identically.
    pub fn partial_derivative_coeffs(&self, r: usize, truncation: usize) -> Result<SpectralFunction> {
        if r >= self.width() {
            return Err(NtkLabError::Config(format!(
                "unit index {r} outside width {}",
                self.width()
            )));
        }
        let scale = self.signs[r] / (self.width() as f64).sqrt();
        let theta = self.biases[r];
        SpectralFunction::new(
            (0..truncation)
                .map(|k| {
                    let w = eigen_frequency(k);
                    scale / w * (w * theta - eigen_phase(k)).cos()
                })
                .collect(),
        )
    }

    /// Writes the checkpoint CSV: one metadata line, a header, then one
    /// row per unit.
    pub fn to_checkpoint_csv(&self, seed: u64) -> String {
        let mut out = format!(
            "# m={},seed={},train_signs={}\n",
            self.width(),
            seed,
            self.train_signs
        );
        out.push_str("r,a_r,theta_r\n");
        for r in 0..self.width() {
            out.push_str(&format!(
                "{},{:.17e},{:.17e}\n",
                r + 1,
                self.signs[r],
                self.biases[r]
            ));
        }
        out
    }

    pub fn from_checkpoint_csv(text: &str) -> Result<(ShallowNet, u64)> {
        let mut lines = text.lines();
        let meta = lines
            .next()
            .ok_or_else(|| NtkLabError::Config("empty checkpoint".into()))?;
        let meta = meta.trim_start_matches('#').trim();
        let mut m = 0usize;
        let mut seed = 0u64;
        let mut train_signs = false;
        for field in meta.split(',') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| NtkLabError::Config(format!("bad metadata field {field:?}")))?;
            match key.trim() {
                "m" => m = value.parse().map_err(|_| NtkLabError::Config("bad m".into()))?,
                "seed" => {
                    seed = value
                        .parse()
                        .map_err(|_| NtkLabError::Config("bad seed".into()))?
                }
                "train_signs" => {
                    train_signs = value
                        .parse()
                        .map_err(|_| NtkLabError::Config("bad train_signs".into()))?
                }
                other => {
                    return Err(NtkLabError::Config(format!(
                        "unknown metadata key {other:?}"
                    )))
                }
            }
        }
        let header = lines.next();
        if header != Some("r,a_r,theta_r") {
            return Err(NtkLabError::Config("missing checkpoint header".into()));
        }
        let mut signs = Vec::with_capacity(m);
        let mut biases = Vec::with_capacity(m);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(NtkLabError::Config(format!("bad checkpoint row {line:?}")));
            }
            signs.push(
                cols[1]
                    .parse()
                    .map_err(|_| NtkLabError::Config("bad a_r".into()))?,
            );
            biases.push(
                cols[2]
                    .parse()
                    .map_err(|_| NtkLabError::Config("bad theta_r".into()))?,
            );
        }
        if signs.len() != m {
            return Err(NtkLabError::Config(format!(
                "checkpoint declares m={m} but has {} rows",
                signs.len()
            )));
        }
        Ok((
            ShallowNet {
                signs,
                biases,
                train_signs,
            },
            seed,
        ))
    }
}

/// Bias gradient plus the optional sign gradient.
#[derive(Debug, Clone)]
pub struct LossGradient {
    pub biases: Vec<f64>,
    pub signs: Option<Vec<f64>>,
}

impl LossGradient {
    pub fn max_abs(&self) -> f64 {
        let b = self.biases.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        match &self.signs {
            Some(s) => s.iter().fold(b, |acc, x| acc.max(x.abs())),
            None => b,
        }
    }

    pub fn euclidean_norm_sq(&self) -> f64 {
        let b: f64 = self.biases.iter().map(|x| x * x).sum();
        match &self.signs {
            Some(s) => b + s.iter().map(|x| x * x).sum::<f64>(),
            None => b,
        }
    }
}
