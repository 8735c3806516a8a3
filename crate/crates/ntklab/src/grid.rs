//! Functions on [-1, 1] sampled on a uniform grid, with trapezoid-rule
//! inner products.
//!
//! The node count is odd so that 0 is always a node and the grid includes
//! both endpoints. The composite trapezoid rule is second order away from
//! kinks, which is all the accuracy ReLU breakpoints permit anyway.

use crate::error::{NtkLabError, Result};

/// A real function on [-1, 1] stored as samples at uniform nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    /// Builds a grid function from raw samples. The sample count must be
    /// odd and at least 3.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 || values.len() % 2 == 0 {
            return Err(NtkLabError::Config(format!(
                "grid node count must be odd and >= 3, got {}",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    /// Samples a closure at `nodes` uniform points on [-1, 1].
    pub fn sample<F: Fn(f64) -> f64>(nodes: usize, f: F) -> Result<Self> {
        let mut values = Vec::with_capacity(nodes);
        if nodes < 3 || nodes % 2 == 0 {
            return Err(NtkLabError::Config(format!(
                "grid node count must be odd and >= 3, got {nodes}"
            )));
        }
        let h = 2.0 / (nodes - 1) as f64;
        for i in 0..nodes {
            values.push(f(-1.0 + i as f64 * h));
        }
        Ok(Self { values })
    }

    /// The all-zero function on `nodes` points.
    pub fn zeros(nodes: usize) -> Result<Self> {
        Self::sample(nodes, |_| 0.0)
    }

    pub fn nodes(&self) -> usize {
        self.values.len()
    }

    /// Grid spacing 2/(nodes-1).
    pub fn spacing(&self) -> f64 {
        2.0 / (self.values.len() - 1) as f64
    }

    /// The i-th node location.
    pub fn node(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.spacing()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// L2([-1,1]) inner product by the composite trapezoid rule.
    pub fn inner(&self, other: &GridFunction) -> f64 {
        assert_eq!(
            self.nodes(),
            other.nodes(),
            "grid functions must share a grid"
        );
        let h = self.spacing();
        let n = self.nodes();
        let mut acc = 0.5 * (self.values[0] * other.values[0] + self.values[n - 1] * other.values[n - 1]);
        for i in 1..n - 1 {
            acc += self.values[i] * other.values[i];
        }
        acc * h
    }

    /// L2 norm, `sqrt(<f, f>)`.
    pub fn l2_norm(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    /// Pointwise difference on a shared grid.
    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        assert_eq!(self.nodes(), other.nodes());
        GridFunction {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Cumulative trapezoid integral from -1 to each node.
    pub fn cumulative_integral(&self) -> GridFunction {
        let h = self.spacing();
        let mut out = Vec::with_capacity(self.nodes());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..self.nodes() {
            acc += 0.5 * h * (self.values[i - 1] + self.values[i]);
            out.push(acc);
        }
        GridFunction { values: out }
    }

    /// Trapezoid integral of the function over [x0, 1], with the cell
    /// containing x0 split linearly instead of snapped to the grid.
    pub fn integral_from(&self, x0: f64) -> f64 {
        let cum = self.cumulative_integral();
        self.tail_from_cumulative(&cum, x0)
    }

    /// Batch version of [`integral_from`](Self::integral_from): one
    /// cumulative pass shared by all query points.
    pub fn tail_integrals(&self, points: &[f64]) -> Vec<f64> {
        let cum = self.cumulative_integral();
        points
            .iter()
            .map(|&x0| self.tail_from_cumulative(&cum, x0))
            .collect()
    }

    fn tail_from_cumulative(&self, cum: &GridFunction, x0: f64) -> f64 {
        let n = self.nodes();
        let h = self.spacing();
        let total = cum.values[n - 1];
        if x0 <= -1.0 {
            return total;
        }
        if x0 >= 1.0 {
            return 0.0;
        }
        let pos = (x0 + 1.0) / h;
        let cell = (pos.floor() as usize).min(n - 2);
        let frac = pos - cell as f64;
        // value at x0 by linear interpolation inside the cell
        let v0 = self.values[cell] * (1.0 - frac) + self.values[cell + 1] * frac;
        // partial cell [x0, node(cell+1)] plus the full cells after it
        0.5 * (v0 + self.values[cell + 1]) * h * (1.0 - frac) + (total - cum.values[cell + 1])
    }
}

/// Default quadrature resolution for a width-m network: max(8001, 100 m + 1),
/// forced odd.
pub fn default_nodes(m: usize) -> usize {
    let n = (100 * m + 1).max(8001);
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}
