//! Width sweeps: repeated training across a geometric grid of widths,
//! rate estimation from the resulting error tables, and breakpoint
//! histograms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NtkLabError, Result};
use crate::grid::{default_nodes, GridFunction};
use crate::network::ShallowNet;
use crate::targets::TargetSpec;
use crate::training::{adam_train, gradient_flow, AdamConfig, FlowConfig, Trajectory};

pub const DEFAULT_WIDTHS: [usize; 8] = [18, 32, 56, 100, 178, 316, 562, 1000];
pub const CI_WIDTHS: [usize; 5] = [18, 32, 56, 100, 178];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Flow,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Flow => "flow",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "flow" => Ok(OptimizerKind::Flow),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(NtkLabError::Config(format!(
                "unknown optimizer {other:?}; expected flow or adam"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub widths: Vec<usize>,
    /// Seeds per width.
    pub seeds: usize,
    pub base_seed: u64,
    pub optimizer: OptimizerKind,
    pub train_signs: bool,
    /// Gradient-flow horizon when the flow optimizer is selected.
    pub flow_horizon: f64,
    pub adam: AdamConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            widths: DEFAULT_WIDTHS.to_vec(),
            seeds: 20,
            base_seed: 1,
            optimizer: OptimizerKind::Adam,
            train_signs: false,
            flow_horizon: 5.0,
            adam: AdamConfig {
                iterations: 200_000,
                // Full-grid norm evaluations dominate sweep cost; record
                // sparsely along long Adam runs.
                record_every: 10_000,
                ..AdamConfig::default()
            },
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.seeds == 0 {
            return Err(NtkLabError::Config("sweep needs widths and seeds".into()));
        }
        if !self.widths.windows(2).all(|w| w[0] < w[1]) {
            return Err(NtkLabError::Config("widths must be strictly increasing".into()));
        }
        self.adam.validate()
    }

    /// Replayable per-run seed derived from (base_seed, m, seed index).
    pub fn run_seed(&self, m: usize, index: usize) -> u64 {
        self.base_seed
            .wrapping_mul(1_000_003)
            .wrapping_add(m as u64)
            .wrapping_mul(1_000_003)
            .wrapping_add(index as u64)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub target: String,
    pub m: usize,
    pub seed: u64,
    pub optimizer: String,
    pub train_signs: bool,
    pub final_l2_error: f64,
    pub final_wdist_inf: f64,
    pub steps: usize,
    /// Seconds; kept out of the replay-compared CSV.
    pub wall_time: f64,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub trajectory: Option<Trajectory>,
}

/// One (m, seed) run; failures are reported in the record instead of
/// aborting the sweep.
pub fn single_run(target: TargetSpec, cfg: &SweepConfig, m: usize, index: usize) -> RunOutcome {
    let seed = cfg.run_seed(m, index);
    let run_id = format!("{}-m{}-s{}", target.name(), m, seed);
    let started = std::time::Instant::now();
    let result = (|| -> Result<Trajectory> {
        let (net, _) = ShallowNet::init(m, seed, cfg.train_signs)?;
        let grid = GridFunction::sample(default_nodes(m), |x| target.eval(x))?;
        match cfg.optimizer {
            OptimizerKind::Flow => {
                let flow = FlowConfig::default_for_width(m, cfg.flow_horizon);
                gradient_flow(&net, &grid, &flow)
            }
            OptimizerKind::Adam => adam_train(&net, |x| target.eval(x), &grid, &cfg.adam, seed),
        }
    })();
    let wall_time = started.elapsed().as_secs_f64();
    match result {
        Ok(traj) => {
            let last = traj.final_record();
            RunOutcome {
                record: RunRecord {
                    run_id,
                    target: target.name().to_string(),
                    m,
                    seed,
                    optimizer: cfg.optimizer.name().to_string(),
                    train_signs: cfg.train_signs,
                    final_l2_error: last.l2_err,
                    final_wdist_inf: last.wdist_inf,
                    steps: traj.steps_taken,
                    wall_time,
                    error: None,
                },
                trajectory: Some(traj),
            }
        }
        Err(e) => RunOutcome {
            record: RunRecord {
                run_id,
                target: target.name().to_string(),
                m,
                seed,
                optimizer: cfg.optimizer.name().to_string(),
                train_signs: cfg.train_signs,
                final_l2_error: f64::NAN,
                final_wdist_inf: f64::NAN,
                steps: 0,
                wall_time,
                error: Some(e.to_string()),
            },
            trajectory: None,
        },
    }
}

/// Runs every (width, seed) pair, concurrently, in a deterministic order
/// keyed by (m, seed index).
pub fn width_sweep(target: TargetSpec, cfg: &SweepConfig) -> Result<Vec<RunOutcome>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = cfg
        .widths
        .iter()
        .flat_map(|&m| (0..cfg.seeds).map(move |i| (m, i)))
        .collect();
    let mut outcomes: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(m, i)| single_run(target, cfg, m, i))
        .collect();
    outcomes.sort_by(|a, b| (a.record.m, &a.record.run_id).cmp(&(b.record.m, &b.record.run_id)));
    Ok(outcomes)
}

/// Serializes run records; wall-clock time is deliberately omitted so a
/// replayed sweep produces a byte-identical file.
pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(
        "run_id,target,m,seed,optimizer,train_signs,final_l2_error,final_wdist_inf,steps,error\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.12e},{:.12e},{},{}\n",
            r.run_id,
            r.target,
            r.m,
            r.seed,
            r.optimizer,
            r.train_signs,
            r.final_l2_error,
            r.final_wdist_inf,
            r.steps,
            r.error.as_deref().unwrap_or("")
        ));
    }
    out
}

/// Parses a runs CSV back into records (the inverse of [`runs_csv`];
/// wall-clock time is not stored and reads back as zero).
pub fn parse_runs_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header
        != "run_id,target,m,seed,optimizer,train_signs,final_l2_error,final_wdist_inf,steps,error"
    {
        return Err(NtkLabError::Config(format!("unexpected runs header {header:?}")));
    }
    let mut out = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 {
            return Err(NtkLabError::Config(format!("bad runs row {line:?}")));
        }
        let bad = |what: &str| NtkLabError::Config(format!("bad {what} in {line:?}"));
        out.push(RunRecord {
            run_id: cols[0].to_string(),
            target: cols[1].to_string(),
            m: cols[2].parse().map_err(|_| bad("m"))?,
            seed: cols[3].parse().map_err(|_| bad("seed"))?,
            optimizer: cols[4].to_string(),
            train_signs: cols[5].parse().map_err(|_| bad("train_signs"))?,
            final_l2_error: cols[6].parse().map_err(|_| bad("final_l2_error"))?,
            final_wdist_inf: cols[7].parse().map_err(|_| bad("final_wdist_inf"))?,
            steps: cols[8].parse().map_err(|_| bad("steps"))?,
            wall_time: 0.0,
            error: if cols[9].is_empty() {
                None
            } else {
                Some(cols[9].to_string())
            },
        });
    }
    Ok(out)
}

pub fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub m: usize,
    pub target: String,
    /// `None` when a median error was non-positive and the log-ratio is
    /// undefined.
    pub rate: Option<f64>,
    pub rate_kind: String,
    pub median_value: f64,
}

fn rates_from(records: &[RunRecord], kind: &str, value: impl Fn(&RunRecord) -> f64) -> Vec<RateRow> {
    let mut targets: Vec<String> = records.iter().map(|r| r.target.clone()).collect();
    targets.sort();
    targets.dedup();
    let mut rows = Vec::new();
    for target in targets {
        let mut widths: Vec<usize> = records
            .iter()
            .filter(|r| r.target == target && r.error.is_none())
            .map(|r| r.m)
            .collect();
        widths.sort_unstable();
        widths.dedup();
        let medians: Vec<(usize, f64)> = widths
            .iter()
            .filter_map(|&m| {
                let mut vals: Vec<f64> = records
                    .iter()
                    .filter(|r| r.target == target && r.m == m && r.error.is_none())
                    .map(&value)
                    .collect();
                median(&mut vals).map(|v| (m, v))
            })
            .collect();
        for pair in medians.windows(2) {
            let ((m_prev, e_prev), (m_cur, e_cur)) = (pair[0], pair[1]);
            let rate = if e_prev > 0.0 && e_cur > 0.0 {
                Some((e_prev / e_cur).ln() / (m_cur as f64 / m_prev as f64).ln())
            } else {
                None
            };
            rows.push(RateRow {
                m: m_cur,
                target: target.clone(),
                rate,
                rate_kind: kind.to_string(),
                median_value: e_cur,
            });
        }
    }
    rows
}

/// Consecutive-pair log-ratio rates on median final L2 errors.
pub fn estimate_rates(records: &[RunRecord]) -> Vec<RateRow> {
    rates_from(records, "l2_error", |r| r.final_l2_error)
}

/// Consecutive-pair log-ratio rates on median final weight distances.
pub fn weight_distance_rates(records: &[RunRecord]) -> Vec<RateRow> {
    rates_from(records, "wdist", |r| r.final_wdist_inf)
}

pub fn rates_csv(rows: &[RateRow]) -> String {
    let mut out = String::from("m,target,rate,rate_kind\n");
    for r in rows {
        match r.rate {
            Some(rate) => out.push_str(&format!("{},{},{:.6},{}\n", r.m, r.target, rate, r.rate_kind)),
            None => out.push_str(&format!("{},{},undefined,{}\n", r.m, r.target, r.rate_kind)),
        }
    }
    out
}

/// Histogram of final breakpoints over [-1, 1] with two overflow bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakpointHistogram {
    pub underflow: usize,
    pub counts: Vec<usize>,
    pub overflow: usize,
}

impl BreakpointHistogram {
    pub fn total(&self) -> usize {
        self.underflow + self.overflow + self.counts.iter().sum::<usize>()
    }
}

pub fn breakpoint_histogram(biases: &[f64], bins: usize) -> Result<BreakpointHistogram> {
    if bins == 0 {
        return Err(NtkLabError::Config("histogram needs at least one bin".into()));
    }
    let mut hist = BreakpointHistogram {
        underflow: 0,
        counts: vec![0; bins],
        overflow: 0,
    };
    for &t in biases {
        if t < -1.0 {
            hist.underflow += 1;
        } else if t > 1.0 {
            hist.overflow += 1;
        } else {
            let idx = (((t + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1);
            hist.counts[idx] += 1;
        }
    }
    Ok(hist)
}

pub fn histogram_csv(hist: &BreakpointHistogram) -> String {
    let bins = hist.counts.len();
    let width = 2.0 / bins as f64;
    let mut out = String::from("bin_lo,bin_hi,count\n");
    out.push_str(&format!("-inf,-1,{}\n", hist.underflow));
    for (i, &c) in hist.counts.iter().enumerate() {
        out.push_str(&format!(
            "{:.6},{:.6},{}\n",
            -1.0 + i as f64 * width,
            -1.0 + (i + 1) as f64 * width,
            c
        ));
    }
    out.push_str(&format!("1,inf,{}\n", hist.overflow));
    out
}
