//! Decimated trajectory records and summary metrics.

use std::fmt;
use std::io::{self, Write};

use nalgebra::DVector;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSample {
    pub position: DVector<f64>,
    pub control_norm: f64,
    pub eta_norm: f64,
    pub theta_norm: f64,
    /// `|phi_hat_i - F(R_i)|`.
    pub approximation_error_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub target: DVector<f64>,
    pub desired: DVector<f64>,
    pub error_norm: f64,
    pub nodes: Vec<NodeSample>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub state_dim: usize,
    pub node_count: usize,
    pub samples: Vec<Sample>,
}

impl TrajectoryLog {
    pub fn new(state_dim: usize, node_count: usize) -> Self {
        Self {
            state_dim,
            node_count,
            samples: Vec::new(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let n = self.state_dim;
        let mut cols = vec!["t".to_owned()];
        cols.extend((1..=n).map(|c| format!("x0_{c}")));
        cols.extend((1..=n).map(|c| format!("xd_{c}")));
        cols.push("e_norm".into());
        for i in 1..=self.node_count {
            cols.extend((1..=n).map(|c| format!("y{i}_{c}")));
            cols.push(format!("u{i}_norm"));
            cols.push(format!("eta{i}_norm"));
            cols.push(format!("theta{i}_norm"));
            cols.push(format!("phi_tilde{i}_norm"));
        }
        cols
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.header().join(","))?;
        let mut row = Vec::new();
        for s in &self.samples {
            row.clear();
            row.push(s.t);
            row.extend(s.target.iter());
            row.extend(s.desired.iter());
            row.push(s.error_norm);
            for node in &s.nodes {
                row.extend(node.position.iter());
                row.extend([node.control_norm, node.eta_norm, node.theta_norm, node.approximation_error_norm]);
            }
            let text: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
            writeln!(w, "{}", text.join(","))?;
        }
        Ok(())
    }
}

/// Summary of a run. Averages are over logged samples and are `None` when
/// nothing was logged.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub samples: usize,
    pub final_time: f64,
    /// `sqrt(mean |e|²)`.
    pub tracking_error_rms: Option<f64>,
    /// Node average of `sqrt(mean |u_i|²)`.
    pub control_rms: Option<f64>,
    /// Node average of `sqrt(mean |phi_tilde_i|²)`.
    pub approximation_error_rms: Option<f64>,
    /// Peak `|e|` over every integration step at or after the settle time.
    pub max_error_after_settle: Option<f64>,
    pub settle_time: f64,
    /// Peak weight-estimate norm over every integration step.
    pub max_theta_norm: f64,
    pub clamp_events: u64,
    pub guard_hits: u64,
}

impl Metrics {
    pub fn from_log(log: &TrajectoryLog) -> Self {
        let count = log.samples.len();
        let mean_sq = |f: &dyn Fn(&Sample) -> f64| -> f64 {
            (log.samples.iter().map(|s| f(s).powi(2)).sum::<f64>() / count as f64).sqrt()
        };
        let node_avg = |f: &dyn Fn(&NodeSample) -> f64| -> f64 {
            (0..log.node_count)
                .map(|i| mean_sq(&|s: &Sample| f(&s.nodes[i])))
                .sum::<f64>()
                / log.node_count as f64
        };
        let defined = count > 0;
        Metrics {
            samples: count,
            final_time: log.samples.last().map_or(0.0, |s| s.t),
            tracking_error_rms: defined.then(|| mean_sq(&|s| s.error_norm)),
            control_rms: defined.then(|| node_avg(&|n| n.control_norm)),
            approximation_error_rms: defined.then(|| node_avg(&|n| n.approximation_error_norm)),
            max_error_after_settle: None,
            settle_time: 0.0,
            max_theta_norm: 0.0,
            clamp_events: 0,
            guard_hits: 0,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_owned(), |x| format!("{x:.9}"))
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples={}", self.samples)?;
        writeln!(f, "final_time={:.6}", self.final_time)?;
        writeln!(f, "tracking_error_rms={}", opt(self.tracking_error_rms))?;
        writeln!(f, "control_rms={}", opt(self.control_rms))?;
        writeln!(f, "approximation_error_rms={}", opt(self.approximation_error_rms))?;
        writeln!(f, "settle_time={:.6}", self.settle_time)?;
        writeln!(f, "max_error_after_settle={}", opt(self.max_error_after_settle))?;
        writeln!(f, "max_theta_norm={:.9}", self.max_theta_norm)?;
        writeln!(f, "clamp_events={}", self.clamp_events)?;
        write!(f, "guard_hits={}", self.guard_hits)
    }
}
