use super::delayed::DelayedOperator;
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, TriangularGrid};
use crate::measure::DelayMeasure;
use crate::terminal::TerminalFamily;

/// Stopping rules for fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    pub max_iterations: usize,
    /// Stop once the sup-norm of successive differences falls below this.
    pub tolerance: f64,
    /// Abort once the sup-norm of an iterate exceeds this.
    pub divergence_guard: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { max_iterations: 200, tolerance: 1e-10, divergence_guard: 1e12 }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.max_iterations == 0 || !(self.divergence_guard > 0.0) {
            return Err(Error::Domain(format!("invalid Picard configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PicardStatus {
    Converged,
    Diverged,
    Stalled,
}

/// Full iteration record, kept even when the iteration fails.
#[derive(Debug, Clone)]
pub struct PicardTrace {
    pub y: Vec<f64>,
    /// `sup |Y^{k+1} - Y^k|` per iteration.
    pub history: Vec<f64>,
    pub status: PicardStatus,
}

impl PicardTrace {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    pub fn into_result(self) -> Result<PicardTrace> {
        match self.status {
            PicardStatus::Converged => Ok(self),
            PicardStatus::Diverged => Err(Error::PicardDiverged {
                iteration: self.history.len(),
                sup: self.y.iter().fold(0.0f64, |a, v| a.max(v.abs())),
            }),
            PicardStatus::Stalled => Err(Error::PicardStalled {
                iterations: self.history.len(),
                last_diff: self.history.last().copied().unwrap_or(f64::NAN),
            }),
        }
    }
}

/// Iterates `Y ↦ f + A Y` from `Y⁰ = f`.
pub fn iterate(op: &DelayedOperator, f: &[f64], cfg: &PicardConfig) -> Result<PicardTrace> {
    cfg.validate()?;
    let mut y = f.to_vec();
    let mut history = Vec::new();
    for _ in 0..cfg.max_iterations {
        let gy = op.apply_y(&y);
        let next: Vec<f64> = f.iter().zip(&gy).map(|(a, b)| a + b).collect();
        let diff = next.iter().zip(&y).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let size = next.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        y = next;
        history.push(diff);
        if !(size <= cfg.divergence_guard) {
            return Ok(PicardTrace { y, history, status: PicardStatus::Diverged });
        }
        if diff <= cfg.tolerance {
            return Ok(PicardTrace { y, history, status: PicardStatus::Converged });
        }
    }
    Ok(PicardTrace { y, history, status: PicardStatus::Stalled })
}

/// Picard iteration for the delayed equation with a deterministic terminal family (`Z ≡ 0`).
pub fn picard_trace(
    fam: &TerminalFamily,
    k: &KernelSpec,
    m: &DelayMeasure,
    grid: &TriangularGrid,
    cfg: &PicardConfig,
) -> Result<PicardTrace> {
    let TerminalFamily::Deterministic(f0) = fam else {
        return Err(Error::UnsupportedFamily("Picard iteration needs a deterministic terminal family"));
    };
    let op = DelayedOperator::new(k, m, grid)?;
    let f: Vec<f64> = grid.nodes().iter().map(|&t| f0.eval(t)).collect();
    iterate(&op, &f, cfg)
}

/// As [`picard_trace`], failing unless the iteration converged.
pub fn solve_delayed_picard(
    fam: &TerminalFamily,
    k: &KernelSpec,
    m: &DelayMeasure,
    grid: &TriangularGrid,
    cfg: &PicardConfig,
) -> Result<PicardTrace> {
    picard_trace(fam, k, m, grid, cfg)?.into_result()
}
