//! Fits the compute-profile timing coefficients to observed end-to-end
//! timings by non-negative least squares.
//!
//! The timing model is
//!   T(tokens, kappa) = [kappa < 1] * S * tokens
//!                    + L * (ceil(kappa * tokens) + output_tokens) + C
//! with S the SLM per-token time, L the LLM per-token time, and C the fixed
//! LLM overhead. The response length enters only through L * output_tokens,
//! so it is not separately identifiable and is taken as given.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::service::ComputeProfile;

/// One observed timing: (tokens, kappa, seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub tokens: u32,
    pub kappa: f64,
    pub seconds: f64,
}

/// Fit result: coefficients plus per-row residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub slm_time_per_token_s: f64,
    pub llm_time_per_token_s: f64,
    pub llm_fixed_overhead_s: f64,
    pub output_tokens: u32,
    pub residuals_s: Vec<f64>,
    pub rmse_s: f64,
}

impl CalibrationFit {
    /// Predicted end-to-end encode time under the fitted model.
    pub fn predict(&self, tokens: u32, kappa: f64) -> f64 {
        let n = tokens as f64;
        let slm = if kappa < 1.0 { self.slm_time_per_token_s * n } else { 0.0 };
        slm + self.llm_fixed_overhead_s
            + self.llm_time_per_token_s * ((kappa * n).ceil() + self.output_tokens as f64)
    }

    /// Applies the fitted coefficients onto an existing profile.
    pub fn apply_to(&self, base: &ComputeProfile) -> ComputeProfile {
        ComputeProfile {
            slm_time_per_token_s: self.slm_time_per_token_s,
            llm_time_per_token_s: self.llm_time_per_token_s,
            llm_fixed_overhead_s: self.llm_fixed_overhead_s,
            output_tokens: self.output_tokens,
            ..base.clone()
        }
    }
}

/// The four reference timings the calibration ships with.
pub fn reference_timings() -> Vec<TimingRow> {
    vec![
        TimingRow { tokens: 44, kappa: 1.0, seconds: 56.1 },
        TimingRow { tokens: 44, kappa: 0.25, seconds: 46.9 },
        TimingRow { tokens: 388, kappa: 1.0, seconds: 85.3 },
        TimingRow { tokens: 388, kappa: 0.25, seconds: 71.2 },
    ]
}

/// Parses a timings file: one `tokens,kappa,seconds` row per line, `#`
/// comments allowed.
pub fn parse_timings(text: &str) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Calibration(format!(
                "line {}: expected tokens,kappa,seconds",
                ln + 1
            )));
        }
        let tokens = fields[0]
            .parse::<u32>()
            .map_err(|e| Error::Calibration(format!("line {}: {e}", ln + 1)))?;
        let kappa = fields[1]
            .parse::<f64>()
            .map_err(|e| Error::Calibration(format!("line {}: {e}", ln + 1)))?;
        let seconds = fields[2]
            .parse::<f64>()
            .map_err(|e| Error::Calibration(format!("line {}: {e}", ln + 1)))?;
        if !(kappa > 0.0 && kappa <= 1.0) || !(seconds > 0.0) || tokens == 0 {
            return Err(Error::Calibration(format!("line {}: values out of range", ln + 1)));
        }
        rows.push(TimingRow { tokens, kappa, seconds });
    }
    Ok(rows)
}

fn design_row(row: &TimingRow, output_tokens: u32) -> [f64; 3] {
    let n = row.tokens as f64;
    [
        if row.kappa < 1.0 { n } else { 0.0 },
        (row.kappa * n).ceil() + output_tokens as f64,
        1.0,
    ]
}

/// Solves the 3x3 system A x = b by Gaussian elimination with partial
/// pivoting; None when singular.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..3 {
            let factor = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 3];
    for col in (0..3).rev() {
        let mut acc = b[col];
        for k in (col + 1)..3 {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

/// Non-negative least squares over the three coefficients by enumerating
/// active sets (at most 2^3 reduced problems; fine at this size).
pub fn fit(rows: &[TimingRow], output_tokens: u32) -> Result<CalibrationFit> {
    if rows.len() < 4 {
        return Err(Error::Calibration(format!(
            "need at least 4 timing rows, got {} (underdetermined)",
            rows.len()
        )));
    }

    let design: Vec<[f64; 3]> = rows.iter().map(|r| design_row(r, output_tokens)).collect();
    let target: Vec<f64> = rows.iter().map(|r| r.seconds).collect();

    let sse_of = |x: &[f64; 3]| -> f64 {
        design
            .iter()
            .zip(target.iter())
            .map(|(row, &t)| {
                let pred = row[0] * x[0] + row[1] * x[1] + row[2] * x[2];
                (pred - t) * (pred - t)
            })
            .sum()
    };

    let mut best: Option<([f64; 3], f64)> = None;
    // Subsets of coefficients clamped to zero; free coefficients are fit by
    // normal equations on the reduced design.
    for mask in 0..8u8 {
        let free: Vec<usize> = (0..3).filter(|i| mask & (1 << i) == 0).collect();
        let x = if free.is_empty() {
            Some([0.0; 3])
        } else {
            // Reduced normal equations, padded back to 3x3 with identity
            // rows for clamped coefficients.
            let mut ata = [[0.0f64; 3]; 3];
            let mut atb = [0.0f64; 3];
            for (row, &t) in design.iter().zip(target.iter()) {
                for &i in &free {
                    for &j in &free {
                        ata[i][j] += row[i] * row[j];
                    }
                    atb[i] += row[i] * t;
                }
            }
            for i in 0..3 {
                if mask & (1 << i) != 0 {
                    ata[i][i] = 1.0;
                    atb[i] = 0.0;
                }
            }
            solve3(ata, atb)
        };
        let Some(x) = x else { continue };
        if x.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let x = [x[0].max(0.0), x[1].max(0.0), x[2].max(0.0)];
        let sse = sse_of(&x);
        if best.map_or(true, |(_, cur)| sse < cur - 1e-12) {
            best = Some((x, sse));
        }
    }

    let (x, sse) = best.ok_or_else(|| {
        Error::Calibration("design matrix is singular (identical or collinear rows)".into())
    })?;
    // Reject the degenerate all-identical-rows case even when a fit exists
    // in a subspace: per-token coefficients must be pinned by the data.
    let distinct: std::collections::BTreeSet<(u32, u64)> = rows
        .iter()
        .map(|r| (r.tokens, r.kappa.to_bits()))
        .collect();
    if distinct.len() < 3 {
        return Err(Error::Calibration(
            "timing rows are degenerate (fewer than 3 distinct (tokens, kappa) points)".into(),
        ));
    }

    let residuals: Vec<f64> = design
        .iter()
        .zip(target.iter())
        .map(|(row, &t)| row[0] * x[0] + row[1] * x[1] + row[2] * x[2] - t)
        .collect();
    Ok(CalibrationFit {
        slm_time_per_token_s: x[0],
        llm_time_per_token_s: x[1],
        llm_fixed_overhead_s: x[2],
        output_tokens,
        residuals_s: residuals,
        rmse_s: (sse / rows.len() as f64).sqrt(),
    })
}
