//! Common linear copositive Lyapunov certificates.
//!
//! Given square matrices `M_1..M_N`, find `lambda > 0` with `M_i^T lambda < 0`
//! for every `i`. The strict system is closed with a uniform margin and decided
//! by a dense phase-1 simplex using Bland's rule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcore::Mat;

pub const DEFAULT_MARGIN: f64 = 1e-6;
/// Smallest margin tried by [`find_lambda_sweep`] before giving up.
pub const MIN_MARGIN: f64 = 1e-8;

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error("no matrices supplied")]
    Empty,
    #[error("matrix {index} is {rows}x{cols}, expected {expected}x{expected}")]
    Dimension {
        index: usize,
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("margin must lie in (0, 1), got {0}")]
    Margin(f64),
}

/// A positive vector `lambda` with `lambda >= margin` and
/// `M_i^T lambda <= -margin` for every matrix it certifies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub lambda: Vec<f64>,
    pub margin: f64,
    /// `max_j (M_i^T lambda)_j` per matrix.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Infeasibility {
    pub margin: f64,
    /// Optimal phase-1 objective (sum of artificial variables); zero would mean feasible.
    pub phase1_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(Certificate),
    Infeasible(Infeasibility),
}

impl Feasibility {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Feasibility::Feasible(c) => Some(c),
            Feasibility::Infeasible(_) => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

fn validate(mats: &[Mat]) -> Result<usize, CertifyError> {
    let first = mats.first().ok_or(CertifyError::Empty)?;
    let m = first.rows();
    for (index, a) in mats.iter().enumerate() {
        if a.rows() != m || a.cols() != m {
            return Err(CertifyError::Dimension {
                index,
                rows: a.rows(),
                cols: a.cols(),
                expected: m,
            });
        }
    }
    Ok(m)
}

/// `(M^T lambda)_j = sum_k M_kj lambda_k`.
fn transposed_apply(a: &Mat, lambda: &[f64]) -> Vec<f64> {
    (0..a.cols())
        .map(|j| (0..a.rows()).map(|k| a[(k, j)] * lambda[k]).sum())
        .collect()
}

fn residuals(mats: &[Mat], lambda: &[f64]) -> Vec<f64> {
    mats.iter()
        .map(|a| {
            transposed_apply(a, lambda)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Decides `{lambda : margin <= lambda <= 1, M_i^T lambda <= -margin}` and
/// returns a witness rescaled so its largest component is 1.
///
/// Rescaling by a factor of at least one keeps both inequality families
/// satisfied with the same margin, so the upper box only fixes the scale.
pub fn find_lambda(mats: &[Mat], margin: f64) -> Result<Feasibility, CertifyError> {
    let m = validate(mats)?;
    if !(margin > 0.0 && margin < 1.0) {
        return Err(CertifyError::Margin(margin));
    }
    // Solve with a slightly inflated margin so rounding in the pivots cannot
    // push the returned witness across the requested one.
    let solve_margin = (margin * (1.0 + 1e-6)).min(0.5 * (1.0 + margin));

    // Shift lambda = mu + eps, mu >= 0. Rows:
    //   (M_i^T)_j mu <= -eps - eps * (M_i^T 1)_j   for every i, j
    //   mu_j <= 1 - eps
    let ones = vec![1.0; m];
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(mats.len() * m + m);
    for a in mats {
        let col_sums = transposed_apply(a, &ones);
        for j in 0..m {
            let coeffs: Vec<f64> = (0..m).map(|k| a[(k, j)]).collect();
            rows.push((coeffs, -solve_margin - solve_margin * col_sums[j]));
        }
    }
    for j in 0..m {
        let mut coeffs = vec![0.0; m];
        coeffs[j] = 1.0;
        rows.push((coeffs, 1.0 - solve_margin));
    }

    let outcome = phase_one(m, &rows);
    match outcome {
        PhaseOne::Feasible(mu) => {
            let lambda: Vec<f64> = mu.iter().map(|v| v.max(0.0) + solve_margin).collect();
            let top = lambda.iter().cloned().fold(0.0, f64::max);
            let lambda: Vec<f64> = lambda.iter().map(|v| v / top).collect();
            let cert = Certificate {
                residuals: residuals(mats, &lambda),
                lambda,
                margin,
            };
            if check_lambda(mats, &cert) {
                Ok(Feasibility::Feasible(cert))
            } else {
                Ok(Feasibility::Infeasible(Infeasibility {
                    margin,
                    phase1_objective: 0.0,
                }))
            }
        }
        PhaseOne::Infeasible(objective) => Ok(Feasibility::Infeasible(Infeasibility {
            margin,
            phase1_objective: objective,
        })),
    }
}

/// Tries `margin, margin/10, ...` down to [`MIN_MARGIN`] and returns the first
/// feasible outcome, or the infeasibility report at the smallest margin.
pub fn find_lambda_sweep(mats: &[Mat], margin: f64) -> Result<Feasibility, CertifyError> {
    let mut eps = margin;
    loop {
        let out = find_lambda(mats, eps)?;
        if out.is_feasible() || eps <= MIN_MARGIN * (1.0 + 1e-12) {
            return Ok(out);
        }
        eps = (eps / 10.0).max(MIN_MARGIN);
    }
}

/// Re-evaluates the certificate's inequalities by direct products.
pub fn check_lambda(mats: &[Mat], cert: &Certificate) -> bool {
    let Ok(m) = validate(mats) else {
        return false;
    };
    if cert.lambda.len() != m || !(cert.margin > 0.0) {
        return false;
    }
    if cert.lambda.iter().any(|&v| !(v >= cert.margin)) {
        return false;
    }
    mats.iter().all(|a| {
        transposed_apply(a, &cert.lambda)
            .iter()
            .all(|&v| v <= -cert.margin)
    })
}

enum PhaseOne {
    Feasible(Vec<f64>),
    Infeasible(f64),
}

/// Phase-1 simplex for `{x >= 0 : row.x <= rhs}`.
///
/// Column layout: structural `0..n`, slacks `n..n+r`, artificials after that
/// (one per row with negative right-hand side).
fn phase_one(n: usize, rows: &[(Vec<f64>, f64)]) -> PhaseOne {
    let r = rows.len();
    let negative: Vec<usize> = (0..r).filter(|&i| rows[i].1 < 0.0).collect();
    let n_art = negative.len();
    let width = n + r + n_art;
    // tableau rows: [coeffs | rhs]
    let mut tab = vec![vec![0.0; width + 1]; r];
    let mut basis = vec![0usize; r];
    let mut art_idx = 0;
    for (i, (coeffs, rhs)) in rows.iter().enumerate() {
        let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
        for (j, &c) in coeffs.iter().enumerate() {
            tab[i][j] = sign * c;
        }
        tab[i][n + i] = sign;
        tab[i][width] = sign * rhs;
        if *rhs < 0.0 {
            let col = n + r + art_idx;
            tab[i][col] = 1.0;
            basis[i] = col;
            art_idx += 1;
        } else {
            basis[i] = n + i;
        }
    }
    if n_art == 0 {
        return PhaseOne::Feasible(vec![0.0; n]);
    }

    // Objective row: minimise the sum of artificials, expressed in reduced costs.
    let mut obj = vec![0.0; width + 1];
    for &i in &negative {
        for j in 0..=width {
            if j < n + r || j == width {
                obj[j] -= tab[i][j];
            }
        }
    }

    let max_iters = 50 * (width + r) + 1000;
    for _ in 0..max_iters {
        // Bland: lowest-index column with negative reduced cost.
        let Some(enter) = (0..width).find(|&j| obj[j] < -PIVOT_TOL) else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..r {
            let a = tab[i][enter];
            if a > PIVOT_TOL {
                let ratio = tab[i][width] / a;
                let better = ratio < best - 1e-14
                    || (ratio <= best + 1e-14 && leave.is_none_or(|l| basis[i] < basis[l]));
                if better {
                    best = ratio.min(best);
                    leave = Some(i);
                }
            }
        }
        let Some(row) = leave else {
            // Unbounded direction cannot occur for a phase-1 objective bounded below.
            break;
        };
        pivot(&mut tab, &mut obj, row, enter);
        basis[row] = enter;
    }

    let objective = -obj[width];
    if objective > FEAS_TOL {
        return PhaseOne::Infeasible(objective);
    }
    let mut x = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] = tab[i][width];
        }
    }
    PhaseOne::Feasible(x)
}

fn pivot(tab: &mut [Vec<f64>], obj: &mut [f64], row: usize, col: usize) {
    let p = tab[row][col];
    for v in tab[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = tab[row].clone();
    for (i, line) in tab.iter_mut().enumerate() {
        if i == row {
            continue;
        }
        let f = line[col];
        if f != 0.0 {
            for (v, pv) in line.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
    }
    let f = obj[col];
    if f != 0.0 {
        for (v, pv) in obj.iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
    }
}
