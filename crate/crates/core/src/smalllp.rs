//! Dense two-phase simplex for small linear programs.
//!
//! Intended for master problems with a few hundred rows and columns (the
//! cutting-plane loop in the selection relaxation); not a general-purpose
//! LP code. Minimizes `c.x` subject to row constraints and `x >= 0`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("linear program is infeasible (phase-1 residual {0})")]
    Infeasible(f64),
    #[error("linear program is unbounded below")]
    Unbounded,
    #[error("simplex iteration limit {0} exceeded")]
    IterationLimit(usize),
    #[error("constraint has {got} coefficients, expected {expected}")]
    BadRow { got: usize, expected: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub cmp: Cmp,
    pub rhs: f64,
}

impl Constraint {
    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, cmp: Cmp::Le, rhs }
    }
    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, cmp: Cmp::Ge, rhs }
    }
    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, cmp: Cmp::Eq, rhs }
    }
}

pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

const EPS: f64 = 1e-9;

/// Minimizes `objective . x` over `x >= 0` subject to `rows`.
pub fn solve_min(objective: &[f64], rows: &[Constraint]) -> Result<LpSolution, LpError> {
    let n = objective.len();
    for r in rows {
        if r.coeffs.len() != n {
            return Err(LpError::BadRow { got: r.coeffs.len(), expected: n });
        }
    }
    let m = rows.len();

    // Standard form: flip rows so rhs >= 0, then add slack (Le), surplus
    // (Ge) and artificial variables. Column layout:
    //   [structural 0..n | slack/surplus | artificial]
    let mut slack_cols = 0usize;
    for r in rows {
        if r.cmp != Cmp::Eq {
            slack_cols += 1;
        }
    }
    // Every row gets an artificial so phase 1 starts from an identity basis.
    let total = n + slack_cols + m;
    let mut a = vec![0.0f64; m * total];
    let mut b = vec![0.0f64; m];
    let mut basis = vec![0usize; m];
    let mut slack_at = n;
    for (i, r) in rows.iter().enumerate() {
        let flip = r.rhs < 0.0;
        let sgn = if flip { -1.0 } else { 1.0 };
        for (j, &c) in r.coeffs.iter().enumerate() {
            a[i * total + j] = sgn * c;
        }
        b[i] = sgn * r.rhs;
        let cmp = match (r.cmp, flip) {
            (Cmp::Eq, _) => Cmp::Eq,
            (Cmp::Le, false) | (Cmp::Ge, true) => Cmp::Le,
            (Cmp::Ge, false) | (Cmp::Le, true) => Cmp::Ge,
        };
        match cmp {
            Cmp::Le => {
                a[i * total + slack_at] = 1.0;
                slack_at += 1;
            }
            Cmp::Ge => {
                a[i * total + slack_at] = -1.0;
                slack_at += 1;
            }
            Cmp::Eq => {}
        }
        let art = n + slack_cols + i;
        a[i * total + art] = 1.0;
        basis[i] = art;
    }

    let limit = 50 * (m + total) + 2_000;

    // Phase 1: minimize the sum of artificials.
    let mut c1 = vec![0.0f64; total];
    for j in n + slack_cols..total {
        c1[j] = 1.0;
    }
    let no_block = vec![false; total];
    let phase1 = run_simplex_blocked(&mut a, &mut b, &mut basis, &c1, &no_block, total, m, limit)?;
    if phase1 > EPS {
        return Err(LpError::Infeasible(phase1));
    }
    // Drive any artificial still in the basis out (or zero its row).
    for i in 0..m {
        if basis[i] >= n + slack_cols {
            let mut found = None;
            for j in 0..n + slack_cols {
                if a[i * total + j].abs() > EPS {
                    found = Some(j);
                    break;
                }
            }
            if let Some(j) = found {
                pivot(&mut a, &mut b, total, m, i, j);
                basis[i] = j;
            }
        }
    }

    // Phase 2 with artificial columns disabled.
    let mut c2 = vec![0.0f64; total];
    c2[..n].copy_from_slice(objective);
    let mut blocked = vec![false; total];
    for flag in blocked.iter_mut().skip(n + slack_cols) {
        *flag = true;
    }
    let objective_value =
        run_simplex_blocked(&mut a, &mut b, &mut basis, &c2, &blocked, total, m, limit)?;

    let mut x = vec![0.0f64; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = b[i];
        }
    }
    Ok(LpSolution { x, objective: objective_value })
}

fn pivot(a: &mut [f64], b: &mut [f64], total: usize, m: usize, pr: usize, pc: usize) {
    let piv = a[pr * total + pc];
    for j in 0..total {
        a[pr * total + j] /= piv;
    }
    b[pr] /= piv;
    for i in 0..m {
        if i == pr {
            continue;
        }
        let factor = a[i * total + pc];
        if factor == 0.0 {
            continue;
        }
        for j in 0..total {
            a[i * total + j] -= factor * a[pr * total + j];
        }
        b[i] -= factor * b[pr];
    }
}

#[allow(clippy::too_many_arguments)]
fn run_simplex_blocked(
    a: &mut [f64],
    b: &mut [f64],
    basis: &mut [usize],
    c: &[f64],
    blocked: &[bool],
    total: usize,
    m: usize,
    limit: usize,
) -> Result<f64, LpError> {
    let mut reduced = vec![0.0f64; total];
    for iter in 0..=limit {
        if iter == limit {
            return Err(LpError::IterationLimit(limit));
        }
        // reduced costs: c_j - c_B . A_j
        for (j, r) in reduced.iter_mut().enumerate() {
            *r = c[j];
        }
        for i in 0..m {
            let cb = c[basis[i]];
            if cb == 0.0 {
                continue;
            }
            for j in 0..total {
                reduced[j] -= cb * a[i * total + j];
            }
        }
        // Bland's rule: smallest-index entering column.
        let mut enter = None;
        for j in 0..total {
            if !blocked[j] && reduced[j] < -EPS {
                enter = Some(j);
                break;
            }
        }
        let pc = match enter {
            Some(j) => j,
            None => {
                let mut value = 0.0;
                for i in 0..m {
                    value += c[basis[i]] * b[i];
                }
                return Ok(value);
            }
        };
        // Ratio test, smallest basis index on ties.
        let mut pr = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let col = a[i * total + pc];
            if col > EPS {
                let ratio = b[i] / col;
                let better = match pr {
                    None => true,
                    Some(r) => {
                        ratio < best - EPS || (ratio < best + EPS && basis[i] < basis[r as usize])
                    }
                };
                if better {
                    best = ratio;
                    pr = Some(i as u32);
                }
            }
        }
        let pr = pr.ok_or(LpError::Unbounded)? as usize;
        pivot(a, b, total, m, pr, pc);
        basis[pr] = pc;
    }
    unreachable!()
}
