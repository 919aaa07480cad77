//! Transportation-specialized simplex (MODI method) on a dense cost matrix.
//!
//! The basis is a spanning tree of the bipartite supply/demand graph.
//! Pivoting uses the most-negative reduced cost; after a run of degenerate
//! pivots it switches to Bland's rule (first negative index, smallest-index
//! leaving cell) to rule out cycling.

use super::TransportError;

pub(crate) struct TransportSolution {
    /// Row-major n x m flow matrix.
    pub flow: Vec<f64>,
    pub value: f64,
    /// Dual potentials for rows and columns (u_i + v_j <= c_ij at optimum).
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

const REDUCED_COST_TOL: f64 = 1e-11;
const DEGENERATE_SWITCH: usize = 64;

pub(crate) fn solve_transportation(
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
) -> Result<TransportSolution, TransportError> {
    let n = supply.len();
    let m = demand.len();
    debug_assert_eq!(cost.len(), n * m);

    let mut flow = vec![0.0f64; n * m];
    let mut basic = vec![false; n * m];

    // Northwest-corner initial basic feasible solution: exactly n+m-1 cells.
    {
        let mut ra: Vec<f64> = supply.to_vec();
        let mut rb: Vec<f64> = demand.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let row_done = ra[i] <= rb[j];
            let t = ra[i].min(rb[j]);
            flow[i * m + j] = t;
            basic[i * m + j] = true;
            ra[i] -= t;
            rb[j] -= t;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if row_done && i < n - 1 {
                i += 1;
            } else if j < m - 1 {
                j += 1;
            } else {
                i += 1;
            }
        }
    }

    // Tree adjacency over nodes: rows 0..n, columns n..n+m.
    let nodes = n + m;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for i in 0..n {
        for j in 0..m {
            if basic[i * m + j] {
                adj[i].push(n + j);
                adj[n + j].push(i);
            }
        }
    }

    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; m];
    let mut visited = vec![false; nodes];
    let mut stack: Vec<usize> = Vec::with_capacity(nodes);
    let mut parent = vec![usize::MAX; nodes];

    let max_pivots = 200 * (n + m) * (n + m) + 10_000;
    let mut degenerate_run = 0usize;

    for _pivot in 0..max_pivots {
        // Potentials from the basis tree (u[0] = 0).
        visited.iter_mut().for_each(|x| *x = false);
        stack.clear();
        stack.push(0);
        visited[0] = true;
        u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for &nb in &adj[node] {
                if !visited[nb] {
                    visited[nb] = true;
                    if node < n {
                        v[nb - n] = cost[node * m + (nb - n)] - u[node];
                    } else {
                        u[nb] = cost[nb * m + (node - n)] - v[node - n];
                    }
                    stack.push(nb);
                }
            }
        }

        // Entering cell.
        let bland = degenerate_run >= DEGENERATE_SWITCH;
        let mut enter: Option<(usize, usize)> = None;
        let mut best = -REDUCED_COST_TOL;
        'scan: for i in 0..n {
            for j in 0..m {
                if basic[i * m + j] {
                    continue;
                }
                let red = cost[i * m + j] - u[i] - v[j];
                if red < best {
                    enter = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = red;
                }
            }
        }
        let (ei, ej) = match enter {
            Some(c) => c,
            None => {
                let value = flow
                    .iter()
                    .zip(cost)
                    .filter(|(f, _)| **f > 0.0)
                    .map(|(f, c)| f * c)
                    .sum();
                return Ok(TransportSolution { flow, value, u, v });
            }
        };

        // Unique tree path from row ei to column n+ej.
        parent.iter_mut().for_each(|x| *x = usize::MAX);
        visited.iter_mut().for_each(|x| *x = false);
        stack.clear();
        stack.push(ei);
        visited[ei] = true;
        while let Some(node) = stack.pop() {
            if node == n + ej {
                break;
            }
            for &nb in &adj[node] {
                if !visited[nb] {
                    visited[nb] = true;
                    parent[nb] = node;
                    stack.push(nb);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = n + ej;
        while node != ei {
            path.push(node);
            node = parent[node];
        }
        path.push(ei);
        path.reverse(); // ei, ..., n+ej

        // Cycle cells: entering cell plus consecutive path pairs; signs
        // alternate, entering cell positive.
        let mut minus_cells: Vec<(usize, usize)> = Vec::new();
        let mut plus_cells: Vec<(usize, usize)> = vec![(ei, ej)];
        for (step, pair) in path.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            let cell = if a < n { (a, b - n) } else { (b, a - n) };
            if step % 2 == 0 {
                minus_cells.push(cell);
            } else {
                plus_cells.push(cell);
            }
        }

        // Leaving cell: minimum flow on the minus cells, smallest index on
        // ties (Bland-style).
        let mut theta = f64::INFINITY;
        let mut leave = minus_cells[0];
        for &(i, j) in &minus_cells {
            let f = flow[i * m + j];
            if f < theta - 1e-15 || (f < theta + 1e-15 && (i, j) < leave) {
                theta = f;
                leave = (i, j);
            }
        }
        theta = theta.max(0.0);

        for &(i, j) in &plus_cells {
            flow[i * m + j] += theta;
        }
        for &(i, j) in &minus_cells {
            flow[i * m + j] -= theta;
            if flow[i * m + j] < 0.0 {
                flow[i * m + j] = 0.0;
            }
        }

        basic[leave.0 * m + leave.1] = false;
        basic[ei * m + ej] = true;
        let (li, lj) = (leave.0, n + leave.1);
        adj[li].retain(|&x| x != lj);
        adj[lj].retain(|&x| x != li);
        adj[ei].push(n + ej);
        adj[n + ej].push(ei);

        if theta <= 1e-15 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
    }
    Err(TransportError::PivotLimit(max_pivots))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_exact() {
        // move 0.3 from row 0 to col 1 at cost 1 each unit
        let supply = [0.7, 0.3];
        let demand = [0.4, 0.6];
        let cost = [0.0, 1.0, 1.0, 0.0];
        let sol = solve_transportation(&supply, &demand, &cost).unwrap();
        assert!((sol.value - 0.3).abs() < 1e-12);
    }

    #[test]
    fn degenerate_supplies() {
        let supply = [0.5, 0.5];
        let demand = [0.5, 0.5];
        let cost = [0.0, 1.0, 1.0, 0.0];
        let sol = solve_transportation(&supply, &demand, &cost).unwrap();
        assert!(sol.value.abs() < 1e-12);
    }

    #[test]
    fn random_marginals_feasible() {
        // fixed pseudo-random instance; checks marginal feasibility
        let n = 7;
        let m = 9;
        let mut state = 42u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut supply: Vec<f64> = (0..n).map(|_| next() + 0.05).collect();
        let s: f64 = supply.iter().sum();
        supply.iter_mut().for_each(|x| *x /= s);
        let mut demand: Vec<f64> = (0..m).map(|_| next() + 0.05).collect();
        let s: f64 = demand.iter().sum();
        demand.iter_mut().for_each(|x| *x /= s);
        let cost: Vec<f64> = (0..n * m).map(|_| next()).collect();
        let sol = solve_transportation(&supply, &demand, &cost).unwrap();
        for i in 0..n {
            let r: f64 = sol.flow[i * m..(i + 1) * m].iter().sum();
            assert!((r - supply[i]).abs() < 1e-9);
        }
        for j in 0..m {
            let c: f64 = (0..n).map(|i| sol.flow[i * m + j]).sum();
            assert!((c - demand[j]).abs() < 1e-9);
        }
        // strong duality
        let dual: f64 = sol.u.iter().zip(&supply).map(|(u, w)| u * w).sum::<f64>()
            + sol.v.iter().zip(&demand).map(|(v, w)| v * w).sum::<f64>();
        assert!((dual - sol.value).abs() < 1e-9);
    }
}
