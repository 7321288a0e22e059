//! Transportation simplex (northwest-corner start, u–v potentials).

/// Optimal transportation plan with its dual potentials.
///
/// Potentials satisfy `u[i] + v[j] <= cost[i][j]` with equality on every
/// basic cell.
#[derive(Debug, Clone)]
pub struct Transport {
    pub flow: Vec<Vec<f64>>,
    pub cost: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn solve(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Transport {
    let (m, n) = (supply.len(), demand.len());
    assert!(m > 0 && n > 0, "transportation problem needs sources and sinks");
    let scale = cost.iter().flatten().fold(0.0f64, |a, &c| a.max(c.abs())).max(1.0);
    let tol = 1e-13 * scale;

    let mut flow = vec![vec![0.0; n]; m];
    let mut basic = vec![vec![false; n]; m];
    let (mut rs, mut rt) = (supply.to_vec(), demand.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        basic[i][j] = true;
        if i == m - 1 && j == n - 1 {
            flow[i][j] = (0.5 * (rs[i] + rt[j])).max(0.0);
            break;
        }
        if (rs[i] <= rt[j] && i < m - 1) || j == n - 1 {
            let x = rs[i].max(0.0);
            flow[i][j] = x;
            rt[j] -= x;
            rs[i] = 0.0;
            i += 1;
        } else {
            let x = rt[j].max(0.0);
            flow[i][j] = x;
            rs[i] -= x;
            rt[j] = 0.0;
            j += 1;
        }
    }

    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let max_iter = 20 * (m + n) * (m + n) * (m * n).max(1) + 1000;
    for iter in 0..max_iter {
        potentials(&basic, cost, &mut u, &mut v);
        // Dantzig pricing, switching to first-improving after many pivots
        let bland = iter > 10 * m * n + 100;
        let mut enter: Option<(usize, usize, f64)> = None;
        'scan: for r in 0..m {
            for c in 0..n {
                if basic[r][c] {
                    continue;
                }
                let red = cost[r][c] - u[r] - v[c];
                if red < -tol && enter.is_none_or(|(_, _, best)| red < best) {
                    enter = Some((r, c, red));
                    if bland {
                        break 'scan;
                    }
                }
            }
        }
        let Some((er, ec, _)) = enter else {
            let total = (0..m).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| flow[r][c] * cost[r][c]).sum();
            return Transport { flow, cost: total, u, v };
        };
        let path = tree_path(&basic, m, n, er, ec);
        // path cells alternate -, +, -, ... starting from the cell at column ec
        let mut theta = f64::INFINITY;
        let mut leave = None;
        for (k, &(r, c)) in path.iter().enumerate() {
            if k % 2 == 0 && flow[r][c] < theta {
                theta = flow[r][c];
                leave = Some((r, c));
            }
        }
        let (lr, lc) = leave.expect("cycle has a decreasing cell");
        flow[er][ec] = theta;
        basic[er][ec] = true;
        for (k, &(r, c)) in path.iter().enumerate() {
            if k % 2 == 0 {
                flow[r][c] -= theta;
            } else {
                flow[r][c] += theta;
            }
        }
        basic[lr][lc] = false;
        flow[lr][lc] = 0.0;
    }
    panic!("transportation simplex failed to terminate");
}

fn potentials(basic: &[Vec<bool>], cost: &[Vec<f64>], u: &mut [f64], v: &mut [f64]) {
    let (m, n) = (u.len(), v.len());
    let mut ru = vec![false; m];
    let mut rv = vec![false; n];
    u[0] = 0.0;
    ru[0] = true;
    let mut stack = vec![(true, 0usize)];
    while let Some((is_row, k)) = stack.pop() {
        if is_row {
            for c in 0..n {
                if basic[k][c] && !rv[c] {
                    v[c] = cost[k][c] - u[k];
                    rv[c] = true;
                    stack.push((false, c));
                }
            }
        } else {
            for r in 0..m {
                if basic[r][k] && !ru[r] {
                    u[r] = cost[r][k] - v[k];
                    ru[r] = true;
                    stack.push((true, r));
                }
            }
        }
    }
    debug_assert!(ru.iter().all(|&x| x) && rv.iter().all(|&x| x), "basis is a spanning tree");
}

/// Basic cells on the tree path from column `ec` to row `er`.
fn tree_path(basic: &[Vec<bool>], m: usize, n: usize, er: usize, ec: usize) -> Vec<(usize, usize)> {
    // nodes: rows 0..m, columns m..m+n
    let mut parent = vec![usize::MAX; m + n];
    let mut seen = vec![false; m + n];
    let start = m + ec;
    seen[start] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == er {
            break;
        }
        let neighbours: Vec<usize> = if node < m {
            (0..n).filter(|&c| basic[node][c]).map(|c| m + c).collect()
        } else {
            (0..m).filter(|&r| basic[r][node - m]).collect()
        };
        for nb in neighbours {
            if !seen[nb] {
                seen[nb] = true;
                parent[nb] = node;
                queue.push_back(nb);
            }
        }
    }
    let mut cells = Vec::new();
    let mut node = er;
    while node != start {
        let p = parent[node];
        let cell = if node < m { (node, p - m) } else { (p, node - m) };
        cells.push(cell);
        node = p;
    }
    cells.reverse();
    cells
}
