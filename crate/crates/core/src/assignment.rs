//! Optimal linear assignment with optional per-pair gating.
//!
//! The solver is the shortest-augmenting-path form of Jonker-Volgenant: rows are
//! inserted one at a time and each insertion runs a Dijkstra search over reduced
//! costs, keeping dual potentials feasible throughout. Gated problems are first
//! embedded into a square matrix with per-row and per-column "leave unmatched"
//! slots, priced so that any extra match outweighs every possible cost
//! difference. That makes the optimum maximum-cardinality first and
//! minimum-cost second.

use thiserror::Error;

use crate::geometry::CostMatrix;

/// Largest problem `solve_bruteforce` will enumerate.
pub const BRUTEFORCE_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignmentError {
    #[error("matrix {rows}x{cols} exceeds the enumeration bound of {limit}")]
    TooLarge { rows: usize, cols: usize, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignmentResult {
    /// `(row, col)` pairs sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
    /// Sum of matched entries, accumulated in row order.
    pub total_cost: f64,
}

impl AssignmentResult {
    fn from_matches(cost: &CostMatrix, mut matches: Vec<(usize, usize)>) -> Self {
        matches.sort_unstable();
        let mut row_used = vec![false; cost.rows()];
        let mut col_used = vec![false; cost.cols()];
        let mut total_cost = 0.0;
        for &(i, j) in &matches {
            row_used[i] = true;
            col_used[j] = true;
            total_cost += cost.get(i, j);
        }
        Self {
            matches,
            unmatched_rows: (0..cost.rows()).filter(|&i| !row_used[i]).collect(),
            unmatched_cols: (0..cost.cols()).filter(|&j| !col_used[j]).collect(),
            total_cost,
        }
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Column matched to `row`, if any.
    pub fn col_for_row(&self, row: usize) -> Option<usize> {
        self.matches
            .binary_search_by_key(&row, |&(i, _)| i)
            .ok()
            .map(|k| self.matches[k].1)
    }
}

/// Minimum-cost maximum-cardinality assignment. Entries above `gate` are never matched.
pub fn solve(cost: &CostMatrix, gate: Option<f64>) -> AssignmentResult {
    match gate {
        Some(g) => solve_masked(cost, |i, j| cost.get(i, j) <= g),
        None => solve_masked(cost, |_, _| true),
    }
}

/// Like [`solve`], with an arbitrary predicate deciding which pairs may be matched.
pub fn solve_masked(cost: &CostMatrix, allowed: impl Fn(usize, usize) -> bool) -> AssignmentResult {
    let (rows, cols) = (cost.rows(), cost.cols());
    if rows == 0 || cols == 0 {
        return AssignmentResult::from_matches(cost, Vec::new());
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut all_allowed = true;
    for i in 0..rows {
        for j in 0..cols {
            if allowed(i, j) {
                let c = cost.get(i, j);
                lo = lo.min(c);
                hi = hi.max(c);
            } else {
                all_allowed = false;
            }
        }
    }
    if lo == f64::INFINITY {
        return AssignmentResult::from_matches(cost, Vec::new());
    }

    if all_allowed {
        let matches = if rows <= cols {
            shortest_augmenting_path(rows, cols, |i, j| cost.get(i, j))
                .into_iter()
                .enumerate()
                .collect()
        } else {
            shortest_augmenting_path(cols, rows, |i, j| cost.get(j, i))
                .into_iter()
                .enumerate()
                .map(|(j, i)| (i, j))
                .collect()
        };
        return AssignmentResult::from_matches(cost, matches);
    }

    // Square embedding: [real | row slack]
    //                   [col slack | zeros]
    let slack = (hi - lo) * rows.min(cols) as f64 + 1.0;
    let n = rows + cols;
    let expanded = |i: usize, j: usize| -> f64 {
        match (i < rows, j < cols) {
            (true, true) => {
                if allowed(i, j) {
                    cost.get(i, j) - lo
                } else {
                    f64::INFINITY
                }
            }
            (true, false) => {
                if j - cols == i {
                    slack
                } else {
                    f64::INFINITY
                }
            }
            (false, true) => {
                if i - rows == j {
                    slack
                } else {
                    f64::INFINITY
                }
            }
            (false, false) => 0.0,
        }
    };
    let col_for_row = shortest_augmenting_path(n, n, expanded);
    let matches = col_for_row
        .into_iter()
        .take(rows)
        .enumerate()
        .filter(|&(_, j)| j < cols)
        .collect();
    AssignmentResult::from_matches(cost, matches)
}

/// Core solver for `nr <= nc`. Returns the column assigned to each row.
///
/// Infinite entries are forbidden; the caller guarantees a feasible full-row assignment.
fn shortest_augmenting_path(nr: usize, nc: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(nr <= nc);
    const NONE: usize = usize::MAX;

    let mut u = vec![0.0f64; nr];
    let mut v = vec![0.0f64; nc];
    let mut col4row = vec![NONE; nr];
    let mut row4col = vec![NONE; nc];
    let mut path = vec![NONE; nc];
    let mut shortest = vec![f64::INFINITY; nc];
    let mut visited_rows = vec![false; nr];
    let mut visited_cols = vec![false; nc];
    let mut remaining: Vec<usize> = Vec::with_capacity(nc);

    for cur_row in 0..nr {
        shortest.fill(f64::INFINITY);
        visited_rows.fill(false);
        visited_cols.fill(false);
        remaining.clear();
        remaining.extend((0..nc).rev());

        let mut min_val = 0.0;
        let mut i = cur_row;
        let sink = loop {
            visited_rows[i] = true;
            let mut lowest = f64::INFINITY;
            let mut index = NONE;
            for (it, &j) in remaining.iter().enumerate() {
                let reduced = min_val + cost(i, j) - u[i] - v[j];
                if reduced < shortest[j] {
                    path[j] = i;
                    shortest[j] = reduced;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == NONE) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            assert!(min_val.is_finite(), "assignment problem is infeasible");
            let j = remaining.swap_remove(index);
            visited_cols[j] = true;
            if row4col[j] == NONE {
                break j;
            }
            i = row4col[j];
        };

        u[cur_row] += min_val;
        for r in 0..nr {
            if visited_rows[r] && r != cur_row {
                u[r] += min_val - shortest[col4row[r]];
            }
        }
        for c in 0..nc {
            if visited_cols[c] {
                v[c] -= min_val - shortest[c];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            std::mem::swap(&mut col4row[r], &mut j);
            if r == cur_row {
                break;
            }
        }
    }
    col4row
}

/// Exhaustive reference solver for small matrices.
pub fn solve_bruteforce(cost: &CostMatrix, gate: Option<f64>) -> Result<AssignmentResult, AssignmentError> {
    let (rows, cols) = (cost.rows(), cost.cols());
    if rows.max(cols) > BRUTEFORCE_LIMIT {
        return Err(AssignmentError::TooLarge {
            rows,
            cols,
            limit: BRUTEFORCE_LIMIT,
        });
    }
    let allowed = |i: usize, j: usize| gate.is_none_or(|g| cost.get(i, j) <= g);

    struct Search<'a, F> {
        cost: &'a CostMatrix,
        allowed: F,
        col_used: Vec<bool>,
        current: Vec<(usize, usize)>,
        best: Vec<(usize, usize)>,
        best_key: (usize, f64),
    }

    impl<F: Fn(usize, usize) -> bool> Search<'_, F> {
        fn visit(&mut self, row: usize, acc: f64) {
            if row == self.cost.rows() {
                let key = (self.current.len(), acc);
                if key.0 > self.best_key.0 || (key.0 == self.best_key.0 && key.1 < self.best_key.1) {
                    self.best_key = key;
                    self.best = self.current.clone();
                }
                return;
            }
            self.visit(row + 1, acc);
            for col in 0..self.cost.cols() {
                if !self.col_used[col] && (self.allowed)(row, col) {
                    self.col_used[col] = true;
                    self.current.push((row, col));
                    self.visit(row + 1, acc + self.cost.get(row, col));
                    self.current.pop();
                    self.col_used[col] = false;
                }
            }
        }
    }

    let mut search = Search {
        cost,
        allowed,
        col_used: vec![false; cols],
        current: Vec::new(),
        best: Vec::new(),
        best_key: (0, f64::INFINITY),
    };
    search.visit(0, 0.0);
    Ok(AssignmentResult::from_matches(cost, search.best))
}
