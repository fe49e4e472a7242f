//! Optimal one-to-one matching of predictions to ground truths by IoU.
//!
//! The solver is the O(n^3) shortest-augmenting-path form of the Hungarian
//! method, run on costs `1 - score` over a square matrix padded with score 0.
//! Among all optimal assignments the one with the lexicographically smallest
//! ground-truth sequence (in prediction order, unmatched predictions ranking
//! after every ground truth) is returned, so results are stable under ties.

use alloc::vec;
use alloc::vec::Vec;

/// Reduced costs at or below this are treated as tight (zero).
const TIGHT_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssignmentError {
    #[error("score matrix has {len} entries, expected {rows}x{cols}")]
    Shape {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("score {value} at ({row}, {col}) is outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
}

/// Row-major scores: rows are predictions, columns are ground truths.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, scores: Vec<f64>) -> Result<Self, AssignmentError> {
        if scores.len() != rows * cols {
            return Err(AssignmentError::Shape {
                rows,
                cols,
                len: scores.len(),
            });
        }
        for (idx, &value) in scores.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(AssignmentError::OutOfRange {
                    row: idx / cols.max(1),
                    col: idx % cols.max(1),
                    value,
                });
            }
        }
        Ok(Self { rows, cols, scores })
    }

    /// Builds a matrix from a scoring function; scores are clamped into `[0, 1]`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut scores = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                scores.push(f(r, c).clamp(0.0, 1.0));
            }
        }
        Self { rows, cols, scores }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Match {
    pub prediction: usize,
    pub ground_truth: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// Sorted by prediction index.
    pub matches: Vec<Match>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_ground_truths: Vec<usize>,
}

impl Assignment {
    /// Sum of matched scores, accumulated in prediction order.
    pub fn total_score(&self) -> f64 {
        self.matches.iter().map(|m| m.score).sum()
    }
}

pub fn hungarian_match(s: &ScoreMatrix) -> Assignment {
    let (rows, cols) = (s.rows, s.cols);
    if rows == 0 || cols == 0 {
        return Assignment {
            matches: Vec::new(),
            unmatched_predictions: (0..rows).collect(),
            unmatched_ground_truths: (0..cols).collect(),
        };
    }

    let n = rows.max(cols);
    let mut cost = vec![1.0; n * n];
    for r in 0..rows {
        for c in 0..cols {
            cost[r * n + c] = 1.0 - s.get(r, c);
        }
    }

    let solved = Solver::new(&cost, n).solve();
    let col_of_row = lexicographic_minimum(&cost, n, &solved);

    let mut out = Assignment::default();
    let mut gt_used = vec![false; cols];
    for (r, &c) in col_of_row.iter().enumerate().take(rows) {
        if c < cols {
            gt_used[c] = true;
            out.matches.push(Match {
                prediction: r,
                ground_truth: c,
                score: s.get(r, c),
            });
        } else {
            out.unmatched_predictions.push(r);
        }
    }
    out.unmatched_ground_truths = (0..cols).filter(|&c| !gt_used[c]).collect();
    out
}

struct Solved {
    /// Row potentials, 1-indexed (slot 0 unused).
    u: Vec<f64>,
    /// Column potentials, 1-indexed.
    v: Vec<f64>,
    col_of_row: Vec<usize>,
}

struct Solver<'a> {
    cost: &'a [f64],
    n: usize,
}

impl<'a> Solver<'a> {
    fn new(cost: &'a [f64], n: usize) -> Self {
        Self { cost, n }
    }

    fn solve(&self) -> Solved {
        let n = self.n;
        let mut u = vec![0.0; n + 1];
        let mut v = vec![0.0; n + 1];
        // row_of_col[j] = row matched to column j (1-indexed, 0 = none)
        let mut row_of_col = vec![0usize; n + 1];
        let mut way = vec![0usize; n + 1];
        let mut minv = vec![0.0; n + 1];
        let mut used = vec![false; n + 1];

        for i in 1..=n {
            row_of_col[0] = i;
            let mut j0 = 0;
            minv.fill(f64::INFINITY);
            used.fill(false);
            loop {
                used[j0] = true;
                let i0 = row_of_col[j0];
                let mut delta = f64::INFINITY;
                let mut j1 = 0;
                for j in 1..=n {
                    if used[j] {
                        continue;
                    }
                    let cur = self.cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
                for j in 0..=n {
                    if used[j] {
                        u[row_of_col[j]] += delta;
                        v[j] -= delta;
                    } else {
                        minv[j] -= delta;
                    }
                }
                j0 = j1;
                if row_of_col[j0] == 0 {
                    break;
                }
            }
            loop {
                let j1 = way[j0];
                row_of_col[j0] = row_of_col[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }

        let mut col_of_row = vec![0usize; n];
        for j in 1..=n {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
        Solved { u, v, col_of_row }
    }
}

/// Every optimal assignment is a perfect matching on the tight edges of an
/// optimal dual. Walk rows in order and give each the smallest column that
/// still admits a perfect tight matching for the remaining rows.
fn lexicographic_minimum(cost: &[f64], n: usize, solved: &Solved) -> Vec<usize> {
    let tight =
        |r: usize, c: usize| cost[r * n + c] - solved.u[r + 1] - solved.v[c + 1] <= TIGHT_EPS;

    let mut col_of_row = solved.col_of_row.clone();
    let mut row_of_col = vec![0usize; n];
    for (r, &c) in col_of_row.iter().enumerate() {
        row_of_col[c] = r;
    }

    // next_col[r]: column row r moves to when a swap cycle passes through it
    let mut next_col = vec![usize::MAX; n];
    let mut reached = vec![false; n];
    let mut queue = Vec::with_capacity(n);

    for i in 0..n {
        let target = col_of_row[i];
        if (0..target).all(|c| !tight(i, c)) {
            continue;
        }
        // rows (other than i and the fixed prefix) that can end a cycle
        // by ultimately taking `target`
        reached.fill(false);
        queue.clear();
        let mut head = 0;
        for r in i + 1..n {
            if tight(r, target) {
                reached[r] = true;
                next_col[r] = target;
                queue.push(r);
            }
        }
        while head < queue.len() {
            let owner = queue[head];
            head += 1;
            let freed = col_of_row[owner];
            for r in i + 1..n {
                if !reached[r] && tight(r, freed) {
                    reached[r] = true;
                    next_col[r] = freed;
                    queue.push(r);
                }
            }
        }

        let best = (0..target).find(|&c| tight(i, c) && reached[row_of_col[c]]);
        let Some(best) = best else {
            continue;
        };

        let mut chain = Vec::new();
        let mut r = row_of_col[best];
        loop {
            chain.push(r);
            let c = next_col[r];
            if c == target {
                break;
            }
            r = row_of_col[c];
        }
        col_of_row[i] = best;
        row_of_col[best] = i;
        for &r in &chain {
            let c = next_col[r];
            col_of_row[r] = c;
            row_of_col[c] = r;
        }
    }
    col_of_row
}
