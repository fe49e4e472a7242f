#![allow(dead_code)]

use proptest::prelude::*;
use regalign_core::{BBox, ObjectRegionPair, ScoreMatrix};

pub fn arb_box() -> impl Strategy<Value = BBox> {
    (0u32..999, 0u32..999, 1u32..400, 1u32..400).prop_map(|(x, y, w, h)| {
        BBox::new(
            x,
            y,
            (x + w).min(999).max(x + 1),
            (y + h).min(999).max(y + 1),
        )
        .unwrap()
    })
}

pub fn arb_name() -> impl Strategy<Value = String> {
    "[a-z]{1,6}( [a-z]{1,6})?"
}

pub fn arb_pairs(
    max_pairs: usize,
    max_regions: usize,
) -> impl Strategy<Value = Vec<ObjectRegionPair>> {
    proptest::collection::vec(
        (
            arb_name(),
            proptest::collection::vec(arb_box(), 1..=max_regions),
        ),
        1..=max_pairs,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(n, b)| ObjectRegionPair::new(n, b))
            .collect()
    })
}

pub fn arb_matrix(max: usize) -> impl Strategy<Value = ScoreMatrix> {
    (0..=max, 0..=max).prop_flat_map(|(r, c)| {
        proptest::collection::vec(0.0f64..=1.0, r * c)
            .prop_map(move |s| ScoreMatrix::new(r, c, s).unwrap())
    })
}

/// Exhaustive maximum over all injective assignments, summed in prediction
/// order.
pub fn brute_force_max(s: &ScoreMatrix) -> f64 {
    fn go(
        s: &ScoreMatrix,
        row: usize,
        used: &mut Vec<bool>,
        picked: &mut Vec<Option<usize>>,
        best: &mut f64,
    ) {
        let (rows, cols) = (s.rows(), s.cols());
        let matched = picked.iter().filter(|p| p.is_some()).count();
        let remaining_rows = rows - row;
        if row == rows {
            if matched == rows.min(cols) {
                let total: f64 = picked
                    .iter()
                    .enumerate()
                    .filter_map(|(r, c)| c.map(|c| s.get(r, c)))
                    .sum();
                if total > *best {
                    *best = total;
                }
            }
            return;
        }
        // skipping a row is only allowed while enough rows remain to fill min(N, M)
        if matched + remaining_rows > rows.min(cols) {
            picked.push(None);
            go(s, row + 1, used, picked, best);
            picked.pop();
        }
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                picked.push(Some(c));
                go(s, row + 1, used, picked, best);
                picked.pop();
                used[c] = false;
            }
        }
    }
    let mut best = 0.0;
    go(s, 0, &mut vec![false; s.cols()], &mut Vec::new(), &mut best);
    best
}
