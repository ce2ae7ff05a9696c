use serde::Serialize;

use crate::error::{Error, Result};

/// Result of a 0/1 knapsack over shot fragments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FragmentSelection {
    /// Chosen fragment indices, ascending.
    pub chosen: Vec<usize>,
    pub value: f64,
    pub total_length: usize,
    pub budget_frames: usize,
}

/// Exact 0/1 knapsack by dynamic programming over frame counts. Among
/// equal-value optima the one that skips later fragments wins.
pub fn knapsack_select(values: &[f64], lengths: &[usize], budget_frames: usize) -> Result<FragmentSelection> {
    if values.len() != lengths.len() {
        return Err(Error::usage(format!(
            "{} fragment values for {} fragment lengths",
            values.len(),
            lengths.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::usage(format!("fragment {i} has a non-finite value")));
    }
    if let Some(i) = lengths.iter().position(|&l| l == 0) {
        return Err(Error::usage(format!("fragment {i} has zero length")));
    }
    let n = values.len();
    let cap = budget_frames;
    let width = cap + 1;
    let mut best = vec![0.0f64; width];
    let mut take = vec![false; n * width];
    for i in 0..n {
        let (v, l) = (values[i], lengths[i]);
        if l > cap {
            continue;
        }
        for c in (l..=cap).rev() {
            let with = best[c - l] + v;
            if with > best[c] {
                best[c] = with;
                take[i * width + c] = true;
            }
        }
    }
    let mut chosen = Vec::new();
    let mut c = cap;
    for i in (0..n).rev() {
        if take[i * width + c] {
            chosen.push(i);
            c -= lengths[i];
        }
    }
    chosen.reverse();
    Ok(FragmentSelection {
        value: chosen.iter().map(|&i| values[i]).sum(),
        total_length: chosen.iter().map(|&i| lengths[i]).sum(),
        chosen,
        budget_frames,
    })
}
