//! Exhaustive contiguous-partition oracle for 1-D k-means.
//!
//! Enumerates every way to cut the sorted data into at most `k` contiguous
//! groups. Exponential, so only for tiny inputs.

#![allow(dead_code)]

/// Least common multiple of 1..=10; every group mean of up to 10 integers has
/// a denominator dividing it, so `LCM · cost` is an integer.
pub const COST_SCALE: i128 = 2520;

fn sse(group: &[f64]) -> f64 {
    let mean = group.iter().sum::<f64>() / group.len() as f64;
    group.iter().map(|x| (x - mean) * (x - mean)).sum()
}

/// `COST_SCALE · Σ(x - mean)²` for integer data, exactly.
pub fn scaled_sse(group: &[i64]) -> i128 {
    let n = group.len() as i128;
    assert!(n > 0 && COST_SCALE % n == 0);
    let s: i128 = group.iter().map(|&x| x as i128).sum();
    let s2: i128 = group.iter().map(|&x| (x as i128) * (x as i128)).sum();
    // Σx² - (Σx)²/n, scaled.
    (COST_SCALE * s2) - (COST_SCALE / n) * s * s
}

fn for_each_partition(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    // cuts: exclusive group ends, last is always n.
    fn rec(start: usize, n: usize, left: usize, ends: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if start == n {
            f(ends);
            return;
        }
        if left == 0 {
            return;
        }
        for end in (start + 1)..=n {
            ends.push(end);
            rec(end, n, left - 1, ends, f);
            ends.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}

/// Minimum within-cluster SSE over all contiguous partitions into ≤ k groups.
pub fn best_cost(values: &[f64], k: usize) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = f64::INFINITY;
    for_each_partition(sorted.len(), k, &mut |ends| {
        let mut start = 0;
        let mut c = 0.0;
        for &e in ends {
            c += sse(&sorted[start..e]);
            start = e;
        }
        best = best.min(c);
    });
    best
}

/// Exact integer version of [`best_cost`], scaled by [`COST_SCALE`].
pub fn best_scaled_cost(values: &[i64], k: usize) -> i128 {
    let mut sorted = values.to_vec();
    sorted.sort();
    let mut best = i128::MAX;
    for_each_partition(sorted.len(), k, &mut |ends| {
        let mut start = 0;
        let mut c = 0;
        for &e in ends {
            c += scaled_sse(&sorted[start..e]);
            start = e;
        }
        best = best.min(c);
    });
    best
}

/// Exact scaled cost of an arbitrary labelling of integer data.
pub fn scaled_cost_of_labels(values: &[i64], labels: &[usize]) -> i128 {
    let groups = labels.iter().copied().max().map_or(0, |m| m + 1);
    (0..groups)
        .map(|g| {
            let members: Vec<i64> = values
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == g)
                .map(|(v, _)| *v)
                .collect();
            if members.is_empty() {
                0
            } else {
                scaled_sse(&members)
            }
        })
        .sum()
}

/// Cost of a labelling of real data, each group summed in sorted order
/// exactly as [`best_cost`] sums it.
pub fn cost_of_labels(values: &[f64], labels: &[usize]) -> f64 {
    let groups = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for g in 0..groups {
        let mut members: Vec<f64> = values
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == g)
            .map(|(v, _)| *v)
            .collect();
        if !members.is_empty() {
            members.sort_by(f64::total_cmp);
            total += sse(&members);
        }
    }
    total
}
