//! The pairwise-dispersion objective `Σ_{i<j} |x_i - x_j|` and a smoothed
//! form used by the solver.

/// `Σ_{i<j} |x_i - x_j|` in O(N log N).
///
/// After sorting ascending, element `k` (0-based) is larger than `k` others
/// and smaller than `N - 1 - k`, so the sum is `Σ_k (2k - N + 1) x_(k)`.
pub fn pairwise_dispersion(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let Some(&min) = sorted.first() else {
        return 0.0;
    };
    // the coefficients sum to zero, so offsetting by the minimum changes
    // nothing but keeps equal values from leaving rounding residue
    let n = sorted.len() as f64;
    let sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, x)| (2.0 * k as f64 - n + 1.0) * (x - min))
        .sum();
    sum.max(0.0)
}

/// Dispersion with every `|·|` replaced by the Huber function of width `s`:
/// `x² / 2s` for `|x| ≤ s` and `|x| - s/2` beyond. Within `N(N-1)s/4` of the
/// exact value and continuously differentiable.
#[derive(Debug, Clone)]
pub struct SmoothedDispersion {
    pub value: f64,
    /// Partial derivatives with respect to each value.
    pub gradient: Vec<f64>,
    /// For each value, how many others lie within `s` of it; the
    /// diagonal of the smoothed Hessian is this count over `s`.
    pub neighbours: Vec<usize>,
}

/// Evaluates the smoothed dispersion, its gradient and neighbour counts in
/// O(N log N) using prefix sums over the sorted values.
pub fn smoothed_dispersion(values: &[f64], s: f64) -> SmoothedDispersion {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut prefix = vec![0.0; n + 1];
    let mut prefix_sq = vec![0.0; n + 1];
    for (k, x) in sorted.iter().enumerate() {
        prefix[k + 1] = prefix[k] + x;
        prefix_sq[k + 1] = prefix_sq[k] + x * x;
    }
    let range_sum = |p: &[f64], a: usize, b: usize| p[b] - p[a];

    let mut value = 0.0;
    let mut gradient = vec![0.0; n];
    let mut neighbours = vec![0; n];
    for (k, &x) in sorted.iter().enumerate() {
        // sorted[lo..k] are within s below x, sorted[..lo] further below;
        // sorted[k+1..hi] within s above, sorted[hi..] further above
        let lo = sorted[..k].partition_point(|&y| x - y > s);
        let hi = k + 1 + sorted[k + 1..].partition_point(|&y| y - x <= s);
        let (far_below, near_below) = (lo as f64, (k - lo) as f64);
        let (near_above, far_above) = ((hi - k - 1) as f64, (n - hi) as f64);

        // value: count each pair once, from its upper element
        let sum_far = range_sum(&prefix, 0, lo);
        value += far_below * x - sum_far - far_below * s / 2.0;
        let sum_near = range_sum(&prefix, lo, k);
        let sq_near = range_sum(&prefix_sq, lo, k);
        value += (near_below * x * x - 2.0 * x * sum_near + sq_near) / (2.0 * s);

        // gradient: d/dx of Σ_j h(x - x_j)
        let sum_above = range_sum(&prefix, k + 1, hi);
        let g = far_below - far_above + (near_below * x - sum_near) / s + (near_above * x - sum_above) / s;
        gradient[order[k]] = g;
        neighbours[order[k]] = hi - lo - 1;
    }
    SmoothedDispersion {
        value,
        gradient,
        neighbours,
    }
}
