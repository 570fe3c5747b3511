//! Automatic sparsity threshold by exact one-dimensional k-means.

use nalgebra::DVector;

/// Upper bound on the number of clusters considered.
pub const MAX_CLUSTERS: usize = 5;

/// Optimal partition of sorted values into `k` contiguous clusters.
/// Returns the cluster boundaries (exclusive ends) and the total SSE.
pub(crate) fn kmeans_1d(sorted: &[f64], k: usize) -> (Vec<usize>, f64) {
    let n = sorted.len();
    assert!(k >= 1 && k <= n);
    let mut pre = vec![0.0; n + 1];
    let mut pre2 = vec![0.0; n + 1];
    for (i, &x) in sorted.iter().enumerate() {
        pre[i + 1] = pre[i] + x;
        pre2[i + 1] = pre2[i] + x * x;
    }
    // within-cluster SSE of sorted[a..b]
    let cost = |a: usize, b: usize| {
        let m = (b - a) as f64;
        let s = pre[b] - pre[a];
        (pre2[b] - pre2[a] - s * s / m).max(0.0)
    };
    // dp[j][b]: best SSE splitting sorted[..b] into j+1 clusters
    let mut dp = vec![vec![f64::INFINITY; n + 1]; k];
    let mut arg = vec![vec![0usize; n + 1]; k];
    for b in 1..=n {
        dp[0][b] = cost(0, b);
    }
    for j in 1..k {
        for b in (j + 1)..=n {
            for a in j..b {
                let v = dp[j - 1][a] + cost(a, b);
                if v < dp[j][b] {
                    dp[j][b] = v;
                    arg[j][b] = a;
                }
            }
        }
    }
    let mut ends = vec![n; k];
    let mut b = n;
    for j in (1..k).rev() {
        let a = arg[j][b];
        ends[j - 1] = a;
        b = a;
    }
    (ends, dp[k - 1][n])
}

/// Cluster `|c|`, pick the number of clusters by BIC and zero every entry
/// whose magnitude does not exceed the largest member of the cluster nearest
/// zero. Returns the threshold and the sparsified vector.
pub fn auto_threshold(c: &DVector<f64>) -> (f64, DVector<f64>) {
    let mut mags: Vec<f64> = c.iter().map(|x| x.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let n = mags.len();
    let mut distinct = mags.clone();
    distinct.dedup();
    let k_max = MAX_CLUSTERS.min((distinct.len().saturating_sub(1)).max(1)).min(n.max(1));
    if n == 0 || k_max == 1 {
        return (0.0, c.clone());
    }
    let scale = mags[n - 1];
    let floor = n as f64 * (1e-12 * scale).powi(2);
    let nf = n as f64;
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for k in 1..=k_max {
        let (ends, sse) = kmeans_1d(&mags, k);
        let bic = nf * (sse.max(floor) / nf).ln() + 2.0 * k as f64 * nf.ln();
        if best.as_ref().is_none_or(|(b, _, _)| bic < *b) {
            best = Some((bic, k, ends));
        }
    }
    let (_, k, ends) = best.expect("at least one candidate");
    if k == 1 {
        return (0.0, c.clone());
    }
    let tau = mags[ends[0] - 1];
    let sparse = c.map(|x| if x.abs() <= tau { 0.0 } else { x });
    (tau, sparse)
}
