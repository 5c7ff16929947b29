//! Kernel maximum mean discrepancy between window sets.

/// Unbiased RBF-kernel MMD^2 estimate, reported as `max(0, estimate)`.
/// `bandwidth` is the squared-distance scale `h` in
/// `k(x, y) = exp(-||x - y||^2 / h)`; `None` selects the median heuristic
/// over the pooled sample. Inputs are canonically sorted first, so the
/// result is bit-identical for permuted inputs.
pub fn mmd(samples_a: &[Vec<f64>], samples_b: &[Vec<f64>], bandwidth: Option<f64>) -> f64 {
    assert!(
        samples_a.len() >= 2 && samples_b.len() >= 2,
        "MMD needs at least 2 samples per side"
    );
    let a = sorted(samples_a);
    let b = sorted(samples_b);
    let h = bandwidth.unwrap_or_else(|| median_heuristic(&a, &b));

    let m = a.len() as f64;
    let n = b.len() as f64;
    let mut kaa = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            if i != j {
                kaa += kernel(a[i], a[j], h);
            }
        }
    }
    let mut kbb = 0.0;
    for i in 0..b.len() {
        for j in 0..b.len() {
            if i != j {
                kbb += kernel(b[i], b[j], h);
            }
        }
    }
    let mut kab = 0.0;
    for x in &a {
        for y in &b {
            kab += kernel(x, y, h);
        }
    }
    let est = kaa / (m * (m - 1.0)) + kbb / (n * (n - 1.0)) - 2.0 * kab / (m * n);
    est.max(0.0)
}

/// Median pairwise squared distance over the pooled sample.
pub fn median_heuristic(a: &[&Vec<f64>], b: &[&Vec<f64>]) -> f64 {
    let pooled: Vec<&Vec<f64>> = a.iter().chain(b.iter()).copied().collect();
    let mut dists = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            dists.push(sq_dist(pooled[i], pooled[j]));
        }
    }
    dists.sort_by(|x, y| x.total_cmp(y));
    let med = dists[dists.len() / 2];
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

fn sorted(samples: &[Vec<f64>]) -> Vec<&Vec<f64>> {
    let mut refs: Vec<&Vec<f64>> = samples.iter().collect();
    refs.sort_by(|x, y| {
        for (a, b) in x.iter().zip(y.iter()) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        x.len().cmp(&y.len())
    });
    refs
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
fn kernel(x: &[f64], y: &[f64], h: f64) -> f64 {
    (-sq_dist(x, y) / h).exp()
}
