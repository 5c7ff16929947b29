//! Dynamic time warping over frame sequences.

/// Monotone alignment path with its cost summary.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// Index pairs from (0, 0) to (n-1, m-1), monotone in both coordinates.
    pub path: Vec<(usize, usize)>,
    pub total_cost: f64,
    /// Total cost divided by the path length.
    pub mean_cost: f64,
}

/// Classic DP over cumulative cost with steps {(1,0), (0,1), (1,1)},
/// minimizing the total cost; the reported error is the mean along the
/// optimal path. Ties prefer the diagonal step.
pub fn dtw_align<T>(a: &[T], b: &[T], cost: impl Fn(&T, &T) -> f64) -> AlignmentResult {
    assert!(
        !a.is_empty() && !b.is_empty(),
        "DTW needs non-empty sequences"
    );
    let n = a.len();
    let m = b.len();
    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;

    for i in 0..n {
        for j in 0..m {
            let c = cost(&a[i], &b[j]);
            let best_prev = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = best.min(acc[at(i - 1, j - 1)]);
                }
                if i > 0 {
                    best = best.min(acc[at(i - 1, j)]);
                }
                if j > 0 {
                    best = best.min(acc[at(i, j - 1)]);
                }
                best
            };
            acc[at(i, j)] = c + best_prev;
        }
    }

    // Backtrack, preferring diagonal, then (i-1, j), then (i, j-1).
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let (pi, pj) = if i == 0 {
            (i, j - 1)
        } else if j == 0 {
            (i - 1, j)
        } else {
            let diag = acc[at(i - 1, j - 1)];
            let up = acc[at(i - 1, j)];
            let left = acc[at(i, j - 1)];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((pi, pj));
        i = pi;
        j = pj;
    }
    path.reverse();

    let total_cost = acc[at(n - 1, m - 1)];
    AlignmentResult {
        mean_cost: total_cost / path.len() as f64,
        total_cost,
        path,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use rand::Rng;

    fn abs_cost(a: &f64, b: &f64) -> f64 {
        (a - b).abs()
    }

    #[test]
    fn identical_sequences_align_on_the_diagonal_at_zero_cost() {
        let a = vec![0.0, 1.0, 2.0, 3.0];
        let r = dtw_align(&a, &a, abs_cost);
        assert_eq!(r.total_cost, 0.0);
        assert_eq!(r.mean_cost, 0.0);
        assert_eq!(r.path, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn duplicated_frame_is_absorbed_at_zero_cost() {
        let a = vec![0.0, 1.0, 2.0, 3.0];
        let b = vec![0.0, 1.0, 1.0, 2.0, 3.0];
        let r = dtw_align(&a, &b, abs_cost);
        assert_eq!(r.total_cost, 0.0);
    }

    #[test]
    fn path_is_monotone_with_pinned_endpoints() {
        let mut rng = stream(1, Domain::Shuffle, 2);
        let a: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = dtw_align(&a, &b, abs_cost);
        assert_eq!(*r.path.first().unwrap(), (0, 0));
        assert_eq!(*r.path.last().unwrap(), (8, 6));
        for w in r.path.windows(2) {
            let di = w[1].0 as i64 - w[0].0 as i64;
            let dj = w[1].1 as i64 - w[0].1 as i64;
            assert!((0..=1).contains(&di) && (0..=1).contains(&dj));
            assert!(di + dj >= 1);
        }
    }

    /// Exhaustive enumeration over all monotone paths.
    fn brute_force_min_cost(a: &[f64], b: &[f64]) -> f64 {
        fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
            let c = acc + (a[i] - b[j]).abs();
            if i == a.len() - 1 && j == b.len() - 1 {
                *best = best.min(c);
                return;
            }
            if i + 1 < a.len() {
                walk(a, b, i + 1, j, c, best);
            }
            if j + 1 < b.len() {
                walk(a, b, i, j + 1, c, best);
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                walk(a, b, i + 1, j + 1, c, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(a, b, 0, 0, 0.0, &mut best);
        best
    }

    #[test]
    fn dp_cost_matches_exhaustive_enumeration() {
        for seed in 0..20 {
            let mut rng = stream(seed, Domain::Shuffle, 3);
            let n = rng.gen_range(2..=6);
            let m = rng.gen_range(2..=6);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let r = dtw_align(&a, &b, abs_cost);
            let brute = brute_force_min_cost(&a, &b);
            assert!((r.total_cost - brute).abs() < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn cost_is_symmetric_and_bounded_by_identity_alignment() {
        let mut rng = stream(9, Domain::Shuffle, 4);
        let a: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ab = dtw_align(&a, &b, abs_cost);
        let ba = dtw_align(&b, &a, abs_cost);
        assert!((ab.total_cost - ba.total_cost).abs() < 1e-12);
        let identity: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum();
        assert!(ab.total_cost <= identity + 1e-12);
    }
}
