//! Lloyd's algorithm with k-means++ seeding, deterministic per seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// Standard Lloyd iterations; converges when assignments stabilize or
/// `max_iter` is reached. Errors when `k` exceeds the point count. Ties in
/// nearest-centroid break toward the lowest index; empty clusters keep
/// their previous centroid.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KmeansResult, String> {
    if k == 0 {
        return Err("k must be positive".to_string());
    }
    if k > points.len() {
        return Err(format!("k = {k} exceeds {} points", points.len()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err("points have inconsistent dimensions".to_string());
    }

    // k-means++ seeding.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    while centroids.len() < k {
        let d2: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let next = if total == 0.0 {
            // All mass on existing centroids: take the first unused point.
            points
                .iter()
                .position(|p| centroids.iter().all(|c| c != p))
                .unwrap_or(0)
        } else {
            let mut draw = rng.gen::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                draw -= d;
                if draw <= 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        };
        centroids.push(points[next].clone());
    }

    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    for _ in 0..max_iter {
        // Update step.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, (sum, count)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            if *count > 0 {
                *c = sum.iter().map(|s| s / *count as f64).collect();
            }
        }
        // Assign step.
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        let stable = next == assignment;
        assignment = next;
        if stable {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &a)| dist2(p, &centroids[a]))
        .sum();
    Ok(KmeansResult {
        centroids,
        assignment,
        inertia,
    })
}

/// One representative per cluster: the point nearest its centroid, ties
/// toward the lowest index. Clusters that ended empty produce nothing.
pub fn select_representatives(
    result: &KmeansResult,
    points: &[Vec<f64>],
    texts: &[String],
) -> Vec<(usize, String)> {
    let k = result.centroids.len();
    let mut best: Vec<Option<(usize, f64)>> = vec![None; k];
    for (i, p) in points.iter().enumerate() {
        let a = result.assignment[i];
        let d = dist2(p, &result.centroids[a]);
        match best[a] {
            Some((_, bd)) if bd <= d => {}
            _ => best[a] = Some((i, d)),
        }
    }
    best.into_iter()
        .enumerate()
        .filter_map(|(cluster, b)| b.map(|(i, _)| (cluster, texts[i].clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [
            vec![0.0, 0.0],
            vec![10.0, 0.0],
            vec![0.0, 10.0],
            vec![10.0, 10.0],
        ];
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for (label, c) in centers.iter().enumerate() {
            for _ in 0..25 {
                points.push(vec![
                    c[0] + rng.gen_range(-0.8..0.8),
                    c[1] + rng.gen_range(-0.8..0.8),
                ]);
                truth.push(label);
            }
        }
        (points, truth)
    }

    fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
        // Pair-counting form, adequate for the blob fixture sizes.
        let n = a.len();
        let mut same_same = 0u64;
        let mut same_a = 0u64;
        let mut same_b = 0u64;
        let mut pairs = 0u64;
        for i in 0..n {
            for j in i + 1..n {
                pairs += 1;
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                if sa {
                    same_a += 1;
                }
                if sb {
                    same_b += 1;
                }
                if sa && sb {
                    same_same += 1;
                }
            }
        }
        let expected = same_a as f64 * same_b as f64 / pairs as f64;
        let max_index = (same_a + same_b) as f64 / 2.0;
        if (max_index - expected).abs() < 1e-12 {
            return 1.0;
        }
        (same_same as f64 - expected) / (max_index - expected)
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let points = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let r = kmeans(&points, 3, 1, 50).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut clusters: Vec<usize> = r.assignment.clone();
        clusters.sort();
        clusters.dedup();
        assert_eq!(clusters.len(), 3);
    }

    #[test]
    fn k_larger_than_points_errors() {
        assert!(kmeans(&[vec![0.0]], 2, 0, 10).is_err());
    }

    #[test]
    fn four_blobs_recovered_exactly() {
        let (points, truth) = blobs(42);
        let r = kmeans(&points, 4, 7, 100).unwrap();
        let ari = adjusted_rand_index(&truth, &r.assignment);
        assert!((ari - 1.0).abs() < 1e-12, "ARI {ari}");
    }

    #[test]
    fn deterministic_per_seed() {
        let (points, _) = blobs(3);
        let a = kmeans(&points, 4, 11, 100).unwrap();
        let b = kmeans(&points, 4, 11, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inertia_non_increasing_over_iterations() {
        let (points, _) = blobs(9);
        let mut last = f64::INFINITY;
        for iters in [1, 2, 3, 5, 8, 20] {
            let r = kmeans(&points, 4, 5, iters).unwrap();
            assert!(
                r.inertia <= last + 1e-9,
                "inertia rose at {iters}: {} > {last}",
                r.inertia
            );
            last = r.inertia;
        }
    }

    #[test]
    fn representatives_singletons_and_ties() {
        let points = vec![vec![0.0], vec![10.0], vec![10.2]];
        let texts = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let r = kmeans(&points, 2, 1, 50).unwrap();
        let reps = select_representatives(&r, &points, &texts);
        assert_eq!(reps.len(), 2);
        let singleton_cluster = r.assignment[0];
        assert!(reps
            .iter()
            .any(|(c, t)| *c == singleton_cluster && t == "a"));

        // Exact tie: two points equidistant from their centroid.
        let tie_points = vec![vec![0.0], vec![2.0]];
        let tie_res = KmeansResult {
            centroids: vec![vec![1.0]],
            assignment: vec![0, 0],
            inertia: 2.0,
        };
        let reps = select_representatives(
            &tie_res,
            &tie_points,
            &["first".to_string(), "second".to_string()],
        );
        assert_eq!(
            reps,
            vec![(0, "first".to_string())],
            "tie must go to the lowest index"
        );
    }

    #[test]
    fn blob_representative_near_true_mean() {
        let (points, truth) = blobs(15);
        let texts: Vec<String> = (0..points.len()).map(|i| format!("p{i}")).collect();
        let r = kmeans(&points, 4, 2, 100).unwrap();
        let reps = select_representatives(&r, &points, &texts);
        for (cluster, text) in reps {
            let idx: usize = text[1..].parse().unwrap();
            // The representative's true blob must dominate its cluster.
            let members: Vec<usize> = (0..points.len())
                .filter(|&i| r.assignment[i] == cluster)
                .collect();
            let rep_label = truth[idx];
            let same = members.iter().filter(|&&i| truth[i] == rep_label).count();
            assert!(same * 2 > members.len());

            // And it must sit within the top-3 closest to the true blob mean.
            let blob: Vec<usize> = (0..points.len())
                .filter(|&i| truth[i] == rep_label)
                .collect();
            let mean: Vec<f64> = (0..2)
                .map(|d| blob.iter().map(|&i| points[i][d]).sum::<f64>() / blob.len() as f64)
                .collect();
            let mut dists: Vec<(usize, f64)> = blob
                .iter()
                .map(|&i| (i, dist2(&points[i], &mean)))
                .collect();
            dists.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
            let rank = dists.iter().position(|&(i, _)| i == idx).unwrap();
            assert!(rank < 3, "representative ranked {rank} from blob mean");
        }
    }

    #[test]
    fn seeding_draws_are_reproducible() {
        let mut r1 = ChaCha8Rng::seed_from_u64(4);
        let mut r2 = ChaCha8Rng::seed_from_u64(4);
        use rand::Rng;
        assert_eq!(r1.gen::<f64>(), r2.gen::<f64>());
    }
}
