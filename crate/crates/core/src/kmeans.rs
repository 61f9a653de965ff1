//! Lloyd's k-means over population members in flattened parameter space.

use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Lloyd iterations performed.
    pub iterations: usize,
    /// Whether the assignments stabilized before `max_iters`.
    pub converged: bool,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignments {
            sizes[c] += 1;
        }
        sizes
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        // strict comparison keeps the lowest index on ties
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn means(points: &[Vec<f64>], assignments: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignments) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    (sums, counts)
}

/// Within-cluster sum of squared distances to the given centroids.
pub fn sse(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &c)| squared_distance(p, &centroids[c]))
        .sum()
}

/// Within-cluster SSE of a partition, measured against each cluster's mean.
pub fn partition_sse(points: &[Vec<f64>], assignments: &[usize], k: usize) -> f64 {
    let (centroids, _) = means(points, assignments, k);
    sse(points, assignments, &centroids)
}

/// Lloyd iterations from the points at `seed_indices`. An empty cluster is
/// reseeded with the point farthest from its own centroid, taken from a
/// cluster that has more than one member.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed_indices: &[usize], max_iters: usize) -> Result<Clustering> {
    let n = points.len();
    if k < 2 || k > n {
        return Err(Error::Usage(format!("k-means needs 2 <= k <= {n}, got k = {k}")));
    }
    if seed_indices.len() != k {
        return Err(Error::Usage(format!(
            "k-means got {} seed indices for k = {k}",
            seed_indices.len()
        )));
    }
    let mut seen = vec![false; n];
    for &s in seed_indices {
        if s >= n || seen[s] {
            return Err(Error::Usage(format!("seed index {s} is out of range or repeated")));
        }
        seen[s] = true;
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Usage("k-means points have different dimensions".into()));
    }

    let mut centroids: Vec<Vec<f64>> = seed_indices.iter().map(|&s| points[s].clone()).collect();
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let (mut next, mut counts) = means(points, &assignments, k);
        let mut moved = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| !moved[i] && counts[assignments[i]] > 1)
                .map(|i| (i, squared_distance(&points[i], &next[assignments[i]])))
                .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                });
            if let Some((i, _)) = donor {
                counts[assignments[i]] -= 1;
                counts[c] = 1;
                assignments[i] = c;
                moved[i] = true;
                next[c] = points[i].clone();
            }
        }
        if moved.iter().any(|&m| m) {
            // donors lost a member; refresh their means
            next = means(points, &assignments, k).0;
        }
        centroids = next;
        let updated: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if updated == assignments {
            converged = true;
            break;
        }
        assignments = updated;
    }
    if !converged {
        centroids = means(points, &assignments, k).0;
    }
    Ok(Clustering {
        k,
        assignments,
        centroids,
        iterations,
        converged,
    })
}

/// Uniform number of clusters in `[2, floor(sqrt(n))]`, or 2 when that range
/// is empty.
pub fn draw_k<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    let hi = (n as f64).sqrt().floor() as usize;
    if hi < 2 {
        2
    } else {
        rng.random_range(2..=hi)
    }
}

/// The cluster with the lowest mean objective and its best member.
pub fn winner_cluster(clustering: &Clustering, objectives: &[f64]) -> Result<(usize, usize)> {
    if objectives.len() != clustering.assignments.len() {
        return Err(Error::Usage("one objective value per point is required".into()));
    }
    if objectives.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite objective value in clustering".into()));
    }
    let mut sums = vec![0.0; clustering.k];
    let mut counts = vec![0usize; clustering.k];
    for (&c, &v) in clustering.assignments.iter().zip(objectives) {
        sums[c] += v;
        counts[c] += 1;
    }
    let mut winner = None::<(usize, f64)>;
    for c in 0..clustering.k {
        if counts[c] == 0 {
            continue;
        }
        let mean = sums[c] / counts[c] as f64;
        if winner.is_none_or(|(_, m)| mean < m) {
            winner = Some((c, mean));
        }
    }
    let (cluster, _) = winner.ok_or_else(|| Error::Usage("clustering has no members".into()))?;
    let mut win = None::<usize>;
    for i in clustering.members(cluster) {
        if win.is_none_or(|w| objectives[i] < objectives[w]) {
            win = Some(i);
        }
    }
    Ok((cluster, win.expect("winner cluster is non-empty")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(v: &[&[f64]]) -> Vec<Vec<f64>> {
        v.iter().map(|p| p.to_vec()).collect()
    }

    /// Minimal SSE over every split into two non-empty groups.
    fn brute_force_two(points: &[Vec<f64>]) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let a: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            best = best.min(partition_sse(points, &a, 2));
        }
        best
    }

    #[test]
    fn two_obvious_groups() {
        let p = pts(&[&[0.0], &[1.0], &[10.0], &[11.0]]);
        let c = kmeans(&p, 2, &[0, 1], DEFAULT_MAX_ITERS).unwrap();
        assert_eq!(c.assignments, vec![0, 0, 1, 1]);
        assert_eq!(c.centroids, vec![vec![0.5], vec![10.5]]);
        assert!(c.converged);
        assert_eq!(partition_sse(&p, &c.assignments, 2), brute_force_two(&p));
    }

    #[test]
    fn k_equals_n_has_zero_sse() {
        let p = pts(&[&[0.0, 1.0], &[3.0, 1.0], &[-2.0, 5.0]]);
        let c = kmeans(&p, 3, &[2, 0, 1], DEFAULT_MAX_ITERS).unwrap();
        assert_eq!(sse(&p, &c.assignments, &c.centroids), 0.0);
        assert_eq!(c.sizes(), vec![1, 1, 1]);
    }

    #[test]
    fn duplicates_split_exactly() {
        let p = pts(&[&[1.0, 1.0], &[1.0, 1.0], &[4.0, 0.0], &[1.0, 1.0], &[4.0, 0.0]]);
        let c = kmeans(&p, 2, &[0, 2], DEFAULT_MAX_ITERS).unwrap();
        assert_eq!(c.assignments, vec![0, 0, 1, 0, 1]);
        assert_eq!(sse(&p, &c.assignments, &c.centroids), 0.0);
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // both seeds coincide in position, so the second cluster starts empty
        let p = pts(&[&[0.0], &[0.0], &[5.0], &[6.0]]);
        let c = kmeans(&p, 2, &[0, 1], DEFAULT_MAX_ITERS).unwrap();
        assert!(c.sizes().iter().all(|&s| s > 0));
        assert_eq!(partition_sse(&p, &c.assignments, 2), brute_force_two(&p));
    }

    #[test]
    fn bad_arguments_are_usage_errors() {
        let p = pts(&[&[0.0], &[1.0]]);
        assert!(matches!(kmeans(&p, 3, &[0, 1, 1], 10), Err(Error::Usage(_))));
        assert!(matches!(kmeans(&p, 2, &[1, 1], 10), Err(Error::Usage(_))));
        assert!(matches!(kmeans(&p, 1, &[0], 10), Err(Error::Usage(_))));
    }

    #[test]
    fn draw_k_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let k = draw_k(200, &mut rng);
            assert!((2..=14).contains(&k));
            assert_eq!(draw_k(4, &mut rng), 2);
            assert_eq!(draw_k(3, &mut rng), 2);
        }
    }

    #[test]
    fn draw_k_is_uniform() {
        // chi-squared goodness of fit over 13 categories (12 degrees of
        // freedom); the 0.999 quantile is 32.91
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws = 100_000;
        let mut counts = [0usize; 15];
        for _ in 0..draws {
            counts[draw_k(200, &mut rng)] += 1;
        }
        let expected = draws as f64 / 13.0;
        let chi2: f64 = counts[2..]
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 32.91, "chi2 = {chi2}");
    }

    #[test]
    fn winner_examples() {
        let c = Clustering {
            k: 2,
            assignments: vec![0, 1, 0, 1],
            centroids: vec![vec![0.0], vec![1.0]],
            iterations: 1,
            converged: true,
        };
        assert_eq!(winner_cluster(&c, &[0.3, 0.9, 0.2, 1.0]).unwrap(), (0, 2));
        // winner by mean, not by the global best
        assert_eq!(winner_cluster(&c, &[0.0, 0.4, 5.0, 0.5]).unwrap(), (1, 1));
        assert_eq!(winner_cluster(&c, &[1.0; 4]).unwrap(), (0, 0));
        assert!(matches!(
            winner_cluster(&c, &[f64::NAN, 0.0, 0.0, 0.0]),
            Err(Error::Numeric(_))
        ));
    }

    fn small_sets() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..=3, 3usize..=8)
            .prop_flat_map(|(d, n)| proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, d), n))
    }

    proptest! {
        #[test]
        fn lloyd_sse_never_increases(points in small_sets(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = points.len();
            let k = rng.random_range(2..=n.min(4));
            let seeds = rand::seq::index::sample(&mut rng, n, k).into_vec();
            let mut previous = f64::INFINITY;
            for iters in 1..=12 {
                let c = kmeans(&points, k, &seeds, iters).unwrap();
                let now = partition_sse(&points, &c.assignments, k);
                prop_assert!(now <= previous + 1e-9, "{} > {}", now, previous);
                previous = now;
            }
        }

        #[test]
        fn converged_clustering_is_a_fixed_point(points in small_sets(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = points.len();
            let seeds = rand::seq::index::sample(&mut rng, n, 2).into_vec();
            let c = kmeans(&points, 2, &seeds, DEFAULT_MAX_ITERS).unwrap();
            prop_assert!(c.converged);
            let (centroids, counts) = means(&points, &c.assignments, 2);
            for cl in 0..2 {
                if counts[cl] > 0 {
                    for (a, b) in centroids[cl].iter().zip(&c.centroids[cl]) {
                        prop_assert!((a - b).abs() < 1e-12);
                    }
                }
            }
            prop_assert!(partition_sse(&points, &c.assignments, 2) >= brute_force_two(&points) - 1e-9);
        }

        #[test]
        fn point_order_does_not_change_partition(points in small_sets(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = points.len();
            let seeds = rand::seq::index::sample(&mut rng, n, 2).into_vec();
            let perm = rand::seq::index::sample(&mut rng, n, n).into_vec();
            let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| points[i].clone()).collect();
            let inverse: Vec<usize> = {
                let mut inv = vec![0; n];
                for (pos, &i) in perm.iter().enumerate() { inv[i] = pos; }
                inv
            };
            let a = kmeans(&points, 2, &seeds, DEFAULT_MAX_ITERS).unwrap();
            let b_seeds: Vec<usize> = seeds.iter().map(|&s| inverse[s]).collect();
            let b = kmeans(&shuffled, 2, &b_seeds, DEFAULT_MAX_ITERS).unwrap();
            for i in 0..n {
                prop_assert_eq!(a.assignments[i], b.assignments[inverse[i]]);
            }
        }
    }
}
