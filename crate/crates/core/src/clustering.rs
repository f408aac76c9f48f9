//! Instance grouping for the local correlation terms: seeded k-means and
//! partition files.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::FeatureMatrix;
use crate::error::{GlocalError, Result};

pub const DEFAULT_MAX_ITER: usize = 100;

/// Assignment of `n` instances to `g` non-empty groups.
///
/// Group indices are 0-based internally; partition files use 1-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignment: Vec<usize>,
    sizes: Vec<usize>,
    /// `g x d`
    centroids: Array2<f64>,
}

impl Partition {
    /// Build a partition from an explicit assignment, computing centroids
    /// from `features`. Every group must be non-empty.
    pub fn from_assignment(
        assignment: Vec<usize>,
        g: usize,
        features: &FeatureMatrix,
    ) -> Result<Self> {
        if g == 0 {
            return Err(GlocalError::InvalidArgument(
                "group count must be >= 1".into(),
            ));
        }
        if assignment.len() != features.n() {
            return Err(GlocalError::Shape(format!(
                "partition covers {} instances, data has {}",
                assignment.len(),
                features.n()
            )));
        }
        let mut sizes = vec![0; g];
        for (i, &a) in assignment.iter().enumerate() {
            if a >= g {
                return Err(GlocalError::InvalidArgument(format!(
                    "instance {} assigned to group {} of {g}",
                    i + 1,
                    a + 1
                )));
            }
            sizes[a] += 1;
        }
        if let Some(m) = sizes.iter().position(|&s| s == 0) {
            return Err(GlocalError::InvalidArgument(format!(
                "group {} is empty",
                m + 1
            )));
        }
        let centroids = centroids_of(features.values(), &assignment, &sizes);
        Ok(Self {
            assignment,
            sizes,
            centroids,
        })
    }

    pub fn g(&self) -> usize {
        self.sizes.len()
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    /// Instance indices of every group, in ascending order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.g()];
        for (i, &a) in self.assignment.iter().enumerate() {
            out[a].push(i);
        }
        out
    }

    /// Within-group sum of squared Euclidean distances to the centroids.
    pub fn sse(&self, features: &FeatureMatrix) -> f64 {
        sse(features.values(), &self.assignment, &self.centroids)
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn centroids_of(x: &Array2<f64>, assignment: &[usize], sizes: &[usize]) -> Array2<f64> {
    let d = x.nrows();
    let mut c = Array2::<f64>::zeros((sizes.len(), d));
    for (i, &a) in assignment.iter().enumerate() {
        let mut row = c.row_mut(a);
        row += &x.column(i);
    }
    for (m, &s) in sizes.iter().enumerate() {
        if s > 0 {
            c.row_mut(m).mapv_inplace(|v| v / s as f64);
        }
    }
    c
}

fn sse(x: &Array2<f64>, assignment: &[usize], centroids: &Array2<f64>) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(x.column(i), centroids.row(a)))
        .sum()
}

fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (m, c) in centroids.outer_iter().enumerate() {
        let dist = sq_dist(point, c);
        if dist < best_d {
            best_d = dist;
            best = m;
        }
    }
    best
}

fn kmeans_pp_seed(x: &Array2<f64>, g: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (d, n) = x.dim();
    let mut chosen = Vec::with_capacity(g);
    chosen.push(rng.random_range(0..n));
    let mut dist: Array1<f64> = (0..n)
        .map(|i| sq_dist(x.column(i), x.column(chosen[0])))
        .collect();
    while chosen.len() < g {
        let total: f64 = dist.sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // float drift can walk past the end; fall back to the farthest point
            if dist[pick] == 0.0 {
                pick = argmax(dist.iter().copied());
            }
            pick
        } else {
            // all remaining points coincide with a centroid
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for i in 0..n {
            dist[i] = dist[i].min(sq_dist(x.column(i), x.column(next)));
        }
    }
    let mut c = Array2::zeros((g, d));
    for (m, &i) in chosen.iter().enumerate() {
        c.row_mut(m).assign(&x.column(i));
    }
    c
}

fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in it.enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Move points into empty groups: each empty group takes the point farthest
/// from its own centroid among groups that can spare one.
fn repair_empty(
    x: &Array2<f64>,
    assignment: &mut [usize],
    sizes: &mut [usize],
    centroids: &mut Array2<f64>,
) {
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let donor_point = argmax(assignment.iter().enumerate().map(|(i, &a)| {
            if sizes[a] > 1 {
                sq_dist(x.column(i), centroids.row(a))
            } else {
                f64::NEG_INFINITY
            }
        }));
        let old = assignment[donor_point];
        sizes[old] -= 1;
        sizes[empty] += 1;
        assignment[donor_point] = empty;
        centroids.row_mut(empty).assign(&x.column(donor_point));
    }
}

/// Lloyd's k-means with seeded k-means++ initialisation.
///
/// Iterates until the assignment stops changing or `max_iter` rounds have
/// run. Empty groups are refilled with the point farthest from its centroid.
pub fn kmeans(features: &FeatureMatrix, g: usize, seed: u64, max_iter: usize) -> Result<Partition> {
    kmeans_traced(features, g, seed, max_iter).map(|(p, _)| p)
}

/// As [`kmeans`], also returning the within-group SSE after each round.
pub fn kmeans_traced(
    features: &FeatureMatrix,
    g: usize,
    seed: u64,
    max_iter: usize,
) -> Result<(Partition, Vec<f64>)> {
    let x = features.values();
    let n = features.n();
    if g == 0 || g > n {
        return Err(GlocalError::InvalidArgument(format!(
            "group count must lie in 1..={n}, got {g}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_seed(x, g, &mut rng);
    let mut assignment: Vec<usize> = (0..n).map(|i| nearest(x.column(i), &centroids)).collect();
    let mut sizes = vec![0; g];
    for &a in &assignment {
        sizes[a] += 1;
    }
    repair_empty(x, &mut assignment, &mut sizes, &mut centroids);
    centroids = centroids_of(x, &assignment, &sizes);
    let mut trace = vec![sse(x, &assignment, &centroids)];

    for _ in 0..max_iter {
        let next: Vec<usize> = (0..n).map(|i| nearest(x.column(i), &centroids)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
        sizes.iter_mut().for_each(|s| *s = 0);
        for &a in &assignment {
            sizes[a] += 1;
        }
        repair_empty(x, &mut assignment, &mut sizes, &mut centroids);
        centroids = centroids_of(x, &assignment, &sizes);
        trace.push(sse(x, &assignment, &centroids));
    }

    Ok((
        Partition {
            assignment,
            sizes,
            centroids,
        },
        trace,
    ))
}

/// `instance_idx group_idx` per line, both 1-based.
pub fn write_partition(p: &Partition, comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    for (i, &a) in p.assignment.iter().enumerate() {
        let _ = writeln!(out, "{} {}", i + 1, a + 1);
    }
    out
}

/// Parse a partition file against `features`. The group count is the
/// largest group index present; every instance must appear exactly once.
pub fn parse_partition(text: &str, features: &FeatureMatrix) -> Result<Partition> {
    let n = features.n();
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut g = 0;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let parsed: Option<(usize, usize)> = match toks.as_slice() {
            [a, b] => a.parse().ok().zip(b.parse().ok()),
            _ => None,
        };
        let (inst, grp) = match parsed {
            Some((a, b)) if a >= 1 && b >= 1 => (a, b),
            _ => {
                return Err(GlocalError::parse(
                    lineno,
                    "expected `instance_idx group_idx` (1-based)",
                ))
            }
        };
        if inst > n {
            return Err(GlocalError::parse(
                lineno,
                format!("instance {inst} out of range 1..={n}"),
            ));
        }
        if assignment[inst - 1].replace(grp - 1).is_some() {
            return Err(GlocalError::parse(
                lineno,
                format!("instance {inst} listed twice"),
            ));
        }
        g = g.max(grp);
    }
    if let Some(missing) = assignment.iter().position(Option::is_none) {
        return Err(GlocalError::InvalidArgument(format!(
            "partition does not cover instance {} of {n}",
            missing + 1
        )));
    }
    Partition::from_assignment(
        assignment.into_iter().map(Option::unwrap).collect(),
        g,
        features,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn fm(cols: &[[f64; 2]]) -> FeatureMatrix {
        let mut x = Array2::zeros((2, cols.len()));
        for (i, c) in cols.iter().enumerate() {
            x[[0, i]] = c[0];
            x[[1, i]] = c[1];
        }
        FeatureMatrix::new(x).unwrap()
    }

    fn random_features(d: usize, n: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMatrix::new(Array2::from_shape_fn((d, n), |_| {
            StandardNormal.sample(&mut rng)
        }))
        .unwrap()
    }

    #[test]
    fn single_group_is_mean() {
        let f = random_features(3, 10, 1);
        let p = kmeans(&f, 1, 0, DEFAULT_MAX_ITER).unwrap();
        assert!(p.assignment().iter().all(|&a| a == 0));
        let mean = f.values().mean_axis(ndarray::Axis(1)).unwrap();
        for (c, m) in p.centroids().row(0).iter().zip(mean.iter()) {
            assert!((c - m).abs() < 1e-12);
        }
    }

    #[test]
    fn separates_two_clouds() {
        let f = fm(&[
            [0.0, 0.1],
            [10.0, 10.0],
            [0.1, 0.0],
            [10.1, 9.9],
            [-0.1, 0.0],
            [9.9, 10.1],
        ]);
        for seed in 0..10 {
            let p = kmeans(&f, 2, seed, DEFAULT_MAX_ITER).unwrap();
            let a = p.assignment();
            assert_eq!(a[0], a[2]);
            assert_eq!(a[0], a[4]);
            assert_eq!(a[1], a[3]);
            assert_eq!(a[1], a[5]);
            assert_ne!(a[0], a[1]);
            let low = p.centroids().row(a[0]);
            assert!((low[0] - 0.0).abs() < 1e-12 && (low[1] - 0.1 / 3.0).abs() < 1e-12);
            let high = p.centroids().row(a[1]);
            assert!((high[0] - 10.0).abs() < 1e-12 && (high[1] - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_group_per_instance() {
        let f = random_features(2, 7, 3);
        let p = kmeans(&f, 7, 5, DEFAULT_MAX_ITER).unwrap();
        assert!(p.sizes().iter().all(|&s| s == 1));
        assert_eq!(p.sse(&f), 0.0);
    }

    #[test]
    fn duplicate_points_still_fill_every_group() {
        let f = fm(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [2.0, 2.0]]);
        let p = kmeans(&f, 3, 0, DEFAULT_MAX_ITER).unwrap();
        assert!(p.sizes().iter().all(|&s| s >= 1));
        assert_eq!(p.sizes().iter().sum::<usize>(), 4);
    }

    #[test]
    fn rejects_bad_group_count() {
        let f = random_features(2, 4, 0);
        assert!(kmeans(&f, 0, 0, 10).is_err());
        assert!(kmeans(&f, 5, 0, 10).is_err());
    }

    #[test]
    fn sse_trace_non_increasing_and_deterministic() {
        for seed in 0..20 {
            let f = random_features(4, 60, seed);
            let (p, trace) = kmeans_traced(&f, 5, seed, DEFAULT_MAX_ITER).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "SSE rose {} -> {}", w[0], w[1]);
            }
            assert_eq!(kmeans(&f, 5, seed, DEFAULT_MAX_ITER).unwrap(), p);
            let mut counts = vec![0; 5];
            for &a in p.assignment() {
                counts[a] += 1;
            }
            assert_eq!(counts, p.sizes());
        }
    }

    /// Exhaustive minimum SSE over all 2-group assignments with both groups
    /// non-empty.
    fn brute_force_two_groups(x: &Array2<f64>) -> f64 {
        let n = x.ncols();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) - 1 {
            let mut total = 0.0;
            for side in [0u32, 1] {
                let cols: Vec<usize> = (0..n).filter(|&i| (mask >> i) & 1 == side).collect();
                let mut mean = vec![0.0; x.nrows()];
                for &i in &cols {
                    for r in 0..x.nrows() {
                        mean[r] += x[[r, i]];
                    }
                }
                for m in mean.iter_mut() {
                    *m /= cols.len() as f64;
                }
                for &i in &cols {
                    for r in 0..x.nrows() {
                        total += (x[[r, i]] - mean[r]).powi(2);
                    }
                }
            }
            best = best.min(total);
        }
        best
    }

    #[test]
    fn never_beats_exhaustive_optimum_and_stops_at_a_fixpoint() {
        for case in 0..30u64 {
            let n = 3 + (case % 6) as usize;
            let f = random_features(2, n, 100 + case);
            let oracle = brute_force_two_groups(f.values());
            for s in 0..5 {
                let p = kmeans(&f, 2, s, DEFAULT_MAX_ITER).unwrap();
                assert!(p.sse(&f) >= oracle - 1e-9, "case {case}: below the optimum");
                // every point sits with its nearest centroid
                let c = p.centroids();
                for (i, &a) in p.assignment().iter().enumerate() {
                    let d = |m: usize| -> f64 {
                        (0..f.d())
                            .map(|r| (f.values()[[r, i]] - c[[m, r]]).powi(2))
                            .sum()
                    };
                    assert!(
                        d(a) <= d(1 - a) + 1e-12,
                        "case {case} seed {s}: point {i} misassigned"
                    );
                }
            }
        }
    }

    #[test]
    fn partition_file_round_trip() {
        let f = random_features(2, 6, 9);
        let p = kmeans(&f, 3, 1, DEFAULT_MAX_ITER).unwrap();
        let text = write_partition(&p, Some("seed=1"));
        assert_eq!(parse_partition(&text, &f).unwrap(), p);
    }

    #[test]
    fn partition_file_must_cover_all_instances() {
        let f = random_features(2, 3, 9);
        assert!(parse_partition("1 1\n2 2\n", &f).is_err());
        assert!(parse_partition("1 1\n2 2\n2 1\n3 1\n", &f).is_err());
        assert!(parse_partition("1 1\n2 3\n3 1\n", &f).is_err()); // group 2 empty
        assert!(parse_partition("1 1\n2 1\n4 1\n", &f).is_err());
        assert!(parse_partition("1 1\n2 1\n3 2\n", &f).is_ok());
    }
}
