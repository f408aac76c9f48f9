//! K-fold cross-validation over a user-supplied hyperparameter grid.
//!
//! Each candidate is fitted on `k - 1` folds (with its own k-means
//! partition of those instances) and scored by ranking loss on the observed
//! labels of the held-out fold. The candidate with the lowest mean loss
//! wins; ties keep the earlier candidate.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::{kmeans, DEFAULT_MAX_ITER};
use crate::dataset::Dataset;
use crate::error::{GlocalError, Result};
use crate::metrics::ranking_loss;
use crate::model::{score, Hyperparams};
use crate::solver::fit;

/// Values to try for each searchable hyperparameter. An empty list keeps
/// the base value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    pub lambda2: Vec<f64>,
    pub lambda3: Vec<f64>,
    pub lambda4: Vec<f64>,
    pub k: Vec<usize>,
    pub g: Vec<usize>,
}

fn parse_list<T: std::str::FromStr>(raw: &str, key: &str, line: usize) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| GlocalError::parse(line, format!("bad value {s:?} for {key}")))
        })
        .collect()
}

impl Grid {
    /// Parse `key = v1, v2, ...` lines; keys are `lambda2`, `lambda3`,
    /// `lambda4`, `k` and `g`. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut grid = Grid::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, vals) = line
                .split_once('=')
                .ok_or_else(|| GlocalError::parse(i + 1, "expected `key = v1,v2,...`"))?;
            let key = key.trim();
            match key {
                "lambda2" => grid.lambda2 = parse_list(vals, key, i + 1)?,
                "lambda3" => grid.lambda3 = parse_list(vals, key, i + 1)?,
                "lambda4" => grid.lambda4 = parse_list(vals, key, i + 1)?,
                "k" => grid.k = parse_list(vals, key, i + 1)?,
                "g" => grid.g = parse_list(vals, key, i + 1)?,
                other => {
                    return Err(GlocalError::parse(
                        i + 1,
                        format!("unknown grid key {other:?}"),
                    ))
                }
            }
        }
        Ok(grid)
    }

    /// Cartesian product of the grid around `base`.
    pub fn candidates(&self, base: &Hyperparams) -> Vec<Hyperparams> {
        fn or_base<T: Copy>(v: &[T], b: T) -> Vec<T> {
            if v.is_empty() {
                vec![b]
            } else {
                v.to_vec()
            }
        }
        let mut out = Vec::new();
        for &l2 in &or_base(&self.lambda2, base.lambda2) {
            for &l3 in &or_base(&self.lambda3, base.lambda3) {
                for &l4 in &or_base(&self.lambda4, base.lambda4) {
                    for &k in &or_base(&self.k, base.k) {
                        for &g in &or_base(&self.g, base.g) {
                            out.push(Hyperparams {
                                lambda2: l2,
                                lambda3: l3,
                                lambda4: l4,
                                k,
                                g,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: Hyperparams,
    /// Every candidate with its mean held-out ranking loss (`NaN` if no
    /// fold could be scored).
    pub scores: Vec<(Hyperparams, f64)>,
}

/// Shuffled instance folds of near-equal size.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(GlocalError::InvalidArgument(format!(
            "need 2 <= folds <= {n}, got {folds}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

fn fold_loss(
    data: &Dataset,
    folds: &[Vec<usize>],
    held: usize,
    hp: &Hyperparams,
) -> Result<Option<f64>> {
    let train: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|&(f, _)| f != held)
        .flat_map(|(_, v)| v.iter().copied())
        .collect();
    let mut train: Vec<usize> = train;
    train.sort_unstable();
    let tr = data.select(&train);
    let te = data.select(&folds[held]);
    let part = kmeans(&tr.features, hp.g, hp.seed, DEFAULT_MAX_ITER)?;
    let (model, _) = fit(&tr, &part, hp)?;
    let s = score(&model, &te.features)?;
    match ranking_loss(&s, te.labels.values()) {
        Ok(v) => Ok(Some(v)),
        Err(GlocalError::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Mean held-out ranking loss of `hp` over `folds` folds. Folds run on
/// separate threads; each fit is itself single-threaded and deterministic.
pub fn cv_loss(data: &Dataset, hp: &Hyperparams, folds: usize, seed: u64) -> Result<f64> {
    let parts = fold_indices(data.n(), folds, seed)?;
    let results: Vec<Result<Option<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..folds)
            .map(|f| {
                let parts = &parts;
                s.spawn(move || fold_loss(data, parts, f, hp))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fold worker panicked"))
            .collect()
    });
    let mut losses = Vec::new();
    for r in results {
        if let Some(v) = r? {
            losses.push(v);
        }
    }
    if losses.is_empty() {
        return Ok(f64::NAN);
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

pub fn grid_search(
    data: &Dataset,
    base: &Hyperparams,
    grid: &Grid,
    folds: usize,
    seed: u64,
) -> Result<GridResult> {
    let mut scores = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (c, hp) in grid.candidates(base).into_iter().enumerate() {
        hp.validate()?;
        let loss = cv_loss(data, &hp, folds, seed)?;
        if loss.is_finite() && best.is_none_or(|(_, b)| loss < b) {
            best = Some((c, loss));
        }
        scores.push((hp, loss));
    }
    let (c, _) = best.ok_or_else(|| {
        GlocalError::UndefinedMetric("no grid candidate could be scored on any fold".into())
    })?;
    Ok(GridResult {
        best: scores[c].0.clone(),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthesize, SynthSpec};

    #[test]
    fn parses_grid_file() {
        let g = Grid::parse("# grid\nlambda2 = 0.1, 1\nlambda3=0\nk = 2,3\n").unwrap();
        assert_eq!(g.lambda2, vec![0.1, 1.0]);
        assert_eq!(g.lambda3, vec![0.0]);
        assert_eq!(g.k, vec![2, 3]);
        assert!(g.g.is_empty());
        assert_eq!(g.candidates(&Hyperparams::default()).len(), 4);
        assert!(Grid::parse("mu = 1\n").is_err());
        assert!(Grid::parse("k = x\n").is_err());
    }

    #[test]
    fn folds_partition_instances() {
        let f = fold_indices(23, 5, 4).unwrap();
        assert_eq!(f.len(), 5);
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(f.iter().all(|v| v.len() == 4 || v.len() == 5));
        assert!(fold_indices(3, 5, 0).is_err());
    }

    #[test]
    fn grid_search_picks_a_scored_candidate() {
        let out = synthesize(&SynthSpec {
            l: 6,
            n: 60,
            d: 4,
            k_true: 2,
            noise: 0.1,
            rho: 100.0,
            seed: 3,
        })
        .unwrap();
        let base = Hyperparams {
            k: 2,
            g: 2,
            outer_iters: 3,
            warm_iters: 3,
            ..Default::default()
        };
        let grid = Grid {
            lambda2: vec![0.01, 100.0],
            ..Default::default()
        };
        let res = grid_search(&out.full, &base, &grid, 3, 0).unwrap();
        assert_eq!(res.scores.len(), 2);
        let best = res
            .scores
            .iter()
            .map(|(_, s)| *s)
            .fold(f64::INFINITY, f64::min);
        let chosen = res.scores.iter().find(|(h, _)| *h == res.best).unwrap().1;
        assert_eq!(chosen, best);
        // same inputs, same answer
        assert_eq!(
            grid_search(&out.full, &base, &grid, 3, 0).unwrap().best,
            res.best
        );
    }
}
