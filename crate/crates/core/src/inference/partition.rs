use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::Serialize;

use crate::encoder::EmbeddingTable;
use crate::kg::{AlignedPair, AlignmentTask, EntityId};
use crate::rng::SeaRng;
use crate::{Error, Result};

pub const KMEANS_ITERATIONS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Group {
    pub source: Vec<EntityId>,
    pub target: Vec<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub groups: Vec<Group>,
    pub source_group: Vec<usize>,
    pub target_group: Vec<usize>,
    /// Set when every seed embedding was identical and a single group was used.
    pub degenerate: bool,
}

impl Partition {
    /// Everything in group 0.
    pub fn single(source_count: usize, target_count: usize) -> Self {
        Self {
            groups: vec![Group {
                source: (0..source_count).collect(),
                target: (0..target_count).collect(),
            }],
            source_group: vec![0; source_count],
            target_group: vec![0; target_count],
            degenerate: false,
        }
    }

    /// Per group, the fraction of `pairs` with a source in the group whose
    /// target is in the same group; `None` for groups holding no such source.
    pub fn equivalence_rates(&self, pairs: &[AlignedPair]) -> Vec<Option<f64>> {
        let mut hit = vec![0usize; self.groups.len()];
        let mut total = vec![0usize; self.groups.len()];
        for &(s, t) in pairs {
            let g = self.source_group[s];
            total[g] += 1;
            if self.target_group[t] == g {
                hit[g] += 1;
            }
        }
        hit.iter()
            .zip(&total)
            .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
            .collect()
    }
}

fn cosine(x: ArrayView1<f64>, c: ArrayView1<f64>, c_norm: f64) -> f64 {
    let xn = x.dot(&x).sqrt();
    if xn == 0.0 || c_norm == 0.0 {
        return 0.0;
    }
    x.dot(&c) / (xn * c_norm)
}

/// Index of the most similar centroid; ties go to the lower index.
fn nearest(x: ArrayView1<f64>, centroids: &Array2<f64>, norms: &[f64]) -> usize {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (c, row) in centroids.outer_iter().enumerate() {
        let sim = cosine(x, row, norms[c]);
        if sim > best_sim {
            best = c;
            best_sim = sim;
        }
    }
    best
}

fn row_norms(m: &Array2<f64>) -> Vec<f64> {
    m.outer_iter().map(|r| r.dot(&r).sqrt()).collect()
}

/// k-means++ seeding with cosine distance `1 − cos`.
fn seed_centroids(points: ArrayView2<f64>, k: usize, rng: &mut SeaRng) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist = vec![f64::INFINITY; n];
    while chosen.len() < k {
        let last = points.row(*chosen.last().expect("non-empty"));
        let last_norm = last.dot(&last).sqrt();
        for (i, d) in dist.iter_mut().enumerate() {
            let di = (1.0 - cosine(points.row(i), last, last_norm)).max(0.0);
            *d = d.min(di * di);
        }
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 && u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            // Rounding can walk past the last positive weight.
            if dist[pick] == 0.0 {
                pick = dist.iter().rposition(|&d| d > 0.0).expect("total > 0");
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
    }
    let mut c = Array2::zeros((k, points.ncols()));
    for (j, &i) in chosen.iter().enumerate() {
        c.row_mut(j).assign(&points.row(i));
    }
    c
}

fn all_identical(points: ArrayView2<f64>) -> bool {
    let first = points.row(0);
    points
        .outer_iter()
        .all(|r| r.iter().zip(first.iter()).all(|(a, b)| (a - b).abs() <= 1e-12))
}

/// Groups entities by seeded spherical k-means over the train-pair sources.
///
/// Each train pair's target joins its source's group; every other entity of
/// either graph joins the group of its most similar centroid. Groups that end
/// up with no entity on either side are dropped.
pub fn partition_entities(
    table: &EmbeddingTable,
    task: &AlignmentTask,
    num_groups: usize,
    rng: &mut SeaRng,
) -> Result<Partition> {
    if num_groups == 0 {
        return Err(Error::InvalidArgument("num_groups must be at least 1".into()));
    }
    if num_groups > task.train_pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "num_groups {num_groups} exceeds the {} train pairs",
            task.train_pairs.len()
        )));
    }
    if table.source_rows() != task.source_count() || table.target_rows() != task.target_count() {
        return Err(Error::DimensionMismatch {
            expected: task.total_entities(),
            found: table.rows(),
        });
    }
    if num_groups == 1 {
        return Ok(Partition::single(task.source_count(), task.target_count()));
    }
    let seeds: Vec<EntityId> = task.train_pairs.iter().map(|p| p.0).collect();
    let points = table.source().select(ndarray::Axis(0), &seeds);
    if all_identical(points.view()) {
        let mut p = Partition::single(task.source_count(), task.target_count());
        p.degenerate = true;
        return Ok(p);
    }

    let mut centroids = seed_centroids(points.view(), num_groups, rng);
    let mut assign = vec![0usize; seeds.len()];
    for _ in 0..KMEANS_ITERATIONS {
        let norms = row_norms(&centroids);
        for (i, a) in assign.iter_mut().enumerate() {
            *a = nearest(points.row(i), &centroids, &norms);
        }
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; num_groups];
        for (i, &a) in assign.iter().enumerate() {
            let r = points.row(i);
            let n = r.dot(&r).sqrt();
            if n > 0.0 {
                sums.row_mut(a).scaled_add(1.0 / n, &r);
            }
            counts[a] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let mean: Array1<f64> = sums.row(c).to_owned() / count as f64;
                centroids.row_mut(c).assign(&mean);
            }
        }
    }

    let norms = row_norms(&centroids);
    let mut source_group: Vec<usize> = table
        .source()
        .outer_iter()
        .map(|r| nearest(r, &centroids, &norms))
        .collect();
    let mut target_group: Vec<usize> = table
        .target()
        .outer_iter()
        .map(|r| nearest(r, &centroids, &norms))
        .collect();
    for &(s, t) in &task.train_pairs {
        target_group[t] = source_group[s];
    }

    let mut remap = vec![usize::MAX; num_groups];
    let mut used = vec![false; num_groups];
    for &g in source_group.iter().chain(&target_group) {
        used[g] = true;
    }
    let mut next = 0;
    for g in 0..num_groups {
        if used[g] {
            remap[g] = next;
            next += 1;
        }
    }
    let mut groups = vec![
        Group {
            source: Vec::new(),
            target: Vec::new()
        };
        next
    ];
    for (e, g) in source_group.iter_mut().enumerate() {
        *g = remap[*g];
        groups[*g].source.push(e);
    }
    for (e, g) in target_group.iter_mut().enumerate() {
        *g = remap[*g];
        groups[*g].target.push(e);
    }
    Ok(Partition {
        groups,
        source_group,
        target_group,
        degenerate: false,
    })
}
