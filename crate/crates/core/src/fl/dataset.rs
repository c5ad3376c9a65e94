//! In-memory labelled datasets, seeded splits and client partitions.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Row-major features with integer labels in `0..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dataset("feature dimension must be at least 1".into()));
        }
        if labels.is_empty() {
            return Err(Error::Dataset("dataset is empty".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Dataset(alloc::format!(
                "{} features for {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dataset(alloc::format!("non-finite feature in row {}", i / dim)));
        }
        if let Some(i) = labels.iter().position(|&y| y >= classes) {
            return Err(Error::Dataset(alloc::format!("label {} in row {i} is not below {classes}", labels[i])));
        }
        Ok(Self { features, labels, dim, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            features.extend_from_slice(self.x(i));
        }
        Self { features, labels: idx.iter().map(|&i| self.labels[i]).collect(), dim: self.dim, classes: self.classes }
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }
}

/// Gaussian clusters: one centre per class drawn as `offset + separation · N(0, I)`,
/// points as `centre + spread · N(0, I)`. A positive `offset` mimics
/// non-negative, image-like features that share a large common mean.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlobParams {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub spread: f64,
    pub separation: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub offset: f64,
    pub seed: u64,
}

pub fn synthetic_blobs(p: &BlobParams) -> Result<Dataset> {
    if p.classes < 2 || p.dim == 0 || p.per_class == 0 {
        return Err(Error::invalid("blobs", "need classes >= 2, dim >= 1, per_class >= 1"));
    }
    if !(p.spread.is_finite()
        && p.spread >= 0.0
        && p.separation.is_finite()
        && p.separation >= 0.0
        && p.offset.is_finite())
    {
        return Err(Error::invalid("blobs", "spread and separation must be finite and non-negative, offset finite"));
    }
    let mut centre_rng = rng::keyed(p.seed, Purpose::DatasetSample, &[0]);
    let centres: Vec<f64> =
        (0..p.classes * p.dim).map(|_| p.offset + p.separation * centre_rng.sample::<f64, _>(StandardNormal)).collect();
    let mut features = Vec::with_capacity(p.classes * p.per_class * p.dim);
    let mut labels = Vec::with_capacity(p.classes * p.per_class);
    let mut point_rng = rng::keyed(p.seed, Purpose::DatasetSample, &[1]);
    for c in 0..p.classes {
        let centre = &centres[c * p.dim..(c + 1) * p.dim];
        for _ in 0..p.per_class {
            features.extend(centre.iter().map(|&m| m + p.spread * point_rng.sample::<f64, _>(StandardNormal)));
            labels.push(c);
        }
    }
    Dataset::new(features, labels, p.dim, p.classes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

/// Seeded shuffle, then the first 80% (rounded down, at least one row each side) trains.
pub fn train_test_split(data: &Dataset, seed: u64) -> Result<Split> {
    if data.len() < 2 {
        return Err(Error::Dataset("need at least two rows to split".into()));
    }
    let mut idx = data.indices();
    idx.shuffle(&mut rng::keyed(seed, Purpose::DatasetSplit, &[]));
    let cut = (data.len() * 4 / 5).clamp(1, data.len() - 1);
    Ok(Split { train: data.subset(&idx[..cut]), test: data.subset(&idx[cut..]) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PartitionKind {
    /// Row `i` goes to client `i mod K`.
    #[default]
    Iid,
    /// Sort by label, cut into `2K` contiguous blocks, give each client two
    /// blocks from a seeded shuffle of the block order.
    NonIid,
}

pub fn partition(labels: &[usize], clients: usize, kind: PartitionKind, seed: u64) -> Result<Vec<Vec<usize>>> {
    if clients == 0 {
        return Err(Error::invalid("clients", "must be at least 1"));
    }
    let blocks = match kind {
        PartitionKind::Iid => clients,
        PartitionKind::NonIid => 2 * clients,
    };
    if labels.len() < blocks {
        return Err(Error::Dataset(alloc::format!("{} training rows cannot fill {blocks} shards", labels.len())));
    }
    match kind {
        PartitionKind::Iid => {
            let mut shards = alloc::vec![Vec::new(); clients];
            for i in 0..labels.len() {
                shards[i % clients].push(i);
            }
            Ok(shards)
        }
        PartitionKind::NonIid => {
            let mut order: Vec<usize> = (0..labels.len()).collect();
            order.sort_by_key(|&i| labels[i]);
            let n = order.len();
            let cuts: Vec<&[usize]> = (0..blocks).map(|b| &order[b * n / blocks..(b + 1) * n / blocks]).collect();
            let mut deal: Vec<usize> = (0..blocks).collect();
            deal.shuffle(&mut rng::keyed(seed, Purpose::Partition, &[]));
            Ok((0..clients)
                .map(|c| {
                    let mut shard = cuts[deal[2 * c]].to_vec();
                    shard.extend_from_slice(cuts[deal[2 * c + 1]]);
                    shard
                })
                .collect())
        }
    }
}

/// Draws `count` indices uniformly with replacement from `shard`.
pub fn sample_batch<R: Rng>(shard: &[usize], count: usize, rng: &mut R) -> Vec<usize> {
    (0..count).map(|_| shard[rng.random_range(0..shard.len())]).collect()
}
