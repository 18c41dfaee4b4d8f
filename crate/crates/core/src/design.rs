//! Stratum and cluster bookkeeping for design-based variance estimation.

use std::collections::BTreeMap;

use rand::Rng;

use crate::data::SurveyDataset;

/// Dense re-indexing of the stratum and cluster columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterDesign {
    /// Dense cluster index of each individual.
    pub cluster_of: Vec<usize>,
    /// Dense stratum index of each cluster.
    pub stratum_of_cluster: Vec<usize>,
    /// Clusters of each stratum, in increasing order of their original ids.
    pub clusters_by_stratum: Vec<Vec<usize>>,
}

impl ClusterDesign {
    /// Assumes clusters are nested in strata (see [`SurveyDataset::validate`]).
    pub fn new(stratum: &[i64], cluster: &[i64]) -> Self {
        let mut strata: BTreeMap<i64, BTreeMap<i64, ()>> = BTreeMap::new();
        for (&s, &c) in stratum.iter().zip(cluster) {
            strata.entry(s).or_default().insert(c, ());
        }
        let mut cluster_index = BTreeMap::new();
        let mut stratum_of_cluster = Vec::new();
        let mut clusters_by_stratum = Vec::with_capacity(strata.len());
        for (h, members) in strata.values().enumerate() {
            let mut ids = Vec::with_capacity(members.len());
            for &c in members.keys() {
                let idx = stratum_of_cluster.len();
                cluster_index.insert(c, idx);
                stratum_of_cluster.push(h);
                ids.push(idx);
            }
            clusters_by_stratum.push(ids);
        }
        let cluster_of = cluster.iter().map(|c| cluster_index[c]).collect();
        ClusterDesign { cluster_of, stratum_of_cluster, clusters_by_stratum }
    }

    pub fn from_dataset(ds: &SurveyDataset) -> Self {
        Self::new(&ds.stratum, &ds.cluster)
    }

    pub fn n_clusters(&self) -> usize {
        self.stratum_of_cluster.len()
    }

    pub fn n_strata(&self) -> usize {
        self.clusters_by_stratum.len()
    }

    /// Residual degrees of freedom `#clusters - #strata`.
    pub fn degrees_of_freedom(&self) -> usize {
        self.n_clusters() - self.n_strata()
    }

    /// Sums `d`-vectors (row-major `n x d`, each scaled by `weight[i]`) within clusters.
    pub fn cluster_totals(&self, values: &[f64], weight: &[f64], d: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_clusters() * d];
        for (i, &c) in self.cluster_of.iter().enumerate() {
            let w = weight[i];
            let dst = &mut out[c * d..(c + 1) * d];
            for (o, v) in dst.iter_mut().zip(&values[i * d..(i + 1) * d]) {
                *o += w * v;
            }
        }
        out
    }

    /// Rao-Wu rescaled bootstrap: in each stratum with `n_h >= 2` clusters,
    /// `n_h - 1` clusters are drawn with replacement and every cluster gets
    /// factor `n_h / (n_h - 1)` times its multiplicity. Single-cluster strata
    /// keep factor one.
    pub fn bootstrap_factors<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut f = vec![1.0; self.n_clusters()];
        for members in &self.clusters_by_stratum {
            let nh = members.len();
            if nh < 2 {
                continue;
            }
            for &c in members {
                f[c] = 0.0;
            }
            let scale = nh as f64 / (nh - 1) as f64;
            for _ in 0..nh - 1 {
                f[members[rng.random_range(0..nh)]] += scale;
            }
        }
        f
    }

    /// Between-cluster covariance of cluster totals (row-major `C x d`),
    /// centered within strata and scaled by `n_h / (n_h - 1)`.
    pub fn linearized_meat(&self, totals: &[f64], d: usize) -> Vec<f64> {
        let mut meat = vec![0.0; d * d];
        let mut mean = vec![0.0; d];
        let mut dev = vec![0.0; d];
        for members in &self.clusters_by_stratum {
            let nh = members.len();
            if nh < 2 {
                continue;
            }
            mean.iter_mut().for_each(|m| *m = 0.0);
            for &c in members {
                for (m, t) in mean.iter_mut().zip(&totals[c * d..(c + 1) * d]) {
                    *m += t / nh as f64;
                }
            }
            let scale = nh as f64 / (nh - 1) as f64;
            for &c in members {
                for a in 0..d {
                    dev[a] = totals[c * d + a] - mean[a];
                }
                for a in 0..d {
                    for b in 0..d {
                        meat[a * d + b] += scale * dev[a] * dev[b];
                    }
                }
            }
        }
        meat
    }
}
