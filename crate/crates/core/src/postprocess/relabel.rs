//! Label-switching resolution by clustering the posterior co-assignment matrix.

use kodama::{linkage, Method};
use serde::{Deserialize, Serialize};

use crate::assign::max_score_assignment;
use crate::error::{Error, Result};
use crate::gibbs::ChainOutput;

/// Individuals used for the pairwise similarity matrix.
pub const SIMILARITY_SUBSAMPLE: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelabeledChain {
    pub chain: ChainOutput,
    /// `permutations[m][k]`: label that raw class `k` of draw `m` was mapped to.
    pub permutations: Vec<Vec<usize>>,
    /// Individuals (row indices) the reference partition was built on.
    pub subsample: Vec<usize>,
    /// Reference class of each subsampled individual.
    pub reference: Vec<usize>,
}

impl RelabeledChain {
    /// Undoes the relabeling, recovering the input chain.
    pub fn original(&self) -> ChainOutput {
        let mut out = self.chain.clone();
        for (m, perm) in self.permutations.iter().enumerate() {
            let inv = invert(perm);
            out.draws[m] = out.draws[m].permuted(&inv);
            for c in out.c_draws[m].iter_mut() {
                *c = inv[*c as usize] as u16;
            }
        }
        out
    }

    /// Per-individual most frequent relabeled class; ties go to the smaller label.
    pub fn modal_classes(&self) -> Vec<usize> {
        modal_classes(&self.chain)
    }
}

pub fn modal_classes(chain: &ChainOutput) -> Vec<usize> {
    let n = chain.c_draws.first().map_or(0, |c| c.len());
    let mut counts = vec![0u32; n * chain.k];
    for draw in &chain.c_draws {
        for (i, &c) in draw.iter().enumerate() {
            counts[i * chain.k + c as usize] += 1;
        }
    }
    (0..n)
        .map(|i| {
            let row = &counts[i * chain.k..(i + 1) * chain.k];
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub(crate) fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (from, &to) in perm.iter().enumerate() {
        inv[to] = from;
    }
    inv
}

/// Evenly spaced row indices, at most `cap` of them.
pub(crate) fn subsample_indices(n: usize, cap: usize) -> Vec<usize> {
    let m = n.min(cap);
    (0..m).map(|t| t * n / m).collect()
}

/// Complete-linkage clustering of `1 - S` cut into `k` groups, where `S` is
/// the fraction of draws placing two individuals in the same class. Groups are
/// numbered in order of their first member.
pub fn reference_partition(c_draws: &[Vec<u16>], rows: &[usize], k: usize) -> Result<Vec<usize>> {
    let m = rows.len();
    if m < k {
        return Err(Error::invalid(format!("cannot form {k} groups from {m} individuals")));
    }
    if m == 1 {
        return Ok(vec![0]);
    }
    let mut together = vec![0u32; m * (m - 1) / 2];
    let mut labels = vec![0u16; m];
    for draw in c_draws {
        for (t, &i) in rows.iter().enumerate() {
            labels[t] = draw[i];
        }
        let mut idx = 0;
        for a in 0..m {
            let la = labels[a];
            for &lb in &labels[a + 1..] {
                together[idx] += (la == lb) as u32;
                idx += 1;
            }
        }
    }
    let total = c_draws.len().max(1) as f64;
    let mut dissim: Vec<f64> = together.iter().map(|&c| 1.0 - c as f64 / total).collect();
    let dendrogram = linkage(&mut dissim, m, Method::Complete);

    // Replay the first m - k merges with a union-find over observations.
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut rep: Vec<usize> = (0..m).collect();
    for step in dendrogram.steps().iter().take(m - k) {
        let a = find(&mut parent, rep[step.cluster1]);
        let b = find(&mut parent, rep[step.cluster2]);
        parent[b] = a;
        rep.push(a);
    }
    let mut group_of_root = vec![usize::MAX; m];
    let mut next = 0;
    let mut out = Vec::with_capacity(m);
    for t in 0..m {
        let root = find(&mut parent, t);
        if group_of_root[root] == usize::MAX {
            group_of_root[root] = next;
            next += 1;
        }
        out.push(group_of_root[root]);
    }
    Ok(out)
}

/// Relabels every kept draw to agree with a reference partition.
pub fn relabel(chain: &ChainOutput, k_hat: usize) -> Result<RelabeledChain> {
    if chain.draws.is_empty() {
        return Err(Error::invalid("cannot relabel an empty chain"));
    }
    if chain.k != k_hat {
        return Err(Error::invalid(format!(
            "chain has K={} but relabeling was asked for {k_hat} classes",
            chain.k
        )));
    }
    let mut seen = vec![false; chain.k];
    for draw in &chain.c_draws {
        for &c in draw {
            seen[c as usize] = true;
        }
    }
    let distinct = seen.iter().filter(|s| **s).count();
    if k_hat > distinct {
        return Err(Error::invalid(format!(
            "requested {k_hat} classes but only {distinct} labels were ever assigned"
        )));
    }
    let n = chain.c_draws[0].len();
    let rows = subsample_indices(n, SIMILARITY_SUBSAMPLE);
    let reference = reference_partition(&chain.c_draws, &rows, k_hat)?;

    let k = chain.k;
    let mut out = chain.clone();
    let mut permutations = Vec::with_capacity(chain.draws.len());
    let mut table = vec![vec![0.0; k]; k];
    for m in 0..chain.draws.len() {
        for row in table.iter_mut() {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
        for (t, &i) in rows.iter().enumerate() {
            table[chain.c_draws[m][i] as usize][reference[t]] += 1.0;
        }
        let perm = max_score_assignment(&table);
        out.draws[m] = chain.draws[m].permuted(&perm);
        for c in out.c_draws[m].iter_mut() {
            *c = perm[*c as usize] as u16;
        }
        permutations.push(perm);
    }
    Ok(RelabeledChain { chain: out, permutations, subsample: rows, reference })
}
