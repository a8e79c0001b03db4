//! Behavioral grouping of a population.
//!
//! Candidates are compared by the Jaccard overlap of their passed-test sets,
//! clustered bottom-up with average linkage on the distance `1 - sim`, and
//! finally singleton groups are repaired so that every group can serve as a
//! recombination pool.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CandidateId, EvaluatedCandidate, Signature};

/// Linkage values closer than this are treated as equal and resolved by the
/// candidate-id tie rule.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupingError {
    #[error("cannot form {k} clusters from {n} candidates")]
    BadClusterCount { k: usize, n: usize },
    #[error("duplicate candidate id {0}")]
    DuplicateId(CandidateId),
}

/// `|a ∩ b| / |a ∪ b|`, and 0 when both sets are empty.
pub fn jaccard_similarity(a: &Signature, b: &Signature) -> f64 {
    let union = a.union_len(b);
    if union == 0 {
        0.0
    } else {
        a.intersection_len(b) as f64 / union as f64
    }
}

/// Pairwise similarity over a fixed list of candidates.
///
/// The diagonal holds each candidate's similarity with itself under the same
/// rule, so it is 0 for a candidate that passes nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    ids: Vec<CandidateId>,
    values: Vec<f64>,
    #[serde(skip)]
    positions: HashMap<CandidateId, usize>,
}

impl SimilarityMatrix {
    pub fn from_candidates(candidates: &[EvaluatedCandidate]) -> Self {
        let ids: Vec<CandidateId> = candidates.iter().map(|c| c.id()).collect();
        let signatures: Vec<&Signature> = candidates.iter().map(|c| c.signature()).collect();
        Self::from_signatures(ids, &signatures)
    }

    pub fn from_signatures(ids: Vec<CandidateId>, signatures: &[&Signature]) -> Self {
        let n = ids.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let s = jaccard_similarity(signatures[i], signatures[j]);
                values[i * n + j] = s;
                values[j * n + i] = s;
            }
        }
        let positions = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        Self {
            ids,
            values,
            positions,
        }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[CandidateId] {
        &self.ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    /// Similarity by candidate id. Panics on an unknown id.
    pub fn between(&self, a: CandidateId, b: CandidateId) -> f64 {
        self.get(self.position(a), self.position(b))
    }

    fn position(&self, id: CandidateId) -> usize {
        match self.positions.get(&id) {
            Some(&p) => p,
            None => self
                .ids
                .iter()
                .position(|x| *x == id)
                .unwrap_or_else(|| panic!("{id} not in similarity matrix")),
        }
    }

    /// Mean similarity between `id` and every member of `group`.
    pub fn mean_to_group(&self, id: CandidateId, group: &[CandidateId]) -> f64 {
        if group.is_empty() {
            return 0.0;
        }
        group.iter().map(|&m| self.between(id, m)).sum::<f64>() / group.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSet {
    pub generation: usize,
    /// Non-empty, disjoint groups; members sorted by id.
    pub groups: Vec<Vec<CandidateId>>,
    /// Cluster count requested from the clustering step.
    pub effective_k: usize,
}

impl GroupSet {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = CandidateId> + '_ {
        self.groups.iter().flatten().copied()
    }
}

/// `max(1, min(k_max, floor(n_g / 2)))`.
pub fn effective_group_count(n_g: usize, k_max: usize) -> usize {
    (n_g / 2).min(k_max).max(1)
}

/// Average-linkage agglomerative clustering into exactly `k` groups.
///
/// Starting from singletons, the pair of clusters with the smallest mean
/// pairwise distance is merged until `k` remain. Equal distances are
/// resolved toward the pair whose smallest member ids are lowest, so the
/// result depends on ids only and not on input order. Groups are returned
/// ordered by their smallest id.
pub fn cluster(
    candidates: &[EvaluatedCandidate],
    k: usize,
) -> Result<Vec<Vec<CandidateId>>, GroupingError> {
    let n = candidates.len();
    if k == 0 || k > n {
        return Err(GroupingError::BadClusterCount { k, n });
    }
    let mut ids: Vec<CandidateId> = candidates.iter().map(|c| c.id()).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(GroupingError::DuplicateId(w[0]));
    }
    let sim = SimilarityMatrix::from_candidates(candidates);

    // Cluster slots indexed by candidate position; `None` once merged away.
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let mut min_id: Vec<CandidateId> = candidates.iter().map(|c| c.id()).collect();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            dist[i * n + j] = 1.0 - sim.get(i, j);
        }
    }

    let mut active = n;
    while active > k {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if members[i].is_none() {
                continue;
            }
            for j in (i + 1)..n {
                if members[j].is_none() {
                    continue;
                }
                let d = dist[i * n + j];
                let better = match best {
                    None => true,
                    Some((bi, bj, bd)) => {
                        if d < bd - TIE_TOLERANCE {
                            true
                        } else if d <= bd + TIE_TOLERANCE {
                            pair_key(&min_id, i, j) < pair_key(&min_id, bi, bj)
                        } else {
                            false
                        }
                    }
                };
                if better {
                    best = Some((i, j, d));
                }
            }
        }
        let (a, b, _) = best.expect("at least two active clusters");
        let size_a = members[a].as_ref().map_or(0, Vec::len) as f64;
        let size_b = members[b].as_ref().map_or(0, Vec::len) as f64;
        // Lance-Williams update for average linkage.
        for c in 0..n {
            if c == a || c == b || members[c].is_none() {
                continue;
            }
            let merged = (size_a * dist[a * n + c] + size_b * dist[b * n + c]) / (size_a + size_b);
            dist[a * n + c] = merged;
            dist[c * n + a] = merged;
        }
        let absorbed = members[b].take().expect("active cluster");
        members[a].as_mut().expect("active cluster").extend(absorbed);
        min_id[a] = min_id[a].min(min_id[b]);
        active -= 1;
    }

    let mut groups: Vec<Vec<CandidateId>> = members
        .into_iter()
        .flatten()
        .map(|positions| {
            let mut g: Vec<CandidateId> = positions.into_iter().map(|p| candidates[p].id()).collect();
            g.sort();
            g
        })
        .collect();
    groups.sort_by_key(|g| g[0]);
    Ok(groups)
}

fn pair_key(min_id: &[CandidateId], i: usize, j: usize) -> (CandidateId, CandidateId) {
    let (x, y) = (min_id[i], min_id[j]);
    if x <= y {
        (x, y)
    } else {
        (y, x)
    }
}

/// Repairs singleton groups, visiting them in ascending group index.
///
/// For a singleton `{c}`, the nearest other group is the one with the
/// highest mean similarity to `c` (lowest index on ties). If it has at least
/// three members, its member most similar to `c` moves into the singleton;
/// otherwise `c` joins that group.
pub fn rebalance_singletons(gs: GroupSet, sim: &SimilarityMatrix) -> GroupSet {
    let GroupSet {
        generation,
        mut groups,
        effective_k,
    } = gs;
    if groups.len() <= 1 {
        return GroupSet {
            generation,
            groups,
            effective_k,
        };
    }
    let mut i = 0;
    while i < groups.len() {
        if groups[i].len() != 1 || groups.len() == 1 {
            i += 1;
            continue;
        }
        let lone = groups[i][0];
        let mut nearest: Option<(usize, f64)> = None;
        for (j, group) in groups.iter().enumerate() {
            if j == i {
                continue;
            }
            let s = sim.mean_to_group(lone, group);
            if nearest.is_none_or(|(_, best)| s > best + TIE_TOLERANCE) {
                nearest = Some((j, s));
            }
        }
        let (j, _) = nearest.expect("another group exists");
        if groups[j].len() >= 3 {
            let mut pick: Option<(usize, f64)> = None;
            for (pos, &member) in groups[j].iter().enumerate() {
                let s = sim.between(lone, member);
                if pick.is_none_or(|(_, best)| s > best + TIE_TOLERANCE) {
                    pick = Some((pos, s));
                }
            }
            let (pos, _) = pick.expect("non-empty group");
            let moved = groups[j].remove(pos);
            groups[i].push(moved);
            groups[i].sort();
            i += 1;
        } else {
            groups[j].push(lone);
            groups[j].sort();
            groups.remove(i);
        }
    }
    GroupSet {
        generation,
        groups,
        effective_k,
    }
}

/// Full grouping step for one generation: similarity, effective group count,
/// clustering and singleton repair.
pub fn behavioral_grouping(
    population: &[EvaluatedCandidate],
    k_max: usize,
    generation: usize,
) -> Result<(GroupSet, SimilarityMatrix), GroupingError> {
    let sim = SimilarityMatrix::from_candidates(population);
    let k = effective_group_count(population.len(), k_max);
    let groups = cluster(population, k)?;
    let gs = GroupSet {
        generation,
        groups,
        effective_k: k,
    };
    Ok((rebalance_singletons(gs, &sim), sim))
}


#[cfg(test)]
mod tests {
    use super::test_support::candidate;
    use super::*;

    fn sig(v: &[usize]) -> Signature {
        Signature::new(v.iter().copied())
    }

    fn ids(groups: &[Vec<CandidateId>]) -> Vec<Vec<u64>> {
        groups.iter().map(|g| g.iter().map(|c| c.0).collect()).collect()
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard_similarity(&sig(&[1, 2, 3]), &sig(&[2, 3, 4])), 0.5);
        assert_eq!(jaccard_similarity(&sig(&[]), &sig(&[])), 0.0);
        assert_eq!(jaccard_similarity(&sig(&[1]), &sig(&[1])), 1.0);
    }

    #[test]
    fn effective_group_count_examples() {
        assert_eq!(effective_group_count(6, 2), 2);
        assert_eq!(effective_group_count(1, 2), 1);
        assert_eq!(effective_group_count(5, 10), 2);
    }

    #[test]
    fn cluster_examples() {
        let three = vec![candidate(1, &[1, 2], 9), candidate(2, &[1, 2], 9), candidate(3, &[9], 9)];
        assert_eq!(ids(&cluster(&three, 2).unwrap()), vec![vec![1, 2], vec![3]]);

        let same = vec![candidate(1, &[1], 3), candidate(2, &[1], 3), candidate(3, &[1], 3)];
        assert_eq!(ids(&cluster(&same, 1).unwrap()), vec![vec![1, 2, 3]]);

        let four = vec![
            candidate(1, &[1, 2], 9),
            candidate(2, &[1, 2, 3], 9),
            candidate(3, &[7, 8], 9),
            candidate(4, &[8, 9], 9),
        ];
        assert_eq!(ids(&cluster(&four, 2).unwrap()), vec![vec![1, 2], vec![3, 4]]);
    }

    #[test]
    fn cluster_rejects_bad_k() {
        let two = vec![candidate(1, &[1], 2), candidate(2, &[2], 2)];
        assert_eq!(
            cluster(&two, 3).unwrap_err(),
            GroupingError::BadClusterCount { k: 3, n: 2 }
        );
        assert!(cluster(&two, 0).is_err());
    }

    fn set(groups: Vec<Vec<u64>>) -> GroupSet {
        GroupSet {
            generation: 0,
            groups: groups
                .into_iter()
                .map(|g| g.into_iter().map(CandidateId).collect())
                .collect(),
            effective_k: 2,
        }
    }

    #[test]
    fn rebalance_borrows_from_large_group() {
        // d = candidate 4 is closest to c = candidate 3.
        let pop = vec![
            candidate(1, &[1], 6),
            candidate(2, &[2], 6),
            candidate(3, &[3, 4], 6),
            candidate(4, &[4], 6),
        ];
        let sim = SimilarityMatrix::from_candidates(&pop);
        let out = rebalance_singletons(set(vec![vec![1, 2, 3], vec![4]]), &sim);
        assert_eq!(ids(&out.groups), vec![vec![1, 2], vec![3, 4]]);
    }

    #[test]
    fn rebalance_merges_into_small_group() {
        let pop = vec![candidate(1, &[1], 3), candidate(2, &[2], 3), candidate(3, &[3], 3)];
        let sim = SimilarityMatrix::from_candidates(&pop);
        let out = rebalance_singletons(set(vec![vec![1, 2], vec![3]]), &sim);
        assert_eq!(ids(&out.groups), vec![vec![1, 2, 3]]);
    }

    #[test]
    fn rebalance_without_singletons_is_identity() {
        let pop: Vec<_> = (1..=4).map(|i| candidate(i, &[i as usize], 4)).collect();
        let sim = SimilarityMatrix::from_candidates(&pop);
        let gs = set(vec![vec![1, 2], vec![3, 4]]);
        assert_eq!(rebalance_singletons(gs.clone(), &sim), gs);
        let single = set(vec![vec![1]]);
        assert_eq!(rebalance_singletons(single.clone(), &sim), single);
    }

    #[test]
    fn similarity_matrix_is_symmetric() {
        let pop = vec![candidate(1, &[1, 2], 3), candidate(2, &[2, 3], 3), candidate(3, &[], 3)];
        let sim = SimilarityMatrix::from_candidates(&pop);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(sim.get(i, j), sim.get(j, i));
            }
        }
        assert_eq!(sim.get(0, 0), 1.0);
        assert_eq!(sim.get(2, 2), 0.0);
        assert!((sim.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    }
}
