//! Cross-group sampling: entropy-weighted construction of mixed groups that
//! draw members from several behavior groups.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grouping::{GroupSet, SimilarityMatrix};
use crate::model::CandidateId;

/// Total group entropy at or below this value means the weighting carries no
/// information and candidates are redistributed evenly instead.
pub const FALLBACK_THRESHOLD: f64 = 1e-12;

/// Slack applied before taking the ceiling of a weighted share, so that a
/// share like `2.0000000000000004` still counts as 2.
const CEIL_SLACK: f64 = 1e-9;

/// Diversity score `max(0, -Σ_{a<b} q_ab ln(q_ab + eps))` over the pairwise
/// similarities `q_ab` of one group, with the natural logarithm.
pub fn group_entropy(members: &[CandidateId], sim: &SimilarityMatrix, eps: f64) -> f64 {
    let mut total = 0.0;
    for (i, &a) in members.iter().enumerate() {
        for &b in &members[i + 1..] {
            let q = sim.between(a, b);
            if q > 0.0 {
                total -= q * (q + eps).ln();
            }
        }
    }
    total.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Allocation {
    /// Per-group draw counts `n_k`.
    Weighted(Vec<usize>),
    /// Entropy weighting is uninformative.
    Fallback,
}

/// Per-group draw counts `n_k = min(|G_k|, ceil(E · H_k / Σ H_j))`.
///
/// The sum may exceed `e`; see [`trim_allocation`].
pub fn allocate_samples(entropies: &[f64], group_sizes: &[usize], e: usize) -> Allocation {
    assert_eq!(entropies.len(), group_sizes.len(), "misaligned allocation inputs");
    if entropies.iter().any(|h| !h.is_finite()) {
        return Allocation::Fallback;
    }
    let total: f64 = entropies.iter().sum();
    if total <= FALLBACK_THRESHOLD {
        return Allocation::Fallback;
    }
    Allocation::Weighted(
        entropies
            .iter()
            .zip(group_sizes)
            .map(|(&h, &size)| {
                let share = e as f64 * h / total;
                let n = (share - CEIL_SLACK).ceil().max(0.0) as usize;
                n.min(size)
            })
            .collect(),
    )
}

/// Removes draws one at a time from the group with the smallest entropy
/// (lowest index on ties) that still has draws, until the total is `e`.
pub fn trim_allocation(counts: &mut [usize], entropies: &[f64], e: usize) {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| entropies[a].total_cmp(&entropies[b]).then(a.cmp(&b)));
    let mut total: usize = counts.iter().sum();
    while total > e {
        let k = *order
            .iter()
            .find(|&&k| counts[k] > 0)
            .expect("positive total has a non-zero group");
        counts[k] -= 1;
        total -= 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedGroupPlan {
    pub entropies: Vec<f64>,
    /// Draws per behavior group, aligned with the group set; empty on fallback.
    pub per_group_allocation: Vec<usize>,
    /// Mixed groups with at least two members, each sorted by id.
    pub mixed_groups: Vec<Vec<CandidateId>>,
    pub used_fallback: bool,
}

/// Builds `crossing_groups` mixed groups of target size `group_size`.
///
/// On the weighted path every mixed group is sampled independently: `n_k`
/// members are drawn without replacement from each behavior group and the
/// draws are united. On fallback the whole population is shuffled and dealt
/// round-robin into the mixed groups, at most `group_size` each. Groups with
/// fewer than two members are discarded.
pub fn build_mixed_groups<R: Rng + ?Sized>(
    gs: &GroupSet,
    sim: &SimilarityMatrix,
    crossing_groups: usize,
    group_size: usize,
    entropy_epsilon: f64,
    rng: &mut R,
) -> MixedGroupPlan {
    let entropies: Vec<f64> = gs
        .groups
        .iter()
        .map(|g| group_entropy(g, sim, entropy_epsilon))
        .collect();
    if crossing_groups == 0 || gs.is_empty() {
        return MixedGroupPlan {
            entropies,
            per_group_allocation: Vec::new(),
            mixed_groups: Vec::new(),
            used_fallback: false,
        };
    }
    let sizes: Vec<usize> = gs.groups.iter().map(Vec::len).collect();
    match allocate_samples(&entropies, &sizes, group_size) {
        Allocation::Weighted(mut counts) => {
            trim_allocation(&mut counts, &entropies, group_size);
            let mixed_groups = (0..crossing_groups)
                .map(|_| {
                    let mut drawn: Vec<CandidateId> = gs
                        .groups
                        .iter()
                        .zip(&counts)
                        .flat_map(|(g, &n)| g.choose_multiple(rng, n).copied().collect::<Vec<_>>())
                        .collect();
                    drawn.sort();
                    drawn
                })
                .filter(|g| g.len() >= 2)
                .collect();
            MixedGroupPlan {
                entropies,
                per_group_allocation: counts,
                mixed_groups,
                used_fallback: false,
            }
        }
        Allocation::Fallback => {
            let mut everyone: Vec<CandidateId> = gs.members().collect();
            everyone.sort();
            everyone.shuffle(rng);
            let mut mixed: Vec<Vec<CandidateId>> = vec![Vec::new(); crossing_groups];
            for (i, id) in everyone.into_iter().take(crossing_groups * group_size).enumerate() {
                mixed[i % crossing_groups].push(id);
            }
            let mixed_groups = mixed
                .into_iter()
                .map(|mut g| {
                    g.sort();
                    g
                })
                .filter(|g| g.len() >= 2)
                .collect();
            MixedGroupPlan {
                entropies,
                per_group_allocation: Vec::new(),
                mixed_groups,
                used_fallback: true,
            }
        }
    }
}
