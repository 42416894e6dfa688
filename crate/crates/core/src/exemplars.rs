//! Representative utterances per cluster for prompt construction.
//!
//! Every selector takes the cluster's members in ascending id order and
//! returns at most `m` distinct ids. Ties always go to the lower id.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::weighted_pick;
use crate::config::SelectionStrategy;
use crate::numerics::{cosine, norm, sq_dist};
use crate::types::{ClusterState, EmbeddingMatrix};

/// One cluster member: its utterance id and embedding row.
#[derive(Debug, Clone, Copy)]
pub struct Member<'a> {
    pub id: usize,
    pub row: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub cluster: usize,
    pub member_ids: Vec<usize>,
    pub strategy: SelectionStrategy,
}

fn set(cluster: usize, strategy: SelectionStrategy, member_ids: Vec<usize>) -> ExemplarSet {
    ExemplarSet {
        cluster,
        member_ids,
        strategy,
    }
}

/// Ids sorted by descending score, lower id first on ties.
fn top_m(mut scored: Vec<(usize, f64)>, m: usize) -> Vec<usize> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(m).map(|(id, _)| id).collect()
}

/// D^2 sampling: uniform first pick, then proportional to the squared
/// distance to the nearest pick so far (uniform among the rest once all
/// those distances vanish).
pub fn select_kmeanspp(cluster: usize, members: &[Member<'_>], m: usize, rng: &mut ChaCha8Rng) -> ExemplarSet {
    let n = members.len();
    let take = m.min(n);
    let mut picked = Vec::with_capacity(take);
    if take > 0 {
        let mut chosen = vec![false; n];
        let all: Vec<usize> = (0..n).collect();
        let first = weighted_pick(rng, &[], &all);
        chosen[first] = true;
        picked.push(first);
        let mut g: Vec<f64> = members.iter().map(|p| sq_dist(p.row, members[first].row)).collect();
        while picked.len() < take {
            g.iter_mut().zip(&chosen).filter(|(_, &c)| c).for_each(|(w, _)| *w = 0.0);
            let rest: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            let next = weighted_pick(rng, &g, &rest);
            chosen[next] = true;
            picked.push(next);
            for (w, p) in g.iter_mut().zip(members) {
                *w = w.min(sq_dist(p.row, members[next].row));
            }
        }
    }
    set(cluster, SelectionStrategy::Kmeanspp, picked.into_iter().map(|i| members[i].id).collect())
}

/// Members with the largest mean Euclidean distance to the other members.
pub fn select_mad(cluster: usize, members: &[Member<'_>], m: usize) -> ExemplarSet {
    let n = members.len();
    let scored = members
        .iter()
        .map(|p| {
            if n < 2 {
                return (p.id, 0.0);
            }
            let total: f64 = members
                .iter()
                .filter(|q| q.id != p.id)
                .map(|q| sq_dist(p.row, q.row).sqrt())
                .sum();
            (p.id, total / (n - 1) as f64)
        })
        .collect();
    set(cluster, SelectionStrategy::Mad, top_m(scored, m))
}

/// Greedy maximal marginal relevance: relevance is cosine to the centroid,
/// redundancy the largest cosine to an already chosen exemplar. Zero rows
/// are skipped. A zero centroid gives every member zero relevance.
pub fn select_mmr(cluster: usize, members: &[Member<'_>], centroid: &[f64], m: usize) -> ExemplarSet {
    let usable: Vec<&Member<'_>> = members
        .iter()
        .filter(|p| {
            let ok = norm(p.row) > 0.0;
            if !ok {
                tracing::warn!(id = p.id, "zero embedding skipped during exemplar selection");
            }
            ok
        })
        .collect();
    let relevance: Vec<f64> = usable
        .iter()
        .map(|p| cosine(p.row, centroid).unwrap_or(0.0))
        .collect();
    let take = m.min(usable.len());
    let mut chosen: Vec<usize> = Vec::with_capacity(take);
    let mut redundancy = vec![f64::NEG_INFINITY; usable.len()];
    while chosen.len() < take {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..usable.len() {
            if chosen.contains(&i) {
                continue;
            }
            let score = if chosen.is_empty() {
                relevance[i]
            } else {
                relevance[i] - redundancy[i]
            };
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let (pick, _) = best.expect("candidates remain while below take");
        chosen.push(pick);
        for (i, r) in redundancy.iter_mut().enumerate() {
            let sim = cosine(usable[i].row, usable[pick].row).expect("non-zero rows");
            *r = r.max(sim);
        }
    }
    set(cluster, SelectionStrategy::Mmr, chosen.into_iter().map(|i| usable[i].id).collect())
}

/// Members with the largest summed cosine similarity to all other members.
/// Zero rows neither score nor get selected.
pub fn select_nn(cluster: usize, members: &[Member<'_>], m: usize) -> ExemplarSet {
    let usable: Vec<&Member<'_>> = members.iter().filter(|p| norm(p.row) > 0.0).collect();
    let scored = usable
        .iter()
        .map(|p| {
            let c: f64 = usable
                .iter()
                .filter(|q| q.id != p.id)
                .map(|q| cosine(p.row, q.row).expect("non-zero rows"))
                .sum();
            (p.id, c)
        })
        .collect();
    set(cluster, SelectionStrategy::Nn, top_m(scored, m))
}

/// RNG for K-Means++ selection of `cluster` in macro iteration `iteration`:
/// the run seed with a dedicated ChaCha stream per (iteration, cluster).
pub fn selection_rng(seed: u64, iteration: usize, cluster: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 32) | cluster as u64);
    rng
}

/// Selects exemplars for every cluster of `state`.
pub fn select_all(
    x: &EmbeddingMatrix,
    state: &ClusterState,
    m: usize,
    strategy: SelectionStrategy,
    seed: u64,
    iteration: usize,
) -> Vec<ExemplarSet> {
    (0..state.k)
        .map(|k| {
            let ids = state.members(k);
            let members: Vec<Member<'_>> = ids.iter().map(|&id| Member { id, row: x.row(id) }).collect();
            match strategy {
                SelectionStrategy::Kmeanspp => {
                    select_kmeanspp(k, &members, m, &mut selection_rng(seed, iteration, k))
                }
                SelectionStrategy::Mad => select_mad(k, &members, m),
                SelectionStrategy::Mmr => select_mmr(k, &members, &state.mu[k], m),
                SelectionStrategy::Nn => select_nn(k, &members, m),
            }
        })
        .collect()
}
