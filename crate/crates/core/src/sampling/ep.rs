use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SamplePlan, Strata};
use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::seed::SeedStream;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpReport {
    pub emitted: usize,
    /// Strata whose distinct triples ran out before their target was met.
    pub exhausted_strata: Vec<String>,
}

/// First `k` positions of a uniform permutation of `0..n`, using a sparse
/// Fisher-Yates so memory stays `O(k)`.
pub(crate) fn partial_permutation<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let k = k.min(n);
    let mut swapped: HashMap<usize, usize> = HashMap::with_capacity(k);
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let j = rng.random_range(i..n);
        let vj = *swapped.get(&j).unwrap_or(&j);
        let vi = *swapped.get(&i).unwrap_or(&i);
        swapped.insert(j, vi);
        out.push(vj);
    }
    out
}

/// Real triples drawn per stratum without replacement; a stratum only
/// repeats triples once all of its distinct triples have been used.
pub fn sample_ep(strata: &Strata, plan: &SamplePlan) -> Result<(Vec<Edge>, EpReport)> {
    let mut out = Vec::with_capacity(plan.ep.values().sum());
    let mut report = EpReport::default();
    let mut deficit = 0usize;
    let mut live: BTreeMap<&str, &Vec<Edge>> = BTreeMap::new();
    for (g, &target) in &plan.ep {
        let pool = match strata.all.get(g) {
            Some(p) if !p.is_empty() => p,
            _ => {
                deficit += target;
                continue;
            }
        };
        live.insert(g, pool);
        draw_stratum(pool, g, target, 0, plan.seed, &mut out, &mut report);
    }
    if deficit > 0 {
        // Only reachable with hand-built plans that target empty strata.
        let Some((g, pool)) = live.into_iter().next() else {
            return Err(Error::Sampling("no triples available for entity prediction".into()));
        };
        let start = plan.ep[g];
        draw_stratum(pool, g, deficit, start, plan.seed, &mut out, &mut report);
    }
    report.emitted = out.len();
    Ok((out, report))
}

fn draw_stratum(
    pool: &[Edge],
    group: &str,
    count: usize,
    start: usize,
    seed: u64,
    out: &mut Vec<Edge>,
    report: &mut EpReport,
) {
    let n = pool.len();
    let stream = SeedStream::new(seed).scope("ep").scope(group);
    let mut ordinal = start;
    let end = start + count;
    if end > n && !report.exhausted_strata.iter().any(|g| g == group) {
        report.exhausted_strata.push(group.to_string());
    }
    while ordinal < end {
        let cycle = ordinal / n;
        let offset = ordinal % n;
        let take = (end - ordinal).min(n - offset);
        let mut rng = stream.index(cycle as u64).rng();
        let perm = partial_permutation(n, offset + take, &mut rng);
        out.extend(perm[offset..].iter().map(|&i| pool[i]));
        ordinal += take;
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graph::{Concept, KnowledgeGraph, Triple};
    use crate::relation::RelationType;
    use crate::sampling::{plan_with, GroupEquality, TaskSizes};

    #[test]
    fn partial_permutation_is_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = partial_permutation(1000, 1000, &mut rng);
        assert_eq!(p.iter().collect::<HashSet<_>>().len(), 1000);
        let p = partial_permutation(10, 4, &mut rng);
        assert_eq!(p.len(), 4);
        assert!(p.iter().all(|&x| x < 10));
    }

    fn chain(n: usize) -> crate::graph::FrozenGraph {
        let mut kg = KnowledgeGraph::new();
        for i in 0..n {
            kg.insert_concept(Concept::new(format!("C{i}")).with_preferred("ENG", "t").with_group("G"))
                .unwrap();
        }
        for i in 0..n - 1 {
            kg.insert_triple(&Triple::new(
                format!("C{i}"),
                RelationType::Parent,
                format!("C{}", i + 1),
            ))
            .unwrap();
        }
        kg.freeze()
    }

    #[test]
    fn distinct_until_exhausted() {
        let kg = chain(11);
        let strata = Strata::new(&kg, GroupEquality::Canonical);
        let plan = plan_with(&kg, &strata, TaskSizes { tc: 0, ep: 25, lp: 0 }, 2).unwrap();
        let (edges, report) = sample_ep(&strata, &plan).unwrap();
        assert_eq!(edges.len(), 25);
        assert_eq!(edges[..10].iter().collect::<HashSet<_>>().len(), 10);
        assert_eq!(edges[10..20].iter().collect::<HashSet<_>>().len(), 10);
        assert!(edges.iter().all(|e| kg.contains_edge(e)));
        assert_eq!(report.exhausted_strata, vec!["G".to_string()]);
    }

    #[test]
    fn single_draw() {
        let kg = chain(3);
        let strata = Strata::new(&kg, GroupEquality::Canonical);
        let plan = plan_with(&kg, &strata, TaskSizes { tc: 0, ep: 1, lp: 0 }, 2).unwrap();
        let (edges, _) = sample_ep(&strata, &plan).unwrap();
        assert_eq!(edges.len(), 1);
        assert!(kg.contains_edge(&edges[0]));
    }
}
