use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fill_strata, slot_seed, SampleOptions, SamplePlan, Strata};
use crate::error::{Error, Result};
use crate::graph::{ConceptId, Edge, FrozenGraph, Triple};
use crate::relation::RelationType;

/// Alternating concept/relation walk; `concepts.len() == relations.len() + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    pub concepts: Vec<ConceptId>,
    pub relations: Vec<RelationType>,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.relations.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.relations.iter().enumerate().map(|(i, &relation)| Edge {
            head: self.concepts[i],
            relation,
            tail: self.concepts[i + 1],
        })
    }

    pub fn triples(&self, kg: &FrozenGraph) -> Vec<Triple> {
        self.edges().map(|e| kg.triple(&e)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathReport {
    pub emitted: usize,
    pub distinct: usize,
    pub reallocation_warnings: u64,
    /// Walks that stopped at a dead end before reaching their drawn length.
    pub truncated_walks: usize,
}

/// Random walks over non-synonym edges.
///
/// Each slot draws a start triple from its stratum, a target length uniform in
/// `[2, max_hops]`, and extends from the current tail through uniformly chosen
/// non-synonym edges until the length is reached or the walk hits a dead end.
/// Start triples are restricted to edges whose tail has a non-synonym
/// successor, so every walk reaches at least two hops.
pub fn sample_paths(
    kg: &FrozenGraph,
    strata: &Strata,
    plan: &SamplePlan,
    opts: &SampleOptions,
) -> Result<(Vec<Path>, PathReport)> {
    if opts.max_hops < 2 {
        return Err(Error::Sampling(format!(
            "max_hops must be at least 2, got {}",
            opts.max_hops
        )));
    }
    if plan.sizes.lp == 0 {
        return Ok((Vec::new(), PathReport::default()));
    }
    if Strata::total(&strata.path_starts) == 0 {
        return Err(Error::Sampling(
            "graph has no two-hop path without synonym relations".into(),
        ));
    }
    let filled = fill_strata(
        &plan.lp,
        |g| strata.path_starts.get(g).is_some_and(|p| !p.is_empty()),
        plan.max_stratum_failures,
        opts.shards,
        |g, ord| {
            let starts = &strata.path_starts[g];
            let mut rng = slot_seed(plan.seed, "lp", "path", g, ord).rng();
            let start = starts[rng.random_range(0..starts.len())];
            let target = rng.random_range(2..=opts.max_hops);
            let mut path = Path {
                concepts: vec![start.head, start.tail],
                relations: vec![start.relation],
            };
            let mut current = start.tail;
            while path.hops() < target {
                let out = &strata.walk[current.index()];
                if out.is_empty() {
                    break;
                }
                let e = out[rng.random_range(0..out.len())];
                path.concepts.push(e.tail);
                path.relations.push(e.relation);
                current = e.tail;
            }
            let truncated = path.hops() < target;
            (path.hops() >= 2).then_some((path, truncated))
        },
    );
    if filled.unfilled > 0 {
        return Err(Error::Sampling(format!("could not sample {} paths", filled.unfilled)));
    }
    let mut report = PathReport {
        reallocation_warnings: filled.aborted_strata,
        ..PathReport::default()
    };
    let paths: Vec<Path> = filled
        .items
        .into_iter()
        .map(|(p, truncated)| {
            report.truncated_walks += usize::from(truncated);
            p
        })
        .collect();
    report.emitted = paths.len();
    report.distinct = paths.iter().collect::<HashSet<_>>().len();
    debug_assert!(paths.iter().all(|p| p.edges().all(|e| kg.contains_edge(&e))));
    Ok((paths, report))
}
