use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{apportion_map, fill_strata, same_group, slot_seed, Filled, SampleOptions, SamplePlan, Strata};
use crate::error::{Error, Result};
use crate::graph::{Edge, FrozenGraph};
use crate::relation::RelationType;

const MAX_SOURCE_REDRAWS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TcProvenance {
    Positive,
    NegativeEntities,
    NegativeRelation,
}

impl TcProvenance {
    pub fn name(self) -> &'static str {
        match self {
            TcProvenance::Positive => "positive",
            TcProvenance::NegativeEntities => "negative_entities",
            TcProvenance::NegativeRelation => "negative_relation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TcExample {
    pub edge: Edge,
    pub label: bool,
    pub provenance: TcProvenance,
    /// The real triple the example was derived from.
    pub source: Edge,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcReport {
    pub positives: usize,
    pub negatives_entities: usize,
    pub negatives_relation: usize,
    /// Strata abandoned and re-apportioned, summed over the three classes.
    pub reallocation_warnings: u64,
    /// Negatives moved from one strategy to the other when a strategy had no
    /// viable stratum left.
    pub cross_strategy_fallback: usize,
    pub duplicates: usize,
}

/// Positives, entity-corrupted negatives and relation-corrupted negatives in
/// a 50/25/25 split. Every negative is checked against the graph.
pub fn sample_tc(
    kg: &FrozenGraph,
    strata: &Strata,
    plan: &SamplePlan,
    opts: &SampleOptions,
) -> Result<(Vec<TcExample>, TcReport)> {
    let total = plan.tc.values().sum::<usize>();
    let negatives = total / 2;
    let positives = total - negatives;
    let entities = negatives.div_ceil(2);
    let relation = negatives - entities;
    let mut report = TcReport::default();

    let pos = fill_strata(
        &apportion_map(&plan.tc, positives),
        |g| strata.all.get(g).is_some_and(|p| !p.is_empty()),
        plan.max_stratum_failures,
        opts.shards,
        |g, ord| {
            let pool = &strata.all[g];
            let mut rng = slot_seed(plan.seed, "tc", "positive", g, ord).rng();
            let e = pool[rng.random_range(0..pool.len())];
            Some(TcExample {
                edge: e,
                label: true,
                provenance: TcProvenance::Positive,
                source: e,
            })
        },
    );
    report.reallocation_warnings += pos.aborted_strata;
    if pos.unfilled > 0 {
        return Err(Error::Sampling("no triples available for positive examples".into()));
    }

    let ent = fill_entities(
        kg,
        strata,
        plan,
        opts,
        &apportion_map(&plan.tc, entities),
        "negative_entities",
    );
    report.reallocation_warnings += ent.aborted_strata;
    let rel_targets = apportion_map(&plan.tc, relation + ent.unfilled);
    report.cross_strategy_fallback += ent.unfilled;
    let rel = fill_relation(kg, strata, plan, opts, &rel_targets);
    report.reallocation_warnings += rel.aborted_strata;
    let mut ent_items = ent.items;
    if rel.unfilled > 0 {
        report.cross_strategy_fallback += rel.unfilled;
        let extra = fill_entities(
            kg,
            strata,
            plan,
            opts,
            &apportion_map(&plan.tc, rel.unfilled),
            "negative_entities_fallback",
        );
        report.reallocation_warnings += extra.aborted_strata;
        if extra.unfilled > 0 {
            return Err(Error::Sampling(format!(
                "could not construct {} negative triples under either strategy",
                extra.unfilled
            )));
        }
        ent_items.extend(extra.items);
    }

    let mut out = pos.items;
    out.extend(ent_items);
    out.extend(rel.items);
    for ex in &out {
        match ex.provenance {
            TcProvenance::Positive => report.positives += 1,
            TcProvenance::NegativeEntities => report.negatives_entities += 1,
            TcProvenance::NegativeRelation => report.negatives_relation += 1,
        }
    }
    let mut seen = HashSet::with_capacity(out.len());
    report.duplicates = out.iter().filter(|ex| !seen.insert((ex.edge, ex.label))).count();
    Ok((out, report))
}

/// Sources with heads and tails in different groups; both endpoints are
/// replaced by concepts from the same canonical groups.
fn fill_entities(
    kg: &FrozenGraph,
    strata: &Strata,
    plan: &SamplePlan,
    opts: &SampleOptions,
    targets: &BTreeMap<String, usize>,
    class: &str,
) -> Filled<TcExample> {
    fill_strata(
        targets,
        |g| strata.cross_group.get(g).is_some_and(|p| !p.is_empty()),
        plan.max_stratum_failures,
        opts.shards,
        |g, ord| {
            let pool = &strata.cross_group[g];
            let mut rng = slot_seed(plan.seed, "tc", class, g, ord).rng();
            for _ in 0..MAX_SOURCE_REDRAWS {
                let source = pool[rng.random_range(0..pool.len())];
                let head_group = kg.canonical_group(source.head)?;
                let tail_group = kg.canonical_group(source.tail)?;
                for _ in 0..plan.max_attempts {
                    let head = kg.sample_id_in_group(head_group, &mut rng).ok()?;
                    let tail = kg.sample_id_in_group(tail_group, &mut rng).ok()?;
                    let edge = Edge {
                        head,
                        relation: source.relation,
                        tail,
                    };
                    if head != tail && !kg.contains_edge(&edge) {
                        return Some(TcExample {
                            edge,
                            label: false,
                            provenance: TcProvenance::NegativeEntities,
                            source,
                        });
                    }
                }
            }
            None
        },
    )
}

/// Sources with heads and tails in the same group; the relation is swapped
/// for a different type the pair does not already carry.
fn fill_relation(
    kg: &FrozenGraph,
    strata: &Strata,
    plan: &SamplePlan,
    opts: &SampleOptions,
    targets: &BTreeMap<String, usize>,
) -> Filled<TcExample> {
    fill_strata(
        targets,
        |g| strata.same_group.get(g).is_some_and(|p| !p.is_empty()),
        plan.max_stratum_failures,
        opts.shards,
        |g, ord| {
            let pool = &strata.same_group[g];
            let mut rng = slot_seed(plan.seed, "tc", "negative_relation", g, ord).rng();
            for _ in 0..MAX_SOURCE_REDRAWS * plan.max_attempts.max(1) {
                let source = pool[rng.random_range(0..pool.len())];
                debug_assert!(same_group(kg, source.head, source.tail, plan.group_equality));
                let absent: Vec<RelationType> = RelationType::ALL
                    .into_iter()
                    .filter(|&r| r != source.relation && !kg.contains_edge(&Edge { relation: r, ..source }))
                    .collect();
                if absent.is_empty() {
                    continue;
                }
                let relation = absent[rng.random_range(0..absent.len())];
                return Some(TcExample {
                    edge: Edge { relation, ..source },
                    label: false,
                    provenance: TcProvenance::NegativeRelation,
                    source,
                });
            }
            None
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Concept, KnowledgeGraph, Triple};
    use crate::sampling::{plan_with, GroupEquality, TaskSizes};

    fn graph(concepts: &[(&str, &str)], edges: &[(&str, RelationType, &str)]) -> FrozenGraph {
        let mut kg = KnowledgeGraph::new();
        for (cui, g) in concepts {
            kg.insert_concept(Concept::new(*cui).with_preferred("ENG", cui).with_group(g))
                .unwrap();
        }
        for (h, r, t) in edges {
            kg.insert_triple(&Triple::new(*h, *r, *t)).unwrap();
        }
        kg.freeze()
    }

    fn small() -> FrozenGraph {
        let concepts: Vec<(String, &str)> = (0..20)
            .map(|i| (format!("C{i}"), if i % 2 == 0 { "A" } else { "B" }))
            .collect();
        let concepts: Vec<(&str, &str)> = concepts.iter().map(|(c, g)| (c.as_str(), *g)).collect();
        let mut edges = Vec::new();
        let names: Vec<String> = (0..20).map(|i| format!("C{i}")).collect();
        for i in 0..20 {
            edges.push((names[i].as_str(), RelationType::Parent, names[(i + 1) % 20].as_str()));
            edges.push((names[i].as_str(), RelationType::Broader, names[(i + 2) % 20].as_str()));
        }
        graph(&concepts, &edges)
    }

    #[test]
    fn composition_and_soundness() {
        let kg = small();
        let strata = Strata::new(&kg, GroupEquality::Canonical);
        let plan = plan_with(&kg, &strata, TaskSizes { tc: 101, ep: 0, lp: 0 }, 9).unwrap();
        let (out, report) = sample_tc(&kg, &strata, &plan, &SampleOptions::default()).unwrap();
        assert_eq!(out.len(), 101);
        assert_eq!(
            (report.positives, report.negatives_entities, report.negatives_relation),
            (51, 25, 25)
        );
        for ex in &out {
            assert_eq!(kg.contains_edge(&ex.edge), ex.label);
            match ex.provenance {
                TcProvenance::NegativeEntities => {
                    assert_eq!(ex.edge.relation, ex.source.relation);
                    assert_eq!(kg.canonical_group(ex.edge.head), kg.canonical_group(ex.source.head));
                    assert_eq!(kg.canonical_group(ex.edge.tail), kg.canonical_group(ex.source.tail));
                    assert_ne!(kg.canonical_group(ex.source.head), kg.canonical_group(ex.source.tail));
                }
                TcProvenance::NegativeRelation => {
                    assert_eq!((ex.edge.head, ex.edge.tail), (ex.source.head, ex.source.tail));
                    assert_ne!(ex.edge.relation, ex.source.relation);
                    assert_eq!(kg.canonical_group(ex.source.head), kg.canonical_group(ex.source.tail));
                }
                TcProvenance::Positive => assert_eq!(ex.edge, ex.source),
            }
        }
    }

    #[test]
    fn saturated_bipartite_reallocates_entity_negatives() {
        // Every (A-member, Parent, B-member) already exists, so no
        // group-preserving corruption of a cross-group triple is possible.
        let concepts = [("A1", "A"), ("A2", "A"), ("B1", "B"), ("B2", "B")];
        let mut edges = vec![];
        for h in ["A1", "A2"] {
            for t in ["B1", "B2"] {
                edges.push((h, RelationType::Parent, t));
            }
        }
        edges.push(("A1", RelationType::Child, "A2"));
        edges.push(("B1", RelationType::Child, "B2"));
        let kg = graph(&concepts, &edges);
        let strata = Strata::new(&kg, GroupEquality::Canonical);
        let plan = plan_with(&kg, &strata, TaskSizes { tc: 40, ep: 0, lp: 0 }, 3).unwrap();
        let (out, report) = sample_tc(&kg, &strata, &plan, &SampleOptions::default()).unwrap();
        assert_eq!(out.len(), 40);
        assert!(report.reallocation_warnings > 0);
        assert_eq!(report.cross_strategy_fallback, 10);
        assert_eq!(report.negatives_entities, 0);
        assert_eq!(report.negatives_relation, 20);
        assert!(out.iter().all(|ex| kg.contains_edge(&ex.edge) == ex.label));
    }

    #[test]
    fn impossible_negatives_error() {
        // Complete graph over one group with every relation type present.
        let concepts = [("X", "G"), ("Y", "G")];
        let mut edges = vec![];
        for r in RelationType::ALL {
            edges.push(("X", r, "Y"));
            edges.push(("Y", r, "X"));
        }
        let kg = graph(&concepts, &edges);
        let strata = Strata::new(&kg, GroupEquality::Canonical);
        let plan = plan_with(&kg, &strata, TaskSizes { tc: 8, ep: 0, lp: 0 }, 3).unwrap();
        assert!(sample_tc(&kg, &strata, &plan, &SampleOptions::default()).is_err());
    }

    #[test]
    fn shard_count_does_not_change_output() {
        let kg = small();
        let strata = Strata::new(&kg, GroupEquality::Canonical);
        let plan = plan_with(&kg, &strata, TaskSizes { tc: 300, ep: 0, lp: 0 }, 5).unwrap();
        let a = sample_tc(
            &kg,
            &strata,
            &plan,
            &SampleOptions {
                shards: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let b = sample_tc(
            &kg,
            &strata,
            &plan,
            &SampleOptions {
                shards: 7,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
