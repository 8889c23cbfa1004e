//! Stratified samplers for the three graph tasks.
//!
//! Strata are keyed by the canonical group of a triple's head. Every sampled
//! item occupies a slot `(task, class, stratum, ordinal)` and draws from its
//! own random stream derived from the plan seed, so output does not depend on
//! how slots are split across worker shards.

mod ep;
mod paths;
mod tc;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ep::{sample_ep, EpReport};
pub use paths::{sample_paths, Path, PathReport};
pub use tc::{sample_tc, TcExample, TcProvenance, TcReport};

use crate::error::{Error, Result};
use crate::graph::{ConceptId, Edge, FrozenGraph};
use crate::relation::RelationType;
use crate::seed::SeedStream;

pub const DEFAULT_MAX_HOPS: usize = 4;
pub const DEFAULT_MAX_ATTEMPTS: usize = 32;
pub const DEFAULT_MAX_STRATUM_FAILURES: usize = 8;

/// Integer largest-remainder apportionment of `total` over `weights`.
/// Ties go to the lower index; keys are kept sorted so that is lexicographic.
pub fn apportion(weights: &[u64], total: usize) -> Vec<usize> {
    let sum: u128 = weights.iter().map(|&w| u128::from(w)).sum();
    if sum == 0 || total == 0 {
        return vec![0; weights.len()];
    }
    let total_u = total as u128;
    let mut out: Vec<usize> = Vec::with_capacity(weights.len());
    let mut rems: Vec<(u128, usize)> = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let q = u128::from(w) * total_u;
        out.push((q / sum) as usize);
        rems.push((q % sum, i));
    }
    let assigned: usize = out.iter().sum();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rems.iter().take(total - assigned) {
        out[i] += 1;
    }
    out
}

/// Largest-remainder apportionment over real-valued weights.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 || total == 0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

fn apportion_map(shares: &BTreeMap<String, usize>, total: usize) -> BTreeMap<String, usize> {
    let keys: Vec<&String> = shares.keys().collect();
    let weights: Vec<u64> = shares.values().map(|&v| v as u64).collect();
    keys.into_iter().cloned().zip(apportion(&weights, total)).collect()
}

/// How "same semantic group" is decided for multi-group concepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GroupEquality {
    /// Canonical (lexicographically smallest) groups are equal.
    #[default]
    Canonical,
    /// The group sets intersect.
    Intersection,
}

/// Edge pools per stratum.
#[derive(Debug, Clone)]
pub struct Strata {
    /// All non-loop edges.
    pub(crate) all: BTreeMap<String, Vec<Edge>>,
    /// Non-loop edges whose endpoints are in different groups.
    pub(crate) cross_group: BTreeMap<String, Vec<Edge>>,
    /// Non-loop edges whose endpoints share a group.
    pub(crate) same_group: BTreeMap<String, Vec<Edge>>,
    /// Non-synonym non-loop edges whose tail can be extended by another one.
    pub(crate) path_starts: BTreeMap<String, Vec<Edge>>,
    /// Non-synonym non-loop outgoing edges per concept.
    pub(crate) walk: Vec<Vec<Edge>>,
    pub equality: GroupEquality,
}

fn walkable(e: &Edge) -> bool {
    !e.is_self_loop() && e.relation != RelationType::Synonym
}

impl Strata {
    pub fn new(kg: &FrozenGraph, equality: GroupEquality) -> Self {
        let mut walk: Vec<Vec<Edge>> = vec![Vec::new(); kg.concept_count()];
        for e in kg.edges().iter().filter(|e| walkable(e)) {
            walk[e.head.index()].push(*e);
        }
        let mut strata = Strata {
            all: BTreeMap::new(),
            cross_group: BTreeMap::new(),
            same_group: BTreeMap::new(),
            path_starts: BTreeMap::new(),
            walk,
            equality,
        };
        for g in kg.group_codes() {
            for map in [
                &mut strata.all,
                &mut strata.cross_group,
                &mut strata.same_group,
                &mut strata.path_starts,
            ] {
                map.insert(g.to_string(), Vec::new());
            }
        }
        for e in kg.edges().iter().filter(|e| !e.is_self_loop()) {
            let Some(g) = kg.canonical_group(e.head) else {
                continue;
            };
            let g = g.to_string();
            strata.all.get_mut(&g).expect("group registered").push(*e);
            let same = same_group(kg, e.head, e.tail, equality);
            let pool = if same {
                &mut strata.same_group
            } else {
                &mut strata.cross_group
            };
            pool.get_mut(&g).expect("group registered").push(*e);
            if walkable(e) && !strata.walk[e.tail.index()].is_empty() {
                strata.path_starts.get_mut(&g).expect("group registered").push(*e);
            }
        }
        strata
    }

    pub fn shares(pool: &BTreeMap<String, Vec<Edge>>) -> BTreeMap<String, usize> {
        pool.iter().map(|(g, v)| (g.clone(), v.len())).collect()
    }

    pub fn total(pool: &BTreeMap<String, Vec<Edge>>) -> usize {
        pool.values().map(Vec::len).sum()
    }
}

pub(crate) fn same_group(kg: &FrozenGraph, a: ConceptId, b: ConceptId, equality: GroupEquality) -> bool {
    match equality {
        GroupEquality::Canonical => kg.canonical_group(a) == kg.canonical_group(b),
        GroupEquality::Intersection => {
            let ga = &kg.concept(a).groups;
            kg.concept(b).groups.iter().any(|g| ga.contains(g))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSizes {
    pub tc: usize,
    pub ep: usize,
    pub lp: usize,
}

/// Requested sizes with their per-stratum targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub sizes: TaskSizes,
    pub tc: BTreeMap<String, usize>,
    pub ep: BTreeMap<String, usize>,
    pub lp: BTreeMap<String, usize>,
    pub seed: u64,
    pub max_attempts: usize,
    pub max_stratum_failures: usize,
    pub group_equality: GroupEquality,
}

/// Splits each requested size over strata in proportion to the strata's
/// share of triples. Path targets follow the share of extendable start edges.
pub fn plan_strata(kg: &FrozenGraph, sizes: TaskSizes, seed: u64) -> Result<SamplePlan> {
    plan_with(kg, &Strata::new(kg, GroupEquality::Canonical), sizes, seed)
}

pub fn plan_with(kg: &FrozenGraph, strata: &Strata, sizes: TaskSizes, seed: u64) -> Result<SamplePlan> {
    if kg.concept_count() == 0 {
        return Err(Error::Sampling("graph has no concepts".into()));
    }
    if (sizes.tc > 0 || sizes.ep > 0) && Strata::total(&strata.all) == 0 {
        return Err(Error::Sampling("graph has no sampleable triples".into()));
    }
    let triple_shares = Strata::shares(&strata.all);
    Ok(SamplePlan {
        sizes,
        tc: apportion_map(&triple_shares, sizes.tc),
        ep: apportion_map(&triple_shares, sizes.ep),
        lp: apportion_map(&Strata::shares(&strata.path_starts), sizes.lp),
        seed,
        max_attempts: DEFAULT_MAX_ATTEMPTS,
        max_stratum_failures: DEFAULT_MAX_STRATUM_FAILURES,
        group_equality: strata.equality,
    })
}

/// Options shared by the samplers.
#[derive(Debug, Clone, Copy)]
pub struct SampleOptions {
    /// Worker shards; output is identical for any value.
    pub shards: usize,
    pub max_hops: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            shards: 1,
            max_hops: DEFAULT_MAX_HOPS,
        }
    }
}

#[derive(Debug)]
pub(crate) struct Filled<T> {
    pub items: Vec<T>,
    /// Strata abandoned after too many failed slots.
    pub aborted_strata: u64,
    pub unfilled: usize,
}

/// Fills per-stratum targets slot by slot.
///
/// A slot is a pure function of `(stratum, ordinal)`. A stratum producing
/// more than `max_failures` consecutive failed slots is abandoned and its deficit is re-apportioned
/// over the remaining viable strata in proportion to their targets.
pub(crate) fn fill_strata<T, D, V>(
    targets: &BTreeMap<String, usize>,
    viable: V,
    max_failures: usize,
    shards: usize,
    draw: D,
) -> Filled<T>
where
    T: Send,
    D: Fn(&str, u64) -> Option<T> + Sync,
    V: Fn(&str) -> bool,
{
    struct State {
        needed: usize,
        next: u64,
        // consecutive failed slots
        failures: usize,
        alive: bool,
        weight: u64,
    }
    let mut states: BTreeMap<&str, State> = targets
        .iter()
        .map(|(g, &t)| {
            (
                g.as_str(),
                State {
                    needed: t,
                    next: 0,
                    failures: 0,
                    alive: viable(g),
                    weight: t as u64,
                },
            )
        })
        .collect();
    let mut per_stratum: BTreeMap<&str, Vec<T>> = BTreeMap::new();
    let mut aborted = 0u64;
    let shards = shards.max(1);
    loop {
        let mut deficit = 0usize;
        for (g, st) in states.iter_mut() {
            if !st.alive {
                deficit += std::mem::take(&mut st.needed);
                continue;
            }
            while st.needed > 0 {
                let start = st.next;
                let n = st.needed as u64;
                st.next += n;
                let chunk = (st.needed.div_ceil(shards)).max(1);
                let results: Vec<Option<T>> = (0..n as usize)
                    .into_par_iter()
                    .with_min_len(chunk)
                    .map(|i| draw(g, start + i as u64))
                    .collect();
                let bucket = per_stratum.entry(g).or_default();
                for r in results {
                    match r {
                        Some(item) => {
                            bucket.push(item);
                            st.needed -= 1;
                            st.failures = 0;
                        }
                        None => st.failures += 1,
                    }
                    if st.failures > max_failures {
                        break;
                    }
                }
                if st.failures > max_failures {
                    st.alive = false;
                    aborted += 1;
                    deficit += std::mem::take(&mut st.needed);
                    break;
                }
            }
        }
        if deficit == 0 {
            break;
        }
        let alive: Vec<&str> = states.iter().filter(|(_, s)| s.alive).map(|(g, _)| *g).collect();
        if alive.is_empty() {
            let items = per_stratum.into_values().flatten().collect();
            return Filled {
                items,
                aborted_strata: aborted,
                unfilled: deficit,
            };
        }
        let mut weights: Vec<u64> = alive.iter().map(|g| states[g].weight).collect();
        if weights.iter().all(|&w| w == 0) {
            weights.iter_mut().for_each(|w| *w = 1);
        }
        for (g, extra) in alive.iter().zip(apportion(&weights, deficit)) {
            states.get_mut(g).expect("alive stratum").needed += extra;
        }
    }
    Filled {
        items: per_stratum.into_values().flatten().collect(),
        aborted_strata: aborted,
        unfilled: 0,
    }
}

pub(crate) fn slot_seed(seed: u64, task: &str, class: &str, stratum: &str, ordinal: u64) -> SeedStream {
    SeedStream::new(seed)
        .scope(task)
        .scope(class)
        .scope(stratum)
        .index(ordinal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Concept, KnowledgeGraph, Triple};

    #[test]
    fn exact_proportions() {
        assert_eq!(apportion(&[60, 40], 10), vec![6, 4]);
    }

    #[test]
    fn ties_break_to_first_key() {
        assert_eq!(apportion(&[1, 1, 1], 10), vec![4, 3, 3]);
        assert_eq!(largest_remainder(&[1.0 / 3.0; 3], 10), vec![4, 3, 3]);
    }

    #[test]
    fn zero_total_is_empty() {
        assert_eq!(apportion(&[5, 5], 0), vec![0, 0]);
    }

    fn toy() -> FrozenGraph {
        let mut kg = KnowledgeGraph::new();
        for (cui, g) in [("A1", "A"), ("A2", "A"), ("A3", "A"), ("B1", "B"), ("B2", "B")] {
            kg.insert_concept(Concept::new(cui).with_preferred("ENG", cui).with_group(g))
                .unwrap();
        }
        for (h, t) in [("A1", "B1"), ("A2", "B2"), ("A3", "A1"), ("B1", "B2"), ("B2", "B2")] {
            kg.insert_triple(&Triple::new(h, RelationType::Parent, t)).unwrap();
        }
        kg.freeze()
    }

    #[test]
    fn plan_follows_head_group_shares() {
        let kg = toy();
        let plan = plan_strata(&kg, TaskSizes { tc: 10, ep: 5, lp: 0 }, 1).unwrap();
        // Self-loop B2->B2 excluded: A holds 3 triples, B holds 1.
        assert_eq!(plan.tc["A"], 8);
        assert_eq!(plan.tc["B"], 2);
        assert_eq!(plan.ep.values().sum::<usize>(), 5);
        assert!(plan.lp.values().all(|&v| v == 0));
    }

    #[test]
    fn single_stratum_takes_everything() {
        let mut kg = KnowledgeGraph::new();
        for c in ["X", "Y"] {
            kg.insert_concept(Concept::new(c).with_preferred("ENG", c).with_group("G"))
                .unwrap();
        }
        kg.insert_triple(&Triple::new("X", RelationType::Child, "Y")).unwrap();
        let plan = plan_strata(&kg.freeze(), TaskSizes { tc: 7, ep: 0, lp: 0 }, 0).unwrap();
        assert_eq!(plan.tc, BTreeMap::from([("G".to_string(), 7)]));
    }

    #[test]
    fn strata_pools_partition_non_loop_edges() {
        let kg = toy();
        let s = Strata::new(&kg, GroupEquality::Canonical);
        assert_eq!(Strata::total(&s.all), 4);
        assert_eq!(Strata::total(&s.cross_group) + Strata::total(&s.same_group), 4);
        assert_eq!(Strata::total(&s.cross_group), 2);
    }

    #[test]
    fn fill_reallocates_dead_strata() {
        let targets = BTreeMap::from([("a".to_string(), 5), ("b".to_string(), 5)]);
        let out = fill_strata(
            &targets,
            |_| true,
            2,
            3,
            |g, ord| (g == "b").then_some((g.to_string(), ord)),
        );
        assert_eq!(out.items.len(), 10);
        assert_eq!(out.aborted_strata, 1);
        assert!(out.items.iter().all(|(g, _)| g == "b"));
    }

    #[test]
    fn fill_reports_unfillable() {
        let targets = BTreeMap::from([("a".to_string(), 4)]);
        let out: Filled<()> = fill_strata(&targets, |_| true, 1, 1, |_, _| None);
        assert_eq!(out.unfilled, 4);
        assert!(out.items.is_empty());
    }

    #[test]
    fn fill_is_shard_independent() {
        let targets = BTreeMap::from([("a".to_string(), 50), ("b".to_string(), 31)]);
        let draw = |g: &str, ord: u64| (ord % 7 != 3).then(|| format!("{g}{ord}"));
        let one = fill_strata(&targets, |_| true, 100, 1, draw);
        let many = fill_strata(&targets, |_| true, 100, 8, draw);
        assert_eq!(one.items, many.items);
    }
}
