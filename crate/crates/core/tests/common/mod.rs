#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use kgcorpus::rrf::{ingest_release, IngestConfig};
use kgcorpus::synth::{generate_synthetic_kg, GroundTruth, SyntheticKgSpec};
use kgcorpus::{FrozenGraph, RelationType};

pub fn spec(concepts: usize, edges_per_relation: usize, seed: u64) -> SyntheticKgSpec {
    SyntheticKgSpec {
        concepts,
        edges_per_relation: RelationType::ALL.into_iter().map(|r| (r, edges_per_relation)).collect(),
        seed,
        ..SyntheticKgSpec::default()
    }
}

pub fn synthetic(dir: &Path, spec: &SyntheticKgSpec) -> (FrozenGraph, GroundTruth) {
    let (files, truth) = generate_synthetic_kg(spec, dir).expect("generate");
    let (kg, _) = ingest_release(&files, &IngestConfig::default()).expect("ingest");
    (kg, truth)
}

/// Triples read straight from the relation file with a plain split, in
/// `(second concept, relation, first concept)` orientation.
pub fn oracle_triples(dir: &Path) -> HashSet<(String, RelationType, String)> {
    let text = fs::read_to_string(dir.join("MRREL.RRF")).expect("relation file");
    text.lines()
        .filter_map(|line| {
            let f: Vec<&str> = line.split('|').collect();
            let rel = match f[3] {
                "PAR" => RelationType::Parent,
                "CHD" => RelationType::Child,
                "SY" => RelationType::Synonym,
                "AQ" => RelationType::AllowedQualifier,
                "QB" => RelationType::QualifiedBy,
                "RB" => RelationType::Broader,
                "RN" => RelationType::Narrower,
                _ => return None,
            };
            Some((f[4].to_string(), rel, f[0].to_string()))
        })
        .collect()
}

/// Semantic groups per concept read straight from the type and group files.
pub fn oracle_groups(dir: &Path) -> HashMap<String, Vec<String>> {
    let groups = fs::read_to_string(dir.join("SemGroups.txt")).unwrap();
    let type_group: HashMap<&str, &str> = groups
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split('|').collect();
            (f[2], f[0])
        })
        .collect();
    let sty = fs::read_to_string(dir.join("MRSTY.RRF")).unwrap();
    let mut out: HashMap<String, Vec<String>> = HashMap::new();
    for l in sty.lines() {
        let f: Vec<&str> = l.split('|').collect();
        let g = out.entry(f[0].to_string()).or_default();
        let group = type_group[f[1]].to_string();
        if !g.contains(&group) {
            g.push(group);
        }
    }
    for g in out.values_mut() {
        g.sort();
    }
    out
}

/// Canonical-group shares of non-loop triples, keyed by head.
pub fn oracle_stratum_shares(dir: &Path) -> BTreeMap<String, f64> {
    let triples = oracle_triples(dir);
    let groups = oracle_groups(dir);
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (h, _, t) in &triples {
        if h == t {
            continue;
        }
        counts
            .entry(groups[h][0].clone())
            .and_modify(|c| *c += 1.0)
            .or_insert(1.0);
        total += 1.0;
    }
    counts.values_mut().for_each(|c| *c /= total);
    counts
}
