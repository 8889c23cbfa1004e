//! Synthetic release generator.
//!
//! Writes the four release files in the exact layouts the parsers read and
//! returns the tallies the ingest pipeline must reproduce. Used as the oracle
//! for round-trip and sampling tests without a terminology licence.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphStatistics;
use crate::relation::RelationType;
use crate::rrf::{ReleaseFiles, CONCEPT_FILE, GROUP_FILE, RELATION_FILE, SEMANTIC_TYPE_FILE};
use crate::sampling::largest_remainder;
use crate::seed::SeedStream;

const SYLLABLES: [&str; 24] = [
    "car", "dio", "neu", "ro", "pa", "thy", "hep", "at", "itis", "os", "teo", "my", "el", "gas", "tro", "lym", "pho",
    "ma", "derm", "al", "ren", "vas", "cul", "ar",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticKgSpec {
    pub concepts: usize,
    /// `(group code, weight)`; weights sum to one.
    pub group_weights: Vec<(String, f64)>,
    /// Inclusive bounds on terms per concept and language.
    pub terms_per_concept: (usize, usize),
    pub edges_per_relation: BTreeMap<RelationType, usize>,
    pub languages: Vec<String>,
    pub seed: u64,
    /// Share of concepts given a second, lexicographically larger group.
    pub multi_group_fraction: f64,
    /// Share of concepts with terms in each language after the first.
    pub secondary_language_coverage: f64,
    /// Emit duplicate and unmapped rows the parsers have to discard.
    pub noise: bool,
}

impl Default for SyntheticKgSpec {
    fn default() -> Self {
        Self {
            concepts: 1000,
            group_weights: vec![("ANAT".into(), 0.2), ("CHEM".into(), 0.3), ("DISO".into(), 0.5)],
            terms_per_concept: (1, 4),
            edges_per_relation: RelationType::ALL.into_iter().map(|r| (r, 500)).collect(),
            languages: vec!["ENG".into()],
            seed: 0,
            multi_group_fraction: 0.1,
            secondary_language_coverage: 0.7,
            noise: true,
        }
    }
}

impl SyntheticKgSpec {
    pub fn total_edges(&self) -> usize {
        self.edges_per_relation.values().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.concepts < 2 {
            return bad("need at least two concepts".into());
        }
        if self.group_weights.is_empty() {
            return bad("no groups".into());
        }
        if self.group_weights.iter().any(|(_, w)| !w.is_finite() || *w <= 0.0) {
            return bad("group weights must be positive".into());
        }
        let total: f64 = self.group_weights.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("group weights sum to {total}, expected 1"));
        }
        let codes: BTreeSet<&str> = self.group_weights.iter().map(|(g, _)| g.as_str()).collect();
        if codes.len() != self.group_weights.len() || codes.iter().any(|c| c.is_empty() || c.contains('|')) {
            return bad("group codes must be distinct, non-empty and pipe-free".into());
        }
        let (lo, hi) = self.terms_per_concept;
        if lo == 0 || lo > hi {
            return bad(format!("invalid terms-per-concept bounds ({lo}, {hi})"));
        }
        if self.languages.is_empty() {
            return bad("no languages".into());
        }
        let langs: BTreeSet<&String> = self.languages.iter().collect();
        if langs.len() != self.languages.len() {
            return bad("duplicate languages".into());
        }
        if self.edges_per_relation.len() != 7 || self.edges_per_relation.values().any(|&n| n == 0) {
            return bad("every relation type needs a positive edge count".into());
        }
        let capacity = self.concepts * (self.concepts - 1) / 2;
        if let Some((r, n)) = self.edges_per_relation.iter().find(|(_, &n)| n > capacity) {
            return bad(format!("{n} {r} edges exceed capacity {capacity}"));
        }
        if !(0.0..=1.0).contains(&self.multi_group_fraction) || !(0.0..=1.0).contains(&self.secondary_language_coverage)
        {
            return bad("fractions must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Everything the ingest pipeline should report for a generated release.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub concepts: u64,
    pub edges: u64,
    pub statistics: BTreeMap<String, GraphStatistics>,
    pub per_relation: BTreeMap<String, u64>,
    pub group_members: BTreeMap<String, u64>,
    pub canonical_groups: BTreeMap<String, u64>,
    pub concept_rows: u64,
    pub relation_rows: u64,
    pub unmapped_relation_rows: u64,
    pub duplicate_relation_rows: u64,
    pub semantic_type_rows: u64,
}

struct SynthConcept {
    cui: String,
    groups: Vec<usize>,
    types: Vec<String>,
    terms: Vec<(usize, Vec<String>)>,
}

fn type_id(group: usize, k: usize) -> String {
    format!("T{:03}", 100 + group * 2 + k)
}

fn make_term(rng: &mut ChaCha8Rng, language: usize) -> String {
    let words = rng.random_range(1..=3);
    let mut out = String::new();
    for w in 0..words {
        if w > 0 {
            out.push(' ');
        }
        for _ in 0..rng.random_range(2..=4) {
            out.push_str(SYLLABLES[rng.random_range(0..SYLLABLES.len())]);
        }
        if language > 0 && w == 0 {
            out.push_str(["e", "o", "a", "i"][language % 4]);
        }
    }
    out
}

/// Writes a synthetic release into `dir` and returns its ground truth.
pub fn generate_synthetic_kg(spec: &SyntheticKgSpec, dir: &Path) -> Result<(ReleaseFiles, GroundTruth)> {
    spec.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let seeds = SeedStream::new(spec.seed).scope("synthetic-kg");

    let mut groups: Vec<(String, f64)> = spec.group_weights.clone();
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    let weights: Vec<f64> = groups.iter().map(|(_, w)| *w).collect();

    // Canonical groups: exact apportionment, then shuffled over concepts.
    let per_group = largest_remainder(&weights, spec.concepts);
    let mut assignment: Vec<usize> = per_group
        .iter()
        .enumerate()
        .flat_map(|(g, &n)| std::iter::repeat_n(g, n))
        .collect();
    let mut rng = seeds.scope("groups").rng();
    assignment.shuffle(&mut rng);

    let mut truth = GroundTruth {
        concepts: spec.concepts as u64,
        ..GroundTruth::default()
    };
    let mut term_rng = seeds.scope("terms").rng();
    let mut concepts = Vec::with_capacity(spec.concepts);
    for (i, &canonical) in assignment.iter().enumerate() {
        let mut c_groups = vec![canonical];
        if canonical + 1 < groups.len() && rng.random_bool(spec.multi_group_fraction) {
            c_groups.push(rng.random_range(canonical + 1..groups.len()));
        }
        let mut types: Vec<String> = c_groups.iter().map(|&g| type_id(g, rng.random_range(0..2))).collect();
        if rng.random_bool(0.1) {
            // A second type in the canonical group; the membership stays single.
            let other = type_id(canonical, rng.random_range(0..2));
            types.push(other);
        }
        let mut terms = Vec::new();
        for (li, _) in spec.languages.iter().enumerate() {
            if li > 0 && !term_rng.random_bool(spec.secondary_language_coverage) {
                continue;
            }
            let n = term_rng.random_range(spec.terms_per_concept.0..=spec.terms_per_concept.1);
            let mut list: Vec<String> = Vec::with_capacity(n);
            while list.len() < n {
                let t = make_term(&mut term_rng, li);
                if !list.contains(&t) {
                    list.push(t);
                }
            }
            terms.push((li, list));
        }
        concepts.push(SynthConcept {
            cui: format!("C{i:07}"),
            groups: c_groups,
            types,
            terms,
        });
    }

    // Group mapping file.
    let groups_path = dir.join(GROUP_FILE);
    write_lines(&groups_path, |w| {
        for (gi, (code, _)) in groups.iter().enumerate() {
            for k in 0..2 {
                writeln!(w, "{code}|{code} group|{}|Type {gi}.{k}", type_id(gi, k))?;
            }
        }
        Ok(())
    })?;

    // Semantic types.
    let sty_path = dir.join(SEMANTIC_TYPE_FILE);
    write_lines(&sty_path, |w| {
        for c in &concepts {
            for t in &c.types {
                writeln!(w, "{}|{t}|A1.2|Type|AT{}|", c.cui, truth.semantic_type_rows)?;
                truth.semantic_type_rows += 1;
            }
        }
        Ok(())
    })?;
    for c in &concepts {
        truth
            .canonical_groups
            .entry(groups[c.groups[0]].0.clone())
            .and_modify(|n| *n += 1)
            .or_insert(1);
        for &g in &c.groups {
            *truth.group_members.entry(groups[g].0.clone()).or_default() += 1;
        }
    }

    // Concept / term file.
    let mut dup_rng = seeds.scope("duplicates").rng();
    let conso_path = dir.join(CONCEPT_FILE);
    write_lines(&conso_path, |w| {
        let mut aui = 0u64;
        for c in &concepts {
            for (li, list) in &c.terms {
                let lang = &spec.languages[*li];
                for (k, term) in list.iter().enumerate() {
                    let (ts, ispref) = if k == 0 { ("P", "Y") } else { ("S", "N") };
                    let copies = if spec.noise && dup_rng.random_bool(0.05) { 2 } else { 1 };
                    for copy in 0..copies {
                        aui += 1;
                        let sab = if copy == 0 { "SRC" } else { "ALT" };
                        writeln!(
                            w,
                            "{}|{lang}|{ts}|L{aui}|PF|S{aui}|{ispref}|A{aui}|||D{aui}|{sab}|PT|X{aui}|{term}|0|N||",
                            c.cui
                        )?;
                        truth.concept_rows += 1;
                    }
                }
            }
        }
        Ok(())
    })?;

    for (li, lang) in spec.languages.iter().enumerate() {
        let mut s = GraphStatistics::default();
        for c in &concepts {
            if let Some((_, list)) = c.terms.iter().find(|(l, _)| *l == li) {
                s.terms += list.len() as u64;
                s.cuis += 1;
            }
        }
        truth.statistics.insert(lang.clone(), s);
    }

    // Relations: distinct non-loop edges per type, written in release
    // orientation (the head is the second concept of a row).
    let mut edge_rng = seeds.scope("edges").rng();
    let mut rel_rows: Vec<String> = Vec::new();
    let mut rui = 0u64;
    for (&relation, &count) in &spec.edges_per_relation {
        let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(count);
        while seen.len() < count {
            let head = edge_rng.random_range(0..spec.concepts);
            let tail = edge_rng.random_range(0..spec.concepts);
            if head == tail || !seen.insert((head, tail)) {
                continue;
            }
            rui += 1;
            let row = format!(
                "{}|A|CUI|{}|{}|A|CUI||R{rui}||SRC|SRC|||N||",
                concepts[tail].cui,
                relation.release_code(),
                concepts[head].cui
            );
            if spec.noise && edge_rng.random_bool(0.02) {
                rel_rows.push(row.replacen(&format!("R{rui}|"), &format!("R{rui}d|"), 1));
                truth.duplicate_relation_rows += 1;
            }
            rel_rows.push(row);
            for (li, lang) in spec.languages.iter().enumerate() {
                let has = |c: &SynthConcept| c.terms.iter().any(|(l, _)| *l == li);
                if has(&concepts[head]) && has(&concepts[tail]) {
                    truth.statistics.get_mut(lang).expect("language inserted").relations += 1;
                }
            }
        }
        truth.per_relation.insert(relation.name().to_string(), count as u64);
        truth.edges += count as u64;
        if spec.noise {
            for _ in 0..count / 20 + 1 {
                let a = edge_rng.random_range(0..spec.concepts);
                let b = edge_rng.random_range(0..spec.concepts);
                rel_rows.push(format!(
                    "{}|A|CUI|RO|{}|A|CUI|associated_with|X||SRC|SRC|||N||",
                    concepts[a].cui, concepts[b].cui
                ));
                truth.unmapped_relation_rows += 1;
            }
        }
    }
    rel_rows.shuffle(&mut edge_rng);
    truth.relation_rows = rel_rows.len() as u64;
    let rel_path = dir.join(RELATION_FILE);
    write_lines(&rel_path, |w| {
        for row in &rel_rows {
            writeln!(w, "{row}")?;
        }
        Ok(())
    })?;

    Ok((
        ReleaseFiles {
            concepts: conso_path,
            relations: rel_path,
            semantic_types: sty_path,
            groups: groups_path,
        },
        truth,
    ))
}

fn write_lines(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_specs() {
        let mut spec = SyntheticKgSpec::default();
        spec.group_weights[0].1 = 0.3;
        assert!(spec.validate().is_err());
        let mut spec = SyntheticKgSpec::default();
        spec.edges_per_relation.insert(RelationType::Child, 0);
        assert!(spec.validate().is_err());
        let spec = SyntheticKgSpec {
            terms_per_concept: (0, 2),
            ..SyntheticKgSpec::default()
        };
        assert!(spec.validate().is_err());
        assert!(SyntheticKgSpec::default().validate().is_ok());
    }

    #[test]
    fn deterministic_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = SyntheticKgSpec {
            concepts: 200,
            edges_per_relation: RelationType::ALL.into_iter().map(|r| (r, 50)).collect(),
            languages: vec!["ENG".into(), "FRE".into()],
            ..SyntheticKgSpec::default()
        };
        let (fa, ta) = generate_synthetic_kg(&spec, a.path()).unwrap();
        let (fb, tb) = generate_synthetic_kg(&spec, b.path()).unwrap();
        assert_eq!(ta, tb);
        for (x, y) in [
            (&fa.concepts, &fb.concepts),
            (&fa.relations, &fb.relations),
            (&fa.semantic_types, &fb.semantic_types),
            (&fa.groups, &fb.groups),
        ] {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }

    #[test]
    fn canonical_group_tallies_follow_weights() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticKgSpec {
            concepts: 10_000,
            group_weights: vec![("A".into(), 0.5), ("B".into(), 0.3), ("C".into(), 0.2)],
            edges_per_relation: RelationType::ALL.into_iter().map(|r| (r, 10)).collect(),
            ..SyntheticKgSpec::default()
        };
        let (_, truth) = generate_synthetic_kg(&spec, dir.path()).unwrap();
        for (g, w) in [("A", 0.5), ("B", 0.3), ("C", 0.2)] {
            let share = truth.canonical_groups[g] as f64 / 10_000.0;
            assert!((share - w).abs() <= 0.01, "{g}: {share}");
        }
    }
}
