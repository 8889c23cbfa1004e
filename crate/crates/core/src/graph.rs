//! In-memory directed labelled multigraph over medical concepts.
//!
//! Concepts are interned to dense [`ConceptId`]s on insertion. The graph keeps
//! three indices: outgoing adjacency per head, members per semantic group and
//! an exact `(head, relation, tail)` membership set. Calling
//! [`KnowledgeGraph::freeze`] produces an immutable [`FrozenGraph`] that adds
//! the vectors needed for uniform sampling and is safe to share across threads.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::RelationType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConceptId(pub u32);

impl ConceptId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A graph node: one concept identifier with its language-tagged terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub cui: String,
    /// `(language, term)` pairs in first-seen order, without duplicates.
    pub terms: Vec<(String, String)>,
    pub preferred_term: BTreeMap<String, String>,
    /// Semantic-group codes, sorted and duplicate-free.
    pub groups: Vec<String>,
}

impl Concept {
    pub fn new(cui: impl Into<String>) -> Self {
        Self {
            cui: cui.into(),
            terms: Vec::new(),
            preferred_term: BTreeMap::new(),
            groups: Vec::new(),
        }
    }

    pub fn with_term(mut self, language: &str, term: &str) -> Self {
        self.add_term(language, term);
        self
    }

    pub fn with_preferred(mut self, language: &str, term: &str) -> Self {
        self.add_term(language, term);
        self.preferred_term.insert(language.to_string(), term.to_string());
        self
    }

    pub fn with_group(mut self, group: &str) -> Self {
        self.add_group(group);
        self
    }

    pub fn add_term(&mut self, language: &str, term: &str) -> bool {
        if self.terms.iter().any(|(l, t)| l == language && t == term) {
            return false;
        }
        self.terms.push((language.to_string(), term.to_string()));
        true
    }

    pub fn add_group(&mut self, group: &str) -> bool {
        match self.groups.binary_search_by(|g| g.as_str().cmp(group)) {
            Ok(_) => false,
            Err(pos) => {
                self.groups.insert(pos, group.to_string());
                true
            }
        }
    }

    pub fn terms_in<'a>(&'a self, language: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.terms
            .iter()
            .filter(move |(l, _)| l == language)
            .map(|(_, t)| t.as_str())
    }

    pub fn has_language(&self, language: &str) -> bool {
        self.terms.iter().any(|(l, _)| l == language)
    }

    /// Preferred term for `language`, falling back to the first term seen.
    pub fn preferred(&self, language: &str) -> Option<&str> {
        self.preferred_term
            .get(language)
            .map(String::as_str)
            .or_else(|| self.terms.iter().find(|(l, _)| l == language).map(|(_, t)| t.as_str()))
    }

    /// Lexicographically smallest group; the stratum label of the concept.
    pub fn canonical_group(&self) -> Option<&str> {
        self.groups.first().map(String::as_str)
    }

    fn normalize(&mut self) {
        let prefs: Vec<(String, String)> = self
            .preferred_term
            .iter()
            .map(|(l, t)| (l.clone(), t.clone()))
            .collect();
        for (l, t) in prefs {
            self.add_term(&l, &t);
        }
        self.groups.sort();
        self.groups.dedup();
    }
}

/// An ordered `(head, relation, tail)` edge addressed by concept identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: RelationType,
    pub tail: String,
}

impl Triple {
    pub fn new(head: impl Into<String>, relation: RelationType, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation,
            tail: tail.into(),
        }
    }
}

/// Interned edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub head: ConceptId,
    pub relation: RelationType,
    pub tail: ConceptId,
}

impl Edge {
    pub fn is_self_loop(&self) -> bool {
        self.head == self.tail
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStatistics {
    pub terms: u64,
    pub cuis: u64,
    pub relations: u64,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    concepts: Vec<Concept>,
    ids: HashMap<String, ConceptId>,
    edges: Vec<Edge>,
    membership: HashSet<Edge>,
    adjacency: Vec<Vec<u32>>,
    groups: BTreeMap<String, BTreeSet<ConceptId>>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a concept, merging terms and groups into an existing entry
    /// with the same identifier.
    pub fn insert_concept(&mut self, mut concept: Concept) -> Result<ConceptId> {
        if concept.cui.trim().is_empty() {
            return Err(Error::MalformedConcept("empty concept identifier".into()));
        }
        concept.normalize();
        let id = match self.ids.get(&concept.cui) {
            Some(&id) => {
                let existing = &mut self.concepts[id.index()];
                for (l, t) in &concept.terms {
                    existing.add_term(l, t);
                }
                for (l, t) in concept.preferred_term {
                    existing.preferred_term.entry(l).or_insert(t);
                }
                for g in &concept.groups {
                    existing.add_group(g);
                }
                id
            }
            None => {
                let id = ConceptId(self.concepts.len() as u32);
                self.ids.insert(concept.cui.clone(), id);
                self.concepts.push(concept);
                self.adjacency.push(Vec::new());
                id
            }
        };
        let groups = self.concepts[id.index()].groups.clone();
        for g in groups {
            self.groups.entry(g).or_default().insert(id);
        }
        Ok(id)
    }

    /// Inserts an edge; returns `false` when the exact triple already exists.
    pub fn insert_triple(&mut self, triple: &Triple) -> Result<bool> {
        let head = self.require(&triple.head)?;
        let tail = self.require(&triple.tail)?;
        Ok(self.insert_edge(Edge {
            head,
            relation: triple.relation,
            tail,
        }))
    }

    pub(crate) fn insert_edge(&mut self, edge: Edge) -> bool {
        if !self.membership.insert(edge) {
            return false;
        }
        let idx = self.edges.len() as u32;
        self.edges.push(edge);
        self.adjacency[edge.head.index()].push(idx);
        true
    }

    fn require(&self, cui: &str) -> Result<ConceptId> {
        self.ids
            .get(cui)
            .copied()
            .ok_or_else(|| Error::UnknownConcept { cui: cui.to_string() })
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        match (self.ids.get(&triple.head), self.ids.get(&triple.tail)) {
            (Some(&head), Some(&tail)) => self.contains_edge(&Edge {
                head,
                relation: triple.relation,
                tail,
            }),
            _ => false,
        }
    }

    pub fn contains_edge(&self, edge: &Edge) -> bool {
        self.membership.contains(edge)
    }

    pub fn lookup(&self, cui: &str) -> Option<&Concept> {
        self.ids.get(cui).map(|id| &self.concepts[id.index()])
    }

    pub fn id_of(&self, cui: &str) -> Option<ConceptId> {
        self.ids.get(cui).copied()
    }

    pub fn concept(&self, id: ConceptId) -> &Concept {
        &self.concepts[id.index()]
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn outgoing(&self, head: ConceptId) -> impl Iterator<Item = &Edge> + '_ {
        self.adjacency[head.index()]
            .iter()
            .map(move |&i| &self.edges[i as usize])
    }

    pub fn triple(&self, edge: &Edge) -> Triple {
        Triple {
            head: self.concepts[edge.head.index()].cui.clone(),
            relation: edge.relation,
            tail: self.concepts[edge.tail.index()].cui.clone(),
        }
    }

    pub fn group_codes(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    pub fn group_members(&self, group: &str) -> Option<&BTreeSet<ConceptId>> {
        self.groups.get(group)
    }

    pub fn canonical_group(&self, id: ConceptId) -> Option<&str> {
        self.concepts[id.index()].canonical_group()
    }

    /// Term, concept and relation counts restricted to one language.
    pub fn statistics(&self, language: &str) -> GraphStatistics {
        let mut stats = GraphStatistics::default();
        let mut has_lang = vec![false; self.concepts.len()];
        for (i, c) in self.concepts.iter().enumerate() {
            let n = c.terms_in(language).count() as u64;
            if n > 0 {
                stats.terms += n;
                stats.cuis += 1;
                has_lang[i] = true;
            }
        }
        stats.relations = self
            .edges
            .iter()
            .filter(|e| has_lang[e.head.index()] && has_lang[e.tail.index()])
            .count() as u64;
        stats
    }

    /// Languages with at least one term, sorted.
    pub fn languages(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .concepts
            .iter()
            .flat_map(|c| c.terms.iter().map(|(l, _)| l.as_str()))
            .collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn freeze(self) -> FrozenGraph {
        FrozenGraph::new(self)
    }
}

/// Immutable graph with sampling vectors; shareable across readers.
#[derive(Debug, Clone)]
pub struct FrozenGraph {
    graph: KnowledgeGraph,
    group_vectors: BTreeMap<String, Vec<ConceptId>>,
}

impl FrozenGraph {
    fn new(graph: KnowledgeGraph) -> Self {
        let group_vectors = graph
            .groups
            .iter()
            .map(|(g, members)| (g.clone(), members.iter().copied().collect()))
            .collect();
        Self { graph, group_vectors }
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }

    pub fn into_inner(self) -> KnowledgeGraph {
        self.graph
    }

    /// Members of `group` in ascending id order.
    pub fn group_vector(&self, group: &str) -> Option<&[ConceptId]> {
        self.group_vectors.get(group).map(Vec::as_slice)
    }

    pub fn sample_id_in_group<R: Rng + ?Sized>(&self, group: &str, rng: &mut R) -> Result<ConceptId> {
        match self.group_vectors.get(group) {
            Some(members) if !members.is_empty() => Ok(members[rng.random_range(0..members.len())]),
            _ => Err(Error::EmptyGroup(group.to_string())),
        }
    }

    /// Uniform draw among the members of a semantic group.
    pub fn sample_concept_in_group<R: Rng + ?Sized>(&self, group: &str, rng: &mut R) -> Result<&str> {
        let id = self.sample_id_in_group(group, rng)?;
        Ok(&self.graph.concept(id).cui)
    }
}

impl Deref for FrozenGraph {
    type Target = KnowledgeGraph;

    fn deref(&self) -> &KnowledgeGraph {
        &self.graph
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn concept(cui: &str, group: &str) -> Concept {
        Concept::new(cui)
            .with_preferred("ENG", &format!("term {cui}"))
            .with_group(group)
    }

    #[test]
    fn repeated_insert_merges_terms() {
        let mut kg = KnowledgeGraph::new();
        kg.insert_concept(
            Concept::new("C0001")
                .with_term("ENG", "a")
                .with_term("ENG", "b")
                .with_group("DISO"),
        )
        .unwrap();
        kg.insert_concept(
            Concept::new("C0001")
                .with_term("ENG", "c")
                .with_term("ENG", "a")
                .with_group("DISO"),
        )
        .unwrap();
        assert_eq!(kg.lookup("C0001").unwrap().terms.len(), 3);
        assert_eq!(kg.concept_count(), 1);
        assert!(kg.lookup("C9999").is_none());
    }

    #[test]
    fn groups_are_sorted() {
        let mut kg = KnowledgeGraph::new();
        kg.insert_concept(Concept::new("C1").with_group("DISO").with_group("CHEM"))
            .unwrap();
        let c = kg.lookup("C1").unwrap();
        assert_eq!(c.groups, vec!["CHEM", "DISO"]);
        assert_eq!(c.canonical_group(), Some("CHEM"));
        assert_eq!(kg.group_members("DISO").unwrap().len(), 1);
    }

    #[test]
    fn empty_cui_rejected() {
        let mut kg = KnowledgeGraph::new();
        assert!(matches!(
            kg.insert_concept(Concept::new(" ")),
            Err(Error::MalformedConcept(_))
        ));
    }

    #[test]
    fn preferred_term_is_added_to_terms() {
        let mut c = Concept::new("C1");
        c.preferred_term.insert("FRE".into(), "fibrillation".into());
        let mut kg = KnowledgeGraph::new();
        kg.insert_concept(c.with_group("DISO")).unwrap();
        let c = kg.lookup("C1").unwrap();
        assert_eq!(c.terms_in("FRE").collect::<Vec<_>>(), vec!["fibrillation"]);
    }

    #[test]
    fn triple_insert_is_idempotent_and_exact() {
        let mut kg = KnowledgeGraph::new();
        kg.insert_concept(concept("A", "X")).unwrap();
        kg.insert_concept(concept("B", "X")).unwrap();
        let t = Triple::new("A", RelationType::Parent, "B");
        assert!(kg.insert_triple(&t).unwrap());
        assert!(!kg.insert_triple(&t).unwrap());
        assert_eq!(kg.edge_count(), 1);
        assert!(kg.contains(&t));
        assert!(!kg.contains(&Triple::new("A", RelationType::Child, "B")));
        assert!(!kg.contains(&Triple::new("B", RelationType::Parent, "A")));
    }

    #[test]
    fn dangling_endpoint_names_cui() {
        let mut kg = KnowledgeGraph::new();
        kg.insert_concept(concept("A", "X")).unwrap();
        let err = kg
            .insert_triple(&Triple::new("A", RelationType::Parent, "B"))
            .unwrap_err();
        assert!(err.to_string().contains('B'), "{err}");
    }

    #[test]
    fn parallel_edges_with_different_relations() {
        let mut kg = KnowledgeGraph::new();
        kg.insert_concept(concept("A", "X")).unwrap();
        kg.insert_concept(concept("B", "X")).unwrap();
        kg.insert_triple(&Triple::new("A", RelationType::Parent, "B")).unwrap();
        kg.insert_triple(&Triple::new("A", RelationType::Broader, "B")).unwrap();
        assert_eq!(kg.edge_count(), 2);
        assert_eq!(kg.outgoing(kg.id_of("A").unwrap()).count(), 2);
    }

    #[test]
    fn sample_in_group() {
        let mut kg = KnowledgeGraph::new();
        kg.insert_concept(concept("A", "ANAT")).unwrap();
        kg.insert_concept(concept("B", "DISO")).unwrap();
        let kg = kg.freeze();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            assert_eq!(kg.sample_concept_in_group("ANAT", &mut rng).unwrap(), "A");
        }
        assert!(matches!(
            kg.sample_concept_in_group("CHEM", &mut rng),
            Err(Error::EmptyGroup(g)) if g == "CHEM"
        ));
    }

    #[test]
    fn statistics_of_empty_graph() {
        assert_eq!(KnowledgeGraph::new().statistics("ENG"), GraphStatistics::default());
    }

    #[test]
    fn statistics_respect_language() {
        let mut kg = KnowledgeGraph::new();
        kg.insert_concept(concept("A", "X").with_term("FRE", "a-fr")).unwrap();
        kg.insert_concept(concept("B", "X")).unwrap();
        kg.insert_triple(&Triple::new("A", RelationType::Parent, "B")).unwrap();
        assert_eq!(
            kg.statistics("ENG"),
            GraphStatistics {
                terms: 2,
                cuis: 2,
                relations: 1
            }
        );
        assert_eq!(
            kg.statistics("FRE"),
            GraphStatistics {
                terms: 1,
                cuis: 1,
                relations: 0
            }
        );
    }
}
