//! Streaming parsers for pipe-delimited release files.
//!
//! Four files make up a release:
//!
//! | file            | fields used                                          |
//! |-----------------|------------------------------------------------------|
//! | `MRCONSO.RRF`   | 0 cui, 1 language, 2 term status, 4 string type, 6 is-preferred, 14 string |
//! | `MRREL.RRF`     | 0 first cui, 3 relation code, 4 second cui           |
//! | `MRSTY.RRF`     | 0 cui, 1 semantic type                               |
//! | `SemGroups.txt` | 0 group code, 2 semantic type                        |
//!
//! Every parser reads one line at a time and never buffers the file. Rows that
//! cannot be parsed are skipped and counted unless strict mode is on.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Concept, Edge, FrozenGraph, KnowledgeGraph, Triple};
use crate::relation::RelationType;

const CONCEPT_MIN_FIELDS: usize = 15;
const RELATION_MIN_FIELDS: usize = 5;
const SEMTYPE_MIN_FIELDS: usize = 2;
const GROUP_MIN_FIELDS: usize = 3;

/// Opens a text file, transparently decompressing `.gz`.
pub fn open_text(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let gz = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    if gz {
        Ok(Box::new(BufReader::with_capacity(
            1 << 16,
            flate2::read::MultiGzDecoder::new(file),
        )))
    } else {
        Ok(Box::new(BufReader::with_capacity(1 << 16, file)))
    }
}

/// One pipe-delimited line. Empty fields are preserved, so a trailing pipe
/// produces a final empty field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RrfRow<'a> {
    pub line: u64,
    pub fields: Vec<&'a str>,
}

impl<'a> RrfRow<'a> {
    pub fn parse(line: u64, text: &'a str) -> Self {
        Self {
            line,
            fields: text.split('|').collect(),
        }
    }

    pub fn field(&self, i: usize) -> &'a str {
        self.fields.get(i).copied().unwrap_or("")
    }

    pub fn join(&self) -> String {
        self.fields.join("|")
    }
}

/// Line reader reusing one buffer across rows.
pub struct RowReader<R> {
    reader: R,
    buf: Vec<u8>,
    line: u64,
}

pub enum RawRow<'a> {
    Row(RrfRow<'a>),
    InvalidUtf8(u64),
}

impl<R: BufRead> RowReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            buf: Vec::with_capacity(512),
            line: 0,
        }
    }

    pub fn next_row(&mut self) -> Option<std::io::Result<RawRow<'_>>> {
        self.buf.clear();
        match self.reader.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(_) => {
                self.line += 1;
                while matches!(self.buf.last(), Some(b'\n' | b'\r')) {
                    self.buf.pop();
                }
                Some(Ok(match std::str::from_utf8(&self.buf) {
                    Ok(text) => RawRow::Row(RrfRow::parse(self.line, text)),
                    Err(_) => RawRow::InvalidUtf8(self.line),
                }))
            }
            Err(e) => Some(Err(e)),
        }
    }
}

/// Which term-status columns mark a row as the preferred string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferredPolicy {
    pub require_term_status_p: bool,
    pub require_is_preferred_y: bool,
    pub require_string_type_pf: bool,
}

impl Default for PreferredPolicy {
    fn default() -> Self {
        Self {
            require_term_status_p: true,
            require_is_preferred_y: true,
            require_string_type_pf: false,
        }
    }
}

impl PreferredPolicy {
    fn is_preferred(&self, row: &RrfRow<'_>) -> bool {
        (!self.require_term_status_p || row.field(2) == "P")
            && (!self.require_string_type_pf || row.field(4) == "PF")
            && (!self.require_is_preferred_y || row.field(6) == "Y")
    }
}

/// Direction in which relation rows become triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Orientation {
    /// `CUI1|..|REL|CUI2` becomes `(CUI2, REL, CUI1)`: the code describes the
    /// second concept's relation to the first.
    #[default]
    SecondToFirst,
    /// `CUI1|..|REL|CUI2` becomes `(CUI1, REL, CUI2)`.
    FirstToSecond,
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    /// Language codes to keep; empty keeps everything.
    pub languages: BTreeSet<String>,
    pub relation_map: HashMap<String, RelationType>,
    /// Semantic type identifier to group code.
    pub type_groups: HashMap<String, String>,
    pub preferred: PreferredPolicy,
    pub orientation: Orientation,
    /// Groups to keep; `None` keeps all.
    pub group_allow_list: Option<BTreeSet<String>>,
    pub strict: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            languages: BTreeSet::new(),
            relation_map: default_relation_map(),
            type_groups: HashMap::new(),
            preferred: PreferredPolicy::default(),
            orientation: Orientation::default(),
            group_allow_list: None,
            strict: false,
        }
    }
}

impl IngestConfig {
    pub fn with_languages<I, S>(mut self, languages: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.languages = languages.into_iter().map(Into::into).collect();
        self
    }
}

pub fn default_relation_map() -> HashMap<String, RelationType> {
    RelationType::ALL
        .into_iter()
        .map(|r| (r.release_code().to_string(), r))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseSummary {
    pub rows: u64,
    pub emitted: u64,
    pub malformed: u64,
    pub filtered: u64,
    pub unmapped: u64,
}

impl ParseSummary {
    pub fn dropped(&self) -> u64 {
        self.malformed + self.filtered + self.unmapped
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptFragment {
    pub cui: String,
    pub language: String,
    pub term: String,
    pub preferred: bool,
}

enum Step<T> {
    Emit(T),
    Skip,
}

/// Shared driver: reads rows, applies `f`, keeps the summary.
struct RowParser<R, F> {
    rows: RowReader<R>,
    summary: ParseSummary,
    strict: bool,
    f: F,
}

impl<R: BufRead, T, F> RowParser<R, F>
where
    F: FnMut(&RrfRow<'_>, &mut ParseSummary) -> std::result::Result<Step<T>, String>,
{
    fn next_item(&mut self) -> Option<Result<T>> {
        loop {
            let raw = match self.rows.next_row()? {
                Ok(raw) => raw,
                Err(e) => return Some(Err(Error::io("<stream>", e))),
            };
            self.summary.rows += 1;
            let outcome = match raw {
                RawRow::InvalidUtf8(line) => Err((line, "invalid UTF-8".to_string())),
                RawRow::Row(row) => match (self.f)(&row, &mut self.summary) {
                    Ok(step) => Ok(step),
                    Err(msg) => Err((row.line, msg)),
                },
            };
            match outcome {
                Ok(Step::Emit(item)) => {
                    self.summary.emitted += 1;
                    return Some(Ok(item));
                }
                Ok(Step::Skip) => {}
                Err((line, message)) => {
                    self.summary.malformed += 1;
                    if self.strict {
                        return Some(Err(Error::MalformedRow { line, message }));
                    }
                }
            }
        }
    }
}

macro_rules! parser_type {
    ($name:ident, $item:ty) => {
        pub struct $name<R: BufRead> {
            inner: RowParser<
                R,
                Box<dyn FnMut(&RrfRow<'_>, &mut ParseSummary) -> std::result::Result<Step<$item>, String> + Send>,
            >,
        }

        impl<R: BufRead> $name<R> {
            pub fn summary(&self) -> ParseSummary {
                self.inner.summary
            }
        }

        impl<R: BufRead> Iterator for $name<R> {
            type Item = Result<$item>;

            fn next(&mut self) -> Option<Self::Item> {
                self.inner.next_item()
            }
        }
    };
}

parser_type!(ConceptParser, ConceptFragment);
parser_type!(RelationParser, Triple);
parser_type!(SemanticTypeParser, (String, String));

/// Parses the concept/term file into per-row fragments.
pub fn parse_concept_file<R: BufRead>(reader: R, cfg: &IngestConfig) -> ConceptParser<R> {
    let languages = cfg.languages.clone();
    let policy = cfg.preferred;
    let f = move |row: &RrfRow<'_>, summary: &mut ParseSummary| {
        if row.fields.len() < CONCEPT_MIN_FIELDS {
            return Err(format!(
                "expected at least {CONCEPT_MIN_FIELDS} fields, found {}",
                row.fields.len()
            ));
        }
        let (cui, language, term) = (row.field(0), row.field(1), row.field(14));
        if cui.is_empty() || term.trim().is_empty() {
            return Err("empty identifier or term".into());
        }
        if !(languages.is_empty() || languages.contains(language)) {
            summary.filtered += 1;
            return Ok(Step::Skip);
        }
        Ok(Step::Emit(ConceptFragment {
            cui: cui.to_string(),
            language: language.to_string(),
            term: normalize_whitespace(term),
            preferred: policy.is_preferred(row),
        }))
    };
    ConceptParser {
        inner: RowParser {
            rows: RowReader::new(reader),
            summary: ParseSummary::default(),
            strict: cfg.strict,
            f: Box::new(f),
        },
    }
}

/// Parses the relation file, keeping rows whose code is in the relation map.
pub fn parse_relation_file<R: BufRead>(reader: R, cfg: &IngestConfig) -> RelationParser<R> {
    let map = cfg.relation_map.clone();
    let orientation = cfg.orientation;
    let f = move |row: &RrfRow<'_>, summary: &mut ParseSummary| {
        if row.fields.len() < RELATION_MIN_FIELDS {
            return Err(format!(
                "expected at least {RELATION_MIN_FIELDS} fields, found {}",
                row.fields.len()
            ));
        }
        let (first, code, second) = (row.field(0), row.field(3), row.field(4));
        if first.is_empty() || second.is_empty() {
            return Err("empty concept identifier".into());
        }
        let Some(&relation) = map.get(code) else {
            summary.unmapped += 1;
            return Ok(Step::Skip);
        };
        let (head, tail) = match orientation {
            Orientation::SecondToFirst => (second, first),
            Orientation::FirstToSecond => (first, second),
        };
        Ok(Step::Emit(Triple::new(head, relation, tail)))
    };
    RelationParser {
        inner: RowParser {
            rows: RowReader::new(reader),
            summary: ParseSummary::default(),
            strict: cfg.strict,
            f: Box::new(f),
        },
    }
}

/// Parses the semantic-type file into deduplicated `(cui, group)` memberships.
pub fn parse_semantic_types<R: BufRead>(
    reader: R,
    groups_map: &HashMap<String, String>,
    cfg: &IngestConfig,
) -> SemanticTypeParser<R> {
    let map = groups_map.clone();
    let allow = cfg.group_allow_list.clone();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let f = move |row: &RrfRow<'_>, summary: &mut ParseSummary| {
        if row.fields.len() < SEMTYPE_MIN_FIELDS || row.field(0).is_empty() {
            return Err("expected concept identifier and semantic type".into());
        }
        let Some(group) = map.get(row.field(1)) else {
            summary.unmapped += 1;
            return Ok(Step::Skip);
        };
        if allow.as_ref().is_some_and(|a| !a.contains(group)) {
            summary.filtered += 1;
            return Ok(Step::Skip);
        }
        let key = (row.field(0).to_string(), group.clone());
        if seen.contains(&key) {
            summary.filtered += 1;
            return Ok(Step::Skip);
        }
        seen.insert(key.clone());
        Ok(Step::Emit(key))
    };
    SemanticTypeParser {
        inner: RowParser {
            rows: RowReader::new(reader),
            summary: ParseSummary::default(),
            strict: cfg.strict,
            f: Box::new(f),
        },
    }
}

/// Reads the semantic-group mapping file into `type -> group`.
pub fn parse_group_mapping<R: BufRead>(reader: R, strict: bool) -> Result<(HashMap<String, String>, ParseSummary)> {
    let mut rows = RowReader::new(reader);
    let mut map = HashMap::new();
    let mut summary = ParseSummary::default();
    while let Some(raw) = rows.next_row() {
        let raw = raw.map_err(|e| Error::io("<group mapping>", e))?;
        summary.rows += 1;
        match raw {
            RawRow::Row(row) if row.fields.len() >= GROUP_MIN_FIELDS && !row.field(0).is_empty() => {
                map.entry(row.field(2).to_string())
                    .or_insert_with(|| row.field(0).to_string());
                summary.emitted += 1;
            }
            RawRow::Row(row) => {
                summary.malformed += 1;
                if strict {
                    return Err(Error::MalformedRow {
                        line: row.line,
                        message: format!("expected at least {GROUP_MIN_FIELDS} fields"),
                    });
                }
            }
            RawRow::InvalidUtf8(line) => {
                summary.malformed += 1;
                if strict {
                    return Err(Error::MalformedRow {
                        line,
                        message: "invalid UTF-8".into(),
                    });
                }
            }
        }
    }
    Ok((map, summary))
}

pub(crate) fn normalize_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Counts collected while building a graph; rendered as `key = value` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub concept_file: ParseSummary,
    pub relation_file: ParseSummary,
    pub semantic_type_file: ParseSummary,
    pub group_file: ParseSummary,
    pub fragments: u64,
    pub memberships: u64,
    pub memberships_unknown_concept: u64,
    pub concepts: u64,
    pub concepts_without_group: u64,
    pub triples_read: u64,
    pub triples_dangling: u64,
    pub triples_duplicate: u64,
    pub edges: u64,
    pub self_loops: u64,
    pub per_relation: BTreeMap<String, u64>,
}

impl IngestReport {
    pub fn key_values(&self) -> Vec<(String, u64)> {
        let mut kv = Vec::new();
        for (name, s) in [
            ("concept_file", &self.concept_file),
            ("relation_file", &self.relation_file),
            ("semantic_type_file", &self.semantic_type_file),
            ("group_file", &self.group_file),
        ] {
            kv.push((format!("{name}.rows"), s.rows));
            kv.push((format!("{name}.emitted"), s.emitted));
            kv.push((format!("{name}.malformed"), s.malformed));
            kv.push((format!("{name}.filtered"), s.filtered));
            kv.push((format!("{name}.unmapped"), s.unmapped));
        }
        for (k, v) in [
            ("fragments", self.fragments),
            ("memberships", self.memberships),
            ("memberships_unknown_concept", self.memberships_unknown_concept),
            ("concepts", self.concepts),
            ("concepts_without_group", self.concepts_without_group),
            ("triples_read", self.triples_read),
            ("triples_dangling", self.triples_dangling),
            ("triples_duplicate", self.triples_duplicate),
            ("edges", self.edges),
            ("self_loops", self.self_loops),
        ] {
            kv.push((k.to_string(), v));
        }
        for (r, n) in &self.per_relation {
            kv.push((format!("relation.{r}"), *n));
        }
        kv
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.key_values() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[derive(Default)]
struct PendingConcept {
    terms: Vec<(String, String)>,
    preferred: BTreeMap<String, String>,
    groups: BTreeSet<String>,
}

/// Assembles a frozen graph from parsed streams.
///
/// Concepts come only from term fragments, so a language filter applied while
/// parsing also removes concepts (and then edges) without a term in the
/// active languages. Concepts left without any semantic group are dropped.
/// Concepts are inserted in identifier order and edges in sorted order, so the
/// result does not depend on row order within the files.
pub fn build_graph<F, T, M>(fragments: F, triples: T, memberships: M) -> Result<(FrozenGraph, IngestReport)>
where
    F: IntoIterator<Item = Result<ConceptFragment>>,
    T: IntoIterator<Item = Result<Triple>>,
    M: IntoIterator<Item = Result<(String, String)>>,
{
    let mut report = IngestReport::default();
    let mut pending: HashMap<String, PendingConcept> = HashMap::new();
    for fragment in fragments {
        let fragment = fragment?;
        report.fragments += 1;
        let entry = pending.entry(fragment.cui).or_default();
        let pair = (fragment.language, fragment.term);
        if !entry.terms.contains(&pair) {
            entry.terms.push(pair.clone());
        }
        if fragment.preferred {
            entry.preferred.entry(pair.0).or_insert(pair.1);
        }
    }
    for membership in memberships {
        let (cui, group) = membership?;
        report.memberships += 1;
        match pending.get_mut(&cui) {
            Some(p) => {
                p.groups.insert(group);
            }
            None => report.memberships_unknown_concept += 1,
        }
    }

    let mut cuis: Vec<String> = pending.keys().cloned().collect();
    cuis.sort();
    let mut kg = KnowledgeGraph::new();
    for cui in cuis {
        let p = pending.remove(&cui).expect("key taken from map");
        if p.groups.is_empty() {
            report.concepts_without_group += 1;
            continue;
        }
        let mut concept = Concept::new(cui);
        concept.terms = p.terms;
        concept.preferred_term = p.preferred;
        let languages: BTreeSet<String> = concept.terms.iter().map(|(l, _)| l.clone()).collect();
        for l in languages {
            if !concept.preferred_term.contains_key(&l) {
                let first = concept.terms_in(&l).next().map(String::from);
                if let Some(t) = first {
                    concept.preferred_term.insert(l, t);
                }
            }
        }
        concept.groups = p.groups.into_iter().collect();
        kg.insert_concept(concept)?;
    }
    report.concepts = kg.concept_count() as u64;
    if kg.concept_count() == 0 {
        return Err(Error::EmptyGraph);
    }

    let mut edges: Vec<Edge> = Vec::new();
    let mut seen: HashSet<Edge> = HashSet::new();
    for triple in triples {
        let triple = triple?;
        report.triples_read += 1;
        match (kg.id_of(&triple.head), kg.id_of(&triple.tail)) {
            (Some(head), Some(tail)) => {
                let edge = Edge {
                    head,
                    relation: triple.relation,
                    tail,
                };
                if seen.insert(edge) {
                    edges.push(edge);
                } else {
                    report.triples_duplicate += 1;
                }
            }
            _ => report.triples_dangling += 1,
        }
    }
    drop(seen);
    edges.sort_unstable_by_key(|e| (e.head, e.relation, e.tail));
    for edge in edges {
        if edge.is_self_loop() {
            report.self_loops += 1;
        }
        *report.per_relation.entry(edge.relation.name().to_string()).or_default() += 1;
        kg.insert_edge(edge);
    }
    report.edges = kg.edge_count() as u64;
    Ok((kg.freeze(), report))
}

/// Locations of the four release files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReleaseFiles {
    pub concepts: PathBuf,
    pub relations: PathBuf,
    pub semantic_types: PathBuf,
    pub groups: PathBuf,
}

pub const CONCEPT_FILE: &str = "MRCONSO.RRF";
pub const RELATION_FILE: &str = "MRREL.RRF";
pub const SEMANTIC_TYPE_FILE: &str = "MRSTY.RRF";
pub const GROUP_FILE: &str = "SemGroups.txt";

impl ReleaseFiles {
    /// Finds the standard file names in `dir`, plain or `.gz`.
    pub fn in_dir(dir: &Path) -> Result<Self> {
        let find = |name: &str| -> Result<PathBuf> {
            let plain = dir.join(name);
            if plain.is_file() {
                return Ok(plain);
            }
            let gz = dir.join(format!("{name}.gz"));
            if gz.is_file() {
                return Ok(gz);
            }
            Err(Error::io(
                plain,
                std::io::Error::new(std::io::ErrorKind::NotFound, "release file not found"),
            ))
        };
        Ok(Self {
            concepts: find(CONCEPT_FILE)?,
            relations: find(RELATION_FILE)?,
            semantic_types: find(SEMANTIC_TYPE_FILE)?,
            groups: find(GROUP_FILE)?,
        })
    }
}

/// Parses a release directory into a frozen graph.
///
/// The concept and semantic-type files are parsed on separate threads; the
/// relation file is streamed straight into the graph afterwards.
pub fn ingest_release(files: &ReleaseFiles, cfg: &IngestConfig) -> Result<(FrozenGraph, IngestReport)> {
    let (type_groups, group_summary) = parse_group_mapping(open_text(&files.groups)?, cfg.strict)?;
    let mut cfg = cfg.clone();
    cfg.type_groups.extend(type_groups);
    let cfg = &cfg;

    let (fragments, memberships) = std::thread::scope(|s| {
        let concepts = s.spawn(|| -> Result<(Vec<ConceptFragment>, ParseSummary)> {
            let mut parser = parse_concept_file(open_text(&files.concepts)?, cfg);
            let items = parser.by_ref().collect::<Result<Vec<_>>>()?;
            Ok((items, parser.summary()))
        });
        let types = s.spawn(|| -> Result<(Vec<(String, String)>, ParseSummary)> {
            let mut parser = parse_semantic_types(open_text(&files.semantic_types)?, &cfg.type_groups, cfg);
            let items = parser.by_ref().collect::<Result<Vec<_>>>()?;
            Ok((items, parser.summary()))
        });
        (
            concepts.join().expect("concept parser panicked"),
            types.join().expect("semantic type parser panicked"),
        )
    });
    let (fragments, concept_summary) = fragments?;
    let (memberships, type_summary) = memberships?;

    let mut relations = parse_relation_file(open_text(&files.relations)?, cfg);
    let (graph, mut report) = build_graph(
        fragments.into_iter().map(Ok),
        relations.by_ref(),
        memberships.into_iter().map(Ok),
    )?;
    report.concept_file = concept_summary;
    report.semantic_type_file = type_summary;
    report.relation_file = relations.summary();
    report.group_file = group_summary;
    Ok((graph, report))
}
