//! Sharded line-delimited output, the corpus manifest, and validation.
//!
//! A corpus directory holds `part-NNNNN.jsonl` shards and `manifest.json`.
//! The manifest is written last through a temporary file and a rename, so a
//! directory without one is never a finished corpus.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::BuildConfig;
use crate::corpus::{BuiltCorpus, TcComposition};
use crate::error::{Error, Result};
use crate::graph::{ConceptId, Edge, FrozenGraph};
use crate::objective::{compute_weights_for, TaskWeights};
use crate::relation::RelationType;
use crate::render::{Labels, SpanRole, SpecialTokenSet, Task, TrainingRecord};
use crate::seed::{hash_label, SeedStream};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_TMP: &str = "manifest.json.tmp";
pub const DEFAULT_BATCH_SIZE: usize = 32;

pub fn shard_file_name(index: usize) -> String {
    format!("part-{index:05}.jsonl")
}

fn is_shard_file(name: &str) -> bool {
    name.starts_with("part-") && name.ends_with(".jsonl")
}

/// Shard of a record: a hash of its id keyed by the seed.
pub fn shard_of(id: &str, seed: u64, shards: usize) -> usize {
    let h = SeedStream::new(seed ^ hash_label(id)).scope("shard").seed();
    (h % shards.max(1) as u64) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardEntry {
    pub file: String,
    pub records: u64,
    pub bytes: u64,
    pub sha256: String,
    pub counts: BTreeMap<Task, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCode {
    pub code: u8,
    pub name: String,
    pub token: String,
}

/// Defaults a trainer should use unless told otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingDefaults {
    pub mlm_probability: f64,
    pub sequence_length: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub language: String,
    pub seed: u64,
    /// Seed for `plan_interleave` so every trainer sees the same epoch order.
    pub interleave_seed: u64,
    pub counts: BTreeMap<Task, u64>,
    pub total_records: u64,
    pub disabled_tasks: Vec<Task>,
    pub tc_composition: TcComposition,
    pub weights: TaskWeights,
    pub shards: Vec<ShardEntry>,
    pub special_tokens: SpecialTokenSet,
    pub lp_label_alphabet: Vec<LabelCode>,
    pub max_hops: usize,
    pub ingest: BTreeMap<String, u64>,
    pub build: BTreeMap<String, u64>,
    /// Sum of shard file sizes on disk.
    pub total_bytes: u64,
    pub total_bytes_unit: String,
    pub defaults: TrainingDefaults,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(Error::InvalidCorpus(format!(
                "{} has no {MANIFEST_FILE}",
                dir.display()
            )));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn count(&self, task: Task) -> u64 {
        self.counts.get(&task).copied().unwrap_or(0)
    }
}

pub fn lp_label_alphabet(tokens: &SpecialTokenSet) -> Vec<LabelCode> {
    RelationType::LINK_PREDICTION
        .iter()
        .map(|&r| LabelCode {
            code: r.code(),
            name: r.name().to_string(),
            token: tokens.relation(r).to_string(),
        })
        .collect()
}

/// Extra provenance recorded in the manifest.
#[derive(Debug, Clone, Default)]
pub struct ManifestExtras {
    pub ingest: BTreeMap<String, u64>,
}

fn build_summary(corpus: &BuiltCorpus) -> BTreeMap<String, u64> {
    let r = &corpus.report;
    BTreeMap::from([
        ("concepts_without_language".into(), r.concepts_without_language),
        ("tc.duplicates".into(), r.tc.duplicates as u64),
        ("tc.reallocation_warnings".into(), r.tc.reallocation_warnings),
        ("tc.cross_strategy_fallback".into(), r.tc.cross_strategy_fallback as u64),
        ("ep.exhausted_strata".into(), r.ep.exhausted_strata.len() as u64),
        ("lp.distinct".into(), r.lp.distinct as u64),
        ("lp.reallocation_warnings".into(), r.lp.reallocation_warnings),
        ("lp.truncated_walks".into(), r.lp.truncated_walks as u64),
        ("render.synonym_fallbacks".into(), r.render.synonym_fallbacks),
        ("render.truncated".into(), r.render.truncated),
    ])
}

struct ShardWriter {
    file: String,
    out: BufWriter<File>,
    hasher: Sha256,
    bytes: u64,
    records: u64,
    counts: BTreeMap<Task, u64>,
}

impl ShardWriter {
    fn write(&mut self, path: &Path, line: &[u8], task: Task) -> Result<()> {
        self.out.write_all(line).map_err(|e| Error::io(path, e))?;
        self.hasher.update(line);
        self.bytes += line.len() as u64;
        self.records += 1;
        *self.counts.entry(task).or_default() += 1;
        Ok(())
    }
}

fn clear_previous(dir: &Path) -> Result<()> {
    for name in [MANIFEST_FILE, MANIFEST_TMP] {
        let p = dir.join(name);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.file_name().to_str().is_some_and(is_shard_file) {
            fs::remove_file(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        }
    }
    Ok(())
}

/// Writes shards, then the manifest. Any earlier manifest and shards in
/// `dir` are removed first.
pub fn emit(corpus: &BuiltCorpus, cfg: &BuildConfig, dir: &Path, extras: &ManifestExtras) -> Result<Manifest> {
    let shards = cfg.shards.max(1);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    clear_previous(dir)?;
    let mut writers = (0..shards)
        .map(|i| {
            let file = shard_file_name(i);
            let path = dir.join(&file);
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            Ok(ShardWriter {
                file,
                out: BufWriter::with_capacity(1 << 16, f),
                hasher: Sha256::new(),
                bytes: 0,
                records: 0,
                counts: BTreeMap::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut line = Vec::with_capacity(512);
    for task in Task::ALL {
        for record in corpus.records.get(&task).into_iter().flatten() {
            line.clear();
            serde_json::to_writer(&mut line, record)?;
            line.push(b'\n');
            let s = shard_of(&record.id, cfg.seed, shards);
            let path = dir.join(&writers[s].file);
            writers[s].write(&path, &line, task)?;
        }
    }
    let mut entries = Vec::with_capacity(shards);
    for w in writers {
        let path = dir.join(&w.file);
        let file = w.out.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
        file.sync_all().map_err(|e| Error::io(&path, e))?;
        entries.push(ShardEntry {
            file: w.file,
            records: w.records,
            bytes: w.bytes,
            sha256: hex::encode(w.hasher.finalize()),
            counts: w.counts,
        });
    }
    let counts: BTreeMap<Task, u64> = Task::ALL
        .into_iter()
        .filter(|t| cfg.enabled(*t))
        .map(|t| (t, corpus.count(t) as u64))
        .collect();
    let total_bytes = entries.iter().map(|e| e.bytes).sum();
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        language: cfg.language.clone(),
        seed: cfg.seed,
        interleave_seed: SeedStream::new(cfg.seed).scope("interleave").seed(),
        total_records: counts.values().sum(),
        counts,
        disabled_tasks: cfg.disabled.iter().copied().collect(),
        tc_composition: corpus.report.tc_composition,
        weights: corpus.weights,
        shards: entries,
        special_tokens: cfg.tokens.clone(),
        lp_label_alphabet: lp_label_alphabet(&cfg.tokens),
        max_hops: cfg.max_hops,
        ingest: extras.ingest.clone(),
        build: build_summary(corpus),
        total_bytes,
        total_bytes_unit: "bytes on disk".into(),
        defaults: TrainingDefaults {
            mlm_probability: cfg.mlm_probability,
            sequence_length: cfg.sequence_length,
            batch_size: DEFAULT_BATCH_SIZE,
        },
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let tmp = dir.join(MANIFEST_TMP);
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    {
        let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    let dest = dir.join(MANIFEST_FILE);
    fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))
}

/// Reads every record of a corpus in shard order.
pub fn read_records(dir: &Path) -> Result<Vec<TrainingRecord>> {
    let manifest = Manifest::read(dir)?;
    let mut out = Vec::new();
    for shard in &manifest.shards {
        let path = dir.join(&shard.file);
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &str, problems: &[String], ok_detail: String) {
        let passed = problems.is_empty();
        let detail = if passed {
            ok_detail
        } else {
            let mut d: Vec<&str> = problems.iter().take(5).map(String::as_str).collect();
            let more = problems.len().saturating_sub(5);
            let tail = if more > 0 {
                format!(" (+{more} more)")
            } else {
                String::new()
            };
            d.sort_unstable();
            format!("{}{tail}", d.join("; "))
        };
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    pub fn render(&self) -> String {
        self.checks
            .iter()
            .map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect()
    }
}

/// Term-to-concept index for checking rendered text against the graph.
struct TermIndex<'a> {
    kg: &'a FrozenGraph,
    by_term: HashMap<&'a str, Vec<ConceptId>>,
}

impl<'a> TermIndex<'a> {
    fn new(kg: &'a FrozenGraph, language: &'a str) -> Self {
        let mut by_term: HashMap<&str, Vec<ConceptId>> = HashMap::new();
        for (i, c) in kg.concepts().iter().enumerate() {
            for t in c.terms_in(language) {
                by_term.entry(t).or_default().push(ConceptId(i as u32));
            }
        }
        Self { kg, by_term }
    }

    fn candidates(&self, term: &str) -> &[ConceptId] {
        self.by_term.get(term).map_or(&[], Vec::as_slice)
    }

    /// Whether some concept assignment to `terms` makes every hop a graph edge.
    fn chain_exists(&self, terms: &[&str], relations: &[RelationType]) -> bool {
        let mut frontier: HashSet<ConceptId> = self.candidates(terms[0]).iter().copied().collect();
        for (i, &r) in relations.iter().enumerate() {
            let next: HashSet<ConceptId> = self.candidates(terms[i + 1]).iter().copied().collect();
            frontier = frontier
                .iter()
                .flat_map(|&h| self.kg.outgoing(h))
                .filter(|e| e.relation == r && next.contains(&e.tail))
                .map(|e| e.tail)
                .collect();
            if frontier.is_empty() {
                return false;
            }
        }
        true
    }

    fn triple_exists(&self, head: &str, relation: RelationType, tail: &str) -> bool {
        self.candidates(head).iter().any(|&h| {
            self.candidates(tail).iter().any(|&t| {
                self.kg.contains_edge(&Edge {
                    head: h,
                    relation,
                    tail: t,
                })
            })
        })
    }
}

/// Text between consecutive relation spans of a path record.
fn path_segments(record: &TrainingRecord) -> Option<Vec<&str>> {
    let n = record.text.chars().count();
    let mut bounds = vec![0usize];
    for s in &record.spans {
        bounds.push(s.start);
        bounds.push(s.end);
    }
    bounds.push(n);
    bounds
        .chunks(2)
        .map(|w| {
            record
                .slice(&crate::render::Span {
                    role: SpanRole::Head,
                    start: w[0],
                    end: w[1],
                })
                .map(str::trim)
        })
        .collect()
}

fn check_record(record: &TrainingRecord, tokens: &SpecialTokenSet, problems: &mut Vec<String>) {
    let id = &record.id;
    let n = record.text.chars().count();
    for s in &record.spans {
        if s.start >= s.end || s.end > n || record.slice(s).is_none() {
            problems.push(format!("{id}: span {}..{} outside text of length {n}", s.start, s.end));
            return;
        }
    }
    let roles: Vec<SpanRole> = record.spans.iter().map(|s| s.role).collect();
    match record.task {
        Task::Tc | Task::Ep => {
            if roles != [SpanRole::Head, SpanRole::Relation, SpanRole::Tail] {
                problems.push(format!("{id}: expected head, relation, tail spans"));
                return;
            }
            let rel = record.slice(&record.spans[1]).unwrap_or_default();
            if tokens.relation_for_token(rel).is_none() {
                problems.push(format!("{id}: `{rel}` is not a relation token"));
            }
            let expected = format!(
                "{} {} {}",
                record.slice(&record.spans[0]).unwrap_or_default(),
                rel,
                record.slice(&record.spans[2]).unwrap_or_default()
            );
            if expected != record.text {
                problems.push(format!("{id}: spans do not tile the text"));
            }
            match (&record.task, &record.labels) {
                (Task::Tc, Labels::Classification(_)) | (Task::Ep, Labels::Absent) => {}
                _ => problems.push(format!("{id}: wrong label type for {}", record.task.name())),
            }
        }
        Task::Lp => {
            let Labels::Relations(codes) = &record.labels else {
                problems.push(format!("{id}: lp record without relation labels"));
                return;
            };
            if roles.iter().any(|r| *r != SpanRole::Relation) || codes.len() != record.spans.len() || codes.len() < 2 {
                problems.push(format!(
                    "{id}: {} relation spans for {} labels",
                    roles.len(),
                    codes.len()
                ));
                return;
            }
            for (s, &c) in record.spans.iter().zip(codes) {
                let Some(r) = RelationType::from_code(c).filter(|r| *r != RelationType::Synonym) else {
                    problems.push(format!("{id}: label {c} outside the link-prediction alphabet"));
                    continue;
                };
                if record.slice(s) != Some(tokens.relation(r)) {
                    problems.push(format!("{id}: span does not hold the token for label {c}"));
                }
            }
        }
        Task::Mlm => {
            if !record.spans.is_empty() || record.labels != Labels::Absent || record.text.trim().is_empty() {
                problems.push(format!("{id}: mlm records carry text only"));
            }
        }
    }
}

/// Re-checks a corpus directory. A missing manifest is an error; every other
/// problem is reported as a failed check.
pub fn validate(dir: &Path, graph: Option<&FrozenGraph>) -> Result<ValidationReport> {
    let manifest = Manifest::read(dir)?;
    let mut report = ValidationReport::default();

    let mut integrity = Vec::new();
    let mut texts: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    for shard in &manifest.shards {
        let path = dir.join(&shard.file);
        match fs::read(&path) {
            Ok(bytes) => {
                if bytes.len() as u64 != shard.bytes {
                    integrity.push(format!(
                        "{}: {} bytes, manifest says {}",
                        shard.file,
                        bytes.len(),
                        shard.bytes
                    ));
                }
                let digest = hex::encode(Sha256::digest(&bytes));
                if digest != shard.sha256 {
                    integrity.push(format!("{}: digest mismatch", shard.file));
                }
                texts.push((path, bytes));
            }
            Err(e) => integrity.push(format!("{}: {e}", shard.file)),
        }
    }
    let byte_sum: u64 = manifest.shards.iter().map(|s| s.bytes).sum();
    if byte_sum != manifest.total_bytes {
        integrity.push(format!("total_bytes {} != shard sum {byte_sum}", manifest.total_bytes));
    }
    report.push(
        "digests",
        &integrity,
        format!("{} shards, {} bytes", manifest.shards.len(), byte_sum),
    );

    let mut records = Vec::new();
    let mut parse_problems = Vec::new();
    let mut observed_per_shard: Vec<BTreeMap<Task, u64>> = Vec::new();
    for (path, bytes) in &texts {
        let mut per = BTreeMap::new();
        for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            match serde_json::from_slice::<serde_json::Value>(line) {
                Ok(serde_json::Value::Object(obj)) => {
                    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
                    keys.sort_unstable();
                    if keys != ["id", "labels", "spans", "task", "text"] {
                        parse_problems.push(format!("{}:{}: fields {keys:?}", path.display(), i + 1));
                        continue;
                    }
                    match serde_json::from_value::<TrainingRecord>(serde_json::Value::Object(obj)) {
                        Ok(r) => {
                            *per.entry(r.task).or_insert(0u64) += 1;
                            records.push(r);
                        }
                        Err(e) => parse_problems.push(format!("{}:{}: {e}", path.display(), i + 1)),
                    }
                }
                _ => parse_problems.push(format!("{}:{}: not a JSON object", path.display(), i + 1)),
            }
        }
        observed_per_shard.push(per);
    }
    report.push("schema", &parse_problems, format!("{} records parsed", records.len()));

    let mut count_problems = Vec::new();
    let mut observed: BTreeMap<Task, u64> = BTreeMap::new();
    for r in &records {
        *observed.entry(r.task).or_default() += 1;
    }
    for task in Task::ALL {
        let (want, got) = (manifest.count(task), observed.get(&task).copied().unwrap_or(0));
        if want != got {
            count_problems.push(format!("{}: manifest {want}, found {got}", task.name()));
        }
    }
    for (shard, per) in manifest.shards.iter().zip(&observed_per_shard) {
        let listed: BTreeMap<Task, u64> = shard
            .counts
            .iter()
            .filter(|(_, n)| **n > 0)
            .map(|(t, n)| (*t, *n))
            .collect();
        if &listed != per || shard.records != per.values().sum::<u64>() {
            count_problems.push(format!("{}: per-task counts differ from manifest", shard.file));
        }
    }
    if manifest.total_records != manifest.counts.values().sum::<u64>() {
        count_problems.push("total_records differs from the sum of task counts".into());
    }
    let mut ids = HashSet::new();
    let dupes = records.iter().filter(|r| !ids.insert(r.id.as_str())).count();
    if dupes > 0 {
        count_problems.push(format!("{dupes} duplicate record ids"));
    }
    report.push("counts", &count_problems, format!("{observed:?}"));

    let mut span_problems = Vec::new();
    for r in &records {
        check_record(r, &manifest.special_tokens, &mut span_problems);
    }
    report.push("spans", &span_problems, "every span slices back to its text".into());

    let tc: Vec<&TrainingRecord> = records.iter().filter(|r| r.task == Task::Tc).collect();
    if !tc.is_empty() || manifest.count(Task::Tc) > 0 {
        let positives = tc.iter().filter(|r| r.labels == Labels::Classification(true)).count() as u64;
        let n = tc.len() as u64;
        let mut problems = Vec::new();
        let declared = manifest.tc_composition;
        if declared.total() != n {
            problems.push(format!(
                "manifest composition covers {} examples, found {n}",
                declared.total()
            ));
        }
        if declared.positive != positives {
            problems.push(format!(
                "{positives} positive labels, manifest says {}",
                declared.positive
            ));
        }
        let observed_mix = TcComposition {
            positive: positives,
            negative_entities: declared.negative_entities,
            negative_relation: declared.negative_relation,
        };
        if !declared.within(1) || !observed_mix.within(1) {
            let pct = |x: u64| 100.0 * x as f64 / n.max(1) as f64;
            problems.push(format!(
                "observed {:.1}/{:.1}/{:.1} (positive/entity/relation), expected 50/25/25",
                pct(positives),
                pct(declared.negative_entities),
                pct(declared.negative_relation)
            ));
        }
        report.push("tc_composition", &problems, format!("{positives} of {n} positive"));
    }

    let mut alphabet_problems = Vec::new();
    let expected_alphabet = lp_label_alphabet(&manifest.special_tokens);
    if manifest.lp_label_alphabet != expected_alphabet {
        alphabet_problems.push("manifest label alphabet is not the six non-synonym relations".into());
    }
    for r in records.iter().filter(|r| r.task == Task::Lp) {
        if let Labels::Relations(codes) = &r.labels {
            let hops = codes.len();
            if hops < 2 || hops > manifest.max_hops {
                alphabet_problems.push(format!("{}: {hops} hops outside [2, {}]", r.id, manifest.max_hops));
            }
            if codes.iter().any(|c| !expected_alphabet.iter().any(|l| l.code == *c)) {
                alphabet_problems.push(format!("{}: label outside the alphabet", r.id));
            }
        }
    }
    report.push(
        "lp_labels",
        &alphabet_problems,
        "labels within the six-relation alphabet".into(),
    );

    let enabled = |t: Task| manifest.counts.contains_key(&t).then(|| manifest.count(t));
    let mut weight_problems = Vec::new();
    match compute_weights_for(enabled(Task::Ep), enabled(Task::Lp), enabled(Task::Tc)) {
        Ok(w) => {
            let m = &manifest.weights;
            for (name, a, b) in [
                ("ep", w.alpha_ep, m.alpha_ep),
                ("lp", w.alpha_lp, m.alpha_lp),
                ("tc", w.alpha_tc, m.alpha_tc),
            ] {
                if (a - b).abs() > 1e-12 {
                    weight_problems.push(format!("alpha_{name} {b} but counts give {a}"));
                }
            }
        }
        Err(e) => weight_problems.push(e.to_string()),
    }
    report.push(
        "weights",
        &weight_problems,
        format!("sum {:.12}", manifest.weights.sum()),
    );

    if let Some(kg) = graph {
        let index = TermIndex::new(kg, &manifest.language);
        let mut problems = Vec::new();
        let mut checked = 0usize;
        for r in &records {
            match (r.task, &r.labels) {
                (Task::Lp, Labels::Relations(codes)) => {
                    let Some(segments) = path_segments(r) else { continue };
                    let rels: Option<Vec<RelationType>> = codes.iter().map(|&c| RelationType::from_code(c)).collect();
                    let Some(rels) = rels else { continue };
                    checked += 1;
                    if segments.len() != rels.len() + 1 || !index.chain_exists(&segments, &rels) {
                        problems.push(format!("{}: path is not a walk in the graph", r.id));
                    }
                }
                (Task::Tc, Labels::Classification(true)) if r.spans.len() == 3 => {
                    let (h, rel, t) = (r.slice(&r.spans[0]), r.slice(&r.spans[1]), r.slice(&r.spans[2]));
                    let rel = rel.and_then(|x| manifest.special_tokens.relation_for_token(x));
                    checked += 1;
                    match (h, rel, t) {
                        (Some(h), Some(rel), Some(t)) if index.triple_exists(h, rel, t) => {}
                        _ => problems.push(format!("{}: positive triple not in the graph", r.id)),
                    }
                }
                _ => {}
            }
        }
        report.push(
            "graph",
            &problems,
            format!("{checked} paths and positives found in the graph"),
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shard_assignment_is_stable() {
        assert_eq!(shard_of("abc", 1, 4), shard_of("abc", 1, 4));
        assert_eq!(shard_of("abc", 1, 1), 0);
        let spread: HashSet<usize> = (0..200).map(|i| shard_of(&format!("r{i}"), 3, 4)).collect();
        assert_eq!(spread.len(), 4);
    }

    #[test]
    fn missing_manifest_is_invalid() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(validate(dir.path(), None), Err(Error::InvalidCorpus(_))));
    }

    #[test]
    fn segments_between_relations() {
        let r = TrainingRecord {
            id: "x".into(),
            task: Task::Lp,
            text: "a b [REL_PAR] c [REL_CHD] d".into(),
            spans: vec![
                crate::render::Span {
                    role: SpanRole::Relation,
                    start: 4,
                    end: 13,
                },
                crate::render::Span {
                    role: SpanRole::Relation,
                    start: 16,
                    end: 25,
                },
            ],
            labels: Labels::Relations(vec![0, 1]),
        };
        assert_eq!(path_segments(&r).unwrap(), ["a b", "c", "d"]);
        let mut problems = Vec::new();
        check_record(&r, &SpecialTokenSet::default(), &mut problems);
        assert!(problems.is_empty(), "{problems:?}");
    }
}
