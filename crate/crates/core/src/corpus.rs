//! End-to-end corpus construction: plan, sample, render.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::BuildConfig;
use crate::error::{Error, Result};
use crate::freetext::FreeTextDocument;
use crate::graph::{Edge, FrozenGraph, KnowledgeGraph};
use crate::objective::{compute_weights_for, TaskWeights};
use crate::render::{
    fit_budget, realize_terms, render_path, render_triple, Labels, RenderStats, Span, Task, TrainingRecord,
};
use crate::sampling::{
    plan_with, sample_ep, sample_paths, sample_tc, EpReport, Path, PathReport, SampleOptions, SamplePlan, Strata,
    TcExample, TcProvenance, TcReport,
};
use crate::seed::SeedStream;

/// Positions reserved for the classification and separator tokens.
pub const RESERVED_POSITIONS: usize = 2;

/// Content-derived record id: digest of task, source key and draw index.
pub fn record_id(task: Task, source: &str, index: u64) -> String {
    let mut h = Sha256::new();
    h.update(task.name().as_bytes());
    h.update([0]);
    h.update(source.as_bytes());
    h.update([0]);
    h.update(index.to_le_bytes());
    hex::encode(&h.finalize()[..16])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcComposition {
    pub positive: u64,
    pub negative_entities: u64,
    pub negative_relation: u64,
}

impl TcComposition {
    pub fn total(&self) -> u64 {
        self.positive + self.negative_entities + self.negative_relation
    }

    /// Expected counts for `n` examples: half positive (rounded up), the
    /// negatives split evenly with the extra one going to entity corruption.
    pub fn expected(n: u64) -> Self {
        let negatives = n / 2;
        let entities = negatives.div_ceil(2);
        TcComposition {
            positive: n - negatives,
            negative_entities: entities,
            negative_relation: negatives - entities,
        }
    }

    /// Every class within `tolerance` of the 50/25/25 split.
    pub fn within(&self, tolerance: u64) -> bool {
        let e = Self::expected(self.total());
        self.positive.abs_diff(e.positive) <= tolerance
            && self.negative_entities.abs_diff(e.negative_entities) <= tolerance
            && self.negative_relation.abs_diff(e.negative_relation) <= tolerance
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub plan: BTreeMap<String, BTreeMap<String, usize>>,
    pub concepts_without_language: u64,
    pub tc: TcReport,
    pub tc_composition: TcComposition,
    pub ep: EpReport,
    pub lp: PathReport,
    pub render: RenderStats,
}

#[derive(Debug, Clone)]
pub struct BuiltCorpus {
    pub records: BTreeMap<Task, Vec<TrainingRecord>>,
    pub weights: TaskWeights,
    pub report: BuildReport,
}

impl BuiltCorpus {
    pub fn count(&self, task: Task) -> usize {
        self.records.get(&task).map_or(0, Vec::len)
    }
}

/// Concepts with a term in `language` and the edges between them.
pub fn restrict_to_language(kg: &FrozenGraph, language: &str) -> (FrozenGraph, u64) {
    let keep: Vec<bool> = kg.concepts().iter().map(|c| c.has_language(language)).collect();
    let dropped = keep.iter().filter(|k| !**k).count() as u64;
    if dropped == 0 {
        return (kg.clone(), 0);
    }
    let mut out = KnowledgeGraph::new();
    let mut remap = HashMap::new();
    for (i, c) in kg.concepts().iter().enumerate() {
        if keep[i] {
            let id = out.insert_concept(c.clone()).expect("concept from a valid graph");
            remap.insert(i, id);
        }
    }
    for e in kg.edges() {
        if let (Some(&head), Some(&tail)) = (remap.get(&e.head.index()), remap.get(&e.tail.index())) {
            out.insert_edge(Edge {
                head,
                relation: e.relation,
                tail,
            });
        }
    }
    (out.freeze(), dropped)
}

fn edge_key(kg: &FrozenGraph, e: &Edge) -> String {
    format!(
        "{}|{}|{}",
        kg.concept(e.head).cui,
        e.relation.release_code(),
        kg.concept(e.tail).cui
    )
}

fn render_edge(
    kg: &FrozenGraph,
    edge: &Edge,
    cfg: &BuildConfig,
    stream: SeedStream,
) -> Result<(String, Vec<Span>, RenderStats)> {
    let mut stats = RenderStats::default();
    let mut rng = stream.rng();
    let (head, tail) = realize_terms(kg, edge, &cfg.language, &mut rng, &mut stats)?;
    let (head, tail, cut) = fit_budget(&head, &tail, cfg.sequence_length, RESERVED_POSITIONS);
    stats.truncated += u64::from(cut);
    let (text, spans) = render_triple(&head, edge.relation, &tail, &cfg.tokens)?;
    Ok((text, spans, stats))
}

fn merge(a: RenderStats, b: RenderStats) -> RenderStats {
    RenderStats {
        synonym_fallbacks: a.synonym_fallbacks + b.synonym_fallbacks,
        truncated: a.truncated + b.truncated,
    }
}

fn collect_rendered(items: Vec<Result<(TrainingRecord, RenderStats)>>) -> Result<(Vec<TrainingRecord>, RenderStats)> {
    let mut stats = RenderStats::default();
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let (r, s) = item?;
        stats = merge(stats, s);
        out.push(r);
    }
    Ok((out, stats))
}

pub fn render_tc(
    kg: &FrozenGraph,
    examples: &[TcExample],
    cfg: &BuildConfig,
) -> Result<(Vec<TrainingRecord>, RenderStats)> {
    let stream = SeedStream::new(cfg.seed).scope("render").scope("tc");
    let items = examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let (text, spans, stats) = render_edge(kg, &ex.edge, cfg, stream.index(i as u64))?;
            let key = format!("{}|{}", ex.provenance.name(), edge_key(kg, &ex.edge));
            Ok((
                TrainingRecord {
                    id: record_id(Task::Tc, &key, i as u64),
                    task: Task::Tc,
                    text,
                    spans,
                    labels: Labels::Classification(ex.label),
                },
                stats,
            ))
        })
        .collect();
    collect_rendered(items)
}

pub fn render_ep(kg: &FrozenGraph, edges: &[Edge], cfg: &BuildConfig) -> Result<(Vec<TrainingRecord>, RenderStats)> {
    let stream = SeedStream::new(cfg.seed).scope("render").scope("ep");
    let items = edges
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let (text, spans, stats) = render_edge(kg, e, cfg, stream.index(i as u64))?;
            Ok((
                TrainingRecord {
                    id: record_id(Task::Ep, &edge_key(kg, e), i as u64),
                    task: Task::Ep,
                    text,
                    spans,
                    labels: Labels::Absent,
                },
                stats,
            ))
        })
        .collect();
    collect_rendered(items)
}

pub fn render_lp(kg: &FrozenGraph, paths: &[Path], cfg: &BuildConfig) -> Result<Vec<TrainingRecord>> {
    paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let terms = p
                .concepts
                .iter()
                .map(|&c| {
                    let concept = kg.concept(c);
                    concept
                        .preferred(&cfg.language)
                        .map(String::from)
                        .ok_or_else(|| Error::MissingTerm {
                            cui: concept.cui.clone(),
                            language: cfg.language.clone(),
                        })
                })
                .collect::<Result<Vec<String>>>()?;
            let (text, spans, codes) = render_path(&p.relations, &terms, &cfg.tokens)?;
            let mut key = kg.concept(p.concepts[0]).cui.clone();
            for (r, &c) in p.relations.iter().zip(&p.concepts[1..]) {
                key.push('|');
                key.push_str(r.release_code());
                key.push('|');
                key.push_str(&kg.concept(c).cui);
            }
            Ok(TrainingRecord {
                id: record_id(Task::Lp, &key, i as u64),
                task: Task::Lp,
                text,
                spans,
                labels: Labels::Relations(codes),
            })
        })
        .collect()
}

pub fn render_mlm(docs: &[FreeTextDocument]) -> Vec<TrainingRecord> {
    docs.iter()
        .enumerate()
        .map(|(i, d)| TrainingRecord {
            id: record_id(Task::Mlm, &d.id, i as u64),
            task: Task::Mlm,
            text: d.text.clone(),
            spans: Vec::new(),
            labels: Labels::Absent,
        })
        .collect()
}

/// Samples and renders every enabled task.
pub fn build_corpus(kg: &FrozenGraph, docs: &[FreeTextDocument], cfg: &BuildConfig) -> Result<BuiltCorpus> {
    cfg.validate()?;
    let (restricted, dropped) = restrict_to_language(kg, &cfg.language);
    let kg = &restricted;
    cfg.tokens.check_graph(kg, &cfg.language)?;
    let sizes = cfg.effective_sizes();
    let strata = Strata::new(kg, cfg.group_equality);
    let mut plan: SamplePlan = plan_with(kg, &strata, sizes, cfg.seed)?;
    plan.max_stratum_failures = cfg.max_stratum_failures;
    let opts = SampleOptions {
        shards: cfg.shards,
        max_hops: cfg.max_hops,
    };
    let mut report = BuildReport {
        plan: BTreeMap::from([
            ("tc".to_string(), plan.tc.clone()),
            ("ep".to_string(), plan.ep.clone()),
            ("lp".to_string(), plan.lp.clone()),
        ]),
        concepts_without_language: dropped,
        ..BuildReport::default()
    };
    let mut records = BTreeMap::new();

    if cfg.enabled(Task::Tc) {
        let (examples, tc_report) = sample_tc(kg, &strata, &plan, &opts)?;
        for ex in &examples {
            match ex.provenance {
                TcProvenance::Positive => report.tc_composition.positive += 1,
                TcProvenance::NegativeEntities => report.tc_composition.negative_entities += 1,
                TcProvenance::NegativeRelation => report.tc_composition.negative_relation += 1,
            }
        }
        report.tc = tc_report;
        let (recs, stats) = render_tc(kg, &examples, cfg)?;
        report.render = merge(report.render, stats);
        records.insert(Task::Tc, recs);
    }
    if cfg.enabled(Task::Ep) {
        let (edges, ep_report) = sample_ep(&strata, &plan)?;
        report.ep = ep_report;
        let (recs, stats) = render_ep(kg, &edges, cfg)?;
        report.render = merge(report.render, stats);
        records.insert(Task::Ep, recs);
    }
    if cfg.enabled(Task::Lp) {
        let (paths, lp_report) = sample_paths(kg, &strata, &plan, &opts)?;
        report.lp = lp_report;
        records.insert(Task::Lp, render_lp(kg, &paths, cfg)?);
    }
    if cfg.enabled(Task::Mlm) {
        records.insert(Task::Mlm, render_mlm(docs));
    }

    let count = |t: Task| {
        cfg.enabled(t)
            .then(|| records.get(&t).map_or(0, |v: &Vec<TrainingRecord>| v.len() as u64))
    };
    let mut weights = compute_weights_for(count(Task::Ep), count(Task::Lp), count(Task::Tc))?;
    weights.n_mlm = count(Task::Mlm).unwrap_or(0);
    Ok(BuiltCorpus {
        records,
        weights,
        report,
    })
}
