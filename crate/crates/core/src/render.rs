//! Rendering of graph samples and free text into task-tagged records.
//!
//! Triples render as `head <relation-token> tail` and paths as
//! `c0 <r0> c1 <r1> c2 ...`, joined by single spaces. Classification and
//! separator tokens are not embedded: a consumer wraps each text as
//! `[CLS] text [SEP]` with its own tokenizer. Span offsets count Unicode
//! scalar values (Python `str` indices), end-exclusive.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, FrozenGraph};
use crate::relation::RelationType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mlm,
    Ep,
    Lp,
    Tc,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Mlm, Task::Ep, Task::Lp, Task::Tc];

    pub fn name(self) -> &'static str {
        match self {
            Task::Mlm => "mlm",
            Task::Ep => "ep",
            Task::Lp => "lp",
            Task::Tc => "tc",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanRole {
    Head,
    Tail,
    Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub role: SpanRole,
    pub start: usize,
    pub end: usize,
}

/// Task-dependent label payload: a boolean for classification, relation codes
/// for link prediction, `null` otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Labels {
    Classification(bool),
    Relations(Vec<u8>),
    Absent,
}

/// One line of an emitted corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub id: String,
    pub task: Task,
    pub text: String,
    pub spans: Vec<Span>,
    pub labels: Labels,
}

impl TrainingRecord {
    /// Substring covered by a span (character offsets).
    pub fn slice(&self, span: &Span) -> Option<&str> {
        char_slice(&self.text, span.start, span.end)
    }

    pub fn spans_with(&self, role: SpanRole) -> impl Iterator<Item = &Span> {
        self.spans.iter().filter(move |s| s.role == role)
    }
}

pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let s = indices.nth(start)?;
    let e = if end == start { s } else { indices.nth(end - start - 1)? };
    Some(&text[s..e])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokenSet {
    pub classification: String,
    pub separator: String,
    pub mask: String,
    pub hidden_relation: String,
    /// Indexed by relation code.
    pub relations: [String; 7],
}

impl Default for SpecialTokenSet {
    fn default() -> Self {
        Self {
            classification: "[CLS]".into(),
            separator: "[SEP]".into(),
            mask: "[MASK]".into(),
            hidden_relation: "[HREL]".into(),
            relations: RelationType::ALL.map(|r| r.default_token().to_string()),
        }
    }
}

impl SpecialTokenSet {
    pub fn relation(&self, r: RelationType) -> &str {
        &self.relations[r.code() as usize]
    }

    pub fn relation_for_token(&self, token: &str) -> Option<RelationType> {
        RelationType::ALL.into_iter().find(|&r| self.relation(r) == token)
    }

    pub fn all(&self) -> Vec<&str> {
        let mut v = vec![
            self.classification.as_str(),
            self.separator.as_str(),
            self.mask.as_str(),
            self.hidden_relation.as_str(),
        ];
        v.extend(self.relations.iter().map(String::as_str));
        v
    }

    /// Tokens must be non-empty, whitespace-free and pairwise distinct.
    pub fn validate(&self) -> Result<()> {
        let all = self.all();
        for (i, t) in all.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::SpecialTokens(format!(
                    "token `{t}` is empty or contains whitespace"
                )));
            }
            if all[..i].contains(t) {
                return Err(Error::SpecialTokens(format!("token `{t}` is used twice")));
            }
        }
        Ok(())
    }

    /// Terms that contain any special token as a substring.
    pub fn offending_terms<'a>(&self, terms: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        let all = self.all();
        terms
            .into_iter()
            .filter(|term| all.iter().any(|t| term.contains(t)))
            .map(String::from)
            .collect()
    }

    pub fn check_graph(&self, kg: &FrozenGraph, language: &str) -> Result<()> {
        self.validate()?;
        let bad = self.offending_terms(kg.concepts().iter().flat_map(|c| c.terms_in(language)));
        if bad.is_empty() {
            Ok(())
        } else {
            let shown: Vec<&str> = bad.iter().take(10).map(String::as_str).collect();
            Err(Error::SpecialTokens(format!(
                "{} term(s) contain special tokens, e.g. {shown:?}",
                bad.len()
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderStats {
    /// Synonym tails rendered with the preferred term for lack of another term.
    pub synonym_fallbacks: u64,
    /// Sequences cut to fit the unit budget.
    pub truncated: u64,
}

/// Preferred terms for head and tail; a synonym tail uses one of the
/// concept's other terms, chosen uniformly.
pub fn realize_terms<R: Rng + ?Sized>(
    kg: &FrozenGraph,
    edge: &Edge,
    language: &str,
    rng: &mut R,
    stats: &mut RenderStats,
) -> Result<(String, String)> {
    let missing = |id| Error::MissingTerm {
        cui: kg.concept(id).cui.clone(),
        language: language.to_string(),
    };
    let head = kg
        .concept(edge.head)
        .preferred(language)
        .ok_or_else(|| missing(edge.head))?;
    let tail_concept = kg.concept(edge.tail);
    let preferred = tail_concept.preferred(language).ok_or_else(|| missing(edge.tail))?;
    let tail = if edge.relation == RelationType::Synonym {
        let others: Vec<&str> = tail_concept.terms_in(language).filter(|t| *t != preferred).collect();
        if others.is_empty() {
            stats.synonym_fallbacks += 1;
            preferred
        } else {
            others[rng.random_range(0..others.len())]
        }
    } else {
        preferred
    };
    Ok((head.to_string(), tail.to_string()))
}

struct TextBuilder {
    text: String,
    chars: usize,
    spans: Vec<Span>,
}

impl TextBuilder {
    fn new() -> Self {
        Self {
            text: String::new(),
            chars: 0,
            spans: Vec::new(),
        }
    }

    fn push(&mut self, segment: &str, role: Option<SpanRole>) {
        if !self.text.is_empty() {
            self.text.push(' ');
            self.chars += 1;
        }
        let start = self.chars;
        self.text.push_str(segment);
        self.chars += segment.chars().count();
        if let Some(role) = role {
            self.spans.push(Span {
                role,
                start,
                end: self.chars,
            });
        }
    }
}

/// `head <relation> tail` with head, relation and tail spans.
pub fn render_triple(
    head: &str,
    relation: RelationType,
    tail: &str,
    tokens: &SpecialTokenSet,
) -> Result<(String, Vec<Span>)> {
    if head.trim().is_empty() || tail.trim().is_empty() {
        return Err(Error::Render("head and tail strings must be non-empty".into()));
    }
    let mut b = TextBuilder::new();
    b.push(head, Some(SpanRole::Head));
    b.push(tokens.relation(relation), Some(SpanRole::Relation));
    b.push(tail, Some(SpanRole::Tail));
    Ok((b.text, b.spans))
}

/// Path text with one span per relation token and the relation codes as labels.
pub fn render_path(
    relations: &[RelationType],
    terms: &[String],
    tokens: &SpecialTokenSet,
) -> Result<(String, Vec<Span>, Vec<u8>)> {
    if relations.len() < 2 {
        return Err(Error::Render(format!(
            "paths need at least 2 hops, got {}",
            relations.len()
        )));
    }
    if terms.len() != relations.len() + 1 {
        return Err(Error::Render(format!(
            "{} hops need {} terms, got {}",
            relations.len(),
            relations.len() + 1,
            terms.len()
        )));
    }
    if relations.contains(&RelationType::Synonym) {
        return Err(Error::Render("synonym relation inside a path".into()));
    }
    if terms.iter().any(|t| t.trim().is_empty()) {
        return Err(Error::Render("empty concept string in path".into()));
    }
    let mut b = TextBuilder::new();
    for (i, &r) in relations.iter().enumerate() {
        b.push(&terms[i], None);
        b.push(tokens.relation(r), Some(SpanRole::Relation));
    }
    b.push(&terms[relations.len()], None);
    Ok((b.text, b.spans, relations.iter().map(|r| r.code()).collect()))
}

/// Cuts words from the tail, then the head, until
/// `words(head) + 1 + words(tail) + reserved <= budget`.
pub fn fit_budget(head: &str, tail: &str, budget: usize, reserved: usize) -> (String, String, bool) {
    let mut h: Vec<&str> = head.split_whitespace().collect();
    let mut t: Vec<&str> = tail.split_whitespace().collect();
    let mut truncated = false;
    while h.len() + t.len() + 1 + reserved > budget && t.len() > 1 {
        t.pop();
        truncated = true;
    }
    while h.len() + t.len() + 1 + reserved > budget && h.len() > 1 {
        h.pop();
        truncated = true;
    }
    if truncated {
        (h.join(" "), t.join(" "), true)
    } else {
        (head.to_string(), tail.to_string(), false)
    }
}

/// Character spans of whitespace-delimited units.
pub fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, n));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Replace every covered subword with `replacement`.
    Always { replacement: String },
    /// Of the selected units, replace with the mask token, a random token or
    /// keep the original, with these probabilities.
    Corrupt { mask: f64, random: f64, keep: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "codes", rename_all = "snake_case")]
pub enum LabelAlphabet {
    Vocabulary,
    Relations(Vec<u8>),
}

/// Which character ranges a consumer masks, how, and what it predicts there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingDirective {
    pub spans: Vec<(usize, usize)>,
    pub policy: MaskPolicy,
    pub alphabet: LabelAlphabet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskingOptions {
    pub mlm_probability: f64,
    /// Hide every relation of a path rather than one chosen at random.
    pub mask_all_relations: bool,
}

pub const DEFAULT_MLM_PROBABILITY: f64 = 0.15;
pub const DEFAULT_SEQUENCE_LENGTH: usize = 256;

impl Default for MaskingOptions {
    fn default() -> Self {
        Self {
            mlm_probability: DEFAULT_MLM_PROBABILITY,
            mask_all_relations: true,
        }
    }
}

pub fn make_masking_directive<R: Rng + ?Sized>(
    record: &TrainingRecord,
    tokens: &SpecialTokenSet,
    opts: &MaskingOptions,
    rng: &mut R,
) -> Result<MaskingDirective> {
    match record.task {
        Task::Tc => Err(Error::Render("classification records carry no masking".into())),
        Task::Ep => {
            let tail = record
                .spans_with(SpanRole::Tail)
                .next()
                .ok_or_else(|| Error::Render(format!("record {} has no tail span", record.id)))?;
            Ok(MaskingDirective {
                spans: vec![(tail.start, tail.end)],
                policy: MaskPolicy::Always {
                    replacement: tokens.mask.clone(),
                },
                alphabet: LabelAlphabet::Vocabulary,
            })
        }
        Task::Lp => {
            let rel: Vec<(usize, usize)> = record
                .spans_with(SpanRole::Relation)
                .map(|s| (s.start, s.end))
                .collect();
            if rel.is_empty() {
                return Err(Error::Render(format!("record {} has no relation spans", record.id)));
            }
            let spans = if opts.mask_all_relations {
                rel
            } else {
                vec![rel[rng.random_range(0..rel.len())]]
            };
            Ok(MaskingDirective {
                spans,
                policy: MaskPolicy::Always {
                    replacement: tokens.hidden_relation.clone(),
                },
                alphabet: LabelAlphabet::Relations(RelationType::LINK_PREDICTION.iter().map(|r| r.code()).collect()),
            })
        }
        Task::Mlm => {
            if !(0.0..=1.0).contains(&opts.mlm_probability) {
                return Err(Error::Render(format!(
                    "mlm probability {} outside [0, 1]",
                    opts.mlm_probability
                )));
            }
            let spans = word_spans(&record.text)
                .into_iter()
                .filter(|_| rng.random_bool(opts.mlm_probability))
                .collect();
            Ok(MaskingDirective {
                spans,
                policy: MaskPolicy::Corrupt {
                    mask: 0.8,
                    random: 0.1,
                    keep: 0.1,
                },
                alphabet: LabelAlphabet::Vocabulary,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graph::{Concept, KnowledgeGraph, Triple};

    fn tokens() -> SpecialTokenSet {
        SpecialTokenSet::default()
    }

    #[test]
    fn triple_template() {
        let (text, spans) =
            render_triple("atrial fibrillation", RelationType::Parent, "heart disease", &tokens()).unwrap();
        assert_eq!(text, "atrial fibrillation [REL_PAR] heart disease");
        assert_eq!(
            spans,
            vec![
                Span {
                    role: SpanRole::Head,
                    start: 0,
                    end: 19
                },
                Span {
                    role: SpanRole::Relation,
                    start: 20,
                    end: 29
                },
                Span {
                    role: SpanRole::Tail,
                    start: 30,
                    end: 43
                },
            ]
        );
    }

    #[test]
    fn empty_head_rejected() {
        assert!(render_triple("", RelationType::Parent, "x", &tokens()).is_err());
    }

    #[test]
    fn non_ascii_offsets_are_characters() {
        let (text, spans) = render_triple("fièvre", RelationType::Child, "maladie aiguë", &tokens()).unwrap();
        let rec = TrainingRecord {
            id: "x".into(),
            task: Task::Tc,
            text,
            spans,
            labels: Labels::Classification(true),
        };
        let parts: Vec<&str> = rec.spans.iter().map(|s| rec.slice(s).unwrap()).collect();
        assert_eq!(parts, ["fièvre", "[REL_CHD]", "maladie aiguë"]);
    }

    #[test]
    fn path_template() {
        let terms = ["a-term", "b-term", "c-term"].map(String::from);
        let (text, spans, labels) =
            render_path(&[RelationType::Parent, RelationType::Broader], &terms, &tokens()).unwrap();
        assert_eq!(text, "a-term [REL_PAR] b-term [REL_RB] c-term");
        assert_eq!(labels, vec![RelationType::Parent.code(), RelationType::Broader.code()]);
        assert_eq!(spans.len(), 2);
        assert!(render_path(&[RelationType::Parent], &terms[..2], &tokens()).is_err());
        assert!(render_path(&[RelationType::Parent, RelationType::Synonym], &terms, &tokens()).is_err());
    }

    fn synonym_graph(extra: &[&str]) -> FrozenGraph {
        let mut kg = KnowledgeGraph::new();
        kg.insert_concept(Concept::new("H").with_preferred("ENG", "head").with_group("G"))
            .unwrap();
        let mut t = Concept::new("T")
            .with_preferred("ENG", "atrial fibrillation")
            .with_group("G");
        for e in extra {
            t = t.with_term("ENG", e);
        }
        kg.insert_concept(t).unwrap();
        kg.insert_triple(&Triple::new("H", RelationType::Synonym, "T")).unwrap();
        kg.insert_triple(&Triple::new("H", RelationType::Parent, "T")).unwrap();
        kg.freeze()
    }

    #[test]
    fn synonym_tail_avoids_preferred() {
        let kg = synonym_graph(&["AFib", "A-fib"]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut stats = RenderStats::default();
        let syn = kg.edges().iter().find(|e| e.relation == RelationType::Synonym).unwrap();
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1000 {
            let (h, t) = realize_terms(&kg, syn, "ENG", &mut rng, &mut stats).unwrap();
            assert_eq!(h, "head");
            assert!(t == "AFib" || t == "A-fib", "{t}");
            seen.insert(t);
        }
        assert_eq!(seen.len(), 2);
        let par = kg.edges().iter().find(|e| e.relation == RelationType::Parent).unwrap();
        let (_, t) = realize_terms(&kg, par, "ENG", &mut rng, &mut stats).unwrap();
        assert_eq!(t, "atrial fibrillation");
        assert_eq!(stats.synonym_fallbacks, 0);
    }

    #[test]
    fn synonym_fallback_counted() {
        let kg = synonym_graph(&[]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut stats = RenderStats::default();
        let syn = kg.edges().iter().find(|e| e.relation == RelationType::Synonym).unwrap();
        let (_, t) = realize_terms(&kg, syn, "ENG", &mut rng, &mut stats).unwrap();
        assert_eq!(t, "atrial fibrillation");
        assert_eq!(stats.synonym_fallbacks, 1);
        assert!(matches!(
            realize_terms(&kg, syn, "FRE", &mut rng, &mut stats),
            Err(Error::MissingTerm { .. })
        ));
    }

    #[test]
    fn token_validation() {
        let mut t = tokens();
        assert!(t.validate().is_ok());
        t.hidden_relation = t.mask.clone();
        assert!(t.validate().is_err());
        let bad = tokens().offending_terms(["fine", "has [MASK] inside"]);
        assert_eq!(bad, vec!["has [MASK] inside"]);
    }

    fn record(task: Task, text: &str, spans: Vec<Span>) -> TrainingRecord {
        TrainingRecord {
            id: "r".into(),
            task,
            text: text.into(),
            spans,
            labels: Labels::Absent,
        }
    }

    #[test]
    fn ep_masks_tail_only() {
        let (text, spans) = render_triple("a b", RelationType::Parent, "c d", &tokens()).unwrap();
        let rec = record(Task::Ep, &text, spans);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = make_masking_directive(&rec, &tokens(), &MaskingOptions::default(), &mut rng).unwrap();
        assert_eq!(d.spans, vec![(14, 17)]);
        assert_eq!(
            rec.slice(&Span {
                role: SpanRole::Tail,
                start: 14,
                end: 17
            }),
            Some("c d")
        );
    }

    #[test]
    fn lp_masks_every_relation() {
        let terms = ["a", "b", "c", "d"].map(String::from);
        let rels = [RelationType::Parent, RelationType::Child, RelationType::Narrower];
        let (text, spans, labels) = render_path(&rels, &terms, &tokens()).unwrap();
        let mut rec = record(Task::Lp, &text, spans);
        rec.labels = Labels::Relations(labels);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = make_masking_directive(&rec, &tokens(), &MaskingOptions::default(), &mut rng).unwrap();
        assert_eq!(d.spans.len(), 3);
        assert_eq!(
            d.policy,
            MaskPolicy::Always {
                replacement: "[HREL]".into()
            }
        );
        match d.alphabet {
            LabelAlphabet::Relations(codes) => {
                assert_eq!(codes.len(), 6);
                assert!(!codes.contains(&RelationType::Synonym.code()));
            }
            other => panic!("{other:?}"),
        }
        let one = MaskingOptions {
            mask_all_relations: false,
            ..MaskingOptions::default()
        };
        let d = make_masking_directive(&rec, &tokens(), &one, &mut rng).unwrap();
        assert_eq!(d.spans.len(), 1);
    }

    #[test]
    fn tc_has_no_directive() {
        let rec = record(Task::Tc, "a [REL_PAR] b", vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(make_masking_directive(&rec, &tokens(), &MaskingOptions::default(), &mut rng).is_err());
    }

    #[test]
    fn word_spans_cover_units() {
        assert_eq!(word_spans("  ab c\td  "), vec![(2, 4), (5, 6), (7, 8)]);
        assert!(word_spans("   ").is_empty());
    }

    #[test]
    fn budget_truncates_tail_first() {
        let (h, t, cut) = fit_budget("a b c", "d e f g", 6, 0);
        assert!(cut);
        assert_eq!((h.as_str(), t.as_str()), ("a b c", "d e"));
        let (h, t, cut) = fit_budget("a", "b", 256, 2);
        assert!(!cut);
        assert_eq!((h.as_str(), t.as_str()), ("a", "b"));
    }

    #[test]
    fn labels_serialize_to_plain_json() {
        assert_eq!(serde_json::to_string(&Labels::Absent).unwrap(), "null");
        assert_eq!(serde_json::to_string(&Labels::Classification(false)).unwrap(), "false");
        assert_eq!(serde_json::to_string(&Labels::Relations(vec![0, 5])).unwrap(), "[0,5]");
        let back: Labels = serde_json::from_str("null").unwrap();
        assert_eq!(back, Labels::Absent);
    }
}
