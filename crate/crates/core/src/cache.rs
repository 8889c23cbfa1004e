//! Versioned on-disk cache of a frozen graph, written by `ingest` and read by
//! `build`. The layout is private to this tool: a 4-byte magic, a
//! little-endian format version, then gzip-compressed JSON.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Concept, ConceptId, Edge, FrozenGraph, KnowledgeGraph};
use crate::relation::RelationType;
use crate::rrf::IngestReport;

const MAGIC: &[u8; 4] = b"KGC1";
pub const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Payload {
    concepts: Vec<Concept>,
    /// `(head index, relation code, tail index)`.
    edges: Vec<(u32, u8, u32)>,
    report: IngestReport,
}

pub fn write_cache(path: &Path, kg: &FrozenGraph, report: &IngestReport) -> Result<()> {
    let payload = Payload {
        concepts: kg.concepts().to_vec(),
        edges: kg
            .edges()
            .iter()
            .map(|e| (e.head.0, e.relation.code(), e.tail.0))
            .collect(),
        report: report.clone(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(MAGIC).map_err(|e| Error::io(path, e))?;
    out.write_all(&CACHE_VERSION.to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    let mut gz = GzEncoder::new(out, Compression::fast());
    serde_json::to_writer(&mut gz, &payload)?;
    gz.finish().and_then(|mut w| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<(FrozenGraph, IngestReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = BufReader::new(file);
    let mut header = [0u8; 8];
    input
        .read_exact(&mut header)
        .map_err(|_| Error::Cache(format!("{} is too short to be a graph cache", path.display())))?;
    if &header[..4] != MAGIC {
        return Err(Error::Cache(format!("{} is not a graph cache", path.display())));
    }
    let version = u32::from_le_bytes(header[4..].try_into().expect("4 bytes"));
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!(
            "cache format {version} is not supported (expected {CACHE_VERSION}); re-run ingest"
        )));
    }
    let payload: Payload = serde_json::from_reader(BufReader::new(GzDecoder::new(input)))
        .map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
    let mut kg = KnowledgeGraph::new();
    for c in payload.concepts {
        kg.insert_concept(c)?;
    }
    let n = kg.concept_count() as u32;
    for (h, r, t) in payload.edges {
        let relation = RelationType::from_code(r).ok_or_else(|| Error::Cache(format!("bad relation code {r}")))?;
        if h >= n || t >= n {
            return Err(Error::Cache("edge refers to a missing concept".into()));
        }
        kg.insert_edge(Edge {
            head: ConceptId(h),
            relation,
            tail: ConceptId(t),
        });
    }
    Ok((kg.freeze(), payload.report))
}
