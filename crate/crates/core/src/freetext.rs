//! Free-text documents for the masked-language stream.
//!
//! Plain files hold one document each. Files ending in `.jsonl` (optionally
//! `.jsonl.gz`) hold one JSON object per line with a `text` field and an
//! optional `id`. Directories are walked recursively in sorted order.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rrf::{normalize_whitespace, open_text};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeTextDocument {
    pub id: String,
    pub language: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeTextReport {
    pub files: u64,
    pub documents: u64,
    pub empty_dropped: u64,
    pub undecodable_skipped: u64,
}

fn is_jsonl(path: &Path) -> bool {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase();
    name.ends_with(".jsonl") || name.ends_with(".jsonl.gz")
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_dir() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for entry in entries {
        collect_files(&entry, out)?;
    }
    Ok(())
}

/// Stable document key: the path relative to the input root it came from.
fn file_key(root: &Path, file: &Path) -> String {
    let rel = if root == file {
        file.file_name()
            .map(PathBuf::from)
            .unwrap_or_else(|| file.to_path_buf())
    } else {
        file.strip_prefix(root)
            .map(Path::to_path_buf)
            .unwrap_or_else(|_| file.to_path_buf())
    };
    rel.to_string_lossy().replace('\\', "/")
}

#[derive(Deserialize)]
struct JsonLine {
    text: String,
    #[serde(default)]
    id: Option<serde_json::Value>,
}

/// Reads every document under `paths`. Undecodable files or lines are counted
/// and skipped unless `strict` is set.
pub fn ingest_freetext(
    paths: &[PathBuf],
    language: &str,
    strict: bool,
) -> Result<(Vec<FreeTextDocument>, FreeTextReport)> {
    let mut report = FreeTextReport::default();
    let mut docs = Vec::new();
    for root in paths {
        let mut files = Vec::new();
        collect_files(root, &mut files)?;
        for file in files {
            report.files += 1;
            let key = file_key(root, &file);
            let mut bytes = Vec::new();
            open_text(&file)?
                .read_to_end(&mut bytes)
                .map_err(|e| Error::io(&file, e))?;
            let Ok(content) = String::from_utf8(bytes) else {
                if strict {
                    return Err(Error::InvalidCorpus(format!("{}: not valid UTF-8", file.display())));
                }
                report.undecodable_skipped += 1;
                continue;
            };
            let mut push = |id: String, raw: &str, report: &mut FreeTextReport| {
                let text = normalize_whitespace(raw);
                if text.is_empty() {
                    report.empty_dropped += 1;
                } else {
                    report.documents += 1;
                    docs.push(FreeTextDocument {
                        id,
                        language: language.to_string(),
                        text,
                    });
                }
            };
            if !is_jsonl(&file) {
                push(key, &content, &mut report);
                continue;
            }
            for (i, line) in content.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<JsonLine>(line) {
                    Ok(obj) => {
                        let id = match obj.id {
                            Some(serde_json::Value::String(s)) => s,
                            Some(v) => v.to_string(),
                            None => format!("{key}:{}", i + 1),
                        };
                        push(id, &obj.text, &mut report);
                    }
                    Err(e) if strict => {
                        return Err(Error::InvalidCorpus(format!("{}:{}: {e}", file.display(), i + 1)));
                    }
                    Err(_) => report.undecodable_skipped += 1,
                }
            }
        }
    }
    Ok((docs, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_of_text_files() {
        let dir = tempfile::tempdir().unwrap();
        for (name, body) in [("b.txt", "second  doc\n"), ("a.txt", "first\tdoc"), ("c.txt", "third")] {
            fs::write(dir.path().join(name), body).unwrap();
        }
        let (docs, report) = ingest_freetext(&[dir.path().to_path_buf()], "FRE", false).unwrap();
        assert_eq!(docs.len(), 3);
        assert_eq!(report.documents, 3);
        assert_eq!(docs[0].id, "a.txt");
        assert_eq!(docs[0].text, "first doc");
        assert_eq!(docs[1].text, "second doc");
        assert!(docs.iter().all(|d| d.language == "FRE"));
    }

    #[test]
    fn whitespace_only_file_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("blank.txt"), " \n\t \n").unwrap();
        let (docs, report) = ingest_freetext(&[dir.path().to_path_buf()], "ENG", false).unwrap();
        assert!(docs.is_empty());
        assert_eq!(report.empty_dropped, 1);
    }

    #[test]
    fn jsonl_lines_and_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("docs.jsonl");
        fs::write(
            &f,
            "{\"id\": \"x1\", \"text\": \"hello  world\"}\n\n{\"text\": \"no id\"}\nnot json\n",
        )
        .unwrap();
        fs::write(dir.path().join("latin1.txt"), [0x63, 0x61, 0x66, 0xe9]).unwrap();
        let (docs, report) = ingest_freetext(&[dir.path().to_path_buf()], "ENG", false).unwrap();
        let ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["x1", "docs.jsonl:3"]);
        assert_eq!(docs[0].text, "hello world");
        assert_eq!(report.undecodable_skipped, 2);
        assert!(ingest_freetext(&[dir.path().to_path_buf()], "ENG", true).is_err());
    }

    #[test]
    fn gzip_jsonl() {
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("d.jsonl.gz");
        let mut enc = flate2::write::GzEncoder::new(fs::File::create(&f).unwrap(), flate2::Compression::default());
        enc.write_all(b"{\"text\": \"a b\"}\n{\"text\": \"c\"}\n").unwrap();
        enc.finish().unwrap();
        let (docs, _) = ingest_freetext(&[f], "ENG", true).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].id, "d.jsonl.gz:1");
    }
}
