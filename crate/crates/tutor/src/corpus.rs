//! Curriculum directory loading and the on-disk index file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tutor_core::rag::{build_index, CurriculumDoc, IngestError, RagConfig};
use tutor_core::{Embedder, VectorIndex};
use walkdir::WalkDir;

/// Version written into every index file. Bump on any layout change.
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus directory {0} does not exist")]
    MissingDir(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}: file is not valid UTF-8")]
    NotUtf8(PathBuf),
    #[error("{0}: document body is empty")]
    EmptyDoc(PathBuf),
    #[error("{0}: front matter opened with --- but never closed")]
    UnclosedFrontMatter(PathBuf),
    #[error("no .md or .txt files under {0}")]
    NoDocuments(PathBuf),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("index file {path}: {message}")]
    IndexFile { path: PathBuf, message: String },
}

/// Read every `.md` / `.txt` file under `dir`, in path order.
///
/// `source_path` is the path relative to `dir` with `/` separators, so the
/// same tree ingested from another location yields the same document ids.
pub fn load_dir(dir: &Path) -> Result<Vec<CurriculumDoc>, CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::MissingDir(dir.to_path_buf()));
    }
    let mut docs = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CorpusError::Io {
            path: e.path().map_or_else(|| dir.to_path_buf(), Path::to_path_buf),
            source: e.into(),
        })?;
        let path = entry.path();
        let wanted = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("md") || e.eq_ignore_ascii_case("txt"));
        if !entry.file_type().is_file() || !wanted {
            continue;
        }
        let bytes = fs::read(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let text = String::from_utf8(bytes).map_err(|_| CorpusError::NotUtf8(path.to_path_buf()))?;
        let rel = path
            .strip_prefix(dir)
            .unwrap_or(path)
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        docs.push(parse_doc(&rel, &stem, &text).map_err(|e| match e {
            ParseError::Unclosed => CorpusError::UnclosedFrontMatter(path.to_path_buf()),
            ParseError::Empty => CorpusError::EmptyDoc(path.to_path_buf()),
        })?);
    }
    if docs.is_empty() {
        return Err(CorpusError::NoDocuments(dir.to_path_buf()));
    }
    Ok(docs)
}

#[derive(Debug, PartialEq, Eq)]
enum ParseError {
    Unclosed,
    Empty,
}

/// Split off an optional `---` front-matter block with `title:` and `tags:`.
fn parse_doc(source_path: &str, default_title: &str, text: &str) -> Result<CurriculumDoc, ParseError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut title = default_title.to_string();
    let mut tags = Vec::new();
    let mut body = text;

    let mut lines = text.split_inclusive('\n');
    if lines.next().is_some_and(|l| l.trim_end() == "---") {
        let mut consumed = text.split_inclusive('\n').next().map_or(0, str::len);
        let mut closed = false;
        for line in lines {
            consumed += line.len();
            let l = line.trim();
            if l == "---" {
                closed = true;
                break;
            }
            if let Some(v) = l.strip_prefix("title:") {
                title = unquote(v).to_string();
            } else if let Some(v) = l.strip_prefix("tags:") {
                tags = parse_tags(v);
            }
        }
        if !closed {
            return Err(ParseError::Unclosed);
        }
        body = &text[consumed..];
    }

    let body = body.trim_matches(|c| c == '\n' || c == '\r');
    if body.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(CurriculumDoc::new(source_path, title, body, tags))
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .or_else(|| v.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')))
        .unwrap_or(v)
}

/// `tags: [a, b]` or `tags: a, b`.
fn parse_tags(v: &str) -> Vec<String> {
    let v = v.trim();
    let v = v.strip_prefix('[').and_then(|s| s.strip_suffix(']')).unwrap_or(v);
    v.split(',')
        .map(unquote)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// What gets written to `index.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexFile {
    pub format_version: u32,
    /// Identifies the embedder the vectors came from, e.g. `ngram3:256`.
    pub embedder: String,
    pub rag: RagConfig,
    pub index: VectorIndex,
}

pub fn ingest(dir: &Path, embedder: &dyn Embedder, embedder_id: &str, rag: &RagConfig) -> Result<IndexFile, CorpusError> {
    let docs = load_dir(dir)?;
    let index = build_index(&docs, embedder, rag)?;
    Ok(IndexFile {
        format_version: INDEX_FORMAT_VERSION,
        embedder: embedder_id.to_string(),
        rag: *rag,
        index,
    })
}

/// Write via a temporary file and rename, so readers never see half an index.
pub fn save_index(path: &Path, file: &IndexFile) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let bytes = serde_json::to_vec(file).map_err(|e| CorpusError::IndexFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let tmp = path.with_extension("json.tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<IndexFile, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |message: String| CorpusError::IndexFile {
        path: path.to_path_buf(),
        message,
    };
    let probe: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| bad(e.to_string()))?;
    match probe.get("format_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(INDEX_FORMAT_VERSION) => {}
        Some(v) => return Err(bad(format!("unsupported format_version {v}, expected {INDEX_FORMAT_VERSION}"))),
        None => return Err(bad("missing format_version".into())),
    }
    serde_json::from_value(probe).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tutor_core::rag::NgramEmbedder;

    #[test]
    fn front_matter() {
        let d = parse_doc("a.md", "a", "---\ntitle: \"Worms\"\ntags: [malware, network]\n---\n\nWorms spread.\n").unwrap();
        assert_eq!(d.title, "Worms");
        assert_eq!(d.tags, vec!["malware", "network"]);
        assert_eq!(d.body, "Worms spread.");
    }

    #[test]
    fn no_front_matter_uses_file_stem() {
        let d = parse_doc("notes/b.txt", "b", "Plain text body.").unwrap();
        assert_eq!(d.title, "b");
        assert!(d.tags.is_empty());
        assert_eq!(d.body, "Plain text body.");
    }

    #[test]
    fn bad_documents() {
        assert_eq!(parse_doc("c.md", "c", "---\ntitle: x\nbody").unwrap_err(), ParseError::Unclosed);
        assert_eq!(parse_doc("c.md", "c", "---\ntitle: x\n---\n  \n").unwrap_err(), ParseError::Empty);
        assert_eq!(parse_tags("a, 'b' ,"), vec!["a", "b"]);
    }

    #[test]
    fn index_file_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("one.md"), "Chain of custody records every transfer of evidence.").unwrap();
        fs::write(dir.path().join("skip.pdf"), "ignored").unwrap();
        let e = NgramEmbedder::new(32);
        let file = ingest(dir.path(), &e, "ngram3:32", &RagConfig::default()).unwrap();
        assert_eq!(file.index.doc_count(), 1);

        let path = dir.path().join("out/index.json");
        save_index(&path, &file).unwrap();
        assert_eq!(load_index(&path).unwrap(), file);

        let mut raw: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        raw["format_version"] = 99.into();
        fs::write(&path, raw.to_string()).unwrap();
        assert!(load_index(&path).unwrap_err().to_string().contains("unsupported format_version 99"));
        raw.as_object_mut().unwrap().remove("format_version");
        fs::write(&path, raw.to_string()).unwrap();
        assert!(load_index(&path).unwrap_err().to_string().contains("missing format_version"));
    }

    #[test]
    fn missing_and_empty_dirs() {
        assert!(matches!(load_dir(Path::new("/nonexistent/corpus")), Err(CorpusError::MissingDir(_))));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dir(dir.path()), Err(CorpusError::NoDocuments(_))));
    }
}
