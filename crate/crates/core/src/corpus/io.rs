use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Corpus, Document, Passage, Source};
use crate::error::{Error, Result};

/// Reads every `.txt` file in `dir` as one document.
///
/// The author is the filename prefix before `__` (`melville__moby_dick.txt`);
/// files without the separator get an empty author. Documents are ordered
/// by file name.
pub fn read_corpus_dir(dir: &Path, source: Source) -> Result<Corpus> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "txt"));
    paths.sort();

    let mut docs = Vec::with_capacity(paths.len());
    for path in paths {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Input {
                path: path.clone(),
                reason: "file name is not UTF-8".into(),
            })?
            .to_string();
        let text = fs::read_to_string(&path).map_err(|e| Error::Input {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let author = stem
            .split_once("__")
            .map(|(a, _)| a.to_string())
            .unwrap_or_default();
        docs.push(Document {
            id: stem,
            author,
            source,
            text,
        });
    }
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Corpus::from_documents(corpus_name(dir), docs)
}

/// Reads a JSON-lines file of `{"id", "author", "source", "text"}` records.
pub fn read_corpus_jsonl(path: &Path) -> Result<Corpus> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Input {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", lineno + 1),
        })?;
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Corpus::from_documents(corpus_name(path), docs)
}

fn corpus_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into())
}

pub fn write_passages(path: &Path, passages: &[Passage]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in passages {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_passages(path: &Path) -> Result<Vec<Passage>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
