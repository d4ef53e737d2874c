//! Sample JSON-lines, whitespace-separated embedding text files and stream
//! manifests.
//!
//! Sample lines look like
//!
//! ```text
//! {"tokens": ["who", "founded", "it"], "relation": 3, "candidates": [3, 7, 12], "relation_name": "founded_by"}
//! ```
//!
//! `relation_name` is optional; relations never named in the file are called
//! `relation_<id>`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{LabelId, RelationVocab, Sample, TaskStream};
use crate::error::{Error, Result};
use crate::model::{tokenize_relation_name, VocabEmbedding};

#[derive(Debug, Serialize, Deserialize)]
struct SampleLine {
    tokens: Vec<String>,
    relation: LabelId,
    candidates: Vec<LabelId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relation_name: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub relations: RelationVocab,
    pub vocab: Arc<VocabEmbedding>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads `token v1 v2 ...` lines. A leading `count dim` header line is skipped.
pub fn read_embeddings(path: &Path) -> Result<VocabEmbedding> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if i == 0 && values.len() == 1 && token.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok() {
            continue;
        }
        let vec = values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| parse_err(path, i + 1, format!("bad float: {e}")))?;
        if vec.is_empty() {
            return Err(parse_err(path, i + 1, "token without a vector"));
        }
        if vec.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, i + 1, "non-finite embedding value"));
        }
        match dim {
            None => dim = Some(vec.len()),
            Some(d) if d != vec.len() => {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("vector has {} values, earlier lines have {d}", vec.len()),
                ));
            }
            _ => {}
        }
        rows.push((token.to_string(), vec));
    }
    let Some(dim) = dim else {
        return Err(parse_err(path, 0, "embedding file is empty"));
    };
    VocabEmbedding::from_rows(dim, rows).map_err(|e| parse_err(path, 0, e.to_string()))
}

/// Samples plus the relation names found in the file, keyed by relation id.
pub fn read_samples(path: &Path, vocab: &VocabEmbedding) -> Result<(Vec<Sample>, BTreeMap<LabelId, String>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    let mut names = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let raw: SampleLine = serde_json::from_str(&line).map_err(|e| parse_err(path, n, e.to_string()))?;
        if raw.tokens.is_empty() {
            return Err(parse_err(path, n, "empty token list"));
        }
        if raw.candidates.is_empty() {
            return Err(parse_err(path, n, "empty candidate list"));
        }
        if !raw.candidates.contains(&raw.relation) {
            return Err(parse_err(
                path,
                n,
                format!("candidate list lacks gold relation {}", raw.relation),
            ));
        }
        if let Some(name) = raw.relation_name {
            if let Some(prev) = names.insert(raw.relation, name.clone()) {
                if prev != name {
                    return Err(parse_err(
                        path,
                        n,
                        format!("relation {} named both {prev:?} and {name:?}", raw.relation),
                    ));
                }
            }
        }
        let tokens = raw.tokens.iter().map(|t| vocab.id(t)).collect();
        samples.push(Sample {
            tokens,
            gold: raw.relation,
            candidates: raw.candidates,
        });
    }
    Ok((samples, names))
}

pub fn load_relation_dataset(samples_path: &Path, embeddings_path: &Path) -> Result<Dataset> {
    let vocab = Arc::new(read_embeddings(embeddings_path)?);
    let (samples, names) = read_samples(samples_path, &vocab)?;
    let n_rel = samples
        .iter()
        .flat_map(|s| s.candidates.iter().copied())
        .chain(names.keys().copied())
        .max()
        .map_or(0, |m| m as usize + 1);
    let names: Vec<String> = (0..n_rel as LabelId)
        .map(|l| names.get(&l).cloned().unwrap_or_else(|| format!("relation_{l}")))
        .collect();
    let tokens = names
        .iter()
        .map(|n| {
            let t: Vec<_> = tokenize_relation_name(n).iter().map(|t| vocab.id(t)).collect();
            if t.is_empty() {
                vec![crate::model::UNK_ID]
            } else {
                t
            }
        })
        .collect();
    let relations = RelationVocab::new(names, tokens, &vocab)?;
    Ok(Dataset {
        samples,
        relations,
        vocab,
    })
}

pub fn write_embeddings(path: &Path, vocab: &VocabEmbedding) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (tok, row) in vocab.iter() {
        write!(w, "{tok}")?;
        for v in row {
            // shortest round-trip representation
            write!(w, " {v:?}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples(
    path: &Path,
    samples: &[Sample],
    relations: &RelationVocab,
    vocab: &VocabEmbedding,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        let line = SampleLine {
            tokens: s.tokens.iter().map(|&t| vocab.token(t).to_string()).collect(),
            relation: s.gold,
            candidates: s.candidates.clone(),
            relation_name: Some(relations.name(s.gold).to_string()),
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `samples.jsonl` and `embeddings.txt` under `dir`; returns both paths.
pub fn write_dataset(
    dir: &Path,
    samples: &[Sample],
    relations: &RelationVocab,
    vocab: &VocabEmbedding,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let sp = dir.join("samples.jsonl");
    let ep = dir.join("embeddings.txt");
    write_samples(&sp, samples, relations, vocab)?;
    write_embeddings(&ep, vocab)?;
    Ok((sp, ep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub tasks: Vec<ManifestTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTask {
    pub labels: Vec<LabelId>,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl StreamManifest {
    pub fn of(stream: &TaskStream) -> Self {
        Self {
            tasks: stream
                .tasks()
                .iter()
                .map(|t| ManifestTask {
                    labels: t.labels.clone(),
                    train: t.train.len(),
                    valid: t.valid.len(),
                    test: t.test.len(),
                })
                .collect(),
        }
    }
}

pub fn write_manifest(path: &Path, stream: &TaskStream) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &StreamManifest::of(stream))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn empty_candidates_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "a 1 2\nb 3 4\n");
        let s = write(
            dir.path(),
            "s.jsonl",
            "{\"tokens\":[\"a\"],\"relation\":0,\"candidates\":[0,1]}\n{\"tokens\":[\"b\"],\"relation\":1,\"candidates\":[]}\n",
        );
        match load_relation_dataset(&s, &e) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("candidate"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_gold_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "a 1 2\n");
        let s = write(dir.path(), "s.jsonl", "{\"tokens\":[\"a\"],\"relation\":0,\"candidates\":[1,2]}\n");
        assert!(matches!(load_relation_dataset(&s, &e), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn inconsistent_embedding_width() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "a 1 2\nb 3 4 5\n");
        assert!(matches!(read_embeddings(&e), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn header_line_and_oov() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "2 2\nfounded 1 0\nby 0 1\n");
        let s = write(
            dir.path(),
            "s.jsonl",
            "{\"tokens\":[\"zzz\",\"founded\"],\"relation\":0,\"candidates\":[0,1],\"relation_name\":\"founded_by\"}\n",
        );
        let d = load_relation_dataset(&s, &e).unwrap();
        assert_eq!(d.vocab.dim(), 2);
        assert_eq!(d.samples[0].tokens[0], crate::model::UNK_ID);
        assert_eq!(d.relations.len(), 2);
        assert_eq!(d.relations.embedding(0), &[0.5, 0.5]);
        assert_eq!(d.relations.name(1), "relation_1");
    }
}
