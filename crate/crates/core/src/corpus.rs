//! Corpus ingestion and difficulty scoring from solve-attempt logs.
//!
//! Corpus files and attempt logs are UTF-8 JSON lines:
//!
//! ```text
//! {"id": "q1", "embedding": [0.1, 0.2], "meta": {"source": "gsm8k"}}
//! {"id": "q1", "attempts": 128, "successes": 32}
//! ```
//!
//! An annotated corpus carries an extra `"difficulty"` field per record.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result, Scalar};

/// Attempts per question used when scoring difficulty with a reference solver.
pub const DEFAULT_ATTEMPTS: u32 = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub embedding: Vec<f64>,
    /// Solve attempts recorded for this example; zero when not yet scored.
    pub attempts: u64,
    pub successes: u64,
    /// Difficulty in `[0, 100]`, unset until annotated.
    pub difficulty: Option<f64>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    examples: Vec<Example>,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct CorpusRecord {
    id: Option<String>,
    embedding: Option<Vec<f64>>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    difficulty: Option<f64>,
}

/// One line of an attempts log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub id: String,
    pub attempts: u64,
    pub successes: u64,
}

/// Result of [`annotate_difficulty`]: the scored corpus plus any warnings about
/// log entries that matched no example.
#[derive(Clone, Debug)]
pub struct Annotation {
    pub corpus: Corpus,
    pub warnings: Vec<String>,
}

/// Difficulty as `100 · (1 − successes / attempts)`.
pub fn estimate_difficulty(successes: u64, attempts: u64) -> Result<f64> {
    if attempts == 0 {
        return Err(Error::invalid("difficulty is undefined for zero attempts"));
    }
    if successes > attempts {
        return Err(Error::invalid(format!(
            "successes ({successes}) exceed attempts ({attempts})"
        )));
    }
    Ok(100.0 * (1.0 - successes as f64 / attempts as f64))
}

impl Corpus {
    /// Validates ids, dimensions and difficulty ranges.
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let dim = examples.first().map_or(0, |e| e.embedding.len());
        let mut seen = HashSet::with_capacity(examples.len());
        for ex in &examples {
            validate_example(ex)?;
            if ex.embedding.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: ex.embedding.len(),
                });
            }
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
        }
        Ok(Corpus { examples, dim })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<Example> {
        self.examples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.examples.iter().map(|e| e.id.clone()).collect()
    }

    /// N × D embedding matrix in corpus order.
    pub fn embedding_matrix<T: Scalar>(&self) -> Matrix<T> {
        let data = self
            .examples
            .iter()
            .flat_map(|e| e.embedding.iter().map(|&x| T::of(x)))
            .collect();
        Matrix::from_vec(self.examples.len(), self.dim, data).expect("corpus rows share one dimension")
    }

    /// Difficulty scores in corpus order; fails if any example is unscored.
    pub fn difficulties(&self) -> Result<Vec<f64>> {
        self.examples
            .iter()
            .map(|e| {
                e.difficulty
                    .ok_or_else(|| Error::invalid(format!("example `{}` has no difficulty score", e.id)))
            })
            .collect()
    }

    pub fn from_reader<R: BufRead>(reader: R, source: &Path) -> Result<Self> {
        let mut examples = Vec::new();
        let mut seen = HashSet::new();
        let mut dim = None;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: source.to_path_buf(),
                line: line_no,
                message,
            };
            let record: CorpusRecord =
                serde_json::from_str(&line).map_err(|e| parse_err(format!("invalid record: {e}")))?;
            let id = record.id.ok_or_else(|| parse_err("record is missing `id`".into()))?;
            let embedding = record
                .embedding
                .ok_or_else(|| parse_err(format!("record `{id}` is missing `embedding`")))?;
            let expected = *dim.get_or_insert(embedding.len());
            if embedding.len() != expected {
                return Err(parse_err(format!(
                    "embedding dimension mismatch: record `{id}` has {} values, expected {expected}",
                    embedding.len()
                )));
            }
            if !seen.insert(id.clone()) {
                return Err(parse_err(format!("duplicate id `{id}`")));
            }
            let example = Example {
                id,
                embedding,
                attempts: 0,
                successes: 0,
                difficulty: record.difficulty,
                metadata: record.meta,
            };
            validate_example(&example).map_err(|e| parse_err(e.to_string()))?;
            examples.push(example);
        }
        Ok(Corpus {
            examples,
            dim: dim.unwrap_or(0),
        })
    }

    /// Writes the corpus as JSON lines, including `difficulty` when set.
    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        for ex in &self.examples {
            let record = CorpusRecord {
                id: Some(ex.id.clone()),
                embedding: Some(ex.embedding.clone()),
                meta: ex.metadata.clone(),
                difficulty: ex.difficulty,
            };
            serde_json::to_writer(&mut writer, &record).map_err(std::io::Error::from)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn validate_example(ex: &Example) -> Result<()> {
    if ex.id.is_empty() {
        return Err(Error::invalid("example id must be non-empty"));
    }
    if ex.embedding.is_empty() {
        return Err(Error::invalid(format!("example `{}` has an empty embedding", ex.id)));
    }
    if ex.embedding.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("example `{}` has a non-finite embedding value", ex.id)));
    }
    if ex.successes > ex.attempts {
        return Err(Error::invalid(format!(
            "example `{}` has more successes than attempts",
            ex.id
        )));
    }
    if let Some(d) = ex.difficulty {
        if !(0.0..=100.0).contains(&d) {
            return Err(Error::invalid(format!(
                "example `{}` has difficulty {d} outside [0, 100]",
                ex.id
            )));
        }
    }
    Ok(())
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path)?;
    Corpus::from_reader(BufReader::new(file), path)
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    corpus.write(std::io::BufWriter::new(file))
}

pub fn read_attempts<R: BufRead>(reader: R, source: &Path) -> Result<Vec<AttemptRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: PathBuf::from(source),
            line: idx + 1,
            message,
        };
        let record: AttemptRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(format!("invalid attempts record: {e}")))?;
        if record.successes > record.attempts {
            return Err(parse_err(format!(
                "`{}`: successes ({}) exceed attempts ({})",
                record.id, record.successes, record.attempts
            )));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_attempts(path: impl AsRef<Path>) -> Result<Vec<AttemptRecord>> {
    let path = path.as_ref();
    read_attempts(BufReader::new(File::open(path)?), path)
}

/// Scores every example from the attempts log.
///
/// Every corpus id must appear in the log. Log entries for ids outside the
/// corpus are reported as warnings and otherwise ignored.
pub fn annotate_difficulty(corpus: Corpus, log: &[AttemptRecord]) -> Result<Annotation> {
    let mut by_id: HashMap<&str, &AttemptRecord> = HashMap::with_capacity(log.len());
    for record in log {
        if by_id.insert(record.id.as_str(), record).is_some() {
            return Err(Error::DuplicateId(record.id.clone()));
        }
    }

    let known: HashSet<&str> = corpus.examples.iter().map(|e| e.id.as_str()).collect();
    let warnings: Vec<String> = log
        .iter()
        .filter(|r| !known.contains(r.id.as_str()))
        .map(|r| format!("attempts log references unknown id `{}`", r.id))
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }

    let mut examples = corpus.examples.clone();
    for ex in &mut examples {
        let record = by_id.get(ex.id.as_str()).ok_or_else(|| Error::MissingId(ex.id.clone()))?;
        ex.difficulty = Some(estimate_difficulty(record.successes, record.attempts).map_err(|e| {
            Error::invalid(format!("example `{}`: {e}", ex.id))
        })?);
        ex.attempts = record.attempts;
        ex.successes = record.successes;
    }
    Ok(Annotation {
        corpus: Corpus {
            examples,
            dim: corpus.dim,
        },
        warnings,
    })
}

/// Loads both files and annotates in one step.
pub fn annotate_from_file(corpus: Corpus, attempts_log: impl AsRef<Path>) -> Result<Annotation> {
    let log = load_attempts(attempts_log)?;
    annotate_difficulty(corpus, &log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<Corpus> {
        Corpus::from_reader(text.as_bytes(), Path::new("mem.jsonl"))
    }

    fn example(id: &str) -> Example {
        Example {
            id: id.into(),
            embedding: vec![0.0, 1.0],
            attempts: 0,
            successes: 0,
            difficulty: None,
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn parses_three_records() {
        let corpus = parse(
            r#"{"id":"a","embedding":[1,2,3,4],"meta":{"k":"v"}}
{"id":"b","embedding":[0,0,0,0]}
{"id":"c","embedding":[1.5,2,3,4],"meta":{}}
"#,
        )
        .unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.dim(), 4);
        assert_eq!(corpus.ids(), ["a", "b", "c"]);
        assert_eq!(corpus.examples()[0].metadata["k"], "v");
    }

    #[test]
    fn missing_id_names_the_line() {
        let err = parse("{\"id\":\"a\",\"embedding\":[1]}\n{\"embedding\":[2]}\n").unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("id"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn mixed_dimensions_are_rejected() {
        let err = parse("{\"id\":\"a\",\"embedding\":[1,2,3,4]}\n{\"id\":\"b\",\"embedding\":[1,2,3,4,5]}\n")
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, ref message, .. } if message.contains("dimension")));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = parse("{\"id\":\"a\",\"embedding\":[1]}\n{\"id\":\"a\",\"embedding\":[2]}\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, ref message, .. } if message.contains("duplicate")));
        let err = Corpus::new(vec![example("x"), example("x")]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "x"));
    }

    #[test]
    fn out_of_range_difficulty_is_rejected() {
        let err = parse("{\"id\":\"a\",\"embedding\":[1],\"difficulty\":120.0}\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn difficulty_examples() {
        assert_eq!(estimate_difficulty(0, 128).unwrap(), 100.0);
        assert_eq!(estimate_difficulty(128, 128).unwrap(), 0.0);
        assert_eq!(estimate_difficulty(64, 128).unwrap(), 50.0);
        assert!(matches!(estimate_difficulty(0, 0), Err(Error::InvalidInput(_))));
        assert!(estimate_difficulty(5, 4).is_err());
    }

    #[test]
    fn annotation_sets_difficulties() {
        let corpus = Corpus::new(vec![example("a"), example("b")]).unwrap();
        let log = vec![
            AttemptRecord { id: "a".into(), attempts: 128, successes: 0 },
            AttemptRecord { id: "b".into(), attempts: 128, successes: 128 },
        ];
        let out = annotate_difficulty(corpus, &log).unwrap();
        assert_eq!(out.corpus.difficulties().unwrap(), [100.0, 0.0]);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn annotation_requires_every_id() {
        let corpus = Corpus::new(vec![example("a"), example("b")]).unwrap();
        let log = vec![AttemptRecord { id: "a".into(), attempts: 10, successes: 3 }];
        let err = annotate_difficulty(corpus, &log).unwrap_err();
        assert!(matches!(err, Error::MissingId(id) if id == "b"));
    }

    #[test]
    fn unknown_log_ids_only_warn() {
        let corpus = Corpus::new(vec![example("a")]).unwrap();
        let log = vec![
            AttemptRecord { id: "a".into(), attempts: 4, successes: 1 },
            AttemptRecord { id: "zzz".into(), attempts: 4, successes: 4 },
        ];
        let out = annotate_difficulty(corpus, &log).unwrap();
        assert_eq!(out.corpus.difficulties().unwrap(), [75.0]);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("zzz"));
    }

    #[test]
    fn zero_attempts_for_a_corpus_id_is_an_error() {
        let corpus = Corpus::new(vec![example("a")]).unwrap();
        let log = vec![AttemptRecord { id: "a".into(), attempts: 0, successes: 0 }];
        assert!(annotate_difficulty(corpus, &log).is_err());
    }

    #[test]
    fn annotated_corpus_round_trips_through_jsonl() {
        let corpus = Corpus::new(vec![example("a"), example("b")]).unwrap();
        let log = vec![
            AttemptRecord { id: "a".into(), attempts: 3, successes: 1 },
            AttemptRecord { id: "b".into(), attempts: 7, successes: 2 },
        ];
        let annotated = annotate_difficulty(corpus, &log).unwrap().corpus;
        let mut buf = Vec::new();
        annotated.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().all(|l| l.contains("\"difficulty\":")));
        let back = Corpus::from_reader(buf.as_slice(), Path::new("x")).unwrap();
        assert_eq!(back.difficulties().unwrap(), annotated.difficulties().unwrap());
    }

    proptest! {
        #[test]
        fn difficulty_complements_success_rate(n in 1u64..=512, s_frac in 0.0f64..=1.0) {
            let s = ((n as f64) * s_frac).floor() as u64;
            let d = estimate_difficulty(s, n).unwrap();
            prop_assert!((d + 100.0 * s as f64 / n as f64 - 100.0).abs() <= 1e-12);
            prop_assert!((0.0..=100.0).contains(&d));
            if s < n {
                prop_assert!(estimate_difficulty(s + 1, n).unwrap() < d);
            }
        }

        #[test]
        fn loading_is_deterministic(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            let mut text = String::new();
            for (i, chunk) in values.chunks(1).enumerate() {
                text.push_str(&format!("{{\"id\":\"e{i}\",\"embedding\":[{}]}}\n", chunk[0]));
            }
            prop_assert_eq!(parse(&text).unwrap(), parse(&text).unwrap());
        }
    }
}
