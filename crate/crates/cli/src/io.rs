//! Line-delimited JSON input and output.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use propgraph::eval::{AnswerRole, GroundTruthTriplet};

use crate::CliError;

/// Reads one record per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let raw = fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| CliError::Runtime(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    out.flush().map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Corpus line: `{doc_id, text, metadata?}`. Metadata is carried by the
/// corpus format but not used.
#[derive(Debug, Clone, Deserialize)]
pub struct CorpusRecord {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubQa {
    pub question: String,
    pub answer: String,
}

/// Question line. Benchmark converters fill whichever fields they have.
#[derive(Debug, Clone, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub question: String,
    #[serde(default)]
    pub answers: Option<Vec<String>>,
    /// Chunk ids, or `doc_id#index` references resolved to ids.
    #[serde(default)]
    pub supporting_chunk_ids: Option<Vec<String>>,
    #[serde(default)]
    pub facts: Option<Vec<String>>,
    /// Gold sub-question/answer pairs; skips the decomposition call.
    #[serde(default)]
    pub decomposition: Option<Vec<SubQa>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: String,
    pub prediction: String,
}

/// Gold triplet line for coverage evaluation without proxy generation.
/// Either the answer text or its role must be given; saved proxy triplets
/// carry the role.
#[derive(Debug, Clone, Deserialize)]
pub struct TripletRecord {
    pub question_id: String,
    pub head: String,
    pub relation: String,
    pub tail: String,
    #[serde(default)]
    pub answer: Option<String>,
    #[serde(default)]
    pub answer_role: Option<AnswerRole>,
}

impl TripletRecord {
    pub fn into_triplet(self) -> Result<GroundTruthTriplet, CliError> {
        match (&self.answer, self.answer_role) {
            (Some(a), _) => {
                GroundTruthTriplet::with_answer(&self.question_id, &self.head, &self.relation, &self.tail, a)
                    .map_err(|e| CliError::Input(format!("triplet for {}: {e}", self.question_id)))
            }
            (None, Some(answer_role)) => Ok(GroundTruthTriplet {
                question_id: self.question_id,
                head: self.head,
                relation: self.relation,
                tail: self.tail,
                answer_role,
            }),
            (None, None) => {
                Err(CliError::Input(format!("triplet for {} needs an answer or answer_role", self.question_id)))
            }
        }
    }
}
