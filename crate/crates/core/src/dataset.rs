//! Unified QA dataset schema, JSONL reading and writing, and importers for
//! two public benchmark formats.
//!
//! One JSONL line holds one record: a question, its gold answer, optional
//! gold evidence strings, and the memory stream to ingest before answering.
//! Session-style benchmarks share one stream across many records; the
//! harness deduplicates streams at ingest time. Passage-style benchmarks
//! carry a stream per record.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

/// One item of a memory stream, ingested in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamItem {
    pub content: String,
    pub timestamp: String,
}

/// One evaluation record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QaRecord {
    pub question: String,
    pub gold_answer: String,
    #[serde(default)]
    pub gold_evidence: Vec<String>,
    pub memory_stream: Vec<StreamItem>,
}

impl QaRecord {
    fn validate(&self) -> Result<()> {
        if self.question.trim().is_empty() {
            return Err(EngineError::Dataset(
                "record has an empty question".to_string(),
            ));
        }
        if self.gold_answer.trim().is_empty() {
            return Err(EngineError::Dataset(format!(
                "record {:?} has an empty gold answer",
                truncate(&self.question, 40)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QaDataset {
    pub records: Vec<QaRecord>,
}

impl QaDataset {
    /// Parse JSONL text. Bad lines are skipped with a warning and counted,
    /// unless `strict`, which aborts on the first one.
    pub fn from_jsonl_str(text: &str, strict: bool) -> Result<(QaDataset, usize)> {
        let mut records = Vec::new();
        let mut skipped = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: std::result::Result<QaRecord, _> = serde_json::from_str(line);
            let record = match parsed {
                Ok(record) => match record.validate() {
                    Ok(()) => record,
                    Err(e) => {
                        if strict {
                            return Err(e);
                        }
                        log::warn!("skipping line {}: {e}", lineno + 1);
                        skipped += 1;
                        continue;
                    }
                },
                Err(e) => {
                    if strict {
                        return Err(EngineError::Dataset(format!("line {}: {e}", lineno + 1)));
                    }
                    log::warn!("skipping unparseable line {}: {e}", lineno + 1);
                    skipped += 1;
                    continue;
                }
            };
            records.push(record);
        }
        Ok((QaDataset { records }, skipped))
    }

    pub fn read_jsonl(path: &Path, strict: bool) -> Result<(QaDataset, usize)> {
        let text = fs::read_to_string(path)?;
        Self::from_jsonl_str(&text, strict)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(
                &serde_json::to_string(record).map_err(|e| EngineError::Dataset(e.to_string()))?,
            );
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Distinct memory streams in first-appearance order. Records sharing a
    /// stream (session-style data) contribute it once.
    pub fn distinct_streams(&self) -> Vec<&[StreamItem]> {
        let mut seen = HashSet::new();
        let mut streams = Vec::new();
        for record in &self.records {
            let key = serde_json::to_string(&record.memory_stream).unwrap_or_default();
            if seen.insert(key) {
                streams.push(record.memory_stream.as_slice());
            }
        }
        streams
    }
}

fn truncate(text: &str, limit: usize) -> String {
    text.chars().take(limit).collect()
}

fn as_trimmed_string(value: &serde_json::Value) -> Option<String> {
    match value {
        serde_json::Value::String(s) => Some(s.trim().to_string()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Import the HotpotQA distractor-setting JSON array. Each example becomes
/// a passage-style record: one stream item per context paragraph (title plus
/// its sentences), with the supporting sentences as gold evidence.
pub fn import_hotpotqa(text: &str, strict: bool) -> Result<(QaDataset, usize)> {
    let root: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| EngineError::Dataset(format!("hotpotqa parse: {e}")))?;
    let examples = root
        .as_array()
        .ok_or_else(|| EngineError::Dataset("hotpotqa root must be an array".to_string()))?;

    let mut records = Vec::new();
    let mut skipped = 0usize;
    'example: for (i, example) in examples.iter().enumerate() {
        let fail = |msg: String| -> Result<()> {
            if strict {
                Err(EngineError::Dataset(format!("hotpotqa example {i}: {msg}")))
            } else {
                log::warn!("skipping hotpotqa example {i}: {msg}");
                Ok(())
            }
        };
        let (question, answer) = match (
            example.get("question").and_then(as_trimmed_string),
            example.get("answer").and_then(as_trimmed_string),
        ) {
            (Some(q), Some(a)) if !q.is_empty() && !a.is_empty() => (q, a),
            _ => {
                fail("missing question or answer".to_string())?;
                skipped += 1;
                continue;
            }
        };
        let Some(context) = example.get("context").and_then(|c| c.as_array()) else {
            fail("missing context".to_string())?;
            skipped += 1;
            continue;
        };

        let mut stream = Vec::new();
        let mut paragraphs: Vec<(String, Vec<String>)> = Vec::new();
        for entry in context {
            let title = entry.get(0).and_then(as_trimmed_string).unwrap_or_default();
            let sentences: Vec<String> = entry
                .get(1)
                .and_then(|s| s.as_array())
                .map(|arr| {
                    arr.iter()
                        .filter_map(|v| v.as_str().map(str::to_string))
                        .collect()
                })
                .unwrap_or_default();
            if title.is_empty() || sentences.is_empty() {
                fail("malformed context paragraph".to_string())?;
                skipped += 1;
                continue 'example;
            }
            stream.push(StreamItem {
                content: format!("{title}. {}", sentences.concat()),
                timestamp: stream.len().to_string(),
            });
            paragraphs.push((title, sentences));
        }

        let mut evidence = Vec::new();
        for fact in example
            .get("supporting_facts")
            .and_then(|f| f.as_array())
            .map(|a| a.as_slice())
            .unwrap_or(&[])
        {
            let title = fact.get(0).and_then(as_trimmed_string);
            let sent_id = fact.get(1).and_then(|v| v.as_u64());
            if let (Some(title), Some(sent_id)) = (title, sent_id) {
                if let Some((_, sentences)) = paragraphs.iter().find(|(t, _)| *t == title) {
                    if let Some(sentence) = sentences.get(sent_id as usize) {
                        let sentence = sentence.trim().to_string();
                        if !sentence.is_empty() {
                            evidence.push(sentence);
                        }
                    }
                }
            }
        }

        records.push(QaRecord {
            question,
            gold_answer: answer,
            gold_evidence: evidence,
            memory_stream: stream,
        });
    }
    Ok((QaDataset { records }, skipped))
}

/// Import the LoCoMo conversation JSON array. Each conversation's turns
/// become one shared session-style stream ("speaker: text"); every QA entry
/// of the conversation references that stream, with evidence resolved from
/// dialogue ids to the turns' contents.
pub fn import_locomo(text: &str, strict: bool) -> Result<(QaDataset, usize)> {
    let root: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| EngineError::Dataset(format!("locomo parse: {e}")))?;
    let samples = root
        .as_array()
        .ok_or_else(|| EngineError::Dataset("locomo root must be an array".to_string()))?;

    let mut records = Vec::new();
    let mut skipped = 0usize;
    for (i, sample) in samples.iter().enumerate() {
        let Some(conversation) = sample.get("conversation").and_then(|c| c.as_object()) else {
            if strict {
                return Err(EngineError::Dataset(format!(
                    "locomo sample {i}: missing conversation"
                )));
            }
            log::warn!("skipping locomo sample {i}: missing conversation");
            skipped += 1;
            continue;
        };

        // Sessions are keyed "session_1", "session_2", ...; iterate in
        // numeric order so the stream follows conversation time.
        let mut session_keys: Vec<(&String, u64)> = conversation
            .keys()
            .filter_map(|k| {
                k.strip_prefix("session_")
                    .and_then(|suffix| suffix.parse::<u64>().ok())
                    .map(|n| (k, n))
            })
            .collect();
        session_keys.sort_by_key(|&(_, n)| n);

        let mut stream = Vec::new();
        let mut turn_by_dia_id: Vec<(String, String)> = Vec::new();
        for (key, number) in session_keys {
            let Some(turns) = conversation.get(key).and_then(|t| t.as_array()) else {
                continue;
            };
            let date = conversation
                .get(&format!("session_{number}_date_time"))
                .and_then(as_trimmed_string)
                .unwrap_or_else(|| format!("session {number}"));
            for turn in turns {
                let speaker = turn.get("speaker").and_then(as_trimmed_string);
                let text = turn.get("text").and_then(as_trimmed_string);
                let (Some(speaker), Some(text)) = (speaker, text) else {
                    continue;
                };
                let content = format!("{speaker}: {text}");
                if let Some(dia_id) = turn.get("dia_id").and_then(as_trimmed_string) {
                    turn_by_dia_id.push((dia_id, content.clone()));
                }
                stream.push(StreamItem {
                    content,
                    timestamp: date.clone(),
                });
            }
        }

        for (j, qa) in sample
            .get("qa")
            .and_then(|q| q.as_array())
            .map(|a| a.as_slice())
            .unwrap_or(&[])
            .iter()
            .enumerate()
        {
            let question = qa.get("question").and_then(as_trimmed_string);
            let answer = qa.get("answer").and_then(as_trimmed_string);
            let (Some(question), Some(answer)) = (question, answer) else {
                if strict {
                    return Err(EngineError::Dataset(format!(
                        "locomo sample {i} qa {j}: missing question or answer"
                    )));
                }
                log::warn!("skipping locomo sample {i} qa {j}: missing question or answer");
                skipped += 1;
                continue;
            };
            if question.is_empty() || answer.is_empty() {
                if strict {
                    return Err(EngineError::Dataset(format!(
                        "locomo sample {i} qa {j}: empty question or answer"
                    )));
                }
                skipped += 1;
                continue;
            }
            let evidence: Vec<String> = qa
                .get("evidence")
                .and_then(|e| e.as_array())
                .map(|arr| {
                    arr.iter()
                        .filter_map(|v| v.as_str())
                        .filter_map(|dia_id| {
                            turn_by_dia_id
                                .iter()
                                .find(|(id, _)| id == dia_id)
                                .map(|(_, content)| content.clone())
                        })
                        .collect()
                })
                .unwrap_or_default();
            records.push(QaRecord {
                question,
                gold_answer: answer,
                gold_evidence: evidence,
                memory_stream: stream.clone(),
            });
        }
    }
    Ok((QaDataset { records }, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(question: &str, stream: &[&str]) -> QaRecord {
        QaRecord {
            question: question.to_string(),
            gold_answer: "answer".to_string(),
            gold_evidence: vec![],
            memory_stream: stream
                .iter()
                .enumerate()
                .map(|(i, c)| StreamItem {
                    content: c.to_string(),
                    timestamp: i.to_string(),
                })
                .collect(),
        }
    }

    #[test]
    fn jsonl_roundtrip_preserves_records() {
        let dataset = QaDataset {
            records: vec![record("q1", &["a", "b"]), record("q2", &["c"])],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        dataset.write_jsonl(&path).unwrap();
        let (loaded, skipped) = QaDataset::read_jsonl(&path, true).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.records[0].question, "q1");
        assert_eq!(loaded.records[0].memory_stream.len(), 2);
    }

    #[test]
    fn tolerant_parse_skips_and_counts_bad_lines() {
        let text = concat!(
            r#"{"question": "q", "gold_answer": "a", "memory_stream": []}"#,
            "\n",
            "not json at all\n",
            r#"{"question": "", "gold_answer": "a", "memory_stream": []}"#,
            "\n",
            "\n",
            r#"{"question": "q2", "gold_answer": "a2", "memory_stream": []}"#,
            "\n",
        );
        let (dataset, skipped) = QaDataset::from_jsonl_str(text, false).unwrap();
        assert_eq!(dataset.records.len(), 2);
        assert_eq!(skipped, 2);

        assert!(QaDataset::from_jsonl_str(text, true).is_err());
    }

    #[test]
    fn shared_streams_dedupe_in_first_appearance_order() {
        let dataset = QaDataset {
            records: vec![
                record("q1", &["x", "y"]),
                record("q2", &["x", "y"]),
                record("q3", &["z"]),
            ],
        };
        let streams = dataset.distinct_streams();
        assert_eq!(streams.len(), 2);
        assert_eq!(streams[0][0].content, "x");
        assert_eq!(streams[1][0].content, "z");
    }

    #[test]
    fn hotpotqa_paragraphs_become_stream_items() {
        let text = r#"[{
            "question": "who wrote it?",
            "answer": "the author",
            "context": [
                ["Book", ["The book was written in 1990.", " It sold well."]],
                ["Other", ["Unrelated text."]]
            ],
            "supporting_facts": [["Book", 0], ["Book", 9]]
        }]"#;
        let (dataset, skipped) = import_hotpotqa(text, true).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(dataset.records.len(), 1);
        let record = &dataset.records[0];
        assert_eq!(record.memory_stream.len(), 2);
        assert_eq!(
            record.memory_stream[0].content,
            "Book. The book was written in 1990. It sold well."
        );
        // The out-of-range sentence index is dropped silently.
        assert_eq!(record.gold_evidence, vec!["The book was written in 1990."]);
    }

    #[test]
    fn hotpotqa_strict_rejects_missing_answer() {
        let text = r#"[{"question": "q", "context": [["T", ["s"]]]}]"#;
        assert!(import_hotpotqa(text, true).is_err());
        let (dataset, skipped) = import_hotpotqa(text, false).unwrap();
        assert!(dataset.records.is_empty());
        assert_eq!(skipped, 1);
    }

    #[test]
    fn locomo_sessions_share_one_stream() {
        let text = r#"[{
            "conversation": {
                "session_1": [
                    {"speaker": "Ana", "text": "I adopted a dog.", "dia_id": "D1:1"},
                    {"speaker": "Ben", "text": "What breed?", "dia_id": "D1:2"}
                ],
                "session_1_date_time": "1 May 2023",
                "session_2": [
                    {"speaker": "Ana", "text": "The dog is a beagle.", "dia_id": "D2:1"}
                ],
                "session_2_date_time": "8 May 2023"
            },
            "qa": [
                {"question": "What breed is the dog?", "answer": "a beagle", "evidence": ["D2:1"]},
                {"question": "Who adopted a dog?", "answer": "Ana", "evidence": ["D1:1"]}
            ]
        }]"#;
        let (dataset, skipped) = import_locomo(text, true).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(dataset.records.len(), 2);
        let first = &dataset.records[0];
        assert_eq!(first.memory_stream.len(), 3);
        assert_eq!(first.memory_stream[0].content, "Ana: I adopted a dog.");
        assert_eq!(first.memory_stream[0].timestamp, "1 May 2023");
        assert_eq!(first.memory_stream[2].timestamp, "8 May 2023");
        assert_eq!(first.gold_evidence, vec!["Ana: The dog is a beagle."]);
        // Both records share the identical stream, so dedup collapses them.
        assert_eq!(dataset.distinct_streams().len(), 1);
    }

    #[test]
    fn locomo_numeric_answers_are_stringified() {
        let text = r#"[{
            "conversation": {
                "session_1": [{"speaker": "A", "text": "counting", "dia_id": "D1:1"}]
            },
            "qa": [{"question": "how many?", "answer": 4, "evidence": []}]
        }]"#;
        let (dataset, _) = import_locomo(text, true).unwrap();
        assert_eq!(dataset.records[0].gold_answer, "4");
    }
}
