//! Template and evaluation-problem corpora: JSONL ingestion, validation,
//! and XML-safe text sanitization.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate template_id {template_id:?} (lines {first_line} and {second_line})")]
    DuplicateTemplateId {
        template_id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("template {template_id:?}: empty steps")]
    EmptySteps { template_id: String },
    #[error("template {template_id:?}: step {step_index} is empty after trimming")]
    EmptyStep {
        template_id: String,
        step_index: usize,
    },
    #[error("duplicate problem_id {problem_id:?} (lines {first_line} and {second_line})")]
    DuplicateProblemId {
        problem_id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("problem {problem_id:?} (line {line}): missing or empty {field}")]
    MissingProblemField {
        problem_id: String,
        line: usize,
        field: &'static str,
    },
}

/// One solved-problem template: an ordered sequence of reasoning-step texts
/// plus routing metadata (problem class and knowledge tags).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub template_id: String,
    pub template_type: String,
    #[serde(default)]
    pub knowledge_tags: Vec<String>,
    pub steps: Vec<String>,
}

impl Template {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// One benchmark sample: statement, canonical gold answer, and the same
/// metadata vocabulary as [`Template`] so retrieval can filter on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalProblem {
    pub problem_id: String,
    pub statement: String,
    pub gold_answer: String,
    #[serde(default)]
    pub template_type: String,
    #[serde(default)]
    pub knowledge_tags: Vec<String>,
}

/// Strip characters that are not legal in XML 1.0 documents. Reserved
/// characters (`&`, `<`, `>`, quotes) are kept; they are escaped at
/// serialization time. Idempotent and never lengthens the input.
pub fn sanitize_text(raw: &str) -> String {
    raw.chars().filter(|&c| is_xml_char(c)).collect()
}

fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r')
        || ('\u{20}'..='\u{D7FF}').contains(&c)
        || ('\u{E000}'..='\u{FFFD}').contains(&c)
        || c >= '\u{10000}'
}

/// Normalize a tag list into set form: trim, drop empties, dedup, sort.
fn normalize_tags(tags: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = tags
        .into_iter()
        .map(|t| sanitize_text(t.trim()))
        .filter(|t| !t.is_empty())
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Load a template corpus from a JSONL file (one template object per line,
/// blank lines ignored). Order-preserving and deterministic.
pub fn load_templates(path: &Path) -> Result<Vec<Template>, CorpusError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut templates = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: Template =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                path: display.clone(),
                line: line_no,
                message: e.to_string(),
            })?;
        let template = validate_template(raw, &display, line_no)?;
        if let Some(&first_line) = seen.get(&template.template_id) {
            return Err(CorpusError::DuplicateTemplateId {
                template_id: template.template_id,
                first_line,
                second_line: line_no,
            });
        }
        seen.insert(template.template_id.clone(), line_no);
        templates.push(template);
    }
    log::info!("loaded {} templates from {}", templates.len(), display);
    Ok(templates)
}

fn validate_template(
    raw: Template,
    path: &str,
    line: usize,
) -> Result<Template, CorpusError> {
    let template_id = raw.template_id.trim().to_string();
    if template_id.is_empty() {
        return Err(CorpusError::Malformed {
            path: path.to_string(),
            line,
            message: "empty template_id".to_string(),
        });
    }
    if raw.steps.is_empty() {
        return Err(CorpusError::EmptySteps { template_id });
    }
    let mut steps = Vec::with_capacity(raw.steps.len());
    for (i, step) in raw.steps.into_iter().enumerate() {
        let clean = sanitize_text(step.trim());
        if clean.is_empty() {
            return Err(CorpusError::EmptyStep {
                template_id,
                step_index: i,
            });
        }
        steps.push(clean);
    }
    Ok(Template {
        template_id,
        template_type: sanitize_text(raw.template_type.trim()),
        knowledge_tags: normalize_tags(raw.knowledge_tags),
        steps,
    })
}

/// Write a template corpus as JSONL. Re-loading the written file yields a
/// field-by-field equal corpus.
pub fn save_templates(templates: &[Template], path: &Path) -> Result<(), CorpusError> {
    let display = path.display().to_string();
    let io_err = |source| CorpusError::Io {
        path: display.clone(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    for t in templates {
        let line = serde_json::to_string(t).expect("template serializes");
        writeln!(writer, "{line}").map_err(io_err)?;
    }
    writer.flush().map_err(io_err)?;
    Ok(())
}

/// Load evaluation problems from a JSONL file. Missing tags or type default
/// to empty with a warning; missing statement or gold answer is an error.
pub fn load_problems(path: &Path) -> Result<Vec<EvalProblem>, CorpusError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut problems = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawProblem =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                path: display.clone(),
                line: line_no,
                message: e.to_string(),
            })?;
        let problem = validate_problem(raw, &display, line_no)?;
        if let Some(&first_line) = seen.get(&problem.problem_id) {
            return Err(CorpusError::DuplicateProblemId {
                problem_id: problem.problem_id,
                first_line,
                second_line: line_no,
            });
        }
        seen.insert(problem.problem_id.clone(), line_no);
        problems.push(problem);
    }
    log::info!("loaded {} problems from {}", problems.len(), display);
    Ok(problems)
}

#[derive(Deserialize)]
struct RawProblem {
    problem_id: Option<String>,
    statement: Option<String>,
    gold_answer: Option<String>,
    template_type: Option<String>,
    knowledge_tags: Option<Vec<String>>,
}

fn validate_problem(
    raw: RawProblem,
    path: &str,
    line: usize,
) -> Result<EvalProblem, CorpusError> {
    let problem_id = raw
        .problem_id
        .as_deref()
        .map(str::trim)
        .unwrap_or("")
        .to_string();
    if problem_id.is_empty() {
        return Err(CorpusError::Malformed {
            path: path.to_string(),
            line,
            message: "missing problem_id".to_string(),
        });
    }
    let statement = sanitize_text(raw.statement.as_deref().unwrap_or("").trim());
    if statement.is_empty() {
        return Err(CorpusError::MissingProblemField {
            problem_id,
            line,
            field: "statement",
        });
    }
    let gold_answer = raw
        .gold_answer
        .as_deref()
        .map(str::trim)
        .unwrap_or("")
        .to_string();
    if gold_answer.is_empty() {
        return Err(CorpusError::MissingProblemField {
            problem_id,
            line,
            field: "gold_answer",
        });
    }
    let template_type = match raw.template_type {
        Some(t) => sanitize_text(t.trim()),
        None => {
            log::warn!("problem {problem_id}: no template_type; defaulting to empty");
            String::new()
        }
    };
    let knowledge_tags = match raw.knowledge_tags {
        Some(tags) => normalize_tags(tags),
        None => {
            log::warn!("problem {problem_id}: no knowledge_tags; defaulting to empty set");
            Vec::new()
        }
    };
    Ok(EvalProblem {
        problem_id,
        statement,
        gold_answer,
        template_type,
        knowledge_tags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        let mut text = String::new();
        for l in lines {
            text.push_str(l);
            text.push('\n');
        }
        std::fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn loads_templates_in_file_order() {
        let f = write_lines(&[
            r#"{"template_id":"a","template_type":"algebraic","knowledge_tags":["algebra"],"steps":["s1","s2"]}"#,
            r#"{"template_id":"b","template_type":"geometric","knowledge_tags":[],"steps":["s1"]}"#,
            r#"{"template_id":"c","template_type":"algebraic","knowledge_tags":["x","x"],"steps":["s1","s2","s3"]}"#,
        ]);
        let ts = load_templates(f.path()).unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(
            ts.iter().map(|t| t.template_id.as_str()).collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
        // duplicate tags collapse to set form
        assert_eq!(ts[2].knowledge_tags, vec!["x"]);
    }

    #[test]
    fn empty_steps_is_an_error_naming_the_template() {
        let f = write_lines(&[
            r#"{"template_id":"bad","template_type":"algebraic","knowledge_tags":[],"steps":[]}"#,
        ]);
        match load_templates(f.path()) {
            Err(CorpusError::EmptySteps { template_id }) => assert_eq!(template_id, "bad"),
            other => panic!("expected EmptySteps, got {other:?}"),
        }
    }

    #[test]
    fn whitespace_only_step_is_an_error() {
        let f = write_lines(&[
            r#"{"template_id":"bad","template_type":"t","knowledge_tags":[],"steps":["ok","  "]}"#,
        ]);
        match load_templates(f.path()) {
            Err(CorpusError::EmptyStep {
                template_id,
                step_index,
            }) => {
                assert_eq!(template_id, "bad");
                assert_eq!(step_index, 1);
            }
            other => panic!("expected EmptyStep, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_template_id_reports_both_lines() {
        let f = write_lines(&[
            r#"{"template_id":"a","template_type":"t","knowledge_tags":[],"steps":["s"]}"#,
            r#"{"template_id":"a","template_type":"t","knowledge_tags":[],"steps":["s"]}"#,
        ]);
        match load_templates(f.path()) {
            Err(CorpusError::DuplicateTemplateId {
                first_line,
                second_line,
                ..
            }) => {
                assert_eq!((first_line, second_line), (1, 2));
            }
            other => panic!("expected DuplicateTemplateId, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_lines(&[
            r#"{"template_id":"a","template_type":"t","knowledge_tags":[],"steps":["s"]}"#,
            r#"{"template_id": nope}"#,
        ]);
        match load_templates(f.path()) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn sanitize_removes_illegal_control_characters() {
        assert_eq!(sanitize_text("a\u{0}b\u{1}c"), "abc");
        assert_eq!(sanitize_text("keep\ttabs\nand\rnewlines"), "keep\ttabs\nand\rnewlines");
    }

    #[test]
    fn sanitize_keeps_reserved_characters_untouched() {
        assert_eq!(sanitize_text("a<b & c"), "a<b & c");
    }

    #[test]
    fn sanitize_leaves_clean_text_unchanged() {
        let s = "plain text with unicode: π ≈ 3.14159";
        assert_eq!(sanitize_text(s), s);
    }

    #[test]
    fn problems_load_with_gold_answer() {
        let f = write_lines(&[
            r#"{"problem_id":"aime24-2","statement":"Find $xy$.","gold_answer":"25","template_type":"algebraic","knowledge_tags":["logarithms"]}"#,
        ]);
        let ps = load_problems(f.path()).unwrap();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].gold_answer, "25");
    }

    #[test]
    fn problem_missing_gold_answer_is_an_error() {
        let f = write_lines(&[
            r#"{"problem_id":"p1","statement":"What is 1+1?","template_type":"algebraic"}"#,
        ]);
        match load_problems(f.path()) {
            Err(CorpusError::MissingProblemField { problem_id, field, .. }) => {
                assert_eq!(problem_id, "p1");
                assert_eq!(field, "gold_answer");
            }
            other => panic!("expected MissingProblemField, got {other:?}"),
        }
    }

    #[test]
    fn problem_missing_tags_defaults_to_empty_set() {
        let f = write_lines(&[
            r#"{"problem_id":"p1","statement":"s","gold_answer":"1","template_type":"t"}"#,
        ]);
        let ps = load_problems(f.path()).unwrap();
        assert!(ps[0].knowledge_tags.is_empty());
    }

    #[test]
    fn thirty_problem_file_loads_thirty_problems() {
        let lines: Vec<String> = (0..30)
            .map(|i| {
                format!(
                    r#"{{"problem_id":"p{i}","statement":"problem {i}","gold_answer":"{i}","template_type":"t","knowledge_tags":[]}}"#
                )
            })
            .collect();
        let refs: Vec<&str> = lines.iter().map(|s| s.as_str()).collect();
        let f = write_lines(&refs);
        assert_eq!(load_problems(f.path()).unwrap().len(), 30);
    }

    #[test]
    fn save_then_load_round_trips() {
        let f = write_lines(&[
            r#"{"template_id":"a","template_type":"Algebraic","knowledge_tags":["b","a"],"steps":[" s1 ","s2"]}"#,
            r#"{"template_id":"b","template_type":"geometric","knowledge_tags":[],"steps":["x < y & z"]}"#,
        ]);
        let ts = load_templates(f.path()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_templates(&ts, out.path()).unwrap();
        let ts2 = load_templates(out.path()).unwrap();
        assert_eq!(ts, ts2);
    }

    proptest! {
        #[test]
        fn sanitize_is_idempotent(s in "\\PC{0,200}") {
            let once = sanitize_text(&s);
            prop_assert_eq!(sanitize_text(&once), once);
        }

        #[test]
        fn sanitize_never_lengthens(s in ".{0,200}") {
            prop_assert!(sanitize_text(&s).len() <= s.len());
        }
    }
}
