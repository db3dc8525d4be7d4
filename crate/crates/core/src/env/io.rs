//! JSON-lines formats: case streams and stream reports.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CandidateSet, CaseItem, PatientCase, StreamRecord, StreamSummary};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Structure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn at(line: usize) -> impl Fn(String) -> FormatError {
    move |message| FormatError::Line { line, message }
}

/// One line of a case file. `candidates` may be absent in files that still
/// need candidate construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseLine {
    pub id: String,
    pub profile: String,
    pub gold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptions: Option<BTreeMap<String, String>>,
}

impl CaseLine {
    pub fn from_item(item: &CaseItem) -> Self {
        let descriptions = item.candidates.descriptions();
        Self {
            id: item.case.id.clone(),
            profile: item.case.profile.clone(),
            gold: item.case.gold_label.clone(),
            candidates: Some(item.candidates.labels().to_vec()),
            descriptions: (!descriptions.is_empty()).then(|| descriptions.clone()),
        }
    }

    pub fn case(&self) -> PatientCase {
        PatientCase {
            id: self.id.clone(),
            profile: self.profile.clone(),
            gold_label: self.gold.clone(),
        }
    }

    pub fn into_item(self) -> Result<CaseItem, String> {
        let case = self.case();
        let labels = self.candidates.ok_or("missing candidates")?;
        let set = CandidateSet::with_descriptions(labels, self.descriptions.unwrap_or_default())
            .map_err(|e| e.to_string())?;
        CaseItem::new(case, set).map_err(|e| e.to_string())
    }
}

/// Parses case lines without requiring candidate sets. Blank lines are skipped.
pub fn read_case_lines(reader: impl BufRead) -> Result<Vec<CaseLine>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| at(i + 1)(e.to_string()))?);
    }
    Ok(out)
}

/// Parses a complete case stream: every line needs a valid candidate set and
/// case ids must be unique.
pub fn read_cases(reader: impl BufRead) -> Result<Vec<CaseItem>, FormatError> {
    let mut items = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CaseLine = serde_json::from_str(&line).map_err(|e| at(i + 1)(e.to_string()))?;
        if !seen.insert(parsed.id.clone()) {
            return Err(at(i + 1)(format!("duplicate case id {:?}", parsed.id)));
        }
        items.push(parsed.into_item().map_err(at(i + 1))?);
    }
    if items.is_empty() {
        return Err(FormatError::Structure("case file has no cases".into()));
    }
    Ok(items)
}

pub fn write_cases(mut out: impl Write, items: &[CaseItem]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, &CaseLine::from_item(item))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Serializes one record as a report line, newline included.
pub fn record_line(record: &StreamRecord) -> String {
    let mut s = serde_json::to_string(record).expect("records serialize");
    s.push('\n');
    s
}

pub fn summary_line(summary: &StreamSummary) -> String {
    let mut s = serde_json::to_string(summary).expect("summaries serialize");
    s.push('\n');
    s
}

/// A parsed stream report.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub records: Vec<StreamRecord>,
    pub summary: Option<StreamSummary>,
}

/// Reads a report: record lines with contiguous rounds from 1, optionally
/// followed by exactly one summary line.
pub fn read_report(reader: impl BufRead) -> Result<Report, FormatError> {
    let mut records: Vec<StreamRecord> = Vec::new();
    let mut summary = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = at(i + 1);
        if summary.is_some() {
            return Err(err("content after the summary line".into()));
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if value.get("round_index").is_some() {
            let rec: StreamRecord = serde_json::from_value(value).map_err(|e| err(e.to_string()))?;
            let expected = records.len() as u64 + 1;
            if rec.round_index != expected {
                return Err(err(format!("round {} where {expected} was expected", rec.round_index)));
            }
            records.push(rec);
        } else {
            summary = Some(serde_json::from_value(value).map_err(|e| err(e.to_string()))?);
        }
    }
    if records.is_empty() {
        return Err(FormatError::Structure("report has no records".into()));
    }
    Ok(Report { records, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASES: &str = r#"{"id":"a","profile":"p","gold":"X","candidates":["Y","X"]}

{"id":"b","profile":"q","gold":"Y","candidates":["Y","Z"],"descriptions":{"Y":"why"}}
"#;

    #[test]
    fn case_round_trip() {
        let items = read_cases(CASES.as_bytes()).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[1].candidates.descriptions()["Y"], "why");
        let mut buf = Vec::new();
        write_cases(&mut buf, &items).unwrap();
        assert_eq!(read_cases(buf.as_slice()).unwrap(), items);
    }

    #[test]
    fn case_errors_carry_line_numbers() {
        let bad = r#"{"id":"a","profile":"p","gold":"X","candidates":["Y"]}"#;
        let e = read_cases(bad.as_bytes()).unwrap_err().to_string();
        assert!(e.starts_with("line 1:"), "{e}");
        let extra = r#"{"id":"a","profile":"p","gold":"X","candidates":["X"],"extra":1}"#;
        assert!(read_cases(extra.as_bytes()).is_err());
        let dup = format!("{0}\n{0}", r#"{"id":"a","profile":"p","gold":"X","candidates":["X"]}"#);
        assert!(read_cases(dup.as_bytes()).unwrap_err().to_string().contains("duplicate"));
        assert!(read_cases("".as_bytes()).is_err());
        assert_eq!(read_case_lines(r#"{"id":"a","profile":"p","gold":"X"}"#.as_bytes()).unwrap().len(), 1);
    }

    fn rec(round_index: u64, correct: bool) -> StreamRecord {
        StreamRecord {
            round_index,
            case_id: format!("c{round_index}"),
            prediction: "X".into(),
            correct,
            occupancy_after: 0,
            rules_after: 0,
            turns_used: 1,
            reward: None,
        }
    }

    #[test]
    fn report_round_trip_and_checks() {
        let records = vec![rec(1, true), rec(2, false)];
        let summary = StreamSummary::compute(&records, &[2], 1).unwrap();
        let text: String = records.iter().map(record_line).chain([summary_line(&summary)]).collect();
        let report = read_report(text.as_bytes()).unwrap();
        assert_eq!(report.records, records);
        assert_eq!(report.summary, Some(summary));

        let gap: String = [rec(1, true), rec(3, true)].iter().map(record_line).collect();
        assert!(read_report(gap.as_bytes()).is_err());
        let trailing = format!("{text}{}", record_line(&rec(3, true)));
        assert!(read_report(trailing.as_bytes()).is_err());
    }
}
