//! Reader for the sectioned text format shared by case, config, catalog and
//! injection files.
//!
//! A file is a sequence of records, one per line. A line holding a single
//! upper-case word is a section header; every other non-empty line is a
//! record of whitespace-separated fields belonging to the most recent
//! section. `#` starts a comment that runs to the end of the line.

use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// One data line of a sectioned file.
#[derive(Debug, Clone)]
pub struct Record<'a> {
    pub section: &'a str,
    /// 1-based line number in the source text.
    pub line: usize,
    pub fields: Vec<&'a str>,
}

impl<'a> Record<'a> {
    pub fn expect_len(&self, min: usize, max: usize) -> Result<(), ParseError> {
        let n = self.fields.len();
        if n < min || n > max {
            let expected = if min == max {
                format!("{min}")
            } else {
                format!("{min}..={max}")
            };
            return Err(ParseError::new(
                self.line,
                format!("{} record has {n} fields, expected {expected}", self.section),
            ));
        }
        Ok(())
    }

    /// Parses field `idx`, naming it `what` in the error message.
    pub fn parse<T: FromStr>(&self, idx: usize, what: &str) -> Result<T, ParseError> {
        let raw = self
            .fields
            .get(idx)
            .ok_or_else(|| ParseError::new(self.line, format!("{} record is missing field '{what}'", self.section)))?;
        raw.parse().map_err(|_| {
            ParseError::new(
                self.line,
                format!("{} field '{what}': cannot parse '{raw}'", self.section),
            )
        })
    }

    pub fn parse_flag(&self, idx: usize, what: &str) -> Result<bool, ParseError> {
        match self.fields.get(idx).copied() {
            Some("1") | Some("true") => Ok(true),
            Some("0") | Some("false") => Ok(false),
            Some(raw) => Err(ParseError::new(
                self.line,
                format!("{} field '{what}': expected 0/1, got '{raw}'", self.section),
            )),
            None => Err(ParseError::new(
                self.line,
                format!("{} record is missing field '{what}'", self.section),
            )),
        }
    }
}

fn is_header(token: &str) -> bool {
    token.chars().all(|c| c.is_ascii_uppercase() || c == '_') && !token.is_empty()
}

/// Splits `text` into records. Section names are checked against `known`;
/// an unknown header or a record before the first header is an error.
pub fn records<'a>(text: &'a str, known: &[&str]) -> Result<Vec<Record<'a>>, ParseError> {
    let mut out = Vec::new();
    let mut section: Option<&'a str> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() == 1 && is_header(fields[0]) {
            if !known.contains(&fields[0]) {
                return Err(ParseError::new(line, format!("unknown section '{}'", fields[0])));
            }
            section = Some(fields[0]);
            continue;
        }
        let section = section.ok_or_else(|| ParseError::new(line, "record appears before any section header"))?;
        out.push(Record { section, line, fields });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_sections_and_strips_comments() {
        let text = "# header\nBUS\n0 1 # trailing\n\n1 0\nREF\n0\n";
        let recs = records(text, &["BUS", "REF"]).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].section, "BUS");
        assert_eq!(recs[0].fields, vec!["0", "1"]);
        assert_eq!(recs[2].section, "REF");
        assert_eq!(recs[2].line, 7);
    }

    #[test]
    fn rejects_unknown_section() {
        let err = records("BUS\n0 1\nSHUNT\n", &["BUS"]).unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.message.contains("SHUNT"));
    }

    #[test]
    fn rejects_orphan_record() {
        assert!(records("0 1\n", &["BUS"]).is_err());
    }
}
