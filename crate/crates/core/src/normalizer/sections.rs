use std::sync::LazyLock;

use regex::Regex;

use super::{NormalizeError, Section, SectionKind, Sentence, StructuredReport};

static HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(findings|impression)[ \t]*:").unwrap());

/// Split a report into findings / impression sections and segment each one.
///
/// Headers are matched case-insensitively and may have blanks before the
/// colon ("Impression :"). Text ahead of the first header becomes an `other`
/// section; a report with no headers is one implicit findings section.
pub fn extract_sections(id: &str, text: &str) -> Result<StructuredReport, NormalizeError> {
    if text.trim().is_empty() {
        return Err(NormalizeError::EmptyReport);
    }
    let headers: Vec<(SectionKind, usize, usize)> = HEADER
        .captures_iter(text)
        .map(|c| {
            let whole = c.get(0).unwrap();
            let kind = if c[1].eq_ignore_ascii_case("findings") {
                SectionKind::Findings
            } else {
                SectionKind::Impression
            };
            (kind, whole.start(), whole.end())
        })
        .collect();

    let mut sections = Vec::new();
    if headers.is_empty() {
        sections.push(build_section(
            text,
            SectionKind::Findings,
            false,
            0,
            text.len(),
        ));
    } else {
        let first = headers[0].1;
        if !text[..first].trim().is_empty() {
            sections.push(build_section(text, SectionKind::Other, false, 0, first));
        }
        for (i, &(kind, _, body_start)) in headers.iter().enumerate() {
            let body_end = headers.get(i + 1).map_or(text.len(), |h| h.1);
            sections.push(build_section(text, kind, true, body_start, body_end));
        }
    }
    Ok(StructuredReport {
        id: id.to_string(),
        raw: text.to_string(),
        sections,
    })
}

fn build_section(
    raw: &str,
    kind: SectionKind,
    has_header: bool,
    start: usize,
    end: usize,
) -> Section {
    let sentences = segment_sentences(&raw[start..end])
        .into_iter()
        .map(|s| Sentence {
            start: s.start + start,
            end: s.end + start,
            text: s.text,
        })
        .collect();
    Section {
        kind,
        has_header,
        start,
        end,
        sentences,
    }
}

/// Split text at `.`, `!` or `?` followed by whitespace or end of text.
///
/// A period right after a bare number at the start of a sentence is an
/// enumerator ("1. Right upper lobe pneumonia.") and does not split; periods
/// inside decimals never split since no whitespace follows them. Closing
/// brackets and quotes directly after a terminator stay with the sentence.
/// Offsets are byte offsets into `text`.
pub fn segment_sentences(text: &str) -> Vec<Sentence> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            start = Some(pos);
        }
        let s = start.unwrap();
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, ')' | ']' | '"' | '\'') {
                j += 1;
            }
            let at_boundary = j == chars.len() || chars[j].1.is_whitespace();
            let enumerator = c == '.' && {
                let head = &text[s..pos];
                !head.is_empty() && head.bytes().all(|b| b.is_ascii_digit())
            };
            if at_boundary && !enumerator {
                let end = if j == chars.len() {
                    text.len()
                } else {
                    chars[j].0
                };
                out.push(Sentence {
                    text: text[s..end].to_string(),
                    start: s,
                    end,
                });
                start = None;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    if let Some(s) = start {
        let end = s + text[s..].trim_end().len();
        out.push(Sentence {
            text: text[s..end].to_string(),
            start: s,
            end,
        });
    }
    out
}
