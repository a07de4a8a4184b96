use serde::{Deserialize, Serialize};

use super::lexicon::Lexicon;
use crate::corpus::Finding;
use crate::normalizer::StructuredReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Lowercased token text.
    pub text: String,
    pub kind: TokenKind,
}

/// Lowercased alphanumeric runs are words; every other non-blank character
/// is a punctuation token of its own. "nodule/mass" gives three tokens.
pub fn tokenize(s: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(Token {
                text: std::mem::take(&mut word),
                kind: TokenKind::Word,
            });
        }
        if !c.is_whitespace() {
            out.push(Token {
                text: c.to_string(),
                kind: TokenKind::Punct,
            });
        }
    }
    if !word.is_empty() {
        out.push(Token {
            text: word,
            kind: TokenKind::Word,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub finding: Finding,
    /// Index into the report's labelable sentences.
    pub sentence_index: usize,
    /// Half-open token range within the sentence.
    pub token_span: (usize, usize),
    pub matched_phrase: String,
}

/// A phrase list pre-tokenized for matching.
#[derive(Debug, Clone)]
pub(crate) struct PhraseSet {
    pub entries: Vec<(Vec<String>, String)>,
}

impl PhraseSet {
    pub fn new(phrases: &[String]) -> Self {
        PhraseSet {
            entries: phrases
                .iter()
                .map(|p| (tokenize(p).into_iter().map(|t| t.text).collect(), p.clone()))
                .filter(|(t, _): &(Vec<String>, String)| !t.is_empty())
                .collect(),
        }
    }

    /// All occurrences as `(start, end, phrase)`, possibly overlapping.
    pub fn find_all<'a>(&'a self, tokens: &[Token]) -> Vec<(usize, usize, &'a str)> {
        let mut hits = Vec::new();
        for (pat, phrase) in &self.entries {
            if pat.len() > tokens.len() {
                continue;
            }
            for start in 0..=tokens.len() - pat.len() {
                if pat.iter().zip(&tokens[start..]).all(|(p, t)| *p == t.text) {
                    hits.push((start, start + pat.len(), phrase.as_str()));
                }
            }
        }
        hits
    }
}

/// Lexicon with every phrase and cue tokenized once.
#[derive(Debug, Clone)]
pub struct CompiledLexicon {
    pub(crate) phrases: Vec<(Finding, PhraseSet)>,
    pub(crate) pre_negation: PhraseSet,
    pub(crate) post_negation: PhraseSet,
    pub(crate) uncertainty: PhraseSet,
    pub(crate) window: usize,
}

impl CompiledLexicon {
    pub fn new(lexicon: &Lexicon) -> Self {
        CompiledLexicon {
            phrases: lexicon
                .phrases
                .iter()
                .map(|(f, list)| (*f, PhraseSet::new(list)))
                .collect(),
            pre_negation: PhraseSet::new(&lexicon.pre_negation_cues),
            post_negation: PhraseSet::new(&lexicon.post_negation_cues),
            uncertainty: PhraseSet::new(&lexicon.uncertainty_cues),
            window: lexicon.negation_window,
        }
    }

    /// Whole-word, longest-first matching within one sentence. Overlapping
    /// matches of the same finding collapse to the longest; different
    /// findings may overlap.
    pub fn mentions_in_sentence(&self, sentence_index: usize, tokens: &[Token]) -> Vec<Mention> {
        let mut out = Vec::new();
        for (finding, set) in &self.phrases {
            let mut hits = set.find_all(tokens);
            hits.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
            let mut taken: Vec<(usize, usize)> = Vec::new();
            for (s, e, phrase) in hits {
                if taken.iter().any(|&(ts, te)| s < te && ts < e) {
                    continue;
                }
                taken.push((s, e));
                out.push(Mention {
                    finding: *finding,
                    sentence_index,
                    token_span: (s, e),
                    matched_phrase: phrase.to_string(),
                });
            }
        }
        out.sort_by_key(|m| (m.token_span.0, m.finding, m.token_span.1));
        out
    }
}

/// Find every lexicon mention in the report's findings and impression text,
/// ordered by (sentence, start token).
pub fn detect_mentions(report: &StructuredReport, lexicon: &Lexicon) -> Vec<Mention> {
    let compiled = CompiledLexicon::new(lexicon);
    report
        .labelable_sentences()
        .enumerate()
        .flat_map(|(i, s)| compiled.mentions_in_sentence(i, &tokenize(&s.text)))
        .collect()
}
