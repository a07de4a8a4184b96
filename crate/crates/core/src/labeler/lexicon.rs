use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Finding;

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.json");

/// Mention phrases per finding and the cue lists that set polarity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub phrases: BTreeMap<Finding, Vec<String>>,
    #[serde(rename = "pre_negation")]
    pub pre_negation_cues: Vec<String>,
    #[serde(rename = "post_negation")]
    pub post_negation_cues: Vec<String>,
    #[serde(rename = "uncertainty")]
    pub uncertainty_cues: Vec<String>,
    /// Maximum number of words allowed between a cue and the mention it governs.
    pub negation_window: usize,
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("finding `{0}` has no phrases")]
    NoPhrases(Finding),
    #[error("empty phrase in list `{0}`")]
    EmptyPhrase(String),
    #[error("duplicate entry `{entry}` in list `{list}`")]
    Duplicate { list: String, entry: String },
    #[error("entry `{0}` is not lowercase")]
    NotLowercase(String),
    #[error("cue `{cue}` appears in both `{a}` and `{b}`")]
    OverlappingCues {
        cue: String,
        a: &'static str,
        b: &'static str,
    },
    #[error("negation_window must be at least 1")]
    BadWindow,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::from_json(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl Lexicon {
    pub fn from_json(s: &str) -> Result<Self, LexiconError> {
        let lex: Lexicon = serde_json::from_str(s)?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let s = fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<(), LexiconError> {
        if self.negation_window < 1 {
            return Err(LexiconError::BadWindow);
        }
        for f in Finding::ALL {
            let list = self.phrases.get(&f).map(Vec::as_slice).unwrap_or(&[]);
            if list.is_empty() && f != Finding::NoFinding {
                return Err(LexiconError::NoPhrases(f));
            }
            check_list(f.as_str(), list)?;
        }
        let lists: [(&'static str, &[String]); 3] = [
            ("pre_negation", &self.pre_negation_cues),
            ("post_negation", &self.post_negation_cues),
            ("uncertainty", &self.uncertainty_cues),
        ];
        for (name, list) in lists {
            check_list(name, list)?;
        }
        for i in 0..lists.len() {
            for j in i + 1..lists.len() {
                let other: HashSet<&String> = lists[j].1.iter().collect();
                if let Some(cue) = lists[i].1.iter().find(|c| other.contains(c)) {
                    return Err(LexiconError::OverlappingCues {
                        cue: cue.clone(),
                        a: lists[i].0,
                        b: lists[j].0,
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_list(name: &str, list: &[String]) -> Result<(), LexiconError> {
    let mut seen = HashSet::new();
    for entry in list {
        if entry.trim().is_empty() {
            return Err(LexiconError::EmptyPhrase(name.to_string()));
        }
        if entry.to_lowercase() != *entry {
            return Err(LexiconError::NotLowercase(entry.clone()));
        }
        if !seen.insert(entry) {
            return Err(LexiconError::Duplicate {
                list: name.to_string(),
                entry: entry.clone(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_lexicon_is_valid() {
        let lex = Lexicon::default();
        assert_eq!(lex.negation_window, 6);
        for f in Finding::ALL {
            if f != Finding::NoFinding {
                assert!(!lex.phrases[&f].is_empty(), "{f}");
            }
        }
        for term in [
            "catheter",
            "chest tube",
            "endotracheal tube",
            "picc",
            "chemoport",
            "central line",
            "nasogastric tube",
        ] {
            assert!(lex.phrases[&Finding::SupportDevices].contains(&term.to_string()));
        }
    }

    #[test]
    fn rejects_bad_lexicons() {
        let lex = Lexicon {
            negation_window: 0,
            ..Lexicon::default()
        };
        assert!(matches!(lex.validate(), Err(LexiconError::BadWindow)));

        let mut lex = Lexicon::default();
        lex.phrases.insert(Finding::Edema, vec![]);
        assert!(matches!(
            lex.validate(),
            Err(LexiconError::NoPhrases(Finding::Edema))
        ));

        let mut lex = Lexicon::default();
        lex.phrases
            .get_mut(&Finding::Edema)
            .unwrap()
            .push("edema".into());
        assert!(matches!(
            lex.validate(),
            Err(LexiconError::Duplicate { .. })
        ));

        let mut lex = Lexicon::default();
        lex.uncertainty_cues.push("no".into());
        assert!(matches!(
            lex.validate(),
            Err(LexiconError::OverlappingCues { .. })
        ));

        let mut lex = Lexicon::default();
        lex.pre_negation_cues.push(" ".into());
        assert!(matches!(lex.validate(), Err(LexiconError::EmptyPhrase(_))));

        let mut lex = Lexicon::default();
        lex.pre_negation_cues.push("Without".into());
        assert!(matches!(lex.validate(), Err(LexiconError::NotLowercase(_))));
    }

    #[test]
    fn json_round_trip() {
        let lex = Lexicon::default();
        let s = serde_json::to_string(&lex).unwrap();
        assert!(s.contains("\"pre_negation\""));
        assert_eq!(Lexicon::from_json(&s).unwrap(), lex);
    }
}
