//! Window-scoped negation and uncertainty classification.
//!
//! A pre-negation cue must end at most `window` words before the mention, a
//! post-negation cue must start at most `window` words after it. A comma or
//! one of "but", "although", "however" between cue and mention breaks scope,
//! except a comma that continues a list of mentions ("no consolidation,
//! effusion, or pneumothorax"). Negation is checked first, so a mention under
//! both kinds of cue is negative.

use super::mentions::{CompiledLexicon, Mention, Token, TokenKind};
use super::Lexicon;
use crate::corpus::FindingLabel;

const SCOPE_BREAKERS: [&str; 4] = [",", "but", "although", "however"];

fn words_between(tokens: &[Token], from: usize, to: usize) -> usize {
    tokens[from..to]
        .iter()
        .filter(|t| t.kind == TokenKind::Word)
        .count()
}

/// Token positions where some mention starts; used to recognise list commas.
struct Scope<'a> {
    tokens: &'a [Token],
    mention_starts: Vec<usize>,
    window: usize,
}

impl Scope<'_> {
    fn list_comma(&self, at: usize) -> bool {
        let mut next = at + 1;
        if self
            .tokens
            .get(next)
            .is_some_and(|t| t.text == "and" || t.text == "or")
        {
            next += 1;
        }
        self.mention_starts.contains(&next)
    }

    fn broken(&self, from: usize, to: usize) -> bool {
        (from..to).any(|i| {
            let t = self.tokens[i].text.as_str();
            SCOPE_BREAKERS.contains(&t) && !(t == "," && self.list_comma(i))
        })
    }

    fn before(&self, cue_end: usize, mention_start: usize) -> bool {
        cue_end <= mention_start
            && words_between(self.tokens, cue_end, mention_start) <= self.window
            && !self.broken(cue_end, mention_start)
    }

    fn after(&self, mention_end: usize, cue_start: usize) -> bool {
        cue_start >= mention_end
            && words_between(self.tokens, mention_end, cue_start) <= self.window
            && !self.broken(mention_end, cue_start)
    }
}

pub(crate) fn classify_compiled(
    mention: &Mention,
    tokens: &[Token],
    lex: &CompiledLexicon,
) -> FindingLabel {
    let (ms, me) = mention.token_span;
    let scope = Scope {
        tokens,
        mention_starts: lex
            .mentions_in_sentence(mention.sentence_index, tokens)
            .iter()
            .map(|m| m.token_span.0)
            .collect(),
        window: lex.window,
    };
    let negated = lex
        .pre_negation
        .find_all(tokens)
        .into_iter()
        .any(|(_, ce, _)| scope.before(ce, ms))
        || lex
            .post_negation
            .find_all(tokens)
            .into_iter()
            .any(|(cs, _, _)| scope.after(me, cs));
    if negated {
        return FindingLabel::Negative;
    }
    let uncertain = lex
        .uncertainty
        .find_all(tokens)
        .into_iter()
        .any(|(cs, ce, _)| scope.before(ce, ms) || scope.after(me, cs));
    if uncertain {
        FindingLabel::Uncertain
    } else {
        FindingLabel::Positive
    }
}

/// Polarity of one mention given the tokens of its sentence.
pub fn classify_mention(mention: &Mention, tokens: &[Token], lexicon: &Lexicon) -> FindingLabel {
    classify_compiled(mention, tokens, &CompiledLexicon::new(lexicon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Finding;
    use crate::labeler::mentions::tokenize;

    fn polarity(sentence: &str, finding: Finding) -> FindingLabel {
        let lex = Lexicon::default();
        let compiled = CompiledLexicon::new(&lex);
        let tokens = tokenize(sentence);
        let mentions = compiled.mentions_in_sentence(0, &tokens);
        let m = mentions
            .iter()
            .find(|m| m.finding == finding)
            .expect("mention");
        classify_mention(m, &tokens, &lex)
    }

    #[test]
    fn pre_negation() {
        assert_eq!(
            polarity(
                "There is no evidence of pneumothorax.",
                Finding::Pneumothorax
            ),
            FindingLabel::Negative
        );
    }

    #[test]
    fn uncertainty_cue() {
        assert_eq!(
            polarity(
                "The consolidation could be due to pneumonia.",
                Finding::Pneumonia
            ),
            FindingLabel::Uncertain
        );
    }

    #[test]
    fn default_positive() {
        assert_eq!(
            polarity("Moderate left pleural effusion.", Finding::PleuralEffusion),
            FindingLabel::Positive
        );
    }

    #[test]
    fn post_negation() {
        assert_eq!(
            polarity("Pneumothorax is absent.", Finding::Pneumothorax),
            FindingLabel::Negative
        );
        assert_eq!(
            polarity("The heart size appears normal.", Finding::Cardiomegaly),
            FindingLabel::Negative
        );
    }

    #[test]
    fn comma_and_conjunction_break_scope() {
        assert_eq!(
            polarity(
                "No pneumothorax, moderate pleural effusion.",
                Finding::PleuralEffusion
            ),
            FindingLabel::Positive
        );
        assert_eq!(
            polarity(
                "No pneumothorax but small pleural effusion.",
                Finding::PleuralEffusion
            ),
            FindingLabel::Positive
        );
    }

    #[test]
    fn list_commas_keep_scope() {
        let s = "No focal consolidation, pleural effusion, or pneumothorax.";
        for f in [
            Finding::Consolidation,
            Finding::PleuralEffusion,
            Finding::Pneumothorax,
        ] {
            assert_eq!(polarity(s, f), FindingLabel::Negative, "{f}");
        }
        assert_eq!(
            polarity(
                "No pneumothorax, and moderate pleural effusion.",
                Finding::PleuralEffusion
            ),
            FindingLabel::Positive
        );
    }

    #[test]
    fn window_limits_reach() {
        // seven words between cue and mention
        assert_eq!(
            polarity(
                "No one two three four five six seven pneumothorax.",
                Finding::Pneumothorax
            ),
            FindingLabel::Positive
        );
        assert_eq!(
            polarity(
                "No one two three four five six pneumothorax.",
                Finding::Pneumothorax
            ),
            FindingLabel::Negative
        );
    }

    #[test]
    fn negation_beats_uncertainty() {
        assert_eq!(
            polarity(
                "No pneumothorax, which may be present.",
                Finding::Pneumothorax
            ),
            FindingLabel::Negative
        );
        assert_eq!(
            polarity("Possibly no pneumothorax.", Finding::Pneumothorax),
            FindingLabel::Negative
        );
    }
}
