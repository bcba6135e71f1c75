//! Tokenization, sentence segmentation and string normalization.
//!
//! Every component that counts, compares or matches text goes through this
//! module so that chunk sizes, overlap scores and entity keys agree.

use std::collections::HashMap;

/// Splits text into pipeline tokens: each maximal run of alphanumeric
/// characters is one token, every other non-whitespace character is a token
/// of its own.
pub fn tokens(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
            continue;
        }
        if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
        if !c.is_whitespace() {
            out.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

/// Number of pipeline tokens in `text`.
pub fn token_count(text: &str) -> usize {
    tokens(text).len()
}

/// Case-folded words (alphanumeric runs); punctuation is dropped.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

/// Whitespace-delimited word count, used for document length statistics.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Multiset of items as a count map.
pub fn bag<I, S>(items: I) -> HashMap<S, usize>
where
    I: IntoIterator<Item = S>,
    S: std::hash::Hash + Eq,
{
    let mut counts = HashMap::new();
    for item in items {
        *counts.entry(item).or_insert(0) += 1;
    }
    counts
}

/// Size of the clipped intersection of two multisets.
pub fn clipped_overlap<S: std::hash::Hash + Eq>(a: &HashMap<S, usize>, b: &HashMap<S, usize>) -> usize {
    a.iter().map(|(k, &n)| n.min(b.get(k).copied().unwrap_or(0))).sum()
}

/// Harmonic mean of clipped-count precision and recall; 0 when either side is empty.
pub fn overlap_f1(overlap: usize, candidate_len: usize, reference_len: usize) -> f64 {
    if overlap == 0 || candidate_len == 0 || reference_len == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / candidate_len as f64;
    let recall = overlap as f64 / reference_len as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Canonical entity match key: trim, collapse internal whitespace, case-fold.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Lowercase, replace punctuation with spaces and collapse whitespace.
pub fn strip_punctuation(text: &str) -> String {
    let replaced: String =
        text.chars().map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' }).collect();
    normalize_name(&replaced)
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "inc", "corp", "co", "ltd", "no", "vol", "fig",
    "approx", "dept", "univ", "gen", "gov", "sen", "rep", "mt", "ft", "jan", "feb", "mar", "apr", "jun", "jul", "aug",
    "sep", "sept", "oct", "nov", "dec", "e.g", "i.e", "u.s", "u.k", "a.m", "p.m", "vt", "wash", "calif", "col", "lt",
    "capt", "sgt",
];

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201d}' | '\u{2019}' | ')' | ']')
}

fn opens_sentence(c: char) -> bool {
    c.is_uppercase() || matches!(c, '"' | '\'' | '\u{201c}' | '\u{2018}')
}

fn is_abbreviation(text: &str, period_at: usize) -> bool {
    let before = &text[..period_at];
    let word_start = before.rfind(|c: char| c.is_whitespace() || c == '(' || c == '"').map(|i| i + 1).unwrap_or(0);
    let raw = &before[word_start..];
    let mut chars = raw.chars();
    let initial = chars.next().is_some_and(char::is_uppercase) && chars.next().is_none();
    initial || ABBREVIATIONS.contains(&raw.to_lowercase().as_str())
}

/// Splits text into trimmed sentences.
///
/// A boundary is a `.`, `?` or `!` (optionally followed by closing quotes or
/// brackets) followed by whitespace and an uppercase letter or opening quote.
/// Periods ending a known abbreviation or a single-letter initial are not
/// boundaries. A blank line is always a boundary.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    let push = |sentences: &mut Vec<String>, piece: &str| {
        let piece = piece.trim();
        if !piece.is_empty() {
            sentences.push(piece.to_string());
        }
    };
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            // blank line: newline, optional spaces, newline
            let mut j = i + 1;
            while j < chars.len() && chars[j].1 != '\n' && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j < chars.len() && chars[j].1 == '\n' {
                push(&mut sentences, &text[start..pos]);
                while j < chars.len() && chars[j].1.is_whitespace() {
                    j += 1;
                }
                start = chars.get(j).map(|&(p, _)| p).unwrap_or(text.len());
                i = j;
                continue;
            }
        }
        if matches!(c, '.' | '?' | '!') {
            let mut j = i + 1;
            while j < chars.len() && is_closing(chars[j].1) {
                j += 1;
            }
            let end = chars.get(j).map(|&(p, _)| p).unwrap_or(text.len());
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let has_gap = k > j;
            let next_opens = chars.get(k).is_some_and(|&(_, n)| opens_sentence(n));
            if has_gap && next_opens && !(c == '.' && is_abbreviation(text, pos)) {
                push(&mut sentences, &text[start..end]);
                start = chars[k].0;
                i = k;
                continue;
            }
        }
        i += 1;
    }
    push(&mut sentences, &text[start..]);
    sentences
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_split_words_and_punctuation() {
        assert_eq!(
            tokens("Eli Lilly's $2.2 billion."),
            vec!["Eli", "Lilly", "'", "s", "$", "2", ".", "2", "billion", "."]
        );
        assert!(tokens("   ").is_empty());
    }

    #[test]
    fn words_are_case_folded() {
        assert_eq!(words("The Bay, of FUNDY!"), vec!["the", "bay", "of", "fundy"]);
    }

    #[test]
    fn normalize_collapses_and_folds() {
        assert_eq!(normalize_name("  John \t Doe "), "john doe");
        assert_eq!(normalize_name("john doe"), normalize_name("JOHN   DOE"));
    }

    #[test]
    fn sentences_basic() {
        let s = split_sentences("Alpha went home. Beta stayed! Did Gamma leave? \"Yes,\" said Delta.");
        assert_eq!(s, vec!["Alpha went home.", "Beta stayed!", "Did Gamma leave?", "\"Yes,\" said Delta."]);
    }

    #[test]
    fn sentences_respect_abbreviations_and_initials() {
        let s = split_sentences("Dr. Smith met John P. Parker in the U.S. Army. They talked.");
        assert_eq!(s, vec!["Dr. Smith met John P. Parker in the U.S. Army.", "They talked."]);
    }

    #[test]
    fn sentences_need_uppercase_follower() {
        let s = split_sentences("Prices rose 2.5 percent. then fell.");
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        let s = split_sentences("He said \"stop.\" Then he left.");
        assert_eq!(s, vec!["He said \"stop.\"", "Then he left."]);
    }

    #[test]
    fn blank_line_is_boundary() {
        let s = split_sentences("Heading without period\n\nBody text here.");
        assert_eq!(s, vec!["Heading without period", "Body text here."]);
    }

    #[test]
    fn overlap_f1_edges() {
        assert_eq!(overlap_f1(0, 3, 3), 0.0);
        assert_eq!(overlap_f1(3, 3, 3), 1.0);
        assert!((overlap_f1(3, 4, 5) - 2.0 / 3.0).abs() < 1e-12);
    }
}
