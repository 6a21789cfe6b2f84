//! Rule-based sentence segmentation.
//!
//! A sentence ends at a run of terminators (`.`, `!`, `?`, `…`), optionally
//! followed by closing quotes or brackets, when whitespace and then an
//! uppercase letter, digit or opening quote follow. Newlines always end a
//! sentence. A single `.` after a known abbreviation or a one-letter initial
//! does not end a sentence; a lowercase one-letter word ("a", "y") does.

use std::collections::HashSet;
use std::ops::Range;
use std::sync::OnceLock;

use crate::langid::LangScores;
use crate::text;

/// Spans with more word tokens than this are cut at the next whitespace.
pub const MAX_SPAN_TOKENS: usize = 2000;

const BUNDLED_ABBREVIATIONS: [&str; 4] = [
    include_str!("../data/abbrev/en.txt"),
    include_str!("../data/abbrev/de.txt"),
    include_str!("../data/abbrev/es.txt"),
    include_str!("../data/abbrev/fr.txt"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceSpan<'a> {
    pub text: &'a str,
    /// Byte offsets into the parent text.
    pub byte_range: Range<usize>,
    /// Number of word-like tokens; always at least 1.
    pub length_weight: u32,
    pub lang_scores: Option<LangScores>,
}

#[derive(Debug, Clone)]
pub struct Segmenter {
    /// Lowercased single-token abbreviations including the final period.
    single: HashSet<String>,
    /// Lowercased abbreviations spanning several tokens ("z. b.").
    multi: Vec<String>,
    /// Byte length of the longest entry in `multi`.
    multi_len: usize,
    /// Every period-final token of the `multi` entries.
    multi_tokens: HashSet<String>,
    max_tokens: usize,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::bundled().clone()
    }
}

impl Segmenter {
    /// Segmenter with the bundled en/de/es/fr abbreviation lists.
    pub fn bundled() -> &'static Segmenter {
        static BUNDLED: OnceLock<Segmenter> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            let mut seg = Segmenter::empty();
            for list in BUNDLED_ABBREVIATIONS {
                seg.add_list(list);
            }
            seg
        })
    }

    pub fn empty() -> Self {
        Segmenter {
            single: HashSet::new(),
            multi: Vec::new(),
            multi_len: 0,
            multi_tokens: HashSet::new(),
            max_tokens: MAX_SPAN_TOKENS,
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: usize) -> Self {
        self.max_tokens = max_tokens.max(1);
        self
    }

    /// Adds abbreviations from a list file: one per line, `#` starts a comment.
    pub fn add_list(&mut self, list: &str) {
        for line in list.lines() {
            let entry = line.split('#').next().unwrap_or("").trim();
            if !entry.is_empty() {
                self.add(entry);
            }
        }
    }

    pub fn add(&mut self, abbreviation: &str) {
        let mut entry = abbreviation.trim().to_lowercase();
        if !entry.ends_with('.') {
            entry.push('.');
        }
        if entry.contains(char::is_whitespace) {
            if !self.multi.contains(&entry) {
                self.multi_len = self.multi_len.max(entry.len());
                self.multi_tokens
                    .extend(entry.split_whitespace().filter(|t| t.ends_with('.')).map(String::from));
                self.multi.push(entry);
            }
        } else {
            self.single.insert(entry);
        }
    }

    pub fn segment<'a>(&self, text: &'a str) -> Vec<SentenceSpan<'a>> {
        let mut spans = Vec::new();
        let mut line_start = 0;
        for (i, b) in text.bytes().enumerate() {
            if b == b'\n' || b == b'\r' {
                self.segment_line(text, line_start..i, &mut spans);
                line_start = i + 1;
            }
        }
        self.segment_line(text, line_start..text.len(), &mut spans);
        spans
    }

    fn segment_line<'a>(&self, text: &'a str, line: Range<usize>, out: &mut Vec<SentenceSpan<'a>>) {
        if line.is_empty() {
            return;
        }
        let s = &text[line.clone()];
        let bytes = s.as_bytes();
        let mut start = 0;
        let mut pos = 0;
        // Jump between bytes that can begin a terminator; 0xE2 leads '…'.
        while let Some(off) = bytes[pos..]
            .iter()
            .position(|&b| matches!(b, b'.' | b'!' | b'?' | 0xE2))
        {
            let i = pos + off;
            let c = s[i..].chars().next().expect("char boundary");
            if !is_terminator(c) {
                pos = i + c.len_utf8();
                continue;
            }
            let after = i + c.len_utf8();
            let mut iter = s[after..].char_indices().map(|(j, d)| (j + after, d)).peekable();
            let run_start = i;
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = iter.peek() {
                if is_terminator(d) {
                    end = j + d.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            let single_period = &s[run_start..end] == ".";
            while let Some(&(j, d)) = iter.peek() {
                if is_closing(d) {
                    end = j + d.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            let mut saw_space = false;
            while let Some(&(j, d)) = iter.peek() {
                if d.is_whitespace() {
                    saw_space = true;
                    iter.next();
                } else if saw_space && is_spaced_closing(d) {
                    // French typography: "droits. » Many"
                    saw_space = false;
                    end = j + d.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            let Some(&(next_start, next)) = iter.peek() else {
                break;
            };
            pos = next_start;
            if !saw_space || !starts_sentence(next) {
                continue;
            }
            if single_period && self.is_abbreviation(&s[..run_start + 1], &s[run_start + 1..]) {
                continue;
            }
            self.push_span(text, line.start + start..line.start + end, out);
            start = next_start;
        }
        self.push_span(text, line.start + start..line.end, out);
    }

    /// `upto` ends with the period in question and `rest` is the remainder
    /// of the line.
    fn is_abbreviation(&self, upto: &str, rest: &str) -> bool {
        let token_start = upto
            .char_indices()
            .rev()
            .find(|&(_, c)| c.is_whitespace())
            .map_or(0, |(i, c)| i + c.len_utf8());
        let token = upto[token_start..].trim_start_matches(is_opening);
        let word = &token[..token.len() - 1];
        let mut chars = word.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if c.is_uppercase() {
                return true;
            }
        }
        let token = token.to_lowercase();
        if self.single.contains(&token) {
            return true;
        }
        if !self.multi_tokens.contains(&token) {
            return false;
        }
        // One extra byte keeps the character before the entry for the
        // boundary check; lowercasing can change byte lengths, hence the slack.
        let window = 2 * self.multi_len + 8;
        let lower = suffix_window(upto, window).to_lowercase();
        let rest = prefix_window(rest, window).to_lowercase();
        // The period may end the abbreviation ("z. b.") or sit inside it ("z.").
        self.multi.iter().any(|abbr| {
            abbr.match_indices('.').any(|(k, _)| {
                let (head, tail) = abbr.split_at(k + 1);
                lower.ends_with(head)
                    && rest.starts_with(tail)
                    && lower[..lower.len() - head.len()]
                        .chars()
                        .next_back()
                        .is_none_or(|c| c.is_whitespace() || is_opening(c))
            })
        })
    }

    fn push_span<'a>(&self, text: &'a str, range: Range<usize>, out: &mut Vec<SentenceSpan<'a>>) {
        let raw = &text[range.clone()];
        let trimmed_start = raw.len() - raw.trim_start().len();
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return;
        }
        let mut offset = range.start + trimmed_start;
        let mut rest = trimmed;
        loop {
            let (piece, weight, remainder) = cut_after_tokens(rest, self.max_tokens);
            if weight > 0 {
                out.push(SentenceSpan {
                    text: piece,
                    byte_range: offset..offset + piece.len(),
                    length_weight: weight as u32,
                    lang_scores: None,
                });
            }
            match remainder {
                Some(r) => {
                    let skipped = rest.len() - r.len();
                    let r_trim = r.trim_start();
                    offset += skipped + (r.len() - r_trim.len());
                    rest = r_trim;
                }
                None => break,
            }
        }
    }
}

fn suffix_window(s: &str, bytes: usize) -> &str {
    let mut start = s.len().saturating_sub(bytes);
    while !s.is_char_boundary(start) {
        start += 1;
    }
    &s[start..]
}

fn prefix_window(s: &str, bytes: usize) -> &str {
    let mut end = s.len().min(bytes);
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}

/// Splits `s` at the first whitespace following its `max`-th word token.
/// Also returns the number of word tokens in the first piece.
fn cut_after_tokens(s: &str, max: usize) -> (&str, usize, Option<&str>) {
    let mut count = 0;
    let mut in_word = false;
    let mut after_limit = false;
    for (i, c) in s.char_indices() {
        let w = text::is_word_char(c);
        if w && !in_word {
            count += 1;
        }
        in_word = w;
        if count >= max && !after_limit && !w {
            after_limit = true;
        }
        if after_limit && c.is_whitespace() {
            let piece = s[..i].trim_end();
            let rest = &s[i..];
            if rest.trim().is_empty() {
                return (s, count, None);
            }
            return (piece, count, Some(rest));
        }
    }
    (s, count, None)
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | '”' | '’' | '»' | ')' | ']')
}

fn is_spaced_closing(c: char) -> bool {
    matches!(c, '»' | '”')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '“' | '‘' | '«' | '(' | '[' | '¿' | '¡')
}

fn starts_sentence(c: char) -> bool {
    c.is_uppercase() || c.is_numeric() || is_opening(c)
}

/// Segments with the bundled abbreviation lists.
pub fn segment(text: &str) -> Vec<SentenceSpan<'_>> {
    Segmenter::bundled().segment(text)
}
