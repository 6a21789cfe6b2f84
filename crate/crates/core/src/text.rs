//! Shared tokenization helpers.

/// Iterates maximal runs of Unicode letters/digits ("word-like tokens").
pub fn word_tokens(text: &str) -> WordTokens<'_> {
    WordTokens { text, pos: 0 }
}

pub fn count_words(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        let w = is_word_char(c);
        if w && !in_word {
            count += 1;
        }
        in_word = w;
    }
    count
}

#[inline]
pub fn is_word_char(c: char) -> bool {
    if c.is_ascii() {
        c.is_ascii_alphanumeric()
    } else {
        c.is_alphanumeric()
    }
}

pub struct WordTokens<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Iterator for WordTokens<'a> {
    type Item = &'a str;

    fn next(&mut self) -> Option<&'a str> {
        let rest = &self.text[self.pos..];
        let start = rest.char_indices().find(|&(_, c)| is_word_char(c))?.0;
        let len = rest[start..]
            .char_indices()
            .find(|&(_, c)| !is_word_char(c))
            .map_or(rest.len() - start, |(i, _)| i);
        let from = self.pos + start;
        self.pos = from + len;
        Some(&self.text[from..from + len])
    }
}

/// Strips common Latin diacritics and lowercases.
pub fn fold_char(c: char) -> char {
    let c = if c.is_ascii() {
        c.to_ascii_lowercase()
    } else {
        c.to_lowercase().next().unwrap_or(c)
    };
    match c {
        'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' => 'a',
        'ç' => 'c',
        'è' | 'é' | 'ê' | 'ë' => 'e',
        'ì' | 'í' | 'î' | 'ï' => 'i',
        'ñ' => 'n',
        'ò' | 'ó' | 'ô' | 'õ' | 'ö' => 'o',
        'ù' | 'ú' | 'û' | 'ü' => 'u',
        'ý' | 'ÿ' => 'y',
        other => other,
    }
}
