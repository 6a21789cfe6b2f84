//! Bundled data files: the aligned lexicon, training prose, boilerplate
//! lines, proper nouns and URL pools used by the synthetic generator.

use std::sync::OnceLock;

use crate::lang::Lang;

const LEXICON: &str = include_str!("../data/lexicon.tsv");
const NAMES: &str = include_str!("../data/names.txt");
const BOILERPLATE: &str = include_str!("../data/boilerplate.tsv");
const DOMAINS: &str = include_str!("../data/domains.tsv");
const PROSE: [(Lang, &str); 4] = [
    (Lang::EN, include_str!("../data/prose/en.txt")),
    (Lang::DE, include_str!("../data/prose/de.txt")),
    (Lang::ES, include_str!("../data/prose/es.txt")),
    (Lang::FR, include_str!("../data/prose/fr.txt")),
];

pub const BUNDLED_LANGS: [Lang; 4] = [Lang::EN, Lang::DE, Lang::ES, Lang::FR];

fn data_lines(s: &str) -> impl Iterator<Item = &str> {
    s.lines()
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
}

/// Rows of translation-equivalent words, one column per bundled language.
#[derive(Debug)]
pub struct Lexicon {
    rows: Vec<[&'static str; 4]>,
}

impl Lexicon {
    pub fn get() -> &'static Lexicon {
        static LEX: OnceLock<Lexicon> = OnceLock::new();
        LEX.get_or_init(|| {
            let rows = data_lines(LEXICON)
                .map(|line| {
                    let cols: Vec<&str> = line.split('\t').collect();
                    assert_eq!(cols.len(), 4, "lexicon row {line:?}");
                    [cols[0], cols[1], cols[2], cols[3]]
                })
                .collect();
            Lexicon { rows }
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn column(lang: Lang) -> Option<usize> {
        BUNDLED_LANGS.iter().position(|&l| l == lang)
    }

    pub fn supports(lang: Lang) -> bool {
        Self::column(lang).is_some()
    }

    /// Word for concept `row` in `lang`.
    pub fn word(&self, row: usize, lang: Lang) -> &'static str {
        let col = Self::column(lang).expect("bundled language");
        self.rows[row][col]
    }
}

pub fn prose(lang: Lang) -> Option<&'static str> {
    PROSE.iter().find(|(l, _)| *l == lang).map(|(_, t)| *t)
}

pub fn names() -> Vec<&'static str> {
    data_lines(NAMES).map(str::trim).collect()
}

pub fn boilerplate(lang: Lang) -> Vec<&'static str> {
    data_lines(BOILERPLATE)
        .filter_map(|l| l.split_once('\t'))
        .filter(|(code, _)| code.parse::<Lang>().ok() == Some(lang))
        .map(|(_, text)| text)
        .collect()
}

/// (url prefix, weight) pools keyed by category name.
pub fn url_pool(category: &str) -> Vec<(&'static str, u32)> {
    data_lines(DOMAINS)
        .filter_map(|l| {
            let mut cols = l.split('\t');
            let (cat, prefix, weight) = (cols.next()?, cols.next()?, cols.next()?);
            (cat == category).then(|| (prefix, weight.trim().parse().unwrap_or(1)))
        })
        .collect()
}

/// Zipf-weighted lexicon words plus prose, used to train the bundled model.
pub fn training_text(lang: Lang) -> Vec<String> {
    const ZIPF_SCALE: f64 = 2400.0;
    const PROSE_REPEAT: usize = 8;
    let lex = Lexicon::get();
    let mut out = Vec::new();
    for row in 0..lex.len() {
        let count = (ZIPF_SCALE / (row as f64 + 1.0)).ceil() as usize;
        let word = lex.word(row, lang);
        out.push(vec![word; count].join(" "));
    }
    if let Some(p) = prose(lang) {
        for _ in 0..PROSE_REPEAT {
            out.push(p.to_string());
        }
    }
    out
}
