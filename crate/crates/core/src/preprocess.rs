//! Utterance normalization: lowercase, spelling correction against frequent
//! training words, rule-based lemmatization and rare-word replacement.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const UNK: &str = "<unk>";
/// Words seen fewer times than this in training are rare.
pub const MIN_COUNT: usize = 5;

/// Lowercases and splits on anything that is not a letter or digit.
pub fn tokenize(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

const IRREGULAR: &[(&str, &str)] = &[
    ("boxes", "box"),
    ("having", "have"),
    ("has", "have"),
    ("lying", "lie"),
    ("being", "be"),
    ("children", "child"),
    ("placed", "place"),
    ("placing", "place"),
    ("shaped", "shape"),
    ("sized", "size"),
    ("colored", "color"),
    ("coloured", "color"),
    ("colour", "color"),
    ("colours", "color"),
];

const KEEP: &[&str] = &[
    "always",
    "across",
    "perhaps",
    "various",
    "thus",
    "plus",
    "besides",
    "yes",
    "does",
    "is",
    "was",
    "its",
    "this",
    "towards",
    "as",
    "us",
    "bus",
    "thing",
    "nothing",
    "something",
    "anything",
    "everything",
    "ceiling",
    "string",
    "ring",
    "king",
    "need",
    "red",
    "bed",
    "exactly",
    "less",
    "unless",
    "series",
    "species",
    "during",
];

fn strip_once(w: &str) -> String {
    if let Some((_, l)) = IRREGULAR.iter().find(|(s, _)| *s == w) {
        return l.to_string();
    }
    if KEEP.contains(&w) || w.len() <= 3 || !w.chars().all(|c| c.is_ascii_alphabetic()) {
        return w.to_string();
    }
    if let Some(stem) = w.strip_suffix("ies") {
        if stem.len() >= 2 {
            return format!("{stem}y");
        }
    }
    for suf in ["ches", "shes", "xes", "zes", "sses"] {
        if w.ends_with(suf) {
            return w[..w.len() - 2].to_string();
        }
    }
    if w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is") {
        return w[..w.len() - 1].to_string();
    }
    for suf in ["ing", "ed"] {
        if let Some(stem) = w.strip_suffix(suf) {
            if stem.len() >= 3 && stem.chars().any(|c| "aeiouy".contains(c)) {
                return undouble(stem);
            }
        }
    }
    w.to_string()
}

/// "sitt" -> "sit", but "stall" and "pass" keep their pair.
fn undouble(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 2
        && b[n - 1] == b[n - 2]
        && !b"lsz".contains(&b[n - 1])
        && !b"aeiou".contains(&b[n - 1])
    {
        return stem[..n - 1].to_string();
    }
    stem.to_string()
}

/// Lemma of a lowercase word; applying it twice changes nothing.
pub fn lemmatize(word: &str) -> String {
    let mut w = word.to_string();
    loop {
        let next = strip_once(&w);
        if next == w {
            return w;
        }
        w = next;
    }
}

fn edits1(word: &str) -> BTreeSet<String> {
    const LETTERS: &str = "abcdefghijklmnopqrstuvwxyz";
    let chars: Vec<char> = word.chars().collect();
    let mut out = BTreeSet::new();
    for i in 0..=chars.len() {
        let (l, r) = (&chars[..i], &chars[i..]);
        let s = |v: &[char]| v.iter().collect::<String>();
        if !r.is_empty() {
            out.insert(s(l) + &s(&r[1..]));
            for c in LETTERS.chars() {
                out.insert(s(l) + &c.to_string() + &s(&r[1..]));
            }
        }
        if r.len() >= 2 {
            out.insert(s(l) + &r[1].to_string() + &r[0].to_string() + &s(&r[2..]));
        }
        for c in LETTERS.chars() {
            out.insert(s(l) + &c.to_string() + &s(r));
        }
    }
    out.remove(word);
    out
}

/// Word statistics of the training split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    surface: BTreeMap<String, usize>,
    lemmas: BTreeMap<String, usize>,
    /// Never corrected or replaced by UNK.
    protected: BTreeSet<String>,
}

impl Preprocessor {
    /// Counts words of raw training utterances. `protected` lists words
    /// exempt from correction and UNK, e.g. lexicon words.
    pub fn fit<'a>(
        train: impl IntoIterator<Item = &'a str>,
        protected: impl IntoIterator<Item = String>,
    ) -> Self {
        let mut p = Preprocessor {
            protected: protected.into_iter().collect(),
            ..Default::default()
        };
        for raw in train {
            for w in tokenize(raw) {
                *p.lemmas.entry(lemmatize(&w)).or_default() += 1;
                *p.surface.entry(w).or_default() += 1;
            }
        }
        p
    }

    fn exempt(&self, w: &str) -> bool {
        w == UNK || self.protected.contains(w) || w.chars().all(|c| c.is_ascii_digit())
    }

    fn frequent_lemma(&self, w: &str) -> bool {
        self.lemmas.get(w).copied().unwrap_or(0) >= MIN_COUNT
    }

    /// Most frequent training word at edit distance 1, if `w` is rare.
    pub fn correct(&self, w: &str) -> String {
        let count = |s: &str| self.surface.get(s).copied().unwrap_or(0);
        if self.exempt(w) || count(w) >= MIN_COUNT || self.frequent_lemma(w) {
            return w.to_string();
        }
        edits1(w)
            .into_iter()
            .filter(|c| count(c) >= MIN_COUNT)
            .max_by(|a, b| count(a).cmp(&count(b)).then_with(|| b.cmp(a)))
            .unwrap_or_else(|| w.to_string())
    }

    pub fn process(&self, raw: &str) -> Vec<String> {
        self.process_tokens(&tokenize(raw))
    }

    pub fn process_tokens(&self, words: &[String]) -> Vec<String> {
        words
            .iter()
            .map(|w| {
                let lemma = lemmatize(&self.correct(&w.to_lowercase()));
                if self.exempt(&lemma) || self.frequent_lemma(&lemma) {
                    lemma
                } else {
                    UNK.to_string()
                }
            })
            .collect()
    }

    pub fn lemma_count(&self, lemma: &str) -> usize {
        self.lemmas.get(lemma).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lemmas() {
        for (w, l) in [
            ("squares", "square"),
            ("touching", "touch"),
            ("touches", "touch"),
            ("boxes", "box"),
            ("blocks", "block"),
            ("stacked", "stack"),
            ("sitting", "sit"),
            ("exactly", "exactly"),
            ("less", "less"),
            ("is", "is"),
            ("are", "are"),
            ("3", "3"),
            ("bodies", "body"),
        ] {
            assert_eq!(lemmatize(w), l, "{w}");
        }
    }

    #[test]
    fn tokenizer() {
        assert_eq!(
            tokenize("There are exactly 3 Yellow squares, touching the wall."),
            ["there", "are", "exactly", "3", "yellow", "squares", "touching", "the", "wall"]
        );
    }

    fn fitted() -> Preprocessor {
        let mut train = vec!["there is a yellow square"; 6];
        train.extend(["a tower with four blocks"; 4]);
        Preprocessor::fit(train, ["medium".to_string()])
    }

    #[test]
    fn squares_become_square() {
        let p = fitted();
        assert_eq!(p.process("Squares"), ["square"]);
    }

    #[test]
    fn typo_is_corrected() {
        let p = fitted();
        assert_eq!(p.correct("yello"), "yellow");
        assert_eq!(p.process("a yello square"), ["a", "yellow", "square"]);
        // neighbours below the frequency threshold are not used
        assert_eq!(p.correct("towr"), "towr");
    }

    #[test]
    fn rare_words_become_unk() {
        let p = fitted();
        assert_eq!(p.lemma_count("tower"), 4);
        assert_eq!(p.process("tower"), [UNK]);
        assert_eq!(p.process("medium 7 tower"), ["medium", "7", UNK]);
    }

    #[test]
    fn idempotent() {
        let p = fitted();
        for raw in [
            "a yello squares sitting",
            "Towers of 4 BLOCKS",
            "<unk> square",
        ] {
            let once = p.process(raw);
            assert_eq!(p.process_tokens(&once), once, "{raw}");
        }
    }
}
