//! Exact-match parsing over annotated abstract examples, falling back to
//! the majority verdict TRUE.

use crate::abstraction::{
    abstract_utterance, deabstract, parse_pairs, AbstractPair, AbstractionError, Lexicon,
};
use crate::lang::{execute, ExecError, Program};
use crate::world::KnowledgeBase;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

#[derive(Clone, Debug)]
pub struct AnnotationSet {
    pairs: Vec<AbstractPair>,
    index: HashMap<String, usize>,
}

const STANDARD: &str = include_str!("../data/annotations.txt");

impl AnnotationSet {
    pub fn new(pairs: Vec<AbstractPair>) -> Result<Self, AbstractionError> {
        let mut index = HashMap::new();
        for (i, p) in pairs.iter().enumerate() {
            if index.insert(p.key(), i).is_some() {
                return Err(AbstractionError::Pair {
                    line: 0,
                    message: format!("utterance {:?} annotated twice", p.key()),
                });
            }
        }
        Ok(AnnotationSet { pairs, index })
    }

    pub fn parse(text: &str, lex: &Lexicon) -> Result<Self, AbstractionError> {
        Self::new(parse_pairs(text, lex)?)
    }

    pub fn load(path: &Path, lex: &Lexicon) -> Result<Self, AbstractionError> {
        Self::parse(&fs::read_to_string(path)?, lex)
    }

    /// The annotations shipped with the crate, checked against the standard lexicon.
    pub fn standard() -> &'static AnnotationSet {
        static A: OnceLock<AnnotationSet> = OnceLock::new();
        A.get_or_init(|| {
            AnnotationSet::parse(STANDARD, Lexicon::standard())
                .expect("bundled annotations are valid")
        })
    }

    pub fn pairs(&self) -> &[AbstractPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&AbstractPair> {
        self.index.get(key).map(|&i| &self.pairs[i])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RuleParse {
    Program(Program),
    /// No annotation matched: predict TRUE.
    Fallback,
}

impl RuleParse {
    pub fn denotation(&self, kb: &KnowledgeBase) -> Result<bool, ExecError> {
        match self {
            RuleParse::Program(p) => execute(p, kb),
            RuleParse::Fallback => Ok(true),
        }
    }
}

pub fn rule_parse(x: &[String], annotations: &AnnotationSet, lex: &Lexicon) -> RuleParse {
    let abs = abstract_utterance(x, lex);
    let Some(pair) = annotations.get(&abs.key()) else {
        return RuleParse::Fallback;
    };
    match deabstract(&pair.program, &abs, lex) {
        Ok(p) => RuleParse::Program(p),
        Err(e) => {
            log::debug!("annotation for {:?} does not instantiate: {e}", abs.key());
            RuleParse::Fallback
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coverage {
    pub total: usize,
    /// Abstract utterances with their counts, most frequent first, ties
    /// broken lexicographically.
    pub histogram: Vec<(String, usize)>,
}

impl Coverage {
    pub fn distinct(&self) -> usize {
        self.histogram.len()
    }

    /// Fraction of utterances covered by the `k` most frequent patterns.
    pub fn top_k(&self, k: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let covered: usize = self.histogram.iter().take(k).map(|(_, c)| c).sum();
        covered as f64 / self.total as f64
    }
}

pub fn coverage_report(utterances: &[Vec<String>], lex: &Lexicon) -> Coverage {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for u in utterances {
        *counts.entry(abstract_utterance(u, lex).key()).or_default() += 1;
    }
    let mut histogram: Vec<(String, usize)> = counts.into_iter().collect();
    histogram.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Coverage {
        total: utterances.len(),
        histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::lemmatize;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn shipped_annotations_are_normalized() {
        let lex = Lexicon::standard();
        let a = AnnotationSet::standard();
        assert!(a.len() >= 40, "{}", a.len());
        for p in a.pairs() {
            assert_eq!(abstract_utterance(&p.utterance, lex).tokens, p.utterance);
            for w in &p.utterance {
                if !w.starts_with("C-") {
                    assert_eq!(&lemmatize(w), w, "{}", p.key());
                }
            }
        }
    }

    #[test]
    fn count_touching_wall() {
        let lex = Lexicon::standard();
        let a = AnnotationSet::standard();
        let got = rule_parse(
            &words("there are exactly 3 yellow square touch the wall"),
            a,
            lex,
        );
        let want = Program::parse(
            "Equal 3 Count Filter ALL_ITEMS lambda And And IsYellow x IsSquare x IsTouchingWall x Side.Any",
        )
        .unwrap();
        assert_eq!(got, RuleParse::Program(want));
        let variant = rule_parse(
            &words("there are at least 2 blue circle touch the wall"),
            a,
            lex,
        );
        assert_eq!(
            variant,
            RuleParse::Program(
                Program::parse(
                    "GreaterEqual 2 Count Filter ALL_ITEMS lambda And And IsBlue x IsCircle x IsTouchingWall x Side.Any"
                )
                .unwrap()
            )
        );
    }

    #[test]
    fn varied_constructions() {
        let lex = Lexicon::standard();
        let a = AnnotationSet::standard();
        let cases = [
            (
                "there is a small yellow item not touch any wall",
                "Exist Filter ALL_ITEMS lambda And And IsYellow x IsSmall x Not IsTouchingWall x Side.Any",
            ),
            (
                "one tower have a yellow base",
                "GreaterEqual 1 Count Filter ALL_ITEMS lambda And IsYellow x IsBottom x",
            ),
        ];
        for (x, z) in cases {
            assert_eq!(
                rule_parse(&words(x), a, lex),
                RuleParse::Program(Program::parse(z).unwrap()),
                "{x}"
            );
        }
    }

    #[test]
    fn unmatched_falls_back_to_true() {
        let lex = Lexicon::standard();
        let r = rule_parse(&words("the sky is green"), AnnotationSet::standard(), lex);
        assert_eq!(r, RuleParse::Fallback);
        assert!(r.denotation(&KnowledgeBase::empty()).unwrap());
    }

    #[test]
    fn duplicate_annotation_rejected() {
        let lex = Lexicon::standard();
        let block = "there is a C-Shape\nExist Filter ALL_ITEMS lambda C-Shape x\n0:0\n";
        assert!(AnnotationSet::parse(&format!("{block}\n{block}"), lex).is_err());
    }

    #[test]
    fn coverage() {
        let lex = Lexicon::standard();
        let same = vec![words("there is a yellow square"); 4];
        let c = coverage_report(&same, lex);
        assert_eq!((c.distinct(), c.top_k(1)), (1, 1.0));

        let disjoint: Vec<Vec<String>> = (0..10).map(|i| words(&format!("pattern {i}x"))).collect();
        let c = coverage_report(&disjoint, lex);
        for k in 0..=10 {
            assert!((c.top_k(k) - k as f64 / 10.0).abs() < 1e-12);
        }

        let mixed = vec![
            words("there is a blue circle"),
            words("b"),
            words("there is a yellow square"),
            words("a"),
        ];
        let c = coverage_report(&mixed, lex);
        assert_eq!(
            c.histogram,
            vec![
                ("there is a C-Color C-Shape".to_string(), 2),
                ("a".to_string(), 1),
                ("b".to_string(), 1)
            ]
        );
    }
}
