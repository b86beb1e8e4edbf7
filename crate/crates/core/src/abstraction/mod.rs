//! Abstract examples: utterance phrases and program tokens replaced by
//! cluster labels, with an alignment between the two sides.

mod lexicon;

pub use lexicon::{Cluster, LexEntry, Lexicon};

use crate::lang::{self, Inventory, LangError, Program, TokenId};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("program slot {slot} is aligned to missing utterance slot {target}")]
    MissingSlot { slot: usize, target: usize },
    #[error("program slot {slot} is {expected} but utterance slot holds {found}")]
    ClusterMismatch {
        slot: usize,
        expected: Cluster,
        found: Cluster,
    },
    #[error("{0:?} is not in the lexicon")]
    Unmapped(String),
    #[error("bad alignment: {0}")]
    Alignment(String),
    #[error("abstract pair at line {line}: {message}")]
    Pair { line: usize, message: String },
    #[error("unknown abstract token {0:?}")]
    UnknownToken(String),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Slot {
    /// Index into the abstract token sequence.
    pub position: usize,
    pub cluster: Cluster,
    /// The phrase that was replaced.
    pub original: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AbstractUtterance {
    pub tokens: Vec<String>,
    pub slots: Vec<Slot>,
}

impl AbstractUtterance {
    /// The abstract token sequence as one string, used as a lookup key.
    pub fn key(&self) -> String {
        self.tokens.join(" ")
    }
}

impl fmt::Display for AbstractUtterance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Clusters of the label tokens in an abstract token sequence, in order.
pub fn slot_clusters(tokens: &[String]) -> Vec<Cluster> {
    tokens
        .iter()
        .filter_map(|t| Cluster::from_label(t))
        .collect()
}

/// Replaces every lexicon phrase by its cluster label, longest phrase first.
pub fn abstract_utterance(words: &[String], lex: &Lexicon) -> AbstractUtterance {
    let mut tokens = Vec::with_capacity(words.len());
    let mut slots = Vec::new();
    let mut i = 0;
    while i < words.len() {
        match lex.match_at(words, i) {
            Some(e) => {
                slots.push(Slot {
                    position: tokens.len(),
                    cluster: e.cluster,
                    original: e.phrase_text(),
                });
                tokens.push(e.cluster.label().to_string());
                i += e.phrase.len();
            }
            None => {
                tokens.push(words[i].clone());
                i += 1;
            }
        }
    }
    AbstractUtterance { tokens, slots }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProgToken {
    Concrete(TokenId),
    Slot(Cluster),
}

impl ProgToken {
    pub fn text(self) -> &'static str {
        match self {
            ProgToken::Concrete(t) => t.symbol(),
            ProgToken::Slot(c) => c.label(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AbstractProgram {
    pub tokens: Vec<ProgToken>,
    /// For the k-th slot of `tokens`, the index of its utterance slot.
    pub alignment: Vec<usize>,
}

impl AbstractProgram {
    pub fn concrete(tokens: &[TokenId]) -> Self {
        AbstractProgram {
            tokens: tokens.iter().map(|&t| ProgToken::Concrete(t)).collect(),
            alignment: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_slots(&self) -> usize {
        self.alignment.len()
    }

    pub fn slot_clusters(&self) -> impl Iterator<Item = Cluster> + '_ {
        self.tokens.iter().filter_map(|t| match t {
            ProgToken::Slot(c) => Some(*c),
            ProgToken::Concrete(_) => None,
        })
    }

    /// `progSlot:uttSlot` pairs, or `-` without slots.
    pub fn alignment_text(&self) -> String {
        if self.alignment.is_empty() {
            return "-".into();
        }
        self.alignment
            .iter()
            .enumerate()
            .map(|(p, u)| format!("{p}:{u}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Reads the two-line text form written by `Display` and `alignment_text`.
    pub fn parse(program: &str, alignment: &str) -> Result<Self, AbstractionError> {
        let inv = Inventory::get();
        let tokens = program
            .split_whitespace()
            .map(|s| {
                Cluster::from_label(s)
                    .map(ProgToken::Slot)
                    .or_else(|| inv.lookup(s).map(ProgToken::Concrete))
                    .ok_or_else(|| AbstractionError::UnknownToken(s.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let n = tokens
            .iter()
            .filter(|t| matches!(t, ProgToken::Slot(_)))
            .count();
        let mut align = vec![None; n];
        let alignment = alignment.trim();
        if alignment != "-" {
            for pair in alignment.split_whitespace() {
                let bad = || AbstractionError::Alignment(format!("malformed pair {pair:?}"));
                let (p, u) = pair.split_once(':').ok_or_else(bad)?;
                let p: usize = p.parse().map_err(|_| bad())?;
                let u: usize = u.parse().map_err(|_| bad())?;
                match align.get_mut(p) {
                    Some(slot @ None) => *slot = Some(u),
                    Some(Some(_)) => {
                        return Err(AbstractionError::Alignment(format!(
                            "program slot {p} aligned twice"
                        )))
                    }
                    None => {
                        return Err(AbstractionError::Alignment(format!(
                            "program has {n} slots, got slot {p}"
                        )))
                    }
                }
            }
        }
        let alignment = align
            .into_iter()
            .enumerate()
            .map(|(p, u)| {
                u.ok_or_else(|| AbstractionError::Alignment(format!("program slot {p} unaligned")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AbstractProgram { tokens, alignment })
    }

    /// Checks the alignment against an utterance's slot clusters and that
    /// every instantiation is well typed.
    pub fn validate(
        &self,
        utterance_slots: &[Cluster],
        lex: &Lexicon,
    ) -> Result<(), AbstractionError> {
        for (k, (cluster, &u)) in self.slot_clusters().zip(&self.alignment).enumerate() {
            let found = *utterance_slots
                .get(u)
                .ok_or(AbstractionError::MissingSlot { slot: k, target: u })?;
            if found != cluster {
                return Err(AbstractionError::ClusterMismatch {
                    slot: k,
                    expected: cluster,
                    found,
                });
            }
        }
        // Entries of a cluster share a signature, so any representative will do.
        let tokens = self
            .tokens
            .iter()
            .map(|t| match t {
                ProgToken::Concrete(id) => Ok(*id),
                ProgToken::Slot(c) => lex
                    .cluster_entries(*c)
                    .next()
                    .map(|e| e.token)
                    .ok_or_else(|| AbstractionError::Unmapped(c.label().to_string())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        lang::check_tokens(&tokens, lang::Grammar::unbounded())?;
        Ok(())
    }
}

impl fmt::Display for AbstractProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t.text())?;
        }
        Ok(())
    }
}

/// Replaces each program token that some utterance phrase maps to by that
/// phrase's cluster. Ties go to the leftmost utterance slot not yet used,
/// then to the leftmost one.
pub fn abstract_program(x: &AbstractUtterance, z: &[TokenId], lex: &Lexicon) -> AbstractProgram {
    let mapped: Vec<Option<TokenId>> = x
        .slots
        .iter()
        .map(|s| lex.get(&s.original).map(|e| e.token))
        .collect();
    let mut used = vec![false; x.slots.len()];
    let mut tokens = Vec::with_capacity(z.len());
    let mut alignment = Vec::new();
    for &t in z {
        let candidates: Vec<usize> = (0..mapped.len())
            .filter(|&i| mapped[i] == Some(t))
            .collect();
        let pick = candidates
            .iter()
            .copied()
            .find(|&i| !used[i])
            .or_else(|| candidates.first().copied());
        match pick {
            Some(i) => {
                used[i] = true;
                tokens.push(ProgToken::Slot(x.slots[i].cluster));
                alignment.push(i);
            }
            None => tokens.push(ProgToken::Concrete(t)),
        }
    }
    AbstractProgram { tokens, alignment }
}

/// Instantiates the first `len` tokens of `z` from the phrases of `x`.
pub fn deabstract_prefix(
    z: &AbstractProgram,
    x: &AbstractUtterance,
    lex: &Lexicon,
    len: usize,
) -> Result<Vec<TokenId>, AbstractionError> {
    let mut out = Vec::with_capacity(len.min(z.len()));
    let mut k = 0;
    for t in z.tokens.iter().take(len) {
        match *t {
            ProgToken::Concrete(id) => out.push(id),
            ProgToken::Slot(cluster) => {
                let target = z.alignment[k];
                let slot = x
                    .slots
                    .get(target)
                    .ok_or(AbstractionError::MissingSlot { slot: k, target })?;
                if slot.cluster != cluster {
                    return Err(AbstractionError::ClusterMismatch {
                        slot: k,
                        expected: cluster,
                        found: slot.cluster,
                    });
                }
                let entry = lex
                    .get(&slot.original)
                    .ok_or_else(|| AbstractionError::Unmapped(slot.original.clone()))?;
                out.push(entry.token);
                k += 1;
            }
        }
    }
    Ok(out)
}

pub fn deabstract(
    z: &AbstractProgram,
    x: &AbstractUtterance,
    lex: &Lexicon,
) -> Result<Program, AbstractionError> {
    Ok(Program::new(deabstract_prefix(z, x, lex, z.len())?)?)
}

/// An abstract utterance (cluster labels, no originals) with its program.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AbstractPair {
    pub utterance: Vec<String>,
    pub program: AbstractProgram,
}

impl AbstractPair {
    pub fn key(&self) -> String {
        self.utterance.join(" ")
    }

    pub fn validate(&self, lex: &Lexicon) -> Result<(), AbstractionError> {
        self.program.validate(&slot_clusters(&self.utterance), lex)
    }
}

/// Reads blocks of three lines (abstract utterance, abstract program,
/// alignment) separated by blank lines. Lines starting with `#` are comments.
pub fn parse_pairs(text: &str, lex: &Lexicon) -> Result<Vec<AbstractPair>, AbstractionError> {
    let mut out = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    let lines = text
        .lines()
        .enumerate()
        .chain(std::iter::once((usize::MAX, "")));
    for (i, line) in lines {
        let t = line.trim();
        if t.starts_with('#') {
            continue;
        }
        if !t.is_empty() {
            block.push((i + 1, t));
            continue;
        }
        if block.is_empty() {
            continue;
        }
        let first = block[0].0;
        let err = |e: AbstractionError| AbstractionError::Pair {
            line: first,
            message: e.to_string(),
        };
        let [(_, utt), (_, prog), (_, align)] = block[..] else {
            return Err(AbstractionError::Pair {
                line: first,
                message: format!("expected 3 lines, found {}", block.len()),
            });
        };
        let pair = AbstractPair {
            utterance: utt.split_whitespace().map(String::from).collect(),
            program: AbstractProgram::parse(prog, align).map_err(err)?,
        };
        pair.validate(lex).map_err(err)?;
        out.push(pair);
        block.clear();
    }
    Ok(out)
}

pub fn write_pairs(pairs: &[AbstractPair]) -> String {
    pairs
        .iter()
        .map(|p| {
            format!(
                "{}\n{}\n{}\n",
                p.key(),
                p.program,
                p.program.alignment_text()
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}
