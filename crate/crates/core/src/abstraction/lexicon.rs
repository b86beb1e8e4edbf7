use super::AbstractionError;
use crate::lang::{Inventory, TokenId};
use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cluster {
    Color,
    Size,
    Shape,
    Num,
    QuantMod,
    Location,
    SpaceRel,
}

impl Cluster {
    pub const ALL: [Cluster; 7] = [
        Cluster::Color,
        Cluster::Size,
        Cluster::Shape,
        Cluster::Num,
        Cluster::QuantMod,
        Cluster::Location,
        Cluster::SpaceRel,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Cluster::Color => "C-Color",
            Cluster::Size => "C-Size",
            Cluster::Shape => "C-Shape",
            Cluster::Num => "C-Num",
            Cluster::QuantMod => "C-QuantMod",
            Cluster::Location => "C-Location",
            Cluster::SpaceRel => "C-SpaceRel",
        }
    }

    pub fn from_label(label: &str) -> Option<Cluster> {
        Cluster::ALL.into_iter().find(|c| c.label() == label)
    }
}

impl fmt::Display for Cluster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexEntry {
    pub cluster: Cluster,
    /// One or more space-separated words.
    pub phrase: Vec<String>,
    pub token: TokenId,
}

impl LexEntry {
    pub fn phrase_text(&self) -> String {
        self.phrase.join(" ")
    }
}

/// Utterance phrase ↔ program token mappings grouped into clusters.
#[derive(Clone, Debug)]
pub struct Lexicon {
    entries: Vec<LexEntry>,
    by_phrase: HashMap<String, usize>,
    longest: usize,
}

const STANDARD: &str = include_str!("../../data/lexicon.tsv");

impl Lexicon {
    /// Parses `cluster<TAB>phrase<TAB>token` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, AbstractionError> {
        let inv = Inventory::get();
        let mut entries: Vec<LexEntry> = Vec::new();
        let mut by_phrase = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let bad = |message: String| AbstractionError::Lexicon {
                line: line_no,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [cluster, phrase, token] = fields[..] else {
                return Err(bad(format!(
                    "expected 3 tab-separated fields, found {}",
                    fields.len()
                )));
            };
            let cluster = Cluster::from_label(cluster)
                .ok_or_else(|| bad(format!("unknown cluster {cluster:?}")))?;
            let token = inv
                .lookup(token)
                .ok_or_else(|| bad(format!("unknown program token {token:?}")))?;
            let phrase: Vec<String> = phrase.split_whitespace().map(str::to_lowercase).collect();
            if phrase.is_empty() {
                return Err(bad("empty utterance phrase".into()));
            }
            let key = phrase.join(" ");
            if by_phrase.contains_key(&key) {
                return Err(bad(format!("{key:?} is mapped twice")));
            }
            if let Some(other) = entries.iter().find(|e| e.cluster == cluster) {
                let (a, b) = (inv.signature(other.token), inv.signature(token));
                if (&a.args, a.ret) != (&b.args, b.ret) {
                    return Err(bad(format!(
                        "{} mixes signatures of {} and {}",
                        cluster.label(),
                        a.symbol,
                        b.symbol
                    )));
                }
            }
            by_phrase.insert(key, entries.len());
            entries.push(LexEntry {
                cluster,
                phrase,
                token,
            });
        }
        let longest = entries.iter().map(|e| e.phrase.len()).max().unwrap_or(0);
        Ok(Lexicon {
            entries,
            by_phrase,
            longest,
        })
    }

    pub fn load(path: &Path) -> Result<Self, AbstractionError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// The lexicon shipped with the crate.
    pub fn standard() -> &'static Lexicon {
        static L: OnceLock<Lexicon> = OnceLock::new();
        L.get_or_init(|| Lexicon::parse(STANDARD).expect("bundled lexicon is valid"))
    }

    pub fn entries(&self) -> &[LexEntry] {
        &self.entries
    }

    pub fn cluster_entries(&self, cluster: Cluster) -> impl Iterator<Item = &LexEntry> {
        self.entries.iter().filter(move |e| e.cluster == cluster)
    }

    pub fn get(&self, phrase: &str) -> Option<&LexEntry> {
        self.by_phrase.get(phrase).map(|&i| &self.entries[i])
    }

    /// Longest entry whose phrase starts at `words[start]`.
    pub fn match_at(&self, words: &[String], start: usize) -> Option<&LexEntry> {
        let max = self.longest.min(words.len() - start);
        (1..=max)
            .rev()
            .find_map(|n| self.get(&words[start..start + n].join(" ")))
    }

    /// Whether some entry of any cluster produces `token`.
    pub fn produces(&self, token: TokenId) -> bool {
        self.entries.iter().any(|e| e.token == token)
    }

    /// Words that are part of some phrase.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .flat_map(|e| e.phrase.iter().map(String::as_str))
    }
}
