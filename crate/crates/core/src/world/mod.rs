//! Knowledge bases: boxes of attributed items, corpus ingestion and a seeded
//! synthetic world sampler.

mod corpus;
mod sample;

pub use corpus::{
    load_corpus, parse_canonical, parse_cnlvr, write_canonical, AdapterConfig, CorpusFormat,
    Example,
};
pub use sample::{sample_world, WorldSpec};

use std::fmt;
use thiserror::Error;

/// Side length of a box in grid units.
pub const BOX_SIZE: i32 = 100;
pub const NUM_BOXES: usize = 3;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("record {index}: {message}")]
    Malformed { index: usize, message: String },
    #[error("record {index}: unknown {field} code {code:?}")]
    UnknownCode {
        index: usize,
        field: &'static str,
        code: String,
    },
    #[error("invalid knowledge base: {0}")]
    Invalid(String),
    #[error("infeasible world spec: {0}")]
    Infeasible(String),
    #[error("adapter config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Color {
    Yellow,
    Blue,
    Black,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    Square,
    Circle,
    Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Size {
    Small,
    Medium,
    Big,
}

macro_rules! attribute_codes {
    ($ty:ident { $($variant:ident => $code:literal),* $(,)? }) => {
        impl $ty {
            pub const ALL: [$ty; 3] = [$($ty::$variant),*];

            /// Canonical lowercase code.
            pub fn code(self) -> &'static str {
                match self {
                    $($ty::$variant => $code),*
                }
            }

            pub fn from_code(code: &str) -> Option<$ty> {
                match code {
                    $($code => Some($ty::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

attribute_codes!(Color { Yellow => "yellow", Blue => "blue", Black => "black" });
attribute_codes!(Shape { Square => "square", Circle => "circle", Triangle => "triangle" });
attribute_codes!(Size { Small => "small", Medium => "medium", Big => "big" });

impl Size {
    /// Side length of the item's bounding square.
    pub fn extent(self) -> i32 {
        match self {
            Size::Small => 10,
            Size::Medium => 20,
            Size::Big => 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Item {
    pub color: Color,
    pub shape: Shape,
    pub size: Size,
    /// Left edge, grid units from the box's left wall.
    pub x: i32,
    /// Top edge, grid units from the box's top wall.
    pub y: i32,
    pub box_index: usize,
}

impl Item {
    pub fn extent(&self) -> i32 {
        self.size.extent()
    }

    pub fn right(&self) -> i32 {
        self.x + self.extent()
    }

    pub fn bottom(&self) -> i32 {
        self.y + self.extent()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.x < 0 || self.y < 0 || self.right() > BOX_SIZE || self.bottom() > BOX_SIZE {
            return Err(WorldError::Invalid(format!(
                "item at ({}, {}) with extent {} leaves the {BOX_SIZE}x{BOX_SIZE} box",
                self.x,
                self.y,
                self.extent()
            )));
        }
        if self.box_index >= NUM_BOXES {
            return Err(WorldError::Invalid(format!(
                "box index {} out of range",
                self.box_index
            )));
        }
        Ok(())
    }
}

/// Three boxes of items.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct KnowledgeBase {
    boxes: [Vec<Item>; NUM_BOXES],
}

impl KnowledgeBase {
    pub fn new(boxes: [Vec<Item>; NUM_BOXES]) -> Result<Self, WorldError> {
        for (b, items) in boxes.iter().enumerate() {
            for item in items {
                item.validate()?;
                if item.box_index != b {
                    return Err(WorldError::Invalid(format!(
                        "item with box_index {} stored in box {b}",
                        item.box_index
                    )));
                }
            }
        }
        Ok(KnowledgeBase { boxes })
    }

    pub fn empty() -> Self {
        KnowledgeBase::default()
    }

    pub fn boxes(&self) -> &[Vec<Item>; NUM_BOXES] {
        &self.boxes
    }

    /// Items of all boxes, box by box.
    pub fn items(&self) -> impl Iterator<Item = &Item> + '_ {
        self.boxes.iter().flatten()
    }

    pub fn num_items(&self) -> usize {
        self.boxes.iter().map(Vec::len).sum()
    }
}

impl fmt::Display for KnowledgeBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (b, items) in self.boxes.iter().enumerate() {
            write!(f, "[box {b}:")?;
            for it in items {
                write!(
                    f,
                    " {:?}/{:?}/{:?}@({},{})",
                    it.color, it.shape, it.size, it.x, it.y
                )?;
            }
            write!(f, "]")?;
        }
        Ok(())
    }
}

/// One utterance paired with every (KB, label) it was annotated against.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleGroup {
    pub raw_utterance: String,
    /// Tokens after preprocessing; empty until the caller fills it in.
    pub utterance: Vec<String>,
    pub pairs: Vec<(KnowledgeBase, bool)>,
}

impl ExampleGroup {
    /// Only groups with exactly four pairs take part in tied-reward training.
    pub fn tied_eligible(&self) -> bool {
        self.pairs.len() == 4
    }
}

/// Groups examples by identical raw utterance, in order of first appearance.
pub fn group_by_utterance(examples: &[Example]) -> Vec<ExampleGroup> {
    let mut index: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    let mut groups: Vec<ExampleGroup> = Vec::new();
    for ex in examples {
        let slot = *index.entry(ex.sentence.as_str()).or_insert_with(|| {
            groups.push(ExampleGroup {
                raw_utterance: ex.sentence.clone(),
                utterance: Vec::new(),
                pairs: Vec::new(),
            });
            groups.len() - 1
        });
        groups[slot].pairs.push((ex.kb.clone(), ex.label));
    }
    for g in &groups {
        if !g.tied_eligible() {
            log::debug!(
                "utterance {:?} has {} pairs; excluded from tied reward",
                g.raw_utterance,
                g.pairs.len()
            );
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(b: usize, x: i32, y: i32, size: Size) -> Item {
        Item {
            color: Color::Yellow,
            shape: Shape::Square,
            size,
            x,
            y,
            box_index: b,
        }
    }

    fn example(s: &str) -> Example {
        Example {
            sentence: s.to_string(),
            kb: KnowledgeBase::empty(),
            label: true,
        }
    }

    #[test]
    fn rejects_items_leaving_the_box() {
        assert!(item(0, 70, 0, Size::Big).validate().is_ok());
        assert!(item(0, 71, 0, Size::Big).validate().is_err());
        assert!(item(0, -1, 0, Size::Small).validate().is_err());
        assert!(item(3, 0, 0, Size::Small).validate().is_err());
    }

    #[test]
    fn rejects_misplaced_box_index() {
        let boxes = [vec![item(1, 0, 0, Size::Small)], vec![], vec![]];
        assert!(KnowledgeBase::new(boxes).is_err());
    }

    #[test]
    fn groups_two_utterances_of_four() {
        let mut exs = Vec::new();
        for _ in 0..4 {
            exs.push(example("a"));
            exs.push(example("b"));
        }
        let groups = group_by_utterance(&exs);
        assert_eq!(groups.len(), 2);
        assert!(groups
            .iter()
            .all(|g| g.pairs.len() == 4 && g.tied_eligible()));
        assert_eq!(groups[0].raw_utterance, "a");
    }

    #[test]
    fn flags_group_of_five() {
        let exs: Vec<_> = (0..5).map(|_| example("same")).collect();
        let groups = group_by_utterance(&exs);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].pairs.len(), 5);
        assert!(!groups[0].tied_eligible());
    }
}
