//! The token inventory of the visual-reasoning language. Every token's
//! signature and semantics is defined here and nowhere else.

use super::{SemType, TokenId};
use crate::world::{self, Color, Shape, Size};
use std::collections::HashMap;
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Function,
    Constant,
    Variable,
    Lambda,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Top,
    Bottom,
    Left,
    Right,
    Any,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Compare {
    Equal,
    GreaterEqual,
    LessEqual,
    Greater,
    Less,
}

impl Compare {
    /// `threshold` is the first argument, `value` the second:
    /// `GreaterEqual(n, m)` holds iff `m >= n`.
    pub fn holds(self, threshold: i64, value: i64) -> bool {
        match self {
            Compare::Equal => value == threshold,
            Compare::GreaterEqual => value >= threshold,
            Compare::LessEqual => value <= threshold,
            Compare::Greater => value > threshold,
            Compare::Less => value < threshold,
        }
    }
}

/// What a token computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    AllItems,
    Number(i64),
    Side(Side),
    Var,
    Lambda,
    IsColor(Color),
    IsShape(Shape),
    IsSize(Size),
    IsTop,
    IsBottom,
    TouchingWall,
    TouchingCorner,
    Filter,
    Count,
    Exist,
    GetAbove,
    GetBelow,
    GetTouching,
    AllSameColor,
    AllSameShape,
    ItemsInBox,
    And,
    Or,
    Not,
    Compare(Compare),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSignature {
    pub symbol: &'static str,
    pub args: Vec<SemType>,
    pub ret: SemType,
    pub kind: TokenKind,
    pub op: Op,
}

impl TokenSignature {
    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

pub struct Inventory {
    tokens: Vec<TokenSignature>,
    by_symbol: HashMap<&'static str, TokenId>,
}

/// Symbols accepted on input that resolve to another token.
const ALIASES: &[(&str, &str)] = &[("EqualInt", "Equal")];

fn build() -> Inventory {
    use SemType::*;
    let mut tokens = Vec::new();
    let mut add =
        |symbol: &'static str, args: &[SemType], ret: SemType, kind: TokenKind, op: Op| {
            tokens.push(TokenSignature {
                symbol,
                args: args.to_vec(),
                ret,
                kind,
                op,
            });
        };
    use TokenKind::{Constant, Function};

    add("ALL_ITEMS", &[], ItemSet, Constant, Op::AllItems);
    const NUMERALS: [&str; 9] = ["1", "2", "3", "4", "5", "6", "7", "8", "9"];
    for (i, sym) in NUMERALS.iter().enumerate() {
        add(sym, &[], Int, Constant, Op::Number(i as i64 + 1));
    }
    for (sym, side) in [
        ("Side.Top", self::Side::Top),
        ("Side.Bottom", self::Side::Bottom),
        ("Side.Left", self::Side::Left),
        ("Side.Right", self::Side::Right),
        ("Side.Any", self::Side::Any),
    ] {
        add(sym, &[], SemType::Side, Constant, Op::Side(side));
    }
    add("x", &[], Item, TokenKind::Variable, Op::Var);
    add(
        "lambda",
        &[Bool],
        ItemPredicate,
        TokenKind::Lambda,
        Op::Lambda,
    );

    for (sym, c) in [
        ("IsYellow", world::Color::Yellow),
        ("IsBlue", world::Color::Blue),
        ("IsBlack", world::Color::Black),
    ] {
        add(sym, &[Item], Bool, Function, Op::IsColor(c));
    }
    for (sym, s) in [
        ("IsSquare", world::Shape::Square),
        ("IsCircle", world::Shape::Circle),
        ("IsTriangle", world::Shape::Triangle),
    ] {
        add(sym, &[Item], Bool, Function, Op::IsShape(s));
    }
    for (sym, s) in [
        ("IsBig", world::Size::Big),
        ("IsMedium", world::Size::Medium),
        ("IsSmall", world::Size::Small),
    ] {
        add(sym, &[Item], Bool, Function, Op::IsSize(s));
    }
    add("IsTop", &[Item], Bool, Function, Op::IsTop);
    add("IsBottom", &[Item], Bool, Function, Op::IsBottom);
    add(
        "IsTouchingWall",
        &[Item, SemType::Side],
        Bool,
        Function,
        Op::TouchingWall,
    );
    add(
        "IsTouchingCorner",
        &[Item, SemType::Side],
        Bool,
        Function,
        Op::TouchingCorner,
    );

    add(
        "Filter",
        &[ItemSet, ItemPredicate],
        ItemSet,
        Function,
        Op::Filter,
    );
    add("Count", &[ItemSet], Int, Function, Op::Count);
    add("Exist", &[ItemSet], Bool, Function, Op::Exist);
    add("GetAbove", &[ItemSet], ItemSet, Function, Op::GetAbove);
    add("GetBelow", &[ItemSet], ItemSet, Function, Op::GetBelow);
    add(
        "GetTouching",
        &[ItemSet],
        ItemSet,
        Function,
        Op::GetTouching,
    );
    add("AllSameColor", &[ItemSet], Bool, Function, Op::AllSameColor);
    add("AllSameShape", &[ItemSet], Bool, Function, Op::AllSameShape);
    add("ItemsInBox", &[Int], ItemSet, Function, Op::ItemsInBox);

    add("And", &[Bool, Bool], Bool, Function, Op::And);
    add("Or", &[Bool, Bool], Bool, Function, Op::Or);
    add("Not", &[Bool], Bool, Function, Op::Not);

    for (sym, c) in [
        ("Equal", Compare::Equal),
        ("GreaterEqual", Compare::GreaterEqual),
        ("LessEqual", Compare::LessEqual),
        ("Greater", Compare::Greater),
        ("Less", Compare::Less),
    ] {
        add(sym, &[Int, Int], Bool, Function, Op::Compare(c));
    }

    let mut by_symbol = HashMap::new();
    for (i, t) in tokens.iter().enumerate() {
        by_symbol.insert(t.symbol, TokenId(i as u16));
    }
    for (alias, target) in ALIASES {
        let id = by_symbol[target];
        by_symbol.insert(alias, id);
    }
    Inventory { tokens, by_symbol }
}

impl Inventory {
    pub fn get() -> &'static Inventory {
        static INVENTORY: OnceLock<Inventory> = OnceLock::new();
        INVENTORY.get_or_init(build)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn signature(&self, id: TokenId) -> &TokenSignature {
        &self.tokens[id.index()]
    }

    /// Resolves a symbol, including aliases.
    pub fn lookup(&self, symbol: &str) -> Option<TokenId> {
        self.by_symbol.get(symbol).copied()
    }

    /// Like [`Inventory::lookup`] for symbols known to exist.
    pub fn id(&self, symbol: &str) -> TokenId {
        self.lookup(symbol)
            .unwrap_or_else(|| panic!("unknown token {symbol:?}"))
    }

    pub fn ids(&self) -> impl Iterator<Item = TokenId> {
        (0..self.tokens.len() as u16).map(TokenId)
    }

    pub fn signatures(&self) -> impl Iterator<Item = (TokenId, &TokenSignature)> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (TokenId(i as u16), t))
    }

    /// All accepted symbols with their signatures, aliases included.
    pub fn symbol_table(&self) -> HashMap<&'static str, &TokenSignature> {
        self.by_symbol
            .iter()
            .map(|(s, id)| (*s, self.signature(*id)))
            .collect()
    }
}
