//! The typed visual-reasoning language: token inventory, prefix-notation
//! programs, the executor, and the type stack that decides which tokens may
//! come next while a program is being built.

mod exec;
mod inventory;
mod random;
mod stack;

pub use exec::{execute, execute_tokens, ExecError};
pub use inventory::{Compare, Inventory, Op, Side, TokenKind, TokenSignature};
pub use random::random_program;
pub use stack::{Grammar, TypeStack};

use std::fmt;
use thiserror::Error;

/// Longest program the decoder may produce.
pub const MAX_PROGRAM_LEN: usize = 45;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SemType {
    Int,
    Bool,
    Item,
    Size,
    Shape,
    Color,
    Side,
    /// `Set(Item)`
    ItemSet,
    /// `Func(Item, Bool)`
    ItemPredicate,
}

impl SemType {
    pub const COUNT: usize = 9;

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SemType::Int => "Int",
            SemType::Bool => "Bool",
            SemType::Item => "Item",
            SemType::Size => "Size",
            SemType::Shape => "Shape",
            SemType::Color => "Color",
            SemType::Side => "Side",
            SemType::ItemSet => "Set(Item)",
            SemType::ItemPredicate => "Func(Item,Bool)",
        };
        f.write_str(s)
    }
}

/// Index of a token in the [`Inventory`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub u16);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn symbol(self) -> &'static str {
        Inventory::get().signature(self).symbol
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("{token} returns {offered} but {expected} is expected")]
    Mismatch {
        token: &'static str,
        expected: SemType,
        offered: SemType,
    },
    #[error("{token} cannot follow a complete program")]
    Complete { token: &'static str },
    #[error("variable {token} used outside a lambda")]
    UnboundVariable { token: &'static str },
    #[error("nested lambda")]
    NestedLambda,
    #[error("{token} cannot be completed here")]
    Unproductive { token: &'static str },
    #[error("{token} would exceed the length limit of {limit}")]
    TooLong { token: &'static str, limit: usize },
    #[error("program is incomplete; {0} still expected")]
    Incomplete(SemType),
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum LangError {
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("empty program")]
    Empty,
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// A complete, well-typed program in prefix notation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Program {
    tokens: Vec<TokenId>,
}

impl Program {
    /// Checks `tokens` against the type stack of the unrestricted grammar.
    pub fn new(tokens: Vec<TokenId>) -> Result<Self, LangError> {
        check_tokens(&tokens, Grammar::unbounded())?;
        Ok(Program { tokens })
    }

    /// Parses whitespace-separated prefix tokens.
    pub fn parse(text: &str) -> Result<Self, LangError> {
        Self::new(parse_tokens(text)?)
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn into_tokens(self) -> Vec<TokenId> {
        self.tokens
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_symbols(f, &self.tokens)
    }
}

pub(crate) fn write_symbols(f: &mut fmt::Formatter<'_>, tokens: &[TokenId]) -> fmt::Result {
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            f.write_str(" ")?;
        }
        f.write_str(t.symbol())?;
    }
    Ok(())
}

/// Resolves symbols without type checking.
pub fn parse_tokens(text: &str) -> Result<Vec<TokenId>, LangError> {
    let inv = Inventory::get();
    let tokens: Vec<TokenId> = text
        .split_whitespace()
        .map(|s| {
            inv.lookup(s)
                .ok_or_else(|| LangError::UnknownToken(s.to_string()))
        })
        .collect::<Result<_, _>>()?;
    if tokens.is_empty() {
        return Err(LangError::Empty);
    }
    Ok(tokens)
}

/// Runs the type stack over `tokens` and requires it to end empty.
pub fn check_tokens(tokens: &[TokenId], grammar: &Grammar) -> Result<(), LangError> {
    if tokens.is_empty() {
        return Err(LangError::Empty);
    }
    let mut stack = TypeStack::new();
    for &t in tokens {
        stack.step(grammar, t)?;
    }
    match stack.top() {
        None => Ok(()),
        Some(ty) => Err(TypeError::Incomplete(ty).into()),
    }
}
