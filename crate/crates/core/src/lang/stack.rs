use super::{Inventory, SemType, TokenId, TokenKind, TypeError};
use std::sync::OnceLock;

const UNREACHABLE: u32 = u32::MAX;

/// A set of usable tokens plus a length limit. Precomputes, for every type
/// and context (inside a lambda body or not), the length of the shortest
/// completion, so that only tokens leading to completable programs are
/// offered.
#[derive(Clone, Debug)]
pub struct Grammar {
    allowed: Vec<bool>,
    max_len: usize,
    /// `[type][in_lambda]`
    min_len: [[u32; 2]; SemType::COUNT],
    /// Total shortest completion of a token's arguments, `[token][in_lambda]`.
    arg_cost: Vec<[u32; 2]>,
}

fn ctx(in_lambda: bool) -> usize {
    in_lambda as usize
}

impl Grammar {
    pub fn new(allowed: Vec<bool>, max_len: usize) -> Self {
        let inv = Inventory::get();
        assert_eq!(allowed.len(), inv.len());
        let mut min_len = [[UNREACHABLE; 2]; SemType::COUNT];
        let mut arg_cost = vec![[UNREACHABLE; 2]; inv.len()];
        loop {
            let mut changed = false;
            for (id, sig) in inv.signatures() {
                if !allowed[id.index()] {
                    continue;
                }
                for in_lambda in [false, true] {
                    let usable = match sig.kind {
                        TokenKind::Variable => in_lambda,
                        TokenKind::Lambda => !in_lambda,
                        _ => true,
                    };
                    if !usable {
                        continue;
                    }
                    let arg_ctx = in_lambda || sig.kind == TokenKind::Lambda;
                    let mut cost: u32 = 0;
                    for a in &sig.args {
                        let m = min_len[a.index()][ctx(arg_ctx)];
                        cost = if m == UNREACHABLE {
                            UNREACHABLE
                        } else {
                            cost.saturating_add(m)
                        };
                    }
                    if cost == UNREACHABLE {
                        continue;
                    }
                    arg_cost[id.index()][ctx(in_lambda)] = cost;
                    let slot = &mut min_len[sig.ret.index()][ctx(in_lambda)];
                    if cost + 1 < *slot {
                        *slot = cost + 1;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        Grammar {
            allowed,
            max_len,
            min_len,
            arg_cost,
        }
    }

    /// The full inventory with the decoder's length limit.
    pub fn standard() -> &'static Grammar {
        static G: OnceLock<Grammar> = OnceLock::new();
        G.get_or_init(|| Grammar::new(vec![true; Inventory::get().len()], super::MAX_PROGRAM_LEN))
    }

    /// The full inventory without a length limit.
    pub fn unbounded() -> &'static Grammar {
        static G: OnceLock<Grammar> = OnceLock::new();
        G.get_or_init(|| Grammar::new(vec![true; Inventory::get().len()], usize::MAX))
    }

    /// Only the named tokens are usable.
    pub fn restricted(symbols: &[&str], max_len: usize) -> Self {
        let inv = Inventory::get();
        let mut allowed = vec![false; inv.len()];
        for s in symbols {
            allowed[inv.id(s).index()] = true;
        }
        Grammar::new(allowed, max_len)
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn allows(&self, t: TokenId) -> bool {
        self.allowed[t.index()]
    }

    /// Shortest completion of `ty`, or `None` if it cannot be produced.
    pub fn min_len(&self, ty: SemType, in_lambda: bool) -> Option<usize> {
        let m = self.min_len[ty.index()][ctx(in_lambda)];
        (m != UNREACHABLE).then_some(m as usize)
    }

    fn arg_cost(&self, t: TokenId, in_lambda: bool) -> Option<usize> {
        let m = self.arg_cost[t.index()][ctx(in_lambda)];
        (m != UNREACHABLE).then_some(m as usize)
    }
}

/// Expected types of the program still to be produced; the top is the type
/// of the next token.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TypeStack {
    stack: Vec<SemType>,
    /// Stack height below which the open lambda body ends.
    scope: Option<usize>,
    emitted: usize,
}

impl Default for TypeStack {
    fn default() -> Self {
        Self::new()
    }
}

impl TypeStack {
    pub fn new() -> Self {
        TypeStack {
            stack: vec![SemType::Bool],
            scope: None,
            emitted: 0,
        }
    }

    pub fn top(&self) -> Option<SemType> {
        self.stack.last().copied()
    }

    pub fn types(&self) -> &[SemType] {
        &self.stack
    }

    pub fn is_complete(&self) -> bool {
        self.stack.is_empty()
    }

    pub fn lambda_depth(&self) -> usize {
        self.scope.is_some() as usize
    }

    /// Tokens consumed so far.
    pub fn emitted(&self) -> usize {
        self.emitted
    }

    fn in_lambda_at(&self, i: usize) -> bool {
        self.scope.is_some_and(|b| i >= b)
    }

    /// Length of the shortest way to finish the program.
    pub fn min_completion(&self, g: &Grammar) -> usize {
        self.stack
            .iter()
            .enumerate()
            .map(|(i, &ty)| {
                g.min_len(ty, self.in_lambda_at(i))
                    .unwrap_or(usize::MAX / 64)
            })
            .sum()
    }

    fn check(&self, g: &Grammar, t: TokenId, rest_min: usize) -> Result<(), TypeError> {
        let sig = Inventory::get().signature(t);
        let token = sig.symbol;
        let Some(top) = self.top() else {
            return Err(TypeError::Complete { token });
        };
        if sig.ret != top {
            return Err(TypeError::Mismatch {
                token,
                expected: top,
                offered: sig.ret,
            });
        }
        let in_lambda = self.in_lambda_at(self.stack.len() - 1);
        match sig.kind {
            TokenKind::Variable if !in_lambda => return Err(TypeError::UnboundVariable { token }),
            TokenKind::Lambda if in_lambda => return Err(TypeError::NestedLambda),
            _ => {}
        }
        if !g.allows(t) {
            return Err(TypeError::Unproductive { token });
        }
        let Some(cost) = g.arg_cost(t, in_lambda) else {
            return Err(TypeError::Unproductive { token });
        };
        if self.emitted + 1 + cost + rest_min > g.max_len() {
            return Err(TypeError::TooLong {
                token,
                limit: g.max_len(),
            });
        }
        Ok(())
    }

    fn rest_min(&self, g: &Grammar) -> usize {
        let n = self.stack.len().saturating_sub(1);
        (0..n)
            .map(|i| {
                g.min_len(self.stack[i], self.in_lambda_at(i))
                    .unwrap_or(usize::MAX / 64)
            })
            .sum()
    }

    /// Consumes `t`: pops the expected type and pushes the token's argument
    /// types so that the first argument is expected next.
    pub fn step(&mut self, g: &Grammar, t: TokenId) -> Result<(), TypeError> {
        let rest = self.rest_min(g);
        self.check(g, t, rest)?;
        let sig = Inventory::get().signature(t);
        self.stack.pop();
        if sig.kind == TokenKind::Lambda {
            self.scope = Some(self.stack.len());
            self.stack.push(SemType::Bool);
        } else {
            self.stack.extend(sig.args.iter().rev());
        }
        self.emitted += 1;
        if self.scope == Some(self.stack.len()) {
            self.scope = None;
        }
        Ok(())
    }

    pub fn stepped(&self, g: &Grammar, t: TokenId) -> Result<TypeStack, TypeError> {
        let mut s = self.clone();
        s.step(g, t)?;
        Ok(s)
    }

    /// Tokens that may come next, in inventory order.
    pub fn valid_next(&self, g: &Grammar) -> Vec<TokenId> {
        if self.is_complete() {
            return Vec::new();
        }
        let rest = self.rest_min(g);
        Inventory::get()
            .ids()
            .filter(|&t| self.check(g, t, rest).is_ok())
            .collect()
    }

    /// `valid_next` as a mask over the inventory.
    pub fn valid_mask(&self, g: &Grammar) -> Vec<bool> {
        let mut mask = vec![false; Inventory::get().len()];
        for t in self.valid_next(g) {
            mask[t.index()] = true;
        }
        mask
    }
}
