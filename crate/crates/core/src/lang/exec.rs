use super::{Compare, Inventory, Op, Program, Side, TokenId};
use crate::world::{Item, KnowledgeBase, BOX_SIZE};
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("ill-typed program at token {position}: {message}")]
    IllTyped { position: usize, message: String },
}

/// Denotation of `program` on `kb`.
pub fn execute(program: &Program, kb: &KnowledgeBase) -> Result<bool, ExecError> {
    execute_tokens(program.tokens(), kb)
}

/// Executes a token sequence that has not been type checked.
pub fn execute_tokens(tokens: &[TokenId], kb: &KnowledgeBase) -> Result<bool, ExecError> {
    let items: Vec<Item> = kb.items().copied().collect();
    let mut ends = vec![0; tokens.len()];
    let end = subtree_end(tokens, 0, &mut ends)?;
    if end != tokens.len() {
        return Err(ill(end, "trailing tokens"));
    }
    let mut ev = Evaluator {
        tokens,
        ends: &ends,
        items: &items,
        var: None,
    };
    match ev.eval(0)? {
        Value::Bool(b) => Ok(b),
        _ => Err(ill(0, "program does not return Bool")),
    }
}

fn ill(position: usize, message: &str) -> ExecError {
    ExecError::IllTyped {
        position,
        message: message.to_string(),
    }
}

fn subtree_end(tokens: &[TokenId], pos: usize, ends: &mut [usize]) -> Result<usize, ExecError> {
    let Some(t) = tokens.get(pos) else {
        return Err(ill(pos, "missing argument"));
    };
    let mut next = pos + 1;
    for _ in 0..Inventory::get().signature(*t).arity() {
        next = subtree_end(tokens, next, ends)?;
    }
    ends[pos] = next;
    Ok(next)
}

/// Items as a bitset over the knowledge base's flattened item list.
#[derive(Clone, Debug, PartialEq, Eq)]
struct ItemSet {
    words: Vec<u64>,
}

impl ItemSet {
    fn empty(n: usize) -> Self {
        ItemSet {
            words: vec![0; n.div_ceil(64).max(1)],
        }
    }

    fn full(n: usize) -> Self {
        let mut s = Self::empty(n);
        for i in 0..n {
            s.insert(i);
        }
        s
    }

    fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn members(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        (0..n).filter(move |&i| self.contains(i))
    }
}

enum Value {
    Int(i64),
    Bool(bool),
    Item(usize),
    Side(Side),
    Set(ItemSet),
}

struct Evaluator<'a> {
    tokens: &'a [TokenId],
    ends: &'a [usize],
    items: &'a [Item],
    var: Option<usize>,
}

fn overlap(a0: i32, a1: i32, b0: i32, b1: i32) -> bool {
    a0 < b1 && b0 < a1
}

fn touches_wall(it: &Item, side: Side) -> bool {
    match side {
        Side::Top => it.y == 0,
        Side::Bottom => it.bottom() == BOX_SIZE,
        Side::Left => it.x == 0,
        Side::Right => it.right() == BOX_SIZE,
        Side::Any => [Side::Top, Side::Bottom, Side::Left, Side::Right]
            .into_iter()
            .any(|s| touches_wall(it, s)),
    }
}

fn touches_corner(it: &Item, side: Side) -> bool {
    let vertical = touches_wall(it, Side::Top) || touches_wall(it, Side::Bottom);
    let horizontal = touches_wall(it, Side::Left) || touches_wall(it, Side::Right);
    match side {
        Side::Top | Side::Bottom => touches_wall(it, side) && horizontal,
        Side::Left | Side::Right => touches_wall(it, side) && vertical,
        Side::Any => vertical && horizontal,
    }
}

/// `a` is strictly higher than `b` in the same column of the same box.
fn above(a: &Item, b: &Item) -> bool {
    a.box_index == b.box_index && a.y < b.y && overlap(a.x, a.right(), b.x, b.right())
}

fn adjacent(a: &Item, b: &Item) -> bool {
    if a.box_index != b.box_index {
        return false;
    }
    let side_by_side =
        (a.right() == b.x || b.right() == a.x) && overlap(a.y, a.bottom(), b.y, b.bottom());
    let stacked =
        (a.bottom() == b.y || b.bottom() == a.y) && overlap(a.x, a.right(), b.x, b.right());
    side_by_side || stacked
}

impl Evaluator<'_> {
    fn args(&self, pos: usize) -> (usize, usize) {
        let first = pos + 1;
        let second = if first < self.tokens.len() {
            self.ends[first]
        } else {
            first
        };
        (first, second)
    }

    fn bool_at(&mut self, pos: usize) -> Result<bool, ExecError> {
        match self.eval(pos)? {
            Value::Bool(b) => Ok(b),
            _ => Err(ill(pos, "expected Bool")),
        }
    }

    fn int_at(&mut self, pos: usize) -> Result<i64, ExecError> {
        match self.eval(pos)? {
            Value::Int(n) => Ok(n),
            _ => Err(ill(pos, "expected Int")),
        }
    }

    fn item_at(&mut self, pos: usize) -> Result<usize, ExecError> {
        match self.eval(pos)? {
            Value::Item(i) => Ok(i),
            _ => Err(ill(pos, "expected Item")),
        }
    }

    fn set_at(&mut self, pos: usize) -> Result<ItemSet, ExecError> {
        match self.eval(pos)? {
            Value::Set(s) => Ok(s),
            _ => Err(ill(pos, "expected Set(Item)")),
        }
    }

    fn side_at(&mut self, pos: usize) -> Result<Side, ExecError> {
        match self.eval(pos)? {
            Value::Side(s) => Ok(s),
            _ => Err(ill(pos, "expected Side")),
        }
    }

    fn related(&mut self, pos: usize, rel: fn(&Item, &Item) -> bool) -> Result<Value, ExecError> {
        let src = self.set_at(pos + 1)?;
        let n = self.items.len();
        let mut out = ItemSet::empty(n);
        for o in 0..n {
            if src
                .members(n)
                .any(|s| o != s && rel(&self.items[o], &self.items[s]))
            {
                out.insert(o);
            }
        }
        Ok(Value::Set(out))
    }

    fn eval(&mut self, pos: usize) -> Result<Value, ExecError> {
        let n = self.items.len();
        let op = Inventory::get().signature(self.tokens[pos]).op;
        let (a, b) = self.args(pos);
        let item_pred = |ev: &mut Self, f: &dyn Fn(&Item) -> bool| -> Result<Value, ExecError> {
            let i = ev.item_at(a)?;
            Ok(Value::Bool(f(&ev.items[i])))
        };
        Ok(match op {
            Op::AllItems => Value::Set(ItemSet::full(n)),
            Op::Number(k) => Value::Int(k),
            Op::Side(s) => Value::Side(s),
            Op::Var => Value::Item(self.var.ok_or_else(|| ill(pos, "unbound variable"))?),
            Op::Lambda => return Err(ill(pos, "lambda outside Filter")),
            Op::IsColor(c) => item_pred(self, &|it| it.color == c)?,
            Op::IsShape(s) => item_pred(self, &|it| it.shape == s)?,
            Op::IsSize(s) => item_pred(self, &|it| it.size == s)?,
            Op::IsTop => {
                let i = self.item_at(a)?;
                let it = self.items[i];
                Value::Bool(!self.items.iter().any(|o| above(o, &it)))
            }
            Op::IsBottom => {
                let i = self.item_at(a)?;
                let it = self.items[i];
                Value::Bool(!self.items.iter().any(|o| above(&it, o)))
            }
            Op::TouchingWall | Op::TouchingCorner => {
                let i = self.item_at(a)?;
                let side = self.side_at(b)?;
                let it = &self.items[i];
                Value::Bool(if op == Op::TouchingWall {
                    touches_wall(it, side)
                } else {
                    touches_corner(it, side)
                })
            }
            Op::Filter => {
                let src = self.set_at(a)?;
                if Inventory::get()
                    .signature(
                        self.tokens
                            .get(b)
                            .copied()
                            .ok_or_else(|| ill(b, "missing lambda"))?,
                    )
                    .op
                    != Op::Lambda
                {
                    return Err(ill(b, "Filter expects a lambda"));
                }
                if self.var.is_some() {
                    return Err(ill(b, "nested lambda"));
                }
                let mut out = ItemSet::empty(n);
                for i in src.members(n).collect::<Vec<_>>() {
                    self.var = Some(i);
                    let keep = self.bool_at(b + 1);
                    self.var = None;
                    if keep? {
                        out.insert(i);
                    }
                }
                Value::Set(out)
            }
            Op::Count => Value::Int(self.set_at(a)?.len() as i64),
            Op::Exist => Value::Bool(self.set_at(a)?.len() > 0),
            Op::GetAbove => self.related(pos, above)?,
            Op::GetBelow => self.related(pos, |o, s| above(s, o))?,
            Op::GetTouching => self.related(pos, adjacent)?,
            Op::AllSameColor | Op::AllSameShape => {
                let s = self.set_at(a)?;
                let mut keys = s.members(n).map(|i| {
                    let it = &self.items[i];
                    if op == Op::AllSameColor {
                        it.color as u8
                    } else {
                        it.shape as u8
                    }
                });
                let first = keys.next();
                Value::Bool(first.is_none_or(|f| keys.all(|k| k == f)))
            }
            Op::ItemsInBox => {
                let k = self.int_at(a)?;
                let mut out = ItemSet::empty(n);
                for (i, it) in self.items.iter().enumerate() {
                    if it.box_index as i64 == k - 1 {
                        out.insert(i);
                    }
                }
                Value::Set(out)
            }
            Op::And => {
                let l = self.bool_at(a)?;
                let r = self.bool_at(b)?;
                Value::Bool(l && r)
            }
            Op::Or => {
                let l = self.bool_at(a)?;
                let r = self.bool_at(b)?;
                Value::Bool(l || r)
            }
            Op::Not => Value::Bool(!self.bool_at(a)?),
            Op::Compare(c) => {
                let threshold = self.int_at(a)?;
                let value = self.int_at(b)?;
                Value::Bool(Compare::holds(c, threshold, value))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Color, Shape, Size};

    fn item(b: usize, color: Color, shape: Shape, size: Size, x: i32, y: i32) -> Item {
        Item {
            color,
            shape,
            size,
            x,
            y,
            box_index: b,
        }
    }

    fn run(text: &str, kb: &KnowledgeBase) -> bool {
        execute(&Program::parse(text).unwrap(), kb).unwrap()
    }

    #[test]
    fn exist_yellow() {
        let kb = KnowledgeBase::new([
            vec![item(0, Color::Yellow, Shape::Circle, Size::Small, 40, 40)],
            vec![],
            vec![],
        ])
        .unwrap();
        assert!(run("Exist Filter ALL_ITEMS lambda IsYellow x", &kb));
        assert!(!run("Exist Filter ALL_ITEMS lambda IsBlue x", &kb));
    }

    #[test]
    fn table_one_on_constructed_kb() {
        use Color::*;
        use Shape::*;
        // Three yellow squares on walls, one in the interior, plus distractors.
        let kb = KnowledgeBase::new([
            vec![
                item(0, Yellow, Square, Size::Small, 0, 40),
                item(0, Yellow, Square, Size::Medium, 50, 50),
                item(0, Blue, Square, Size::Small, 90, 0),
            ],
            vec![item(1, Yellow, Square, Size::Big, 70, 20)],
            vec![
                item(2, Yellow, Square, Size::Small, 30, 90),
                item(2, Yellow, Circle, Size::Small, 0, 0),
            ],
        ])
        .unwrap();
        let count_wall = super::super::tests::COUNT_WALL;
        assert!(run(count_wall, &kb));
        assert!(!run(&count_wall.replacen('3', "4", 1), &kb));
        assert!(run(
            &count_wall.replacen("Equal 3", "GreaterEqual 2", 1),
            &kb
        ));
    }

    #[test]
    fn empty_kb() {
        let kb = KnowledgeBase::empty();
        assert!(!run("Equal 1 Count ALL_ITEMS", &kb));
        assert!(!run("Exist ALL_ITEMS", &kb));
        assert!(run("Not Exist ALL_ITEMS", &kb));
        assert!(run("AllSameColor ALL_ITEMS", &kb));
    }

    #[test]
    fn towers_and_touching() {
        use Color::*;
        // A two-block tower in box 0: black on the floor, yellow on top.
        let kb = KnowledgeBase::new([
            vec![
                item(0, Black, Shape::Square, Size::Medium, 40, 80),
                item(0, Yellow, Shape::Square, Size::Medium, 40, 60),
                item(0, Blue, Shape::Square, Size::Medium, 0, 80),
            ],
            vec![],
            vec![],
        ])
        .unwrap();
        assert!(run(
            "GreaterEqual 1 Count Filter ALL_ITEMS lambda And IsBlack x IsBottom x",
            &kb
        ));
        assert!(run(
            "Exist Filter ALL_ITEMS lambda And IsYellow x IsTop x",
            &kb
        ));
        assert!(!run(
            "Exist Filter ALL_ITEMS lambda And IsYellow x IsBottom x",
            &kb
        ));
        assert!(run(
            "Equal 1 Count GetAbove Filter ALL_ITEMS lambda IsBlack x",
            &kb
        ));
        assert!(run(
            "Equal 1 Count GetBelow Filter ALL_ITEMS lambda IsYellow x",
            &kb
        ));
        // Blue at x 0..20 and black at x 40..60 share no edge.
        assert!(run(
            "Equal 1 Count GetTouching Filter ALL_ITEMS lambda IsBlack x",
            &kb
        ));
        assert!(run(
            "Exist Filter ALL_ITEMS lambda IsTouchingCorner x Side.Bottom",
            &kb
        ));
        assert!(run(
            "Equal 1 Count Filter ALL_ITEMS lambda IsTouchingCorner x Side.Left",
            &kb
        ));
        assert!(run("Equal 3 Count ItemsInBox 1", &kb));
        assert!(!run("Exist ItemsInBox 2", &kb));
        assert!(!run("Exist ItemsInBox 9", &kb));
        assert!(run("AllSameShape ALL_ITEMS", &kb));
        assert!(!run("AllSameColor ALL_ITEMS", &kb));
    }

    #[test]
    fn unchecked_garbage_is_an_error() {
        let inv = Inventory::get();
        let kb = KnowledgeBase::empty();
        let toks = |s: &str| s.split(' ').map(|t| inv.id(t)).collect::<Vec<_>>();
        assert!(execute_tokens(&toks("Count ALL_ITEMS"), &kb).is_err());
        assert!(execute_tokens(&toks("Exist"), &kb).is_err());
        assert!(execute_tokens(&toks("IsYellow x"), &kb).is_err());
        assert!(execute_tokens(&toks("Exist ALL_ITEMS ALL_ITEMS"), &kb).is_err());
    }
}
