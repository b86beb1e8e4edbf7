//! A deliberately naive interpreter: parses program text into a tree and
//! evaluates it with item lists, sharing no code with the main executor.

use absparse::world::{Color, Item, KnowledgeBase, Shape, Size};

#[derive(Debug)]
pub struct Node {
    pub sym: String,
    pub kids: Vec<Node>,
}

fn arity(sym: &str) -> usize {
    match sym {
        "And" | "Or" | "Equal" | "EqualInt" | "GreaterEqual" | "LessEqual" | "Greater" | "Less"
        | "Filter" | "IsTouchingWall" | "IsTouchingCorner" => 2,
        "ALL_ITEMS" | "x" => 0,
        s if s.starts_with("Side.") => 0,
        s if s.parse::<i64>().is_ok() => 0,
        _ => 1,
    }
}

pub fn parse(text: &str) -> Node {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let mut pos = 0;
    let node = build(&toks, &mut pos);
    assert_eq!(pos, toks.len(), "trailing tokens in {text}");
    node
}

fn build(toks: &[&str], pos: &mut usize) -> Node {
    let sym = toks[*pos].to_string();
    *pos += 1;
    let kids = (0..arity(&sym)).map(|_| build(toks, pos)).collect();
    Node { sym, kids }
}

#[derive(Clone, Debug, PartialEq)]
enum V {
    B(bool),
    N(i64),
    I(Item),
    S(Vec<Item>),
    Side(String),
    Pred,
}

pub fn eval(program: &str, kb: &KnowledgeBase) -> bool {
    let all: Vec<Item> = kb.boxes().iter().flatten().copied().collect();
    match ev(&parse(program), &all, None) {
        V::B(b) => b,
        v => panic!("non-Bool result {v:?}"),
    }
}

fn wall(it: &Item, side: &str) -> bool {
    let e = it.size.extent();
    match side {
        "Top" => it.y == 0,
        "Bottom" => it.y + e == 100,
        "Left" => it.x == 0,
        "Right" => it.x + e == 100,
        _ => ["Top", "Bottom", "Left", "Right"]
            .iter()
            .any(|s| wall(it, s)),
    }
}

fn corner(it: &Item, side: &str) -> bool {
    let pairs = [
        ("Top", "Left"),
        ("Top", "Right"),
        ("Bottom", "Left"),
        ("Bottom", "Right"),
    ];
    pairs
        .iter()
        .filter(|(v, h)| side == "Any" || side == *v || side == *h)
        .any(|(v, h)| wall(it, v) && wall(it, h))
}

fn same_spot(a: &Item, b: &Item) -> bool {
    a.box_index == b.box_index && a.x == b.x && a.y == b.y
}

fn x_overlap(a: &Item, b: &Item) -> bool {
    let (ae, be) = (a.size.extent(), b.size.extent());
    (a.x..a.x + ae).any(|c| (b.x..b.x + be).contains(&c))
}

fn y_overlap(a: &Item, b: &Item) -> bool {
    let (ae, be) = (a.size.extent(), b.size.extent());
    (a.y..a.y + ae).any(|c| (b.y..b.y + be).contains(&c))
}

fn is_above(a: &Item, b: &Item) -> bool {
    a.box_index == b.box_index && a.y < b.y && x_overlap(a, b)
}

fn touching(a: &Item, b: &Item) -> bool {
    if a.box_index != b.box_index {
        return false;
    }
    let (ae, be) = (a.size.extent(), b.size.extent());
    (y_overlap(a, b) && (a.x + ae == b.x || b.x + be == a.x))
        || (x_overlap(a, b) && (a.y + ae == b.y || b.y + be == a.y))
}

fn set(v: V) -> Vec<Item> {
    match v {
        V::S(s) => s,
        v => panic!("expected set, got {v:?}"),
    }
}

fn num(v: V) -> i64 {
    match v {
        V::N(n) => n,
        v => panic!("expected int, got {v:?}"),
    }
}

fn boolean(v: V) -> bool {
    match v {
        V::B(b) => b,
        v => panic!("expected bool, got {v:?}"),
    }
}

fn item(v: V) -> Item {
    match v {
        V::I(i) => i,
        v => panic!("expected item, got {v:?}"),
    }
}

fn ev(n: &Node, all: &[Item], x: Option<Item>) -> V {
    let k = |i: usize| ev(&n.kids[i], all, x);
    let relate = |f: &dyn Fn(&Item, &Item) -> bool| {
        let src = set(k(0));
        V::S(
            all.iter()
                .filter(|o| src.iter().any(|s| !same_spot(o, s) && f(o, s)))
                .copied()
                .collect(),
        )
    };
    let s = n.sym.as_str();
    if let Ok(v) = s.parse::<i64>() {
        return V::N(v);
    }
    if let Some(side) = s.strip_prefix("Side.") {
        return V::Side(side.to_string());
    }
    match s {
        "ALL_ITEMS" => V::S(all.to_vec()),
        "x" => V::I(x.expect("unbound x")),
        "lambda" => V::Pred,
        "IsYellow" => V::B(item(k(0)).color == Color::Yellow),
        "IsBlue" => V::B(item(k(0)).color == Color::Blue),
        "IsBlack" => V::B(item(k(0)).color == Color::Black),
        "IsSquare" => V::B(item(k(0)).shape == Shape::Square),
        "IsCircle" => V::B(item(k(0)).shape == Shape::Circle),
        "IsTriangle" => V::B(item(k(0)).shape == Shape::Triangle),
        "IsBig" => V::B(item(k(0)).size == Size::Big),
        "IsMedium" => V::B(item(k(0)).size == Size::Medium),
        "IsSmall" => V::B(item(k(0)).size == Size::Small),
        "IsTop" => {
            let it = item(k(0));
            V::B(all.iter().all(|o| !is_above(o, &it)))
        }
        "IsBottom" => {
            let it = item(k(0));
            V::B(all.iter().all(|o| !is_above(&it, o)))
        }
        "IsTouchingWall" | "IsTouchingCorner" => {
            let it = item(k(0));
            let V::Side(side) = k(1) else {
                panic!("expected side")
            };
            V::B(if s == "IsTouchingWall" {
                wall(&it, &side)
            } else {
                corner(&it, &side)
            })
        }
        "Filter" => {
            let src = set(k(0));
            let body = &n.kids[1].kids[0];
            V::S(
                src.into_iter()
                    .filter(|it| boolean(ev(body, all, Some(*it))))
                    .collect(),
            )
        }
        "Count" => V::N(set(k(0)).len() as i64),
        "Exist" => V::B(!set(k(0)).is_empty()),
        "GetAbove" => relate(&is_above),
        "GetBelow" => relate(&|o, s| is_above(s, o)),
        "GetTouching" => relate(&touching),
        "AllSameColor" => {
            let s = set(k(0));
            V::B(s.windows(2).all(|w| w[0].color == w[1].color))
        }
        "AllSameShape" => {
            let s = set(k(0));
            V::B(s.windows(2).all(|w| w[0].shape == w[1].shape))
        }
        "ItemsInBox" => {
            let b = num(k(0));
            V::S(
                all.iter()
                    .filter(|it| it.box_index as i64 + 1 == b)
                    .copied()
                    .collect(),
            )
        }
        "And" => V::B(boolean(k(0)) & boolean(k(1))),
        "Or" => V::B(boolean(k(0)) | boolean(k(1))),
        "Not" => V::B(!boolean(k(0))),
        "Equal" | "EqualInt" => V::B(num(k(1)) == num(k(0))),
        "GreaterEqual" => V::B(num(k(1)) >= num(k(0))),
        "LessEqual" => V::B(num(k(1)) <= num(k(0))),
        "Greater" => V::B(num(k(1)) > num(k(0))),
        "Less" => V::B(num(k(1)) < num(k(0))),
        other => panic!("oracle does not know {other}"),
    }
}
