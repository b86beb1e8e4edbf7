use super::{Color, Item, KnowledgeBase, Shape, Size, WorldError, BOX_SIZE, NUM_BOXES};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Non-overlapping items at uniform random positions.
    Scattered,
    /// Medium squares stacked from the floor in three columns.
    Towers,
}

#[derive(Clone, Debug)]
pub struct WorldSpec {
    pub items_per_box: [usize; NUM_BOXES],
    pub colors: Vec<Color>,
    pub shapes: Vec<Shape>,
    pub sizes: Vec<Size>,
    pub layout: Layout,
    /// Placement attempts per item before giving up.
    pub max_attempts: usize,
}

impl WorldSpec {
    pub fn scattered(items_per_box: [usize; NUM_BOXES]) -> Self {
        WorldSpec {
            items_per_box,
            colors: Color::ALL.to_vec(),
            shapes: Shape::ALL.to_vec(),
            sizes: Size::ALL.to_vec(),
            layout: Layout::Scattered,
            max_attempts: 500,
        }
    }

    pub fn towers(items_per_box: [usize; NUM_BOXES]) -> Self {
        WorldSpec {
            layout: Layout::Towers,
            shapes: vec![Shape::Square],
            sizes: vec![Size::Medium],
            ..Self::scattered(items_per_box)
        }
    }
}

const TOWER_COLUMNS: [i32; 3] = [0, 40, 80];
const TOWER_HEIGHT: usize = 5;

fn overlaps(a: &Item, b: &Item) -> bool {
    a.x < b.right() && b.x < a.right() && a.y < b.bottom() && b.y < a.bottom()
}

/// Draws a knowledge base from `spec`; the same seed yields the same KB.
pub fn sample_world(seed: u64, spec: &WorldSpec) -> Result<KnowledgeBase, WorldError> {
    if spec.colors.is_empty() || spec.shapes.is_empty() || spec.sizes.is_empty() {
        return Err(WorldError::Infeasible("empty attribute inventory".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boxes: [Vec<Item>; NUM_BOXES] = Default::default();
    for (b, &count) in spec.items_per_box.iter().enumerate() {
        match spec.layout {
            Layout::Scattered => {
                for _ in 0..count {
                    let mut placed = false;
                    for _ in 0..spec.max_attempts {
                        let size = *spec.sizes.choose(&mut rng).unwrap();
                        let span = BOX_SIZE - size.extent();
                        let cand = Item {
                            color: *spec.colors.choose(&mut rng).unwrap(),
                            shape: *spec.shapes.choose(&mut rng).unwrap(),
                            size,
                            x: rng.gen_range(0..=span),
                            y: rng.gen_range(0..=span),
                            box_index: b,
                        };
                        if boxes[b].iter().all(|o| !overlaps(o, &cand)) {
                            boxes[b].push(cand);
                            placed = true;
                            break;
                        }
                    }
                    if !placed {
                        return Err(WorldError::Infeasible(format!(
                            "could not place item {} of {count} in box {b} after {} attempts",
                            boxes[b].len() + 1,
                            spec.max_attempts
                        )));
                    }
                }
            }
            Layout::Towers => {
                if count > TOWER_COLUMNS.len() * TOWER_HEIGHT {
                    return Err(WorldError::Infeasible(format!(
                        "{count} blocks do not fit in {} towers of height {TOWER_HEIGHT}",
                        TOWER_COLUMNS.len()
                    )));
                }
                let mut heights = [0usize; TOWER_COLUMNS.len()];
                for _ in 0..count {
                    let open: Vec<usize> = (0..heights.len())
                        .filter(|&c| heights[c] < TOWER_HEIGHT)
                        .collect();
                    let col = *open.choose(&mut rng).unwrap();
                    let ext = Size::Medium.extent();
                    boxes[b].push(Item {
                        color: *spec.colors.choose(&mut rng).unwrap(),
                        shape: Shape::Square,
                        size: Size::Medium,
                        x: TOWER_COLUMNS[col],
                        y: BOX_SIZE - ext * (heights[col] as i32 + 1),
                        box_index: b,
                    });
                    heights[col] += 1;
                }
            }
        }
    }
    KnowledgeBase::new(boxes)
}
