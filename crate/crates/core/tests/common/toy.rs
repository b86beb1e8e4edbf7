//! A small synthetic domain: five utterance patterns over sampled worlds.
//! Three patterns are annotated for supervised warm starting; the other two
//! must be learned from denotations alone. The supervised pairs never mention
//! the held-out phrases, so their tokens are only reachable through weak
//! training.

use absparse::abstraction::{slot_clusters, AbstractPair, LexEntry, Lexicon};
use absparse::augment::{generate, instantiate};
use absparse::lang::{execute, Program};
use absparse::neural::Vocab;
use absparse::ruleparser::AnnotationSet;
use absparse::train::{SupExample, WeakExample};
use absparse::world::{sample_world, KnowledgeBase, WorldSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PATTERNS: &[(&str, &str, &str)] = &[
    (
        "there is a C-Color C-Shape",
        "Exist Filter ALL_ITEMS lambda And C-Color x C-Shape x",
        "0:0 1:1",
    ),
    (
        "there are C-Num C-Color item",
        "Equal C-Num Count Filter ALL_ITEMS lambda C-Color x",
        "0:0 1:1",
    ),
    (
        "there are C-QuantMod C-Num C-Shape",
        "C-QuantMod C-Num Count Filter ALL_ITEMS lambda C-Shape x",
        "0:0 1:1 2:2",
    ),
    // learned from denotations only
    (
        "there is a C-Shape",
        "Exist Filter ALL_ITEMS lambda C-Shape x",
        "0:0",
    ),
    (
        "there are C-Num C-Shape",
        "Equal C-Num Count Filter ALL_ITEMS lambda C-Shape x",
        "0:0 1:1",
    ),
];
pub const ANNOTATED: usize = 3;
pub const HELD_OUT: &[&str] = &["black", "triangle"];

/// The standard lexicon without the held-out phrases.
fn supervised_lexicon() -> Lexicon {
    let text: String = Lexicon::standard()
        .entries()
        .iter()
        .filter(|e| !HELD_OUT.contains(&e.phrase_text().as_str()))
        .map(|e| {
            format!(
                "{}\t{}\t{}\n",
                e.cluster.label(),
                e.phrase_text(),
                e.token.symbol()
            )
        })
        .collect();
    Lexicon::parse(&text).unwrap()
}

fn annotations(range: std::ops::Range<usize>) -> AnnotationSet {
    let text: String = PATTERNS[range]
        .iter()
        .map(|(u, p, a)| format!("{u}\n{p}\n{a}\n\n"))
        .collect();
    AnnotationSet::parse(&text, Lexicon::standard()).unwrap()
}

fn all_pairs() -> Vec<AbstractPair> {
    annotations(0..PATTERNS.len()).pairs().to_vec()
}

pub struct Toy {
    pub vocab: Vocab,
    pub sup: Vec<SupExample>,
    pub train: Vec<WeakExample>,
    pub test: Vec<WeakExample>,
}

fn world(rng: &mut ChaCha8Rng) -> KnowledgeBase {
    let counts = [
        rng.gen_range(1..5),
        rng.gen_range(1..5),
        rng.gen_range(1..5),
    ];
    sample_world(rng.gen(), &WorldSpec::scattered(counts)).unwrap()
}

/// Four KBs labelled by `p`, resampled until both labels occur.
fn kbs(p: &Program, rng: &mut ChaCha8Rng) -> Vec<(KnowledgeBase, bool)> {
    loop {
        let pairs: Vec<_> = (0..4)
            .map(|_| {
                let kb = world(rng);
                let y = execute(p, &kb).unwrap();
                (kb, y)
            })
            .collect();
        if pairs.iter().any(|p| p.1) && pairs.iter().any(|p| !p.1) {
            return pairs;
        }
    }
}

pub fn build(seed: u64, per_pattern: usize, test_per_pattern: usize, sup_n: usize) -> Toy {
    let lex = Lexicon::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: Vec<(Vec<String>, Program)> = Vec::new();
    for pair in &all_pairs() {
        for _ in 0..per_pattern + test_per_pattern {
            let fillers: Vec<&LexEntry> = slot_clusters(&pair.utterance)
                .into_iter()
                .map(|c| {
                    let options: Vec<&LexEntry> = lex.cluster_entries(c).collect();
                    *options.choose(&mut rng).unwrap()
                })
                .collect();
            let g = instantiate(pair, &fillers).unwrap();
            groups.push((g.utterance, g.program));
        }
    }
    let sup_lex = supervised_lexicon();
    let sup_pairs = generate(&annotations(0..ANNOTATED), &sup_lex, sup_n, seed ^ 0x5eed).unwrap();
    let vocab = Vocab::build(
        groups
            .iter()
            .map(|g| g.0.as_slice())
            .chain(sup_pairs.iter().map(|p| p.utterance.as_slice())),
    );
    let n = per_pattern + test_per_pattern;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, (u, p)) in groups.iter().enumerate() {
        let ex = WeakExample::new(&u.join(" "), u, &vocab, lex, kbs(p, &mut rng));
        if i % n < per_pattern {
            train.push(ex);
        } else {
            test.push(ex);
        }
    }
    train.shuffle(&mut rng);
    let sup = sup_pairs
        .iter()
        .map(|p| SupExample {
            ids: vocab.encode(&p.utterance),
            program: p.program.tokens().to_vec(),
        })
        .collect();
    Toy {
        vocab,
        sup,
        train,
        test,
    }
}
