use super::{Grammar, LangError, Program, TypeStack};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Samples a complete program of at most `max_len` tokens from `grammar`.
///
/// Each step picks uniformly among the valid tokens. With probability
/// growing linearly in the current length, the pick is restricted to the
/// tokens whose shortest completion is smallest, which pulls programs
/// towards termination as they approach `max_len`.
pub fn random_program(seed: u64, max_len: usize, grammar: &Grammar) -> Result<Program, LangError> {
    let limit = max_len.min(grammar.max_len());
    let g = Grammar::new(
        crate::lang::Inventory::get()
            .ids()
            .map(|t| grammar.allows(t))
            .collect(),
        limit,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stack = TypeStack::new();
    let mut tokens = Vec::new();
    while !stack.is_complete() {
        let options = stack.valid_next(&g);
        let Some(_) = options.first() else {
            // Only possible when max_len is below the shortest program.
            return Err(LangError::Empty);
        };
        let bias = tokens.len() as f64 / limit as f64;
        let pick = if rng.gen_bool(bias.clamp(0.0, 1.0)) {
            let costs: Vec<(usize, _)> = options
                .iter()
                .map(|&t| (stack.stepped(&g, t).unwrap().min_completion(&g), t))
                .collect();
            let best = costs.iter().map(|c| c.0).min().unwrap();
            let shortest: Vec<_> = costs.iter().filter(|c| c.0 == best).map(|c| c.1).collect();
            *shortest.choose(&mut rng).unwrap()
        } else {
            *options.choose(&mut rng).unwrap()
        };
        stack.step(&g, pick)?;
        tokens.push(pick);
    }
    Program::new(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let g = Grammar::standard();
        for seed in 0..200 {
            let p = random_program(seed, 30, g).unwrap();
            assert!(p.len() <= 30);
            assert_eq!(p, random_program(seed, 30, g).unwrap());
        }
    }

    #[test]
    fn shortest_limit() {
        let g = Grammar::standard();
        for seed in 0..20 {
            let p = random_program(seed, 2, g).unwrap();
            assert_eq!(p.len(), 2, "{p}");
        }
        assert!(random_program(5, 1, g).is_err());
    }
}
