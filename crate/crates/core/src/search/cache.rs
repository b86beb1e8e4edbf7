use crate::abstraction::{
    abstract_program, AbstractProgram, AbstractUtterance, AbstractionError, Lexicon,
};
use crate::lang::TokenId;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

const HEADER: &str = "absparse-cache 1";

/// One abstract program seen for an abstract utterance, with the rewards
/// it has collected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheEntry {
    pub program: AbstractProgram,
    pub reward_sum: u64,
    pub count: u64,
}

impl CacheEntry {
    pub fn average(&self) -> f64 {
        self.reward_sum as f64 / self.count as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Bucket {
    entries: Vec<CacheEntry>,
    index: HashMap<AbstractProgram, usize>,
}

/// Abstract utterance key → abstract programs in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Cache {
    map: BTreeMap<String, Bucket>,
}

impl Bucket {
    fn push(&mut self, program: AbstractProgram, reward_sum: u64, count: u64) {
        match self.index.get(&program) {
            Some(&i) => {
                self.entries[i].reward_sum += reward_sum;
                self.entries[i].count += count;
            }
            None => {
                self.index.insert(program.clone(), self.entries.len());
                self.entries.push(CacheEntry {
                    program,
                    reward_sum,
                    count,
                });
            }
        }
    }
}

impl Cache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of abstract utterances with at least one entry.
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn num_programs(&self) -> usize {
        self.map.values().map(|b| b.entries.len()).sum()
    }

    pub fn entries(&self, key: &str) -> &[CacheEntry] {
        self.map
            .get(key)
            .map(|b| b.entries.as_slice())
            .unwrap_or(&[])
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    /// Records one binary reward for an abstract program.
    pub fn observe(&mut self, key: &str, program: AbstractProgram, reward: bool) {
        let bucket = self.map.entry(key.to_string()).or_default();
        bucket.push(program, u64::from(reward), 1);
    }

    /// Abstracts each concrete program against `x` and records its reward.
    /// Programs sharing an abstraction share one entry.
    pub fn update(
        &mut self,
        x: &AbstractUtterance,
        programs: &[(&[TokenId], bool)],
        lex: &Lexicon,
    ) {
        let key = x.key();
        for &(z, r) in programs {
            self.observe(&key, abstract_program(x, z, lex), r);
        }
    }

    /// The `d` best programs for `key`: higher average first, then higher
    /// count, then earlier insertion.
    pub fn top_d(&self, key: &str, d: usize) -> Vec<&CacheEntry> {
        // exact comparison of sum/count without rounding
        let better = |a: &CacheEntry, b: &CacheEntry| {
            (u128::from(a.reward_sum) * u128::from(b.count))
                .cmp(&(u128::from(b.reward_sum) * u128::from(a.count)))
                .then(a.count.cmp(&b.count))
        };
        let mut top: Vec<&CacheEntry> = Vec::with_capacity(d + 1);
        for e in self.entries(key) {
            // insertion order breaks remaining ties, so equal entries go after
            let pos = top.partition_point(|t| better(t, e).is_ge());
            if pos < d {
                top.insert(pos, e);
                top.truncate(d);
            }
        }
        top
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\n");
        for (key, bucket) in &self.map {
            writeln!(out, "utterance\t{key}").unwrap();
            for e in &bucket.entries {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    e.average(),
                    e.count,
                    e.program,
                    e.program.alignment_text()
                )
                .unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, AbstractionError> {
        let bad = |line: usize, message: &str| AbstractionError::Pair {
            line: line + 1,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == HEADER => {}
            _ => return Err(bad(0, "missing cache header")),
        }
        let mut cache = Cache::new();
        let mut key: Option<String> = None;
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            if let Some(k) = line.strip_prefix("utterance\t") {
                key = Some(k.to_string());
                cache.map.entry(k.to_string()).or_default();
                continue;
            }
            let k = key
                .as_ref()
                .ok_or_else(|| bad(i, "entry before utterance"))?;
            let f: Vec<&str> = line.split('\t').collect();
            let [avg, count, program, alignment] = f[..] else {
                return Err(bad(i, "expected 4 tab-separated fields"));
            };
            let avg: f64 = avg.parse().map_err(|_| bad(i, "bad average"))?;
            let count: u64 = count.parse().map_err(|_| bad(i, "bad count"))?;
            if count == 0 || !(0.0..=1.0).contains(&avg) {
                return Err(bad(i, "count must be positive and average in [0, 1]"));
            }
            let program = AbstractProgram::parse(program, alignment)?;
            let reward_sum = (avg * count as f64).round() as u64;
            let bucket = cache.map.get_mut(k).unwrap();
            if bucket.index.contains_key(&program) {
                return Err(bad(i, "duplicate program"));
            }
            bucket.push(program, reward_sum, count);
        }
        Ok(cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::abstract_utterance;
    use crate::lang::parse_tokens;

    fn words(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    fn prog(s: &str) -> AbstractProgram {
        AbstractProgram::concrete(&parse_tokens(s).unwrap())
    }

    #[test]
    fn running_averages() {
        let mut c = Cache::new();
        c.observe("k", prog("Exist ALL_ITEMS"), true);
        assert_eq!(c.entries("k")[0].average(), 1.0);
        assert_eq!(c.entries("k")[0].count, 1);
        c.observe("k", prog("Exist ALL_ITEMS"), false);
        c.observe("k", prog("Exist ALL_ITEMS"), true);
        let e = &c.entries("k")[0];
        assert_eq!((e.reward_sum, e.count), (2, 3));
        assert!((e.average() - 2.0 / 3.0).abs() < 1e-15);
        assert!(c.top_d("missing", 10).is_empty());
    }

    #[test]
    fn color_swapped_programs_merge() {
        let lex = Lexicon::standard();
        let mut c = Cache::new();
        let x = abstract_utterance(&words("there is a yellow item"), lex);
        let y = abstract_utterance(&words("there is a blue item"), lex);
        assert_eq!(x.key(), y.key());
        let zy = parse_tokens("Exist Filter ALL_ITEMS lambda IsYellow x").unwrap();
        let zb = parse_tokens("Exist Filter ALL_ITEMS lambda IsBlue x").unwrap();
        c.update(&x, &[(&zy, true)], lex);
        c.update(&y, &[(&zb, false)], lex);
        assert_eq!(c.num_programs(), 1);
        let e = &c.entries(&x.key())[0];
        assert_eq!((e.reward_sum, e.count), (1, 2));
    }

    #[test]
    fn top_d_ordering() {
        let mut c = Cache::new();
        let a = prog("Exist ALL_ITEMS");
        let b = prog("Not Exist ALL_ITEMS");
        let d = prog("Exist Filter ALL_ITEMS lambda IsBlue x");
        // averages 0.9, 0.5, 1.0
        for i in 0..10 {
            c.observe("k", a.clone(), i < 9);
            c.observe("k", b.clone(), i < 5);
        }
        c.observe("k", d.clone(), true);
        let top: Vec<_> = c
            .top_d("k", 2)
            .into_iter()
            .map(|e| e.program.clone())
            .collect();
        assert_eq!(top, vec![d.clone(), a.clone()]);
        assert_eq!(c.top_d("k", 10).len(), 3);

        let mut c = Cache::new();
        c.observe("k", b.clone(), true);
        c.observe("k", b.clone(), true);
        for _ in 0..5 {
            c.observe("k", a.clone(), true);
        }
        c.observe("k", d.clone(), true);
        c.observe("k", d.clone(), true);
        let top: Vec<_> = c
            .top_d("k", 3)
            .into_iter()
            .map(|e| e.program.clone())
            .collect();
        assert_eq!(top, vec![a, b, d]);
    }

    #[test]
    fn top_d_matches_stable_sort() {
        use rand::{Rng, SeedableRng};
        let progs: Vec<AbstractProgram> = [
            "Exist ALL_ITEMS",
            "Not Exist ALL_ITEMS",
            "Exist GetAbove ALL_ITEMS",
            "Exist GetBelow ALL_ITEMS",
            "Exist GetTouching ALL_ITEMS",
            "Not Exist GetAbove ALL_ITEMS",
        ]
        .iter()
        .map(|p| prog(p))
        .collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let mut c = Cache::new();
            for _ in 0..rng.gen_range(1..30) {
                let p = progs[rng.gen_range(0..progs.len())].clone();
                c.observe("k", p, rng.gen_bool(0.5));
            }
            let mut want: Vec<&CacheEntry> = c.entries("k").iter().collect();
            want.sort_by(|a, b| {
                b.average()
                    .partial_cmp(&a.average())
                    .unwrap()
                    .then(b.count.cmp(&a.count))
            });
            for d in 0..8 {
                assert_eq!(c.top_d("k", d), want[..d.min(want.len())].to_vec());
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let lex = Lexicon::standard();
        let mut c = Cache::new();
        let x = abstract_utterance(&words("there be exactly 2 yellow square"), lex);
        let z = parse_tokens("Equal 2 Count Filter ALL_ITEMS lambda And IsYellow x IsSquare x")
            .unwrap();
        c.update(&x, &[(&z, true)], lex);
        c.update(&x, &[(&z, false)], lex);
        c.observe("other", prog("Exist ALL_ITEMS"), false);
        let text = c.to_text();
        assert_eq!(Cache::parse(&text).unwrap(), c);
        assert!(Cache::parse("nope").is_err());
        assert!(Cache::parse(&format!("{HEADER}\n1\t1\tExist ALL_ITEMS\t-\n")).is_err());
    }
}
