use absparse::abstraction::{abstract_program, abstract_utterance, deabstract, Lexicon};
use absparse::augment::generate;
use absparse::lang::execute;
use absparse::ruleparser::{rule_parse, AnnotationSet, RuleParse};
use absparse::world::{sample_world, WorldSpec};

#[test]
fn generated_pairs_round_trip_and_execute() {
    let lex = Lexicon::standard();
    let ann = AnnotationSet::standard();
    let pairs = generate(ann, lex, 2000, 5).unwrap();
    let kbs: Vec<_> = (0..20)
        .map(|s| sample_world(s, &WorldSpec::scattered([3, 4, 5])).unwrap())
        .collect();
    for g in &pairs {
        let x = abstract_utterance(&g.utterance, lex);
        assert!(ann.get(&x.key()).is_some(), "{}", x.key());
        let z = abstract_program(&x, g.program.tokens(), lex);
        assert_eq!(deabstract(&z, &x, lex).unwrap(), g.program);
        let RuleParse::Program(parsed) = rule_parse(&g.utterance, ann, lex) else {
            panic!("no rule for {:?}", g.utterance)
        };
        for kb in &kbs {
            assert_eq!(
                execute(&parsed, kb).unwrap(),
                execute(&g.program, kb).unwrap()
            );
        }
    }
}
