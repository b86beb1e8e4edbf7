//! Glue between corpora, preprocessing and the models: building training
//! units and saving models together with their preprocessing state.

use crate::abstraction::Lexicon;
use crate::augment::GeneratedPair;
use crate::neural::{
    cbow_embeddings, CbowConfig, Checkpoint, Dims, NeuralError, Parser, Reranker, Vocab,
};
use crate::preprocess::Preprocessor;
use crate::ruleparser::{rule_parse, AnnotationSet, RuleParse};
use crate::train::{SupExample, WeakExample};
use crate::world::{group_by_utterance, Example};
use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("checkpoint holds a {found}, expected a {expected}")]
    Kind {
        expected: &'static str,
        found: String,
    },
    #[error("bad checkpoint metadata: {0}")]
    Meta(String),
}

/// Fits preprocessing on the training utterances; lexicon words are kept
/// as they are.
pub fn fit_preprocessor(train: &[Example], lex: &Lexicon) -> Preprocessor {
    Preprocessor::fit(
        train.iter().map(|e| e.sentence.as_str()),
        lex.words().map(String::from),
    )
}

/// Groups examples by utterance and preprocesses each utterance.
pub fn weak_examples(
    examples: &[Example],
    pre: &Preprocessor,
    vocab: &Vocab,
    lex: &Lexicon,
) -> Vec<WeakExample> {
    group_by_utterance(examples)
        .into_iter()
        .map(|g| {
            let words = pre.process(&g.raw_utterance);
            WeakExample::new(&g.raw_utterance, &words, vocab, lex, g.pairs)
        })
        .collect()
}

pub fn sup_examples(pairs: &[GeneratedPair], pre: &Preprocessor, vocab: &Vocab) -> Vec<SupExample> {
    pairs
        .iter()
        .map(|p| SupExample {
            ids: vocab.encode(&pre.process_tokens(&p.utterance)),
            program: p.program.tokens().to_vec(),
        })
        .collect()
}

/// Vocabulary over preprocessed training utterances and generated ones.
/// Training utterances that match an annotated pattern, paired with the
/// annotated program. Supervision without augmentation.
pub fn annotated_pairs(
    train: &[Example],
    pre: &Preprocessor,
    ann: &AnnotationSet,
    lex: &Lexicon,
) -> Vec<GeneratedPair> {
    group_by_utterance(train)
        .iter()
        .filter_map(|g| {
            let utterance = pre.process(&g.raw_utterance);
            match rule_parse(&utterance, ann, lex) {
                RuleParse::Program(program) => Some(GeneratedPair { utterance, program }),
                RuleParse::Fallback => None,
            }
        })
        .collect()
}

pub fn build_vocab(train: &[Example], generated: &[GeneratedPair], pre: &Preprocessor) -> Vocab {
    let utterances: Vec<Vec<String>> = train
        .iter()
        .map(|e| pre.process(&e.sentence))
        .chain(generated.iter().map(|p| pre.process_tokens(&p.utterance)))
        .collect();
    Vocab::build(utterances.iter().map(Vec::as_slice))
}

/// Replaces the parser's utterance embeddings by CBOW vectors trained on
/// `sentences`.
pub fn init_cbow(parser: &mut Parser, sentences: &[Vec<usize>], seed: u64) {
    let cfg = CbowConfig {
        dim: parser.dims.emb,
        seed,
        ..CbowConfig::default()
    };
    parser.enc.emb = cbow_embeddings(sentences, parser.vocab_size(), &cfg);
}

/// A trained model with everything needed to parse raw text.
#[derive(Clone, Debug)]
pub struct Model<M> {
    pub pre: Preprocessor,
    pub vocab: Vocab,
    pub net: M,
}

pub trait Kind: crate::neural::Params + Sized {
    const KIND: &'static str;
    fn dims(&self) -> Dims;
    fn rebuild(dims: Dims, ck: Checkpoint) -> Result<Self, NeuralError>;
}

impl Kind for Parser {
    const KIND: &'static str = "parser";
    fn dims(&self) -> Dims {
        self.dims
    }
    fn rebuild(dims: Dims, ck: Checkpoint) -> Result<Self, NeuralError> {
        Parser::from_tensors(dims, ck.tensors)
    }
}

impl Kind for Reranker {
    const KIND: &'static str = "reranker";
    fn dims(&self) -> Dims {
        self.dims
    }
    fn rebuild(dims: Dims, ck: Checkpoint) -> Result<Self, NeuralError> {
        Reranker::from_tensors(dims, ck.tensors)
    }
}

impl<M: Kind> Model<M> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = self.net.dims().to_meta();
        meta.push((
            "preprocessor".into(),
            serde_json::to_string(&self.pre).expect("preprocessor serializes"),
        ));
        Checkpoint::new(M::KIND, &self.net, &self.vocab, meta)
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, ModelError> {
        if ck.kind != M::KIND {
            return Err(ModelError::Kind {
                expected: M::KIND,
                found: ck.kind,
            });
        }
        let meta = ck.meta_map();
        let dims = Dims::from_meta(&meta).ok_or_else(|| ModelError::Meta("missing dims".into()))?;
        let pre = meta
            .get("preprocessor")
            .ok_or_else(|| ModelError::Meta("missing preprocessor".into()))
            .and_then(|s| serde_json::from_str(s).map_err(|e| ModelError::Meta(e.to_string())))?;
        let vocab = ck.vocab();
        let net = M::rebuild(dims, ck)?;
        Ok(Model { pre, vocab, net })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_checkpoint().to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_checkpoint(Checkpoint::parse(&fs::read_to_string(path)?)?)
    }
}
