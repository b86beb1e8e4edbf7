use absparse::abstraction::Lexicon;
use absparse::augment::{
    default_validation_size, generate, read_pairs_jsonl, split, write_pairs_jsonl,
};
use absparse::eval::{GroupVerdict, Predictor, Report};
use absparse::lang::{execute, Program};
use absparse::neural::{Dims, Parser as Net, Reranker};
use absparse::pipeline::{
    annotated_pairs, build_vocab, fit_preprocessor, init_cbow, sup_examples, weak_examples, Model,
};
use absparse::ruleparser::{coverage_report, rule_parse, AnnotationSet, RuleParse};
use absparse::search::{Cache, CacheMode};
use absparse::train::{
    rerank_beams, train_rerank, train_supervised, train_weak, EpochLog, TrainConfig,
};
use absparse::world::{
    group_by_utterance, load_corpus, sample_world, write_canonical, AdapterConfig, CorpusFormat,
    Example, WorldSpec,
};
use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "absparse",
    version,
    about = "Weakly-supervised semantic parser for visual reasoning statements"
)]
struct Cli {
    /// Seed for every random choice [default: 0, or the config's seed].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-threaded run with bit-identical outputs.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads [default: 1, or the config's workers].
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Canonical,
    Cnlvr,
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus file (JSON lines).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "canonical")]
    format: Format,
    /// Field map for `--format cnlvr`; the bundled one by default.
    #[arg(long)]
    adapter: Option<PathBuf>,
}

#[derive(Args)]
struct LangArgs {
    /// Lexicon TSV; the bundled one by default.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Annotation file; the bundled one by default.
    #[arg(long)]
    annotations: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Per-epoch log file.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Convert a corpus to the canonical format.
    Ingest {
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample random worlds as a canonical corpus, labelled by a program.
    SampleWorld {
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Items per box, e.g. 3,2,4.
        #[arg(long, default_value = "3,3,3")]
        items: String,
        #[arg(long)]
        towers: bool,
        /// Labels each world with this program's denotation.
        #[arg(long, default_value = "Exist ALL_ITEMS")]
        program: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Abstract utterance patterns and how much of the corpus the top ones cover.
    Coverage {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        lang: LangArgs,
        #[arg(long, default_value_t = 200)]
        top: usize,
        /// Number of patterns to list.
        #[arg(long, default_value_t = 20)]
        show: usize,
    },
    /// Evaluate the annotation-lookup parser.
    RuleParse {
        #[command(flatten)]
        input: CorpusArgs,
        /// Corpus the preprocessing statistics are fitted on.
        #[arg(long)]
        train: PathBuf,
        #[command(flatten)]
        lang: LangArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate utterance/program pairs from the annotations.
    Augment {
        #[command(flatten)]
        lang: LangArgs,
        #[arg(long, default_value_t = 6158)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also split off a validation set into this file.
        #[arg(long)]
        valid_out: Option<PathBuf>,
    },
    /// Supervised training on generated pairs.
    TrainSup {
        /// Training corpus (fits preprocessing and the vocabulary).
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        lang: LangArgs,
        /// Generated pairs; required unless training without augmentation.
        #[arg(long)]
        generated: Option<PathBuf>,
        /// Train on the corpus utterances that match an annotation instead.
        #[arg(long)]
        no_augmentation: bool,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Weakly-supervised training from denotations.
    TrainWeak {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        lang: LangArgs,
        /// Dev corpus for model selection (same format).
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Warm start; required unless no_warmstart is configured.
        #[arg(long)]
        init: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        /// Disable the program cache.
        #[arg(long)]
        no_cache: bool,
        /// Use the cache only for the returned set.
        #[arg(long)]
        cache_final_only: bool,
        /// Reward each (utterance, KB) pair separately.
        #[arg(long)]
        one_example_reward: bool,
        /// Cache loaded before and saved after training.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the re-ranker on beams of a fixed parser.
    TrainRerank {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        lang: LangArgs,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy and consistency on a corpus.
    Eval {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        lang: LangArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rerank: Option<PathBuf>,
        #[arg(long, default_value_t = 40)]
        beam: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Parse one utterance.
    Parse {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rerank: Option<PathBuf>,
        #[arg(long, default_value_t = 40)]
        beam: usize,
        /// Number of ranked programs to print.
        #[arg(long, default_value_t = 1)]
        k: usize,
        utterance: String,
    },
    /// Print a saved cache.
    CacheDump {
        #[arg(long)]
        cache: PathBuf,
        /// Programs per utterance.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
}

fn corpus(args: &CorpusArgs) -> Result<Vec<Example>> {
    let format = match args.format {
        Format::Canonical => CorpusFormat::Canonical,
        Format::Cnlvr => CorpusFormat::Cnlvr(match &args.adapter {
            Some(p) => AdapterConfig::load(p)?,
            None => AdapterConfig::default_cnlvr(),
        }),
    };
    load_corpus(&args.corpus, &format).with_context(|| format!("reading {}", args.corpus.display()))
}

fn same_format(args: &CorpusArgs, path: &Path) -> CorpusArgs {
    CorpusArgs {
        corpus: path.to_path_buf(),
        format: args.format,
        adapter: args.adapter.clone(),
    }
}

fn lexicon(args: &LangArgs) -> Result<Lexicon> {
    Ok(match &args.lexicon {
        Some(p) => Lexicon::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => Lexicon::standard().clone(),
    })
}

fn annotations(args: &LangArgs, lex: &Lexicon) -> Result<AnnotationSet> {
    Ok(match &args.annotations {
        Some(p) => {
            AnnotationSet::load(p, lex).with_context(|| format!("reading {}", p.display()))?
        }
        None if args.lexicon.is_none() => AnnotationSet::standard().clone(),
        None => AnnotationSet::parse(include_str!("../../core/data/annotations.txt"), lex)?,
    })
}

fn config(cli: &Cli, args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(p) = &args.config {
        cfg.apply(&fs::read_to_string(p)?)
            .with_context(|| format!("in {}", p.display()))?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w.max(1);
    }
    if cli.deterministic {
        cfg.workers = 1;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    Ok(cfg)
}

fn logger(args: &TrainArgs) -> Result<impl FnMut(&EpochLog)> {
    let mut file = match &args.log {
        Some(p) => Some(fs::File::create(p)?),
        None => None,
    };
    Ok(move |l: &EpochLog| {
        log::info!("{l}");
        if let Some(f) = file.as_mut() {
            use std::io::Write;
            let _ = writeln!(f, "{l}");
        }
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn seed(cli: &Cli) -> u64 {
    cli.seed.unwrap_or(0)
}

fn parse_items(s: &str) -> Result<[usize; 3]> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse())
        .collect::<Result<_, _>>()?;
    match v[..] {
        [a, b, c] => Ok([a, b, c]),
        _ => bail!("--items needs three counts"),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.cmd {
        Cmd::Ingest { input, out } => {
            let data = corpus(input)?;
            write(out, &write_canonical(&data))?;
            log::info!(
                "{} examples, {} utterances",
                data.len(),
                group_by_utterance(&data).len()
            );
        }
        Cmd::SampleWorld {
            n,
            items,
            towers,
            program,
            out,
        } => {
            let counts = parse_items(items)?;
            let spec = if *towers {
                WorldSpec::towers(counts)
            } else {
                WorldSpec::scattered(counts)
            };
            let p = Program::parse(program)?;
            let mut data = Vec::new();
            for i in 0..*n {
                let kb = sample_world(seed(&cli).wrapping_add(i as u64), &spec)?;
                let label = execute(&p, &kb)?;
                data.push(Example {
                    sentence: program.clone(),
                    kb,
                    label,
                });
            }
            match out {
                Some(path) => write(path, &write_canonical(&data))?,
                None => {
                    for ex in &data {
                        println!("label={}\n{}", ex.label, ex.kb);
                    }
                }
            }
        }
        Cmd::Coverage {
            input,
            lang,
            top,
            show,
        } => {
            let lex = lexicon(lang)?;
            let data = corpus(input)?;
            let pre = fit_preprocessor(&data, &lex);
            let utterances: Vec<Vec<String>> = group_by_utterance(&data)
                .iter()
                .map(|g| pre.process(&g.raw_utterance))
                .collect();
            let cov = coverage_report(&utterances, &lex);
            println!("utterances\t{}", cov.total);
            println!("patterns\t{}", cov.distinct());
            println!("top{top}\t{:.4}", cov.top_k(*top));
            for (pattern, count) in cov.histogram.iter().take(*show) {
                println!("{count}\t{pattern}");
            }
        }
        Cmd::RuleParse {
            input,
            train,
            lang,
            report,
        } => {
            let lex = lexicon(lang)?;
            let ann = annotations(lang, &lex)?;
            let pre = fit_preprocessor(&corpus(&same_format(input, train))?, &lex);
            let verdicts: Vec<GroupVerdict> = group_by_utterance(&corpus(input)?)
                .iter()
                .map(|g| {
                    let pred = match rule_parse(&pre.process(&g.raw_utterance), &ann, &lex) {
                        RuleParse::Program(p) => absparse::eval::Prediction::Program(p),
                        RuleParse::Fallback => absparse::eval::Prediction::Fallback,
                    };
                    GroupVerdict::new(&g.raw_utterance, &pred, &g.pairs)
                })
                .collect();
            finish_report(Report::new(verdicts), report.as_deref())?;
        }
        Cmd::Augment {
            lang,
            n,
            out,
            valid_out,
        } => {
            let lex = lexicon(lang)?;
            let ann = annotations(lang, &lex)?;
            let pairs = generate(&ann, &lex, *n, seed(&cli))?;
            match valid_out {
                Some(v) => {
                    let (tr, va) = split(&pairs, default_validation_size(pairs.len()), seed(&cli));
                    write(out, &write_pairs_jsonl(&tr))?;
                    write(v, &write_pairs_jsonl(&va))?;
                    log::info!("{} training and {} validation pairs", tr.len(), va.len());
                }
                None => write(out, &write_pairs_jsonl(&pairs))?,
            }
        }
        Cmd::TrainSup {
            input,
            lang,
            generated,
            no_augmentation,
            valid,
            train,
            out,
        } => {
            let lex = lexicon(lang)?;
            let mut cfg = config(&cli, train)?;
            cfg.no_augmentation |= *no_augmentation;
            let data = corpus(input)?;
            let pre = fit_preprocessor(&data, &lex);
            let gen = match generated {
                _ if cfg.no_augmentation => {
                    annotated_pairs(&data, &pre, &annotations(lang, &lex)?, &lex)
                }
                Some(p) => read_pairs_jsonl(&fs::read_to_string(p)?)?,
                None => bail!("--generated is required unless training without augmentation"),
            };
            log::info!("{} supervised pairs", gen.len());
            let val = match valid {
                Some(p) => read_pairs_jsonl(&fs::read_to_string(p)?)?,
                None => Vec::new(),
            };
            let vocab = build_vocab(&data, &[gen.clone(), val.clone()].concat(), &pre);
            let mut net = Net::new(Dims::default(), vocab.len(), cfg.seed);
            let tr = sup_examples(&gen, &pre, &vocab);
            if cfg.cbow {
                let sentences: Vec<Vec<usize>> = data
                    .iter()
                    .map(|e| vocab.encode(&pre.process(&e.sentence)))
                    .chain(tr.iter().map(|e| e.ids.clone()))
                    .collect();
                init_cbow(&mut net, &sentences, cfg.seed);
            }
            let va = sup_examples(&val, &pre, &vocab);
            train_supervised(&mut net, &tr, &va, &cfg, logger(train)?)?;
            Model { pre, vocab, net }.save(out)?;
        }
        Cmd::TrainWeak {
            input,
            lang,
            dev,
            init,
            train,
            no_cache,
            cache_final_only,
            one_example_reward,
            cache,
            out,
        } => {
            let lex = lexicon(lang)?;
            let mut cfg = config(&cli, train)?;
            if *no_cache {
                cfg.beam.cache = CacheMode::Off;
            } else if *cache_final_only {
                cfg.beam.cache = CacheMode::FinalOnly;
            }
            cfg.one_example_reward |= *one_example_reward;
            let data = corpus(input)?;
            let mut model: Model<Net> = match init {
                Some(p) if !cfg.no_warmstart => Model::load(p)?,
                _ => {
                    if !cfg.no_warmstart {
                        bail!("--init is required unless no_warmstart = true");
                    }
                    let pre = fit_preprocessor(&data, &lex);
                    let vocab = build_vocab(&data, &[], &pre);
                    let net = Net::new(Dims::default(), vocab.len(), cfg.seed);
                    Model { pre, vocab, net }
                }
            };
            let groups = weak_examples(&data, &model.pre, &model.vocab, &lex);
            let dev_groups = match dev {
                Some(p) => weak_examples(
                    &corpus(&same_format(input, p))?,
                    &model.pre,
                    &model.vocab,
                    &lex,
                ),
                None => Vec::new(),
            };
            let mut c = match cache {
                Some(p) if p.exists() => Cache::parse(&fs::read_to_string(p)?)?,
                _ => Cache::new(),
            };
            train_weak(
                &mut model.net,
                &groups,
                &dev_groups,
                &mut c,
                &lex,
                &cfg,
                logger(train)?,
            )?;
            model.save(out)?;
            if let Some(p) = cache {
                write(p, &c.to_text())?;
            }
        }
        Cmd::TrainRerank {
            input,
            lang,
            model,
            train,
            out,
        } => {
            let lex = lexicon(lang)?;
            let cfg = config(&cli, train)?;
            let parser: Model<Net> = Model::load(model)?;
            let groups = weak_examples(&corpus(input)?, &parser.pre, &parser.vocab, &lex);
            let beams = rerank_beams(&parser.net, &groups, &cfg);
            let mut net = Reranker::new(parser.net.dims, parser.vocab.len(), cfg.seed);
            // start from the parser's encoder and query layer
            net.enc = parser.net.enc.clone();
            net.emb_z = parser.net.emb_z.clone();
            net.w_q = parser.net.w_q.clone();
            train_rerank(&mut net, &beams, &cfg, logger(train)?)?;
            Model {
                pre: parser.pre,
                vocab: parser.vocab,
                net,
            }
            .save(out)?;
        }
        Cmd::Eval {
            input,
            lang,
            model,
            rerank,
            beam,
            report,
        } => {
            let lex = lexicon(lang)?;
            let parser: Model<Net> = Model::load(model)?;
            let rr: Option<Model<Reranker>> = rerank.as_deref().map(Model::load).transpose()?;
            let groups = weak_examples(&corpus(input)?, &parser.pre, &parser.vocab, &lex);
            let workers = if cli.deterministic {
                1
            } else {
                cli.workers.unwrap_or(1).max(1)
            };
            let (_, verdicts) = absparse::train::evaluate_groups(
                &parser.net,
                rr.as_ref().map(|m| &m.net),
                &groups,
                *beam,
                workers,
            );
            finish_report(Report::new(verdicts), report.as_deref())?;
        }
        Cmd::Parse {
            model,
            rerank,
            beam,
            k,
            utterance,
        } => {
            let parser: Model<Net> = Model::load(model)?;
            let rr: Option<Model<Reranker>> = rerank.as_deref().map(Model::load).transpose()?;
            let words = parser.pre.process(utterance);
            log::info!("preprocessed: {}", words.join(" "));
            let pred = Predictor {
                parser: &parser.net,
                reranker: rr.as_ref().map(|m| &m.net),
                beam: *beam,
            };
            let ranked = pred.ranked(&parser.vocab.encode(&words));
            if ranked.is_empty() {
                bail!("no program for an empty utterance");
            }
            for (h, score) in ranked.iter().take(*k) {
                println!("{score:.4}\t{}", Program::new(h.tokens.clone())?);
            }
        }
        Cmd::CacheDump { cache, top } => {
            let c = Cache::parse(&fs::read_to_string(cache)?)?;
            for key in c.keys() {
                println!("{key}");
                for e in c.top_d(key, *top) {
                    println!(
                        "\t{:.3}\t{}\t{}\t{}",
                        e.average(),
                        e.count,
                        e.program,
                        e.program.alignment_text()
                    );
                }
            }
        }
    }
    Ok(())
}

fn finish_report(report: Report, path: Option<&Path>) -> Result<()> {
    let m = report.metrics;
    println!("accuracy\t{:.4}", m.accuracy);
    println!("consistency\t{:.4}", m.consistency);
    println!("examples\t{}", m.examples);
    println!("groups\t{}", m.groups);
    if let Some(p) = path {
        write(p, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}
