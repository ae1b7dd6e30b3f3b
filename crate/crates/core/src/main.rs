//! Command-line front end: corpus generation, pretraining, streaming
//! experiments, baselines, the long-stream protocol, snapshot inspection,
//! and report rendering. All outputs are plain text or CSV files under
//! the chosen output directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use streamkb::config::Config;
use streamkb::detector::{Lexicon, MentionKind, Tagger};
use streamkb::encoder::{HashEncoder, MentionEncoder, NeuralEncoder, WordLevelEncoder};
use streamkb::generator::{
    build_default_ontology, build_default_pool, emit_corpus, generate_stream, load_corpus,
    InstancePool, Setting, StoryCorpus,
};
use streamkb::harness::{
    compute_metrics, eval_report, rb_baseline, run_longstream, run_rereading, run_stream,
    split_supervision, write_metrics_csv, write_timeline_csv, PredictionRecord,
};
use streamkb::snapshot;

#[derive(Parser)]
#[command(name = "streamkb", about = "Online entity/relation discovery over text streams")]
struct Cli {
    /// Configuration file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generates the synthetic story corpus and its statistics report.
    Generate,
    /// Pretrains the mention detector and writes `tagger.ckpt`.
    PretrainDetector {
        /// Existing corpus file; generated from the config when absent.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Pretrains the neural encoder and writes `encoder.ckpt`.
    PretrainEncoder {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Streams a corpus through the engine once and writes metrics,
    /// a per-decile timeline, the prediction log, and a KB snapshot.
    Stream {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Encoder checkpoint, required unless `hash_encoder = true`.
        #[arg(long)]
        encoder: Option<PathBuf>,
        /// Detector checkpoint, required unless `gold_segmentation = true`.
        #[arg(long)]
        detector: Option<PathBuf>,
    },
    /// Count-based most-common-supervision baseline.
    BaselineRb {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Streams the corpus twice; the second pass runs without supervision.
    Rereading {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        encoder: Option<PathBuf>,
        #[arg(long)]
        detector: Option<PathBuf>,
    },
    /// Target-story interference protocol with frozen replays.
    Longstream {
        /// One of A, B, C, D; all four when omitted.
        #[arg(long)]
        setting: Option<String>,
    },
    /// Prints a summary of a KB snapshot and verifies it round-trips.
    Snapshot {
        #[arg(long)]
        file: PathBuf,
    },
    /// Renders the accuracy table from a prediction log.
    EvalReport {
        #[arg(long)]
        predictions: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<Config, String> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path).map_err(|e| format!("config {}: {e}", path.display()))?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn obtain_corpus(
    corpus: &Option<PathBuf>,
    pool: &InstancePool,
    cfg: &Config,
) -> Result<StoryCorpus, String> {
    match corpus {
        Some(path) => load_corpus(path).map_err(|e| format!("corpus {}: {e}", path.display())),
        None => {
            let (corpus, _) = generate_stream(pool, cfg).map_err(|e| e.to_string())?;
            Ok(corpus)
        }
    }
}

/// Builds the mention encoder from the config and optional checkpoint.
fn build_encoder(
    cfg: &Config,
    pool: &InstancePool,
    checkpoint: &Option<PathBuf>,
) -> Result<Box<dyn MentionEncoder>, String> {
    let inner: Box<dyn MentionEncoder> = if cfg.hash_encoder {
        Box::new(HashEncoder::new(64))
    } else {
        let path = checkpoint
            .as_ref()
            .ok_or("hash_encoder is false but no --encoder checkpoint was given")?;
        Box::new(NeuralEncoder::load(path).map_err(|e| format!("encoder {}: {e}", path.display()))?)
    };
    if cfg.word_level {
        Ok(Box::new(WordLevelEncoder::new(inner, pool.vocabulary())))
    } else {
        Ok(inner)
    }
}

fn build_detector(cfg: &Config, checkpoint: &Option<PathBuf>) -> Result<Option<Tagger>, String> {
    if cfg.gold_segmentation {
        return Ok(None);
    }
    let path = checkpoint
        .as_ref()
        .ok_or("gold_segmentation is false but no --detector checkpoint was given")?;
    let tagger = Tagger::load(path).map_err(|e| format!("detector {}: {e}", path.display()))?;
    Ok(Some(tagger))
}

fn write_predictions(path: &Path, log: &[PredictionRecord]) -> Result<(), String> {
    let mut out = String::from(
        "index\tstory\tkind\tsurface\tgold\tpredicted\tsupervised\tpronoun\tlast_sentence\tgamma\tcorrect\n",
    );
    for r in log {
        let kind = match r.kind {
            MentionKind::Entity => "entity",
            MentionKind::Relation => "relation",
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.index,
            r.story,
            kind,
            r.surface,
            r.gold,
            r.predicted,
            r.supervised,
            r.pronoun,
            r.last_sentence,
            r.gamma,
            r.correct
        ));
    }
    std::fs::write(path, out).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, String> {
    let body =
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut log = Vec::new();
    for (i, line) in body.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || format!("{} line {}: malformed prediction record", path.display(), i + 1);
        if f.len() != 11 {
            return Err(bad());
        }
        let kind = match f[2] {
            "entity" => MentionKind::Entity,
            "relation" => MentionKind::Relation,
            _ => return Err(bad()),
        };
        log.push(PredictionRecord {
            index: f[0].parse().map_err(|_| bad())?,
            story: f[1].parse().map_err(|_| bad())?,
            kind,
            surface: f[3].to_string(),
            gold: f[4].parse().map_err(|_| bad())?,
            predicted: f[5].parse().map_err(|_| bad())?,
            supervised: f[6].parse().map_err(|_| bad())?,
            pronoun: f[7].parse().map_err(|_| bad())?,
            last_sentence: f[8].parse().map_err(|_| bad())?,
            gamma: f[9].parse().map_err(|_| bad())?,
            correct: f[10].parse().map_err(|_| bad())?,
        });
    }
    Ok(log)
}

fn run(cli: &Cli) -> Result<(), String> {
    let cfg = load_config(cli)?;
    let pool = build_default_pool(build_default_ontology());
    std::fs::create_dir_all(&cli.out).map_err(|e| format!("{}: {e}", cli.out.display()))?;
    match &cli.cmd {
        Cmd::Generate => {
            let (corpus, stats) = generate_stream(&pool, &cfg).map_err(|e| e.to_string())?;
            emit_corpus(&corpus, &cli.out.join("corpus.tsv")).map_err(|e| e.to_string())?;
            std::fs::write(cli.out.join("stats.txt"), stats.report())
                .map_err(|e| e.to_string())?;
            println!("{}", stats.report());
        }
        Cmd::PretrainDetector { corpus } => {
            let corpus = obtain_corpus(corpus, &pool, &cfg)?;
            let sentences: Vec<String> = corpus.records.iter().map(|r| r.text.clone()).collect();
            let lex = Lexicon::builtin();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut tagger = Tagger::new(
                cfg.char_emb,
                cfg.char_hidden,
                cfg.ctx_hidden,
                cfg.mlp_hidden,
                streamkb::detector::Tag::class_count(cfg.outside_tag),
                &mut rng,
            );
            for epoch in 0..cfg.pretrain_epochs {
                let loss = tagger
                    .pretrain_pass(&sentences, &lex, cfg.pretrain_lr, cfg.pretrain_typo_rate, &mut rng)
                    .map_err(|e| e.to_string())?;
                println!("epoch {epoch}: loss {loss:.4}");
            }
            let acc = tagger.token_accuracy(&sentences, &lex, cfg.pretrain_typo_rate, cfg.seed);
            println!("token accuracy {acc:.4}");
            let path = cli.out.join("tagger.ckpt");
            tagger.save(&path).map_err(|e| e.to_string())?;
            println!("wrote {}", path.display());
        }
        Cmd::PretrainEncoder { corpus } => {
            let corpus = obtain_corpus(corpus, &pool, &cfg)?;
            let sentences: Vec<Vec<String>> = corpus
                .records
                .iter()
                .map(|r| r.spans.iter().map(|s| r.span_text(s)).collect())
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut enc =
                NeuralEncoder::new(cfg.char_emb, cfg.char_hidden, cfg.ctx_hidden, &mut rng);
            for epoch in 0..cfg.pretrain_epochs {
                let loss = enc
                    .pretrain_pass(&sentences, cfg.pretrain_lr, cfg.pretrain_typo_rate, &mut rng)
                    .map_err(str::to_string)?;
                println!("epoch {epoch}: loss {loss:.4}");
            }
            let path = cli.out.join("encoder.ckpt");
            enc.save(&path).map_err(|e| e.to_string())?;
            println!("wrote {}", path.display());
        }
        Cmd::Stream { corpus, encoder, detector } => {
            let mut corpus = obtain_corpus(corpus, &pool, &cfg)?;
            split_supervision(&mut corpus, cfg.fraction);
            let enc = build_encoder(&cfg, &pool, encoder)?;
            let tagger = build_detector(&cfg, detector)?;
            let outcome =
                run_stream(&corpus, &cfg, enc.as_ref(), tagger.as_ref()).map_err(|e| e.to_string())?;
            write_metrics_csv(&cli.out.join("metrics.csv"), &[("stream", &outcome.metrics)])
                .map_err(|e| e.to_string())?;
            write_timeline_csv(&cli.out.join("timeline.csv"), &outcome.log)
                .map_err(|e| e.to_string())?;
            write_predictions(&cli.out.join("predictions.tsv"), &outcome.log)?;
            snapshot::save(&outcome.engine, &cli.out.join("kb.snapshot"))
                .map_err(|e| e.to_string())?;
            println!("{}", eval_report(&[("stream", &outcome.metrics)]));
        }
        Cmd::BaselineRb { corpus } => {
            let mut corpus = obtain_corpus(corpus, &pool, &cfg)?;
            split_supervision(&mut corpus, cfg.fraction);
            let (log, metrics) = rb_baseline(&corpus);
            write_metrics_csv(&cli.out.join("metrics.csv"), &[("baseline-rb", &metrics)])
                .map_err(|e| e.to_string())?;
            write_predictions(&cli.out.join("predictions.tsv"), &log)?;
            println!("{}", eval_report(&[("baseline-rb", &metrics)]));
        }
        Cmd::Rereading { corpus, encoder, detector } => {
            let mut corpus = obtain_corpus(corpus, &pool, &cfg)?;
            split_supervision(&mut corpus, cfg.fraction);
            let enc = build_encoder(&cfg, &pool, encoder)?;
            let tagger = build_detector(&cfg, detector)?;
            let outcome = run_rereading(&corpus, &cfg, enc.as_ref(), tagger.as_ref())
                .map_err(|e| e.to_string())?;
            let sets = [("first-pass", &outcome.first), ("second-pass", &outcome.second)];
            write_metrics_csv(&cli.out.join("metrics.csv"), &sets).map_err(|e| e.to_string())?;
            write_predictions(&cli.out.join("predictions.tsv"), &outcome.second_log)?;
            println!("{}", eval_report(&sets));
        }
        Cmd::Longstream { setting } => {
            let settings: Vec<Setting> = match setting {
                Some(s) => {
                    vec![Setting::parse(s).ok_or(format!("unknown setting `{s}` (use A-D)"))?]
                }
                None => vec![Setting::A, Setting::B, Setting::C, Setting::D],
            };
            let enc = build_encoder(&cfg, &pool, &None)?;
            for setting in settings {
                let report =
                    run_longstream(&pool, &cfg, setting, enc.as_ref()).map_err(|e| e.to_string())?;
                let path = cli.out.join(format!("longstream_{setting:?}.csv"));
                std::fs::write(&path, report.to_csv()).map_err(|e| e.to_string())?;
                println!("setting {setting:?} -> {}", path.display());
                for row in &report.rows {
                    println!("  t={:<4} ambiguity {:.3} accuracy {:.4}", row.t, row.ambiguity, row.accuracy);
                }
            }
        }
        Cmd::Snapshot { file } => {
            let engine = snapshot::load(file, cfg).map_err(|e| e.to_string())?;
            let copy = cli.out.join("kb.roundtrip.snapshot");
            snapshot::save(&engine, &copy).map_err(|e| e.to_string())?;
            let same = std::fs::read(file).map_err(|e| e.to_string())?
                == std::fs::read(&copy).map_err(|e| e.to_string())?;
            println!(
                "entities: {} mentions / {} instances / {} labels",
                engine.entities.state.mention_count(),
                engine.entities.state.instance_count(),
                engine.entities.map.len()
            );
            println!(
                "relations: {} mentions / {} instances / {} labels",
                engine.relations.state.mention_count(),
                engine.relations.state.instance_count(),
                engine.relations.map.len()
            );
            println!("round-trip identical: {same}");
            if !same {
                return Err("snapshot did not round-trip byte-identically".into());
            }
        }
        Cmd::EvalReport { predictions } => {
            let log = read_predictions(predictions)?;
            let metrics = compute_metrics(&log);
            println!("{}", eval_report(&[("log", &metrics)]));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
