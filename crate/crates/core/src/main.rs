use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use intertext::classify::{self, LinearModel, TrainParams};
use intertext::config::{Overrides, DEFAULT_SEED};
use intertext::corpus::{self, filter_by_labels, Corpus, IngestOptions};
use intertext::embedding::{self, standardize, Embedder, EmbedderSpec, EmbeddingMatrix};
use intertext::ocr::{self, Lexicon};
use intertext::passage;
use intertext::pipeline::{self, StageStatus};
use intertext::plot::{self, PlotKind};
use intertext::sanity::{self, SanityConfig};
use intertext::similarity::{self, MaskPolicy, SimilarityMatrix};
use intertext::temporal::{self, Bounds, CurveConfig, GroupSpec};
use intertext::{Error, Result};

#[derive(Parser)]
#[command(
    name = "intertext",
    version,
    about = "Diachronic similarity analysis of dated fiction corpora"
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load metadata and texts into a corpus file.
    Ingest {
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        texts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = corpus::DEFAULT_MIN_YEAR)]
        min_year: i32,
        #[arg(long, default_value_t = corpus::DEFAULT_MAX_YEAR)]
        max_year: i32,
        /// Keep every edition instead of the earliest per work.
        #[arg(long)]
        no_dedup: bool,
    },
    /// OCR quality scores and filtering.
    #[command(subcommand)]
    Ocr(OcrCmd),
    /// Passage and triplet sampling.
    #[command(subcommand)]
    Sample(SampleCmd),
    /// Embed every document (raw vectors, not standardized).
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        embedder: EmbedderArgs,
        #[arg(long, default_value_t = passage::DEFAULT_DRAWS)]
        draws: usize,
        #[arg(long, default_value_t = passage::DEFAULT_PASSAGE_LEN)]
        len: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Similarity matrix construction and queries.
    #[command(subcommand)]
    Matrix(MatrixCmd),
    /// Multi-representation nearest-neighbor sanity check.
    #[command(subcommand)]
    Sanity(SanityCmd),
    /// Similarity by publication offset.
    #[command(subcommand)]
    Temporal(TemporalCmd),
    /// Linear SVM over document embeddings.
    #[command(subcommand)]
    Classify(ClassifyCmd),
    /// Render a CSV report as SVG.
    Plot {
        #[arg(long, value_enum)]
        kind: Kind,
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every configured stage into a run directory.
    Pipeline {
        config: PathBuf,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        passage_len: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        window: Option<i32>,
        #[arg(long)]
        repeats: Option<usize>,
    },
}

#[derive(Subcommand)]
enum OcrCmd {
    /// Per-document scores as CSV `doc_id,year,score`.
    Report {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep documents scoring at least the threshold.
    Filter {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long, default_value_t = ocr::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
        /// Per-year retention CSV `year,kept,total`.
        #[arg(long)]
        retention: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SampleCmd {
    /// Random passages per document as JSON Lines.
    Passages {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = passage::DEFAULT_DRAWS)]
        draws: usize,
        #[arg(long, default_value_t = passage::DEFAULT_PASSAGE_LEN)]
        len: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Contrastive training triplets as JSON Lines.
    Triplets {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = passage::DEFAULT_PASSAGE_LEN)]
        len: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum MatrixCmd {
    /// Standardize embeddings and build the cosine similarity matrix.
    Build {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "same-author")]
        policy: String,
        /// The embedding file is already standardized.
        #[arg(long)]
        standardized: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nearest neighbors of one document.
    Neighbors {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        doc: String,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
    /// Unmasked pairs as CSV `doc_a,doc_b,sim`.
    ExportCsv {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value_t = f64::NEG_INFINITY, allow_negative_numbers = true)]
        floor: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum SanityCmd {
    Run {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        embedder: EmbedderArgs,
        #[arg(long, default_value_t = 1000)]
        novels: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [10, 25, 50, 100])]
        draws: Vec<usize>,
        #[arg(long, default_value_t = passage::DEFAULT_PASSAGE_LEN)]
        len: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-query neighbor lists as JSON Lines.
        #[arg(long)]
        queries: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = temporal::DEFAULT_WINDOW)]
    window: i32,
    #[arg(long, default_value_t = temporal::DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long, default_value_t = temporal::DEFAULT_MIN_PER_YEAR)]
    min_per_year: usize,
    #[arg(long, default_value_t = temporal::DEFAULT_MAX_PER_YEAR)]
    max_per_year: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also render the CSV as SVG.
    #[arg(long)]
    svg: Option<PathBuf>,
}

impl CurveArgs {
    fn config(&self) -> Result<CurveConfig> {
        Ok(CurveConfig {
            window: self.window,
            repeats: self.repeats,
            bounds: Bounds::new(self.min_per_year, self.max_per_year)?,
            seed: self.seed,
        })
    }

    fn load(&self) -> Result<(SimilarityMatrix, Corpus)> {
        Ok((SimilarityMatrix::load(&self.matrix)?, Corpus::load_json(&self.corpus)?))
    }
}

#[derive(Subcommand)]
enum TemporalCmd {
    /// Mean similarity by publication offset for a set of documents.
    Curve {
        #[command(flatten)]
        args: CurveArgs,
        /// Label query selecting the documents (default: all).
        #[arg(long)]
        query: Option<String>,
        /// Run metadata (aggregation, partial offsets, audit) as JSON.
        #[arg(long)]
        metadata: Option<PathBuf>,
    },
    /// Similarity of one document to each year.
    Trajectory {
        #[command(flatten)]
        args: CurveArgs,
        #[arg(long)]
        doc: String,
    },
    /// Group curve against a decade-matched comparison sample.
    Compare {
        #[command(flatten)]
        args: CurveArgs,
        #[arg(long)]
        group: String,
        #[arg(long)]
        comparison: String,
    },
}

#[derive(Subcommand)]
enum ClassifyCmd {
    Train {
        #[command(flatten)]
        data: LabelledData,
        #[arg(long, default_value_t = 0.01)]
        lambda: f64,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        standardized: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified k-fold accuracy per regularization strength.
    Cv {
        #[command(flatten)]
        data: LabelledData,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.001, 0.01, 0.1])]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct LabelledData {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Label query for the positive class.
    #[arg(long)]
    positive: String,
    /// Label query for the negative class.
    #[arg(long)]
    negative: String,
    /// Negatives kept per positive.
    #[arg(long, default_value_t = classify::DEFAULT_NEGATIVE_RATIO)]
    negative_ratio: usize,
    #[arg(long)]
    standardized: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

impl LabelledData {
    fn load(&self) -> Result<(EmbeddingMatrix, BTreeSet<String>, BTreeSet<String>)> {
        let m = load_embeddings(&self.embeddings, self.standardized)?;
        let c = Corpus::load_json(&self.corpus)?;
        let keep =
            |ids: Vec<String>| -> BTreeSet<String> { ids.into_iter().filter(|i| m.index_of(i).is_some()).collect() };
        let pos = keep(filter_by_labels(&c, &self.positive)?);
        let neg = keep(filter_by_labels(&c, &self.negative)?);
        let neg = classify::subsample_negatives(&neg, pos.len(), self.negative_ratio, self.seed);
        Ok((m, pos, neg))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderKind {
    HashTest,
    File,
    Bridge,
}

#[derive(Args)]
struct EmbedderArgs {
    #[arg(long, value_enum, default_value = "hash-test")]
    embedder: EmbedderKind,
    #[arg(long, default_value_t = 256)]
    dim: usize,
    /// Precomputed vectors (EMB v1) for `--embedder file`.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Bridge command line for `--embedder bridge`, split on whitespace.
    #[arg(long)]
    bridge: Option<String>,
}

impl EmbedderArgs {
    fn spec(&self) -> Result<EmbedderSpec> {
        let missing = |flag: &str| Error::InvalidArgument(format!("{flag} is required for this embedder"));
        Ok(match self.embedder {
            EmbedderKind::HashTest => EmbedderSpec::HashTest { dim: self.dim },
            EmbedderKind::File => EmbedderSpec::File {
                path: self.vectors.clone().ok_or_else(|| missing("--vectors"))?,
                dim: self.dim,
            },
            EmbedderKind::Bridge => EmbedderSpec::Bridge {
                command: self
                    .bridge
                    .as_deref()
                    .ok_or_else(|| missing("--bridge"))?
                    .split_whitespace()
                    .map(str::to_string)
                    .collect(),
                dim: self.dim,
            },
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    OffsetCurve,
    Trajectory,
    Sweep,
    Bar,
}

impl From<Kind> for PlotKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::OffsetCurve => PlotKind::OffsetCurve,
            Kind::Trajectory => PlotKind::Trajectory,
            Kind::Sweep => PlotKind::Sweep,
            Kind::Bar => PlotKind::Bar,
        }
    }
}

fn load_embeddings(path: &Path, standardized: bool) -> Result<EmbeddingMatrix> {
    let m = EmbeddingMatrix::load(path)?;
    if standardized {
        Ok(m.assume_standardized())
    } else {
        Ok(standardize(&m)?.0)
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<()> {
    let mut w = fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn finish_curve(args: &CurveArgs, kind: PlotKind) -> Result<()> {
    if let Some(svg) = &args.svg {
        plot::render_file(&args.out, kind, svg)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            metadata,
            texts,
            out,
            min_year,
            max_year,
            no_dedup,
        } => {
            let report = corpus::ingest(&metadata, &texts, &IngestOptions { min_year, max_year })?;
            for e in &report.row_errors {
                warn!("{}:{}: {} ({})", metadata.display(), e.line, e.message, e.doc_id);
            }
            let (c, removed) = if no_dedup {
                (report.corpus, Vec::new())
            } else {
                corpus::dedup(&report.corpus)
            };
            for r in &removed {
                warn!("dedup: dropped {} (kept {})", r.removed, r.kept);
            }
            c.save_json(&out)?;
            println!(
                "{} documents, {} row errors, {} complete-works rows skipped, {} duplicates removed",
                c.len(),
                report.row_errors.len(),
                report.complete_works.len(),
                removed.len()
            );
        }
        Command::Ocr(OcrCmd::Report { corpus, lexicon, out }) => {
            let mut c = Corpus::load_json(&corpus)?;
            ocr::score_corpus(&mut c, &Lexicon::load(&lexicon)?)?;
            let body = |w: &mut dyn Write| -> io::Result<()> {
                writeln!(w, "doc_id,year,score")?;
                for d in c.documents() {
                    writeln!(w, "{},{},{}", d.doc_id, d.year, d.ocr_score.unwrap_or(0.0))?;
                }
                Ok(())
            };
            match out {
                Some(p) => write_file(&p, |w| body(w))?,
                None => body(&mut io::stdout().lock()).map_err(|e| Error::io("<stdout>", e))?,
            }
        }
        Command::Ocr(OcrCmd::Filter {
            corpus,
            lexicon,
            threshold,
            out,
            retention,
        }) => {
            let c = Corpus::load_json(&corpus)?;
            let (kept, ret) = ocr::filter_corpus(&c, &Lexicon::load(&lexicon)?, threshold)?;
            kept.save_json(&out)?;
            if let Some(p) = retention {
                write_file(&p, |w| {
                    writeln!(w, "year,kept,total")?;
                    ret.by_year
                        .iter()
                        .try_for_each(|(y, (k, t))| writeln!(w, "{y},{k},{t}"))
                })?;
            }
            println!(
                "kept {} of {} documents at threshold {threshold}",
                ret.kept(),
                ret.total()
            );
        }
        Command::Sample(SampleCmd::Passages {
            corpus,
            draws,
            len,
            seed,
            out,
        }) => {
            let c = passage::prepare_corpus(&Corpus::load_json(&corpus)?)?;
            let (sets, skipped) = passage::draw_corpus(&c, draws, len, seed);
            for e in &skipped {
                warn!("{e}");
            }
            write_file(&out, |w| {
                passage::write_passages(w, sets.iter().flat_map(|s| &s.passages))
            })?;
        }
        Command::Sample(SampleCmd::Triplets {
            corpus,
            count,
            len,
            seed,
            out,
        }) => {
            let c = passage::prepare_corpus(&Corpus::load_json(&corpus)?)?;
            let stream = passage::build_triplets(&c, count, len, seed)?;
            let mut n = 0;
            write_file(&out, |w| {
                n = passage::write_triplets(w, stream)?;
                Ok(())
            })?;
            println!("{n} triplets");
        }
        Command::Embed {
            corpus,
            embedder,
            draws,
            len,
            seed,
            out,
        } => {
            let c = passage::prepare_corpus(&Corpus::load_json(&corpus)?)?;
            let mut e = Embedder::from_spec(&embedder.spec()?)?;
            let r = embedding::embed_corpus(&c, &mut e, draws, len, seed)?;
            for id in &r.skipped {
                warn!("{id}: shorter than one passage, skipped");
            }
            r.matrix.save(&out)?;
        }
        Command::Matrix(MatrixCmd::Build {
            embeddings,
            corpus,
            policy,
            standardized,
            out,
        }) => {
            let policy: MaskPolicy = policy.parse()?;
            let m = load_embeddings(&embeddings, standardized)?;
            let c = Corpus::load_json(&corpus)?;
            similarity::build(&m, &c, policy)?.save(&out)?;
        }
        Command::Matrix(MatrixCmd::Neighbors { matrix, doc, k }) => {
            let s = SimilarityMatrix::load(&matrix)?;
            let mut out = io::stdout().lock();
            for (id, v) in s.neighbors(&doc, k)? {
                writeln!(out, "{id}\t{v}").map_err(|e| Error::io("<stdout>", e))?;
            }
        }
        Command::Matrix(MatrixCmd::ExportCsv { matrix, floor, out }) => {
            let s = SimilarityMatrix::load(&matrix)?;
            write_file(&out, |w| s.write_csv(w, floor))?;
        }
        Command::Sanity(SanityCmd::Run {
            corpus,
            embedder,
            novels,
            reps,
            draws,
            len,
            seed,
            out,
            queries,
        }) => {
            let c = passage::prepare_corpus(&Corpus::load_json(&corpus)?)?;
            let cfg = SanityConfig {
                novel_count: novels,
                reps_per_novel: reps,
                draw_counts: draws,
                passage_len: len,
                seed,
            };
            let report = sanity::run(&c, &embedder.spec()?, &cfg)?;
            write_file(&out, |w| report.write_csv(w))?;
            if let Some(q) = queries {
                write_file(&q, |w| report.write_queries(w))?;
            }
            for r in &report.results {
                println!("draws {}: accuracy {}", r.draws, r.accuracy);
            }
        }
        Command::Temporal(TemporalCmd::Curve { args, query, metadata }) => {
            let (s, c) = args.load()?;
            let docs = match &query {
                Some(q) => filter_by_labels(&c, q)?,
                None => s.doc_ids().to_vec(),
            };
            let curve = temporal::offset_curve(&docs, &s, &c, &args.config()?)?;
            write_file(&args.out, |w| curve.write_csv(w))?;
            if let Some(p) = metadata {
                let text = serde_json::to_string_pretty(&curve.metadata())?;
                fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))?;
            }
            finish_curve(&args, PlotKind::OffsetCurve)?;
        }
        Command::Temporal(TemporalCmd::Trajectory { args, doc }) => {
            let (s, c) = args.load()?;
            let cfg = args.config()?;
            let t = temporal::novel_trajectory(&doc, &s, &c, cfg.bounds, cfg.seed)?;
            write_file(&args.out, |w| t.write_csv(w))?;
            finish_curve(&args, PlotKind::Trajectory)?;
        }
        Command::Temporal(TemporalCmd::Compare {
            args,
            group,
            comparison,
        }) => {
            let (s, c) = args.load()?;
            let spec = GroupSpec {
                name: group.clone(),
                members: filter_by_labels(&c, &group)?,
                comparison: filter_by_labels(&c, &comparison)?,
            };
            let cmp = temporal::stratified_compare(&spec, &s, &c, &args.config()?)?;
            write_file(&args.out, |w| cmp.write_csv(w, &group, &comparison))?;
            finish_curve(&args, PlotKind::OffsetCurve)?;
        }
        Command::Classify(ClassifyCmd::Train {
            data,
            lambda,
            epochs,
            out,
        }) => {
            let (m, pos, neg) = data.load()?;
            let model = classify::train(
                &m,
                &pos,
                &neg,
                TrainParams {
                    lambda,
                    epochs,
                    seed: data.seed,
                },
            )?;
            model.save(&out)?;
            println!(
                "{} positive, {} negative, objective {}",
                pos.len(),
                neg.len(),
                model.objective
            );
        }
        Command::Classify(ClassifyCmd::Predict {
            model,
            embeddings,
            standardized,
            out,
        }) => {
            let model = LinearModel::load(&model)?;
            let m = load_embeddings(&embeddings, standardized)?;
            let preds = classify::predict(&model, &m)?;
            write_file(&out, |w| classify::write_predictions(w, &preds))?;
        }
        Command::Classify(ClassifyCmd::Cv {
            data,
            folds,
            lambdas,
            epochs,
            out,
        }) => {
            let (m, pos, neg) = data.load()?;
            let rows = classify::cross_validate(&m, &pos, &neg, folds, &lambdas, epochs, data.seed)?;
            write_file(&out, |w| {
                writeln!(w, "lambda,mean_accuracy,best")?;
                rows.iter()
                    .try_for_each(|r| writeln!(w, "{},{},{}", r.lambda, r.mean_accuracy, r.best))
            })?;
        }
        Command::Plot { kind, input, out } => plot::render_file(&input, kind.into(), &out)?,
        Command::Pipeline {
            config,
            out,
            seed,
            threshold,
            draws,
            passage_len,
            dim,
            window,
            repeats,
        } => {
            let o = Overrides {
                seed,
                threshold,
                draws,
                passage_len,
                dim,
                window,
                repeats,
            };
            let manifest = pipeline::run_pipeline(&config, &out, &o)?;
            for s in &manifest.stages {
                let status = match s.status {
                    StageStatus::Ran => "ran",
                    StageStatus::Cached => "cached",
                    StageStatus::Failed => "failed",
                };
                println!("{:<16} {status}", s.name);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: cannot configure {j} workers: {e}");
            return ExitCode::from(3);
        }
    }
    match panic::catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => {
            eprintln!("error: internal error");
            ExitCode::from(3)
        }
    }
}
