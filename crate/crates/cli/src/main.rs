//! `caembed` command line: single-stage subcommands plus the end-to-end
//! experiment pipeline.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use caembed_core::cooccur::{count_cooccurrences, CooccurrenceMatrix, OovPolicy, Weighting};
use caembed_core::corpus::{build_vocabulary, tokenize, TokenizeConfig, Vocabulary};
use caembed_core::diagnostics::{
    dimension_contributions, top_extreme_rows, tukey_fences, write_fence_reports, QuartileRule,
};
use caembed_core::eval::{
    evaluate, evaluate_matrix_rows, load_dataset, write_reports, EvalReport, SimilarityDataset,
};
use caembed_core::factorize::{
    embeddings, truncated_svd_as, CoordinateSystem, EmbeddingSpec, Factorization, Side, SourceSpec,
};
use caembed_core::sparse::fmt_g17;
use caembed_core::transform::{TransformKind, TransformSpec, TransformedMatrix};

use caembed_cli::config::{parse_transform, ExperimentConfig};
use caembed_cli::pipeline::{build_transform, row_labels, run_pipeline};
use caembed_cli::summary::{emit_summary, write_summary};

#[derive(Parser)]
#[command(
    name = "caembed",
    version,
    about = "Count-based word embeddings: co-occurrence counting, CA/PMI transforms, truncated SVD, evaluation, diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct PreprocessFlags {
    /// Lowercase tokens.
    #[arg(long)]
    lowercase: bool,
    /// Delete ASCII punctuation inside tokens.
    #[arg(long)]
    strip_punct: bool,
    /// Delete ASCII digits inside tokens.
    #[arg(long)]
    strip_digits: bool,
    /// Record segment boundaries at line breaks (windows never cross them).
    #[arg(long)]
    segment_lines: bool,
}

impl PreprocessFlags {
    fn config(&self) -> TokenizeConfig {
        TokenizeConfig {
            lowercase: self.lowercase,
            strip_punct: self.strip_punct,
            strip_digits: self.strip_digits,
            segment_lines: self.segment_lines,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a corpus and write the frequency-thresholded vocabulary.
    Vocab {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_count: u64,
        #[command(flatten)]
        preprocess: PreprocessFlags,
    },
    /// Count the sparse symmetric co-occurrence matrix.
    Cooccur {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 2)]
        window: usize,
        /// harmonic | uniform
        #[arg(long, default_value = "harmonic")]
        weighting: String,
        /// delete | hold-position
        #[arg(long, default_value = "delete")]
        oov: String,
        #[command(flatten)]
        preprocess: PreprocessFlags,
    },
    /// Apply a matrix transform to a co-occurrence file.
    Transform {
        #[arg(long)]
        cooccur: PathBuf,
        /// ttest | pmi | ppmi | wpmi | stratos | power_ca:<delta>
        #[arg(long)]
        kind: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Truncated SVD of a transformed matrix; writes .sigma/.u/.v files.
    Factorize {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        output_prefix: PathBuf,
        /// Record the margin-weighted (GSVD) provenance; requires a WPMI or
        /// PMI matrix (a PMI matrix is reweighted to WPMI first).
        #[arg(long)]
        gsvd: bool,
    },
    /// Score embeddings (or raw matrix rows) on word-similarity datasets.
    Evaluate {
        /// Factorization prefix written by `factorize`.
        #[arg(long)]
        factorization: Option<PathBuf>,
        /// Transformed matrix file; used for term labels and for raw-row
        /// evaluation.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        /// Comma-separated name=path entries.
        #[arg(long, required = true, value_delimiter = ',')]
        datasets: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "200")]
        k_grid: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5")]
        p_grid: Vec<f64>,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        preprocess: PreprocessFlags,
    },
    /// Tukey fences, extreme entries, and dimension contributions.
    Diagnose {
        #[arg(long)]
        matrix: PathBuf,
        /// Co-occurrence file whose nonzero pattern must equal the matrix
        /// support mask.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value_t = 100)]
        dims: usize,
        /// interpolated | nearest-rank
        #[arg(long, default_value = "interpolated")]
        quartiles: String,
        /// Factorization prefix; enables the contribution table.
        #[arg(long)]
        factorization: Option<PathBuf>,
        /// Vocabulary for term labels.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        output_prefix: PathBuf,
        #[command(flatten)]
        preprocess: PreprocessFlags,
    },
    /// Run the full experiment described by a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// key=value overrides applied after the config file.
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// Summarize an evaluation report: per-dataset best-k rows + Total block.
    Summary {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().cmd {
        Command::Vocab {
            input,
            output,
            min_count,
            preprocess,
        } => {
            let raw = std::fs::read(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let stream = tokenize(&raw, &preprocess.config())?;
            let vocab = build_vocabulary(&stream, min_count)?;
            vocab.write_tsv(&output)?;
            eprintln!(
                "{} tokens, {} terms with count >= {min_count}",
                stream.len(),
                vocab.len()
            );
            Ok(())
        }
        Command::Cooccur {
            input,
            vocab,
            output,
            window,
            weighting,
            oov,
            preprocess,
        } => {
            let config = preprocess.config();
            let raw = std::fs::read(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let stream = tokenize(&raw, &config)?;
            let vocab = Vocabulary::read_tsv(&vocab, &config)?;
            let x = count_cooccurrences(
                &stream,
                &vocab,
                window,
                Weighting::parse(&weighting)?,
                OovPolicy::parse(&oov)?,
            )?;
            x.write_tsv(&output)?;
            eprintln!("{} entries, total mass {}", x.nnz(), x.total_mass());
            Ok(())
        }
        Command::Transform {
            cooccur,
            kind,
            output,
        } => {
            let x = CooccurrenceMatrix::read_tsv(&cooccur)?;
            let spec = parse_transform(&kind)?;
            let m = build_transform(&spec, &x)?;
            m.write_tsv(&output)?;
            eprintln!(
                "{}: {} x {} with {} support entries",
                spec.label(),
                m.nrows(),
                m.ncols(),
                m.support_nnz()
            );
            Ok(())
        }
        Command::Factorize {
            matrix,
            k,
            seed,
            output_prefix,
            gsvd,
        } => {
            let m = TransformedMatrix::read_tsv(&matrix)?;
            let (m, source) = prepare_factorize_input(m, gsvd)?;
            let f = truncated_svd_as(&m, k, seed, source)?;
            for w in f.warnings() {
                eprintln!("warning: {w}");
            }
            f.write_files(&output_prefix)?;
            eprintln!(
                "k = {}, rank = {}, sigma_1 = {}",
                f.k_max(),
                f.rank(),
                f.sigma().first().copied().unwrap_or(0.0)
            );
            Ok(())
        }
        Command::Evaluate {
            factorization,
            matrix,
            vocab,
            datasets,
            k_grid,
            p_grid,
            output,
            preprocess,
        } => cmd_evaluate(
            factorization,
            matrix,
            vocab,
            datasets,
            k_grid,
            p_grid,
            output,
            preprocess,
        ),
        Command::Diagnose {
            matrix,
            mask,
            top,
            dims,
            quartiles,
            factorization,
            vocab,
            output_prefix,
            preprocess,
        } => cmd_diagnose(
            matrix,
            mask,
            top,
            dims,
            quartiles,
            factorization,
            vocab,
            output_prefix,
            preprocess,
        ),
        Command::Pipeline { config, set } => {
            let cfg = ExperimentConfig::load(&config, &set)?;
            let outcome = run_pipeline(&cfg)?;
            eprintln!(
                "{} artifacts, {} evaluation rows; manifest at {}",
                outcome.manifest.entries.len(),
                outcome.reports.len(),
                outcome.manifest_path.display()
            );
            Ok(())
        }
        Command::Summary { report, output } => {
            let reports = caembed_core::eval::read_reports(&report)?;
            let rows = emit_summary(&reports);
            write_summary(&output, &rows)?;
            eprintln!("{} summary rows", rows.len());
            Ok(())
        }
    }
}

/// Resolves the matrix/provenance for `factorize --gsvd`: a WPMI matrix is
/// taken as-is; a PMI matrix is reweighted by the stored margins.
fn prepare_factorize_input(
    m: TransformedMatrix,
    gsvd: bool,
) -> Result<(TransformedMatrix, SourceSpec)> {
    if !gsvd {
        let source = SourceSpec {
            transform: *m.spec(),
            gsvd: false,
        };
        return Ok((m, source));
    }
    match m.spec().kind {
        TransformKind::Wpmi => {
            let source = SourceSpec {
                transform: TransformSpec::new(TransformKind::Wpmi),
                gsvd: true,
            };
            Ok((m, source))
        }
        TransformKind::Pmi => {
            let w = m.reweight_pmi_to_wpmi()?;
            let source = SourceSpec {
                transform: TransformSpec::new(TransformKind::Wpmi),
                gsvd: true,
            };
            Ok((w, source))
        }
        other => bail!(
            "--gsvd requires a WPMI or PMI matrix, got {:?}",
            other
        ),
    }
}

fn parse_dataset_args(entries: &[String]) -> Result<Vec<(String, PathBuf)>> {
    entries
        .iter()
        .map(|entry| {
            let (name, path) = entry
                .split_once('=')
                .ok_or_else(|| anyhow!("dataset entry {entry:?}: expected name=path"))?;
            Ok((name.to_string(), PathBuf::from(path)))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    factorization: Option<PathBuf>,
    matrix: Option<PathBuf>,
    vocab: PathBuf,
    datasets: Vec<String>,
    k_grid: Vec<usize>,
    p_grid: Vec<f64>,
    output: PathBuf,
    preprocess: PreprocessFlags,
) -> Result<()> {
    if factorization.is_none() && matrix.is_none() {
        bail!("pass --factorization and/or --matrix");
    }
    let vocab = Vocabulary::read_tsv(&vocab, &preprocess.config())?;
    let datasets: Vec<SimilarityDataset> = parse_dataset_args(&datasets)?
        .into_iter()
        .map(|(name, path)| {
            let d = load_dataset(&path)?;
            Ok(SimilarityDataset::new(name, d.pairs().to_vec()))
        })
        .collect::<Result<_>>()?;
    let mut reports: Vec<EvalReport> = Vec::new();

    let matrix = matrix.map(|p| TransformedMatrix::read_tsv(&p)).transpose()?;
    if let Some(m) = &matrix {
        for d in &datasets {
            reports.push(evaluate_matrix_rows(m, d, &vocab)?);
        }
    }
    if let Some(prefix) = factorization {
        let f = Factorization::read_files(&prefix)?;
        let labels: Vec<String> = match &matrix {
            Some(m) => row_labels(m, &vocab),
            None => {
                if f.u().nrows() != vocab.len() {
                    bail!(
                        "factorization has {} rows but vocabulary has {} terms; \
                         pass --matrix so dropped rows can be mapped",
                        f.u().nrows(),
                        vocab.len()
                    );
                }
                vocab.terms().to_vec()
            }
        };
        for &k in &k_grid {
            let k = k.min(f.k_max());
            for &p in &p_grid {
                let e = embeddings(
                    &f,
                    &EmbeddingSpec { k, p },
                    CoordinateSystem::Alternative,
                    Side::Target,
                    &labels,
                )?;
                for d in &datasets {
                    reports.push(evaluate(&e, d, &vocab)?);
                }
            }
        }
    }
    write_reports(&output, &reports)?;
    eprintln!("{} evaluation rows", reports.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_diagnose(
    matrix: PathBuf,
    mask: Option<PathBuf>,
    top: usize,
    dims: usize,
    quartiles: String,
    factorization: Option<PathBuf>,
    vocab: Option<PathBuf>,
    output_prefix: PathBuf,
    preprocess: PreprocessFlags,
) -> Result<()> {
    let m = TransformedMatrix::read_tsv(&matrix)?;
    if let Some(mask_path) = mask {
        let x = CooccurrenceMatrix::read_tsv(&mask_path)?;
        let mask_nnz = x.matrix().nnz();
        if mask_nnz != m.support_nnz() {
            bail!(
                "mask has {} nonzeros but matrix support has {} entries; \
                 the matrix was not built from this co-occurrence file",
                mask_nnz,
                m.support_nnz()
            );
        }
    }
    let rule = QuartileRule::parse(&quartiles)?;
    let vocab = vocab
        .map(|p| Vocabulary::read_tsv(&p, &preprocess.config()))
        .transpose()?;
    let fences = tukey_fences(&m, rule, top)?;

    let fences_path = with_suffix(&output_prefix, "fences.tsv");
    write_fence_reports(&fences_path, &[fences.clone()])?;

    let top_path = with_suffix(&output_prefix, "top.tsv");
    {
        use std::io::Write as _;
        let mut w = std::io::BufWriter::new(std::fs::File::create(&top_path)?);
        writeln!(w, "row\tcol\trow_term\tcol_term\tvalue")?;
        let term = |idx: u32| {
            vocab
                .as_ref()
                .map(|v| v.term(idx as usize).to_string())
                .unwrap_or_else(|| idx.to_string())
        };
        for &(i, j, v) in &fences.top_entries {
            writeln!(w, "{i}\t{j}\t{}\t{}\t{}", term(i), term(j), fmt_g17(v))?;
        }
        w.flush()?;
    }

    if let Some(prefix) = factorization {
        let f = Factorization::read_files(&prefix)?;
        let rows: Vec<usize> = top_extreme_rows(&fences, top)
            .into_iter()
            .filter_map(|orig| m.compact_row(orig))
            .collect();
        let contrib = dimension_contributions(&f, &rows, dims.min(f.k_max()))?;
        let labels: Vec<String> = m
            .row_map()
            .iter()
            .map(|&orig| {
                vocab
                    .as_ref()
                    .map(|v| v.term(orig as usize).to_string())
                    .unwrap_or_else(|| orig.to_string())
            })
            .collect();
        contrib.write_tsv(&with_suffix(&output_prefix, "contrib.tsv"), Some(&labels))?;
    }
    eprintln!(
        "q1={} q3={} f1={} f3={} extremes: {} low, {} high",
        fences.q1, fences.q3, fences.f1, fences.f3, fences.count_lt_f1, fences.count_gt_f3
    );
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    prefix.with_file_name(name)
}
