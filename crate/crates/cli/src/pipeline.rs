//! Staged end-to-end pipeline: corpus -> vocabulary -> co-occurrence ->
//! transforms -> factorizations -> embeddings -> evaluation/diagnostics,
//! with content-hashed artifacts, stage caching, and a deterministic run
//! manifest.
//!
//! Every stage writes its artifacts plus a `.stamp` sidecar holding the hash
//! of (stage name, parameters, input hashes). A stage is skipped when its
//! artifacts exist and the stamps match, so reruns only redo work whose
//! inputs changed. Intermediate artifacts live in the run directory unless
//! `CAEMBED_CACHE_DIR` points elsewhere; reports and the manifest always
//! stay in the run directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use sha2::{Digest, Sha256};

use caembed_core::cooccur::{count_cooccurrences, CooccurrenceMatrix};
use caembed_core::corpus::{build_vocabulary, tokenize, TokenStream, Vocabulary};
use caembed_core::diagnostics::{
    cell_inertia_contribution, dimension_contributions, top_extreme_rows, tukey_fences,
    write_fence_reports, QuartileRule,
};
use caembed_core::eval::{
    evaluate, evaluate_matrix_rows, load_dataset, write_reports, EvalReport, SimilarityDataset,
};
use caembed_core::factorize::{
    embeddings, truncated_svd_as, CoordinateSystem, EmbeddingSpec, Factorization, Side, SourceSpec,
};
use caembed_core::transform::{
    pmi_matrix, power_ca_matrix, ppmi_matrix, proportions, stratos_matrix, ttest_matrix,
    wpmi_matrix, TransformKind, TransformSpec, TransformedMatrix,
};

use crate::config::{transform_slug, ExperimentConfig};
use crate::manifest::{hash_file, hash_strings, Manifest};
use crate::summary::{emit_summary, write_summary};

pub const CACHE_DIR_ENV: &str = "CAEMBED_CACHE_DIR";

pub struct PipelineOutcome {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    pub reports: Vec<EvalReport>,
}

struct Runner {
    out_dir: PathBuf,
    cache_dir: PathBuf,
    manifest: Manifest,
    hashes: BTreeMap<String, String>,
}

impl Runner {
    fn path_for(&self, name: &str) -> PathBuf {
        if matches!(name, "eval_report.tsv" | "summary.tsv") {
            self.out_dir.join(name)
        } else {
            self.cache_dir.join(name)
        }
    }

    fn record_input(&mut self, name: &str, path: &Path) -> Result<()> {
        let h = hash_file(path)?;
        self.hashes.insert(name.to_string(), h.clone());
        self.manifest.push(name, "input", "", h);
        Ok(())
    }

    /// Ensures `artifacts` exist and are up to date, producing them when the
    /// cache key changed; registers manifest entries either way.
    fn stage(
        &mut self,
        stage_name: &str,
        artifacts: &[String],
        params: &str,
        inputs: &[&str],
        produce: impl FnOnce(&[PathBuf]) -> Result<()>,
    ) -> Result<()> {
        let mut key_parts: Vec<String> = vec![stage_name.to_string(), params.to_string()];
        for input in inputs {
            let h = self
                .hashes
                .get(*input)
                .ok_or_else(|| anyhow!("stage {stage_name}: unknown input {input}"))?;
            key_parts.push(format!("{input}={h}"));
        }
        let key = hash_strings(key_parts.iter().map(String::as_str));
        let paths: Vec<PathBuf> = artifacts.iter().map(|a| self.path_for(a)).collect();
        let cached = paths.iter().all(|p| {
            p.exists()
                && std::fs::read_to_string(stamp_path(p))
                    .map(|s| s.trim() == key)
                    .unwrap_or(false)
        });
        if !cached {
            produce(&paths).with_context(|| format!("stage {stage_name}"))?;
            for p in &paths {
                std::fs::write(stamp_path(p), &key)?;
            }
        }
        for (artifact, path) in artifacts.iter().zip(&paths) {
            let h = hash_file(path)?;
            self.hashes.insert(artifact.clone(), h.clone());
            self.manifest.push(artifact, stage_name, params, h);
        }
        Ok(())
    }
}

fn stamp_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".stamp");
    artifact.with_file_name(name)
}

/// Derives a per-stage seed from the run seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 is 32 bytes"))
}

/// Builds the requested transform from counts.
pub fn build_transform(
    spec: &TransformSpec,
    x: &CooccurrenceMatrix,
) -> caembed_core::Result<TransformedMatrix> {
    match spec.kind {
        TransformKind::Ttest => ttest_matrix(&proportions(x)?),
        TransformKind::Pmi => pmi_matrix(&proportions(x)?),
        TransformKind::Ppmi => ppmi_matrix(&proportions(x)?),
        TransformKind::Wpmi => wpmi_matrix(&proportions(x)?),
        TransformKind::Stratos => stratos_matrix(&proportions(x)?),
        TransformKind::PowerCa => power_ca_matrix(x, spec.delta.unwrap_or(1.0)),
    }
}

/// Term labels for the compact rows of a transformed matrix.
pub fn row_labels(m: &TransformedMatrix, vocab: &Vocabulary) -> Vec<String> {
    m.row_map()
        .iter()
        .map(|&orig| vocab.term(orig as usize).to_string())
        .collect()
}

fn get_stream<'a>(
    cell: &'a mut Option<TokenStream>,
    cfg: &ExperimentConfig,
) -> Result<&'a TokenStream> {
    if cell.is_none() {
        let raw = std::fs::read(&cfg.corpus)
            .with_context(|| format!("reading corpus {}", cfg.corpus.display()))?;
        *cell = Some(tokenize(&raw, &cfg.tokenize)?);
    }
    Ok(cell.as_ref().expect("just set"))
}

/// Runs the full experiment. On a stage error the partial manifest is
/// written before the error propagates, with the stage named in the context.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let out_dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    let cache_dir = std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| out_dir.clone());
    std::fs::create_dir_all(&cache_dir)?;
    let mut runner = Runner {
        out_dir: out_dir.clone(),
        cache_dir,
        manifest: Manifest::default(),
        hashes: BTreeMap::new(),
    };
    let result = run_stages(&mut runner, cfg);
    let manifest_path = out_dir.join("manifest.tsv");
    runner.manifest.write_tsv(&manifest_path)?;
    match result {
        Ok(reports) => Ok(PipelineOutcome {
            manifest_path,
            manifest: runner.manifest,
            reports,
        }),
        Err(e) => Err(e.context(format!(
            "pipeline aborted; partial manifest written to {}",
            manifest_path.display()
        ))),
    }
}

fn run_stages(r: &mut Runner, cfg: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    r.record_input("corpus", &cfg.corpus)?;
    for (name, path) in &cfg.datasets {
        r.record_input(&format!("dataset_{name}"), path)?;
    }
    let params = cfg.params_string();
    let mut stream_cell: Option<TokenStream> = None;

    // Vocabulary.
    r.stage(
        "vocab",
        &["vocab.tsv".to_string()],
        &params,
        &["corpus"],
        |paths| {
            let stream = get_stream(&mut stream_cell, cfg)?;
            let vocab = build_vocabulary(stream, cfg.min_count)?;
            vocab.write_tsv(&paths[0])?;
            Ok(())
        },
    )?;
    let vocab = Vocabulary::read_tsv(&r.path_for("vocab.tsv"), &cfg.tokenize)?;

    // Co-occurrence counts.
    r.stage(
        "cooccur",
        &["cooccur.tsv".to_string()],
        &params,
        &["corpus", "vocab.tsv"],
        |paths| {
            let stream = get_stream(&mut stream_cell, cfg)?;
            let x = count_cooccurrences(stream, &vocab, cfg.window, cfg.weighting, cfg.oov)?;
            x.write_tsv(&paths[0])?;
            Ok(())
        },
    )?;
    drop(stream_cell);
    let counts = CooccurrenceMatrix::read_tsv(&r.path_for("cooccur.tsv"))?;

    // Datasets, keyed by configured name.
    let datasets: Vec<SimilarityDataset> = cfg
        .datasets
        .iter()
        .map(|(name, path)| {
            let d = load_dataset(path)?;
            Ok(SimilarityDataset::new(name.clone(), d.pairs().to_vec()))
        })
        .collect::<Result<_>>()?;

    let mut reports: Vec<EvalReport> = Vec::new();
    let mut fence_reports = Vec::new();

    for spec in &cfg.transforms {
        let slug = transform_slug(spec);
        let matrix_name = format!("matrix_{slug}.tsv");
        let spec_label = spec.label();

        r.stage(
            "transform",
            &[matrix_name.clone()],
            &format!("{params} transform={spec_label}"),
            &["cooccur.tsv"],
            |paths| {
                let m = build_transform(spec, &counts)?;
                m.write_tsv(&paths[0])?;
                Ok(())
            },
        )?;
        let matrix = TransformedMatrix::read_tsv(&r.path_for(&matrix_name))?;
        let labels = row_labels(&matrix, &vocab);

        // Evaluation of raw matrix rows (no dimensionality reduction).
        if cfg.matrix_row_eval {
            for d in &datasets {
                match evaluate_matrix_rows(&matrix, d, &vocab) {
                    Ok(report) => reports.push(report),
                    Err(caembed_core::Error::InsufficientData(msg)) => {
                        eprintln!("warning: {spec_label} rows on {}: {msg}", d.name());
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }

        // Factorization.
        let min_dim = matrix.nrows().min(matrix.ncols());
        let k_max = cfg.k_grid.iter().copied().max().unwrap_or(1).min(min_dim);
        let gsvd = cfg.gsvd && spec.kind == TransformKind::Wpmi;
        let seed = derive_seed(cfg.seed, &spec_label);
        let fact_prefix = format!("fact_{slug}");
        let fact_files: Vec<String> = ["sigma", "u", "v"]
            .iter()
            .map(|part| format!("{fact_prefix}.{part}.tsv"))
            .collect();
        r.stage(
            "factorize",
            &fact_files,
            &format!("{params} transform={spec_label} k_max={k_max} gsvd={gsvd}"),
            &[&matrix_name],
            |paths| {
                let source = SourceSpec {
                    transform: *spec,
                    gsvd,
                };
                let f = truncated_svd_as(&matrix, k_max, seed, source)?;
                for w in f.warnings() {
                    eprintln!("warning: factorize {spec_label}: {w}");
                }
                let prefix = paths[0]
                    .to_str()
                    .and_then(|p| p.strip_suffix(".sigma.tsv"))
                    .ok_or_else(|| anyhow!("unexpected factorization path"))?;
                f.write_files(Path::new(prefix))?;
                Ok(())
            },
        )?;
        let fact = Factorization::read_files(&r.path_for(&fact_prefix))?;

        // Embeddings + evaluation over the (k, p) grid.
        let mut k_effective: Vec<usize> =
            cfg.k_grid.iter().map(|&k| k.min(k_max)).collect();
        k_effective.sort_unstable();
        k_effective.dedup();
        for &k in &k_effective {
            for &p in &cfg.p_grid {
                let emb_name = format!("emb_{slug}_k{k}_p{p}.tsv");
                r.stage(
                    "embeddings",
                    &[emb_name.clone()],
                    &format!("{params} transform={spec_label} k={k} p={p} coords=alternative side=target"),
                    &fact_files.iter().map(String::as_str).collect::<Vec<_>>(),
                    |paths| {
                        let e = embeddings(
                            &fact,
                            &EmbeddingSpec { k, p },
                            CoordinateSystem::Alternative,
                            Side::Target,
                            &labels,
                        )?;
                        e.write_tsv(&paths[0])?;
                        Ok(())
                    },
                )?;
                let e = caembed_core::factorize::EmbeddingSet::read_tsv(&r.path_for(&emb_name))?;
                // Reloaded sets lose their source label; re-attach via report.
                for d in &datasets {
                    match evaluate(&e, d, &vocab) {
                        Ok(mut report) => {
                            report.method = fact.source().label();
                            reports.push(report);
                        }
                        Err(caembed_core::Error::InsufficientData(msg)) => {
                            eprintln!(
                                "warning: {spec_label} k={k} p={p} on {}: {msg}",
                                d.name()
                            );
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }

        // Diagnostics.
        if cfg.diagnostics {
            let fences = tukey_fences(&matrix, QuartileRule::Interpolated, cfg.top_extreme)?;
            let contrib_name = format!("contrib_{slug}.tsv");
            let dims = cfg.contrib_dims.min(fact.k_max());
            r.stage(
                "diagnostics",
                &[contrib_name.clone()],
                &format!("{params} transform={spec_label} top={} dims={dims}", cfg.top_extreme),
                &[&matrix_name, &fact_files[1]],
                |paths| {
                    let rows: Vec<usize> = top_extreme_rows(&fences, cfg.top_extreme)
                        .into_iter()
                        .filter_map(|orig| matrix.compact_row(orig))
                        .collect();
                    let contrib = dimension_contributions(&fact, &rows, dims)?;
                    contrib.write_tsv(&paths[0], Some(&labels))?;
                    Ok(())
                },
            )?;
            // Cell-share sanity: the shares must account for all inertia.
            let shares = cell_inertia_contribution(&matrix)?;
            let covered: f64 =
                shares.shares.iter().map(|(_, _, s)| s).sum::<f64>() + shares.off_support_share;
            if (covered - 1.0).abs() > 1e-9 {
                eprintln!("warning: {spec_label}: inertia shares cover {covered}, expected 1");
            }
            fence_reports.push(fences);
        }
    }

    if cfg.diagnostics {
        r.stage(
            "diagnostics",
            &["fences.tsv".to_string()],
            &params,
            &["cooccur.tsv"],
            |paths| {
                write_fence_reports(&paths[0], &fence_reports)?;
                Ok(())
            },
        )?;
    }

    // Evaluation report + summary.
    reports.sort_by(|a, b| {
        a.dataset
            .cmp(&b.dataset)
            .then_with(|| a.method.cmp(&b.method))
            .then_with(|| a.k.cmp(&b.k))
            .then_with(|| a.p.total_cmp(&b.p))
    });
    let all_inputs: Vec<String> = r.hashes.keys().cloned().collect();
    r.stage(
        "evaluate",
        &["eval_report.tsv".to_string()],
        &params,
        &all_inputs.iter().map(String::as_str).collect::<Vec<_>>(),
        |paths| {
            write_reports(&paths[0], &reports)?;
            Ok(())
        },
    )?;
    r.stage(
        "summary",
        &["summary.tsv".to_string()],
        &params,
        &["eval_report.tsv"],
        |paths| {
            let rows = emit_summary(&reports);
            write_summary(&paths[0], &rows)?;
            Ok(())
        },
    )?;
    Ok(reports)
}
