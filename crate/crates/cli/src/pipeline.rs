//! Workflow stages. Each stage reads its inputs, writes into one output
//! directory and drops the config that produced it alongside.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use hydride_core::causal::{
    fci, neighborhood, CategoricalTable, ChiSquareTest, CiTest, FciConfig, FisherZTest, NumericTable, Phase,
};
use hydride_core::cif::write_cif;
use hydride_core::dataset::{
    apply_training_criteria, feature_matrix, load_records, split, write_records_jsonl, write_rejections, BinStrategy,
    LoadMode, RecordFormat,
};
use hydride_core::genvae::{
    self, fit_preprocessing, knn_leave_one_out, training_samples, EnergyEstimator, GenerateOptions, KnnEstimator,
    LatentOptions, LossWeights, TemplateLibrary, TrainConfig, VaeArch, VaeError, VaeModel,
};
use hydride_core::pcr::{subset_experiment, write_subset_csv};
use hydride_core::scoring::{e_factor, e_factor_curve, h_storage_score, round3};
use hydride_core::screen::{
    apply_filters, cumulative_accuracy, match_classify, rank, top_k, write_curve_csv, write_ranked_csv,
    write_verdicts_csv, FilterConfig, ReferenceEntry, ScoredCandidate,
};
use hydride_core::{parse_formula, MaterialRecord, ScoreVariant};

use crate::config::{CiKind, ConfigError, RunConfig};

pub const TOOL_VERSION: &str = concat!("hydride ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("missing input {0}")]
    MissingInput(PathBuf),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Process exit code for an error: 2 missing input, 3 validation, 4 numeric
/// divergence, 1 anything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::MissingInput(_) => 2,
                Failure::Invalid(_) => 3,
            };
        }
        if let Some(v) = cause.downcast_ref::<VaeError>() {
            return match v {
                VaeError::Diverged { .. } => 4,
                VaeError::Io(_) => 1,
                _ => 3,
            };
        }
        if cause.is::<ConfigError>()
            || cause.is::<hydride_core::dataset::DatasetError>()
            || cause.is::<hydride_core::causal::CausalError>()
            || cause.is::<hydride_core::pcr::PcrError>()
            || cause.is::<hydride_core::screen::ScreenError>()
            || cause.is::<hydride_core::chem::ChemError>()
            || cause.is::<csv::Error>()
        {
            return 3;
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return 2;
            }
        }
    }
    1
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::MissingInput(path.to_path_buf()).into())
    }
}

/// Create `dir` and record the config and tool version in it.
pub fn prepare_dir(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let text = format!("# tool_version = {TOOL_VERSION}\n{}", cfg.to_text());
    fs::write(dir.join("run_config.txt"), text)?;
    Ok(())
}

fn guard_inputs(outputs: &[PathBuf], inputs: &[&Path]) -> Result<()> {
    for out in outputs {
        for input in inputs {
            if let (Ok(a), Ok(b)) = (out.canonicalize(), input.canonicalize()) {
                if a == b {
                    return Err(Failure::Invalid(format!("output {} would overwrite an input", out.display())).into());
                }
            }
        }
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<MaterialRecord>> {
    require(path)?;
    let report = load_records(path, RecordFormat::from_path(path), LoadMode::Lenient)
        .with_context(|| format!("loading {}", path.display()))?;
    if !report.skipped.is_empty() {
        log::warn!("{}: skipped {} invalid rows", path.display(), report.skipped.len());
    }
    if report.records.is_empty() {
        return Err(Failure::Invalid(format!("{} has no valid records", path.display())).into());
    }
    Ok(report.records)
}

fn reference_db(path: &Path) -> Result<Vec<ReferenceEntry>> {
    Ok(load_dataset(path)?
        .into_iter()
        .map(|r| ReferenceEntry {
            id: r.id,
            formula: r.formula,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub loaded: usize,
    pub rejected: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Apply the training criteria and write the seeded split.
pub fn ingest(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<IngestSummary> {
    let records = load_dataset(dataset)?;
    let names = ["clean.jsonl", "train.jsonl", "val.jsonl", "test.jsonl"];
    guard_inputs(&names.map(|n| out.join(n)), &[dataset])?;
    prepare_dir(out, cfg)?;
    let (kept, rejected) = apply_training_criteria(&records);
    if kept.is_empty() {
        return Err(Failure::Invalid("no record passes the training criteria".into()).into());
    }
    let parts = split(&kept, &cfg.split_spec())?;
    write_records_jsonl(&kept, &out.join("clean.jsonl"))?;
    write_records_jsonl(&parts.train, &out.join("train.jsonl"))?;
    write_records_jsonl(&parts.val, &out.join("val.jsonl"))?;
    write_records_jsonl(&parts.test, &out.join("test.jsonl"))?;
    write_rejections(&rejected, &out.join("rejections.csv"))?;
    let s = IngestSummary {
        loaded: records.len(),
        rejected: rejected.len(),
        train: parts.train.len(),
        val: parts.val.len(),
        test: parts.test.len(),
    };
    log::info!("ingest: {s:?}");
    Ok(s)
}

/// Add w_h2, e_factor and score columns to a CSV with `formula` and
/// `e_form` columns. Other columns pass through unchanged.
pub fn score_table(input: &Path, output: &Path, variant: ScoreVariant) -> Result<usize> {
    require(input)?;
    guard_inputs(&[output.to_path_buf()], &[input])?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(input)?;
    let headers = rdr.headers()?.clone();
    let col = |n: &str| headers.iter().position(|h| h == n);
    let (Some(fc), Some(ec)) = (col("formula"), col("e_form")) else {
        return Err(Failure::Invalid(format!("{} needs formula and e_form columns", input.display())).into());
    };
    if let Some(parent) = output.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(output)?;
    let mut head: Vec<&str> = headers.iter().collect();
    head.extend(["w_h2", "e_factor", "score", "score_3dp"]);
    w.write_record(&head)?;
    let mut n = 0;
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let formula = parse_formula(&row[fc]).with_context(|| format!("line {line}"))?;
        let e: f64 = row[ec]
            .parse()
            .map_err(|_| Failure::Invalid(format!("line {line}: e_form {:?}", &row[ec])))?;
        let wh = formula.hydrogen_weight_fraction();
        let s = h_storage_score(e, wh, variant).map_err(|err| Failure::Invalid(format!("line {line}: {err}")))?;
        let mut rec: Vec<String> = row.iter().map(String::from).collect();
        rec.extend([
            wh.to_string(),
            e_factor(e, variant)
                .map_err(|err| Failure::Invalid(err.to_string()))?
                .to_string(),
            s.to_string(),
            format!("{:.3}", round3(s)),
        ]);
        w.write_record(&rec)?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalSummary {
    pub edges: usize,
    pub neighbors: Vec<(String, String)>,
    pub tests: usize,
}

pub fn causal(cfg: &RunConfig, records: &[MaterialRecord], out: &Path) -> Result<CausalSummary> {
    prepare_dir(out, cfg)?;
    let names: Vec<&str> = cfg.causal_features.iter().map(String::as_str).collect();
    let columns = feature_matrix(records, &names, cfg.score_variant)?;
    let owned: Vec<String> = cfg.causal_features.clone();
    let test: Box<dyn CiTest> = match cfg.ci_test {
        CiKind::ChiSquare => Box::new(ChiSquareTest::new(
            CategoricalTable::discretized(owned, &columns, cfg.bins, BinStrategy::EqualFrequency)?,
            cfg.alpha,
        )?),
        CiKind::FisherZ => Box::new(FisherZTest::new(NumericTable::new(owned, &columns)?, cfg.alpha)?),
    };
    let result = fci(test.as_ref(), &FciConfig::default());
    fs::write(out.join("pag.txt"), result.pag.to_string())?;

    let near = neighborhood(&result.pag, &cfg.causal_target, 2)?;
    let mut w = csv::Writer::from_path(out.join("neighborhood.csv"))?;
    w.write_record(["node", "distance", "via", "relation"])?;
    for n in &near {
        w.write_record([
            n.name.clone(),
            n.distance.to_string(),
            result.pag.nodes()[n.via].clone(),
            n.relation.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("ci_log.csv"))?;
    w.write_record(["phase", "x", "y", "z", "p_value", "independent", "untestable"])?;
    let node = |i: usize| result.pag.nodes()[i].clone();
    for r in &result.log.records {
        let phase = match r.phase {
            Phase::Skeleton => "skeleton",
            Phase::PossibleDSep => "possible-d-sep",
        };
        let z: Vec<String> = r.z.iter().map(|&i| node(i)).collect();
        w.write_record([
            phase.to_string(),
            node(r.x),
            node(r.y),
            z.join(";"),
            r.p_value.to_string(),
            r.independent.to_string(),
            r.untestable.to_string(),
        ])?;
    }
    w.flush()?;
    fs::write(out.join("warnings.txt"), result.warnings.join("\n"))?;
    Ok(CausalSummary {
        edges: result.pag.edge_count(),
        neighbors: near
            .iter()
            .filter(|n| n.distance == 1)
            .map(|n| (n.name.clone(), n.relation.to_string()))
            .collect(),
        tests: result.log.records.len(),
    })
}

/// Fit every non-empty subset of the configured features.
pub fn pcr(cfg: &RunConfig, records: &[MaterialRecord], out: &Path) -> Result<usize> {
    prepare_dir(out, cfg)?;
    let p = cfg.pcr_features.len();
    let subsets: Vec<Vec<String>> = (1u32..(1 << p))
        .map(|mask| {
            (0..p)
                .filter(|j| mask & (1 << j) != 0)
                .map(|j| cfg.pcr_features[j].clone())
                .collect()
        })
        .collect();
    let rows = subset_experiment(
        records,
        &subsets,
        "score",
        &cfg.split_spec(),
        cfg.pcr_k,
        cfg.score_variant,
    )?;
    let file = fs::File::create(out.join("pcr_subsets.csv"))?;
    write_subset_csv(&rows, &cfg.pcr_features, file)?;
    Ok(rows.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub checkpoint: PathBuf,
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
        weights: LossWeights {
            beta: cfg.beta,
            gamma: cfg.gamma,
        },
        clip_norm: cfg.clip_norm,
        seed: cfg.seed.wrapping_add(1),
    }
}

fn write_history(path: &Path, history: &[genvae::EpochLoss]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "epoch",
        "train_total",
        "train_mse",
        "train_kl",
        "train_prop",
        "val_total",
        "val_mse",
        "val_kl",
        "val_prop",
    ])?;
    for h in history {
        let (t, v) = (h.train, h.val);
        w.write_record(
            [
                h.epoch as f64,
                t.total,
                t.mse,
                t.kl,
                t.prop,
                v.total,
                v.mse,
                v.kl,
                v.prop,
            ]
            .map(|x| x.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn train(
    cfg: &RunConfig,
    train_set: &[MaterialRecord],
    val_set: &[MaterialRecord],
    out: &Path,
) -> Result<TrainSummary> {
    prepare_dir(out, cfg)?;
    let (vocab, norm) = fit_preprocessing(train_set, cfg.score_variant)?;
    let tr = training_samples(train_set, &vocab, &norm, cfg.score_variant)?;
    let va = training_samples(val_set, &vocab, &norm, cfg.score_variant)
        .context("validation records must use only training-set elements")?;
    let arch = VaeArch {
        input_dim: norm.dim(),
        n_counts: vocab.len(),
        latent_dim: cfg.latent_dim,
        hidden: cfg.hidden.clone(),
        head_hidden: cfg.head_hidden.clone(),
    };
    let model = VaeModel::new(arch, cfg.seed)?;
    let checkpoint = out.join("model.json");
    match genvae::train(&model, &tr, &va, &train_config(cfg)) {
        Ok(outcome) => {
            outcome.model.save(&checkpoint, &vocab, &norm)?;
            write_history(&out.join("loss_history.csv"), &outcome.history)?;
            let best_val_loss = outcome
                .history
                .iter()
                .find(|h| h.epoch == outcome.best_epoch)
                .map(|h| h.val.total)
                .unwrap_or(f64::NAN);
            Ok(TrainSummary {
                best_epoch: outcome.best_epoch,
                best_val_loss,
                checkpoint,
            })
        }
        Err(VaeError::Diverged { epoch, last_good }) => {
            last_good.model.save(&out.join("model_last_good.json"), &vocab, &norm)?;
            write_history(&out.join("loss_history.csv"), &last_good.history)?;
            Err(VaeError::Diverged { epoch, last_good }.into())
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub generated: usize,
    pub discarded: usize,
    pub estimator_loo_mae: f64,
}

pub fn generate(
    cfg: &RunConfig,
    checkpoint: &Path,
    templates: &[MaterialRecord],
    out: &Path,
) -> Result<GenerateSummary> {
    require(checkpoint)?;
    let (model, vocab, norm) =
        VaeModel::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    prepare_dir(out, cfg)?;
    let lib = TemplateLibrary::from_records(templates, &vocab, &norm)?;
    let samples = training_samples(templates, &vocab, &norm, cfg.score_variant)?;
    let knn = KnnEstimator::fit(
        samples.into_iter().map(|s| s.x).collect(),
        templates.iter().map(|r| r.e_form).collect(),
        cfg.knn_k,
    )?;
    let loo = if knn.len() >= 2 {
        knn_leave_one_out(&knn)?
    } else {
        f64::NAN
    };
    let opts = GenerateOptions {
        n: cfg.n_generate,
        seed: cfg.seed.wrapping_add(2),
        latent: LatentOptions {
            steps: cfg.latent_steps,
            step_size: cfg.latent_step_size,
            max_step: cfg.latent_max_step,
            ..LatentOptions::default()
        },
        max_attempts: cfg.max_attempts,
        parallel: true,
    };
    let gen = genvae::generate(&model, &vocab, &norm, &lib, &opts)?;

    let cif_dir = out.join("cifs");
    fs::create_dir_all(&cif_dir)?;
    let mut w = csv::Writer::from_path(out.join("candidates.csv"))?;
    w.write_record([
        "id",
        "formula",
        "e_form",
        "w_h2",
        "score",
        "predicted_score",
        "template_id",
        "attempts",
        "a",
        "b",
        "c",
        "alpha",
        "beta",
        "gamma",
        "cif_path",
    ])?;
    for c in &gen.candidates {
        let e = knn.predict(&c.formula, &c.x);
        let s = h_storage_score(e, c.vector.w_h2, cfg.score_variant).unwrap_or(0.0);
        let rel = format!("cifs/{}.cif", c.id);
        fs::write(out.join(&rel), write_cif(&c.structure)?)?;
        let mut row = vec![
            c.id.clone(),
            c.formula.to_string(),
            e.to_string(),
            c.vector.w_h2.to_string(),
            s.to_string(),
            c.predicted_score.to_string(),
            c.template_id.clone(),
            c.attempts.to_string(),
        ];
        row.extend(c.vector.lattice.iter().map(|v| v.to_string()));
        row.push(rel);
        w.write_record(&row)?;
    }
    w.flush()?;
    let mut d = csv::Writer::from_path(out.join("discarded.csv"))?;
    d.write_record(["draw"])?;
    for i in &gen.discarded {
        d.write_record([i.to_string()])?;
    }
    d.flush()?;
    fs::write(
        out.join("estimator.txt"),
        format!("estimator = knn\nk = {}\nleave_one_out_mae = {loo}\n", knn.k()),
    )?;
    Ok(GenerateSummary {
        generated: gen.candidates.len(),
        discarded: gen.discarded.len(),
        estimator_loo_mae: loo,
    })
}

#[derive(Debug, Deserialize)]
struct CandidateRow {
    id: String,
    formula: String,
    e_form: f64,
    w_h2: f64,
    score: f64,
}

fn read_candidates(path: &Path) -> Result<Vec<ScoredCandidate>> {
    require(path)?;
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: CandidateRow = row?;
        out.push(ScoredCandidate {
            formula: parse_formula(&r.formula).with_context(|| format!("candidate {}", r.id))?,
            id: r.id,
            e_form: r.e_form,
            w_h2: r.w_h2,
            score: r.score,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenSummary {
    pub candidates: usize,
    pub kept: usize,
    pub top: usize,
}

pub fn screen(cfg: &RunConfig, candidates: &Path, out: &Path) -> Result<ScreenSummary> {
    let items = read_candidates(candidates)?;
    guard_inputs(&[out.join("ranked.csv"), out.join("top_k.csv")], &[candidates])?;
    prepare_dir(out, cfg)?;
    let config = FilterConfig {
        strict_metal_cap: cfg.strict_metal_cap,
        require_element_count: cfg.require_element_count,
    };
    let pairs: Vec<_> = items.iter().map(|c| (c.id.clone(), c.formula.clone())).collect();
    let verdicts = apply_filters(&pairs, &config);
    write_verdicts_csv(&verdicts, fs::File::create(out.join("verdicts.csv"))?)?;
    let kept: Vec<ScoredCandidate> = items
        .into_iter()
        .zip(&verdicts)
        .filter(|(_, v)| v.kept)
        .map(|(c, _)| c)
        .collect();
    let ranked = rank(&kept);
    let top = top_k(&ranked, cfg.top_k);
    write_ranked_csv(&ranked, fs::File::create(out.join("ranked.csv"))?)?;
    write_ranked_csv(&top, fs::File::create(out.join("top_k.csv"))?)?;
    Ok(ScreenSummary {
        candidates: verdicts.len(),
        kept: ranked.len(),
        top: top.len(),
    })
}

#[derive(Debug, Deserialize)]
struct RankedRow {
    id: String,
    formula: String,
}

pub fn accuracy(cfg: &RunConfig, ranked: &Path, reference: &Path, out: &Path) -> Result<Vec<(usize, f64, f64, f64)>> {
    require(ranked)?;
    let db = reference_db(reference)?;
    prepare_dir(out, cfg)?;
    let mut rows = Vec::new();
    for row in csv::Reader::from_path(ranked)?.deserialize() {
        let r: RankedRow = row?;
        rows.push((r.id, parse_formula(&r.formula)?));
    }
    if rows.is_empty() {
        bail!(Failure::Invalid(format!("{} has no candidates", ranked.display())));
    }
    let classes: Vec<_> = rows.iter().map(|(_, f)| match_classify(f, &db)).collect();
    let mut w = csv::Writer::from_path(out.join("matches.csv"))?;
    w.write_record(["rank", "id", "formula", "match", "matched_id"])?;
    for (i, ((id, f), m)) in rows.iter().zip(&classes).enumerate() {
        w.write_record([
            (i + 1).to_string(),
            id.clone(),
            f.to_string(),
            m.kind.to_string(),
            m.matched_id.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let curve = cumulative_accuracy(&classes.iter().map(|m| m.kind).collect::<Vec<_>>())?;
    write_curve_csv(&curve, fs::File::create(out.join("accuracy_curve.csv"))?)?;
    Ok(curve
        .iter()
        .map(|p| (p.n, p.same_formula_rate, p.same_ratio_rate, p.same_elements_rate))
        .collect())
}

/// E_factor of both variants on an even grid.
pub fn efactor_curve_csv(path: &Path, lo: f64, hi: f64, points: usize) -> Result<()> {
    if points < 2 || !lo.is_finite() || !hi.is_finite() || lo >= hi {
        bail!(Failure::Invalid("need at least two points and lo < hi".into()));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["e_form", "e_factor_original", "e_factor_modified"])?;
    for (e, o, m) in e_factor_curve(lo, hi, points) {
        w.write_record([e.to_string(), o.to_string(), m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn count_rows(path: &Path) -> Option<usize> {
    csv::Reader::from_path(path).ok().map(|mut r| r.records().count())
}

fn curve_at(path: &Path, n: usize) -> Option<String> {
    let mut r = csv::Reader::from_path(path).ok()?;
    let rec = r
        .records()
        .filter_map(|x| x.ok())
        .find(|rec| rec.get(0) == Some(&n.to_string()))?;
    Some(format!("{} / {} / {}", &rec[1], &rec[2], &rec[3]))
}

/// Summarize whatever stage outputs exist under `run_dir`.
pub fn report(run_dir: &Path) -> Result<String> {
    require(run_dir)?;
    let mut lines = vec![format!("# Run report\n\ntool: {TOOL_VERSION}\n")];
    let mut push = |label: &str, value: Option<String>| {
        if let Some(v) = value {
            lines.push(format!("- {label}: {v}"));
        }
    };
    let count = |p: &str| count_rows(&run_dir.join(p)).map(|n| n.to_string());
    let jsonl = |p: &str| {
        fs::read_to_string(run_dir.join(p))
            .ok()
            .map(|t| t.lines().filter(|l| !l.trim().is_empty()).count().to_string())
    };
    push("records passing criteria", jsonl("ingest/clean.jsonl"));
    push("rejected records", count("ingest/rejections.csv"));
    push(
        "split train / val / test",
        match (
            jsonl("ingest/train.jsonl"),
            jsonl("ingest/val.jsonl"),
            jsonl("ingest/test.jsonl"),
        ) {
            (Some(a), Some(b), Some(c)) => Some(format!("{a} / {b} / {c}")),
            _ => None,
        },
    );
    push(
        "PAG edges",
        fs::read_to_string(run_dir.join("causal/pag.txt")).ok().map(|t| {
            t.lines()
                .filter(|l| !l.starts_with("node ") && !l.starts_with("sepset "))
                .count()
                .to_string()
        }),
    );
    push(
        "score neighbors",
        csv::Reader::from_path(run_dir.join("causal/neighborhood.csv"))
            .ok()
            .map(|mut r| {
                r.records()
                    .filter_map(|x| x.ok())
                    .filter(|x| &x[1] == "1")
                    .map(|x| format!("{} ({})", &x[0], &x[3]))
                    .collect::<Vec<_>>()
                    .join(", ")
            }),
    );
    push("PCR subsets fitted", count("pcr/pcr_subsets.csv"));
    push("training epochs", count("train/loss_history.csv"));
    push("generated candidates", count("generate/candidates.csv"));
    push("discarded draws", count("generate/discarded.csv"));
    push("candidates passing filters", count("screen/ranked.csv"));
    push("top-k", count("screen/top_k.csv"));
    let curve = run_dir.join("accuracy/accuracy_curve.csv");
    push("accuracy at n = 20 (formula / ratio / elements)", curve_at(&curve, 20));
    push(
        "accuracy at n = 100 (formula / ratio / elements)",
        curve_at(&curve, 100),
    );
    let text = lines.join("\n") + "\n";
    fs::write(run_dir.join("report.md"), &text)?;
    Ok(text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub ingest: IngestSummary,
    pub causal: CausalSummary,
    pub train: TrainSummary,
    pub generate: GenerateSummary,
    pub screen: ScreenSummary,
}

/// Every stage in order under `cfg.output_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dataset = cfg
        .dataset
        .clone()
        .ok_or_else(|| Failure::Invalid("dataset is not set".into()))?;
    let reference = cfg.reference_db.clone().unwrap_or_else(|| dataset.clone());
    require(&dataset)?;
    require(&reference)?;
    let root = &cfg.output_dir;
    prepare_dir(root, cfg)?;
    let ingest_dir = root.join("ingest");
    let ingest_summary = ingest(cfg, &dataset, &ingest_dir)?;
    let clean = load_dataset(&ingest_dir.join("clean.jsonl"))?;
    let train_set = load_dataset(&ingest_dir.join("train.jsonl"))?;
    let val_set = load_dataset(&ingest_dir.join("val.jsonl"))?;
    let causal_summary = causal(cfg, &clean, &root.join("causal"))?;
    pcr(cfg, &clean, &root.join("pcr"))?;
    let train_summary = train(cfg, &train_set, &val_set, &root.join("train"))?;
    let generate_summary = generate(cfg, &train_summary.checkpoint, &train_set, &root.join("generate"))?;
    let screen_summary = screen(cfg, &root.join("generate/candidates.csv"), &root.join("screen"))?;
    if screen_summary.top > 0 {
        accuracy(cfg, &root.join("screen/top_k.csv"), &reference, &root.join("accuracy"))?;
    } else {
        log::warn!("no candidate passed the filters; skipping the accuracy stage");
    }
    efactor_curve_csv(&root.join("efactor_curve.csv"), -1.5, 0.5, 2001)?;
    report(root)?;
    Ok(RunSummary {
        ingest: ingest_summary,
        causal: causal_summary,
        train: train_summary,
        generate: generate_summary,
        screen: screen_summary,
    })
}
