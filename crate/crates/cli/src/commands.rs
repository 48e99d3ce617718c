use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use serde::{Deserialize, Serialize};

use fogtype::config::ExperimentConfig;
use fogtype::data::{generate_corpus, format_num, DataLayout, Dataset, Domain, Provenance, Split, TimeSeries};
use fogtype::evaluation::{leaderboard_of, map_score, EvaluationReport, Leaderboard, ReportRow};
use fogtype::features::{build_feature_matrix, FeatureMatrix, FeatureSetId};
use fogtype::model::{check_model_gradients, gradcheck_config, N_CLASSES};
use fogtype::nn::gradcheck;
use fogtype::nn::Tensor;
use fogtype::pseudolabel::{assign_pseudo_labels, build_augmented_dataset, load_pseudo_labeled, write_pseudo_labeled};
use fogtype::rng::stable_hash;
use fogtype::stats::{cluster_subjects as cluster, separation_analysis, write_scatter_csv, write_scatter_svg, SubjectClusters};
use fogtype::training::{predict_group, train_model_group, ModelGroup, TrialData, MANIFEST_FILE};
use fogtype::Error;

/// A check that ran to completion and failed its tolerance.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

pub const EVALUATION_FILE: &str = "evaluation.json";
pub const PREDICT_SUMMARY_FILE: &str = "predict_summary.json";

fn data_root(cfg: &ExperimentConfig) -> Result<DataLayout> {
    match &cfg.data {
        Some(d) => Ok(DataLayout::new(d)),
        None => Err(Error::validation("no data root: pass --data or set FOGTYPE_DATA").into()),
    }
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.out
        .as_deref()
        .ok_or_else(|| Error::validation("this command needs --out").into())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Subject clusters for set G, read from `clusters_file` with `k` clusters.
fn clusters_for(cfg: &ExperimentConfig, set: FeatureSetId, k: usize) -> Result<Option<SubjectClusters>> {
    if set != FeatureSetId::G {
        return Ok(None);
    }
    match &cfg.clusters_file {
        Some(p) => Ok(Some(SubjectClusters::read_csv(p, Some(k))?)),
        None => Err(Error::MissingDependency(
            "feature set G needs clusters_file (run cluster-subjects first)".into(),
        )
        .into()),
    }
}

fn matrix_of(
    ds: &Dataset,
    s: &TimeSeries,
    set: FeatureSetId,
    clusters: Option<&SubjectClusters>,
) -> Result<FeatureMatrix> {
    Ok(build_feature_matrix(
        s,
        set,
        ds.metadata.get(s.trial_id()),
        ds.subject_for(s.trial_id()),
        clusters,
    )?)
}

fn trial_data(ds: &Dataset, set: FeatureSetId, clusters: Option<&SubjectClusters>) -> Result<Vec<TrialData>> {
    ds.series
        .iter()
        .map(|s| {
            Ok(TrialData {
                matrix: matrix_of(ds, s, set, clusters)?,
                labels: s.labels().to_tensor()?,
                pseudo: ds.is_pseudo(s.trial_id()),
            })
        })
        .collect()
}

/// Number of subject clusters encoded in a group's columns.
fn group_clusters(group: &ModelGroup) -> usize {
    group.columns.len().saturating_sub(FeatureSetId::G.width(0))
}

pub fn synth(cfg: &ExperimentConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    let corpus = generate_corpus(&cfg.corpus_plan())?;
    corpus.write(out)?;
    cfg.write_resolved(out)?;
    println!(
        "synth: {} train and {} test trials, {} subjects written to {}",
        corpus.train.len(),
        corpus.test.len(),
        corpus.subjects.len(),
        out.display()
    );
    Ok(())
}

pub fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let layout = data_root(cfg)?;
    let (metadata, subjects) = layout.load_tables()?;
    for s in subjects.values() {
        s.validate()?;
    }
    let mut total = 0;
    for split in [Split::Train, Split::Test] {
        for domain in [Domain::Defog, Domain::Tdcsfog, Domain::Notype] {
            let series = layout.load_series(split, domain, true)?;
            if series.is_empty() {
                continue;
            }
            let rows: usize = series.iter().map(TimeSeries::len).sum();
            let ds = Dataset {
                series,
                metadata: metadata.clone(),
                subjects: subjects.clone(),
                pseudo: Default::default(),
            };
            ds.validate()?;
            println!("ok {split}/{domain}: {} trials, {rows} rows", ds.series.len());
            total += ds.series.len();
        }
    }
    if total == 0 {
        bail!(Error::validation(format!("no trial files under {}", layout.root().display())));
    }
    println!("ok: {total} trials, {} subjects", subjects.len());
    Ok(())
}

pub fn features(cfg: &ExperimentConfig, domain: Option<Domain>, split: Split) -> Result<()> {
    let layout = data_root(cfg)?;
    let out = out_dir(cfg)?;
    let clusters = clusters_for(cfg, cfg.feature_set, cfg.clusters)?;
    let domains = match domain {
        Some(d) => vec![d],
        None => vec![Domain::Defog, Domain::Tdcsfog, Domain::Notype],
    };
    let mut n = 0;
    for d in domains {
        let ds = layout.load_dataset(split, d)?;
        if ds.series.is_empty() {
            continue;
        }
        let dir = out.join(split.as_str()).join(d.as_str());
        fs::create_dir_all(&dir)?;
        for s in &ds.series {
            let m = matrix_of(&ds, s, cfg.feature_set, clusters.as_ref())?;
            m.write_csv(&dir.join(format!("{}.csv", s.trial_id())))?;
            n += 1;
        }
    }
    cfg.write_resolved(out)?;
    println!("features: {n} set {} matrices written to {}", cfg.feature_set, out.display());
    Ok(())
}

pub fn cluster_subjects(cfg: &ExperimentConfig) -> Result<()> {
    let layout = data_root(cfg)?;
    let out = out_dir(cfg)?;
    let (_, subjects) = layout.load_tables()?;
    let clusters = cluster(&subjects, cfg.clusters, cfg.seed)?;
    fs::create_dir_all(out)?;
    let path = out.join("subject_clusters.csv");
    clusters.write_csv(&path)?;
    cfg.write_resolved(out)?;
    let mut sizes = vec![0usize; clusters.k];
    for &c in clusters.assignments.values() {
        sizes[c] += 1;
    }
    println!("cluster-subjects: k={} sizes {sizes:?} -> {}", clusters.k, path.display());
    Ok(())
}

#[derive(Serialize)]
struct SeparationSummary {
    trials: usize,
    silhouette: f64,
    explained_variance: Vec<f64>,
}

pub fn analyze_separation(cfg: &ExperimentConfig) -> Result<()> {
    let layout = data_root(cfg)?;
    let out = out_dir(cfg)?;
    let mut series = layout.load_series(Split::Train, Domain::Defog, true)?;
    series.extend(layout.load_series(Split::Train, Domain::Tdcsfog, true)?);
    let refs: Vec<&TimeSeries> = series.iter().collect();
    let sep = separation_analysis(&refs)?;
    fs::create_dir_all(out)?;
    write_scatter_csv(&sep.points, &out.join("separation.csv"))?;
    write_scatter_svg(&sep.points, &out.join("separation.svg"))?;
    write_json(
        &out.join("separation.json"),
        &SeparationSummary {
            trials: sep.points.len(),
            silhouette: sep.silhouette,
            explained_variance: sep.pca.explained_variance.clone(),
        },
    )?;
    cfg.write_resolved(out)?;
    println!("analyze-separation: {} trials, silhouette {:.4}", sep.points.len(), sep.silhouette);
    Ok(())
}

fn train_and_save(cfg: &ExperimentConfig, ds: &Dataset, domain: Domain) -> Result<ModelGroup> {
    let out = out_dir(cfg)?;
    let clusters = clusters_for(cfg, cfg.feature_set, cfg.clusters)?;
    let trials = trial_data(ds, cfg.feature_set, clusters.as_ref())?;
    let mut group = train_model_group(&trials, &cfg.train_config()?)?;
    group.domain = Some(domain);
    let manifest = group.save(out)?;
    cfg.write_resolved(out)?;
    println!(
        "{domain} set {} group: {} trials ({} pseudo), group MAP {:.4}, manifest {}",
        group.feature_set,
        trials.len(),
        group.pseudo_trials.len(),
        group.group_map,
        manifest.display()
    );
    for m in &group.members {
        println!("  fold {}: best epoch {}, out-of-fold MAP {:.4}", m.fold, m.best_epoch, m.oof_map);
    }
    Ok(group)
}

pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    let domain = cfg.domain.context("train needs --domain")?;
    if !domain.is_typed() {
        bail!(Error::validation("train needs a typed domain (defog or tdcsfog)"));
    }
    let ds = data_root(cfg)?.load_dataset(Split::Train, domain)?;
    train_and_save(cfg, &ds, domain)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictSummary {
    pub domain: Domain,
    pub split: String,
    pub trials: usize,
    pub map: Option<f64>,
}

fn write_probabilities(path: &Path, p: &Tensor) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "Time,StartHesitation,Turn,Walking")?;
    for i in 0..p.rows() {
        let r = p.row(i);
        writeln!(w, "{i},{},{},{}", format_num(r[0]), format_num(r[1]), format_num(r[2]))?;
    }
    w.flush()?;
    Ok(())
}

pub fn predict(cfg: &ExperimentConfig, manifest: &Path, split: Split) -> Result<()> {
    let domain = cfg.domain.context("predict needs --domain")?;
    let out = out_dir(cfg)?;
    let group = ModelGroup::load(manifest)?;
    if group.domain.is_some_and(|d| d != domain) {
        bail!(Error::integrity(format!(
            "model group was trained on {} but --domain is {domain}",
            group.domain.map(|d| d.to_string()).unwrap_or_default()
        )));
    }
    let ds = data_root(cfg)?.load_dataset(split, domain)?;
    let clusters = clusters_for(cfg, group.feature_set, group_clusters(&group))?;
    fs::create_dir_all(out)?;
    let mut probs = Vec::new();
    let mut labels = Vec::new();
    for s in &ds.series {
        let m = matrix_of(&ds, s, group.feature_set, clusters.as_ref())?;
        let p = predict_group(&group, &m)?;
        write_probabilities(&out.join(format!("{}.csv", s.trial_id())), &p)?;
        if let Ok(y) = s.labels().to_tensor() {
            labels.extend_from_slice(y.data());
            probs.extend_from_slice(p.data());
        }
    }
    let map = if labels.is_empty() {
        None
    } else {
        let n = labels.len() / N_CLASSES;
        map_score(
            &Tensor::from_vec(vec![n, N_CLASSES], probs)?,
            &Tensor::from_vec(vec![n, N_CLASSES], labels)?,
        )
        .ok()
    };
    write_json(
        &out.join(PREDICT_SUMMARY_FILE),
        &PredictSummary {
            domain,
            split: split.to_string(),
            trials: ds.series.len(),
            map,
        },
    )?;
    cfg.write_resolved(out)?;
    match map {
        Some(m) => println!("predict: {} {split}/{domain} trials, MAP {m:.4}", ds.series.len()),
        None => println!("predict: {} {split}/{domain} trials", ds.series.len()),
    }
    Ok(())
}

/// `<domain>-<set>-<hash of the manifest bytes>`.
fn group_id(manifest_path: &Path, group: &ModelGroup) -> Result<String> {
    let path = if manifest_path.is_dir() {
        manifest_path.join(MANIFEST_FILE)
    } else {
        manifest_path.to_path_buf()
    };
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let domain = group.domain.map(|d| d.to_string()).unwrap_or_else(|| "any".into());
    Ok(format!("{domain}-{}-{:016x}", group.feature_set, stable_hash(&bytes)))
}

pub fn pseudolabel(cfg: &ExperimentConfig, manifest: &Path) -> Result<()> {
    let out = out_dir(cfg)?;
    let group = ModelGroup::load(manifest)?;
    if group.domain != Some(Domain::Defog) {
        bail!(Error::integrity("pseudo labels must come from a Defog model group"));
    }
    let provenance = Provenance {
        group_id: group_id(manifest, &group)?,
        feature_set: group.feature_set,
        seed: group.config.seed,
    };
    let ds = data_root(cfg)?.load_dataset(Split::Train, Domain::Notype)?;
    if ds.series.is_empty() {
        bail!(Error::validation("no Notype trials to label"));
    }
    let clusters = clusters_for(cfg, group.feature_set, group_clusters(&group))?;
    let mut labelled_rows = 0usize;
    for s in &ds.series {
        let m = matrix_of(&ds, s, group.feature_set, clusters.as_ref())?;
        let p = predict_group(&group, &m)?;
        let pl = assign_pseudo_labels(s, &p, provenance.clone())?;
        labelled_rows += s.labels().event().map_or(0, |e| e.iter().filter(|&&v| v == 1).count());
        write_pseudo_labeled(out, &pl)?;
    }
    cfg.write_resolved(out)?;
    println!(
        "pseudolabel: {} Notype trials ({labelled_rows} event rows) labelled by group {}",
        ds.series.len(),
        provenance.group_id
    );
    Ok(())
}

pub fn retrain(cfg: &ExperimentConfig, pseudo_dir: &Path) -> Result<()> {
    let layout = data_root(cfg)?;
    let defog = layout.load_dataset(Split::Train, Domain::Defog)?;
    let pseudo = load_pseudo_labeled(pseudo_dir)?;
    if pseudo.is_empty() {
        bail!(Error::validation(format!("no pseudo-labelled trials in {}", pseudo_dir.display())));
    }
    let ds = build_augmented_dataset(&defog, &pseudo, cfg.feature_set)?;
    info!("retraining on {} real and {} pseudo trials", defog.series.len(), pseudo.len());
    train_and_save(cfg, &ds, Domain::Defog)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub feature_set: String,
    pub defog_group: PathBuf,
    pub tdcsfog_group: PathBuf,
    pub dmap: f64,
    pub tmap: f64,
    pub fp: f64,
    pub private: Option<f64>,
    pub public: Option<f64>,
    pub total: Option<f64>,
    /// MAP of the Defog group over the Defog test trials.
    pub test_dmap: Option<f64>,
    pub test_tmap: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub title: String,
    pub rows: Vec<EvaluationRow>,
}

#[derive(Default)]
struct Pool {
    probs: Vec<f64>,
    labels: Vec<f64>,
}

impl Pool {
    fn push(&mut self, p: &Tensor, y: &Tensor) {
        self.probs.extend_from_slice(p.data());
        self.labels.extend_from_slice(y.data());
    }

    fn map(self) -> Result<Option<f64>> {
        if self.labels.is_empty() {
            return Ok(None);
        }
        let n = self.labels.len() / N_CLASSES;
        Ok(Some(map_score(
            &Tensor::from_vec(vec![n, N_CLASSES], self.probs)?,
            &Tensor::from_vec(vec![n, N_CLASSES], self.labels)?,
        )?))
    }
}

struct TestScores {
    private: Option<f64>,
    public: Option<f64>,
    dmap: Option<f64>,
    tmap: Option<f64>,
}

fn test_scores(cfg: &ExperimentConfig, defog: &ModelGroup, tdcs: &ModelGroup) -> Result<TestScores> {
    let Ok(layout) = data_root(cfg) else {
        return Ok(TestScores {
            private: None,
            public: None,
            dmap: None,
            tmap: None,
        });
    };
    let mut private = Pool::default();
    let mut public = Pool::default();
    let mut per_domain = [Pool::default(), Pool::default()];
    for (i, (domain, group)) in [(Domain::Defog, defog), (Domain::Tdcsfog, tdcs)].into_iter().enumerate() {
        let ds = layout.load_dataset(Split::Test, domain)?;
        let clusters = clusters_for(cfg, group.feature_set, group_clusters(group))?;
        for s in &ds.series {
            let Ok(y) = s.labels().to_tensor() else { continue };
            let p = predict_group(group, &matrix_of(&ds, s, group.feature_set, clusters.as_ref())?)?;
            per_domain[i].push(&p, &y);
            match leaderboard_of(s.trial_id()) {
                Leaderboard::Private => private.push(&p, &y),
                Leaderboard::Public => public.push(&p, &y),
            }
        }
    }
    let [d, t] = per_domain;
    Ok(TestScores {
        private: private.map()?,
        public: public.map()?,
        dmap: d.map()?,
        tmap: t.map()?,
    })
}

pub fn evaluate(cfg: &ExperimentConfig, defog: &[PathBuf], tdcsfog: &[PathBuf], title: &str) -> Result<()> {
    let out = out_dir(cfg)?;
    if defog.len() != tdcsfog.len() {
        bail!(Error::validation(format!(
            "{} --defog groups but {} --tdcsfog groups; they are paired in order",
            defog.len(),
            tdcsfog.len()
        )));
    }
    let mut report = EvaluationReport {
        title: title.to_string(),
        rows: Vec::new(),
    };
    let mut rows = Vec::new();
    for (dp, tp) in defog.iter().zip(tdcsfog) {
        let d = ModelGroup::load(dp)?;
        let t = ModelGroup::load(tp)?;
        if d.domain != Some(Domain::Defog) || t.domain != Some(Domain::Tdcsfog) {
            bail!(Error::integrity(format!(
                "{} and {} are not a Defog and a Tdcsfog group",
                dp.display(),
                tp.display()
            )));
        }
        if d.feature_set != t.feature_set {
            bail!(Error::integrity(format!(
                "paired groups use feature sets {} and {}",
                d.feature_set, t.feature_set
            )));
        }
        let name = if d.pseudo_trials.is_empty() {
            d.feature_set.to_string()
        } else {
            format!("{}+pseudo", d.feature_set)
        };
        let scores = test_scores(cfg, &d, &t)?;
        let test = scores.private.zip(scores.public);
        let row = ReportRow::new(name, d.group_map, t.group_map, test)?;
        rows.push(EvaluationRow {
            feature_set: row.feature_set.clone(),
            defog_group: dp.clone(),
            tdcsfog_group: tp.clone(),
            dmap: row.dmap,
            tmap: row.tmap,
            fp: row.fp,
            private: row.private,
            public: row.public,
            total: row.total,
            test_dmap: scores.dmap,
            test_tmap: scores.tmap,
        });
        report.rows.push(row);
    }
    report.write(out, "report")?;
    write_json(
        &out.join(EVALUATION_FILE),
        &Evaluation {
            title: title.to_string(),
            rows,
        },
    )?;
    cfg.write_resolved(out)?;
    print!("{}", report.to_markdown());
    Ok(())
}

pub fn gradcheck(cfg: &ExperimentConfig, seeds: u64) -> Result<()> {
    const LAYER_TOL: f64 = 1e-5;
    const MODEL_TOL: f64 = 1e-4;
    type Check = fn(u64) -> fogtype::Result<f64>;
    let layers: [(&str, Check); 6] = [
        ("dense", gradcheck::check_dense),
        ("layer_norm", gradcheck::check_layer_norm),
        ("attention", gradcheck::check_attention),
        ("lstm_cell", gradcheck::check_lstm_cell),
        ("bilstm", gradcheck::check_bilstm),
        ("loss_head", gradcheck::check_loss_head),
    ];
    let model_cfg = gradcheck_config();
    let mut lines = vec!["check,seeds,max_rel_error,tolerance,pass".to_string()];
    let mut failed = Vec::new();
    let mut record = |name: &str, worst: f64, tol: f64| {
        let pass = worst < tol;
        println!("{name:<12} max_rel_error={worst:.3e} tol={tol:e} {}", if pass { "PASS" } else { "FAIL" });
        lines.push(format!("{name},{seeds},{worst:e},{tol:e},{pass}"));
        if !pass {
            failed.push(name.to_string());
        }
    };
    for (name, check) in layers {
        let mut worst = 0.0f64;
        for s in 0..seeds {
            worst = worst.max(check(cfg.seed.wrapping_add(s))?);
        }
        record(name, worst, LAYER_TOL);
    }
    let mut worst = 0.0f64;
    for s in 0..seeds {
        worst = worst.max(check_model_gradients(&model_cfg, cfg.seed.wrapping_add(s))?);
    }
    record("toy_model", worst, MODEL_TOL);
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("gradcheck.csv"), lines.join("\n") + "\n")?;
        cfg.write_resolved(out)?;
    }
    if !failed.is_empty() {
        bail!(CheckFailed(format!("gradient check failed for {}", failed.join(", "))));
    }
    Ok(())
}
