use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use shotpose::analysis::{flatten_sequence, inertia_sweep, kmeans_fit, label_agreement, pca_fit, tsne_embed};
use shotpose::dataset::{load_dataset, resolve_joint_map, save_dataset, validate_dataset, Dataset, DatasetMeta, JointMap, Pose2D};
use shotpose::grae::{embed_dataset, load_checkpoint, prepared_sequence, save_checkpoint, train};
use shotpose::kinematics::{compare_clusters, normalize, shot_stats, ShotStats, VerticalAxis};
use shotpose::metrics::{
    combine_hota, detection_pr_ap, hota, pdj_report, selection_metrics, DetectionFrame, SelectionClip, TrackSet,
};
use shotpose::synthetic::bundled_clips;

use crate::artifacts::*;
use crate::config::RunConfig;
use crate::{fixtures, svg, PipelineError};

type Result<T> = std::result::Result<T, PipelineError>;

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn ensure_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))
}

fn joint_map(config: &RunConfig) -> Result<JointMap> {
    Ok(resolve_joint_map(&config.joint_map, Some(&config.dataset))?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Artifact { path: path.display().to_string(), message: e.to_string() })
}

// ---------- dataset ----------

/// Writes a synthetic dataset of `clips` shots plus evaluation fixtures derived from it.
pub fn cmd_synth(dest: &Path, clips: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dataset = Dataset { meta: DatasetMeta::default(), clips: bundled_clips(clips, &mut rng) };
    save_dataset(&dataset, dest)?;
    fixtures::write_all(&dataset.clips, dest, &mut rng)?;
    log::info!("wrote {clips} synthetic clips to {}", dest.display());
    Ok(dataset)
}

/// Validates `root` and writes one CSV row per clip directory when `out` is given.
pub fn cmd_validate(root: &Path, config: &RunConfig, out: Option<&Path>) -> Result<shotpose::dataset::ValidationReport> {
    let report = validate_dataset(root)?;
    for c in report.failures() {
        log::error!("{}: {}", c.clip_id.as_deref().unwrap_or(&c.dir), c.reasons.join("; "));
    }
    if let Some(out) = out {
        ensure_out(out)?;
        let rows: Vec<Vec<String>> = report
            .clips
            .iter()
            .map(|c| vec![c.dir.clone(), c.clip_id.clone().unwrap_or_default(), c.passed.to_string(), c.reasons.join("; ")])
            .collect();
        write_csv(&out.join(VALIDATION), config, &["dir", "clip_id", "passed", "reasons"], &rows)?;
    }
    Ok(report)
}

// ---------- model ----------

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub sequences: usize,
    pub skipped: usize,
    pub first_loss: f64,
    pub final_loss: f64,
}

pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary> {
    config.validate()?;
    ensure_out(&config.out)?;
    let map = joint_map(config)?;
    let dataset = load_dataset(&config.dataset)?;
    let mut clips: Vec<_> = dataset.clips.iter().collect();
    clips.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    let mut seqs = Vec::new();
    let mut skipped = 0;
    for clip in clips {
        match prepared_sequence(clip, &map) {
            Ok(s) => seqs.push(s),
            Err(reason) => {
                log::warn!("not training on clip {}: {reason}", clip.clip_id);
                skipped += 1;
            }
        }
    }
    if seqs.is_empty() {
        return Err(PipelineError::Config("no clip has usable 3D poses".into()));
    }
    let (model, history) = train(&seqs, &config.grae_config(), &map)?;
    save_checkpoint(&model, &config.out.join(MODEL))?;
    let rows: Vec<Vec<String>> = history.epoch_loss.iter().enumerate().map(|(e, l)| vec![e.to_string(), fmt(*l)]).collect();
    write_csv(&config.out.join(TRAIN_HISTORY), config, &["epoch", "loss"], &rows)?;
    let summary = TrainSummary {
        sequences: seqs.len(),
        skipped,
        first_loss: history.epoch_loss.first().copied().unwrap_or(f64::NAN),
        final_loss: history.epoch_loss.last().copied().unwrap_or(f64::NAN),
    };
    log::info!("trained on {} sequences: loss {:.3e} -> {:.3e}", summary.sequences, summary.first_loss, summary.final_loss);
    Ok(summary)
}

pub fn cmd_embed(config: &RunConfig) -> Result<usize> {
    let model = load_checkpoint(&require(&config.out, MODEL)?)?;
    let map = joint_map(config)?;
    let dataset = load_dataset(&config.dataset)?;
    let embedding = embed_dataset(&model, &dataset, &map)?;
    let dim = model.latent_dim();
    let columns: Vec<String> = std::iter::once("clip_id".to_string()).chain((0..dim).map(|i| format!("z{i}"))).collect();
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = embedding
        .latents
        .iter()
        .map(|l| std::iter::once(l.clip_id.clone()).chain(l.values.iter().map(|v| fmt(*v))).collect())
        .collect();
    write_csv(&config.out.join(LATENTS), config, &cols, &rows)?;
    log::info!("embedded {} clips into {dim} dimensions ({} skipped)", rows.len(), embedding.skipped.len());
    Ok(rows.len())
}

/// `(clip_id, latent)` rows from `latents.csv`.
pub fn read_latents(config: &RunConfig) -> Result<Vec<(String, Vec<f64>)>> {
    let table = read_csv(&config.out, LATENTS, config)?;
    table
        .rows
        .iter()
        .map(|r| {
            let values = r[1..].iter().map(|v| parse_f64(v, LATENTS)).collect::<Result<Vec<f64>>>()?;
            Ok((r[0].clone(), values))
        })
        .collect()
}

// ---------- analysis ----------

#[derive(Debug, Clone, Serialize)]
pub struct ClusterSummary {
    pub k: usize,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best-permutation agreement between latent and PCA-baseline clusterings.
    pub pca_agreement: Option<f64>,
}

pub fn cmd_cluster(config: &RunConfig) -> Result<ClusterSummary> {
    let latents = read_latents(config)?;
    let data: Vec<Vec<f64>> = latents.iter().map(|l| l.1.clone()).collect();
    let model = kmeans_fit(&data, config.k, config.seed, config.kmeans_max_iter)?;
    let rows: Vec<Vec<String>> =
        latents.iter().zip(&model.assignments).map(|(l, c)| vec![l.0.clone(), c.to_string()]).collect();
    write_csv(&config.out.join(CLUSTERS), config, &["clip_id", "cluster"], &rows)?;

    let ks: Vec<usize> = (1..=config.inertia_k_max.min(data.len())).collect();
    let sweep = inertia_sweep(&data, &ks, config.seed, config.kmeans_max_iter)?;
    let rows: Vec<Vec<String>> = sweep.iter().map(|(k, i)| vec![k.to_string(), fmt(*i)]).collect();
    write_csv(&config.out.join(INERTIA), config, &["k", "inertia"], &rows)?;

    let pca_agreement = if config.pca_baseline { Some(pca_baseline(config, &latents, &model.assignments)?) } else { None };
    log::info!("k-means k={} inertia {:.4} after {} iterations", config.k, model.inertia, model.iterations);
    Ok(ClusterSummary {
        k: config.k,
        inertia: model.inertia,
        iterations: model.iterations,
        converged: model.converged,
        pca_agreement,
    })
}

/// Clusters flattened normalized sequences after PCA to the latent width and
/// reports how well that agrees with the latent clustering.
fn pca_baseline(config: &RunConfig, latents: &[(String, Vec<f64>)], assignments: &[usize]) -> Result<f64> {
    let map = joint_map(config)?;
    let dataset = load_dataset(&config.dataset)?;
    let mut flat = Vec::new();
    for (id, _) in latents {
        let clip = dataset.clip(id).ok_or_else(|| PipelineError::Config(format!("clip {id} is not in the dataset")))?;
        let seq = prepared_sequence(clip, &map).map_err(|m| PipelineError::Config(format!("clip {id}: {m}")))?;
        flat.push(flatten_sequence(&seq));
    }
    let d = config.grae.latent_dim().min(flat.len());
    let pca = pca_fit(&flat, d)?;
    let projected = pca.transform(&flat);
    let model = kmeans_fit(&projected, config.k, config.seed, config.kmeans_max_iter)?;
    let rows: Vec<Vec<String>> =
        latents.iter().zip(&model.assignments).map(|(l, c)| vec![l.0.clone(), c.to_string()]).collect();
    write_csv(&config.out.join(CLUSTERS_PCA), config, &["clip_id", "cluster"], &rows)?;
    Ok(label_agreement(assignments, &model.assignments, config.k))
}

fn read_clusters(config: &RunConfig) -> Result<Vec<(String, usize)>> {
    let table = read_csv(&config.out, CLUSTERS, config)?;
    table
        .rows
        .iter()
        .map(|r| {
            let c = r[1].parse().map_err(|_| PipelineError::Artifact { path: CLUSTERS.into(), message: format!("bad cluster {:?}", r[1]) })?;
            Ok((r[0].clone(), c))
        })
        .collect()
}

pub fn cmd_stats(config: &RunConfig) -> Result<shotpose::kinematics::ClusterComparison> {
    let clusters = read_clusters(config)?;
    let map = joint_map(config)?;
    let dataset = load_dataset(&config.dataset)?;
    let k = clusters.iter().map(|c| c.1 + 1).max().unwrap_or(0).max(config.k);
    let mut groups: BTreeMap<usize, Vec<ShotStats>> = (0..k).map(|c| (c, Vec::new())).collect();
    let mut rows = Vec::new();
    for (id, cluster) in &clusters {
        let clip = dataset.clip(id).ok_or_else(|| PipelineError::Config(format!("clip {id} is not in the dataset")))?;
        let Some(poses) = clip.pose3d.as_ref() else {
            log::warn!("clip {id} has no 3D poses; left out of statistics");
            continue;
        };
        let stats = shot_stats(id, &normalize(poses, &map)?, &map, VerticalAxis::default())?;
        rows.push(vec![
            id.clone(),
            cluster.to_string(),
            stats.shooting_side.to_string(),
            fmt(stats.ankle_travel),
            fmt(stats.max_vertical),
            fmt(stats.min_knee_angle),
        ]);
        groups.entry(*cluster).or_default().push(stats);
    }
    write_csv(
        &config.out.join(SHOT_STATS),
        config,
        &["clip_id", "cluster", "shooting_side", "ankle_travel", "max_vertical", "min_knee_angle"],
        &rows,
    )?;
    let comparison = compare_clusters(&groups);
    for w in &comparison.warnings {
        log::warn!("{w}");
    }
    let mut rows = Vec::new();
    for s in &comparison.summaries {
        rows.push(vec![
            "mean".into(),
            s.cluster.to_string(),
            String::new(),
            s.count.to_string(),
            fmt(s.mean_ankle_travel),
            fmt(s.mean_max_vertical),
            fmt(s.mean_min_knee_angle),
        ]);
    }
    for p in &comparison.pairs {
        rows.push(vec![
            "pct_diff".into(),
            p.a.to_string(),
            p.b.to_string(),
            String::new(),
            opt(p.ankle_travel_pct),
            opt(p.max_vertical_pct),
            opt(p.min_knee_angle_pct),
        ]);
    }
    write_csv(
        &config.out.join(CLUSTER_STATS),
        config,
        &["row", "a", "b", "count", "ankle_travel", "max_vertical", "min_knee_angle"],
        &rows,
    )?;
    Ok(comparison)
}

pub fn cmd_tsne(config: &RunConfig) -> Result<f64> {
    let latents = read_latents(config)?;
    let data: Vec<Vec<f64>> = latents.iter().map(|l| l.1.clone()).collect();
    let emb = tsne_embed(&data, &config.tsne_config())?;
    let rows: Vec<Vec<String>> =
        latents.iter().zip(&emb.points).map(|(l, p)| vec![l.0.clone(), fmt(p[0]), fmt(p[1])]).collect();
    write_csv(&config.out.join(TSNE), config, &["clip_id", "x", "y"], &rows)?;
    let rows: Vec<Vec<String>> = emb.kl_history.iter().map(|(i, kl)| vec![i.to_string(), fmt(*kl)]).collect();
    write_csv(&config.out.join(TSNE_KL), config, &["iteration", "kl"], &rows)?;
    log::info!("t-SNE final KL {:.4}", emb.final_kl);
    Ok(emb.final_kl)
}

// ---------- evaluation ----------

/// Scores predicted 2D poses (`clip_id -> frames`) against the dataset's shooter poses.
pub fn cmd_eval_pose(config: &RunConfig, pred_path: &Path) -> Result<Value> {
    let map = joint_map(config)?;
    let dataset = load_dataset(&config.dataset)?;
    let preds: BTreeMap<String, Vec<Pose2D>> = read_json(pred_path)?;
    let mut pairs = Vec::new();
    for (id, frames) in &preds {
        let Some(gt) = dataset.clip(id).and_then(|c| c.pose2d.as_ref()) else {
            log::warn!("no ground-truth 2D poses for clip {id}");
            continue;
        };
        if gt.len() != frames.len() {
            return Err(PipelineError::Config(format!("clip {id}: {} predicted frames for {} ground-truth frames", frames.len(), gt.len())));
        }
        pairs.extend(frames.iter().copied().zip(gt.iter().copied()));
    }
    let report = pdj_report(&pairs, config.pdj_threshold, &map)?;
    let value = serde_json::to_value(&report).expect("report serializes");
    ensure_out(&config.out)?;
    write_json(&config.out.join(POSE_EVAL), &value)?;
    Ok(value)
}

pub fn cmd_eval_detect(config: &RunConfig, path: &Path) -> Result<Value> {
    let frames: Vec<DetectionFrame> = read_json(path)?;
    let r = detection_pr_ap(&frames, config.iou_threshold)?;
    let value = json!({
        "iou_threshold": config.iou_threshold,
        "precision": r.precision,
        "recall": r.recall,
        "ap": r.ap,
        "true_positives": r.true_positives,
        "false_positives": r.false_positives,
        "ground_truth": r.ground_truth,
        "precision_defined": r.precision_defined,
    });
    ensure_out(&config.out)?;
    write_json(&config.out.join(DETECTION_EVAL), &value)?;
    Ok(value)
}

/// Both files map sequence names to track sets; a sequence missing from the predictions counts as empty.
pub fn cmd_eval_track(config: &RunConfig, gt_path: &Path, pred_path: &Path) -> Result<Value> {
    let gt: BTreeMap<String, TrackSet> = read_json(gt_path)?;
    let pred: BTreeMap<String, TrackSet> = read_json(pred_path)?;
    let empty = TrackSet::default();
    let mut per_seq = Vec::new();
    for (name, g) in &gt {
        per_seq.push(hota(g, pred.get(name).unwrap_or(&empty))?);
    }
    let r = combine_hota(&per_seq)?;
    let value = json!({
        "sequences": gt.len(),
        "hota": r.hota,
        "det_a": r.det_a,
        "ass_a": r.ass_a,
        "alphas": r.alphas,
        "hota_alpha": r.hota_alpha,
        "det_a_alpha": r.det_a_alpha,
        "ass_a_alpha": r.ass_a_alpha,
    });
    ensure_out(&config.out)?;
    write_json(&config.out.join(TRACKING_EVAL), &value)?;
    Ok(value)
}

pub fn cmd_eval_select(config: &RunConfig, path: &Path) -> Result<Value> {
    let clips: Vec<SelectionClip> = read_json(path)?;
    let r = selection_metrics(&clips, config.selection_threshold)?;
    let value = serde_json::to_value(&r).expect("result serializes");
    ensure_out(&config.out)?;
    write_json(&config.out.join(SELECTION_EVAL), &value)?;
    Ok(value)
}

// ---------- report ----------

fn pct(v: &Value) -> String {
    v.as_f64().map(|x| format!("{:.1}", x * 100.0)).unwrap_or_else(|| "-".into())
}

/// Markdown tables for whichever evaluation outputs exist.
fn metric_tables(out: &Path) -> Result<Option<String>> {
    let load = |name: &str| -> Result<Option<Value>> {
        let p = out.join(name);
        if p.is_file() { read_json(&p).map(Some) } else { Ok(None) }
    };
    let mut md = String::new();
    if let Some(v) = load(DETECTION_EVAL)? {
        md += "## Detection\n\n| Precision | Recall | AP50 |\n|---|---|---|\n";
        md += &format!("| {} | {} | {} |\n\n", pct(&v["precision"]), pct(&v["recall"]), pct(&v["ap"]));
    }
    if let Some(v) = load(TRACKING_EVAL)? {
        md += "## Tracking\n\n| HOTA | DetA | AssA |\n|---|---|---|\n";
        md += &format!("| {} | {} | {} |\n\n", pct(&v["hota"]), pct(&v["det_a"]), pct(&v["ass_a"]));
    }
    if let Some(v) = load(SELECTION_EVAL)? {
        md += "## Tracklet selection\n\n| Precision | Recall | ACC | CLIP ACC |\n|---|---|---|---|\n";
        md += &format!("| {} | {} | {} | {} |\n\n", pct(&v["precision"]), pct(&v["recall"]), pct(&v["acc"]), pct(&v["clip_acc"]));
    }
    if let Some(v) = load(POSE_EVAL)? {
        let groups = v["groups"].as_array().cloned().unwrap_or_default();
        let names: Vec<String> = groups.iter().map(|g| g["group"].as_str().unwrap_or("?").to_string()).collect();
        md += &format!("## 2D pose (PDJ@{})\n\n| {} | Mean | AUC |\n", v["threshold"], names.join(" | "));
        md += &format!("|{}\n", "---|".repeat(names.len() + 2));
        let cells: Vec<String> = groups.iter().map(|g| pct(&g["pdj"])).collect();
        md += &format!("| {} | {} | {} |\n\n", cells.join(" | "), pct(&v["overall_pdj"]), pct(&v["overall_auc"]));
    }
    Ok((!md.is_empty()).then_some(md))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Assembles `report/`: the cluster, t-SNE and statistics CSVs, the t-SNE scatter SVG,
/// metric tables when evaluations were run, and `manifest.json`.
pub fn cmd_report(config: &RunConfig) -> Result<PathBuf> {
    let inputs = [CLUSTERS, TSNE, SHOT_STATS, CLUSTER_STATS];
    for a in inputs {
        require(&config.out, a)?;
    }
    let dir = config.out.join(REPORT_DIR);
    ensure_out(&dir)?;
    for a in inputs {
        fs::copy(config.out.join(a), dir.join(a)).map_err(|e| PipelineError::io(&dir.join(a), e))?;
    }
    let clusters: BTreeMap<String, usize> = read_clusters(config)?.into_iter().collect();
    let tsne = read_csv(&config.out, TSNE, config)?;
    let mut points = Vec::new();
    for r in &tsne.rows {
        let cluster = *clusters.get(&r[0]).ok_or_else(|| PipelineError::Artifact {
            path: TSNE.into(),
            message: format!("clip {} has no cluster", r[0]),
        })?;
        points.push((r[0].clone(), [parse_f64(&r[1], TSNE)?, parse_f64(&r[2], TSNE)?], cluster));
    }
    let figure = "tsne_clusters.svg";
    let svg = svg::cluster_scatter(&format!("Shot embeddings (k = {})", config.k), &points);
    fs::write(dir.join(figure), svg).map_err(|e| PipelineError::io(&dir.join(figure), e))?;

    let mut files: Vec<String> = inputs.iter().map(|s| s.to_string()).collect();
    files.push(figure.into());
    if let Some(md) = metric_tables(&config.out)? {
        fs::write(dir.join("metrics.md"), md).map_err(|e| PipelineError::io(&dir.join("metrics.md"), e))?;
        files.push("metrics.md".into());
    }
    let mut artifacts = Vec::new();
    for f in &files {
        artifacts.push(json!({ "file": f, "sha256": sha256_file(&dir.join(f))?, "producer": producer(f) }));
    }
    let manifest = json!({
        "format": FORMAT_VERSION,
        "config_hash": config.hash(),
        "seeds": { "train": config.seed, "kmeans": config.seed, "tsne": config.seed },
        "config": config,
        "artifacts": artifacts,
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    log::info!("report written to {}", dir.display());
    Ok(dir)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub train: TrainSummary,
    pub embedded: usize,
    pub cluster: ClusterSummary,
    pub final_kl: f64,
    pub report: PathBuf,
}

/// validate, train, embed, cluster, stats, tsne, report.
pub fn cmd_run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let report = cmd_validate(&config.dataset, config, Some(&config.out))?;
    let failed = report.failures().count();
    if failed > 0 {
        return Err(PipelineError::ValidationFailed(failed));
    }
    let train = cmd_train(config)?;
    let embedded = cmd_embed(config)?;
    let cluster = cmd_cluster(config)?;
    cmd_stats(config)?;
    let final_kl = cmd_tsne(config)?;
    let report = cmd_report(config)?;
    Ok(RunSummary { train, embedded, cluster, final_kl, report })
}
