//! End-to-end pipeline: manifests (and/or the synthetic corpus) → segments →
//! feature vectors → one metrics report per scenario × feature kind × model
//! cell, plus a markdown summary.
//!
//! Every stage is parallel but order-preserving, and nothing written depends
//! on wall-clock time, so identical configs produce identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav_file, resample, write_wav_file, AudioClip};
use crate::cache::{cache_file_name, format_value, read_feature_cache, write_feature_cache};
use crate::config::ExperimentConfig;
use crate::eval::metrics::markdown_table;
use crate::eval::{run_scenario, MetricsReport, ScenarioSpec};
use crate::features::{FeatureExtractor, FeatureKind, FeatureVector};
use crate::manifest::{load_manifest, ManifestSummary};
use crate::models::grid::{grid_search, Grid, GridResult};
use crate::models::{ModelFamily, TrainedModel};
use crate::preprocess::{normalize_signal, segment_coughs, CoughSegment};
use crate::synth::synth_dataset;
use crate::{Error, Result};

pub const REPORTS_DIR: &str = "reports";
pub const SUMMARY_FILE: &str = "summary.md";
pub const SEGMENTS_FILE: &str = "segments.csv";
pub const INGEST_SUMMARY_FILE: &str = "ingest_summary.json";

/// Normalized segments plus the manifest tallies.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub segments: Vec<CoughSegment>,
    pub summary: ManifestSummary,
    /// Recordings that yielded no segment.
    pub empty_recordings: usize,
}

fn load_clip(path: &Path, rate: u32) -> Result<AudioClip> {
    let clip = read_wav_file(path)?;
    Ok(resample(&clip, rate)?)
}

/// Loads every manifest, decodes and resamples the kept recordings, cuts
/// them into segments and MinMax-normalizes each segment. Synthetic
/// segments, when configured, are appended after the manifest data.
///
/// Undecodable files are moved from `kept` to the `unreadable_audio` reason.
pub fn ingest(cfg: &ExperimentConfig) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for manifest in &cfg.manifests {
        let (entries, mut summary) = load_manifest(manifest, &cfg.quality)?;
        let per_file: Vec<Result<Vec<CoughSegment>>> = entries
            .par_iter()
            .map(|e| {
                let mut clip = load_clip(&e.path, cfg.sample_rate)?;
                let base = manifest.parent().unwrap_or(Path::new(""));
                clip.source_id = e.path.strip_prefix(base).unwrap_or(&e.path).display().to_string();
                Ok(segment_coughs(&clip, e.label, e.dataset, &cfg.segmenter)
                    .iter()
                    .map(normalize_signal)
                    .collect())
            })
            .collect();
        for (entry, result) in entries.iter().zip(per_file) {
            match result {
                Ok(segs) => {
                    if segs.is_empty() {
                        log::warn!("{}: no cough segment found", entry.path.display());
                        corpus.empty_recordings += 1;
                    }
                    corpus.segments.extend(segs);
                }
                Err(e) => {
                    log::warn!("{}: skipped: {e}", entry.path.display());
                    summary.kept -= 1;
                    *summary.dropped.entry("unreadable_audio".into()).or_default() += 1;
                }
            }
        }
        log::info!(
            "{}: {} of {} rows kept, dropped {:?}",
            manifest.display(),
            summary.kept,
            summary.total,
            summary.dropped
        );
        corpus.summary.merge(&summary);
    }
    if let Some(synth) = cfg.synth_config() {
        let segs = synth_dataset(&synth, cfg.seed);
        corpus.segments.extend(segs.iter().map(normalize_signal));
    }
    let degenerate = corpus.segments.iter().filter(|s| s.degenerate).count();
    if degenerate > 0 {
        log::warn!("{degenerate} segments have zero amplitude range");
    }
    Ok(corpus)
}

/// Feature vectors per kind, in segment order. Segments whose features
/// cannot be computed are dropped with a warning.
pub fn extract_features(
    cfg: &ExperimentConfig,
    segments: &[CoughSegment],
) -> Result<BTreeMap<FeatureKind, Vec<FeatureVector>>> {
    let extractor =
        FeatureExtractor::new(&cfg.features, cfg.sample_rate).map_err(|e| Error::Config(e.to_string()))?;
    let kinds = &cfg.feature_kinds;
    let rows: Vec<Option<Vec<FeatureVector>>> = segments
        .par_iter()
        .map(|seg| match extractor.extract_many(seg, kinds) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("{}: feature extraction failed: {e}", seg.id);
                None
            }
        })
        .collect();
    let mut out: BTreeMap<FeatureKind, Vec<FeatureVector>> = kinds.iter().map(|&k| (k, Vec::new())).collect();
    for row in rows.into_iter().flatten() {
        for fv in row {
            out.get_mut(&fv.kind).expect("requested kind").push(fv);
        }
    }
    Ok(out)
}

pub fn write_features(dir: &Path, features: &BTreeMap<FeatureKind, Vec<FeatureVector>>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (&kind, vectors) in features {
        write_feature_cache(&dir.join(cache_file_name(kind)), kind, vectors)?;
    }
    Ok(())
}

pub fn read_features(dir: &Path, kinds: &[FeatureKind]) -> Result<BTreeMap<FeatureKind, Vec<FeatureVector>>> {
    kinds
        .iter()
        .map(|&k| Ok((k, read_feature_cache(&dir.join(cache_file_name(k)))?)))
        .collect()
}

/// Segment table: one row per segment, no samples.
pub fn write_segments_csv(path: &Path, segments: &[CoughSegment]) -> Result<()> {
    let cache_err = |e: csv::Error| Error::Cache(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(cache_err)?;
    w.write_record(["segment_id", "parent_id", "dataset", "label", "start_s", "end_s", "n_samples", "degenerate"])
        .map_err(cache_err)?;
    for s in segments {
        w.write_record([
            s.id.clone(),
            s.parent_id.clone(),
            s.dataset.to_string(),
            s.label.to_string(),
            format_value(s.start_s),
            format_value(s.end_s),
            s.samples.len().to_string(),
            s.degenerate.to_string(),
        ])
        .map_err(cache_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// File-system-safe version of a segment id.
pub fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Writes each segment as 16-bit PCM for listening audits. Normalized
/// segments live in [0, 1], so they are re-centred to [-1, 1] first.
pub fn write_segment_wavs(dir: &Path, segments: &[CoughSegment]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    segments.par_iter().try_for_each(|s| {
        let clip = AudioClip::new(s.samples.iter().map(|v| 2.0 * v - 1.0).collect(), s.sample_rate, s.id.clone());
        write_wav_file(&dir.join(format!("{}.wav", sanitize_id(&s.id))), &clip)
    })
}

/// Long-format waveform export (`segment_id,time_s,amplitude`) for plotting.
pub fn write_waveform_csv(path: &Path, segments: &[CoughSegment]) -> Result<()> {
    let cache_err = |e: csv::Error| Error::Cache(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(cache_err)?;
    w.write_record(["segment_id", "time_s", "amplitude"]).map_err(cache_err)?;
    for s in segments {
        let sr = s.sample_rate as f64;
        for (i, v) in s.samples.iter().enumerate() {
            w.write_record([s.id.as_str(), &format_value(s.start_s + i as f64 / sr), &format_value(*v)])
                .map_err(cache_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Long-format feature export (`segment_id,label,kind,index,value`).
pub fn write_feature_long_csv(path: &Path, features: &BTreeMap<FeatureKind, Vec<FeatureVector>>) -> Result<()> {
    let cache_err = |e: csv::Error| Error::Cache(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(cache_err)?;
    w.write_record(["segment_id", "label", "kind", "index", "value"]).map_err(cache_err)?;
    for (kind, vectors) in features {
        for fv in vectors {
            for (i, v) in fv.values.iter().enumerate() {
                w.write_record([
                    fv.segment_id.as_str(),
                    fv.label.as_str(),
                    kind.as_str(),
                    &i.to_string(),
                    &format_value(*v),
                ])
                .map_err(cache_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One requested scenario × feature kind × model cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub scenario: u8,
    pub kind: FeatureKind,
    pub family: ModelFamily,
}

impl CellKey {
    pub fn report_file_name(&self) -> String {
        format!("scenario{}_{}_{}.json", self.scenario, self.kind, self.family.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub key: CellKey,
    pub result: std::result::Result<MetricsReport, String>,
}

/// Cells in config order: scenarios, then feature kinds, then families.
pub fn requested_cells(cfg: &ExperimentConfig) -> Vec<(ScenarioSpec, CellKey)> {
    let mut out = Vec::new();
    for spec in cfg.scenario_specs() {
        for &kind in &cfg.feature_kinds {
            for &family in &cfg.model_families {
                out.push((
                    spec.clone(),
                    CellKey {
                        scenario: spec.id,
                        kind,
                        family,
                    },
                ));
            }
        }
    }
    out
}

/// Runs every requested cell in parallel; outcomes keep request order.
pub fn run_cells(cfg: &ExperimentConfig, features: &BTreeMap<FeatureKind, Vec<FeatureVector>>) -> Vec<CellOutcome> {
    requested_cells(cfg)
        .into_par_iter()
        .map(|(spec, key)| {
            let data = features.get(&key.kind).map(Vec::as_slice).unwrap_or(&[]);
            let result = if data.is_empty() {
                Err(format!("no {} vectors available", key.kind))
            } else {
                run_scenario(&spec, data, key.family, &cfg.models, &cfg.options).map_err(|e| e.to_string())
            };
            if let Err(e) = &result {
                log::warn!("cell {key:?} failed: {e}");
            }
            CellOutcome { key, result }
        })
        .collect()
}

/// Markdown summary listing every cell exactly once, followed by the
/// per-scenario result tables.
pub fn summary_markdown(outcomes: &[CellOutcome], ingest: Option<&ManifestSummary>) -> String {
    let mut s = String::from("# Experiment summary\n\n");
    if let Some(m) = ingest.filter(|m| m.total > 0) {
        let _ = writeln!(s, "Manifest rows: {} total, {} kept.", m.total, m.kept);
        for (reason, n) in &m.dropped {
            let _ = writeln!(s, "- dropped ({reason}): {n}");
        }
        s.push('\n');
    }
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    let _ = writeln!(s, "Cells: {} requested, {} completed, {failed} failed.\n", outcomes.len(), outcomes.len() - failed);
    s.push_str("| Scenario | Features | Model | Status | Accuracy | AUC |\n|---|---|---|---|---|---|\n");
    for o in outcomes {
        let k = o.key;
        match &o.result {
            Ok(r) => {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | ok | {:.2} | {:.3} |",
                    k.scenario,
                    k.kind.display_name(),
                    k.family,
                    r.accuracy,
                    r.auc
                );
            }
            Err(e) => {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | failed: {} | | |",
                    k.scenario,
                    k.kind.display_name(),
                    k.family,
                    e.replace('|', "/")
                );
            }
        }
    }
    let mut scenarios: Vec<u8> = outcomes.iter().map(|o| o.key.scenario).collect();
    scenarios.dedup();
    for id in scenarios {
        let reports: Vec<&MetricsReport> = outcomes
            .iter()
            .filter(|o| o.key.scenario == id)
            .filter_map(|o| o.result.as_ref().ok())
            .collect();
        if let Some(first) = reports.first() {
            let _ = write!(s, "\n## Scenario {id}: {}\n\n{}", first.scenario, markdown_table(&reports));
        }
    }
    s
}

/// Writes one JSON report per successful cell and the summary. Stale
/// reports of failed cells are removed so the directory mirrors the run.
pub fn write_reports(out_dir: &Path, outcomes: &[CellOutcome], ingest: Option<&ManifestSummary>) -> Result<()> {
    let dir = out_dir.join(REPORTS_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for o in outcomes {
        let path = dir.join(o.key.report_file_name());
        match &o.result {
            Ok(r) => fs::write(&path, r.to_json() + "\n").map_err(|e| Error::io(&path, e))?,
            Err(_) if path.exists() => fs::remove_file(&path).map_err(|e| Error::io(&path, e))?,
            Err(_) => {}
        }
    }
    let path = out_dir.join(SUMMARY_FILE);
    fs::write(&path, summary_markdown(outcomes, ingest)).map_err(|e| Error::io(&path, e))
}

/// Reads back the reports written by [`write_reports`], sorted by cell.
pub fn read_reports(out_dir: &Path) -> Result<Vec<MetricsReport>> {
    let dir = out_dir.join(REPORTS_DIR);
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut reports = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<MetricsReport>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by_key(|r| (r.scenario_id, r.feature_kind, r.model_family));
    Ok(reports)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub corpus_summary: ManifestSummary,
    pub n_segments: usize,
    pub cells: Vec<CellOutcome>,
}

impl ExperimentOutcome {
    pub fn all_ok(&self) -> bool {
        self.cells.iter().all(|c| c.result.is_ok())
    }
}

/// Features for `cfg`: read from the output directory's cache when
/// `use_cache` is set (the returned corpus then carries only the stored
/// manifest tallies), otherwise ingested, extracted and cached.
pub fn prepare_features(
    cfg: &ExperimentConfig,
    use_cache: bool,
) -> Result<(BTreeMap<FeatureKind, Vec<FeatureVector>>, Corpus)> {
    let summary_path = cfg.output_dir.join(INGEST_SUMMARY_FILE);
    if use_cache {
        let features = read_features(&cfg.output_dir, &cfg.feature_kinds)?;
        let summary = match fs::read_to_string(&summary_path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| Error::Cache(format!("{}: {e}", summary_path.display())))?,
            Err(_) => ManifestSummary::default(),
        };
        let corpus = Corpus {
            summary,
            ..Corpus::default()
        };
        return Ok((features, corpus));
    }
    let corpus = ingest(cfg)?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    write_segments_csv(&cfg.output_dir.join(SEGMENTS_FILE), &corpus.segments)?;
    let text = serde_json::to_string_pretty(&corpus.summary).expect("summary serializes") + "\n";
    fs::write(&summary_path, text).map_err(|e| Error::io(&summary_path, e))?;
    let features = extract_features(cfg, &corpus.segments)?;
    write_features(&cfg.output_dir, &features)?;
    Ok((features, corpus))
}

/// Full pipeline; writes the feature cache, per-cell reports and summary
/// under `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, use_cache: bool) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let (features, corpus) = prepare_features(cfg, use_cache)?;
    let cells = run_cells(cfg, &features);
    write_reports(&cfg.output_dir, &cells, Some(&corpus.summary))?;
    Ok(ExperimentOutcome {
        n_segments: features.values().next().map_or(0, Vec::len),
        corpus_summary: corpus.summary,
        cells,
    })
}

/// Trains one model on every vector of `kind` (no held-out split).
pub fn train_full(
    cfg: &ExperimentConfig,
    features: &BTreeMap<FeatureKind, Vec<FeatureVector>>,
    kind: FeatureKind,
    family: ModelFamily,
) -> Result<TrainedModel> {
    let data = features
        .get(&kind)
        .ok_or_else(|| Error::Config(format!("feature kind {kind} was not extracted")))?;
    let scale = cfg.options.feature_scaling;
    Ok(match family {
        ModelFamily::Mlp => TrainedModel::train_mlp(data, &crate::models::MlpParams { seed: cfg.seed, ..cfg.models.mlp.clone() }, scale)?,
        ModelFamily::Svm => TrainedModel::train_svm(data, &crate::models::SvmParams { seed: cfg.seed, ..cfg.models.svm.clone() }, scale)?,
    })
}

/// Grid search for one feature kind and family over the configured grid.
pub fn run_grid(
    cfg: &ExperimentConfig,
    features: &BTreeMap<FeatureKind, Vec<FeatureVector>>,
    kind: FeatureKind,
    family: ModelFamily,
) -> Result<GridResult> {
    let data = features
        .get(&kind)
        .ok_or_else(|| Error::Config(format!("feature kind {kind} was not extracted")))?;
    let grid = match family {
        ModelFamily::Mlp => Grid::Mlp(cfg.grid.mlp.clone()),
        ModelFamily::Svm => Grid::Svm(cfg.grid.svm.clone()),
    };
    grid_search(
        data,
        &grid,
        &cfg.models,
        cfg.seed,
        cfg.options.feature_scaling,
        cfg.options.group_by_recording,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SynthConfig;

    fn small_cfg(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            output_dir: dir.to_path_buf(),
            synthetic: Some(SynthConfig {
                per_class: 12,
                ..SynthConfig::default()
            }),
            scenarios: vec![5, 1],
            feature_kinds: vec![FeatureKind::Mfcc, FeatureKind::Chroma],
            ..ExperimentConfig::default()
        };
        cfg.models.mlp.hidden_layers = vec![16];
        cfg.models.mlp.max_epochs = 50;
        cfg
    }

    #[test]
    fn cell_product_and_failed_cells_have_no_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(dir.path());
        let out = run_experiment(&cfg, false).unwrap();
        assert_eq!(out.cells.len(), 2 * 2 * 2);
        // Scenario 1 draws only COUGHVID data, which the synthetic corpus lacks.
        assert!(!out.all_ok());
        for c in &out.cells {
            let exists = dir.path().join(REPORTS_DIR).join(c.key.report_file_name()).exists();
            assert_eq!(exists, c.result.is_ok(), "{:?}", c.key);
            assert_eq!(c.result.is_ok(), c.key.scenario == 5);
        }
        let summary = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(summary.matches("| 1 | ").count(), 4);
        assert_eq!(summary.matches("| 5 | ").count(), 4);
        assert_eq!(read_reports(dir.path()).unwrap().len(), 4);
    }

    #[test]
    fn cached_rerun_matches() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg(dir.path());
        cfg.scenarios = vec![5];
        cfg.model_families = vec![ModelFamily::Svm];
        run_experiment(&cfg, false).unwrap();
        let first = fs::read(dir.path().join(SUMMARY_FILE)).unwrap();
        run_experiment(&cfg, true).unwrap();
        assert_eq!(first, fs::read(dir.path().join(SUMMARY_FILE)).unwrap());
    }

    #[test]
    fn sanitized_ids() {
        assert_eq!(sanitize_id("synth-positive-0001#002"), "synth-positive-0001_002");
        assert_eq!(sanitize_id("a/b c.wav#000"), "a_b_c.wav_000");
    }
}
