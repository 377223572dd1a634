use std::fs;
use std::path::Path;

use cough_screen::cache::{read_feature_cache, write_feature_cache};
use cough_screen::config::ExperimentConfig;
use cough_screen::experiment::{extract_features, ingest, requested_cells, run_experiment, REPORTS_DIR};
use cough_screen::features::FeatureKind;
use cough_screen::manifest::{load_manifest, QualityFilter};
use cough_screen::models::ModelFamily;
use cough_screen::synth::{write_synth_corpus, SynthConfig};

fn repo_config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap()
}

#[test]
fn shipped_example_config_lists_the_defaults() {
    let cfg = repo_config("example.toml");
    let defaults = ExperimentConfig {
        manifests: cfg.manifests.clone(),
        ..ExperimentConfig::default()
    };
    assert_eq!(cfg, defaults);
    assert_eq!(cfg.manifests.len(), 2);
    let synth = repo_config("synthetic.toml");
    assert_eq!(synth.synthetic.as_ref().unwrap().per_class, 200);
}

#[test]
fn full_request_is_48_cells() {
    let cfg = ExperimentConfig {
        synthetic: Some(SynthConfig::default()),
        ..ExperimentConfig::default()
    };
    let cells = requested_cells(&cfg);
    assert_eq!(cells.len(), 6 * 4 * 2);
    let mut keys: Vec<_> = cells.iter().map(|c| c.1).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 48);
}

#[test]
fn manifest_to_features_and_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig {
        per_class: 6,
        ..SynthConfig::default()
    };
    let manifest = write_synth_corpus(dir.path(), &synth, 3).unwrap();
    // One extra row pointing at a missing file, one below the quality bar.
    let mut text = fs::read_to_string(&manifest).unwrap();
    text = text.replace("path,dataset,label", "path,dataset,label,cough_detected");
    let mut lines: Vec<String> = text.lines().map(|l| l.to_string()).collect();
    for l in lines.iter_mut().skip(1) {
        l.push_str(",0.95");
    }
    lines.push("audio/missing.wav,COUGHVID,negative,0.9".into());
    lines.push(format!("{},Virufy,positive,0.5", lines[1].split(',').next().unwrap()));
    fs::write(&manifest, lines.join("\n") + "\n").unwrap();

    let (entries, summary) = load_manifest(&manifest, &QualityFilter::default()).unwrap();
    assert_eq!(summary.total, 8);
    assert_eq!(entries.len(), 6);
    assert_eq!(summary.kept + summary.dropped.values().sum::<usize>(), summary.total);

    let cfg = ExperimentConfig {
        manifests: vec![manifest],
        feature_kinds: FeatureKind::ALL.to_vec(),
        output_dir: dir.path().join("out"),
        ..ExperimentConfig::default()
    };
    cfg.validate().unwrap();
    let corpus = ingest(&cfg).unwrap();
    assert_eq!(corpus.segments.len(), 12);
    assert!(corpus.segments.iter().all(|s| !s.degenerate));
    let features = extract_features(&cfg, &corpus.segments).unwrap();
    for (kind, vectors) in &features {
        assert_eq!(vectors.len(), 12);
        let path = dir.path().join(format!("{kind}.csv"));
        write_feature_cache(&path, *kind, vectors).unwrap();
        assert_eq!(&read_feature_cache(&path).unwrap(), vectors);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let mut outputs = Vec::new();
    for jobs in [1, 3] {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig {
            output_dir: dir.path().to_path_buf(),
            synthetic: Some(SynthConfig {
                per_class: 16,
                ..SynthConfig::default()
            }),
            scenarios: vec![5],
            model_families: vec![ModelFamily::Mlp, ModelFamily::Svm],
            seed: 11,
            ..ExperimentConfig::default()
        };
        cfg.models.mlp.hidden_layers = vec![16, 8];
        cfg.models.mlp.max_epochs = 40;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().unwrap();
        pool.install(|| run_experiment(&cfg, false)).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        for sub in [dir.path().to_path_buf(), dir.path().join(REPORTS_DIR)] {
            for e in fs::read_dir(&sub).unwrap() {
                let p = e.unwrap().path();
                if p.is_file() {
                    files.push((p.file_name().unwrap().to_string_lossy().into(), fs::read(&p).unwrap()));
                }
            }
        }
        files.sort();
        outputs.push(files);
    }
    // 8 reports, 4 feature caches, summary, segment table, ingest tallies.
    assert_eq!(outputs[0].len(), 8 + 4 + 3);
    assert_eq!(outputs[0], outputs[1]);
}
