use std::path::{Path, PathBuf};

use egomkl::bow::{encode_video, train_codebooks, BlockLayout, HistogramCollection, VideoHistogram};
use egomkl::dataio::{
    generate_synthetic_dataset, read_codebook, read_descriptor_set, read_frame_sequence, read_json, synthesize,
    write_atomic, write_codebook, write_descriptor_set, write_json,
};
use egomkl::descriptors::{extract_descriptors, VideoDescriptors};
use egomkl::eval::{run_experiment, Dataset};
use egomkl::model::{train_model, TrainingSet};
use egomkl::{DatasetManifest, DescriptorKind, Error, Method, Result, RunConfig};
use rayon::prelude::*;

use crate::Common;

/// Loads the configuration file (or defaults), applies flag overrides and
/// sizes the global thread pool.
fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(f) = &common.features {
        cfg.features = f.clone();
    }
    if let Some(m) = common.method {
        cfg.method = m;
    }
    if let Some(k) = common.kernel {
        match cfg.method {
            Method::SingleKernel => cfg.kernels.single = k,
            Method::Multichannel => cfg.kernels.multichannel = k,
            Method::SimpleMkl | Method::BoostMkl => cfg.kernels.bank = vec![k],
        }
    }
    if let Some(r) = common.repeats {
        cfg.split.repeats = r;
    }
    cfg.validate()?;
    // a second call within one process keeps the first pool, which is harmless
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count())
        .build_global();
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn descriptor_path(dir: &Path, video_id: &str, kind: DescriptorKind) -> PathBuf {
    dir.join(format!("{video_id}.{kind}.dsc"))
}

fn codebook_path(dir: &Path, kind: DescriptorKind) -> PathBuf {
    dir.join(format!("{kind}.cbk"))
}

fn load_descriptors(manifest: &DatasetManifest, dir: &Path, kinds: &[DescriptorKind]) -> Result<Vec<VideoDescriptors>> {
    manifest
        .videos
        .par_iter()
        .map(|v| {
            kinds
                .iter()
                .map(|&k| Ok((k, read_descriptor_set(descriptor_path(dir, &v.video_id, k))?)))
                .collect::<Result<VideoDescriptors>>()
        })
        .collect()
}

pub fn synth(common: &Common, out: &Path) -> Result<()> {
    let mut cfg = resolve_config(common)?;
    if let Some(s) = common.seed {
        cfg.synth.seed = s;
    }
    let manifest = generate_synthetic_dataset(&cfg.synth, out)?;
    println!(
        "wrote {} videos in {} classes to {}",
        manifest.videos.len(),
        manifest.classes.len(),
        out.display()
    );
    Ok(())
}

pub fn extract(common: &Common, manifest_path: &Path, out: &Path) -> Result<()> {
    let cfg = resolve_config(common)?;
    let manifest: DatasetManifest = read_json(manifest_path)?;
    let base = manifest_dir(manifest_path);
    create_dir(out)?;
    let counts = (0..manifest.videos.len())
        .into_par_iter()
        .map(|i| {
            let id = &manifest.videos[i].video_id;
            let seq = read_frame_sequence(manifest.video_path(&base, i))?;
            let sets = extract_descriptors(&seq, &cfg.extract, &cfg.features)?;
            for (kind, set) in &sets {
                write_descriptor_set(set, descriptor_path(out, id, *kind))?;
            }
            Ok(sets.values().map(|s| s.len()).sum::<usize>())
        })
        .collect::<Result<Vec<usize>>>()?;
    println!(
        "extracted {} descriptors from {} videos into {}",
        counts.iter().sum::<usize>(),
        counts.len(),
        out.display()
    );
    Ok(())
}

pub fn codebook(common: &Common, manifest_path: &Path, descriptors: &Path, words: Option<usize>, out: &Path) -> Result<()> {
    let mut cfg = resolve_config(common)?;
    if let Some(w) = words {
        cfg.codebook.words = w;
        cfg.validate()?;
    }
    let manifest: DatasetManifest = read_json(manifest_path)?;
    let sets = load_descriptors(&manifest, descriptors, &cfg.features)?;
    let refs: Vec<&VideoDescriptors> = sets.iter().collect();
    let codebooks = train_codebooks(&refs, &cfg.features, &cfg.codebook, common.seed.unwrap_or(0))?;
    create_dir(out)?;
    for cb in &codebooks {
        write_codebook(cb, codebook_path(out, cb.kind()))?;
        println!("{}: {} words of dimension {}", cb.kind(), cb.word_count(), cb.dim());
    }
    Ok(())
}

pub fn encode(common: &Common, manifest_path: &Path, descriptors: &Path, codebooks: &Path, out: &Path) -> Result<()> {
    let cfg = resolve_config(common)?;
    let manifest: DatasetManifest = read_json(manifest_path)?;
    let books = cfg
        .features
        .iter()
        .map(|&k| read_codebook(codebook_path(codebooks, k), k))
        .collect::<Result<Vec<_>>>()?;
    let sets = load_descriptors(&manifest, descriptors, &cfg.features)?;
    let videos = manifest
        .videos
        .iter()
        .zip(&sets)
        .map(|(v, s)| encode_video(&v.video_id, s, &books))
        .collect::<Result<Vec<VideoHistogram>>>()?;
    let mut layout: Vec<BlockLayout> = books
        .iter()
        .map(|c| BlockLayout { kind: c.kind(), words: c.word_count() })
        .collect();
    layout.sort_by_key(|b| b.kind);
    let collection = HistogramCollection::new(layout, videos)?;
    write_json(&collection, out)?;
    println!("encoded {} videos into {}", collection.videos.len(), out.display());
    Ok(())
}

pub fn train(common: &Common, histograms: &Path, manifest_path: &Path, out: &Path) -> Result<()> {
    let cfg = resolve_config(common)?;
    let hist: HistogramCollection = read_json(histograms)?;
    let manifest: DatasetManifest = read_json(manifest_path)?;
    let features = match (&common.features, &common.config) {
        (None, None) => hist.layout.iter().map(|b| b.kind).collect(),
        _ => cfg.features.clone(),
    };
    let mut ids = Vec::with_capacity(manifest.videos.len());
    let mut vectors = Vec::with_capacity(manifest.videos.len());
    for v in &manifest.videos {
        let h = hist.get(&v.video_id).ok_or_else(|| {
            Error::validation(format!("video {:?} has no histogram in {}", v.video_id, histograms.display()))
        })?;
        ids.push(v.video_id.clone());
        vectors.push(h.to_vector());
    }
    let labels = manifest.labels();
    let set = TrainingSet {
        classes: &manifest.classes,
        layout: &hist.layout,
        ids: &ids,
        vectors: &vectors,
        labels: &labels,
    };
    let model = train_model(
        cfg.method,
        &set,
        &features,
        &cfg.kernels,
        &cfg.train_params(),
        common.seed.unwrap_or(0),
    )?;
    write_json(&model, out)?;
    println!(
        "trained {} on {} videos in {} classes ({} base kernels)",
        model.method,
        ids.len(),
        model.classes.len(),
        model.kernels.len()
    );
    Ok(())
}

pub fn evaluate(common: &Common, manifest_path: Option<&Path>, out: &Path) -> Result<()> {
    let mut cfg = resolve_config(common)?;
    if let Some(s) = common.seed {
        cfg.split.base_seed = s;
    }
    let data = match manifest_path {
        Some(path) => {
            let manifest: DatasetManifest = read_json(path)?;
            Dataset::from_manifest(&manifest, &manifest_dir(path), &cfg.extract, &cfg.features)?
        }
        None => {
            let (classes, videos) = synthesize(&cfg.synth)?;
            let videos: Vec<_> = videos.into_iter().map(|v| (v.video_id, v.class_index, v.frames)).collect();
            Dataset::from_videos(classes, &videos, &cfg.extract, &cfg.features)?
        }
    };
    let report = run_experiment(&data, &cfg)?;
    create_dir(out)?;
    write_json(&report, out.join("report.json"))?;
    write_atomic(&out.join("confusion.csv"), report.confusion_csv().as_bytes())?;
    println!(
        "{} on {}: mean accuracy {:.2}% over {} repeats (per-class stddev {:.2})",
        report.method,
        report.features.iter().map(|f| f.name()).collect::<Vec<_>>().join("+"),
        report.mean_accuracy,
        report.per_repeat_accuracy.len(),
        report.per_class_stddev
    );
    Ok(())
}
