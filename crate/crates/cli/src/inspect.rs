use std::io::Read;
use std::path::Path;

use egomkl::bow::{block_ranges, BlockLayout, HistogramCollection};
use egomkl::dataio::{read_codebook_centroids, read_descriptor_set, read_frame_sequence, read_json, sniff_kind, Document};
use egomkl::kernels::KernelSpec;
use egomkl::model::BinaryModel;
use egomkl::{ClassifierModel, DatasetManifest, Error, EvalReport, Result};

fn magic(path: &Path) -> Result<[u8; 4]> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = [0u8; 4];
    match f.read_exact(&mut buf) {
        Ok(()) => Ok(buf),
        // too short for a binary header; let the JSON sniffer report it
        Err(_) => Ok([0; 4]),
    }
}

pub fn inspect(path: &Path) -> Result<()> {
    match &magic(path)? {
        b"FSQ1" => {
            let seq = read_frame_sequence(path)?;
            let bytes = seq.as_bytes();
            let mean = bytes.iter().map(|&b| b as f64).sum::<f64>() / bytes.len() as f64;
            println!("frame sequence: {}x{} pixels, {} frames", seq.width(), seq.height(), seq.frame_count());
            println!("mean intensity: {mean:.2}");
        }
        b"DSC1" => {
            let set = read_descriptor_set(path)?;
            println!("descriptor set: {} descriptors of dimension {}", set.len(), set.dim());
        }
        b"CBK1" => {
            let c = read_codebook_centroids(path)?;
            println!("codebook: {} words of dimension {}", c.len(), c.dim());
        }
        _ => match sniff_kind(path)?.as_str() {
            DatasetManifest::KIND => print_manifest(&read_json(path)?),
            HistogramCollection::KIND => print_histograms(&read_json(path)?),
            ClassifierModel::KIND => print_model(&read_json(path)?),
            EvalReport::KIND => print_report(&read_json(path)?),
            other => {
                return Err(Error::Format {
                    path: path.into(),
                    msg: format!("unknown artifact kind {other:?}"),
                })
            }
        },
    }
    Ok(())
}

fn print_manifest(m: &DatasetManifest) {
    println!("dataset manifest: {} videos, {} classes", m.videos.len(), m.classes.len());
    for (k, members) in m.class_members().iter().enumerate() {
        println!("  {:>3} {:<20} {} videos", k, m.classes[k], members.len());
    }
}

fn layout_text(layout: &[BlockLayout]) -> String {
    layout
        .iter()
        .map(|b| format!("{}:{}", b.kind, b.words))
        .collect::<Vec<_>>()
        .join(" ")
}

fn print_histograms(h: &HistogramCollection) {
    println!("histograms: {} videos, blocks {}", h.videos.len(), layout_text(&h.layout));
}

/// Names a kernel by its kind and the feature blocks it reads.
fn kernel_label(spec: &KernelSpec, layout: &[BlockLayout]) -> String {
    let ranges = block_ranges(layout);
    let feats: Vec<String> = spec
        .channels
        .iter()
        .map(|c| {
            ranges
                .iter()
                .find(|(_, r)| r.start == c.offset && r.len() == c.len)
                .map_or_else(|| format!("{}..{}", c.offset, c.offset + c.len), |(k, _)| k.to_string())
        })
        .collect();
    let mut label = format!("{}[{}]", spec.kind, feats.join("+"));
    if let Some(s) = spec.sigma {
        label.push_str(&format!(" sigma={s:.4}"));
    }
    label
}

fn print_model(m: &ClassifierModel) {
    println!("model: {} on {} training videos", m.method, m.train_ids.len());
    println!("features: {}", m.features.iter().map(|f| f.name()).collect::<Vec<_>>().join(","));
    println!("blocks: {}", layout_text(&m.layout));
    println!("base kernels:");
    for (i, k) in m.kernels.iter().enumerate() {
        println!("  {i:>3} {}", kernel_label(k, &m.layout));
    }
    for (class, model) in m.classes.iter().zip(&m.models) {
        match model {
            BinaryModel::Svm(s) => {
                println!("class {class}: svm, {} support vectors, bias {:.4}", s.support().len(), s.bias);
            }
            BinaryModel::Mkl(k) => {
                let w: Vec<String> = k.weights.iter().map(|c| format!("{c:.3}")).collect();
                println!(
                    "class {class}: mkl weights c = [{}] (sum {:.3}), {} outer iterations{}",
                    w.join(", "),
                    k.weights.iter().sum::<f64>(),
                    k.outer_iterations,
                    if k.converged { "" } else { ", not converged" }
                );
            }
            BinaryModel::Boost(b) => {
                println!(
                    "class {class}: boosted, {} trials{}, training error bound {:.4}",
                    b.trials.len(),
                    if b.stopped_early { " (stopped early)" } else { "" },
                    b.error_bound()
                );
                for (t, trial) in b.trials.iter().enumerate() {
                    println!(
                        "  trial {:>3}: kernel {:>3}  w = {:.4}  e = {:.4}",
                        t + 1,
                        trial.kernel,
                        trial.weight,
                        trial.error
                    );
                }
            }
        }
    }
}

fn print_report(r: &EvalReport) {
    println!(
        "report: {} on {}, {} repeats",
        r.method,
        r.features.iter().map(|f| f.name()).collect::<Vec<_>>().join("+"),
        r.per_repeat_accuracy.len()
    );
    println!("mean accuracy: {:.2}%", r.mean_accuracy);
    println!("per-class accuracy stddev: {:.2}", r.per_class_stddev);
    let width = r.classes.iter().map(|c| c.len()).max().unwrap_or(0).max(6);
    print!("{:width$}", "");
    for c in &r.classes {
        print!(" {c:>width$}");
    }
    println!();
    for (c, row) in r.classes.iter().zip(&r.confusion) {
        print!("{c:width$}");
        for v in row {
            print!(" {v:>width$.1}");
        }
        println!();
    }
}
