//! Deterministic evaluation passes, metrics and embedding export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use vtcc_tensor::{no_grad, NormMode, Tensor};

use crate::augment::{eval_view, AugmentationSpec};
use crate::data::Dataset;
use crate::error::{Result, VtccError};
use crate::image::Image;
use crate::kmeans::{kmeans, DEFAULT_MAX_ITER, DEFAULT_RESTARTS};
use crate::loss::{hard_assignments, Objective};
use crate::metrics::MetricsReport;
use crate::model::Vtcc;

pub const EVAL_BATCH: usize = 128;

/// Model outputs for every sample, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub n: usize,
    pub clusters: usize,
    pub instance_dim: usize,
    /// `[n, clusters]` soft assignments.
    pub probs: Vec<f64>,
    /// `[n, instance_dim]` instance embeddings.
    pub instance: Vec<f64>,
}

impl Embeddings {
    pub fn assignments(&self) -> Vec<usize> {
        hard_assignments(&self.probs, self.clusters)
    }

    pub fn instance_rows(&self) -> Vec<Vec<f64>> {
        self.instance.chunks(self.instance_dim).map(<[f64]>::to_vec).collect()
    }

    /// Mean assignment mass per cluster and its entropy.
    pub fn mass_entropy(&self) -> (Vec<f64>, f64) {
        let mut mass = vec![0.0; self.clusters];
        for row in self.probs.chunks(self.clusters) {
            mass.iter_mut().zip(row).for_each(|(m, p)| *m += p / self.n as f64);
        }
        let h = mass.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
        (mass, h)
    }
}

/// Converts stored images to the model's channel count; incompatible
/// channel counts are a load error.
pub fn model_images(data: &Dataset, channels: usize) -> Result<Vec<Image>> {
    (0..data.len())
        .map(|i| {
            data.image(i)
                .with_channels(channels)
                .map_err(|e| VtccError::load(format!("<record {i}>"), e.to_string()))
        })
        .collect()
}

/// Forward pass without augmentation, batch norm in eval mode.
pub fn embed_images(model: &mut Vtcc<f32>, images: &[Image], spec: &AugmentationSpec) -> Result<Embeddings> {
    let cfg = model.config.clone();
    let (c, side) = (cfg.in_channels, cfg.image_side);
    let mut probs = Vec::with_capacity(images.len() * cfg.clusters());
    let mut instance = Vec::with_capacity(images.len() * cfg.projector.instance_out_dim);
    for chunk in images.chunks(EVAL_BATCH) {
        let mut buf = Vec::with_capacity(chunk.len() * c * side * side);
        for img in chunk {
            if img.channels != c {
                return Err(VtccError::Load {
                    path: "<dataset>".into(),
                    msg: format!("image has {} channels, model expects {c}", img.channels),
                });
            }
            buf.extend(eval_view(img, spec));
        }
        let x = Tensor::new(buf, &[chunk.len(), c, side, side])?;
        let out = no_grad(|| model.forward(&x, NormMode::Eval))?;
        probs.extend(out.y.data().iter().map(|&v| v as f64));
        instance.extend(out.z.data().iter().map(|&v| v as f64));
    }
    Ok(Embeddings {
        n: images.len(),
        clusters: cfg.clusters(),
        instance_dim: cfg.projector.instance_out_dim,
        probs,
        instance,
    })
}

pub fn embed(model: &mut Vtcc<f32>, data: &Dataset, spec: &AugmentationSpec) -> Result<Embeddings> {
    let images = model_images(data, model.config.in_channels)?;
    embed_images(model, &images, spec)
}

/// Cluster labels for evaluation: the cluster head's argmax, or K-means on the
/// L2-normalized instance embeddings when only the instance head was trained.
pub fn predict(emb: &Embeddings, objective: Objective, seed: u64) -> Result<Vec<usize>> {
    match objective {
        Objective::InstanceOnly => {
            let rows: Vec<Vec<f64>> = emb
                .instance_rows()
                .into_iter()
                .map(|r| {
                    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                    r.into_iter().map(|v| v / norm).collect()
                })
                .collect();
            Ok(kmeans(&rows, emb.clusters, seed, DEFAULT_MAX_ITER, DEFAULT_RESTARTS)?.labels)
        }
        Objective::Both | Objective::ClusterOnly => Ok(emb.assignments()),
    }
}

pub fn evaluate(
    model: &mut Vtcc<f32>,
    data: &Dataset,
    spec: &AugmentationSpec,
    objective: Objective,
    seed: u64,
) -> Result<MetricsReport> {
    let truth = data.label_vec()?;
    let emb = embed(model, data, spec)?;
    MetricsReport::compute(&predict(&emb, objective, seed)?, &truth, emb.clusters)
}

/// Writes a TSV with a header and one row per sample:
/// `index, [label,] p_0..p_{K-1}, z_0..z_{D-1}`.
pub fn export_embeddings(emb: &Embeddings, labels: Option<&[Option<u16>]>, path: &Path) -> Result<()> {
    let mut s = String::from("index");
    if labels.is_some() {
        s.push_str("\tlabel");
    }
    for k in 0..emb.clusters {
        let _ = write!(s, "\tp{k}");
    }
    for j in 0..emb.instance_dim {
        let _ = write!(s, "\tz{j}");
    }
    s.push('\n');
    for i in 0..emb.n {
        let _ = write!(s, "{i}");
        if let Some(labels) = labels {
            match labels[i] {
                Some(l) => {
                    let _ = write!(s, "\t{l}");
                }
                None => s.push_str("\t-"),
            }
        }
        let p = &emb.probs[i * emb.clusters..(i + 1) * emb.clusters];
        let z = &emb.instance[i * emb.instance_dim..(i + 1) * emb.instance_dim];
        for v in p.iter().chain(z) {
            let _ = write!(s, "\t{}", sig9(*v));
        }
        s.push('\n');
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| VtccError::io(parent, e))?;
    }
    fs::write(path, s).map_err(|e| VtccError::io(path, e))
}

/// Nine significant digits in scientific notation.
pub fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Parses a file written by [`export_embeddings`].
pub fn read_embeddings(path: &Path) -> Result<(Embeddings, Option<Vec<Option<u16>>>)> {
    let text = fs::read_to_string(path).map_err(|e| VtccError::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| VtccError::load(path, "empty file"))?.split('\t').collect();
    let has_label = header.get(1) == Some(&"label");
    let clusters = header.iter().filter(|h| h.starts_with('p')).count();
    let instance_dim = header.iter().filter(|h| h.starts_with('z')).count();
    let mut labels = has_label.then(Vec::new);
    let (mut probs, mut instance) = (Vec::new(), Vec::new());
    let mut n = 0;
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != header.len() {
            return Err(VtccError::load(path, format!("row {row} has {} fields", fields.len())));
        }
        let mut rest = &fields[1..];
        if let Some(labels) = labels.as_mut() {
            labels.push(rest[0].parse::<u16>().ok());
            rest = &rest[1..];
        }
        let values = rest
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| VtccError::load(path, format!("row {row}: bad number `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        probs.extend_from_slice(&values[..clusters]);
        instance.extend_from_slice(&values[clusters..]);
        n += 1;
    }
    Ok((
        Embeddings {
            n,
            clusters,
            instance_dim,
            probs,
            instance,
        },
        labels,
    ))
}

/// Writes `index, [label,] cluster` rows.
pub fn write_assignments(assignments: &[usize], labels: Option<&[Option<u16>]>, path: &Path) -> Result<()> {
    let mut s = String::from(if labels.is_some() { "index\tlabel\tcluster\n" } else { "index\tcluster\n" });
    for (i, a) in assignments.iter().enumerate() {
        match labels {
            Some(l) => {
                let label = l[i].map_or_else(|| "-".to_string(), |v| v.to_string());
                let _ = writeln!(s, "{i}\t{label}\t{a}");
            }
            None => {
                let _ = writeln!(s, "{i}\t{a}");
            }
        }
    }
    fs::write(path, s).map_err(|e| VtccError::io(path, e))
}
