//! Instance- and cluster-level contrastive objectives.

use serde::{Deserialize, Serialize};
use vtcc_tensor::{Real, Tensor};

use crate::error::{Result, VtccError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau_instance: f64,
    pub tau_cluster: f64,
    /// Multiplier on the assignment-entropy bonus; `0` disables it.
    pub entropy_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau_instance: 0.5,
            tau_cluster: 1.0,
            entropy_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_instance > 0.0 && self.tau_cluster > 0.0) {
            return Err(VtccError::Config(format!(
                "temperatures must be positive (instance={}, cluster={})",
                self.tau_instance, self.tau_cluster
            )));
        }
        if !(self.entropy_weight >= 0.0) {
            return Err(VtccError::Config("entropy_weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// Which heads contribute to the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Both,
    InstanceOnly,
    ClusterOnly,
}

impl Objective {
    pub fn uses_instance(self) -> bool {
        self != Objective::ClusterOnly
    }

    pub fn uses_cluster(self) -> bool {
        self != Objective::InstanceOnly
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Both => "both",
            Objective::InstanceOnly => "instance_only",
            Objective::ClusterOnly => "cluster_only",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = VtccError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(Objective::Both),
            "instance_only" => Ok(Objective::InstanceOnly),
            "cluster_only" => Ok(Objective::ClusterOnly),
            other => Err(VtccError::Config(format!("unknown objective `{other}`"))),
        }
    }
}

/// Cosine similarity of two non-zero vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(VtccError::Contract(format!("vector lengths differ: {} vs {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(VtccError::NumericGuard("cosine similarity of a zero-norm vector".into()));
    }
    Ok(dot / (na * nb))
}

fn reject_zero_rows<T: Real>(x: &Tensor<T>, what: &str) -> Result<()> {
    let d = x.shape()[1];
    if let Some(row) = x.data().chunks(d).position(|r| r.iter().all(|v| *v == T::zero())) {
        return Err(VtccError::NumericGuard(format!("{what} {row} has zero norm")));
    }
    if !x.is_finite() {
        return Err(VtccError::NumericGuard(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// Symmetric InfoNCE over the rows of two `[M, D]` views.
///
/// Row `i` of `a` and row `i` of `b` are positives; every anchor's denominator
/// runs over the other `2M - 1` rows (self excluded). Returns the mean over
/// all `2M` anchors.
pub fn info_nce<T: Real>(a: &Tensor<T>, b: &Tensor<T>, tau: f64, what: &str) -> Result<Tensor<T>> {
    if a.rank() != 2 || a.shape() != b.shape() {
        return Err(VtccError::Tensor(vtcc_tensor::TensorError::Shape {
            op: "info_nce",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        }));
    }
    let m = a.shape()[0];
    let both = Tensor::concat(&[a.clone(), b.clone()], 0)?;
    reject_zero_rows(&both, what)?;
    let unit = both.l2_normalize()?;
    let sim = unit.matmul(&unit.transpose()?)?.mul_scalar(T::lit(1.0 / tau));

    let n = 2 * m;
    let mut off_diag = vec![T::one(); n * n];
    let mut positive = vec![T::zero(); n * n];
    for i in 0..n {
        off_diag[i * n + i] = T::zero();
        positive[i * n + (i + m) % n] = T::one();
    }
    let off_diag = Tensor::new(off_diag, &[n, n])?;
    let positive = Tensor::new(positive, &[n, n])?;

    // Every similarity is at most 1/tau, so shifting by it keeps exp bounded.
    let shift = T::lit(1.0 / tau);
    let denom = sim.add_scalar(-shift).exp().mul(&off_diag)?.sum_axis(1, false)?;
    let pos = sim.mul(&positive)?.sum_axis(1, false)?;
    let per_anchor = denom.log().add_scalar(shift).sub(&pos)?;
    Ok(per_anchor.mean())
}

/// Instance-level loss over `[N, D]` embeddings of the two views.
pub fn instance_loss<T: Real>(za: &Tensor<T>, zb: &Tensor<T>, cfg: &LossConfig) -> Result<Tensor<T>> {
    if za.rank() == 2 && za.shape()[0] < 2 {
        return Err(VtccError::Contract("instance loss needs at least 2 samples".into()));
    }
    info_nce(za, zb, cfg.tau_instance, "instance embedding")
}

/// Column mean of an `[N, K]` assignment matrix and its entropy.
pub fn assignment_entropy<T: Real>(y: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let p = y.mean_axis(0, false)?;
    let h = p.mul(&p.log())?.sum().neg();
    Ok((p, h))
}

/// Terms of the cluster-level objective.
pub struct ClusterLoss<T: Real> {
    pub contrastive: Tensor<T>,
    pub entropy_a: Tensor<T>,
    pub entropy_b: Tensor<T>,
    /// `contrastive - w * (entropy_a + entropy_b)`.
    pub total: Tensor<T>,
}

pub fn cluster_loss<T: Real>(ya: &Tensor<T>, yb: &Tensor<T>, cfg: &LossConfig) -> Result<ClusterLoss<T>> {
    if ya.rank() == 2 && ya.shape()[1] < 2 {
        return Err(VtccError::Contract("cluster loss needs at least 2 clusters".into()));
    }
    let contrastive = info_nce(&ya.transpose()?, &yb.transpose()?, cfg.tau_cluster, "cluster column")?;
    let (_, entropy_a) = assignment_entropy(ya)?;
    let (_, entropy_b) = assignment_entropy(yb)?;
    let total = if cfg.entropy_weight == 0.0 {
        contrastive.clone()
    } else {
        let bonus = entropy_a.add(&entropy_b)?.mul_scalar(T::lit(cfg.entropy_weight));
        contrastive.sub(&bonus)?
    };
    Ok(ClusterLoss {
        contrastive,
        entropy_a,
        entropy_b,
        total,
    })
}

/// Unweighted sum of the two objectives, refusing non-finite terms.
pub fn total_loss<T: Real>(instance: &Tensor<T>, cluster: &Tensor<T>) -> Result<Tensor<T>> {
    let (li, lc) = (instance.item().to_f64().unwrap_or(f64::NAN), cluster.item().to_f64().unwrap_or(f64::NAN));
    if !li.is_finite() || !lc.is_finite() {
        return Err(VtccError::NonFiniteLoss {
            instance: li,
            cluster: lc,
        });
    }
    Ok(instance.add(cluster)?)
}

/// Row-wise argmax; ties go to the lowest index.
pub fn hard_assignments(probs: &[f64], k: usize) -> Vec<usize> {
    probs
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
