//! Independent oracles shared by the oracle tests and the acceptance run.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vtcc::loss::LossConfig;
use vtcc::tensor::Tensor;

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Loss of one anchor: positive against every other member of the set.
pub fn anchor_loss(set: &[Vec<f64>], anchor: usize, positive: usize, tau: f64) -> f64 {
    let num = (cos(&set[anchor], &set[positive]) / tau).exp();
    let mut den = 0.0;
    for (j, other) in set.iter().enumerate() {
        if j != anchor {
            den += (cos(&set[anchor], other) / tau).exp();
        }
    }
    -(num / den).ln()
}

/// Mean over both views of the per-anchor losses, pairs `(i, i + m)`.
pub fn contrastive_oracle(a: &[Vec<f64>], b: &[Vec<f64>], tau: f64) -> f64 {
    let m = a.len();
    let set: Vec<Vec<f64>> = a.iter().chain(b).cloned().collect();
    let mut total = 0.0;
    for i in 0..m {
        total += anchor_loss(&set, i, i + m, tau) + anchor_loss(&set, i + m, i, tau);
    }
    total / (2 * m) as f64
}

pub fn columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c]).collect()).collect()
}

pub fn entropy_oracle(rows: &[Vec<f64>]) -> f64 {
    let total: f64 = rows.iter().flatten().sum();
    let mut h = 0.0;
    for col in columns(rows) {
        let p = col.iter().sum::<f64>() / total;
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

pub fn cluster_oracle(ya: &[Vec<f64>], yb: &[Vec<f64>], cfg: &LossConfig) -> f64 {
    contrastive_oracle(&columns(ya), &columns(yb), cfg.tau_cluster)
        - cfg.entropy_weight * (entropy_oracle(ya) + entropy_oracle(yb))
}

pub fn normal_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0) + rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn softmax_rows(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    normal_rows(rng, n, k)
        .into_iter()
        .map(|r| {
            let e: Vec<f64> = r.iter().map(|v| (2.0 * v).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

pub fn tensor(rows: &[Vec<f64>]) -> Tensor<f64> {
    Tensor::new(rows.concat(), &[rows.len(), rows[0].len()]).unwrap()
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

pub fn acc_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let k = pred.iter().chain(truth).max().unwrap() + 1;
    permutations(k)
        .iter()
        .map(|perm| pred.iter().zip(truth).filter(|(&p, &t)| perm[p] == t).count())
        .max()
        .unwrap() as f64
        / pred.len() as f64
}

pub fn nmi_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let count = |f: &dyn Fn(usize) -> bool| (0..pred.len()).filter(|&i| f(i)).count() as f64;
    let (kp, kt) = (pred.iter().max().unwrap() + 1, truth.iter().max().unwrap() + 1);
    let h = |labels: &[usize], k: usize| -> f64 {
        (0..k)
            .map(|c| labels.iter().filter(|&&l| l == c).count() as f64 / n)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    };
    let mut mi = 0.0;
    for u in 0..kp {
        for v in 0..kt {
            let joint = count(&|i| pred[i] == u && truth[i] == v) / n;
            if joint > 0.0 {
                let pu = count(&|i| pred[i] == u) / n;
                let pv = count(&|i| truth[i] == v) / n;
                mi += joint * (joint / (pu * pv)).ln();
            }
        }
    }
    mi / (h(pred, kp) * h(truth, kt)).sqrt()
}

/// Adjusted Rand index from explicit pair agreement counts.
pub fn ari_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let (mut tp, mut fp, mut fn_, mut tn) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                (false, false) => tn += 1.0,
            }
        }
    }
    2.0 * (tp * tn - fn_ * fp) / ((tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn))
}

pub fn random_partition(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    loop {
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let used = (0..k).filter(|c| p.contains(c)).count();
        if used >= 2 {
            return p;
        }
    }
}
