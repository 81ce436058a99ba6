//! Evaluates the instance and cluster objectives on small hand-built batches.
//!
//! ```text
//! cargo run --release -p vtcc --example losses
//! ```

use vtcc::loss::{assignment_entropy, cluster_loss, instance_loss, LossConfig};
use vtcc::tensor::Tensor;

fn main() -> Result<(), vtcc::VtccError> {
    let cfg = LossConfig::default();

    // Two identical embeddings in both views: every similarity is 1, so each
    // anchor's positive competes with two equal negatives.
    let z = Tensor::new(vec![1.0f64, 0.0, 1.0, 0.0], &[2, 2])?;
    let li = instance_loss(&z, &z, &cfg)?;
    println!("identical pair: L_ins = {:.9} (log 3 = {:.9})", li.item(), 3f64.ln());

    // Well-separated embeddings: positives dominate.
    let za = Tensor::new(vec![1.0f64, 0.0, 0.0, 1.0], &[2, 2])?;
    let zb = Tensor::new(vec![0.9f64, 0.1, 0.1, 0.9], &[2, 2])?;
    println!("separated pair: L_ins = {:.6}", instance_loss(&za, &zb, &cfg)?.item());

    // Confident, balanced assignments for K=2: cluster columns are orthogonal.
    let y = Tensor::new(vec![1.0f64, 0.0, 0.0, 1.0], &[2, 2])?;
    let parts = cluster_loss(&y, &y, &cfg)?;
    let e = std::f64::consts::E;
    println!(
        "balanced K=2: contrastive={:.6} entropy={:.6} L_clu={:.6} (expected {:.6})",
        parts.contrastive.item(),
        parts.entropy_a.item(),
        parts.total.item(),
        -(e / (e + 2.0)).ln() - 2.0 * 2f64.ln()
    );

    // Collapsed assignments: all mass on cluster 0, entropy bonus vanishes.
    let collapsed = Tensor::new(vec![0.97f64, 0.01, 0.01, 0.01, 0.97, 0.01, 0.01, 0.01, 0.97, 0.01, 0.01, 0.01], &[3, 4])?;
    let (p, h) = assignment_entropy(&collapsed)?;
    println!("collapsed K=4: mass={:?} H={:.4} (log 4 = {:.4})", p.to_vec(), h.item(), 4f64.ln());
    Ok(())
}
