//! Scores a few predicted partitions against ground truth with NMI, ACC
//! and ARI, showing the optimal cluster-to-class mapping used by ACC.
//!
//! ```text
//! cargo run --release -p vtcc --example metrics
//! ```

use vtcc::metrics::{best_mapping, ContingencyTable, MetricsReport};

fn show(name: &str, pred: &[usize], truth: &[usize], k: usize) -> Result<(), vtcc::VtccError> {
    let report = MetricsReport::compute(pred, truth, k)?;
    let (mapping, _) = best_mapping(&ContingencyTable::new(pred, truth)?)?;
    println!(
        "{name:<22} nmi={:.4} acc={:.4} ari={:+.4} sizes={:?} mapping={mapping:?}",
        report.nmi, report.acc, report.ari, report.cluster_sizes
    );
    Ok(())
}

fn main() -> Result<(), vtcc::VtccError> {
    let truth = [0, 0, 0, 1, 1, 1, 2, 2, 2];
    show("identical", &truth, &truth, 3)?;
    show("relabelled", &[2, 2, 2, 0, 0, 0, 1, 1, 1], &truth, 3)?;
    show("one mistake", &[0, 0, 1, 1, 1, 1, 2, 2, 2], &truth, 3)?;
    show("constant", &[0; 9], &truth, 3)?;
    show("interleaved", &[0, 1, 2, 0, 1, 2, 0, 1, 2], &truth, 3)?;
    Ok(())
}
