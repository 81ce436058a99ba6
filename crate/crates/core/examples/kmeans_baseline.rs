//! K-means on raw pixels of the procedural dataset, scored against the
//! generator labels: the baseline a learned representation has to beat.
//!
//! ```text
//! cargo run --release -p vtcc --example kmeans_baseline -- [seed]
//! ```

use vtcc::data::{generate_synthetic, SyntheticSpec};
use vtcc::kmeans::{kmeans, DEFAULT_MAX_ITER, DEFAULT_RESTARTS};
use vtcc::metrics::MetricsReport;

fn main() -> Result<(), vtcc::VtccError> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = generate_synthetic(&SyntheticSpec::new(4, 128, 32, 7))?;
    let points: Vec<Vec<f64>> = (0..data.len())
        .map(|i| data.image(i).data.iter().map(|&v| v as f64).collect())
        .collect();
    let result = kmeans(&points, 4, seed, DEFAULT_MAX_ITER, DEFAULT_RESTARTS)?;
    let report = MetricsReport::compute(&result.labels, &data.label_vec()?, 4)?;
    println!("raw-pixel K-means: inertia={:.2} iterations={}", result.inertia, result.iterations);
    println!("{report}");
    println!("sizes={:?}", report.cluster_sizes);
    Ok(())
}
