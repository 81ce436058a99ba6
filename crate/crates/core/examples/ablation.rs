//! Trains the desk model under each objective ("both", "instance_only" with
//! K-means on instance embeddings, "cluster_only") and with each stem kind,
//! then prints the final metrics of every run.
//!
//! ```text
//! cargo run --release -p vtcc --example ablation -- [epochs] [seed]
//! ```

use vtcc::backbone::StemConfig;
use vtcc::config::TrainConfig;
use vtcc::data::{generate_synthetic, SyntheticSpec};
use vtcc::loss::Objective;
use vtcc::train::{FitOptions, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(20);
    let seed: u64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(0);
    let data = generate_synthetic(&SyntheticSpec::new(4, 128, 32, 7))?;

    let mut runs = Vec::new();
    for objective in [Objective::Both, Objective::InstanceOnly, Objective::ClusterOnly] {
        let mut cfg = TrainConfig::desk();
        cfg.objective = objective;
        runs.push((format!("conv stem, {}", objective.as_str()), cfg));
    }
    let mut patch = TrainConfig::desk();
    patch.model.stem = StemConfig::patchify(4);
    runs.push(("patchify stem, both".to_string(), patch));

    for (name, mut cfg) in runs {
        cfg.epochs = epochs;
        cfg.seed = seed;
        let mut trainer = Trainer::new(cfg)?;
        let opts = FitOptions {
            final_eval: true,
            ..Default::default()
        };
        let report = trainer.fit(&data, &opts, |_| {})?;
        let last = report.epochs.last().map(|e| e.total).unwrap_or(f64::NAN);
        match &report.final_metrics {
            Some(m) => println!(
                "{name:<28} loss={last:.4} nmi={:.4} acc={:.4} ari={:.4} sizes={:?} ({:.0}s)",
                m.nmi, m.acc, m.ari, m.cluster_sizes, report.wall_clock_seconds
            ),
            None => println!("{name:<28} loss={last:.4} (no labels)"),
        }
    }
    Ok(())
}
