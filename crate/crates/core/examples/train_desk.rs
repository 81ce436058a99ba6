//! Trains the desk model on the procedural 4-class dataset and prints
//! per-epoch losses plus the final clustering metrics.
//!
//! ```text
//! cargo run --release -p vtcc --example train_desk -- [epochs] [seed]
//! ```

use vtcc::config::TrainConfig;
use vtcc::data::{generate_synthetic, SyntheticSpec};
use vtcc::train::{FitOptions, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(20);
    let seed: u64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(0);

    let data = generate_synthetic(&SyntheticSpec::new(4, 128, 32, 7))?;
    let mut cfg = TrainConfig::desk();
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.eval_every = 10;

    let mut trainer = Trainer::new(cfg)?;
    let opts = FitOptions {
        final_eval: true,
        ..Default::default()
    };
    let report = trainer.fit(&data, &opts, |e| {
        let metrics = e
            .metrics
            .as_ref()
            .map(|m| format!("  nmi={:.3} acc={:.3} ari={:.3} sizes={:?}", m.nmi, m.acc, m.ari, m.cluster_sizes))
            .unwrap_or_default();
        println!(
            "epoch {:4}  ins={:.4} clu={:.4} total={:.4} H={:.3}  {:.1}s{metrics}",
            e.epoch, e.instance, e.cluster, e.total, e.entropy, e.seconds
        );
    })?;
    if let Some(m) = &report.final_metrics {
        println!("final: nmi={:.4} acc={:.4} ari={:.4} sizes={:?}", m.nmi, m.acc, m.ari, m.cluster_sizes);
    }
    println!("wall clock {:.1}s", report.wall_clock_seconds);
    Ok(())
}
