//! Writes an image and several augmented view pairs as PNGs and lists which
//! stochastic operations fired for each view.
//!
//! ```text
//! cargo run --release -p vtcc --example augment_views -- [out_dir]
//! ```

use std::path::PathBuf;

use vtcc::augment::{augment_view, view_rng, AugmentationSpec};
use vtcc::data::{generate_synthetic, write_png, SyntheticSpec};

fn main() -> Result<(), vtcc::VtccError> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("vtcc_views"));
    std::fs::create_dir_all(&out).map_err(|e| vtcc::VtccError::io(&out, e))?;

    let data = generate_synthetic(&SyntheticSpec::new(4, 1, 32, 3))?;
    let spec = AugmentationSpec {
        output_side: 32,
        ..Default::default()
    };
    for i in 0..data.len() {
        let img = data.image(i).with_channels(3)?;
        write_png(&img, &out.join(format!("sample{i}.png")))?;
        for epoch in 0..3u64 {
            for view in 0..2 {
                let mut rng = view_rng(11, epoch, i as u64, view);
                let (v, applied) = augment_view(&img, &spec, view, &mut rng);
                write_png(&v, &out.join(format!("sample{i}_e{epoch}_v{view}.png")))?;
                println!("sample {i} epoch {epoch} view {view}: mean={:.3} {applied:?}", v.mean());
            }
        }
    }
    println!("wrote PNGs to {}", out.display());
    Ok(())
}
