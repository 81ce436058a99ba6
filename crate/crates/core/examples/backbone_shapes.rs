//! Prints token counts, representation widths and parameter counts for the
//! stem kinds and encoder presets.
//!
//! ```text
//! cargo run --release -p vtcc --example backbone_shapes
//! ```

use vtcc::backbone::{EncoderConfig, StemConfig};
use vtcc::model::{ModelConfig, Vtcc};
use vtcc::nn::param_count;
use vtcc::tensor::{no_grad, NormMode, Tensor};

fn describe(name: &str, cfg: &ModelConfig, run: bool) -> Result<(), vtcc::VtccError> {
    let tokens = cfg.stem.token_count(cfg.image_side)?;
    let mut model: Vtcc<f32> = Vtcc::new(cfg, 0)?;
    let params = param_count(&mut model);
    print!(
        "{name:<28} side={:<4} tokens={tokens:<4} d={:<4} params={params}",
        cfg.image_side, cfg.encoder.embed_dim
    );
    if run {
        let side = cfg.image_side;
        let x = Tensor::zeros(&[2, cfg.in_channels, side, side]);
        let out = no_grad(|| model.forward(&x, NormMode::Eval))?;
        print!("  h={:?} z={:?} y={:?}", out.h.shape(), out.z.shape(), out.y.shape());
    }
    println!();
    Ok(())
}

fn main() -> Result<(), vtcc::VtccError> {
    let desk = ModelConfig::desk();
    describe("desk, conv stem", &desk, true)?;
    let patch = ModelConfig {
        stem: StemConfig::patchify(4),
        ..desk.clone()
    };
    describe("desk, patchify p=4", &patch, true)?;

    for (name, encoder) in [
        ("tiny, conv stem", EncoderConfig::tiny()),
        ("small, conv stem", EncoderConfig::small()),
        ("base, conv stem", EncoderConfig::base()),
    ] {
        let cfg = ModelConfig {
            encoder,
            ..ModelConfig::paper()
        };
        describe(name, &cfg, false)?;
    }
    let small_patch = ModelConfig {
        stem: StemConfig::patchify(16),
        ..ModelConfig::paper()
    };
    describe("small, patchify p=16", &small_patch, false)?;
    Ok(())
}
