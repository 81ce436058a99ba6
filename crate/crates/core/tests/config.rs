//! The `key=value` configuration format and the shipped profiles.

use std::path::Path;

use vtcc::backbone::EncoderConfig;
use vtcc::config::TrainConfig;
use vtcc::loss::Objective;
use vtcc::VtccError;

fn shipped(name: &str) -> TrainConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    let cfg = TrainConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    cfg
}

#[test]
fn shipped_desk_profile_matches_the_builtin() {
    let cfg = shipped("desk.cfg");
    let mut builtin = TrainConfig::desk();
    builtin.checkpoint_every = 50;
    builtin.eval_every = 10;
    assert_eq!(cfg.to_portable_text(), builtin.to_portable_text());
    let m = &cfg.model;
    assert_eq!((m.encoder.embed_dim, m.encoder.depth, m.encoder.heads), (64, 2, 4));
    assert_eq!((m.stem.conv_blocks, m.image_side, m.projector.instance_out_dim), (2, 32, 32));
    assert_eq!((cfg.batch_size, cfg.epochs, cfg.optim.lr), (64, 200, 3e-4));
    assert_eq!((cfg.loss.tau_instance, cfg.loss.tau_cluster), (0.5, 1.0));
}

#[test]
fn shipped_paper_profile_parses() {
    let cfg = shipped("paper.cfg");
    let small = EncoderConfig::small();
    assert_eq!(cfg.model.encoder.embed_dim, small.embed_dim);
    assert_eq!(cfg.model.encoder.depth, small.depth);
    assert_eq!((cfg.model.image_side, cfg.aug.output_side), (224, 224));
    assert_eq!((cfg.batch_size, cfg.epochs, cfg.model.projector.instance_out_dim), (128, 1000, 128));
    assert_eq!(cfg.objective, Objective::Both);
}

#[test]
fn text_form_round_trips() {
    let mut cfg = TrainConfig::desk();
    cfg.set("loss.entropy_weight", "0").unwrap();
    cfg.set("model.stem", "patchify").unwrap();
    cfg.set("model.patch_size", "8").unwrap();
    cfg.set("aug.blur_prob", "0.5, 0.25").unwrap();
    cfg.set("loss.objective", "instance_only").unwrap();
    cfg.set("data.path", "some/where.bin").unwrap();
    let back = TrainConfig::parse(&cfg.to_text()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(TrainConfig::parse(&TrainConfig::paper().to_text()).unwrap(), TrainConfig::paper());
}

#[test]
fn bad_lines_name_the_line() {
    for (text, needle) in [
        ("model.depth = 2\nnonsense\n", "line 2"),
        ("model.unknown = 3", "unknown key"),
        ("loss.tau_instance = abc", "line 1"),
    ] {
        match TrainConfig::parse(text) {
            Err(VtccError::Config(msg)) => assert!(msg.contains(needle), "{msg}"),
            other => panic!("{text:?} gave {other:?}"),
        }
    }
    let mut cfg = TrainConfig::desk();
    cfg.set("model.heads", "5").unwrap();
    assert!(cfg.validate().is_err(), "64 is not divisible by 5 heads");
    let mut cfg = TrainConfig::desk();
    cfg.set("loss.tau_instance", "0").unwrap_or(());
    assert!(cfg.validate().is_err() || cfg.loss.tau_instance != 0.0);
}
