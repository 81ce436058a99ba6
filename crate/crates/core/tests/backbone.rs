//! Stems, attention, encoder blocks and the full backbone against direct
//! constructions and symmetry properties.

use vtcc::backbone::{
    sinusoidal_table, Attention, Backbone, EncoderBlock, EncoderConfig, PosEncodingKind, PositionalEncoding, Pool,
    Stem, StemConfig,
};
use vtcc::model::{ModelConfig, Vtcc};
use vtcc::nn::{named_params, Linear};
use vtcc::rng::SeededRng;
use std::cell::RefCell;

use vtcc::tensor::gradcheck::{check_gradients, probe};
use vtcc::tensor::{no_grad, NormMode, Tensor};

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = SeededRng::new(seed);
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect(), shape).unwrap()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "element {i}: {x} vs {y}");
    }
}

#[test]
fn token_counts() {
    assert_eq!(StemConfig::patchify(16).token_count(224).unwrap(), 196);
    assert_eq!(StemConfig::patchify(8).token_count(32).unwrap(), 16);
    assert_eq!(StemConfig::convolutional(4).token_count(224).unwrap(), 196);
    assert_eq!(StemConfig::convolutional(2).token_count(32).unwrap(), 64);
    for s in 1..=4 {
        for side in [16usize, 32, 64, 224] {
            let conv = StemConfig::convolutional(s).token_count(side);
            let patch = StemConfig::patchify(1 << s).token_count(side);
            assert_eq!(conv.ok(), patch.ok(), "s={s} side={side}");
        }
    }
    assert!(StemConfig::patchify(5).token_count(32).is_err());
    assert!(StemConfig::convolutional(3).token_count(20).is_err());
}

#[test]
fn channel_schedule_ends_at_embed_dim() {
    for s in 1..=4 {
        for d in [8, 64, 384] {
            let sched = StemConfig::convolutional(s).channel_schedule(d);
            assert_eq!(sched.len(), s);
            assert!(sched.iter().all(|&c| c >= 8.min(d)));
        }
    }
    let mut stem: Stem<f64> = Stem::new(&StemConfig::convolutional(2), 3, 64, &mut SeededRng::new(0)).unwrap();
    let out = stem.forward(&random(&[2, 3, 32, 32], 1), NormMode::Train).unwrap();
    assert_eq!(out.shape(), &[2, 64, 64]);
}

#[test]
fn one_hot_patch_projection_extracts_the_top_left_patch() {
    let (c, p) = (3, 4);
    let d = c * p * p;
    let mut stem: Stem<f64> = Stem::new(&StemConfig::patchify(p), c, d, &mut SeededRng::new(0)).unwrap();
    let Stem::Patchify(conv) = &mut stem else { unreachable!() };
    let mut w = vec![0.0; d * c * p * p];
    for o in 0..d {
        w[o * d + o] = 1.0;
    }
    conv.weight = Tensor::new(w, &[d, c, p, p]).unwrap();
    conv.bias = Some(Tensor::zeros(&[d]));
    let img = random(&[1, c, 16, 16], 2);
    let tokens = stem.forward(&img, NormMode::Eval).unwrap();
    assert_eq!(tokens.shape(), &[1, 16, d]);
    let data = img.to_vec();
    let mut patch = Vec::new();
    for ch in 0..c {
        for y in 0..p {
            for x in 0..p {
                patch.push(data[ch * 256 + y * 16 + x]);
            }
        }
    }
    assert_close(&tokens.to_vec()[..d], &patch, 1e-12);
    // token 1 is the next patch to the right
    let second: Vec<f64> = (0..c)
        .flat_map(|ch| (0..p).flat_map(move |y| (0..p).map(move |x| (ch, y, x + p))))
        .map(|(ch, y, x)| data[ch * 256 + y * 16 + x])
        .collect();
    assert_close(&tokens.to_vec()[d..2 * d], &second, 1e-12);
}

#[test]
fn convolutional_stem_gradients_match_finite_differences() {
    let stem: Stem<f64> = Stem::new(&StemConfig::convolutional(1), 1, 8, &mut SeededRng::new(3)).unwrap();
    let mut inputs = vec![random(&[1, 1, 8, 8], 4)];
    let Stem::Convolutional { blocks, proj } = &stem else { unreachable!() };
    inputs.push(blocks[0].0.weight.clone());
    inputs.push(proj.weight.clone());
    let stem = RefCell::new(stem);
    let report = check_gradients("conv stem", &inputs, 1e-5, |t| {
        let mut stem = stem.borrow_mut();
        if let Stem::Convolutional { blocks, proj } = &mut *stem {
            blocks[0].0.weight = t[1].clone();
            proj.weight = t[2].clone();
        }
        let out = stem.forward(&t[0], NormMode::Train).map_err(|e| match e {
            vtcc::VtccError::Tensor(t) => t,
            other => vtcc::tensor::TensorError::Contract(other.to_string()),
        })?;
        probe(&out)
    })
    .unwrap();
    assert!(report.passed(), "{report}");
}

#[test]
fn sinusoidal_table_definition_and_uniqueness() {
    let t = sinusoidal_table(1024, 4);
    assert_eq!(&t[..4], &[0.0, 1.0, 0.0, 1.0]);
    let rows: Vec<&[f64]> = t.chunks(4).collect();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            assert!(rows[i].iter().zip(rows[j]).any(|(a, b)| (a - b).abs() > 1e-9), "rows {i} and {j}");
        }
    }
}

#[test]
fn zero_learnable_table_is_the_identity() {
    let mut pos: PositionalEncoding<f64> =
        PositionalEncoding::new(PosEncodingKind::Learnable, 5, 4, &mut SeededRng::new(0)).unwrap();
    if let PositionalEncoding::Learnable(t) = &mut pos {
        *t = Tensor::zeros(&[5, 4]);
    }
    let seq = random(&[2, 5, 4], 5);
    assert_eq!(pos.apply(&seq).unwrap().to_vec(), seq.to_vec());
}

#[test]
fn identical_tokens_give_identical_outputs() {
    let attn: Attention<f64> = Attention::new(8, 2, &mut SeededRng::new(6)).unwrap();
    let row = random(&[1, 1, 8], 7).to_vec();
    let seq = Tensor::new(row.repeat(5), &[1, 5, 8]).unwrap();
    let w = attn.weights(&seq).unwrap().to_vec();
    assert!(w.iter().all(|&v| (v - 0.2).abs() < 1e-12));
    let out = attn.forward(&seq).unwrap().to_vec();
    for t in 1..5 {
        assert_close(&out[t * 8..(t + 1) * 8], &out[..8], 1e-12);
    }
}

fn permute_tokens(x: &Tensor<f64>, perm: &[usize]) -> Tensor<f64> {
    let (n, l, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let src = x.to_vec();
    let mut out = Vec::with_capacity(src.len());
    for b in 0..n {
        for &p in perm {
            out.extend_from_slice(&src[(b * l + p) * d..(b * l + p + 1) * d]);
        }
    }
    Tensor::new(out, &[n, l, d]).unwrap()
}

#[test]
fn attention_and_blocks_are_permutation_equivariant() {
    let cfg = EncoderConfig {
        embed_dim: 8,
        depth: 1,
        heads: 2,
        ..EncoderConfig::desk()
    };
    let block: EncoderBlock<f64> = EncoderBlock::new(&cfg, &mut SeededRng::new(8)).unwrap();
    let x = random(&[2, 6, 8], 9);
    let perm = [3, 0, 5, 1, 4, 2];
    let a = block.forward(&permute_tokens(&x, &perm)).unwrap();
    let b = permute_tokens(&block.forward(&x).unwrap(), &perm);
    assert_close(&a.to_vec(), &b.to_vec(), 1e-12);
}

#[test]
fn hand_computed_two_token_attention() {
    // d=2, H=1: q = x Wq, k = x Wk, v = x Wv with hand-set weights.
    let mut attn: Attention<f64> = Attention::new(2, 1, &mut SeededRng::new(0)).unwrap();
    let (wq, wk, wv) = ([[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.0], [0.0, 2.0]], [[1.0, 1.0], [0.0, -1.0]]);
    let mut qkv = vec![0.0; 2 * 6];
    for i in 0..2 {
        for j in 0..2 {
            qkv[i * 6 + j] = wq[i][j];
            qkv[i * 6 + 2 + j] = wk[i][j];
            qkv[i * 6 + 4 + j] = wv[i][j];
        }
    }
    attn.qkv = Linear {
        weight: Tensor::new(qkv, &[2, 6]).unwrap(),
        bias: None,
    };
    attn.proj = Linear {
        weight: Tensor::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap(),
        bias: Some(Tensor::zeros(&[2])),
    };
    let x = [[1.0, 2.0], [-1.0, 0.5]];
    let out = attn.forward(&Tensor::new(x.concat(), &[1, 2, 2]).unwrap()).unwrap().to_vec();

    let mul = |v: [f64; 2], w: [[f64; 2]; 2]| [v[0] * w[0][0] + v[1] * w[1][0], v[0] * w[0][1] + v[1] * w[1][1]];
    let q: Vec<[f64; 2]> = x.iter().map(|&r| mul(r, wq)).collect();
    let k: Vec<[f64; 2]> = x.iter().map(|&r| mul(r, wk)).collect();
    let v: Vec<[f64; 2]> = x.iter().map(|&r| mul(r, wv)).collect();
    let mut want = Vec::new();
    for qi in &q {
        let s: Vec<f64> = k.iter().map(|kj| (qi[0] * kj[0] + qi[1] * kj[1]) / 2f64.sqrt()).collect();
        let z = s[0].exp() + s[1].exp();
        let (a0, a1) = (s[0].exp() / z, s[1].exp() / z);
        want.push(a0 * v[0][0] + a1 * v[1][0]);
        want.push(a0 * v[0][1] + a1 * v[1][1]);
    }
    assert_close(&out, &want, 1e-6);
}

#[test]
fn block_with_zero_output_projections_is_the_identity() {
    let cfg = EncoderConfig {
        embed_dim: 8,
        heads: 4,
        ..EncoderConfig::desk()
    };
    let mut block: EncoderBlock<f64> = EncoderBlock::new(&cfg, &mut SeededRng::new(10)).unwrap();
    block.attn.proj.weight = Tensor::zeros(&[8, 8]);
    block.mlp.fc2.weight = Tensor::zeros(&[32, 8]);
    for shape in [[1, 1, 8], [3, 5, 8], [2, 9, 8]] {
        let x = random(&shape, 11);
        let y = block.forward(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_close(&y.to_vec(), &x.to_vec(), 0.0);
    }
    // the residual path carries the gradient even with both branches silenced
    let report = check_gradients("identity block", &[random(&[2, 3, 8], 12)], 1e-5, |t| {
        probe(&block.forward(&t[0]).map_err(|e| match e {
            vtcc::VtccError::Tensor(t) => t,
            other => vtcc::tensor::TensorError::Contract(other.to_string()),
        })?)
    })
    .unwrap();
    assert!(report.passed(), "{report}");
}

#[test]
fn mean_pooling_of_equal_tokens_returns_the_token() {
    let cfg = EncoderConfig::desk();
    let backbone: Backbone<f64> =
        Backbone::new(&StemConfig::convolutional(2), &cfg, 3, 32, &mut SeededRng::new(0)).unwrap();
    let v = random(&[1, 1, 64], 13).to_vec();
    let seq = Tensor::new(v.repeat(7), &[1, 7, 64]).unwrap();
    assert_close(&backbone.pool_tokens(&seq).unwrap().to_vec(), &v, 1e-12);
}

#[test]
fn backbone_is_invariant_to_patch_permutation_without_positions() {
    let enc = EncoderConfig {
        embed_dim: 16,
        depth: 2,
        heads: 2,
        pos_encoding: PosEncodingKind::Disabled,
        pool: Pool::Mean,
        ..EncoderConfig::desk()
    };
    let mut backbone: Backbone<f64> =
        Backbone::new(&StemConfig::patchify(4), &enc, 3, 16, &mut SeededRng::new(14)).unwrap();
    let img = random(&[2, 3, 16, 16], 15);
    // move whole 4x4 patches around the 4x4 grid
    let perm = [5, 2, 15, 0, 9, 12, 1, 7, 3, 14, 10, 4, 8, 6, 13, 11];
    let src = img.to_vec();
    let mut moved = vec![0.0; src.len()];
    for n in 0..2 {
        for c in 0..3 {
            for (dst, &from) in perm.iter().enumerate() {
                let (dy, dx, sy, sx) = (dst / 4 * 4, dst % 4 * 4, from / 4 * 4, from % 4 * 4);
                for y in 0..4 {
                    for x in 0..4 {
                        moved[((n * 3 + c) * 16 + dy + y) * 16 + dx + x] = src[((n * 3 + c) * 16 + sy + y) * 16 + sx + x];
                    }
                }
            }
        }
    }
    let moved = Tensor::new(moved, &[2, 3, 16, 16]).unwrap();
    let a = backbone.forward(&img, NormMode::Eval).unwrap();
    let b = backbone.forward(&moved, NormMode::Eval).unwrap();
    assert_close(&a.to_vec(), &b.to_vec(), 1e-10);
}

#[test]
fn preset_shapes_at_224() {
    for (enc, d) in [(EncoderConfig::tiny(), 192), (EncoderConfig::small(), 384), (EncoderConfig::base(), 768)] {
        let cfg = ModelConfig {
            encoder: EncoderConfig { depth: 1, ..enc },
            ..ModelConfig::paper()
        };
        let mut model: Vtcc<f32> = Vtcc::new(&cfg, 0).unwrap();
        let x = Tensor::zeros(&[1, 3, 224, 224]);
        let out = no_grad(|| model.forward(&x, NormMode::Eval)).unwrap();
        assert_eq!(out.h.shape(), &[1, d]);
        assert_eq!(out.z.shape(), &[1, 128]);
        assert_eq!(out.y.shape(), &[1, 10]);
    }
    let mut desk: Vtcc<f32> = Vtcc::new(&ModelConfig::desk(), 0).unwrap();
    let out = no_grad(|| desk.forward(&Tensor::zeros(&[3, 3, 32, 32]), NormMode::Eval)).unwrap();
    assert_eq!(out.h.shape(), &[3, 64]);
}

#[test]
fn presets_match_the_scale_table() {
    let t = [EncoderConfig::tiny(), EncoderConfig::small(), EncoderConfig::base()];
    let got: Vec<_> = t.iter().map(|e| (e.embed_dim, e.depth, e.heads)).collect();
    assert_eq!(got, vec![(192, 4, 12), (384, 8, 12), (768, 12, 12)]);
    let mut model: Vtcc<f32> = Vtcc::new(&ModelConfig::desk(), 0).unwrap();
    let names: Vec<String> = named_params(&mut model).into_iter().map(|(n, _)| n).collect();
    assert!(names.iter().any(|n| n == "backbone.blocks.1.attn.qkv.weight"));
    assert!(names.iter().any(|n| n == "cluster_head.fc3.bias"));
}
