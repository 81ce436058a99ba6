use vtcc_tensor::gradcheck::{check_gradients, op_suite, probe};
use vtcc_tensor::{NormMode, RunningStats, Tape, Tensor, TensorError};

#[test]
fn op_suite_passes_for_several_seeds() {
    for seed in [0, 1, 2] {
        let reports = op_suite(seed).unwrap();
        assert!(reports.len() > 40);
        for r in &reports {
            assert!(r.passed(), "seed {seed}: {r}");
        }
    }
}

#[test]
fn square_sum_gradient_is_exact() {
    let x = Tensor::parameter(vec![0.25f64, -1.5, 3.0, 0.0], &[2, 2]).unwrap();
    x.square().sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![0.5, -3.0, 6.0, 0.0]);
}

#[test]
fn second_backward_accumulates() {
    let x = Tensor::parameter(vec![1.0f64, 2.0], &[2]).unwrap();
    let loss = x.square().sum();
    loss.backward().unwrap();
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![4.0, 8.0]);
    x.zero_grad();
    assert!(x.grad().is_none());
}

#[test]
fn non_scalar_loss_is_rejected() {
    let x = Tensor::parameter(vec![1.0f64, 2.0], &[2]).unwrap();
    assert!(matches!(x.square().backward(), Err(TensorError::Contract(_))));
}

#[test]
fn constants_never_receive_gradients() {
    let w = Tensor::parameter(vec![1.0f64, 2.0], &[2]).unwrap();
    let c = Tensor::new(vec![3.0, 4.0], &[2]).unwrap();
    w.mul(&c).unwrap().sum().backward().unwrap();
    assert_eq!(w.grad().unwrap(), vec![3.0, 4.0]);
    assert!(c.grad().is_none());
    assert!(!c.requires_grad());
}

#[test]
fn tape_is_topological_and_replayed_in_reverse() {
    let x = Tensor::parameter(vec![0.3f64, -0.2, 0.9], &[1, 3]).unwrap();
    let w = Tensor::parameter(vec![0.1f64; 6], &[3, 2]).unwrap();
    let h = x.matmul(&w).unwrap().gelu();
    let loss = h.softmax(1).unwrap().log().mean().add(&h.sum()).unwrap();
    let tape = Tape::collect(&loss);
    let entries = tape.entries();
    let position: std::collections::HashMap<u64, usize> =
        entries.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
    for (i, e) in entries.iter().enumerate() {
        for input in &e.inputs {
            assert!(position[input] < i, "input recorded after its consumer");
        }
    }
    let visited = loss.backward_traced().unwrap();
    let mut expected: Vec<u64> = entries.iter().map(|e| e.id).collect();
    expected.reverse();
    assert_eq!(visited, expected);
}

#[test]
fn batch_norm_train_output_is_standardized() {
    let n = 2 * 3 * 4 * 4;
    let data: Vec<f64> = (0..n).map(|i| 3.0 * ((i as f64) * 0.731).sin() + (i % 5) as f64).collect();
    let x = Tensor::new(data, &[2, 3, 4, 4]).unwrap();
    let (g, b) = (Tensor::ones(&[3]), Tensor::zeros(&[3]));
    let mut st = RunningStats::new(3);
    let y = x.batch_norm(&g, &b, &mut st, NormMode::Train).unwrap();
    for c in 0..3 {
        let vals: Vec<f64> = (0..2)
            .flat_map(|nn| y.data()[(nn * 3 + c) * 16..(nn * 3 + c + 1) * 16].to_vec())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-5);
        assert!((var - 1.0).abs() < 1e-5, "var {var}");
    }
}

#[test]
fn layer_norm_rows_are_standardized() {
    let data: Vec<f64> = (0..40).map(|i| 4.0 * ((i as f64) * 1.37).cos()).collect();
    let x = Tensor::new(data, &[5, 8]).unwrap();
    let y = x.layer_norm(&Tensor::ones(&[8]), &Tensor::zeros(&[8])).unwrap();
    for row in y.data().chunks(8) {
        let mean = row.iter().sum::<f64>() / 8.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-6, "var {var}");
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let a = Tensor::new((0..6).map(|i| 0.3 * i as f64 - 0.7).collect(), &[2, 3]).unwrap();
    let b = Tensor::new((0..12).map(|i| (i as f64).sin()).collect(), &[3, 4]).unwrap();
    let r = check_gradients("sum(A·B)", &[a, b], 1e-6, |t| Ok(t[0].matmul(&t[1])?.sum())).unwrap();
    assert!(r.passed(), "{r}");
}

#[test]
fn composite_residual_gradient() {
    let x = Tensor::new((0..12).map(|i| (i as f64 * 0.9).sin()).collect(), &[3, 4]).unwrap();
    let r = check_gradients("residual", &[x], 1e-5, |t| {
        let h = t[0].add(&t[0].relu().mul_scalar(0.0))?;
        probe(&h)
    })
    .unwrap();
    assert!(r.passed(), "{r}");
}
