//! Reverse-mode automatic differentiation over dense 4-axis tensors.
//!
//! The operator set is exactly what the classifier needs: 3x3 convolutions
//! (stride 1 or 2, padding 1), dense layers, batch normalization with
//! train/eval modes, relu, global average and max pooling, concatenation,
//! softmax, fused softmax cross-entropy, and scalar weighted sums.

mod gradcheck;
mod graph;
mod ops;
mod scalar;
mod tensor;

pub use gradcheck::{gradient_check, BlockCheck, GradCheckReport};
pub use graph::{ExecError, Graph, GraphBuildError, Mode, NodeId, BN_EPS, BN_MOMENTUM};
pub use scalar::Scalar;
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn fill_random(t: &mut Tensor<f64>, rng: &mut impl Rng, scale: f64) {
        for v in t.data_mut() {
            *v = (rng.random::<f64>() * 2.0 - 1.0) * scale;
        }
    }

    #[test]
    fn backward_of_sum_is_ones() {
        // loss = mean-free sum via GAP * N trick is overkill; use dense with
        // unit weight: loss = sum(p) for p of shape [1,3,1,1].
        let mut g = Graph::<f64>::new();
        let p = g.param("p", Tensor::from_vec([1, 3, 1, 1], vec![0.3, -0.7, 2.0]), true).unwrap();
        let w = g.param("w", Tensor::full([1, 3, 1, 1], 1.0), false).unwrap();
        let b = g.param("b", Tensor::zeros([1, 1, 1, 1]), false).unwrap();
        let s = g.dense(p, w, b).unwrap();
        g.forward(Mode::Train).unwrap();
        assert!((g.value(s).item() - 1.6).abs() < 1e-12);
        g.backward(s).unwrap();
        assert_eq!(g.grad(p).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn gradient_of_unused_parameter_is_absent_and_zero() {
        let mut g = Graph::<f64>::new();
        let p = g.param("used", Tensor::from_vec([1, 2, 1, 1], vec![1.0, 2.0]), true).unwrap();
        let q = g.param("unused", Tensor::from_vec([1, 2, 1, 1], vec![3.0, 4.0]), true).unwrap();
        let w = g.param("w", Tensor::full([1, 2, 1, 1], 2.0), false).unwrap();
        let b = g.param("b", Tensor::zeros([1, 1, 1, 1]), false).unwrap();
        let s = g.dense(p, w, b).unwrap();
        g.forward(Mode::Train).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(p).is_some());
        // A parameter the loss does not reach accumulates nothing.
        assert!(g.grad(q).is_none());
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let mut g = Graph::<f64>::new();
        let p = g.param("p", Tensor::scalar(1.0), true).unwrap();
        assert!(matches!(g.backward(p), Err(ExecError::BackwardBeforeForward)));
    }

    #[test]
    fn shape_mismatch_is_rejected_at_build_time() {
        let mut g = Graph::<f64>::new();
        let a = g.input([1, 2, 1, 1]);
        let b = g.input([1, 3, 1, 1]);
        assert!(matches!(g.add(a, b), Err(GraphBuildError::ShapeMismatch { .. })));
        let w = g.param("w", Tensor::zeros([4, 5, 3, 3]), true).unwrap();
        assert!(g.conv2d(a, w, 1).is_err());
        assert!(g.conv2d(a, w, 3).is_err());
    }

    #[test]
    fn duplicate_parameter_names_are_rejected() {
        let mut g = Graph::<f64>::new();
        g.param("w", Tensor::scalar(1.0), true).unwrap();
        assert!(matches!(
            g.param("w", Tensor::scalar(2.0), true),
            Err(GraphBuildError::DuplicateParam(_))
        ));
    }

    #[test]
    fn non_finite_output_trips_a_fault() {
        let mut g = Graph::<f64>::new();
        let x = g.input([1, 2, 1, 1]);
        let sm = g.softmax(x).unwrap();
        let _ = sm;
        g.bind_input(x, Tensor::from_vec([1, 2, 1, 1], vec![f64::NAN, 0.0]));
        assert!(matches!(g.forward(Mode::Eval), Err(ExecError::NonFinite { .. })));
    }

    #[test]
    fn softmax_outputs_sum_to_one_and_are_positive() {
        let mut rng = substream(11, "test", &[0]);
        let mut g = Graph::<f64>::new();
        let x = g.input([8, 5, 1, 1]);
        let sm = g.softmax(x).unwrap();
        let mut t = Tensor::zeros([8, 5, 1, 1]);
        fill_random(&mut t, &mut rng, 30.0);
        g.bind_input(x, t);
        g.forward(Mode::Eval).unwrap();
        let y = g.value(sm);
        for row in 0..8 {
            let s: f64 = y.data()[row * 5..(row + 1) * 5].iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(y.data()[row * 5..(row + 1) * 5].iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn cross_entropy_of_confident_correct_prediction_vanishes() {
        let mut g = Graph::<f64>::new();
        let x = g.input([1, 2, 1, 1]);
        let t = g.input([1, 2, 1, 1]);
        let l = g.softmax_cross_entropy(x, t).unwrap();
        // Logit gap of 60 puts the correct-class probability within 1e-26 of 1.
        g.bind_input(x, Tensor::from_vec([1, 2, 1, 1], vec![60.0, 0.0]));
        g.bind_input(t, Tensor::from_vec([1, 2, 1, 1], vec![1.0, 0.0]));
        g.forward(Mode::Eval).unwrap();
        assert!(g.value(l).item() < 1e-9);
    }

    #[test]
    fn determinism_same_graph_same_bits() {
        let build = || {
            let mut rng = substream(3, "det", &[]);
            let mut g = Graph::<f32>::new();
            let x = g.input([2, 3, 8, 8]);
            let mut wt = Tensor::zeros([4, 3, 3, 3]);
            let mut w_data = Tensor::zeros([4, 3, 3, 3]);
            fill_random_f32(&mut w_data, &mut rng);
            wt.data_mut().copy_from_slice(w_data.data());
            let w = g.param("w", wt, true).unwrap();
            let c = g.conv2d(x, w, 1).unwrap();
            let r = g.relu(c);
            let p = g.global_avg_pool(r);
            let mut xin = Tensor::zeros([2, 3, 8, 8]);
            fill_random_f32(&mut xin, &mut rng);
            g.bind_input(x, xin);
            g.forward(Mode::Eval).unwrap();
            g.value(p).data().to_vec()
        };
        assert_eq!(build(), build());
    }

    fn fill_random_f32(t: &mut Tensor<f32>, rng: &mut impl Rng) {
        for v in t.data_mut() {
            *v = rng.random::<f32>() - 0.5;
        }
    }

    /// Small composite graph covering every operator, checked by finite
    /// differences in f64.
    #[test]
    fn finite_differences_validate_all_operators() {
        let mut rng = substream(17, "gradcheck", &[]);
        let mut g = Graph::<f64>::new();
        let x = g.input([4, 2, 6, 6]);

        let mut conv_w = Tensor::zeros([3, 2, 3, 3]);
        fill_random(&mut conv_w, &mut rng, 0.4);
        let w1 = g.param("conv.w", conv_w, true).unwrap();
        let c1 = g.conv2d(x, w1, 1).unwrap();

        let gamma = g.param("bn.gamma", Tensor::full([3, 1, 1, 1], 1.0), true).unwrap();
        let beta = g.param("bn.beta", Tensor::zeros([3, 1, 1, 1]), true).unwrap();
        let rm = g.param("bn.rm", Tensor::zeros([3, 1, 1, 1]), false).unwrap();
        let rv = g.param("bn.rv", Tensor::full([3, 1, 1, 1], 1.0), false).unwrap();
        let bn = g.batch_norm(c1, gamma, beta, rm, rv).unwrap();
        let r1 = g.relu(bn);

        let mut conv_w2 = Tensor::zeros([3, 3, 3, 3]);
        fill_random(&mut conv_w2, &mut rng, 0.3);
        let w2 = g.param("conv2.w", conv_w2, true).unwrap();
        let c2 = g.conv2d(r1, w2, 2).unwrap();

        let gap = g.global_avg_pool(c2);
        let gmp = g.global_max_pool(c2);
        let desc = g.concat(&[gap, gmp]).unwrap();

        let mut dw = Tensor::zeros([1, 6, 1, 1]);
        fill_random(&mut dw, &mut rng, 0.5);
        let wd = g.param("att.w", dw, true).unwrap();
        let bd = g.param("att.b", Tensor::zeros([1, 1, 1, 1]), true).unwrap();
        let logits = g.dense(desc, wd, bd).unwrap();

        let flat = g.reshape(logits, [4, 1, 1, 1]).unwrap();
        let gw = g.group_softmax(flat, 2).unwrap();
        let merged = g.group_weighted_sum(gw, gap, 2).unwrap();

        let mut hw = Tensor::zeros([2, 3, 1, 1]);
        fill_random(&mut hw, &mut rng, 0.5);
        let wh = g.param("head.w", hw, true).unwrap();
        let bh = g.param("head.b", Tensor::zeros([2, 1, 1, 1]), true).unwrap();
        let head = g.dense(merged, wh, bh).unwrap();

        let target = g.input([2, 2, 1, 1]);
        let ce = g.softmax_cross_entropy(head, target).unwrap();
        let aux = g.softmax_cross_entropy(head, target).unwrap();
        let loss = g.weighted_sum(&[(ce, 0.7), (aux, 0.3)]).unwrap();

        // Continuous random inputs keep pre-activations off the relu kink;
        // the 1e-4 step keeps kink crossings out of the difference quotient.
        let mut xin = Tensor::zeros([4, 2, 6, 6]);
        fill_random(&mut xin, &mut rng, 1.0);
        g.bind_input(x, xin);
        g.bind_input(target, Tensor::from_vec([2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]));

        let report = gradient_check(&mut g, loss, Mode::Train, 1e-4, 1e-5, &mut rng).unwrap();
        assert!(
            report.passed(),
            "worst block {:?}",
            report.worst().map(|b| (b.name.clone(), b.rel_error))
        );
    }

    #[test]
    fn linear_graph_gradcheck_is_machine_precision() {
        let mut rng = substream(23, "lin", &[]);
        let mut g = Graph::<f64>::new();
        let x = g.input([3, 4, 1, 1]);
        let mut wt = Tensor::zeros([2, 4, 1, 1]);
        fill_random(&mut wt, &mut rng, 0.8);
        let w = g.param("w", wt, true).unwrap();
        let b = g.param("b", Tensor::zeros([2, 1, 1, 1]), true).unwrap();
        let y = g.dense(x, w, b).unwrap();
        let flat = g.reshape(y, [1, 6, 1, 1]).unwrap();
        let mut pw = Tensor::zeros([1, 6, 1, 1]);
        fill_random(&mut pw, &mut rng, 0.5);
        let wp = g.param("w2", pw, true).unwrap();
        let bp = g.param("b2", Tensor::zeros([1, 1, 1, 1]), true).unwrap();
        let out = g.dense(flat, wp, bp).unwrap();

        let mut xin = Tensor::zeros([3, 4, 1, 1]);
        fill_random(&mut xin, &mut rng, 1.0);
        g.bind_input(x, xin);
        let report = gradient_check(&mut g, out, Mode::Eval, 1e-3, 1e-10, &mut rng).unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn stacked_convs_gradcheck_exactly_when_linear() {
        // No relu or pooling ties anywhere, so central differences are exact
        // up to roundoff.
        let mut rng = substream(6, "convlin", &[]);
        let mut g = Graph::<f64>::new();
        let x = g.input([2, 2, 6, 6]);
        let mut cw1 = Tensor::zeros([3, 2, 3, 3]);
        fill_random(&mut cw1, &mut rng, 0.5);
        let w1 = g.param("w1", cw1, true).unwrap();
        let c1 = g.conv2d(x, w1, 1).unwrap();
        let mut cw2 = Tensor::zeros([4, 3, 3, 3]);
        fill_random(&mut cw2, &mut rng, 0.5);
        let w2 = g.param("w2", cw2, true).unwrap();
        let c2 = g.conv2d(c1, w2, 2).unwrap();
        let gap = g.global_avg_pool(c2);
        let flat = g.reshape(gap, [1, 8, 1, 1]).unwrap();
        let mut pw = Tensor::zeros([1, 8, 1, 1]);
        fill_random(&mut pw, &mut rng, 0.7);
        let wp = g.param("wp", pw, true).unwrap();
        let bp = g.param("bp", Tensor::zeros([1, 1, 1, 1]), true).unwrap();
        let out = g.dense(flat, wp, bp).unwrap();
        let mut xin = Tensor::zeros([2, 2, 6, 6]);
        fill_random(&mut xin, &mut rng, 1.0);
        g.bind_input(x, xin);
        let report = gradient_check(&mut g, out, Mode::Eval, 1e-3, 1e-10, &mut rng).unwrap();
        assert!(report.passed(), "worst {:?}", report.worst().map(|b| (b.name.clone(), b.rel_error)));
    }

    #[test]
    fn batch_norm_train_mode_gradcheck() {
        let mut rng = substream(29, "bn", &[]);
        let mut g = Graph::<f64>::new();
        let x = g.input([8, 3, 2, 2]);
        let gamma = g.param("gamma", Tensor::full([3, 1, 1, 1], 1.2), true).unwrap();
        let beta = g.param("beta", Tensor::full([3, 1, 1, 1], -0.1), true).unwrap();
        let rm = g.param("rm", Tensor::zeros([3, 1, 1, 1]), false).unwrap();
        let rv = g.param("rv", Tensor::full([3, 1, 1, 1], 1.0), false).unwrap();
        let bn = g.batch_norm(x, gamma, beta, rm, rv).unwrap();
        let gap = g.global_avg_pool(bn);
        let flat = g.reshape(gap, [1, 24, 1, 1]).unwrap();
        let mut pw = Tensor::zeros([1, 24, 1, 1]);
        fill_random(&mut pw, &mut rng, 0.6);
        let w = g.param("w", pw, true).unwrap();
        let b = g.param("b", Tensor::zeros([1, 1, 1, 1]), true).unwrap();
        let out = g.dense(flat, w, b).unwrap();

        let mut xin = Tensor::zeros([8, 3, 2, 2]);
        fill_random(&mut xin, &mut rng, 1.0);
        g.bind_input(x, xin);
        let report = gradient_check(&mut g, out, Mode::Train, 1e-3, 1e-5, &mut rng).unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn batch_norm_updates_running_statistics_in_train_mode() {
        let mut g = Graph::<f64>::new();
        let x = g.input([4, 1, 1, 1]);
        let gamma = g.param("gamma", Tensor::full([1, 1, 1, 1], 1.0), true).unwrap();
        let beta = g.param("beta", Tensor::zeros([1, 1, 1, 1]), true).unwrap();
        let rm = g.param("rm", Tensor::zeros([1, 1, 1, 1]), false).unwrap();
        let rv = g.param("rv", Tensor::full([1, 1, 1, 1], 1.0), false).unwrap();
        let _bn = g.batch_norm(x, gamma, beta, rm, rv).unwrap();
        g.bind_input(x, Tensor::from_vec([4, 1, 1, 1], vec![2.0, 2.0, 2.0, 2.0]));
        g.forward(Mode::Train).unwrap();
        // momentum 0.9: rm = 0.9*0 + 0.1*2
        assert!((g.value(rm).item() - 0.2).abs() < 1e-12);
        assert!((g.value(rv).item() - 0.9).abs() < 1e-12);
        // Eval mode must not touch them.
        g.forward(Mode::Eval).unwrap();
        assert!((g.value(rm).item() - 0.2).abs() < 1e-12);
    }
}
