use proptest::prelude::*;

use super::*;

/// Scalar transcription of the gate equations, indexing the hidden and input
/// halves of each weight row separately.
fn oracle_step(p: &Parameters, h_prev: &[f64], c_prev: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hidden = h_prev.len();
    let pre = |w: &Matrix, b: &[f64], j: usize| {
        let mut z = b[j];
        for k in 0..hidden {
            z += w.get(j, k) * h_prev[k];
        }
        for m in 0..x.len() {
            z += w.get(j, hidden + m) * x[m];
        }
        z
    };
    let logistic = |z: f64| 1.0 / (1.0 + (-z).exp());
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    for j in 0..hidden {
        let f = logistic(pre(&p.forget_w, &p.forget_b, j));
        let i = logistic(pre(&p.input_w, &p.input_b, j));
        let o = logistic(pre(&p.output_w, &p.output_b, j));
        let g = pre(&p.cell_w, &p.cell_b, j).tanh();
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * c[j].tanh();
    }
    (h, c)
}

fn oracle_loss(p: &Parameters, cfg: &ModelConfig, feature: &[f64], seq: &OrderedSequence) -> f64 {
    let mut h: Vec<f64> = (0..cfg.hidden_dim)
        .map(|j| p.proj_b[j] + (0..cfg.feature_dim).map(|k| p.proj_w.get(j, k) * feature[k]).sum::<f64>())
        .collect();
    let mut c = vec![0.0; cfg.hidden_dim];
    let mut loss = 0.0;
    for (&xi, &y) in seq.inputs().iter().zip(seq.targets()) {
        let x = p.embed.row(xi).to_vec();
        let (h2, c2) = oracle_step(p, &h, &c, &x);
        h = h2;
        c = c2;
        let scores: Vec<f64> = (0..cfg.output_dim())
            .map(|v| p.cls_b[v] + (0..cfg.hidden_dim).map(|j| p.cls_w.get(v, j) * h[j]).sum::<f64>())
            .collect();
        let denom: f64 = scores.iter().map(|s| s.exp()).sum();
        loss += -(scores[y].exp() / denom).ln();
    }
    loss
}

fn random_params(cfg: &ModelConfig, seed: u64, scale: f64) -> Parameters {
    let mut rng = SeededRng::new(seed);
    let mut p = Parameters::zeros(cfg);
    for (_, v) in p.arrays_mut() {
        v.iter_mut().for_each(|x| *x = rng.uniform_range(-scale, scale));
    }
    p
}

fn cfg(f: usize, d: usize, h: usize, tags: usize) -> ModelConfig {
    ModelConfig::new(f, d, h, tags).unwrap()
}

#[test]
fn shapes_follow_config() {
    let c = cfg(7, 3, 4, 6);
    let p = Parameters::zeros(&c);
    assert_eq!(p.embed.shape(), (7, 3));
    assert_eq!(p.proj_w.shape(), (4, 7));
    assert_eq!(p.forget_w.shape(), (4, 7));
    assert_eq!(p.cls_w.shape(), (7, 4));
    assert_eq!(p.cls_b.len(), 7);
    assert!(p.check_shapes(&c).is_ok());
    assert!(p.check_shapes(&cfg(7, 3, 5, 6)).is_err());
    assert!(ModelConfig::new(3, 0, 2, 2).is_err());
}

#[test]
fn init_follows_documented_scheme() {
    let c = cfg(10, 8, 6, 20);
    let p = Parameters::init(&c, &mut SeededRng::new(1));
    assert!(p.forget_b.iter().all(|&b| b == 1.0));
    assert!(p.input_b.iter().chain(&p.cls_b).all(|&b| b == 0.0));
    assert!(p.embed.as_slice().iter().all(|v| v.abs() <= 0.08));
    let limit = (6.0f64 / (6 + 14) as f64).sqrt();
    assert!(p.cell_w.as_slice().iter().all(|v| v.abs() <= limit));
    assert_eq!(p, Parameters::init(&c, &mut SeededRng::new(1)));
}

#[test]
fn embed_tag_rows() {
    let c = cfg(2, 2, 2, 3);
    let mut p = Parameters::zeros(&c);
    p.embed.row_mut(2).copy_from_slice(&[0.5, -1.0]);
    p.embed.row_mut(3).copy_from_slice(&[9.0, 9.0]);
    assert_eq!(embed_tag(&p, &c, 2).unwrap(), vec![0.5, -1.0]);
    assert_eq!(embed_tag(&p, &c, c.start_index()).unwrap(), vec![9.0, 9.0]);
    assert!(embed_tag(&p, &c, c.tag_count + 5).is_err());
}

#[test]
fn project_image_cases() {
    let c = cfg(2, 1, 2, 1);
    let mut p = Parameters::zeros(&c);
    p.proj_w = Matrix::identity(2);
    assert_eq!(project_image(&p, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    p.proj_w = Matrix::zeros(2, 2);
    p.proj_b = vec![3.0, 3.0];
    assert_eq!(project_image(&p, &[-7.0, 0.1]).unwrap(), vec![3.0, 3.0]);
    let msg = project_image(&p, &[1.0]).unwrap_err().to_string();
    assert!(msg.contains("expected 2") && msg.contains("got 1"), "{msg}");

    let c = cfg(5, 2, 4, 3);
    let p = random_params(&c, 8, 1.0);
    let feature = [0.3, -0.2, 1.5, 0.0, 2.0];
    let got = project_image(&p, &feature).unwrap();
    for j in 0..4 {
        let want = p.proj_b[j] + (0..5).map(|k| p.proj_w.get(j, k) * feature[k]).sum::<f64>();
        assert!((got[j] - want).abs() <= 1e-12);
    }
}

#[test]
fn lstm_step_zero_parameters() {
    let c = cfg(1, 2, 1, 1);
    let p = Parameters::zeros(&c);
    let step = lstm_step(&p, &[0.0], &[0.0], &[0.7, -3.0]).unwrap();
    assert_eq!(step.h, vec![0.0]);
    assert_eq!(step.c, vec![0.0]);
    assert_eq!(step.forget, vec![0.5]);
    assert_eq!(step.candidate, vec![0.0]);

    let step = lstm_step(&p, &[0.0], &[2.0], &[0.7, -3.0]).unwrap();
    assert!((step.c[0] - 1.0).abs() < 1e-15);
    assert!((step.h[0] - 0.380_797_077_977_882_4).abs() < 1e-12);
}

#[test]
fn lstm_step_matches_scalar_oracle() {
    let c = cfg(1, 2, 3, 1);
    for seed in 0..20 {
        let p = random_params(&c, seed, 1.5);
        let mut rng = SeededRng::new(1000 + seed);
        let h: Vec<f64> = (0..3).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let cp: Vec<f64> = (0..3).map(|_| 2.0 * rng.gaussian()).collect();
        let x: Vec<f64> = (0..2).map(|_| rng.gaussian()).collect();
        let step = lstm_step(&p, &h, &cp, &x).unwrap();
        let (h_ref, c_ref) = oracle_step(&p, &h, &cp, &x);
        for j in 0..3 {
            assert!((step.h[j] - h_ref[j]).abs() <= 1e-12);
            assert!((step.c[j] - c_ref[j]).abs() <= 1e-12);
        }
        assert_eq!(step.h_prev(), &h[..]);
        assert_eq!(step.x(), &x[..]);
    }
}

#[test]
fn lstm_step_rejects_bad_state() {
    let c = cfg(1, 2, 3, 1);
    let p = Parameters::zeros(&c);
    assert!(lstm_step(&p, &[0.0; 2], &[0.0; 3], &[0.0; 2]).is_err());
    assert!(lstm_step(&p, &[0.0; 3], &[0.0; 3], &[0.0; 5]).is_err());
}

#[test]
fn score_tags_cases() {
    let c = cfg(1, 1, 2, 2);
    let mut p = Parameters::zeros(&c);
    p.cls_b = vec![1.0, 2.0, 3.0];
    assert_eq!(score_tags(&p, &[5.0, -4.0], None).unwrap(), vec![1.0, 2.0, 3.0]);

    let p = random_params(&c, 4, 1.0);
    let h = [0.4, -0.7];
    let plain = score_tags(&p, &h, None).unwrap();
    let doubled = score_tags(&p, &h, Some(&[2.0, 2.0])).unwrap();
    for v in 0..3 {
        let pre = plain[v] - p.cls_b[v];
        assert!(((doubled[v] - p.cls_b[v]) - 2.0 * pre).abs() < 1e-14);
        let want = p.cls_b[v] + p.cls_w.get(v, 0) * h[0] + p.cls_w.get(v, 1) * h[1];
        assert!((plain[v] - want).abs() <= 1e-12);
    }
    assert!(score_tags(&p, &h, Some(&[1.0])).is_err());
}

#[test]
fn uniform_scores_give_t_ln_v() {
    let c = cfg(4, 3, 3, 3);
    let mut p = random_params(&c, 2, 1.0);
    p.cls_w = Matrix::zeros(4, 3);
    p.cls_b = vec![0.0; 4];
    let seq = OrderedSequence::from_ordered_tags(&[2, 0], 3).unwrap();
    let loss = sequence_loss(&p, &c, &[1.0, 2.0, 3.0, 4.0], &seq).unwrap();
    assert!((loss - 3.0 * 4f64.ln()).abs() < 1e-12);
    assert!((loss - 4.158_883).abs() < 1e-6);
}

#[test]
fn saturated_correct_score_gives_vanishing_loss() {
    let c = cfg(4, 3, 3, 3);
    let mut p = random_params(&c, 2, 1.0);
    p.cls_w = Matrix::zeros(4, 3);
    p.cls_b = vec![0.0; 4];
    p.cls_b[c.stop_index()] = 50.0;
    let seq = OrderedSequence::from_ordered_tags(&[], 3).unwrap();
    assert!(sequence_loss(&p, &c, &[0.0; 4], &seq).unwrap() < 1e-9);
}

#[test]
fn forward_matches_oracle_recomputation() {
    let (c, p, feature, seq) = tiny_problem(7);
    let c4 = ModelConfig { tag_count: 3, ..c };
    let p4 = random_params(&c4, 7, 0.8);
    let seq4 = OrderedSequence::from_ordered_tags(&[1, 2, 0], 3).unwrap();
    for (c, p, s) in [(&c, &p, &seq), (&c4, &p4, &seq4)] {
        let got = sequence_loss(p, c, &feature, s).unwrap();
        let want = oracle_loss(p, c, &feature, s);
        assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
    }
}

#[test]
fn forward_rejects_malformed_targets() {
    let (c, p, feature, _) = tiny_problem(0);
    let bad = OrderedSequence::from_ordered_tags(&[8], 9).unwrap();
    assert!(sequence_loss(&p, &c, &feature, &bad).is_err());
    let seq = OrderedSequence::from_ordered_tags(&[1], 5).unwrap();
    assert!(sequence_loss(&p, &c, &feature[..3], &seq).is_err());
}

#[test]
fn backward_shapes_and_classifier_bias_identity() {
    let (c, p, feature, _) = tiny_problem(3);
    let seq = OrderedSequence::from_ordered_tags(&[], c.tag_count).unwrap();
    let pass = sequence_forward(&p, &c, &feature, &seq, None).unwrap();
    let g = sequence_backward(&p, &c, &pass.steps, &feature, &seq).unwrap();
    assert!(g.check_shapes(&c).is_ok());
    let probs = &pass.steps[0].probs;
    for v in 0..c.output_dim() {
        let onehot = if v == c.stop_index() { 1.0 } else { 0.0 };
        assert!((g.cls_b[v] - (probs[v] - onehot)).abs() < 1e-15);
    }
}

#[test]
fn backward_rejects_mismatched_cache() {
    let (c, p, feature, seq) = tiny_problem(3);
    let pass = sequence_forward(&p, &c, &feature, &seq, None).unwrap();
    let other = OrderedSequence::from_ordered_tags(&[0], c.tag_count).unwrap();
    assert!(sequence_backward(&p, &c, &pass.steps, &feature, &other).is_err());
    let mut swapped = seq.tags().to_vec();
    swapped.reverse();
    let other = OrderedSequence::from_ordered_tags(&swapped, c.tag_count).unwrap();
    assert!(sequence_backward(&p, &c, &pass.steps, &feature, &other).is_err());
}

#[test]
fn absent_tags_get_zero_embedding_gradient() {
    let (c, p, feature, seq) = tiny_problem(11);
    let pass = sequence_forward(&p, &c, &feature, &seq, None).unwrap();
    let g = sequence_backward(&p, &c, &pass.steps, &feature, &seq).unwrap();
    for row in 0..=c.tag_count {
        let used = seq.inputs().contains(&row);
        let zero = g.embed.row(row).iter().all(|&v| v == 0.0);
        assert_eq!(zero, !used, "row {row}");
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..5 {
        let (c, p, feature, seq) = tiny_problem(seed);
        let report = gradient_check(&p, &c, &feature, &seq, &GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_error < 1e-4, "seed {seed}\n{report}");
        assert_eq!(report.arrays.len(), 13);
    }
}

#[test]
fn gradients_match_finite_differences_with_dropout_mask() {
    // A fixed mask makes the loss deterministic; replay it through a closure
    // that reuses the same seed for every evaluation.
    let (c, p, feature, seq) = tiny_problem(21);
    let loss_with_mask = |params: &Parameters| {
        let mut rng = SeededRng::new(99);
        let d = Dropout { rate: 0.4, rng: &mut rng };
        sequence_forward(params, &c, &feature, &seq, Some(d)).unwrap()
    };
    let pass = loss_with_mask(&p);
    assert!(pass.steps.iter().all(|s| s.mask.is_some()));
    let g = sequence_backward(&p, &c, &pass.steps, &feature, &seq).unwrap();
    let eps = 1e-5;
    let mut probe = p.clone();
    let mut worst: f64 = 0.0;
    for a in 0..13 {
        let len = probe.arrays()[a].2.len();
        for k in 0..len {
            let orig = probe.arrays_mut()[a].1[k];
            probe.arrays_mut()[a].1[k] = orig + eps;
            let plus = loss_with_mask(&probe).loss;
            probe.arrays_mut()[a].1[k] = orig - eps;
            let minus = loss_with_mask(&probe).loss;
            probe.arrays_mut()[a].1[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(gradcheck::relative_error(g.arrays()[a].2[k], numeric));
        }
    }
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn corrupted_gradient_is_detected() {
    let (c, p, feature, seq) = tiny_problem(2);
    let pass = sequence_forward(&p, &c, &feature, &seq, None).unwrap();
    let mut g = sequence_backward(&p, &c, &pass.steps, &feature, &seq).unwrap();
    let (k, _) = g
        .cls_w
        .as_slice()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    g.cls_w.as_mut_slice()[k] *= 2.0;
    let report = compare_gradients(&p, &c, &feature, &seq, &g, &GradCheckOptions::default()).unwrap();
    assert!(report.max_rel_error > 1e-2);
    let worst = report.arrays.iter().find(|a| a.name == "cls_w").unwrap();
    assert_eq!(worst.worst_index, k);
}

#[test]
fn zero_step_is_rejected() {
    let (c, p, feature, seq) = tiny_problem(2);
    let opts = GradCheckOptions {
        eps: 0.0,
        ..Default::default()
    };
    assert!(gradient_check(&p, &c, &feature, &seq, &opts).is_err());
}

#[test]
fn subsampled_check_respects_limit() {
    let c = cfg(20, 12, 16, 30);
    let p = random_params(&c, 5, 0.3);
    let feature: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
    let seq = OrderedSequence::from_ordered_tags(&[4, 17, 2], 30).unwrap();
    let opts = GradCheckOptions {
        max_coords_per_array: 40,
        ..Default::default()
    };
    let report = gradient_check(&p, &c, &feature, &seq, &opts).unwrap();
    assert!(report.arrays.iter().all(|a| a.checked <= 40));
    assert_eq!(report.arrays.iter().find(|a| a.name == "cls_b").unwrap().checked, 31);
    assert!(report.max_rel_error < 1e-4, "{report}");
}

#[test]
fn forward_with_dropout_is_deterministic() {
    let (c, p, feature, seq) = tiny_problem(4);
    let run = || {
        let mut rng = SeededRng::new(5);
        sequence_forward(&p, &c, &feature, &seq, Some(Dropout { rate: 0.5, rng: &mut rng }))
            .unwrap()
            .loss
    };
    assert_eq!(run().to_bits(), run().to_bits());
}

#[test]
fn dropout_masks_are_inverted_and_fresh_per_step() {
    let (c, p, feature, seq) = tiny_problem(4);
    let mut rng = SeededRng::new(6);
    let pass = sequence_forward(&p, &c, &feature, &seq, Some(Dropout { rate: 0.5, rng: &mut rng })).unwrap();
    let masks: Vec<&Vector> = pass.steps.iter().map(|s| s.mask.as_ref().unwrap()).collect();
    assert!(masks.iter().all(|m| m.iter().all(|&v| v == 0.0 || v == 2.0)));
    let mut rng = SeededRng::new(6);
    let mut d = Dropout { rate: 0.5, rng: &mut rng };
    let sampled: Vec<Vector> = (0..masks.len()).map(|_| d.mask(c.hidden_dim)).collect();
    for (a, b) in masks.iter().zip(&sampled) {
        assert_eq!(*a, b);
    }
}

proptest! {
    #[test]
    fn cell_and_hidden_state_bounds(seed in any::<u64>(), scale in 0.1f64..5.0) {
        let c = cfg(1, 3, 4, 1);
        let p = random_params(&c, seed, scale);
        let mut rng = SeededRng::new(seed ^ 0x5eed);
        let h: Vec<f64> = (0..4).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let cp: Vec<f64> = (0..4).map(|_| 10.0 * rng.gaussian()).collect();
        let x: Vec<f64> = (0..3).map(|_| 3.0 * rng.gaussian()).collect();
        let step = lstm_step(&p, &h, &cp, &x).unwrap();
        for j in 0..4 {
            prop_assert!(step.c[j].abs() <= cp[j].abs() + 1.0);
            prop_assert!(step.h[j].abs() <= 1.0);
        }
    }

    #[test]
    fn loss_is_non_negative(seed in any::<u64>()) {
        let (c, p, feature, seq) = tiny_problem(seed);
        prop_assert!(sequence_loss(&p, &c, &feature, &seq).unwrap() >= 0.0);
    }
}
