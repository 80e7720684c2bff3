use meit_core::encoder::{normalize_record, BnMode, EncoderConfig, EncoderParams};
use meit_core::rng;
use meit_core::signal::{generate_synthetic_record, Domain, RhythmClass, SyntheticLabel};
use ndarray::Array2;
use rand::Rng;

fn toy_config() -> EncoderConfig {
    EncoderConfig { channels: vec![4, 6], kernel_size: 3, pool_size: 2, prefix_len: 2, head_dim: 3, ..Default::default() }
}

fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::stream(seed, &[]);
    Array2::from_shape_fn((rows, cols), |_| r.random::<f64>() * 2.0 - 1.0)
}

/// Encoder with non-trivial norms, biases and running statistics.
fn perturbed(config: &EncoderConfig, seed: u64) -> EncoderParams {
    let mut p = EncoderParams::init(config, seed).unwrap();
    let mut r = rng::stream(seed, &[7]);
    for b in &mut p.blocks {
        b.bias.mapv_inplace(|_| r.random::<f64>() - 0.5);
        b.gamma.mapv_inplace(|_| 0.5 + r.random::<f64>());
        b.beta.mapv_inplace(|_| r.random::<f64>() - 0.5);
        b.running_mean.mapv_inplace(|_| r.random::<f64>() - 0.5);
        b.running_var.mapv_inplace(|_| 0.5 + r.random::<f64>());
    }
    p.b1.mapv_inplace(|_| r.random::<f64>() * 0.2);
    p.b2.mapv_inplace(|_| r.random::<f64>() * 0.2);
    p
}

fn objective(p: &EncoderParams, xs: &[Array2<f64>], ds: &[Array2<f64>], mode: BnMode) -> f64 {
    let (out, _) = p.forward_batch(xs, mode).unwrap();
    out.iter().zip(ds).map(|(o, d)| (o * d).sum()).sum()
}

fn fd_check(mode: BnMode) {
    let cfg = toy_config();
    let p = perturbed(&cfg, 3);
    let xs = vec![random(64, 12, 10), random(64, 12, 11)];
    let ds = vec![random(2, 3, 20), random(2, 3, 21)];
    let (_, tape) = p.forward_batch(&xs, mode).unwrap();
    let grads = p.backward_batch(&tape, &ds);
    let analytic: Vec<(String, Vec<f64>)> = grads.slices().into_iter().map(|(n, s)| (n, s.to_vec())).collect();
    let names: Vec<String> = p.trainable().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, analytic.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>());

    let h = 1e-5;
    let mut worst = 0.0f64;
    for (k, (name, g)) in analytic.iter().enumerate() {
        for j in 0..g.len() {
            let mut plus = p.clone();
            plus.trainable_mut()[k].1[j] += h;
            let mut minus = p.clone();
            minus.trainable_mut()[k].1[j] -= h;
            let num = (objective(&plus, &xs, &ds, mode) - objective(&minus, &xs, &ds, mode)) / (2.0 * h);
            let err = (num - g[j]).abs() / num.abs().max(g[j].abs()).max(1e-3);
            assert!(err < 1e-4, "{name}[{j}] analytic {} numeric {num}", g[j]);
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-4);
}

#[test]
fn gradients_match_finite_differences_train_mode() {
    fd_check(BnMode::Train);
}

#[test]
fn gradients_match_finite_differences_inference_mode() {
    fd_check(BnMode::Inference);
}

#[test]
fn inference_matches_train_when_statistics_agree() {
    let cfg = toy_config();
    let mut p = perturbed(&cfg, 5);
    let xs = vec![random(80, 12, 1), random(80, 12, 2)];
    let (train_out, tape) = p.forward_batch(&xs, BnMode::Train).unwrap();
    for (b, (m, v)) in p.blocks.iter_mut().zip(tape.batch_stats()) {
        b.running_mean = m;
        b.running_var = v;
    }
    let (inf_out, _) = p.forward_batch(&xs, BnMode::Inference).unwrap();
    for (a, b) in train_out.iter().zip(&inf_out) {
        let diff = (a - b).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
        assert!(diff < 1e-5, "{diff}");
    }
}

#[test]
fn running_stats_follow_momentum() {
    let cfg = toy_config();
    let mut p = EncoderParams::init(&cfg, 1).unwrap();
    let before = p.blocks[0].running_mean.clone();
    let xs = vec![random(64, 12, 4)];
    let (_, tape) = p.forward_batch(&xs, BnMode::Train).unwrap();
    let (m, _) = tape.batch_stats()[0].clone();
    p.update_running_stats(&tape);
    let expect = &before * 0.9 + &m * 0.1;
    assert!((&p.blocks[0].running_mean - &expect).mapv(f64::abs).sum() < 1e-12);
}

#[test]
fn output_shape_is_independent_of_length() {
    let p = EncoderParams::init(&EncoderConfig::default(), 9).unwrap();
    for &t in &[512usize, 1000, 5000] {
        let x = random(t, 12, t as u64);
        assert_eq!(p.encode_normalized(&x).unwrap().dim(), (1, 128));
    }
    let label = SyntheticLabel::new(RhythmClass::NormalEcg, 80, Domain::A).unwrap();
    let rec = generate_synthetic_record(&label, 10.0, 500, 1).unwrap();
    let h = p.encode(&rec).unwrap();
    assert_eq!(h.dim(), (1, 128));
    assert!(h.iter().all(|v| v.is_finite()));
}

#[test]
fn short_or_non_finite_input_is_rejected() {
    let cfg = EncoderConfig::default();
    let p = EncoderParams::init(&cfg, 9).unwrap();
    assert_eq!(cfg.min_length(), 190);
    assert!(p.encode_normalized(&random(189, 12, 1)).is_err());
    assert!(p.encode_normalized(&random(190, 12, 1)).is_ok());
    let mut x = random(300, 12, 1);
    x[[5, 3]] = f64::NAN;
    assert!(matches!(p.encode_normalized(&x), Err(meit_core::Error::Data(_))));
    assert!(p.encode_normalized(&random(300, 11, 1)).is_err());
}

#[test]
fn zero_input_gives_zero_features() {
    let mut p = EncoderParams::init(&EncoderConfig::default(), 2).unwrap();
    for b in &mut p.blocks {
        b.bias.fill(0.0);
        b.gamma.fill(1.0);
        b.beta.fill(0.0);
        b.running_mean.fill(0.0);
        b.running_var.fill(1.0);
    }
    let f = p.features(&Array2::zeros((1000, 12))).unwrap();
    assert_eq!(f.len(), 128);
    assert!(f.iter().all(|&v| v == 0.0));
}

#[test]
fn inference_is_bit_deterministic() {
    let p = EncoderParams::init(&EncoderConfig::default(), 4).unwrap();
    let x = random(700, 12, 3);
    assert_eq!(p.encode_normalized(&x).unwrap(), p.encode_normalized(&x).unwrap());
}

/// Independent recount of the default architecture.
#[test]
fn parameter_count_closed_form() {
    let cfg = EncoderConfig::default();
    // conv K·C_in·C_out + bias C_out + BN 2·C_out per block
    let conv = 7 * (12 * 32 + 32 * 64 + 64 * 128);
    let per_channel = 3 * (32 + 64 + 128);
    // 128 → 256 → 128
    let proj = 128 * 256 + 256 + 256 * 128 + 128;
    assert_eq!(cfg.count_parameters(), conv + per_channel + proj);
    assert_eq!(cfg.count_parameters(), 140_960);
    let p = EncoderParams::init(&cfg, 0).unwrap();
    assert_eq!(p.count_trainable(), 140_960);
}

#[test]
fn doubling_channels_rescales_conv_term() {
    let small = EncoderConfig { channels: vec![8, 8], prefix_len: 1, head_dim: 4, ..Default::default() };
    let big = EncoderConfig { channels: vec![16, 16], ..small.clone() };
    let conv = |c: usize| 7 * (12 * c + c * c);
    let rest = |c: usize| 3 * 2 * c + c * 2 * c + 2 * c + 2 * c * 4 + 4;
    assert_eq!(small.count_parameters(), conv(8) + rest(8));
    assert_eq!(big.count_parameters(), conv(16) + rest(16));
}

#[test]
fn zero_blocks_count_only_projection() {
    let cfg = EncoderConfig { channels: vec![], head_dim: 8, ..Default::default() };
    assert_eq!(cfg.count_parameters(), 12 * 24 + 24 + 24 * 8 + 8);
    let p = EncoderParams::init(&cfg, 0).unwrap();
    let x = random(16, 12, 0);
    let (_, tape) = p.forward_batch(std::slice::from_ref(&x), BnMode::Train).unwrap();
    let g = p.backward_batch(&tape, &[Array2::ones((1, 8))]);
    assert_eq!(g.slices().len(), 4);
}

#[test]
fn normalization_is_per_lead_z_score() {
    let label = SyntheticLabel::new(RhythmClass::SinusTachycardia, 130, Domain::B).unwrap();
    let rec = generate_synthetic_record(&label, 4.0, 500, 8).unwrap();
    let x = normalize_record(&rec);
    assert_eq!(x.dim(), (2000, 12));
    for c in 0..12 {
        let col = x.column(c);
        let mean = col.mean().unwrap();
        assert!(mean.abs() < 1e-9);
        let var = col.mapv(|v| (v - mean).powi(2)).mean().unwrap();
        assert!((var - 1.0).abs() < 1e-6, "lead {c}: {var}");
    }
}
