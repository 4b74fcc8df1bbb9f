//! Scratch diagnostic: train the desk-scale model with loss terms switched
//! on/off to localize the convergence stall. Not part of the library surface.

use rlsr::corpus::{batch_to_tensor, generate_synthetic_corpus, sample_patch_pair, Corpus, Split};
use rlsr::eval::{evaluate, Method};
use rlsr::codec::PayloadCodec;
use rlsr::losses::{
    compute_reward, gan_losses, is_window_boundary, mse_loss, perceptual_loss, sample_action,
    srgan_total, FeatureExtractor, RlWindow,
};
use rlsr::metrics::{mse, psnr_from_mse};
use rlsr::model::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use rlsr::rng::{stream_rng, streams};
use rlsr::tensor::{Adam, AdamConfig, Tensor};

fn batch_mean_psnr(pred: &Tensor<f32>, gt: &Tensor<f32>) -> f64 {
    let n = pred.shape()[0];
    let per = pred.len() / n;
    let p = pred.data();
    let g = gt.data();
    let mut acc = 0.0;
    for i in 0..n {
        acc += psnr_from_mse(mse(&p[i * per..][..per], &g[i * per..][..per]), 1.0);
    }
    acc / n as f64
}

fn held_out_gap(generator: &Generator<f32>) -> (f64, f64) {
    let ckpt = std::env::temp_dir().join("diag_probe.ckpt");
    generator.save(&ckpt).unwrap();
    let model = Generator::<f32>::load(&ckpt).unwrap();
    let held_dir = std::env::temp_dir().join("diag_held");
    let _ = generate_synthetic_corpus(&held_dir, 20, 64, 2002);
    let held = Corpus::load(&held_dir, Split::Test).unwrap();
    let (_, summary) =
        evaluate(&held, &[Method::Model, Method::Nearest], 4, 100, PayloadCodec::Png, Some(&model))
            .unwrap();
    let by = |n: &str| summary.methods.iter().find(|m| m.method == n).unwrap().mean_psnr_db;
    (by("model"), by("nearest"))
}

fn run_variant(
    name: &str,
    dir: &std::path::Path,
    iters: usize,
    use_gan: bool,
    use_vgg: bool,
    use_rl: bool,
) {
    let corpus = Corpus::load(dir, Split::Train).unwrap();
    let factor = 4usize;
    let (batch, patch, k, lr) = (4usize, 64usize, 10usize, 1e-3f64);
    let generator = Generator::<f32>::new(
        GeneratorConfig { in_channels: 3, features: 32, res_blocks: 2, scale: factor },
        0,
    )
    .unwrap();
    let discriminator = Discriminator::<f32>::new(
        DiscriminatorConfig { in_channels: 3, base_width: 32, patch_size: patch },
        0,
    )
    .unwrap();
    let feature_net = FeatureExtractor::<f32>::seeded(3, 0).unwrap();
    let adam = AdamConfig { lr, ..AdamConfig::default() };
    let mut g_adam = Adam::new(generator.parameters(), adam).unwrap();
    let mut d_adam = Adam::new(discriminator.parameters(), adam).unwrap();
    let mut data_rng = stream_rng(0, streams::DATA_SAMPLING);
    let mut action_rng = stream_rng(0, streams::ACTION_SAMPLING);
    let mut window = RlWindow::<f32>::new(k, 0.9).unwrap();
    let mut prev_psnr = f64::NEG_INFINITY;
    let mut mses = Vec::new();

    for iter in 1..=iters {
        let mut lr_imgs = Vec::new();
        let mut hr_imgs = Vec::new();
        for _ in 0..batch {
            let (l, h) = sample_patch_pair(&corpus, &mut data_rng, patch, factor, None).unwrap();
            lr_imgs.push(l);
            hr_imgs.push(h);
        }
        let lr_t = batch_to_tensor(&lr_imgs).unwrap();
        let hr_t = batch_to_tensor(&hr_imgs).unwrap();

        let (hr_pred, policy) = generator.forward(&lr_t, true).unwrap();
        let pooled_mean = policy.mean.mean_all().unwrap();
        let pooled_value = policy.value.mean_all().unwrap();
        let (_a, log_prob) = sample_action(&pooled_mean, &policy.log_std, &mut action_rng).unwrap();
        let measured = batch_mean_psnr(&hr_pred, &hr_t);
        let reward = compute_reward(measured, prev_psnr);
        prev_psnr = measured;
        window.push(reward, log_prob, pooled_value, measured).unwrap();

        if use_gan {
            let d_real = discriminator.forward(&hr_t).unwrap();
            let d_fake = discriminator.forward(&hr_pred.detach()).unwrap();
            let (d_loss, _) = gan_losses(&d_real, &d_fake).unwrap();
            d_adam.zero_grads();
            d_loss.backward().unwrap();
            d_adam.step().unwrap();
        }

        let l_mse = mse_loss(&hr_pred, &hr_t).unwrap();
        let mut total = l_mse.clone();
        if use_vgg {
            let l_vgg = perceptual_loss(&hr_pred, &hr_t, &feature_net).unwrap();
            total = total.add(&l_vgg.scale(6e-3).unwrap()).unwrap();
        }
        if use_gan {
            let d_real2 = discriminator.forward(&hr_t).unwrap();
            let d_fake_g = discriminator.forward(&hr_pred).unwrap();
            let (_, l_gan_g) = gan_losses(&d_real2.detach(), &d_fake_g).unwrap();
            total = total.add(&l_gan_g.scale(1e-3).unwrap()).unwrap();
        }
        let boundary = is_window_boundary(iter, k);
        if boundary {
            if use_rl {
                let parts = window.rl_loss().unwrap();
                total = total.add(&parts.total).unwrap();
            }
            window.clear();
        }
        g_adam.zero_grads();
        total.backward().unwrap();
        g_adam.step().unwrap();
        mses.push(l_mse.scalar_value());

        if iter % 100 == 0 {
            let s: f64 = mses[iter - 50..].iter().sum::<f64>() / 50.0;
            eprintln!("  [{name}] iter {iter}: smoothed mse {s:.5}, psnr {measured:.2}");
        }
        if iter % 500 == 0 {
            let (m, n) = held_out_gap(&generator);
            eprintln!("  [{name}] iter {iter}: held-out model {m:.2} dB vs nearest {n:.2} dB");
        }
    }
    let opening: f64 = mses[..50].iter().sum::<f64>() / 50.0;
    let closing: f64 = mses[iters - 50..].iter().sum::<f64>() / 50.0;

    // Eval-mode vs train-mode divergence on one training batch.
    let mut probe_rng = stream_rng(9, streams::DATA_SAMPLING);
    let (l, h) = sample_patch_pair(&corpus, &mut probe_rng, patch, factor, None).unwrap();
    let lt = batch_to_tensor(&[l]).unwrap();
    let ht = batch_to_tensor(&[h]).unwrap();
    let (train_out, _) = generator.forward(&lt, true).unwrap();
    let (eval_out, _) = generator.forward(&lt, false).unwrap();
    let train_psnr = batch_mean_psnr(&train_out, &ht);
    let eval_psnr = batch_mean_psnr(&eval_out, &ht);

    let ckpt = std::env::temp_dir().join(format!("diag_{name}.ckpt"));
    generator.save(&ckpt).unwrap();
    let model = Generator::<f32>::load(&ckpt).unwrap();
    let held_dir = std::env::temp_dir().join("diag_held");
    let _ = generate_synthetic_corpus(&held_dir, 20, 64, 2002);
    let held = Corpus::load(&held_dir, Split::Test).unwrap();
    let (_, summary) =
        evaluate(&held, &[Method::Model, Method::Nearest], 4, 100, PayloadCodec::Png, Some(&model))
            .unwrap();
    let by = |n: &str| summary.methods.iter().find(|m| m.method == n).unwrap().mean_psnr_db;
    println!(
        "{name}: opening {opening:.5}, closing {closing:.5}, ratio {:.3}, \
         probe train {train_psnr:.2} dB vs eval {eval_psnr:.2} dB, \
         held-out model {:.2} dB vs nearest {:.2} dB",
        closing / opening,
        by("model"),
        by("nearest")
    );
}

fn main() {
    let dir = std::env::temp_dir().join("diag_train_corpus");
    let _ = generate_synthetic_corpus(&dir, 200, 64, 1001);
    let variant = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    match variant.as_str() {
        "mse" => run_variant("mse-only", &dir, 500, false, false, false),
        "srgan" => run_variant("srgan-no-rl", &dir, 500, true, true, false),
        "full" => run_variant("full", &dir, 500, true, true, true),
        "long" => run_variant("mse-long", &dir, 3000, false, false, false),
        "gan" => run_variant("mse+gan", &dir, 500, true, false, false),
        "vgg" => run_variant("mse+vgg", &dir, 500, false, true, false),
        "rl" => run_variant("mse+rl", &dir, 500, false, false, true),
        _ => {
            run_variant("mse-only", &dir, 500, false, false, false);
            run_variant("srgan-no-rl", &dir, 500, true, true, false);
            run_variant("full", &dir, 500, true, true, true);
        }
    }
}
