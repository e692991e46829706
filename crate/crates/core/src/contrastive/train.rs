//! Toy momentum-contrast trainer on downsampled depth images.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nn::{ProjectionHead, ToyEncoder};
use super::{info_nce_grad, momentum_update_in_place, KeyBank};
use crate::augment::{sample_pair, AugmentFamily};
use crate::camera::DepthImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    /// Key encoder momentum.
    pub momentum: f64,
    /// Side of the square network input after downsampling.
    pub input_side: usize,
    pub hidden: Vec<usize>,
    pub head_dim: usize,
    pub output_bias_std: f64,
    /// Extra negatives kept from earlier batches; 0 uses in-batch negatives only.
    pub queue_size: usize,
    pub seed: u64,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        ToyTrainConfig {
            epochs: 50,
            batch: 16,
            learning_rate: 0.05,
            temperature: super::DEFAULT_TEMPERATURE,
            momentum: 0.99,
            input_side: 28,
            hidden: vec![64, 32],
            head_dim: 16,
            output_bias_std: 3.0,
            queue_size: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Mean InfoNCE loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub encoder: ToyEncoder,
    pub head: ProjectionHead,
}

/// Block-averages valid depths onto a `side x side` grid and centers them;
/// blocks without valid pixels read as 0.
pub fn downsample_input(img: &DepthImage, side: usize) -> Vec<f64> {
    const CENTER: f64 = 0.75;
    const SCALE: f64 = 10.0;
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(side * side);
    for i in 0..side {
        let (v0, v1) = (i * h / side, ((i + 1) * h / side).max(i * h / side + 1).min(h));
        for j in 0..side {
            let (u0, u1) = (j * w / side, ((j + 1) * w / side).max(j * w / side + 1).min(w));
            let (mut sum, mut n) = (0.0, 0usize);
            for v in v0..v1 {
                for u in u0..u1 {
                    let d = img.get(u, v);
                    if d > 0.0 {
                        sum += d;
                        n += 1;
                    }
                }
            }
            out.push(if n == 0 { 0.0 } else { (sum / n as f64 - CENTER) * SCALE });
        }
    }
    out
}

/// Depth images of a tilted table plane with a few ellipsoidal bumps.
pub fn synthetic_depth_images<R: Rng + ?Sized>(n: usize, side: usize, rng: &mut R) -> Vec<DepthImage> {
    (0..n)
        .map(|_| {
            let base = rng.random_range(0.65..0.85);
            let (tu, tv) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            let blobs: Vec<[f64; 5]> = (0..rng.random_range(1..=4))
                .map(|_| {
                    [
                        rng.random_range(0.15..0.85),
                        rng.random_range(0.15..0.85),
                        rng.random_range(0.06..0.25),
                        rng.random_range(0.06..0.25),
                        rng.random_range(0.02..0.12),
                    ]
                })
                .collect();
            let mut img = DepthImage::new(side, side);
            for v in 0..side {
                for u in 0..side {
                    let (x, y) = (u as f64 / side as f64, v as f64 / side as f64);
                    let mut d = base + tu * (x - 0.5) + tv * (y - 0.5);
                    for b in &blobs {
                        let r2 = ((x - b[0]) / b[2]).powi(2) + ((y - b[1]) / b[3]).powi(2);
                        if r2 < 1.0 {
                            d = d.min(base - b[4] * (1.0 - r2).sqrt());
                        }
                    }
                    img.set(u, v, d);
                }
            }
            img
        })
        .collect()
}

struct Views {
    query: Vec<f64>,
    key: Vec<f64>,
}

/// Momentum-contrast training: the query encoder and head take gradient
/// steps on the in-batch InfoNCE loss, the key copies follow by moving
/// average. Deterministic for a given seed.
pub fn toy_contrastive_train(
    dataset: &[DepthImage],
    family: &AugmentFamily,
    cfg: &ToyTrainConfig,
) -> Result<TrainOutcome> {
    if cfg.batch < 2 {
        return Err(Error::InsufficientNegatives(cfg.batch.saturating_sub(1)));
    }
    if dataset.len() < 2 * cfg.batch {
        return Err(Error::invalid(format!(
            "dataset has {} images, need at least {}",
            dataset.len(),
            2 * cfg.batch
        )));
    }
    if !(cfg.learning_rate > 0.0) || cfg.input_side == 0 || cfg.head_dim == 0 || cfg.hidden.is_empty() {
        return Err(Error::invalid("invalid trainer configuration"));
    }
    family.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut encoder = ToyEncoder::new(cfg.input_side * cfg.input_side, &cfg.hidden, &mut rng)?;
    let mut head = ProjectionHead::new(encoder.feature_dim(), cfg.head_dim, cfg.output_bias_std, &mut rng)?;
    let mut key_encoder = encoder.clone();
    let mut key_head = head.clone();
    let mut queue = KeyBank::new(cfg.head_dim);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        for chunk in order.chunks_exact(cfg.batch) {
            let seeds: Vec<u64> = chunk.iter().map(|_| rng.random()).collect();
            let views: Vec<Views> = chunk
                .par_iter()
                .zip(seeds.par_iter())
                .map(|(&idx, &seed)| -> Result<Views> {
                    let mut r = ChaCha8Rng::seed_from_u64(seed);
                    let (t, t_prime) = sample_pair(family, &mut r)?;
                    let xq = t.apply(&dataset[idx], &[], &mut r).image;
                    let xk = t_prime.apply(&dataset[idx], &[], &mut r).image;
                    Ok(Views {
                        query: downsample_input(&xq, cfg.input_side),
                        key: downsample_input(&xk, cfg.input_side),
                    })
                })
                .collect::<Result<_>>()?;

            let enc_caches: Vec<_> = views.iter().map(|v| encoder.mlp.forward(&v.query)).collect();
            let head_caches: Vec<_> = enc_caches.iter().map(|c| head.forward(c.output())).collect();
            let keys: Vec<Vec<f64>> = views
                .iter()
                .map(|v| key_head.project(&key_encoder.encode(&v.key)))
                .collect();

            let mut g_enc = vec![0.0; encoder.mlp.num_params()];
            let mut g_head = vec![0.0; head.mlp.num_params()];
            let mut batch_loss = 0.0;
            let scale = 1.0 / chunk.len() as f64;
            for i in 0..chunk.len() {
                let mut ks: Vec<&[f64]> = vec![&keys[i]];
                ks.extend(keys.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, k)| k.as_slice()));
                ks.extend(queue.keys());
                let g = info_nce_grad(&head_caches[i].output, &ks, cfg.temperature)?;
                batch_loss += g.loss * scale;
                let d_q: Vec<f64> = g.d_q.iter().map(|d| d * scale).collect();
                let d_feat = head.backward(&head_caches[i], &d_q, &mut g_head);
                encoder.mlp.backward(&enc_caches[i], &d_feat, &mut g_enc);
            }
            for (p, g) in encoder.mlp.params.iter_mut().zip(&g_enc) {
                *p -= cfg.learning_rate * g;
            }
            for (p, g) in head.mlp.params.iter_mut().zip(&g_head) {
                *p -= cfg.learning_rate * g;
            }
            momentum_update_in_place(&mut key_encoder.mlp.params, &encoder.mlp.params, cfg.momentum)?;
            momentum_update_in_place(&mut key_head.mlp.params, &head.mlp.params, cfg.momentum)?;
            if cfg.queue_size > 0 {
                for k in &keys {
                    queue.enqueue(k, cfg.queue_size)?;
                }
            }
            losses.push(batch_loss);
        }
        epoch_losses.push(losses.iter().sum::<f64>() / losses.len() as f64);
    }
    Ok(TrainOutcome {
        epoch_losses,
        encoder,
        head,
    })
}
