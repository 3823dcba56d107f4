//! Training loop: patch-based ray batching, volume-rendered forward pass,
//! exact backprop into the field parameters, and Adam updates under an
//! exponential learning-rate schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Result, VoxError};
use crate::field::{dir_encode, Field, FieldConfig, Trace};
use crate::loss::{batch_loss_and_grads, LossBreakdown, LossConfig, PatchData};
use crate::metrics::PSNR_CAP_DB;
use crate::raycast::{first_hit, generate_ray, Ray};
use crate::render::{composite, composite_backward, RenderOptions, RenderResult};
use crate::rng::substream;
use crate::sampler::{sample_for_strategy, SampleSet, SamplerConfig, Strategy};
use crate::svo::SparseVoxelOctree;
use crate::synth::{Dataset, Split};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Near plane for all training/eval rays.
pub const T_NEAR: f64 = 1e-3;

/// Patches whose gradient buffers are alive at once.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: u64,
    pub rays_per_batch: usize,
    pub patch_size: u32,
    pub n_important: usize,
    pub n_free: usize,
    pub lr_init: f64,
    pub lr_decay_to: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub strategy: Strategy,
    pub checkpoint_every: u64,
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 30_000,
            rays_per_batch: 4096,
            patch_size: 8,
            n_important: 128,
            n_free: 128,
            lr_init: 0.01,
            lr_decay_to: 0.01,
            seed: 0,
            loss: LossConfig::default(),
            strategy: Strategy::Guided,
            checkpoint_every: 500,
            grad_clip: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let p2 = (self.patch_size * self.patch_size) as usize;
        if self.patch_size == 0 || self.rays_per_batch == 0 || self.iterations == 0 {
            return Err(VoxError::Contract("train counts must be >= 1".into()));
        }
        if self.rays_per_batch % p2 != 0 {
            return Err(VoxError::Contract(format!(
                "rays_per_batch {} not divisible by patch_size^2 {}",
                self.rays_per_batch, p2
            )));
        }
        if self.n_important + self.n_free == 0 {
            return Err(VoxError::Contract("zero samples per ray".into()));
        }
        if !(self.lr_init > 0.0 && self.lr_decay_to > 0.0) {
            return Err(VoxError::Contract("learning rates must be positive".into()));
        }
        Ok(())
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            n_important: self.n_important,
            n_free: self.n_free,
            seed: self.seed,
            strategy: self.strategy,
        }
    }
}

/// Exponential schedule: lr_init * decay_to^(iter / iterations).
pub fn lr_at(iter: u64, cfg: &TrainConfig) -> f64 {
    cfg.lr_init * cfg.lr_decay_to.powf(iter as f64 / cfg.iterations as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(n_params: usize) -> OptimizerState {
        OptimizerState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }
}

/// Bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(VoxError::Contract("optimizer shape mismatch".into()));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(VoxError::Numeric(format!(
            "non-finite gradient at parameter {i} (step {})",
            state.step
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * grads[i];
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: u64,
    pub l_color: f64,
    pub l_depth: f64,
    pub l_reg: f64,
    pub total: f64,
    pub lr: f64,
    pub psnr_train_patch: f64,
}

/// Immutable per-run data: train views, cached pseudo-depths, far planes.
pub struct TrainContext<'a> {
    pub dataset: &'a Dataset,
    pub svo: &'a SparseVoxelOctree,
    pub train_views: Vec<usize>,
    /// pseudo[k][pixel] = octree first-hit distance for train view k.
    pub pseudo: Vec<Vec<Option<f64>>>,
    pub t_far: Vec<f64>,
}

impl<'a> TrainContext<'a> {
    pub fn new(dataset: &'a Dataset, svo: &'a SparseVoxelOctree) -> Result<TrainContext<'a>> {
        let train_views = dataset.views_in(Split::Train);
        if train_views.is_empty() {
            return Err(VoxError::EmptyInput("train split"));
        }
        let root = svo.root_bounds;
        let t_far: Vec<f64> = train_views
            .iter()
            .map(|&v| {
                let c = dataset.cameras[v].translation;
                (c - root.center()).norm() + 0.75 * root.diagonal()
            })
            .collect();
        let pseudo: Vec<Vec<Option<f64>>> = train_views
            .par_iter()
            .zip(&t_far)
            .map(|(&v, &tf)| {
                let cam = &dataset.cameras[v];
                (0..(cam.width * cam.height) as usize)
                    .map(|i| {
                        let px = (i as u32 % cam.width) as f64;
                        let py = (i as u32 / cam.width) as f64;
                        let ray = generate_ray(cam, px, py, T_NEAR, tf);
                        let hit = first_hit(svo, &ray);
                        hit.hit.then_some(hit.t_hit)
                    })
                    .collect()
            })
            .collect();
        Ok(TrainContext {
            dataset,
            svo,
            train_views,
            pseudo,
            t_far,
        })
    }
}

pub struct TrainState {
    pub field: Field,
    pub opt: OptimizerState,
    pub iter: u64,
}

impl TrainState {
    pub fn new(field: Field) -> TrainState {
        let n = field.layout.total;
        TrainState {
            field,
            opt: OptimizerState::new(n),
            iter: 0,
        }
    }
}

struct RayData {
    ray: Ray,
    samples: SampleSet,
    sigmas: Vec<f64>,
    colors: Vec<[f64; 3]>,
    result: RenderResult,
}

struct PatchEval {
    data: PatchData,
    rays: Vec<RayData>,
}

fn eval_patch(
    state: &TrainState,
    ctx: &TrainContext,
    cfg: &TrainConfig,
    sampler_cfg: &SamplerConfig,
    opts: &RenderOptions,
    iter: u64,
    pi: usize,
) -> PatchEval {
    let p = cfg.patch_size;
    let mut pick = substream(cfg.seed, &[0x70a7, iter, pi as u64]);
    use rand::Rng;
    let k = pick.random_range(0..ctx.train_views.len());
    let view = ctx.train_views[k];
    let cam = &ctx.dataset.cameras[view];
    let x0 = pick.random_range(0..=cam.width - p);
    let y0 = pick.random_range(0..=cam.height - p);

    let root = ctx.svo.root_bounds;
    let side = root.extent().x;
    let mut trace = Trace::default();
    let n_rays = (p * p) as usize;
    let mut rays = Vec::with_capacity(n_rays);
    let mut data = PatchData {
        size: p,
        pred_colors: Vec::with_capacity(n_rays),
        gt_colors: Vec::with_capacity(n_rays),
        depths: Vec::with_capacity(n_rays),
        pseudo: Vec::with_capacity(n_rays),
    };
    for dy in 0..p {
        for dx in 0..p {
            let (px, py) = (x0 + dx, y0 + dy);
            let r = (dy * p + dx) as u64;
            let ray = generate_ray(cam, px as f64, py as f64, T_NEAR, ctx.t_far[k]);
            let mut rng = substream(cfg.seed, &[0x7261, iter, pi as u64, r]);
            let hit = first_hit(ctx.svo, &ray);
            let samples = sample_for_strategy(&ray, &hit, ctx.svo.leaf_size, sampler_cfg, &mut rng);
            let enc = dir_encode(ray.direction);
            let mut sigmas = Vec::with_capacity(samples.t.len());
            let mut colors = Vec::with_capacity(samples.t.len());
            for &t in &samples.t {
                let pos = (ray.at(t) - root.min) / side;
                state.field.forward_traced(pos, &enc, &mut trace);
                sigmas.push(trace.density);
                colors.push(trace.color);
            }
            let result = composite(&sigmas, &colors, &samples.delta, &samples.t, opts)
                .expect("sampler produced an invalid sample set");
            let pix = ctx.dataset.images[view].idx(px, py);
            data.pred_colors.push(result.color);
            data.gt_colors.push(ctx.dataset.images[view].pixels[pix]);
            data.depths.push(result.depth);
            data.pseudo.push(ctx.pseudo[k][pix]);
            rays.push(RayData {
                ray,
                samples,
                sigmas,
                colors,
                result,
            });
        }
    }
    PatchEval { data, rays }
}

fn backward_patch(
    state: &TrainState,
    ctx: &TrainContext,
    opts: &RenderOptions,
    eval: &PatchEval,
    d_color: &[[f64; 3]],
    d_depth: &[f64],
    grads: &mut [f64],
) {
    let root = ctx.svo.root_bounds;
    let side = root.extent().x;
    let mut trace = Trace::default();
    for (r, rd) in eval.rays.iter().enumerate() {
        let n = rd.sigmas.len();
        let mut d_sigmas = vec![0.0; n];
        let mut d_colors = vec![[0.0; 3]; n];
        composite_backward(
            &rd.sigmas,
            &rd.colors,
            &rd.samples.delta,
            &rd.samples.t,
            &rd.result,
            d_color[r],
            d_depth[r],
            opts,
            &mut d_sigmas,
            &mut d_colors,
        );
        let enc = dir_encode(rd.ray.direction);
        for (i, &t) in rd.samples.t.iter().enumerate() {
            if d_sigmas[i] == 0.0 && d_colors[i] == [0.0; 3] {
                continue;
            }
            let pos = (rd.ray.at(t) - root.min) / side;
            state.field.forward_traced(pos, &enc, &mut trace);
            state
                .field
                .backward_traced(&trace, d_sigmas[i], d_colors[i], grads);
        }
    }
}

/// One optimization step. Patches evaluate in parallel against the frozen
/// parameter snapshot; gradients merge in fixed patch order.
pub fn train_step(
    state: &mut TrainState,
    ctx: &TrainContext,
    cfg: &TrainConfig,
) -> Result<(LogRow, LossBreakdown)> {
    let iter = state.iter;
    let sampler_cfg = cfg.sampler_config();
    let opts = RenderOptions::default();
    let n_patches = cfg.rays_per_batch / (cfg.patch_size * cfg.patch_size) as usize;

    let evals: Vec<PatchEval> = (0..n_patches)
        .into_par_iter()
        .map(|pi| eval_patch(state, ctx, cfg, &sampler_cfg, &opts, iter, pi))
        .collect();

    let patches: Vec<PatchData> = evals.iter().map(|e| e.data.clone()).collect();
    let (breakdown, patch_grads) = batch_loss_and_grads(&patches, &cfg.loss)?;
    if !breakdown.total.is_finite() {
        return Err(VoxError::Numeric(format!(
            "non-finite loss at iteration {iter}: {breakdown:?}"
        )));
    }

    let n_params = state.field.layout.total;
    let mut grads = vec![0.0; n_params];
    for chunk_start in (0..n_patches).step_by(GRAD_CHUNK) {
        let end = (chunk_start + GRAD_CHUNK).min(n_patches);
        let chunk: Vec<Vec<f64>> = (chunk_start..end)
            .into_par_iter()
            .map(|pi| {
                let mut g = vec![0.0; n_params];
                backward_patch(
                    state,
                    ctx,
                    &opts,
                    &evals[pi],
                    &patch_grads[pi].d_color,
                    &patch_grads[pi].d_depth,
                    &mut g,
                );
                g
            })
            .collect();
        for g in chunk {
            for (a, b) in grads.iter_mut().zip(&g) {
                *a += b;
            }
        }
    }

    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > cfg.grad_clip {
        let s = cfg.grad_clip / norm;
        for g in &mut grads {
            *g *= s;
        }
    }

    let lr = lr_at(iter, cfg);
    adam_step(&mut state.field.params, &grads, &mut state.opt, lr)?;
    state.iter += 1;

    let mse = breakdown.l_color / 3.0;
    let psnr_train_patch = if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    };
    Ok((
        LogRow {
            iteration: iter,
            l_color: breakdown.l_color,
            l_depth: breakdown.l_depth,
            l_reg: breakdown.l_reg,
            total: breakdown.total,
            lr,
            psnr_train_patch,
        },
        breakdown,
    ))
}

/// Full training run. Writes a checkpoint to `ckpt_path` every
/// `checkpoint_every` iterations and at the end; on a numeric abort the file
/// keeps the last good state.
pub fn train(
    dataset: &Dataset,
    svo: &SparseVoxelOctree,
    field_cfg: FieldConfig,
    cfg: &TrainConfig,
    ckpt_path: Option<&Path>,
) -> Result<(TrainState, Vec<LogRow>)> {
    cfg.validate()?;
    let ctx = TrainContext::new(dataset, svo)?;
    let mut state = TrainState::new(Field::init(field_cfg, cfg.seed));
    let mut log = Vec::with_capacity(cfg.iterations as usize);
    while state.iter < cfg.iterations {
        match train_step(&mut state, &ctx, cfg) {
            Ok((row, _)) => log.push(row),
            Err(e @ VoxError::Numeric(_)) => {
                let at = match ckpt_path {
                    Some(p) if p.exists() => format!("; last checkpoint at {}", p.display()),
                    _ => String::new(),
                };
                return Err(VoxError::Numeric(format!("{e}{at}")));
            }
            Err(e) => return Err(e),
        }
        if let Some(path) = ckpt_path {
            if state.iter % cfg.checkpoint_every == 0 || state.iter == cfg.iterations {
                crate::io::checkpoint::save_checkpoint(path, &state.field, Some(&state.opt), state.iter)?;
            }
        }
    }
    Ok((state, log))
}
