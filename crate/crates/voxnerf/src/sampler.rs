//! Per-ray sample placement: truncated-Gaussian samples around the octree
//! first hit plus stratified uniform samples over the remaining free space.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VoxError};
use crate::raycast::{HitResult, Ray};
use crate::rng::{standard_normal, Stream};
use rand::Rng;

/// Half-width of the important band in units of the leaf size: 3 * sqrt(3).
pub const BAND_HALF_WIDTH_FACTOR: f64 = 5.196152422706632; // 3 * sqrt(3)
/// Standard deviation of the surface-position Gaussian in leaf sizes: sqrt(3).
pub const SIGMA_FACTOR: f64 = 1.7320508075688772;

const MAX_REJECTION_ATTEMPTS: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Important,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Guided,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_important: usize,
    pub n_free: usize,
    pub seed: u64,
    pub strategy: Strategy,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_important: 128,
            n_free: 128,
            seed: 0,
            strategy: Strategy::Guided,
        }
    }
}

/// Ordered ray-parameter samples with spacings and region labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// Strictly ascending parameters in [t_near, t_far].
    pub t: Vec<f64>,
    /// delta[i] = t[i] - t[i-1], with delta[0] relative to t_near.
    pub delta: Vec<f64>,
    pub label: Vec<Label>,
    /// Residual spacing t_far - t.last() for background handling.
    pub terminal_delta: f64,
    /// The first-hit distance the band was centered on, when guided.
    pub hit_t: Option<f64>,
    /// Set when a degenerate band forced a uniform fallback.
    pub fallback: bool,
}

/// Spacings of a strictly ascending sample list. Returns the per-sample
/// deltas and the terminal residual to t_far.
pub fn compute_deltas(ts: &[f64], t_near: f64, t_far: f64) -> Result<(Vec<f64>, f64)> {
    let mut prev = t_near;
    let mut deltas = Vec::with_capacity(ts.len());
    for (i, &t) in ts.iter().enumerate() {
        if t <= prev && !(i == 0 && t == t_near) {
            return Err(VoxError::Contract(format!(
                "samples not strictly ascending at index {i}: {t} <= {prev}"
            )));
        }
        deltas.push(t - prev);
        prev = t;
    }
    Ok((deltas, t_far - prev))
}

/// Stratified uniform samples: one draw per equal bin of [t_near, t_far].
pub fn sample_uniform(ray: &Ray, n: usize, rng: &mut Stream) -> SampleSet {
    let mut t = Vec::with_capacity(n);
    stratified_into(ray.t_near, ray.t_far, n, rng, &mut t);
    let (delta, terminal_delta) = compute_deltas(&t, ray.t_near, ray.t_far).expect("ascending");
    SampleSet {
        label: vec![Label::Free; t.len()],
        t,
        delta,
        terminal_delta,
        hit_t: None,
        fallback: false,
    }
}

fn stratified_into(lo: f64, hi: f64, n: usize, rng: &mut Stream, out: &mut Vec<f64>) {
    if n == 0 || hi <= lo {
        return;
    }
    let w = (hi - lo) / n as f64;
    for i in 0..n {
        out.push(lo + (i as f64 + rng.random::<f64>()) * w);
    }
}

/// Guided sampling: truncated Gaussian around the hit, uniform elsewhere.
///
/// Important samples follow N(z, (sqrt(3) v)^2) hard-truncated to the band
/// [z - 3*sqrt(3) v, z + 3*sqrt(3) v] intersected with the ray span. Free
/// samples cover the two remaining segments with density proportional to
/// segment length. Without a hit this defers to [`sample_uniform`] with the
/// full sample budget.
pub fn sample_guided(
    ray: &Ray,
    hit: &HitResult,
    leaf_size: f64,
    cfg: &SamplerConfig,
    rng: &mut Stream,
) -> SampleSet {
    let total = cfg.n_important + cfg.n_free;
    if !hit.hit {
        return sample_guided_fallback(ray, total, rng, false);
    }
    debug_assert!(leaf_size > 0.0);
    let z = hit.t_hit;
    let sigma = SIGMA_FACTOR * leaf_size;
    let half = BAND_HALF_WIDTH_FACTOR * leaf_size;
    let band_lo = (z - half).max(ray.t_near);
    let band_hi = (z + half).min(ray.t_far);
    if band_lo >= band_hi {
        return sample_guided_fallback(ray, total, rng, true);
    }

    let mut samples: Vec<(f64, Label)> = Vec::with_capacity(total);

    // Rejection sampling of the truncated Gaussian, clamping to the nearest
    // band edge once the attempt budget runs out.
    for _ in 0..cfg.n_important {
        let mut accepted = None;
        for _ in 0..MAX_REJECTION_ATTEMPTS {
            let x = z + sigma * standard_normal(rng);
            if x >= band_lo && x <= band_hi {
                accepted = Some(x);
                break;
            }
        }
        let x = accepted.unwrap_or_else(|| {
            let x = z + sigma * standard_normal(rng);
            x.clamp(band_lo, band_hi)
        });
        samples.push((x, Label::Important));
    }

    // Free space: both uniform segments, counts proportional to length with
    // the remainder on the far segment.
    let len_a = (band_lo - ray.t_near).max(0.0);
    let len_b = (ray.t_far - band_hi).max(0.0);
    let len_total = len_a + len_b;
    if len_total > 0.0 && cfg.n_free > 0 {
        let n_a = ((cfg.n_free as f64) * len_a / len_total).floor() as usize;
        let n_a = n_a.min(cfg.n_free);
        let n_b = cfg.n_free - n_a;
        let mut free = Vec::with_capacity(cfg.n_free);
        stratified_into(ray.t_near, band_lo, n_a, rng, &mut free);
        stratified_into(band_hi, ray.t_far, n_b, rng, &mut free);
        samples.extend(free.into_iter().map(|t| (t, Label::Free)));
    }

    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // collapse exact ties (possible via clamping), preferring Important
    let mut t = Vec::with_capacity(samples.len());
    let mut label = Vec::with_capacity(samples.len());
    for (x, l) in samples {
        if t.last() == Some(&x) {
            if l == Label::Important {
                *label.last_mut().unwrap() = Label::Important;
            }
            continue;
        }
        t.push(x);
        label.push(l);
    }
    let (delta, terminal_delta) = compute_deltas(&t, ray.t_near, ray.t_far).expect("ascending");
    SampleSet {
        t,
        delta,
        label,
        terminal_delta,
        hit_t: Some(z),
        fallback: false,
    }
}

fn sample_guided_fallback(ray: &Ray, n: usize, rng: &mut Stream, flagged: bool) -> SampleSet {
    let mut set = sample_uniform(ray, n, rng);
    set.fallback = flagged;
    set
}

/// Samples for the configured strategy, using the full budget when uniform.
pub fn sample_for_strategy(
    ray: &Ray,
    hit: &HitResult,
    leaf_size: f64,
    cfg: &SamplerConfig,
    rng: &mut Stream,
) -> SampleSet {
    match cfg.strategy {
        Strategy::Guided => sample_guided(ray, hit, leaf_size, cfg, rng),
        Strategy::Uniform => sample_uniform(ray, cfg.n_important + cfg.n_free, rng),
    }
}

/// CSV dump for plotting sample histograms: "t,label" rows.
pub fn dump_csv(set: &SampleSet) -> String {
    let mut out = String::from("t,label\n");
    for (t, l) in set.t.iter().zip(&set.label) {
        let tag = match l {
            Label::Important => "important",
            Label::Free => "free",
        };
        out.push_str(&format!("{t},{tag}\n"));
    }
    out
}
