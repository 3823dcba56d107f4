//! Acceptance suite: one criterion per numbered check, one printed pass/fail
//! line each. Criteria 7-10 train real models and dominate the runtime; the
//! wall-clock budget of criterion 7 is stated for 8 cores and scaled by the
//! actual core count. Run as `cargo test --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use voxnerf::field::{dir_encode, Field, FieldConfig, HashGridConfig, Trace};
use voxnerf::loss::{
    batch_loss_and_grads, robust_depth_grad, robust_depth_loss, LossConfig, PatchData,
};
use voxnerf::math::{vec3, Aabb, Vec3};
use voxnerf::metrics::{evaluate, EvalReport};
use voxnerf::morton::{morton_decode, morton_encode, MortonCode};
use voxnerf::raycast::{first_hit, intersect_aabb, Camera, HitResult, Ray};
use voxnerf::render::{composite, RenderOptions};
use voxnerf::rng::{standard_normal, substream, Stream};
use voxnerf::sampler::{
    sample_guided, Label, SamplerConfig, Strategy, BAND_HALF_WIDTH_FACTOR, SIGMA_FACTOR,
};
use voxnerf::svo::{build_octree, LeafSize, PointCloud, PriorPoint, SparseVoxelOctree};
use voxnerf::synth::{make_dataset, sample_prior_cloud, Dataset, Split, SyntheticScene, Trajectory};
use voxnerf::train::{train, TrainConfig, TrainState, T_NEAR};

fn main() {
    let mut failed = 0usize;
    let mut run = |num: u32, name: &str, result: Result<String, String>| match result {
        Ok(detail) => println!("criterion {num:2} ({name}): PASS — {detail}"),
        Err(detail) => {
            println!("criterion {num:2} ({name}): FAIL — {detail}");
            failed += 1;
        }
    };

    run(1, "morton round-trip", c01_morton());
    run(2, "traversal vs brute force", c02_traversal());
    run(3, "sampler band guarantee", c03_sampler_band());
    run(4, "rendering quadrature", c04_quadrature());
    run(5, "robust loss analytics", c05_robust_loss());
    run(6, "gradient exactness", c06_gradients());

    let smoke = c07_smoke();
    match &smoke {
        Ok((_, _, _, detail)) => run(7, "end-to-end smoke", Ok(detail.clone())),
        Err(e) => run(7, "end-to-end smoke", Err(e.clone())),
    }

    let (verdict, arms) = c08_arms();
    run(8, "guided vs uniform", verdict);
    run(9, "depth-loss ablation", c09_depth_ablation());
    run(
        10,
        "extrapolation gap",
        c10_extrapolation(smoke.as_ref().ok(), arms.as_ref()),
    );
    run(11, "determinism", c11_determinism());

    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- criterion 1

fn c01_morton() -> Result<String, String> {
    let start = Instant::now();
    for level in 1..=7u32 {
        let n = 1u32 << level;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let m = morton_encode(x, y, z, level)
                        .map_err(|e| format!("encode ({x},{y},{z}) level {level}: {e}"))?;
                    let back = morton_decode(m).map_err(|e| format!("decode: {e}"))?;
                    if back != (x, y, z) {
                        return Err(format!(
                            "round-trip ({x},{y},{z}) level {level} -> {back:?}"
                        ));
                    }
                }
            }
        }
    }
    let dt = start.elapsed().as_secs_f64();
    if dt >= 10.0 {
        return Err(format!("took {dt:.1} s (budget 10 s)"));
    }
    Ok(format!("levels 1-7 exhaustive in {dt:.2} s"))
}

// ---------------------------------------------------------------- criterion 2

fn random_octree(rng: &mut Stream, level_hint: u32) -> SparseVoxelOctree {
    let n_points = rng.random_range(5..60);
    let mut points: Vec<PriorPoint> = (0..n_points)
        .map(|_| PriorPoint {
            position: vec3(rng.random(), rng.random(), rng.random()),
            noise_sigma: 0.0,
        })
        .collect();
    points.push(PriorPoint {
        position: Vec3::ZERO,
        noise_sigma: 0.0,
    });
    points.push(PriorPoint {
        position: Vec3::ONE,
        noise_sigma: 0.0,
    });
    let cloud = PointCloud::from_points(points).unwrap();
    // root side is 1.02 (2% padded unit cube); pick the leaf that yields the
    // requested level
    let leaf = 1.02 / (1u64 << level_hint) as f64 * 1.0001;
    build_octree(&cloud, LeafSize::Explicit(leaf)).unwrap()
}

fn brute_force_first_hit(svo: &SparseVoxelOctree, ray: &Ray) -> HitResult {
    let mut best: Option<(MortonCode, f64)> = None;
    for &code in svo.occupied_leaves() {
        let m = MortonCode {
            code,
            level: svo.max_level,
        };
        let bb = svo.cell_bounds(m).unwrap();
        if let Some((t0, _)) = intersect_aabb(ray, bb.min, bb.max) {
            if best.map_or(true, |(_, bt)| t0 < bt) {
                best = Some((m, t0));
            }
        }
    }
    match best {
        Some((leaf, t)) => HitResult {
            hit: true,
            t_hit: t,
            leaf: Some(leaf),
        },
        None => HitResult::MISS,
    }
}

fn c02_traversal() -> Result<String, String> {
    let mut rng = substream(0xacce97, &[2]);
    let mut hits = 0usize;
    for trial in 0..20u32 {
        let svo = random_octree(&mut rng, 3 + trial % 5);
        for r in 0..500 {
            let ray = Ray {
                origin: vec3(
                    rng.random::<f64>() * 3.0 - 1.0,
                    rng.random::<f64>() * 3.0 - 1.0,
                    rng.random::<f64>() * 3.0 - 1.0,
                ),
                direction: vec3(
                    standard_normal(&mut rng),
                    standard_normal(&mut rng),
                    standard_normal(&mut rng),
                )
                .normalized(),
                t_near: 1e-3,
                t_far: 10.0,
            };
            let fast = first_hit(&svo, &ray);
            let slow = brute_force_first_hit(&svo, &ray);
            if fast.hit != slow.hit {
                return Err(format!("octree {trial} ray {r}: hit {} vs {}", fast.hit, slow.hit));
            }
            if fast.hit {
                hits += 1;
                if fast.leaf != slow.leaf {
                    return Err(format!(
                        "octree {trial} ray {r}: leaf {:?} vs {:?}",
                        fast.leaf, slow.leaf
                    ));
                }
                let rel = (fast.t_hit - slow.t_hit).abs() / slow.t_hit.abs().max(1.0);
                if rel >= 1e-9 {
                    return Err(format!("octree {trial} ray {r}: t rel err {rel:.2e}"));
                }
            }
        }
    }
    Ok(format!(
        "10000 rays x 20 octrees, {hits} hits, leaf identity 100%, t rel err < 1e-9"
    ))
}

// ---------------------------------------------------------------- criterion 3

fn c03_sampler_band() -> Result<String, String> {
    // numeric oracle: moments of the +-3 sigma truncated standard normal
    let steps = 200_000;
    let (mut mass, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for i in 0..steps {
        let x = -3.0 + 6.0 * (i as f64 + 0.5) / steps as f64;
        let p = (-0.5 * x * x).exp();
        mass += p;
        m1 += x * p;
        m2 += x * x * p;
    }
    let oracle_mean_unit = m1 / mass; // 0 by symmetry
    let oracle_std_unit = (m2 / mass - oracle_mean_unit * oracle_mean_unit).sqrt();

    let v = 0.1; // leaf size
    let z = 2.0;
    let sigma = SIGMA_FACTOR * v;
    let half = BAND_HALF_WIDTH_FACTOR * v;
    let oracle_mean = z + sigma * oracle_mean_unit;
    let oracle_std = sigma * oracle_std_unit;

    let ray = Ray {
        origin: Vec3::ZERO,
        direction: vec3(0.0, 0.0, 1.0),
        t_near: 0.01,
        t_far: 6.0,
    };
    let hit = HitResult {
        hit: true,
        t_hit: z,
        leaf: None,
    };
    let cfg = SamplerConfig {
        n_important: 2,
        n_free: 2,
        seed: 0,
        strategy: Strategy::Guided,
    };
    let n_rays = 100_000u64;
    let (mut s, mut s2, mut n) = (0.0, 0.0, 0u64);
    for i in 0..n_rays {
        let mut rng = substream(0xacce97, &[3, i]);
        let set = sample_guided(&ray, &hit, v, &cfg, &mut rng);
        for (t, l) in set.t.iter().zip(&set.label) {
            match l {
                Label::Important => {
                    if *t < z - half || *t > z + half {
                        return Err(format!("important sample {t} outside band"));
                    }
                    s += t;
                    s2 += t * t;
                    n += 1;
                }
                Label::Free => {
                    if *t >= z - half && *t <= z + half {
                        return Err(format!("free sample {t} inside band"));
                    }
                }
            }
        }
    }
    let mean = s / n as f64;
    let std = (s2 / n as f64 - mean * mean).sqrt();
    let mean_err = (mean - oracle_mean).abs() / oracle_mean.abs();
    let std_err = (std - oracle_std).abs() / oracle_std;
    if mean_err >= 0.01 {
        return Err(format!("mean {mean:.6} vs oracle {oracle_mean:.6} ({mean_err:.2e} rel)"));
    }
    if std_err >= 0.05 {
        return Err(format!("std {std:.6} vs oracle {oracle_std:.6} ({std_err:.2e} rel)"));
    }
    Ok(format!(
        "{n} important samples over {n_rays} rays all in band; mean rel err {mean_err:.1e}, std rel err {std_err:.1e}"
    ))
}

// ---------------------------------------------------------------- criterion 4

fn c04_quadrature() -> Result<String, String> {
    let opts = RenderOptions::default();
    let n = 512;
    let ts: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let deltas = vec![1.0 / n as f64; n];
    let sigmas = vec![4.0; n];
    let colors = vec![[1.0; 3]; n];
    let r = composite(&sigmas, &colors, &deltas, &ts, &opts).map_err(|e| e.to_string())?;
    let expect = 1.0 - (-4.0f64).exp();
    let opacity_err = (r.opacity - expect).abs();
    if opacity_err >= 1e-3 {
        return Err(format!("opacity {} vs {expect} (err {opacity_err:.2e})", r.opacity));
    }

    let mut rng = substream(0xacce97, &[4]);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let k = rng.random_range(1..32);
        let sigmas: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 20.0).collect();
        let deltas: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 0.2 + 1e-4).collect();
        let mut acc = 0.0;
        let ts: Vec<f64> = deltas
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect();
        let colors = vec![[0.5; 3]; k];
        let r = composite(&sigmas, &colors, &deltas, &ts, &opts).map_err(|e| e.to_string())?;
        let total: f64 = r.weights.iter().sum::<f64>() + r.residual_transmittance;
        worst = worst.max((total - 1.0).abs());
    }
    if worst >= 1e-6 {
        return Err(format!("partition of unity err {worst:.2e}"));
    }
    Ok(format!(
        "opacity err {opacity_err:.1e} (tol 1e-3); worst partition err {worst:.1e} over 10^4 inputs"
    ))
}

// ---------------------------------------------------------------- criterion 5

fn c05_robust_loss() -> Result<String, String> {
    let beta = 0.1f64;
    // both branch formulas at r = beta
    let quad = 0.5 * beta * beta;
    let log = beta * beta * (0.5 + (beta / beta).ln());
    if (quad - log).abs() >= 1e-12 {
        return Err(format!("branch values differ at beta: {quad} vs {log}"));
    }
    // one-sided numeric derivatives at r = beta
    let h = 1e-7;
    let at = |r: f64| robust_depth_loss(r, 0.0, beta);
    let d_plus = (at(beta + h) - at(beta)) / h;
    let d_minus = (at(beta) - at(beta - h)) / h;
    if (d_plus - d_minus).abs() >= 1e-6 {
        return Err(format!("one-sided derivatives {d_minus} vs {d_plus}"));
    }
    let analytic = robust_depth_grad(beta, 0.0, beta);
    if (analytic - beta).abs() >= 1e-12 {
        return Err(format!("analytic grad at beta: {analytic} vs {beta}"));
    }
    // log-branch identity loss(2r) - loss(r) = beta^2 ln 2 for r >= beta
    let expect = beta * beta * std::f64::consts::LN_2;
    for r in [beta, 0.2, 0.5, 1.0, 3.0] {
        let diff = at(2.0 * r) - at(r);
        if (diff - expect).abs() >= 1e-12 {
            return Err(format!("log identity at r={r}: {diff} vs {expect}"));
        }
    }
    Ok(format!(
        "branch agreement, derivative continuity ({d_minus:.8} vs {d_plus:.8}), log identity"
    ))
}

// ---------------------------------------------------------------- criterion 6

fn c06_gradients() -> Result<String, String> {
    let h = 1e-3; // finite-difference step per the criterion
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;

    // ---- field backward vs central differences
    let cfg = FieldConfig {
        grid: HashGridConfig {
            n_levels: 3,
            table_size_log2: 10,
            features_per_level: 2,
            base_resolution: 4,
            growth_factor: 2.0,
        },
        density_hidden: 16,
        hidden_dim: 7,
        color_hidden: 16,
    };
    let field = Field::init(cfg, 9);
    let mut rng = substream(0xacce97, &[6]);
    for _ in 0..8 {
        let p = vec3(rng.random(), rng.random(), rng.random());
        let dir = vec3(
            standard_normal(&mut rng),
            standard_normal(&mut rng),
            standard_normal(&mut rng),
        )
        .normalized();
        let enc = dir_encode(dir);
        let wd: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let wc = [
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
        ];
        let scalar = |f: &Field| {
            let mut t = Trace::default();
            f.forward_traced(p, &enc, &mut t);
            wd * t.density + wc[0] * t.color[0] + wc[1] * t.color[1] + wc[2] * t.color[2]
        };
        let mut trace = Trace::default();
        field.forward_traced(p, &enc, &mut trace);
        let mut grads = vec![0.0; field.layout.total];
        field.backward_traced(&trace, wd, wc, &mut grads);

        // all coordinates the analytic gradient touches, subsampled
        let touched: Vec<usize> = (0..grads.len()).filter(|&i| grads[i] != 0.0).collect();
        let mut f = field.clone();
        for _ in 0..150 {
            let i = touched[rng.random_range(0..touched.len())];
            let orig = f.params[i];
            f.params[i] = orig + h;
            let plus = scalar(&f);
            f.params[i] = orig - h;
            let minus = scalar(&f);
            f.params[i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-8);
            worst = worst.max(rel);
            checked += 1;
            if rel >= 1e-3 {
                return Err(format!(
                    "field param {i}: fd {fd:.9} vs analytic {:.9} (rel {rel:.2e})",
                    grads[i]
                ));
            }
        }
    }

    // ---- loss gradients vs central differences
    let lcfg = LossConfig::default();
    let make_patches = |rng: &mut Stream| -> Vec<PatchData> {
        (0..4)
            .map(|_| {
                let n = 64;
                let depths: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>() * 4.0).collect();
                let pseudo: Vec<Option<f64>> = depths
                    .iter()
                    .map(|d| {
                        if rng.random::<f64>() < 0.2 {
                            None
                        } else {
                            // keep the residual away from the robust-loss
                            // kinks at 0 and beta so the FD stencil is valid
                            let mut r = rng.random::<f64>() * 0.8 - 0.4;
                            while r.abs() < 5e-3 || (r.abs() - lcfg.beta).abs() < 5e-3 {
                                r = rng.random::<f64>() * 0.8 - 0.4;
                            }
                            Some(d - r)
                        }
                    })
                    .collect();
                PatchData {
                    size: 8,
                    pred_colors: (0..n)
                        .map(|_| [rng.random(), rng.random(), rng.random()])
                        .collect(),
                    gt_colors: (0..n)
                        .map(|_| [rng.random(), rng.random(), rng.random()])
                        .collect(),
                    depths,
                    pseudo,
                }
            })
            .collect()
    };
    let patches = make_patches(&mut rng);
    let (_, grads) = batch_loss_and_grads(&patches, &lcfg).map_err(|e| e.to_string())?;
    let total_of = |ps: &[PatchData]| batch_loss_and_grads(ps, &lcfg).unwrap().0.total;

    // the smoothness term kinks where depth differences cross zero at any
    // pyramid level; skip coordinates whose FD stencil straddles one
    let kink_safe = |ps: &[PatchData], pi: usize, i: usize| -> bool {
        let p = &ps[pi];
        let mut d = p.depths.clone();
        let mut m: Vec<bool> = p.pseudo.iter().map(|x| x.is_some()).collect();
        let mut idx: Vec<f64> = vec![0.0; 64];
        idx[i] = 1.0; // influence of coordinate i at each level
        let (mut w, mut hgt) = (8usize, 8usize);
        loop {
            for y in 0..hgt {
                for x in 0..w {
                    let j = y * w + x;
                    let influence = |a: usize, b: usize| idx[a] != 0.0 || idx[b] != 0.0;
                    if x + 1 < w && m[j] && m[j + 1] && influence(j, j + 1) {
                        if (d[j + 1] - d[j]).abs() < 4.0 * h {
                            return false;
                        }
                    }
                    if y + 1 < hgt && m[j] && m[j + w] && influence(j, j + w) {
                        if (d[j + w] - d[j]).abs() < 4.0 * h {
                            return false;
                        }
                    }
                }
            }
            if w / 2 < 2 || hgt / 2 < 2 {
                return true;
            }
            let (nw, nh) = (w / 2, hgt / 2);
            let mut nd = vec![0.0; nw * nh];
            let mut nm = vec![false; nw * nh];
            let mut ni = vec![0.0; nw * nh];
            for y in 0..nh {
                for x in 0..nw {
                    let mut s = 0.0;
                    let mut inf = 0.0;
                    let mut all = true;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let j = (2 * y + dy) * w + 2 * x + dx;
                            s += d[j];
                            inf += idx[j];
                            all &= m[j];
                        }
                    }
                    nd[y * nw + x] = s * 0.25;
                    ni[y * nw + x] = inf * 0.25;
                    nm[y * nw + x] = all;
                }
            }
            d = nd;
            m = nm;
            idx = ni;
            w = nw;
            hgt = nh;
        }
    };

    let mut loss_checked = 0usize;
    let mut pi = 0usize;
    let mut i = 0usize;
    while loss_checked < 500 {
        // cycle through coordinates deterministically
        i += 7;
        if i >= 64 {
            i -= 64;
            pi = (pi + 1) % 4;
        }
        // color coordinate: always smooth
        let k = loss_checked % 3;
        let mut ps = patches.clone();
        ps[pi].pred_colors[i][k] += h;
        let plus = total_of(&ps);
        ps[pi].pred_colors[i][k] -= 2.0 * h;
        let minus = total_of(&ps);
        let fd = (plus - minus) / (2.0 * h);
        let an = grads[pi].d_color[i][k];
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
        worst = worst.max(rel);
        checked += 1;
        loss_checked += 1;
        if rel >= 1e-3 {
            return Err(format!(
                "loss d_color[{pi}][{i}][{k}]: fd {fd:.9} vs {an:.9} (rel {rel:.2e})"
            ));
        }

        if kink_safe(&patches, pi, i) {
            let mut ps = patches.clone();
            ps[pi].depths[i] += h;
            let plus = total_of(&ps);
            ps[pi].depths[i] -= 2.0 * h;
            let minus = total_of(&ps);
            let fd = (plus - minus) / (2.0 * h);
            let an = grads[pi].d_depth[i];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            worst = worst.max(rel);
            checked += 1;
            loss_checked += 1;
            if rel >= 1e-3 {
                return Err(format!(
                    "loss d_depth[{pi}][{i}]: fd {fd:.9} vs {an:.9} (rel {rel:.2e})"
                ));
            }
        }
    }

    if checked < 1000 {
        return Err(format!("only {checked} coordinates sampled (need >= 1000)"));
    }
    Ok(format!("{checked} coordinates, max rel err {worst:.2e} (tol 1e-3)"))
}

// ------------------------------------------------------- shared training gear

fn far_plane(svo: &SparseVoxelOctree, cameras: &[Camera]) -> f64 {
    let root: Aabb = svo.root_bounds;
    cameras
        .iter()
        .map(|c| (c.translation - root.center()).norm() + 0.75 * root.diagonal())
        .fold(0.0, f64::max)
}

fn eval_split(
    state: &TrainState,
    svo: &SparseVoxelOctree,
    dataset: &Dataset,
    split: Split,
    cfg: &TrainConfig,
) -> Result<EvalReport, String> {
    let sampler = cfg.sampler_config();
    evaluate(
        &state.field,
        svo,
        dataset,
        split,
        &sampler,
        &RenderOptions::default(),
        T_NEAR,
        far_plane(svo, &dataset.cameras),
        state.iter,
    )
    .map_err(|e| e.to_string())
}

fn small_field() -> FieldConfig {
    FieldConfig {
        grid: HashGridConfig {
            n_levels: 4,
            table_size_log2: 12,
            features_per_level: 2,
            base_resolution: 8,
            growth_factor: 1.6,
        },
        density_hidden: 16,
        hidden_dim: 7,
        color_hidden: 16,
    }
}

fn arm_config(seed: u64, strategy: Strategy, depth_loss: bool) -> TrainConfig {
    let mut cfg = TrainConfig {
        iterations: 2000,
        rays_per_batch: 128,
        patch_size: 8,
        n_important: 32,
        n_free: 32,
        seed,
        strategy,
        checkpoint_every: 2000,
        ..TrainConfig::default()
    };
    if !depth_loss {
        cfg.loss.lambda_d = 0.0;
    }
    cfg
}

const ARM_SEEDS: [u64; 3] = [100, 101, 102];

// ---------------------------------------------------------------- criterion 7

type Smoke = (TrainState, SparseVoxelOctree, Dataset, String);

fn c07_smoke() -> Result<Smoke, String> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let budget = 30.0 * 60.0 * 8.0 / cores as f64; // stated for 8 cores
    let scene = SyntheticScene::toy_room();
    let dataset =
        make_dataset(&scene, 20, 8, Trajectory::InsideOut, 64, 64).map_err(|e| e.to_string())?;
    let cloud = sample_prior_cloud(&scene, 50_000, 0.02, 0.01, 5).map_err(|e| e.to_string())?;
    let svo = build_octree(&cloud, LeafSize::Auto).map_err(|e| e.to_string())?;
    let field_cfg = FieldConfig {
        grid: HashGridConfig {
            n_levels: 6,
            table_size_log2: 13,
            features_per_level: 2,
            base_resolution: 16,
            growth_factor: 1.5,
        },
        density_hidden: 32,
        hidden_dim: 15,
        color_hidden: 32,
    };
    let cfg = TrainConfig {
        iterations: 5000,
        rays_per_batch: 512,
        patch_size: 8,
        n_important: 32,
        n_free: 32,
        seed: 1,
        checkpoint_every: 5000,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (state, _) = train(&dataset, &svo, field_cfg, &cfg, None).map_err(|e| e.to_string())?;
    let dt = start.elapsed().as_secs_f64();
    let report = eval_split(&state, &svo, &dataset, Split::TestInterp, &cfg)?;
    let mut problems = Vec::new();
    if report.mean_psnr < 24.0 {
        problems.push(format!("interp PSNR {:.2} < 24 dB", report.mean_psnr));
    }
    if report.mean_ssim < 0.80 {
        problems.push(format!("interp SSIM {:.4} < 0.80", report.mean_ssim));
    }
    if dt >= budget {
        problems.push(format!(
            "wall clock {:.0} s >= {budget:.0} s ({cores}-core scaled budget)",
            dt
        ));
    }
    if !problems.is_empty() {
        return Err(problems.join("; "));
    }
    let detail = format!(
        "interp PSNR {:.2} dB, SSIM {:.4}; {:.0} s on {cores} core(s) (budget {budget:.0} s)",
        report.mean_psnr, report.mean_ssim, dt
    );
    Ok((state, svo, dataset, detail))
}

// ---------------------------------------------------------------- criterion 8

/// Per-seed guided/uniform models trained on the noisy-prior dataset,
/// reused by criterion 10 for the extrapolation-split comparison.
struct Arms {
    svo: SparseVoxelOctree,
    dataset: Dataset,
    runs: Vec<(u64, TrainState, TrainState)>, // (seed, guided, uniform)
}

fn c08_arms() -> (Result<String, String>, Option<Arms>) {
    let built = (|| -> Result<Arms, String> {
        let scene = SyntheticScene::toy_room();
        let dataset = make_dataset(&scene, 16, 6, Trajectory::InsideOut, 48, 48)
            .map_err(|e| e.to_string())?;
        // prior noise sigma = 2% of the room diagonal
        let sigma = 0.02 * scene.room.diagonal();
        let cloud =
            sample_prior_cloud(&scene, 50_000, sigma, 0.01, 11).map_err(|e| e.to_string())?;
        let svo = build_octree(&cloud, LeafSize::Auto).map_err(|e| e.to_string())?;
        let mut runs = Vec::new();
        for seed in ARM_SEEDS {
            let g_cfg = arm_config(seed, Strategy::Guided, true);
            let u_cfg = arm_config(seed, Strategy::Uniform, true);
            let (g, _) =
                train(&dataset, &svo, small_field(), &g_cfg, None).map_err(|e| e.to_string())?;
            let (u, _) =
                train(&dataset, &svo, small_field(), &u_cfg, None).map_err(|e| e.to_string())?;
            runs.push((seed, g, u));
        }
        Ok(Arms { svo, dataset, runs })
    })();
    let arms = match built {
        Ok(a) => a,
        Err(e) => return (Err(e), None),
    };
    let verdict = (|| {
        let mut gaps = Vec::new();
        let mut details = Vec::new();
        for (seed, g, u) in &arms.runs {
            let g_cfg = arm_config(*seed, Strategy::Guided, true);
            let u_cfg = arm_config(*seed, Strategy::Uniform, true);
            let gp = eval_split(g, &arms.svo, &arms.dataset, Split::TestInterp, &g_cfg)?.mean_psnr;
            let up = eval_split(u, &arms.svo, &arms.dataset, Split::TestInterp, &u_cfg)?.mean_psnr;
            details.push(format!("seed {seed}: guided {gp:.2} vs uniform {up:.2} dB"));
            gaps.push(gp - up);
        }
        let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let detail = format!("{}; mean gap {mean_gap:+.2} dB", details.join("; "));
        if gaps.iter().any(|g| *g <= 0.0) {
            return Err(format!("direction does not hold on every seed: {detail}"));
        }
        if mean_gap < 1.0 {
            return Err(format!("mean gap below 1.0 dB: {detail}"));
        }
        Ok(detail)
    })();
    (verdict, Some(arms))
}

// ---------------------------------------------------------------- criterion 9

fn c09_depth_ablation() -> Result<String, String> {
    let scene = SyntheticScene::toy_room();
    let dataset =
        make_dataset(&scene, 16, 6, Trajectory::InsideOut, 48, 48).map_err(|e| e.to_string())?;
    let cloud = sample_prior_cloud(&scene, 50_000, 0.02, 0.01, 12).map_err(|e| e.to_string())?;
    let svo = build_octree(&cloud, LeafSize::Auto).map_err(|e| e.to_string())?;

    let mut reductions = Vec::new();
    let mut details = Vec::new();
    for seed in ARM_SEEDS {
        let on_cfg = arm_config(seed, Strategy::Guided, true);
        let off_cfg = arm_config(seed, Strategy::Guided, false);
        let (on, _) =
            train(&dataset, &svo, small_field(), &on_cfg, None).map_err(|e| e.to_string())?;
        let (off, _) =
            train(&dataset, &svo, small_field(), &off_cfg, None).map_err(|e| e.to_string())?;
        let mae_on = eval_split(&on, &svo, &dataset, Split::TestInterp, &on_cfg)?
            .mean_depth_mae
            .ok_or("no valid depth pixels (depth on)")?;
        let mae_off = eval_split(&off, &svo, &dataset, Split::TestInterp, &off_cfg)?
            .mean_depth_mae
            .ok_or("no valid depth pixels (depth off)")?;
        let reduction = 1.0 - mae_on / mae_off;
        details.push(format!(
            "seed {seed}: MAE {mae_on:.4} vs {mae_off:.4} m ({:+.0}%)",
            -100.0 * reduction
        ));
        reductions.push(reduction);
    }
    let mean = reductions.iter().sum::<f64>() / reductions.len() as f64;
    let detail = format!("{}; mean reduction {:.0}%", details.join("; "), 100.0 * mean);
    if reductions.iter().any(|r| *r <= 0.0) {
        return Err(format!("depth loss does not reduce MAE on every seed: {detail}"));
    }
    if mean < 0.20 {
        return Err(format!("mean reduction below 20%: {detail}"));
    }
    Ok(detail)
}

// --------------------------------------------------------------- criterion 10

fn c10_extrapolation(smoke: Option<&Smoke>, arms: Option<&Arms>) -> Result<String, String> {
    let (state, svo, dataset, _) = smoke.ok_or("criterion 7 artifacts unavailable")?;
    let cfg = TrainConfig {
        n_important: 32,
        n_free: 32,
        seed: 1,
        ..TrainConfig::default()
    };
    let interp = eval_split(state, svo, dataset, Split::TestInterp, &cfg)?.mean_psnr;
    let extrap = eval_split(state, svo, dataset, Split::TestExtrap, &cfg)?.mean_psnr;
    if extrap >= interp {
        return Err(format!(
            "extrap PSNR {extrap:.2} dB not below interp {interp:.2} dB"
        ));
    }

    let arms = arms.ok_or("criterion 8 artifacts unavailable")?;
    let mut gaps = Vec::new();
    let mut details = Vec::new();
    for (seed, g, u) in &arms.runs {
        let g_cfg = arm_config(*seed, Strategy::Guided, true);
        let u_cfg = arm_config(*seed, Strategy::Uniform, true);
        let gp = eval_split(g, &arms.svo, &arms.dataset, Split::TestExtrap, &g_cfg)?.mean_psnr;
        let up = eval_split(u, &arms.svo, &arms.dataset, Split::TestExtrap, &u_cfg)?.mean_psnr;
        details.push(format!("seed {seed}: {gp:.2} vs {up:.2} dB"));
        gaps.push(gp - up);
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let detail = format!(
        "smoke interp {interp:.2} > extrap {extrap:.2} dB; extrap guided-vs-uniform {}; mean gap {mean_gap:+.2} dB",
        details.join("; ")
    );
    if gaps.iter().any(|g| *g <= 0.0) {
        return Err(format!("guided advantage absent on some seed: {detail}"));
    }
    if mean_gap < 0.5 {
        return Err(format!("extrap gap below 0.5 dB: {detail}"));
    }
    Ok(detail)
}

// --------------------------------------------------------------- criterion 11

fn run_pipeline(dir: &Path, threads: &str) -> Result<(), String> {
    let bin = env!("CARGO_BIN_EXE_voxnerf");
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    fs::write(
        dir.join("field.json"),
        r#"{"grid":{"n_levels":4,"table_size_log2":12,"features_per_level":2,"base_resolution":8,"growth_factor":1.6},"density_hidden":16,"hidden_dim":7,"color_hidden":16}"#,
    )
    .map_err(|e| e.to_string())?;
    fs::write(
        dir.join("train.json"),
        r#"{"iterations":40,"rays_per_batch":128,"patch_size":8,"n_important":16,"n_free":16,"lr_init":0.01,"lr_decay_to":0.01,"seed":5,"loss":{"beta":0.1,"lambda_d":0.1,"n_scales":4,"patch_size":8},"strategy":"guided","checkpoint_every":20,"grad_clip":10.0}"#,
    )
    .map_err(|e| e.to_string())?;
    let steps: Vec<Vec<&str>> = vec![
        vec![
            "synth-gen", "--out", "data", "--train", "6", "--test", "4", "--width", "24",
            "--height", "24", "--points", "8000", "--noise", "0.05", "--seed", "3",
        ],
        vec!["build-svo", "--prior", "data/prior.ply", "--out", "svo.json"],
        vec![
            "train", "--data", "data", "--svo", "svo.json", "--config", "train.json",
            "--field", "field.json", "--out", "model.vxnf",
        ],
        vec![
            "render", "--ckpt", "model.vxnf", "--data", "data", "--svo", "svo.json",
            "--view", "0", "--out", "v0.ppm", "--depth-out", "v0.raw",
            "--n-important", "16", "--n-free", "16",
        ],
        vec![
            "eval", "--ckpt", "model.vxnf", "--data", "data", "--svo", "svo.json",
            "--split", "interp", "--out", "report.json",
            "--n-important", "16", "--n-free", "16",
        ],
    ];
    for step in steps {
        let out = Command::new(bin)
            .current_dir(dir)
            .arg("--threads")
            .arg(threads)
            .args(&step)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "step {:?} failed: {}",
                step,
                String::from_utf8_lossy(&out.stderr)
            ));
        }
    }
    Ok(())
}

fn c11_determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pipeline(&tmp.path().join("a"), "1")?;
    run_pipeline(&tmp.path().join("b"), "1")?;
    run_pipeline(&tmp.path().join("c"), "2")?;
    // manifest.json carries a timestamp by design; everything else must be
    // byte-identical
    let artifacts = [
        "data/cameras.json",
        "data/split.json",
        "data/prior.ply",
        "data/images/0000.ppm",
        "data/depths/0000.raw",
        "svo.json",
        "model.vxnf",
        "model.csv",
        "v0.ppm",
        "v0.raw",
        "report.json",
        "report.csv",
    ];
    for other in ["b", "c"] {
        for f in artifacts {
            let a = fs::read(tmp.path().join("a").join(f)).map_err(|e| format!("{f}: {e}"))?;
            let o = fs::read(tmp.path().join(other).join(f)).map_err(|e| format!("{f}: {e}"))?;
            if a != o {
                return Err(format!("{f} differs between runs a and {other}"));
            }
        }
    }
    Ok(format!(
        "{} artifacts byte-identical across reruns and thread counts",
        artifacts.len()
    ))
}
