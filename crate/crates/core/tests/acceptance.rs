//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vgc_core::baselines::{
    gibbs_horseshoe, mfvb_horseshoe, rwmh_sample, vgc_ln_deterministic, vgc_ln_elbo, vgc_ln_gradient,
    VgcLnHorseshoeParams, VgcLnMode,
};
use vgc_core::diagnostics::{default_options, kl_1d_quadrature, kl_decomposition_check, kl_total_2d, rmse_rho};
use vgc_core::harness::{build_model, default_optimizer, default_rwmh, initial_vi_state, Experiment, Method, ModelConfig};
use vgc_core::models::{
    BetaTarget, BivariateLogNormal, GammaTarget, Horseshoe, Normal, SkewNormal, StudentT, TargetModel,
};
use vgc_core::optimizer::{
    elbo_estimate, fit, grad_z_local, local_objective, project_simplex, sample_gradient, state_from_parts,
    EntropyScheme, OptimizerConfig, StepSchedule,
};
use vgc_core::quadrature::{integrate_real_line, integrate_upper, QuadOptions};
use vgc_core::{LowerTriangular, MarginalTransform, ReferenceCdf, Result, VgcState};

struct Outcome {
    pass: bool,
    detail: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normals(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

/// Mean, and standard error from `batches` batch means.
fn batch_mean_se(v: &[f64], batches: usize) -> (f64, f64) {
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let b = n / batches;
    let bm: Vec<f64> = (0..batches).map(|i| v[i * b..(i + 1) * b].iter().sum::<f64>() / b as f64).collect();
    let m = bm.iter().sum::<f64>() / batches as f64;
    let var = bm.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

fn sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Standard deviation with a batch-means standard error.
fn batch_sd_se(v: &[f64], batches: usize) -> (f64, f64) {
    let b = v.len() / batches;
    let bs: Vec<f64> = (0..batches).map(|i| sd(&v[i * b..(i + 1) * b])).collect();
    (sd(v), sd(&bs) / (batches as f64).sqrt())
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

fn column(s: &[Vec<f64>], j: usize) -> Vec<f64> {
    s.iter().map(|v| v[j]).collect()
}

fn quantile(v: &[f64], p: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[((p * (s.len() - 1) as f64).round()) as usize]
}

// ---------------------------------------------------------------- criterion 1

fn horseshoe_table() -> Result<Outcome> {
    let t0 = Instant::now();
    let y = 0.01;
    let (_, mfvb) = mfvb_horseshoe(y, 10_000, 1e-12)?;
    let init = VgcLnHorseshoeParams::new(0.0, 0.0, 1.0, 0.0, 1.0)?;
    let full = vgc_ln_deterministic(y, VgcLnMode::Full, init, 200_000)?.elbo;
    let diag = vgc_ln_deterministic(y, VgcLnMode::Diag, init, 200_000)?.elbo;

    let model = Horseshoe::new(y)?;
    let mut bp = Vec::new();
    for seed in 0..3 {
        let cfg = OptimizerConfig {
            seed,
            ..default_optimizer(Experiment::Horseshoe, Method::VgcBp)
        };
        let init = initial_vi_state(Experiment::Horseshoe, Method::VgcBp, 10, &model.supports())?;
        let r = fit(&model, init, &cfg)?;
        let e = elbo_estimate(&r.state, &model, 100_000, &mut rng(1000 + seed))?;
        bp.push(e.value);
    }
    let best = bp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let secs = t0.elapsed().as_secs_f64();
    let checks = [
        (mfvb - -1.0778).abs() <= 1e-3,
        (full - -0.0634).abs() <= 0.02,
        (diag - -1.2399).abs() <= 0.02,
        best >= 0.20,
        best > full,
        full > mfvb && mfvb > diag,
        secs < 120.0,
    ];
    Ok(Outcome {
        pass: checks.iter().all(|&c| c),
        detail: format!(
            "MFVB {mfvb:.4}, VGC-LN full {full:.4}, diag {diag:.4}, VGC-BP best of 3 {best:.4} (seeds {bp:.4?}; log evidence {:.4}), {secs:.0}s",
            model.log_evidence()?
        ),
    })
}

// ---------------------------------------------------------------- criterion 2

fn bvln_recovery() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for rho in [0.4, -0.4] {
        let model = BivariateLogNormal::new(0.1, 0.1, 0.5, 0.5, rho)?;
        let (mut rho_ln, mut kl_ln, mut kl_bp) = (Vec::new(), Vec::new(), Vec::new());
        for seed in 0..5 {
            for method in [Method::VgcLn, Method::VgcBp] {
                let cfg = OptimizerConfig {
                    seed,
                    iterations: 20_000,
                    scheme: EntropyScheme::Stochastic,
                    ..default_optimizer(Experiment::Bvln, method)
                };
                let init = initial_vi_state(Experiment::Bvln, method, 10, &model.supports())?;
                let r = fit(&model, init, &cfg)?;
                let kl = kl_total_2d(&r.state, &model, default_options())?;
                if method == Method::VgcLn {
                    rho_ln.push(r.state.correlation_of()[0][1]);
                    kl_ln.push(kl);
                } else {
                    kl_bp.push(kl);
                }
            }
        }
        let (rho_hat, kl_ln, kl_bp) = (median(rho_ln), median(kl_ln), median(kl_bp));
        pass &= (rho_hat - rho).abs() <= 0.05 && kl_bp <= 2.0 * kl_ln;
        parts.push(format!("rho {rho}: LN rho_hat {rho_hat:.4}, KL LN {kl_ln:.2e}, KL BP {kl_bp:.2e}"));
    }
    Ok(Outcome {
        pass,
        detail: parts.join("; "),
    })
}

// ---------------------------------------------------------------- criterion 3

fn scheme_comparison() -> Result<Outcome> {
    let rho = 0.4;
    let model = BivariateLogNormal::new(0.1, 0.1, 0.5, 0.5, rho)?;
    let mut med = Vec::new();
    for scheme in [EntropyScheme::Stochastic, EntropyScheme::Analytic] {
        let mut errs = Vec::new();
        for seed in 0..10 {
            let cfg = OptimizerConfig {
                seed,
                iterations: 5_000,
                scheme,
                ..default_optimizer(Experiment::Bvln, Method::VgcLn)
            };
            let init = initial_vi_state(Experiment::Bvln, Method::VgcLn, 10, &model.supports())?;
            let r = fit(&model, init, &cfg)?;
            errs.push(rmse_rho(r.state.correlation_of()[0][1], rho)?);
        }
        med.push(median(errs));
    }

    // exact optimum: log-normal margins with the true correlation
    let c22 = 0.5 * (1.0f64 - rho * rho).sqrt();
    let opt = state_from_parts(
        vec![0.1, 0.1],
        &[vec![0.5, 0.0], vec![0.5 * rho, c22]],
        vec![MarginalTransform::Exponential; 2],
    )?;
    let mut r = rng(3);
    let mut var = Vec::new();
    for scheme in [EntropyScheme::Stochastic, EntropyScheme::Analytic] {
        let g: Vec<Vec<f64>> = (0..1000)
            .map(|_| sample_gradient(&opt, &model, &normals(&mut r, 2), scheme).map(|g| g.mu))
            .collect::<Result<_>>()?;
        var.push((0..2).map(|j| sd(&column(&g, j)).powi(2)).sum::<f64>());
    }
    Ok(Outcome {
        // zero in exact arithmetic; what remains is rounding in ∇ℓ_s - ∇ln q_G
        pass: med[0] <= med[1] && var[0] <= 1e-20 && var[1] > 0.0,
        detail: format!(
            "median RMSE after 5000 iterations: stochastic {:.3e}, analytic {:.3e}; mu-gradient variance at optimum: stochastic {:.1e}, analytic {:.3e}",
            med[0], med[1], var[0], var[1]
        ),
    })
}

// ---------------------------------------------------------------- criterion 4

fn margins_1d() -> Result<Outcome> {
    let targets: Vec<(&str, Box<dyn TargetModel>)> = vec![
        ("SkewNormal(5)", Box::new(SkewNormal::new(5.0)?)),
        ("StudentT(1)", Box::new(StudentT::new(1.0)?)),
        ("Gamma(5,2)", Box::new(GammaTarget::new(5.0, 2.0)?)),
        ("Beta(0.5,0.5)", Box::new(BetaTarget::new(0.5, 0.5)?)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, model) in &targets {
        let t0 = Instant::now();
        let mut kls = [Vec::new(), Vec::new()];
        for seed in 0..5 {
            for (slot, method) in [Method::VgcBp, Method::VitBp].into_iter().enumerate() {
                let mut cfg = OptimizerConfig {
                    seed,
                    ..default_optimizer(Experiment::Fit1d, method)
                };
                if method == Method::VitBp {
                    cfg = cfg.weights_only();
                }
                let init = initial_vi_state(Experiment::Fit1d, method, 10, &model.supports())?;
                let r = fit(model.as_ref(), init, &cfg)?;
                kls[slot].push(kl_1d_quadrature(&r.state, 0, model.as_ref())?);
            }
        }
        let secs = t0.elapsed().as_secs_f64();
        let [bp, vit] = kls;
        let (bp, vit) = (median(bp), median(vit));
        pass &= bp < 0.05 && bp <= vit + 0.01 && secs < 60.0;
        parts.push(format!("{name}: BP {bp:.4}, VIT {vit:.4}, {secs:.0}s"));
    }
    Ok(Outcome {
        pass,
        detail: parts.join("; "),
    })
}

// ---------------------------------------------------------------- criterion 5

fn random_bp(r: &mut ChaCha8Rng, k: usize, reference: ReferenceCdf, floor: f64) -> Result<MarginalTransform> {
    let raw: Vec<f64> = (0..k).map(|_| -r.random::<f64>().ln() + floor).collect();
    let s: f64 = raw.iter().sum();
    MarginalTransform::bernstein(k, raw.iter().map(|w| w / s).collect(), reference)
}

fn kl_decomposition() -> Result<Outcome> {
    let p = BivariateLogNormal::new(0.1, 0.1, 0.5, 0.5, 0.4)?;
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let k = r.random_range(2..=6);
        let tr = vec![
            random_bp(&mut r, k, ReferenceCdf::exponential(1.0)?, 0.2)?,
            random_bp(&mut r, k, ReferenceCdf::exponential(1.0)?, 0.2)?,
        ];
        let mu = vec![r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)];
        let rows = [
            vec![r.random_range(0.4..1.2), 0.0],
            vec![r.random_range(-0.5..0.5), r.random_range(0.4..1.2)],
        ];
        let q = state_from_parts(mu, &rows, tr)?;
        let d = kl_decomposition_check(&q, &p)?;
        worst = worst.max(d.residual.abs());
    }
    Ok(Outcome {
        pass: worst < 1e-4,
        detail: format!("largest |residual| over 20 random states {worst:.2e}"),
    })
}

// ---------------------------------------------------------------- criterion 6

/// Fourth-order central difference.
fn fd<F: FnMut(f64) -> Result<f64>>(mut f: F, x: f64, h: f64) -> Result<f64> {
    Ok((-f(x + 2.0 * h)? + 8.0 * f(x + h)? - 8.0 * f(x - h)? + f(x - 2.0 * h)?) / (12.0 * h))
}

#[derive(Default)]
struct GradTally {
    checked: usize,
    failed: Vec<String>,
}

impl GradTally {
    fn check(&mut self, what: &str, analytic: f64, numeric: f64) {
        self.checked += 1;
        if !((analytic - numeric).abs() <= 1e-4 * numeric.abs() + 1e-8) {
            self.failed.push(format!("{what}: analytic {analytic:e} vs numeric {numeric:e}"));
        }
    }
}

fn random_reference(r: &mut ChaCha8Rng) -> Result<ReferenceCdf> {
    Ok(match r.random_range(0..4) {
        0 => ReferenceCdf::StdNormal,
        1 => ReferenceCdf::exponential(1.0)?,
        2 => ReferenceCdf::Beta22,
        _ => ReferenceCdf::exponential(0.01)?,
    })
}

fn transform_gradients(t: &mut GradTally) -> Result<()> {
    let mut r = rng(6);
    for _ in 0..100 {
        let k = r.random_range(1..=20);
        let reference = random_reference(&mut r)?;
        let tr = random_bp(&mut r, k, reference, 0.05)?;
        let z: f64 = r.random_range(-3.0..3.0);
        let h = 1e-3;
        t.check("h'", tr.deriv(z)?, fd(|v| tr.forward(v), z, h)?);
        t.check("h''", tr.second_deriv(z)?, fd(|v| tr.deriv(v), z, h)?);
        t.check("d ln h'/dz", tr.log_deriv_grad_z(z)?, fd(|v| Ok(tr.deriv(v)?.ln()), z, h)?);

        // weights only move within the simplex, so test along a tangent
        let bp = tr.as_bernstein().expect("Bernstein transform");
        let omega = bp.weights().to_vec();
        let mut d = normals(&mut r, k);
        let mean = d.iter().sum::<f64>() / k as f64;
        d.iter_mut().for_each(|v| *v -= mean);
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let min_w = omega.iter().copied().fold(f64::INFINITY, f64::min);
        let step = 1e-3 * min_w / scale;
        let moved = |s: f64| -> Result<MarginalTransform> {
            let w: Vec<f64> = omega.iter().zip(&d).map(|(a, b)| a + s * b).collect();
            MarginalTransform::bernstein(k, w, reference)
        };
        let (dh, dlog) = tr.grad_weights(z)?;
        let dir = |g: &[f64]| g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
        if k > 1 {
            t.check("dh/domega", dir(&dh), fd(|s| moved(s)?.forward(z), 0.0, step)?);
            t.check("d ln h'/domega", dir(&dlog), fd(|s| Ok(moved(s)?.deriv(z)?.ln()), 0.0, step)?);
        }
    }
    Ok(())
}

fn model_gradient(t: &mut GradTally, name: &str, model: &dyn TargetModel, x: &[f64]) -> Result<()> {
    let g = model.grad(x)?;
    for i in 0..x.len() {
        let h = 1e-4 * x[i].abs().max(1e-2);
        let num = fd(
            |v| {
                let mut y = x.to_vec();
                y[i] = v;
                model.log_joint(&y)
            },
            x[i],
            h,
        )?;
        t.check(&format!("{name} coordinate {i} at {x:?}"), g[i], num);
    }
    Ok(())
}

fn model_gradients(t: &mut GradTally) -> Result<()> {
    let mut r = rng(7);
    let skew = SkewNormal::new(5.0)?;
    let t1 = StudentT::new(1.0)?;
    let t4 = StudentT::new(4.5)?;
    let gamma = GammaTarget::new(5.0, 2.0)?;
    let beta = BetaTarget::new(0.5, 0.5)?;
    let normal = Normal::new(vec![1.0, -1.0], LowerTriangular::from_rows(&[vec![2.0, 0.0], vec![0.6, 0.5]])?)?;
    let bvln = BivariateLogNormal::new(0.1, 0.1, 0.5, 0.5, 0.4)?;
    let hs = Horseshoe::new(0.01)?;
    let pois = build_model(&ModelConfig::default_for(Experiment::Poisson))?;
    for _ in 0..100 {
        model_gradient(t, "SkewNormal", &skew, &[2.0 * r.sample::<f64, _>(StandardNormal)])?;
        model_gradient(t, "StudentT(1)", &t1, &[5.0 * r.sample::<f64, _>(StandardNormal)])?;
        model_gradient(t, "StudentT(4.5)", &t4, &[3.0 * r.sample::<f64, _>(StandardNormal)])?;
        model_gradient(t, "Gamma", &gamma, &[r.sample::<f64, _>(StandardNormal).exp()])?;
        model_gradient(t, "Beta", &beta, &[r.random_range(0.01..0.99)])?;
        model_gradient(t, "Normal", &normal, &normals(&mut r, 2))?;
        let x: Vec<f64> = normals(&mut r, 2).iter().map(|v| (0.1 + 0.7 * v).exp()).collect();
        model_gradient(t, "BivariateLogNormal", &bvln, &x)?;
        // includes small tau, where the likelihood term y^2/(2 tau) dominates
        let x = [10f64.powf(r.random_range(-4.0..1.0)), 10f64.powf(r.random_range(-3.0..1.0))];
        model_gradient(t, "Horseshoe", &hs, &x)?;
        let x = [
            1.0 + 0.1 * r.sample::<f64, _>(StandardNormal),
            0.3 + 0.1 * r.sample::<f64, _>(StandardNormal),
            -0.1 + 0.1 * r.sample::<f64, _>(StandardNormal),
            (0.5 * r.sample::<f64, _>(StandardNormal)).exp(),
        ];
        model_gradient(t, "PoissonLogLinear", pois.as_ref(), &x)?;
    }
    Ok(())
}

fn closed_form_gradients(t: &mut GradTally) -> Result<()> {
    let mut r = rng(8);
    let y = 0.01;
    for _ in 0..100 {
        let a = [
            r.random_range(-3.0..3.0),
            r.random_range(-3.0..3.0),
            r.random_range(0.2..2.0),
            r.random_range(-1.0..1.0),
            r.random_range(0.2..2.0),
        ];
        let p = VgcLnHorseshoeParams::new(a[0], a[1], a[2], a[3], a[4])?;
        let g = vgc_ln_gradient(y, &p);
        for i in 0..5 {
            let num = fd(
                |v| {
                    let mut b = a;
                    b[i] = v;
                    Ok(vgc_ln_elbo(y, &VgcLnHorseshoeParams::new(b[0], b[1], b[2], b[3], b[4])?))
                },
                a[i],
                1e-4,
            )?;
            t.check(&format!("VGC-LN closed form parameter {i}"), g[i], num);
        }
    }
    Ok(())
}

fn local_gradients(t: &mut GradTally) -> Result<()> {
    let mut r = rng(9);
    let bvln = BivariateLogNormal::new(0.1, 0.1, 0.5, 0.5, 0.4)?;
    let hs = Horseshoe::new(0.01)?;
    for i in 0..100 {
        let (model, reference): (&dyn TargetModel, _) = if i % 2 == 0 {
            (&bvln, ReferenceCdf::exponential(1.0)?)
        } else {
            (&hs, ReferenceCdf::exponential(0.01)?)
        };
        let k = r.random_range(1..=12);
        let tr = vec![random_bp(&mut r, k, reference, 0.05)?, random_bp(&mut r, k, reference, 0.05)?];
        let state = state_from_parts(vec![0.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0]], tr)?;
        let z = normals(&mut r, 2);
        let g = grad_z_local(&state, model, &z)?;
        for j in 0..2 {
            let num = fd(
                |v| {
                    let mut w = z.clone();
                    w[j] = v;
                    local_objective(&state, model, &w)
                },
                z[j],
                1e-4,
            )?;
            t.check(&format!("grad_z l_s coordinate {j} at {z:?}"), g[j], num);
        }
    }
    Ok(())
}

fn score_gradients(t: &mut GradTally) -> Result<()> {
    let mut r = rng(10);
    for _ in 0..100 {
        let mu = normals(&mut r, 3);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| match j.cmp(&i) {
                        std::cmp::Ordering::Less => r.random_range(-0.5..0.5),
                        std::cmp::Ordering::Equal => r.random_range(0.3..1.5),
                        std::cmp::Ordering::Greater => 0.0,
                    })
                    .collect()
            })
            .collect();
        let state = state_from_parts(mu, &rows, vec![MarginalTransform::Identity; 3])?;
        let z = normals(&mut r, 3);
        let s = state.gaussian_score(&z)?;
        for j in 0..3 {
            let num = fd(
                |v| {
                    let mut w = z.clone();
                    w[j] = v;
                    Ok(state.gauss().log_density(&w))
                },
                z[j],
                1e-4,
            )?;
            t.check(&format!("gaussian_score coordinate {j}"), s[j], num);
        }
    }
    Ok(())
}

fn gradient_suite() -> Result<Outcome> {
    let mut t = GradTally::default();
    transform_gradients(&mut t)?;
    model_gradients(&mut t)?;
    closed_form_gradients(&mut t)?;
    local_gradients(&mut t)?;
    score_gradients(&mut t)?;
    let first = t.failed.first().cloned().unwrap_or_default();
    Ok(Outcome {
        pass: t.failed.is_empty(),
        detail: format!("{} checks, {} outside 1e-4 relative {first}", t.checked, t.failed.len()),
    })
}

// ---------------------------------------------------------------- criterion 7

/// Minimizes `|x - v|²` on the simplex by enumerating active sets.
fn brute_force_projection(v: &[f64]) -> Vec<f64> {
    let k = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let shift = (1.0 - idx.iter().map(|&i| v[i]).sum::<f64>()) / idx.len() as f64;
        let mut x = vec![0.0; k];
        for &i in &idx {
            x[i] = v[i] + shift;
        }
        if x.iter().any(|&xi| xi < 0.0) {
            continue;
        }
        let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    }
    best.expect("some active set is feasible").1
}

/// `P(x_j ≤ q)` under the horseshoe posterior, integrating on the log scale.
fn horseshoe_cdf(model: &Horseshoe, ln_z: f64, j: usize, q: f64) -> Result<f64> {
    let opts = QuadOptions::with_tol(1e-12, 1e-9);
    let b = q.ln();
    let dens = |u: f64, w: f64| -> Result<f64> {
        let (lt, lg) = if j == 0 { (u, w) } else { (w, u) };
        let x = [lt.exp(), lg.exp()];
        // the log-scale density vanishes where the coordinates under/overflow
        if x.iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return Ok(0.0);
        }
        Ok((model.log_joint(&x)? + lt + lg - ln_z).exp())
    };
    Ok(integrate_upper(|v| Ok(integrate_real_line(|w| dens(b - v, w), opts)?.value), 0.0, opts)?.value)
}

fn oracle_equivalences() -> Result<Outcome> {
    let mut r = rng(11);
    let mut proj_err: f64 = 0.0;
    for _ in 0..1000 {
        let k = r.random_range(1..=4);
        let v: Vec<f64> = (0..k).map(|_| r.random_range(-2.0..2.0)).collect();
        let a = project_simplex(&v);
        let b = brute_force_projection(&v);
        proj_err = proj_err.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }

    let model = Horseshoe::new(0.01)?;
    let mut worst_z: f64 = 0.0;
    for i in 0..20 {
        let a = [
            r.random_range(-2.0..2.0),
            r.random_range(-2.0..2.0),
            r.random_range(0.3..1.5),
            r.random_range(-0.5..0.5),
            r.random_range(0.3..1.5),
        ];
        let p = VgcLnHorseshoeParams::new(a[0], a[1], a[2], a[3], a[4])?;
        let state = state_from_parts(
            vec![a[0], a[1]],
            &[vec![a[2], 0.0], vec![a[3], a[4]]],
            vec![MarginalTransform::Exponential; 2],
        )?;
        let e = elbo_estimate(&state, &model, 100_000, &mut rng(2000 + i))?;
        worst_z = worst_z.max((e.value - vgc_ln_elbo(0.01, &p)).abs() / e.std_error);
    }

    let ln_z = model.log_evidence()?;
    let gibbs: Vec<Vec<f64>> = gibbs_horseshoe(0.01, 1_000_000, 100_000, 12).into_iter().map(|s| s.to_vec()).collect();
    let rw = rwmh_sample(&model, &default_rwmh(Experiment::Horseshoe))?.samples;
    let mut worst_q: f64 = 0.0;
    for chain in [&gibbs, &rw] {
        for j in 0..2 {
            let xs = column(chain, j);
            for p in [0.05, 0.25, 0.5, 0.75, 0.95] {
                let q = quantile(&xs, p);
                let ind: Vec<f64> = xs.iter().map(|&x| if x <= q { 1.0 } else { 0.0 }).collect();
                let (_, se) = batch_mean_se(&ind, 100);
                let exact = horseshoe_cdf(&model, ln_z, j, q)?;
                worst_q = worst_q.max((exact - p).abs() / se);
            }
        }
    }
    Ok(Outcome {
        pass: proj_err <= 1e-8 && worst_z <= 3.0 && worst_q <= 3.0,
        detail: format!(
            "projection max error {proj_err:.1e}; ELBO vs closed form worst {worst_z:.2} SE; Gibbs/RWMH quantiles vs quadrature worst {worst_q:.2} SE"
        ),
    })
}

// ---------------------------------------------------------------- criterion 8

fn poisson_regression() -> Result<Outcome> {
    let t0 = Instant::now();
    let model = build_model(&ModelConfig::default_for(Experiment::Poisson))?;
    let model = model.as_ref();
    let names = model.coordinate_names();
    let reference = rwmh_sample(model, &default_rwmh(Experiment::Poisson))?.samples;
    let cfg = OptimizerConfig {
        seed: 1,
        ..default_optimizer(Experiment::Poisson, Method::VgcBp)
    };
    let init = initial_vi_state(Experiment::Poisson, Method::VgcBp, 10, &model.supports())?;
    let fitted = fit(model, init, &cfg)?;
    let mut r = rng(13);
    let draws: Vec<Vec<f64>> = (0..200_000)
        .map(|_| fitted.state.push_sample(&normals(&mut r, 4)).map(|(_, x)| x))
        .collect::<Result<_>>()?;
    let secs = t0.elapsed().as_secs_f64();

    let mut pass = secs < 600.0;
    let mut parts = Vec::new();
    for j in 0..4 {
        let (a, b) = (column(&reference, j), column(&draws, j));
        let ((ma, sma), (mb, smb)) = (batch_mean_se(&a, 50), batch_mean_se(&b, 50));
        let ((sa, ssa), (sb, ssb)) = (batch_sd_se(&a, 50), batch_sd_se(&b, 50));
        let zm = (mb - ma) / (sma * sma + smb * smb).sqrt();
        let zs = (sb - sa) / (ssa * ssa + ssb * ssb).sqrt();
        pass &= zm.abs() <= 3.0 && zs.abs() <= 3.0;
        parts.push(format!("{} mean {mb:.4}/{ma:.4} ({zm:+.1} SE) sd {sb:.4}/{sa:.4} ({zs:+.1} SE)", names[j]));
    }
    // signs are compared where the reference correlation is resolved
    let mut signs = (0, 0);
    for i in 0..4 {
        for j in 0..i {
            let (ai, aj) = (column(&reference, i), column(&reference, j));
            let b = 50;
            let len = ai.len() / b;
            let per: Vec<f64> = (0..b).map(|k| corr(&ai[k * len..(k + 1) * len], &aj[k * len..(k + 1) * len])).collect();
            let rc = corr(&ai, &aj);
            if rc.abs() > 3.0 * sd(&per) / (b as f64).sqrt() {
                signs.0 += 1;
                let rv = corr(&column(&draws, i), &column(&draws, j));
                if rv.signum() == rc.signum() {
                    signs.1 += 1;
                }
            }
        }
    }
    pass &= signs.0 == signs.1;
    parts.push(format!("correlation signs {}/{} resolved pairs agree", signs.1, signs.0));
    parts.push(format!("{secs:.0}s"));
    Ok(Outcome {
        pass,
        detail: parts.join("; "),
    })
}

// ---------------------------------------------------------------- criterion 9

fn reductions() -> Result<Outcome> {
    let model = Normal::new(vec![0.5, -1.0], LowerTriangular::from_rows(&[vec![1.2, 0.0], vec![0.4, 0.7]])?)?;
    let cfg = OptimizerConfig {
        iterations: 2000,
        trace_every: 10,
        xi: StepSchedule::Constant { value: 0.0 },
        seed: 4,
        window: 0,
        ..Default::default()
    };
    let bp = vec![MarginalTransform::bernstein(10, vec![0.1; 10], ReferenceCdf::StdNormal)?; 2];
    let a = fit(&model, VgcState::initial(bp)?, &cfg)?;
    let b = fit(&model, VgcState::initial(vec![MarginalTransform::Identity; 2])?, &cfg)?;
    let trace_gap = a
        .trace
        .iter()
        .zip(&b.trace)
        .map(|(x, y)| (x.elbo - y.elbo).abs())
        .fold(0.0, f64::max);
    let same_len = a.trace.len() == b.trace.len();

    let mut r = rng(14);
    let mut exact_identity = true;
    let mut factor_gap: f64 = 0.0;
    for _ in 0..100 {
        let p = r.random_range(1..=5);
        let d: Vec<f64> = (0..p).map(|_| r.random_range(0.01..10.0)).collect();
        let state = VgcState::new(
            vgc_core::GaussianFactor::new(normals(&mut r, p), LowerTriangular::diagonal(&d))?,
            vec![random_bp(&mut r, 6, ReferenceCdf::StdNormal, 0.1)?; p],
        )?;
        let c = state.correlation_of();
        for (i, row) in c.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                exact_identity &= v == if i == j { 1.0 } else { 0.0 };
            }
        }
        let (_, x) = state.push_sample(&normals(&mut r, p))?;
        let joint = state.log_density(&x)?;
        let sum: f64 = (0..p).map(|j| state.marginal_ln_pdf(j, x[j])).sum::<Result<f64>>()?;
        factor_gap = factor_gap.max((joint - sum).abs());
    }
    Ok(Outcome {
        pass: same_len && trace_gap <= 1e-9 && exact_identity && factor_gap <= 1e-9,
        detail: format!(
            "BP(uniform, StdNormal) vs VG trace max gap {trace_gap:.1e} over {} points; diagonal C correlation exactly I: {exact_identity}; joint vs product of margins gap {factor_gap:.1e}",
            a.trace.len()
        ),
    })
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 9] = [
        ("horseshoe ELBO table", horseshoe_table),
        ("bivariate log-normal recovery", bvln_recovery),
        ("entropy scheme comparison", scheme_comparison),
        ("1-d margins", margins_1d),
        ("KL decomposition identity", kl_decomposition),
        ("gradient suite", gradient_suite),
        ("oracle equivalences", oracle_equivalences),
        ("Poisson log-linear regression", poisson_regression),
        ("reduction checks", reductions),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("{} criterion {n} ({name}): {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {failed} failing");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
