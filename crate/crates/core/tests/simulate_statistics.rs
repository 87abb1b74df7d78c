mod common;

use common::reference;
use seqtrack_core::diffusion::ScaleSpeed;
use seqtrack_core::simulate::{simulate_path, simulate_theta, PathStream, SimConfig};

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn theta_jump_rate_and_persistence() {
    let p = reference();
    let cfg = SimConfig {
        horizon: 40.0,
        ..SimConfig::default()
    };
    let mut jumps = Vec::new();
    let mut same = Vec::new();
    for path in 0..2000 {
        let th = simulate_theta(&p, &cfg, path).unwrap();
        jumps.push(th.jump_times.len() as f64);
        let k = cfg.steps() / 40; // t = 1
        same.push(if th.values[k] == th.values[0] {
            1.0
        } else {
            0.0
        });
    }
    let (m, se) = mean_se(&jumps);
    assert!((m - p.lambda() * 40.0).abs() < 4.0 * se, "{m} ± {se}");
    let (s, se) = mean_se(&same);
    let exact = 0.5 * (1.0 + (-2.0 * p.lambda()).exp());
    assert!((s - exact).abs() < 4.0 * se, "{s} vs {exact}");
}

#[test]
fn innovation_is_standard_brownian() {
    let p = reference();
    let cfg = SimConfig {
        horizon: 4.0,
        ..SimConfig::default()
    };
    let mut end = Vec::new();
    for path in 0..2000 {
        let mut w = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for s in PathStream::new(&p, &cfg, path).unwrap() {
            if let Some((x0, m0)) = prev {
                w += s.x - x0 - p.mu() * m0 * cfg.dt;
            }
            prev = Some((s.x, s.m));
        }
        end.push(w);
    }
    let (m, se) = mean_se(&end);
    assert!(m.abs() < 4.0 * se, "mean {m}");
    let var = end.iter().map(|w| w * w).sum::<f64>() / end.len() as f64;
    // Var of the sample variance of N(0, 4) over 2000 draws is 2 * 16 / 2000.
    assert!(
        (var - 4.0).abs() < 4.0 * (32.0f64 / 2000.0).sqrt(),
        "var {var}"
    );
}

#[test]
fn posterior_mean_is_calibrated() {
    let p = reference();
    let cfg = SimConfig {
        horizon: 3.0,
        dt: 2e-3,
        ..SimConfig::default()
    };
    let buckets = 8;
    let mut sum_theta = vec![0.0; buckets];
    let mut sum_m = vec![0.0; buckets];
    let mut count = vec![0usize; buckets];
    for path in 0..10_000 {
        let b = simulate_path(&p, &cfg, path).unwrap();
        let th = b.theta.unwrap();
        for k in [500, 1000, 1500] {
            let m = b.m[k];
            let i = (((m + 1.0) / 2.0 * buckets as f64) as usize).min(buckets - 1);
            sum_theta[i] += th[k] as f64;
            sum_m[i] += m;
            count[i] += 1;
        }
    }
    for i in 0..buckets {
        if count[i] < 200 {
            continue;
        }
        let n = count[i] as f64;
        let (t, m) = (sum_theta[i] / n, sum_m[i] / n);
        let se = ((1.0 - m * m) / n).sqrt();
        assert!(
            (t - m).abs() < 4.0 * se + 0.01,
            "bucket {i}: E[θ] {t} vs M {m}"
        );
    }
}

#[test]
fn posterior_mean_decays_in_expectation() {
    let p = reference();
    let cfg = SimConfig {
        horizon: 1.0,
        x0: 0.6,
        ..SimConfig::default()
    };
    let ends: Vec<f64> = (0..4000)
        .map(|path| *simulate_path(&p, &cfg, path).unwrap().m.last().unwrap())
        .collect();
    let (m, se) = mean_se(&ends);
    let exact = 0.6 * (-2.0 * p.lambda()).exp();
    assert!((m - exact).abs() < 4.0 * se + 2e-3, "{m} vs {exact}");
}

#[test]
fn long_run_mean_is_symmetric() {
    let p = reference();
    let cfg = SimConfig {
        horizon: 50.0,
        dt: 1e-2,
        ..SimConfig::default()
    };
    let avgs: Vec<f64> = (0..400)
        .map(|path| {
            let b = simulate_path(&p, &cfg, path).unwrap();
            b.m.iter().sum::<f64>() / b.m.len() as f64
        })
        .collect();
    let (m, se) = mean_se(&avgs);
    assert!(m.abs() < 4.0 * se, "{m} ± {se}");
}

#[test]
fn scale_function_of_posterior_mean_has_no_drift() {
    let p = reference();
    let ss = ScaleSpeed::new(&p);
    let cfg = SimConfig {
        horizon: 0.25,
        x0: 0.3,
        ..SimConfig::default()
    };
    let ends: Vec<f64> = (0..8000)
        .map(|path| {
            let m = *simulate_path(&p, &cfg, path).unwrap().m.last().unwrap();
            ss.p(m).unwrap()
        })
        .collect();
    let (m, se) = mean_se(&ends);
    let start = ss.p(0.3).unwrap();
    assert!(
        (m - start).abs() < 4.0 * se,
        "E p(M_t) = {m} ± {se}, p(M_0) = {start}"
    );
    // M itself drifts towards zero over the same window.
    let raw: Vec<f64> = (0..8000)
        .map(|path| *simulate_path(&p, &cfg, path).unwrap().m.last().unwrap())
        .collect();
    let (mm, mse) = mean_se(&raw);
    assert!(0.3 - mm > 4.0 * mse, "{mm} ± {mse}");
}

#[test]
fn paths_are_reproducible() {
    let p = reference();
    let cfg = SimConfig {
        horizon: 2.0,
        ..SimConfig::default()
    };
    assert_eq!(
        simulate_path(&p, &cfg, 3).unwrap(),
        simulate_path(&p, &cfg, 3).unwrap()
    );
    assert_ne!(
        simulate_path(&p, &cfg, 3).unwrap().m,
        simulate_path(&p, &cfg, 4).unwrap().m
    );
}
