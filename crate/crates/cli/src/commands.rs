use std::io::Write;

use anyhow::{anyhow, bail, Context, Result};
use seqtrack_core::diffusion::{default_caps, entrance_boundary_check, ScaleSpeed};
use seqtrack_core::montecarlo::{estimate_cost, threshold_sweep, CostEstimate};
use seqtrack_core::policy::{cost_m_form, cost_theta_form, Policy};
use seqtrack_core::simulate::simulate_path;
use seqtrack_core::{solve_phi, ModelParams, Regime, ValueFunction};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{Format, Outputs};
use crate::{
    EvaluateArgs, FormName, PolicyArgs, PolicyName, SimulateArgs, SolveArgs, SweepArgs, VerifyArgs,
};

pub enum Status {
    Ok,
    Flagged(String),
}

fn solve_value(cfg: &RunConfig) -> Result<(ModelParams, ValueFunction)> {
    let params = cfg.params()?;
    let phi = solve_phi(&params, &cfg.phi_options()).context("solving for phi")?;
    let vf = ValueFunction::solve(params, phi, &cfg.root_options())
        .context("locating the free boundary")?;
    Ok((params, vf))
}

/// Shortest round-trip representation, scientific for very small or large
/// magnitudes.
fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn solve(cfg: &RunConfig, args: &SolveArgs, out: &mut Outputs) -> Result<Status> {
    let (params, vf) = solve_value(cfg)?;
    let fb = *vf.free_boundary();
    let phi = vf.phi();

    if let Some(path) = &args.dump_phi {
        let mut w = out.csv(path)?;
        w.write_record(["x", "phi", "dphi"])?;
        for (x, f, d) in phi.nodes() {
            w.write_record([num(x), num(f), num(d)])?;
        }
        w.flush()?;
    }
    if let Some(path) = &args.dump_value {
        if args.value_points < 2 {
            bail!("value-points must be at least 2");
        }
        let (lo, hi) = vf.domain();
        let mut w = out.csv(path)?;
        w.write_record(["x", "v_plus", "v_minus", "v_star"])?;
        let n = args.value_points - 1;
        for i in 0..=n {
            let x = if i == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / n as f64
            };
            let vp = vf.value_at(x, 1)?;
            let vm = vf.value_at(x, -1)?;
            w.write_record([num(x), num(vp), num(vm), num(vp.min(vm))])?;
        }
        w.flush()?;
    }

    let fit = match fb.regime {
        Regime::Switching => Some(vf.verify_fit(&cfg.numerics.fit)?),
        Regime::NeverSwitch => None,
    };
    let (cov_lo, cov_hi) = phi.coverage();
    match out.format() {
        Format::Json => {
            let mut body = json!({
                "beta": params.beta(),
                "gamma": params.gamma(),
                "regime": fb.regime,
                "phi_normalization": fb.phi_norm,
                "epsilon": phi.epsilon(),
                "phi_coverage": [cov_lo, cov_hi],
                "phi_truncated_at": phi.truncated_at(),
                "phi_nodes": phi.len(),
                "v_star_at_0": vf.value_at(0.0, 1)?,
                "fit": fit,
            });
            if let Some((k, b)) = fb.pair() {
                body["K"] = json!(k);
                body["B"] = json!(b);
            }
            out.json_report("solve", cfg, body)?;
        }
        Format::Csv => {
            let (k, b) = fb
                .pair()
                .map_or((String::new(), String::new()), |(k, b)| (num(k), num(b)));
            let row = vec![
                k,
                b,
                num(params.beta()),
                num(params.gamma()),
                fb.regime.to_string(),
            ];
            out.csv_report("solve", &["K", "B", "beta", "gamma", "regime"], &[row])?;
        }
    }
    Ok(match fit {
        Some(f) if !f.all_pass() => Status::Flagged("fit verification failed".into()),
        _ => Status::Ok,
    })
}

fn build_policy(cfg: &RunConfig, name: PolicyName, args: &PolicyArgs) -> Result<Policy> {
    let a = RunConfig::a_init(args.a_init)?;
    let policy = match name {
        PolicyName::Never => Policy::never_switch(a)?,
        PolicyName::Sign => Policy::fixed_lag_sign(args.window, a)?,
        PolicyName::Threshold => match args.b {
            Some(b) => Policy::threshold(b, a)?,
            None => {
                let (_, vf) = solve_value(cfg)?;
                let b = vf.free_boundary().b.ok_or_else(|| {
                    anyhow!(
                        "no switching threshold exists for these parameters (c1 >= beta); pass --B"
                    )
                })?;
                Policy::threshold(b, a)?
            }
        },
        PolicyName::Custom => {
            let down = args
                .down
                .ok_or_else(|| anyhow!("custom policy needs --down"))?;
            let up = args.up.ok_or_else(|| anyhow!("custom policy needs --up"))?;
            Policy::custom(down, up, a)?
        }
    };
    Ok(policy)
}

pub fn simulate(cfg: &RunConfig, args: &SimulateArgs, out: &mut Outputs) -> Result<Status> {
    let params = cfg.params()?;
    if args.paths == 0 || args.stride == 0 {
        bail!("paths and stride must be at least 1");
    }
    let policy = args
        .policy
        .map(|name| build_policy(cfg, name, &args.policy_args))
        .transpose()?;
    let mut dump = match &args.dump {
        Some(path) => {
            let mut w = out.csv(path)?;
            let mut header = vec!["path_id", "t", "theta", "x", "m"];
            if policy.is_some() {
                header.push("a");
            }
            w.write_record(&header)?;
            Some(w)
        }
        None => None,
    };

    let mut summaries = Vec::with_capacity(args.paths);
    for path in 0..args.paths {
        let mut bundle = simulate_path(&params, &cfg.sim, path as u64)?;
        let control = policy
            .as_ref()
            .map(|p| bundle.attach_policy(p))
            .transpose()?;
        let theta = bundle.theta.as_ref().expect("simulated paths carry theta");
        if let Some(w) = dump.as_mut() {
            let last = bundle.len() - 1;
            for k in (0..bundle.len()).filter(|k| k % args.stride == 0 || *k == last) {
                let mut rec = vec![
                    path.to_string(),
                    num(bundle.t[k]),
                    theta[k].to_string(),
                    num(bundle.x_obs[k]),
                    num(bundle.m[k]),
                ];
                if let Some(c) = &control {
                    rec.push(c.a[k].to_string());
                }
                w.write_record(&rec)?;
            }
        }
        let jumps = theta.windows(2).filter(|w| w[0] != w[1]).count();
        let mismatch = theta
            .iter()
            .zip(&bundle.m)
            .map(|(&th, &m)| (th as f64 - m).abs())
            .sum::<f64>()
            / bundle.len() as f64;
        let mut s = json!({
            "path_id": path,
            "steps": bundle.len() - 1,
            "theta_changes": jumps,
            "final_theta": theta[bundle.len() - 1],
            "final_m": bundle.m[bundle.len() - 1],
            "mean_abs_theta_minus_m": mismatch,
        });
        if let Some(c) = &control {
            s["switches"] = json!(c.switches.len());
            s["cost_theta_form"] = json!(cost_theta_form(&params, &bundle)?.total);
            s["cost_m_form"] = json!(cost_m_form(&params, &bundle)?.total);
        }
        summaries.push(s);
    }
    if let Some(mut w) = dump {
        w.flush()?;
    }

    match out.format() {
        Format::Json => {
            out.json_report(
                "simulate",
                cfg,
                json!({ "policy": policy, "paths": summaries }),
            )?;
        }
        Format::Csv => {
            let keys = [
                "path_id",
                "steps",
                "theta_changes",
                "final_theta",
                "final_m",
                "mean_abs_theta_minus_m",
            ];
            let rows: Vec<Vec<String>> = summaries
                .iter()
                .map(|s| keys.iter().map(|k| s[*k].to_string()).collect())
                .collect();
            out.csv_report("simulate", &keys, &rows)?;
        }
    }
    Ok(Status::Ok)
}

fn estimate_json(e: &CostEstimate) -> Value {
    serde_json::to_value(e).expect("estimates serialize")
}

pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs, out: &mut Outputs) -> Result<Status> {
    let policy = build_policy(cfg, args.policy, &args.policy_args)?;
    let (params, vf) = solve_value(cfg)?;
    let eval = estimate_cost(&params, &policy, &cfg.sim, args.paths)?;
    let (main, other, form, other_form) = match args.form {
        FormName::M => (eval.m_form, eval.theta_form, "m_form", "theta_form"),
        FormName::Theta => (eval.theta_form, eval.m_form, "theta_form", "m_form"),
    };
    let optimal = vf.value_at(cfg.sim.x0, policy.a_init).ok();
    match out.format() {
        Format::Json => {
            let mut body = estimate_json(&main);
            body["form"] = json!(form);
            body["policy"] = json!(policy);
            body["mean_switches"] = json!(eval.mean_switches);
            body[other_form] = estimate_json(&other);
            body["optimal_value"] = json!(optimal);
            out.json_report("evaluate", cfg, body)?;
        }
        Format::Csv => {
            let row = vec![
                policy.label(),
                form.to_string(),
                num(main.mean),
                num(main.stderr),
                main.n.to_string(),
                num(main.ci95[0]),
                num(main.ci95[1]),
                num(main.tail_bound),
            ];
            out.csv_report(
                "evaluate",
                &[
                    "policy",
                    "form",
                    "mean",
                    "stderr",
                    "n",
                    "ci95_lo",
                    "ci95_hi",
                    "tail_bound",
                ],
                &[row],
            )?;
        }
    }
    Ok(Status::Ok)
}

fn sweep_grid(args: &SweepArgs) -> Result<Vec<f64>> {
    if let Some(g) = &args.grid {
        return Ok(g.clone());
    }
    if args.step.is_nan() || args.step <= 0.0 || args.to < args.from {
        bail!("sweep range needs step > 0 and to >= from");
    }
    let n = ((args.to - args.from) / args.step + 1e-9).floor() as usize;
    // Round to the step's decimal resolution so 0.4 + 3 * 0.05 prints as 0.55.
    Ok((0..=n)
        .map(|i| ((args.from + i as f64 * args.step) * 1e9).round() / 1e9)
        .collect())
}

pub fn sweep(cfg: &RunConfig, args: &SweepArgs, out: &mut Outputs) -> Result<Status> {
    let a = RunConfig::a_init(args.a_init)?;
    let (params, vf) = solve_value(cfg)?;
    let optimal = vf.free_boundary().b;
    let mut grid = sweep_grid(args)?;
    if args.include_optimal {
        if let Some(b) = optimal {
            grid.push(b);
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let report = threshold_sweep(&params, &cfg.sim, &grid, args.paths, a)?;

    if let Some(path) = &args.dump {
        let mut w = out.csv(path)?;
        w.write_record(["B", "mean", "stderr"])?;
        for r in &report.rows {
            w.write_record([num(r.b), num(r.estimate.mean), num(r.estimate.stderr)])?;
        }
        w.flush()?;
    }
    match out.format() {
        Format::Json => {
            let mut body = serde_json::to_value(&report)?;
            body["optimal_B"] = json!(optimal);
            out.json_report("sweep", cfg, body)?;
        }
        Format::Csv => {
            let rows: Vec<Vec<String>> = report
                .rows
                .iter()
                .map(|r| vec![num(r.b), num(r.estimate.mean), num(r.estimate.stderr)])
                .collect();
            out.csv_report("sweep", &["B", "mean", "stderr"], &rows)?;
        }
    }
    Ok(Status::Ok)
}

struct Check {
    name: &'static str,
    value: f64,
    limit: String,
    pass: bool,
}

pub fn verify(cfg: &RunConfig, args: &VerifyArgs, out: &mut Outputs) -> Result<Status> {
    let (params, vf) = solve_value(cfg)?;
    let tol = &cfg.numerics.fit;
    let mut checks = Vec::new();
    match vf.free_boundary().regime {
        Regime::Switching => {
            let r = vf.verify_fit(tol)?;
            checks.push(Check {
                name: "continuous_fit",
                value: r.continuous_fit,
                limit: format!("|.| <= {:?}", tol.continuous),
                pass: r.continuous_fit_pass,
            });
            checks.push(Check {
                name: "smooth_fit",
                value: r.smooth_fit,
                limit: format!("|.| <= {:?}", tol.smooth),
                pass: r.smooth_fit_pass,
            });
            checks.push(Check {
                name: "ode_residual",
                value: r.ode_residual_max,
                limit: format!("<= {:?}", tol.ode),
                pass: r.ode_residual_pass,
            });
            checks.push(Check {
                name: "stopping_region_excess",
                value: r.stopping_excess_min,
                limit: format!("> {:?}", tol.sign_margin),
                pass: r.stopping_excess_pass,
            });
            checks.push(Check {
                name: "switching_gap",
                value: r.jump_excess_max,
                limit: format!("<= {:?}", tol.sign_margin),
                pass: r.jump_excess_pass,
            });
        }
        Regime::NeverSwitch => {
            let mut worst = 0.0f64;
            for i in 0..=200 {
                let x = -1.0 + i as f64 / 100.0;
                worst = worst.max((vf.value_at(x, 1)? - params.v_tilde(x)?).abs());
            }
            checks.push(Check {
                name: "value_equals_v_tilde",
                value: worst,
                limit: "== 0".into(),
                pass: worst == 0.0,
            });
        }
    }

    let entrance = entrance_boundary_check(&params, &default_caps(8), 1e-6)?;
    checks.push(Check {
        name: "entrance_integral_convergence",
        value: *entrance.differences.last().expect("eight caps"),
        limit: format!("|.| < {:?}", entrance.tolerance),
        pass: entrance.converged,
    });
    let ss = ScaleSpeed::new(&params);
    let limit = ss.hopital_limit();
    let ratio = ss.hopital_ratio(1.0 - 1e-5)?;
    checks.push(Check {
        name: "gamma_ratio",
        value: ratio,
        limit: format!("within 1% of {:?}", limit),
        pass: (ratio / limit - 1.0).abs() < 0.01,
    });

    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    match out.format() {
        Format::Json => {
            let list: Vec<Value> = checks
                .iter()
                .map(|c| {
                    json!({
                        "name": c.name,
                        "value": c.value,
                        "limit": c.limit,
                        "status": if c.pass { "pass" } else { "fail" },
                    })
                })
                .collect();
            let mut body = json!({
                "regime": vf.free_boundary().regime,
                "B": vf.free_boundary().b,
                "checks": list,
                "all_pass": failed.is_empty(),
            });
            if args.boundary {
                let trace: Vec<Value> = (1..=8)
                    .map(|j| {
                        let x = 1.0 - 10f64.powi(-j);
                        Ok(json!({ "x": x, "ratio": ss.hopital_ratio(x)? }))
                    })
                    .collect::<Result<_>>()?;
                body["entrance"] = serde_json::to_value(&entrance)?;
                body["gamma_ratio_trace"] = json!({ "limit": limit, "points": trace });
            }
            out.json_report("verify", cfg, body)?;
        }
        Format::Csv => {
            let rows: Vec<Vec<String>> = checks
                .iter()
                .map(|c| {
                    vec![
                        c.name.to_string(),
                        num(c.value),
                        c.limit.clone(),
                        (if c.pass { "pass" } else { "fail" }).to_string(),
                    ]
                })
                .collect();
            out.csv_report("verify", &["check", "value", "limit", "status"], &rows)?;
        }
    }
    std::io::stdout().flush()?;
    Ok(if failed.is_empty() {
        Status::Ok
    } else {
        Status::Flagged(format!("failed checks: {}", failed.join(", ")))
    })
}
