//! Sample paths of the hidden signal `θ`, the observation `X` and the
//! posterior mean `M`.
//!
//! `θ` is simulated exactly through exponential holding times; the
//! observation increment over a grid step uses the exact occupation integral
//! of `θ`. `M` is produced from the observation increments by an
//! Euler-Maruyama discretisation of
//! `dM = -2 lambda M dt + mu (1 - M^2) (dX - mu M dt)`.
//!
//! Every path owns independent random streams derived from
//! `(seed, path index)`, so paths can be generated in any order and
//! different policies can be evaluated on identical noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterScheme {
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Initial posterior mean, also the mean of `θ_0`.
    pub x0: f64,
    pub seed: u64,
    pub scheme: FilterScheme,
    /// Each Brownian increment is the sum of this many finer increments.
    /// Runs at `dt` with `2 s` substeps and at `dt / 2` with `s` substeps
    /// share the same Brownian path, which couples a dt-refinement study.
    pub noise_substeps: u32,
    /// `M` is clamped to `[-1 + clip, 1 - clip]` after every step.
    pub clip: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 50.0,
            x0: 0.0,
            seed: 20_151_209,
            scheme: FilterScheme::EulerMaruyama,
            noise_substeps: 1,
            clip: 1e-9,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key, reason: &str| {
            Err(Error::InvalidParameter {
                key,
                reason: reason.to_string(),
            })
        };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", "must be > 0");
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return bad("horizon", "must be finite and >= dt");
        }
        if !(self.x0.abs() <= 1.0) {
            return bad("x0", "must lie in [-1, 1]");
        }
        if self.noise_substeps == 0 {
            return bad("noise_substeps", "must be >= 1");
        }
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return bad("clip", "must lie in (0, 0.5)");
        }
        Ok(())
    }

    /// Number of grid steps; the grid has `steps() + 1` points.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy)]
enum Purpose {
    Theta = 0,
    Noise = 1,
    Aux = 2,
}

fn stream(seed: u64, path: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path * 4 + purpose as u64);
    rng
}

/// Auxiliary random stream for a path, independent of the signal and the
/// observation noise.
pub fn aux_stream(seed: u64, path: u64) -> ChaCha8Rng {
    stream(seed, path, Purpose::Aux)
}

/// Exact simulation of the symmetric two-state chain, advanced on demand.
#[derive(Debug, Clone)]
struct ThetaClock {
    state: i8,
    next_jump: f64,
    holding: Exp<f64>,
    rng: ChaCha8Rng,
}

impl ThetaClock {
    fn new(params: &ModelParams, x0: f64, seed: u64, path: u64) -> Self {
        let mut rng = stream(seed, path, Purpose::Theta);
        let u: f64 = rng.random();
        let state = if u < 0.5 * (1.0 + x0) { 1 } else { -1 };
        let holding = Exp::new(params.lambda()).expect("lambda > 0");
        let next_jump = rng.sample(holding);
        Self {
            state,
            next_jump,
            holding,
            rng,
        }
    }

    /// Advances from `t0` to `t1`, returning `∫ θ ds` over `(t0, t1]` and
    /// the jump times crossed.
    fn advance(&mut self, t0: f64, t1: f64, jumps: &mut Option<&mut Vec<f64>>) -> f64 {
        let mut occupation = 0.0;
        let mut t = t0;
        while self.next_jump <= t1 {
            occupation += self.state as f64 * (self.next_jump - t);
            t = self.next_jump;
            if let Some(j) = jumps.as_deref_mut() {
                j.push(t);
            }
            self.state = -self.state;
            self.next_jump = t + self.rng.sample(self.holding);
        }
        occupation + self.state as f64 * (t1 - t)
    }
}

fn brownian_increment(rng: &mut ChaCha8Rng, dt: f64, substeps: u32) -> f64 {
    let scale = (dt / substeps as f64).sqrt();
    let mut w = 0.0;
    for _ in 0..substeps {
        let z: f64 = rng.sample(StandardNormal);
        w += z;
    }
    scale * w
}

/// One Euler-Maruyama step of the posterior-mean filter driven by the
/// observation increment `dx`, clamped to `[-1 + clip, 1 - clip]`.
pub fn filter_step(params: &ModelParams, m: f64, dx: f64, dt: f64, clip: f64) -> f64 {
    let mu = params.mu();
    let next = m - 2.0 * params.lambda() * m * dt + mu * (1.0 - m * m) * (dx - mu * m * dt);
    next.clamp(-1.0 + clip, 1.0 - clip)
}

/// Hidden signal: initial value, jump times and grid values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaPath {
    pub initial: i8,
    pub jump_times: Vec<f64>,
    pub values: Vec<i8>,
}

impl ThetaPath {
    /// A signal frozen at `value`.
    pub fn constant(value: i8, config: &SimConfig) -> Self {
        Self {
            initial: value,
            jump_times: Vec::new(),
            values: vec![value; config.steps() + 1],
        }
    }

    /// `∫ θ ds` over `[t0, t1]`.
    pub fn occupation(&self, t0: f64, t1: f64) -> f64 {
        let first = self.jump_times.partition_point(|&s| s <= t0);
        let mut state = if first % 2 == 0 {
            self.initial
        } else {
            -self.initial
        };
        let mut t = t0;
        let mut total = 0.0;
        for &s in self.jump_times[first..].iter().take_while(|&&s| s <= t1) {
            total += state as f64 * (s - t);
            t = s;
            state = -state;
        }
        total + state as f64 * (t1 - t)
    }
}

pub fn simulate_theta(params: &ModelParams, config: &SimConfig, path: u64) -> Result<ThetaPath> {
    config.validate()?;
    let n = config.steps();
    let mut clock = ThetaClock::new(params, config.x0, config.seed, path);
    let initial = clock.state;
    let mut jump_times = Vec::new();
    let mut values = Vec::with_capacity(n + 1);
    values.push(initial);
    for k in 0..n {
        clock.advance(
            config.time(k),
            config.time(k + 1),
            &mut Some(&mut jump_times),
        );
        values.push(clock.state);
    }
    Ok(ThetaPath {
        initial,
        jump_times,
        values,
    })
}

/// Cumulative observation `X` on the grid, `X_0 = 0`.
pub fn simulate_observation(
    params: &ModelParams,
    theta: &ThetaPath,
    config: &SimConfig,
    path: u64,
) -> Result<Vec<f64>> {
    config.validate()?;
    let n = config.steps();
    if theta.values.len() != n + 1 {
        return Err(Error::GridMismatch {
            expected: n + 1,
            got: theta.values.len(),
        });
    }
    let mut rng = stream(config.seed, path, Purpose::Noise);
    let mut xs = Vec::with_capacity(n + 1);
    let mut x = 0.0;
    xs.push(x);
    for k in 0..n {
        let drift = params.mu() * theta.occupation(config.time(k), config.time(k + 1));
        x += drift + brownian_increment(&mut rng, config.dt, config.noise_substeps);
        xs.push(x);
    }
    Ok(xs)
}

/// Runs the posterior-mean filter over a cumulative observation path.
/// `M_0 = x0` (the boundary values `±1` are allowed as entrance points);
/// every later value lies strictly inside `(-1, 1)`.
pub fn filter_posterior_mean(
    params: &ModelParams,
    x_path: &[f64],
    config: &SimConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let n = config.steps();
    if x_path.len() != n + 1 {
        return Err(Error::GridMismatch {
            expected: n + 1,
            got: x_path.len(),
        });
    }
    let mut m = config.x0;
    let mut out = Vec::with_capacity(n + 1);
    out.push(m);
    for w in x_path.windows(2) {
        m = filter_step(params, m, w[1] - w[0], config.dt, config.clip);
        out.push(m);
    }
    Ok(out)
}

/// State of a path at grid point `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub k: usize,
    pub t: f64,
    pub theta: i8,
    pub x: f64,
    pub m: f64,
}

/// Streams a path point by point without storing it; produces exactly the
/// numbers of [`simulate_path`].
#[derive(Debug, Clone)]
pub struct PathStream {
    params: ModelParams,
    config: SimConfig,
    n: usize,
    clock: ThetaClock,
    noise: ChaCha8Rng,
    current: Option<Step>,
}

impl PathStream {
    pub fn new(params: &ModelParams, config: &SimConfig, path: u64) -> Result<Self> {
        config.validate()?;
        let clock = ThetaClock::new(params, config.x0, config.seed, path);
        let first = Step {
            k: 0,
            t: 0.0,
            theta: clock.state,
            x: 0.0,
            m: config.x0,
        };
        Ok(Self {
            params: *params,
            config: *config,
            n: config.steps(),
            clock,
            noise: stream(config.seed, path, Purpose::Noise),
            current: Some(first),
        })
    }
}

impl Iterator for PathStream {
    type Item = Step;

    fn next(&mut self) -> Option<Step> {
        let step = self.current?;
        self.current = if step.k < self.n {
            let cfg = &self.config;
            let t1 = cfg.time(step.k + 1);
            let occupation = self.clock.advance(step.t, t1, &mut None);
            let x = step.x
                + (self.params.mu() * occupation
                    + brownian_increment(&mut self.noise, cfg.dt, cfg.noise_substeps));
            // The filter sees the increment of the recorded path, as it would
            // for observed data.
            Some(Step {
                k: step.k + 1,
                t: t1,
                theta: self.clock.state,
                x,
                m: filter_step(&self.params, step.m, x - step.x, cfg.dt, cfg.clip),
            })
        } else {
            None
        };
        Some(step)
    }
}

/// Aligned paths on the time grid. `theta` is absent for bundles built from
/// observed data; `a` is filled in by a policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathBundle {
    pub t: Vec<f64>,
    pub theta: Option<Vec<i8>>,
    pub x_obs: Vec<f64>,
    pub m: Vec<f64>,
    pub a: Option<Vec<i8>>,
    pub a_init: Option<i8>,
    pub dt: f64,
}

impl PathBundle {
    /// Filters an observed path; no hidden signal is available.
    pub fn from_observations(
        params: &ModelParams,
        config: &SimConfig,
        x_path: Vec<f64>,
    ) -> Result<Self> {
        let m = filter_posterior_mean(params, &x_path, config)?;
        Ok(Self {
            t: (0..x_path.len()).map(|k| config.time(k)).collect(),
            theta: None,
            x_obs: x_path,
            m,
            a: None,
            a_init: None,
            dt: config.dt,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

pub fn simulate_path(params: &ModelParams, config: &SimConfig, path: u64) -> Result<PathBundle> {
    let n = config.steps();
    let mut bundle = PathBundle {
        t: Vec::with_capacity(n + 1),
        theta: Some(Vec::with_capacity(n + 1)),
        x_obs: Vec::with_capacity(n + 1),
        m: Vec::with_capacity(n + 1),
        a: None,
        a_init: None,
        dt: config.dt,
    };
    for s in PathStream::new(params, config, path)? {
        bundle.t.push(s.t);
        bundle.theta.as_mut().unwrap().push(s.theta);
        bundle.x_obs.push(s.x);
        bundle.m.push(s.m);
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RawParams;

    fn reference() -> ModelParams {
        ModelParams::try_from(RawParams::default()).unwrap()
    }

    fn short() -> SimConfig {
        SimConfig {
            horizon: 5.0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn batch_and_stream_agree() {
        let p = reference();
        let cfg = short();
        let theta = simulate_theta(&p, &cfg, 3).unwrap();
        let x = simulate_observation(&p, &theta, &cfg, 3).unwrap();
        let m = filter_posterior_mean(&p, &x, &cfg).unwrap();
        let b = simulate_path(&p, &cfg, 3).unwrap();
        assert_eq!(b.theta.as_ref().unwrap(), &theta.values);
        assert_eq!(b.x_obs, x);
        assert_eq!(b.m, m);
        assert_eq!(b.x_obs[0], 0.0);
        assert_eq!(b.len(), cfg.steps() + 1);
    }

    #[test]
    fn deterministic_per_seed_and_index() {
        let p = reference();
        let cfg = short();
        assert_eq!(
            simulate_path(&p, &cfg, 9).unwrap(),
            simulate_path(&p, &cfg, 9).unwrap()
        );
        assert_ne!(
            simulate_path(&p, &cfg, 9).unwrap().x_obs,
            simulate_path(&p, &cfg, 10).unwrap().x_obs
        );
    }

    #[test]
    fn degenerate_initial_law() {
        let p = reference();
        let cfg = SimConfig {
            x0: 1.0,
            horizon: 0.01,
            ..SimConfig::default()
        };
        for path in 0..200 {
            assert_eq!(simulate_theta(&p, &cfg, path).unwrap().initial, 1);
        }
        let cfg = SimConfig { x0: -1.0, ..cfg };
        for path in 0..200 {
            assert_eq!(simulate_theta(&p, &cfg, path).unwrap().initial, -1);
        }
    }

    #[test]
    fn filter_fixed_point_and_entrance() {
        let p = reference();
        let cfg = short();
        let flat = vec![0.0; cfg.steps() + 1];
        let m = filter_posterior_mean(&p, &flat, &cfg).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));

        let cfg1 = SimConfig { x0: 1.0, ..cfg };
        let m = filter_posterior_mean(&p, &flat, &cfg1).unwrap();
        assert_eq!(m[0], 1.0);
        assert!(m[1] < 1.0);
        assert!(m[1..].iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn grid_mismatch() {
        let p = reference();
        let cfg = short();
        assert!(matches!(
            filter_posterior_mean(&p, &[0.0, 0.1], &cfg),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn occupation_matches_grid_values() {
        let p = reference();
        let cfg = short();
        let theta = simulate_theta(&p, &cfg, 1).unwrap();
        let total = theta.occupation(0.0, cfg.horizon);
        let riemann: f64 = theta.values[..cfg.steps()]
            .iter()
            .map(|&v| v as f64 * cfg.dt)
            .sum();
        // Each jump perturbs the left Riemann sum by at most 2 dt.
        assert!((total - riemann).abs() <= 2.0 * cfg.dt * (theta.jump_times.len() as f64 + 1.0));
        let frozen = ThetaPath::constant(1, &cfg);
        assert!((frozen.occupation(0.3, 1.3) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_config() {
        let p = reference();
        let cfg = SimConfig {
            x0: 1.5,
            ..SimConfig::default()
        };
        assert!(simulate_theta(&p, &cfg, 0).is_err());
        let cfg = SimConfig {
            dt: 0.0,
            ..SimConfig::default()
        };
        assert!(PathStream::new(&p, &cfg, 0).is_err());
    }
}
