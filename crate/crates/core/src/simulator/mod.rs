//! Monte Carlo engine: the superprocess on a finite space as a `d`-type
//! continuous-state branching process with motion mixing and spectrally
//! positive stable jumps.
//!
//! A step of size `h` applies the motion and linear drift and then the pure
//! branching flow at every site:
//!
//! `Y = Z + h A^T Z`, `Z'(x) = max(0, B_x(Y(x)))`.
//!
//! `Y >= 0` whenever `1 + h A(x,x) > 0`, and `E[Z'] = Z + h A^T Z`.
//!
//! `B_x(z)` is the Euler increment `z + (kappa(x) z h)^{1/gamma(x)} S_x` with
//! `E[exp(-u S_x)] = exp(u^gamma(x))`, whose conditional log-Laplace
//! `theta z - h kappa(x) z theta^gamma(x)` is the first-order expansion of the
//! branching flow. Its relative error at the extinction scale is
//! `(z v_h)^{-(gamma-1)}`, where `v_h = (kappa (gamma-1) h)^{-1/(gamma-1)}`,
//! and it cannot reach zero. When `z v_h <= EXACT_CLUSTER_LIMIT` the step is
//! therefore sampled exactly: `B_x(z)` is a sum of `Poisson(z v_h)` clusters,
//! each distributed as `W / v_h` with `W` following [`ZolotarevLaw`] of index
//! `gamma - 1`.

mod stable;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::limitlaw::ZolotarevLaw;
use crate::model::{eta, CriticalModel, Field, InitialMeasure};

use stable::StableSampler;

/// Zeroing threshold for site masses. Extinction is produced by the exact
/// cluster step, and a positive floor at a low-index site removes mass that
/// would still survive, so the default is off.
pub const DEFAULT_MASS_FLOOR: f64 = 0.0;

/// Mean cluster count up to which the branching step is sampled exactly.
pub const EXACT_CLUSTER_LIMIT: f64 = 100.0;

/// Survivor count below which conditional estimates are refused.
pub const MIN_SURVIVORS: usize = 30;

/// One increment of the spectrally positive `gamma`-stable law with
/// `E[exp(-u S)] = exp(u^gamma)`.
pub fn sample_positive_stable<R: Rng + ?Sized>(gamma: f64, rng: &mut R) -> f64 {
    StableSampler::new(gamma).sample(rng)
}

/// Independent stream for replicate `index`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub step: f64,
    pub horizon: f64,
    pub replicates: usize,
    #[serde(default = "default_floor")]
    pub mass_floor: f64,
    pub seed: u64,
}

fn default_floor() -> f64 {
    DEFAULT_MASS_FLOOR
}

impl SimConfig {
    pub fn new(step: f64, horizon: f64, replicates: usize, seed: u64) -> Self {
        Self {
            step,
            horizon,
            replicates,
            mass_floor: DEFAULT_MASS_FLOOR,
            seed,
        }
    }

    /// Number of Euler steps; the horizon must be a whole multiple of the step.
    pub fn steps(&self) -> Result<usize> {
        if !(self.step > 0.0 && self.horizon > 0.0 && self.step <= self.horizon) {
            return Err(Error::Invalid(format!(
                "need 0 < step <= horizon, got step {} horizon {}",
                self.step, self.horizon
            )));
        }
        if self.replicates == 0 {
            return Err(Error::Invalid("replicates must be >= 1".into()));
        }
        if !(self.mass_floor >= 0.0) {
            return Err(Error::Invalid("mass floor must be >= 0".into()));
        }
        let n = (self.horizon / self.step).round();
        if (n * self.step - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(Error::Invalid(format!(
                "horizon {} is not a multiple of step {}",
                self.horizon, self.step
            )));
        }
        Ok(n as usize)
    }
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_moments(n: usize, sum: f64, sum_sq: f64) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        Self {
            mean,
            se: (var / nf).sqrt(),
        }
    }

    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
        // shifted by the first value to limit cancellation
        let mut shift = None;
        for v in samples {
            let c = *shift.get_or_insert(v);
            let d = v - c;
            n += 1;
            s += d;
            s2 += d * d;
        }
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let e = Self::from_moments(n, s, s2);
        Self {
            mean: e.mean + shift.unwrap_or(0.0),
            se: e.se,
        }
    }
}

/// Outcome of [`simulate_paths`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub replicates: usize,
    pub survivors: usize,
    pub horizon: f64,
    pub step: f64,
    pub functional: Field,
    /// `X_T(f)` of each surviving path, in replicate order.
    pub per_path_functional: Vec<f64>,
    pub survival: Estimate,
    /// `E[exp(-X_T(f))]` over all paths (extinct paths contribute 1).
    pub laplace: Estimate,
}

impl PathStats {
    fn from_outcomes(config: &SimConfig, f: &Field, outcomes: &[Option<f64>]) -> Self {
        let n = outcomes.len();
        let per_path_functional: Vec<f64> = outcomes.iter().flatten().copied().collect();
        let survivors = per_path_functional.len();
        let survival = Estimate::from_samples(outcomes.iter().map(|o| if o.is_some() { 1.0 } else { 0.0 }));
        let laplace = Estimate::from_samples(outcomes.iter().map(|o| o.map_or(1.0, |x| (-x).exp())));
        Self {
            replicates: n,
            survivors,
            horizon: config.horizon,
            step: config.step,
            functional: f.clone(),
            per_path_functional,
            survival,
            laplace,
        }
    }
}

/// Precomputed per-site step data.
struct Stepper {
    d: usize,
    /// Row-major `A^T`.
    at: Vec<f64>,
    kappa: Vec<f64>,
    gamma: Vec<f64>,
    inv_gamma: Vec<f64>,
    samplers: Vec<StableSampler>,
    clusters: Vec<ZolotarevLaw>,
    floor: f64,
}

/// Step-size dependent factors.
struct StepSize {
    h: f64,
    /// `v_h(x)`, the extinction cumulant of the motion-free site over `h`.
    v: Vec<f64>,
}

impl Stepper {
    fn new(model: &CriticalModel, floor: f64) -> Self {
        let d = model.dim();
        let a = model.generator();
        let mut at = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                at[i * d + j] = a[(j, i)];
            }
        }
        let mech = model.mechanism();
        Self {
            d,
            at,
            kappa: mech.kappa().to_vec(),
            gamma: mech.gamma().to_vec(),
            inv_gamma: mech.gamma().iter().map(|g| 1.0 / g).collect(),
            samplers: mech.gamma().iter().map(|g| StableSampler::new(*g)).collect(),
            clusters: mech
                .gamma()
                .iter()
                .map(|g| ZolotarevLaw::from_gamma0(*g).expect("stable index in (1, 2)"))
                .collect(),
            floor,
        }
    }

    fn step_size(&self, h: f64) -> Result<StepSize> {
        let d = self.d;
        if let Some(k) = (0..d).map(|x| 1.0 + h * self.at[x * d + x]).find(|k| !(*k > 0.0)) {
            return Err(Error::Invalid(format!(
                "step {h} too large for the motion: 1 + h A(x,x) = {k}"
            )));
        }
        let v = (0..d)
            .map(|x| {
                let b = self.gamma[x] - 1.0;
                (self.kappa[x] * b * h).powf(-1.0 / b)
            })
            .collect();
        Ok(StepSize { h, v })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, noise: &mut [f64]) {
        for (s, sampler) in noise.iter_mut().zip(&self.samplers) {
            *s = sampler.sample(rng);
        }
    }

    /// Pure branching over one step from mass `z > 0` at site `x`.
    fn branch<R: Rng + ?Sized>(&self, x: usize, z: f64, step: &StepSize, noise: f64, rng: &mut R) -> f64 {
        let lambda = z * step.v[x];
        if lambda <= EXACT_CLUSTER_LIMIT {
            let n = Poisson::new(lambda).map(|p| p.sample(rng) as u64).unwrap_or(0);
            let law = &self.clusters[x];
            (0..n).map(|_| law.sample(rng)).sum::<f64>() / step.v[x]
        } else {
            z + (self.kappa[x] * z * step.h).powf(self.inv_gamma[x]) * noise
        }
    }

    /// Advance `z` by one step with unit-stable noise `noise`; returns the new total mass.
    fn advance<R: Rng + ?Sized>(
        &self,
        z: &mut [f64],
        next: &mut [f64],
        step: &StepSize,
        noise: &[f64],
        index: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let d = self.d;
        for x in 0..d {
            let row = &self.at[x * d..(x + 1) * d];
            let drift: f64 = row.iter().zip(z.iter()).map(|(a, v)| a * v).sum();
            next[x] = (z[x] + step.h * drift).max(0.0);
        }
        let mut total = 0.0;
        for x in 0..d {
            let y = next[x];
            let mut v = if y > 0.0 { self.branch(x, y, step, noise[x], rng).max(0.0) } else { 0.0 };
            if !v.is_finite() {
                return Err(Error::NonFinite { site: x, step: index });
            }
            if v < self.floor {
                v = 0.0;
            }
            z[x] = v;
            total += v;
        }
        Ok(total)
    }
}

/// One step from `state` (masses below [`DEFAULT_MASS_FLOOR`] are zeroed).
///
/// The stable increments for all sites are drawn first, then any exact
/// cluster draws, all from `rng`.
pub fn step_euler<R: Rng + ?Sized>(
    model: &CriticalModel,
    state: &InitialMeasure,
    h: f64,
    rng: &mut R,
) -> Result<InitialMeasure> {
    check_len("state", model.dim(), state.masses().len())?;
    if !(h > 0.0) {
        return Err(Error::Invalid(format!("step must be > 0, got {h}")));
    }
    if let Some(m) = state.masses().iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
        return Err(Error::Invalid(format!("state mass {m} is not a nonnegative number")));
    }
    let stepper = Stepper::new(model, DEFAULT_MASS_FLOOR);
    let step = stepper.step_size(h)?;
    let mut z = state.masses().to_vec();
    if z.iter().all(|v| *v == 0.0) {
        return Ok(InitialMeasure(z));
    }
    let mut next = vec![0.0; z.len()];
    let mut noise = vec![0.0; z.len()];
    stepper.draw(rng, &mut noise);
    stepper.advance(&mut z, &mut next, &step, &noise, 0, rng)?;
    Ok(InitialMeasure(z))
}

fn check_inputs(model: &CriticalModel, mu: &InitialMeasure, f: &Field) -> Result<()> {
    check_len("initial measure", model.dim(), mu.masses().len())?;
    check_len("functional", model.dim(), f.len())?;
    if f.values().iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Invalid("functional must be nonnegative and finite".into()));
    }
    Ok(())
}

/// Run one replicate; `Some(X_T(f))` when the path survives.
fn run_path(stepper: &Stepper, mu: &[f64], f: &[f64], step: &StepSize, steps: usize, seed: u64, index: u64) -> Result<Option<f64>> {
    let d = stepper.d;
    let mut rng = replicate_rng(seed, index);
    let mut cluster = cluster_rng(seed, index, 0);
    let mut z = mu.to_vec();
    let mut next = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let mut total: f64 = z.iter().sum();
    for k in 0..steps {
        if total == 0.0 {
            return Ok(None);
        }
        stepper.draw(&mut rng, &mut noise);
        total = stepper.advance(&mut z, &mut next, step, &noise, k, &mut cluster)?;
    }
    Ok((total > 0.0).then(|| z.iter().zip(f).map(|(a, b)| a * b).sum()))
}

/// Simulate `config.replicates` independent paths from `mu` and record
/// survival at the horizon together with `X_T(f)` on survivors.
///
/// Replicate `i` draws its stable noise from [`replicate_rng`]`(seed, i)` and
/// its exact cluster draws from a second stream derived from the same pair,
/// so results do not depend on the thread count.
pub fn simulate_paths(model: &CriticalModel, mu: &InitialMeasure, f: &Field, config: &SimConfig) -> Result<PathStats> {
    check_inputs(model, mu, f)?;
    let steps = config.steps()?;
    let stepper = Stepper::new(model, config.mass_floor);
    let step = stepper.step_size(config.step)?;
    let outcomes = (0..config.replicates as u64)
        .into_par_iter()
        .map(|i| run_path(&stepper, mu.masses(), f.values(), &step, steps, config.seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathStats::from_outcomes(config, f, &outcomes))
}

/// Coupled runs at steps `h, 2h, .., 2^{L-1} h` sharing one stable noise
/// stream: the increment used at level `k` is the sum of the `2^k` fine
/// increments scaled by `2^{-k/gamma}`, which is again unit stable. Exact
/// cluster draws use a separate stream per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun {
    /// Step sizes, finest first.
    pub steps: Vec<f64>,
    pub levels: Vec<PathStats>,
    /// Paired differences level `k` minus level `k + 1` of `E[exp(-X_T(f))]`.
    pub laplace_increments: Vec<Estimate>,
    /// Paired differences level `k` minus level `k + 1` of the survival fraction.
    pub survival_increments: Vec<Estimate>,
}

impl CoupledRun {
    /// Richardson estimate of the remaining bias at the finest step for the
    /// Laplace functional; see [`richardson_bias`].
    pub fn laplace_bias_budget(&self) -> f64 {
        richardson_bias(&self.laplace_increments)
    }

    pub fn survival_bias_budget(&self) -> f64 {
        richardson_bias(&self.survival_increments)
    }

    /// Whether successive level differences shrink as the step is refined.
    pub fn laplace_bias_shrinks(&self) -> bool {
        shrinking(&self.laplace_increments)
    }

    pub fn survival_bias_shrinks(&self) -> bool {
        shrinking(&self.survival_increments)
    }
}

/// Bias left at the finest level, `|d_1| / (2^p - 1)`, where `d_k` are the
/// level increments and the observed order `p = log2(|d_2| / |d_1|)` is
/// capped at 1. With two levels the order is taken as 1. NaN when the
/// increments do not shrink.
pub fn richardson_bias(incs: &[Estimate]) -> f64 {
    let d1 = incs[0].mean.abs();
    let Some(d2) = incs.get(1).map(|e| e.mean.abs()) else {
        return d1;
    };
    if !(d2 > d1) {
        return f64::NAN;
    }
    let p = (d2 / d1).log2().min(1.0);
    d1 / (p.exp2() - 1.0)
}

fn shrinking(incs: &[Estimate]) -> bool {
    incs.windows(2).all(|w| w[0].mean.abs() < w[1].mean.abs())
}

/// Stream for the exact cluster draws of level `level` in replicate `index`,
/// kept apart from the shared stable noise.
fn cluster_rng(seed: u64, index: u64, level: usize) -> ChaCha8Rng {
    replicate_rng(seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(level as u64 + 1), index)
}

fn run_coupled_path(
    stepper: &Stepper,
    mu: &[f64],
    f: &[f64],
    sizes: &[StepSize],
    fine_steps: usize,
    seed: u64,
    index: u64,
) -> Result<Vec<Option<f64>>> {
    let d = stepper.d;
    let levels = sizes.len();
    let mut rng = replicate_rng(seed, index);
    let mut cluster: Vec<ChaCha8Rng> = (0..levels).map(|k| cluster_rng(seed, index, k)).collect();
    let mut z: Vec<Vec<f64>> = vec![mu.to_vec(); levels];
    let mut totals: Vec<f64> = vec![mu.iter().sum(); levels];
    let mut acc = vec![vec![0.0; d]; levels];
    let mut next = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let mut scaled = vec![0.0; d];
    let factors: Vec<Vec<f64>> = (0..levels)
        .map(|k| stepper.inv_gamma.iter().map(|ig| (2f64).powi(k as i32).powf(-ig)).collect())
        .collect();
    for j in 0..fine_steps {
        if totals.iter().all(|t| *t == 0.0) {
            break;
        }
        stepper.draw(&mut rng, &mut noise);
        for k in 0..levels {
            for (a, s) in acc[k].iter_mut().zip(&noise) {
                *a += s;
            }
            let period = 1usize << k;
            if (j + 1) % period == 0 {
                if totals[k] > 0.0 {
                    for x in 0..d {
                        scaled[x] = acc[k][x] * factors[k][x];
                    }
                    totals[k] = stepper.advance(&mut z[k], &mut next, &sizes[k], &scaled, j / period, &mut cluster[k])?;
                }
                acc[k].iter_mut().for_each(|a| *a = 0.0);
            }
        }
    }
    Ok((0..levels)
        .map(|k| (totals[k] > 0.0).then(|| z[k].iter().zip(f).map(|(a, b)| a * b).sum()))
        .collect())
}

/// Coupled multilevel run with finest step `config.step` and `levels` levels
/// (at least 2); the horizon must be a multiple of the coarsest step.
pub fn simulate_coupled(
    model: &CriticalModel,
    mu: &InitialMeasure,
    f: &Field,
    config: &SimConfig,
    levels: usize,
) -> Result<CoupledRun> {
    check_inputs(model, mu, f)?;
    if levels < 2 {
        return Err(Error::Invalid("a coupled run needs at least 2 levels".into()));
    }
    let fine_steps = config.steps()?;
    let block = 1usize << (levels - 1);
    if fine_steps % block != 0 {
        return Err(Error::Invalid(format!(
            "{fine_steps} fine steps are not a multiple of the coarsest block {block}"
        )));
    }
    let stepper = Stepper::new(model, config.mass_floor);
    let steps: Vec<f64> = (0..levels).map(|k| config.step * (1u64 << k) as f64).collect();
    let sizes = steps.iter().map(|h| stepper.step_size(*h)).collect::<Result<Vec<_>>>()?;
    let outcomes = (0..config.replicates as u64)
        .into_par_iter()
        .map(|i| run_coupled_path(&stepper, mu.masses(), f.values(), &sizes, fine_steps, config.seed, i))
        .collect::<Result<Vec<_>>>()?;

    let per_level: Vec<Vec<Option<f64>>> = (0..levels).map(|k| outcomes.iter().map(|o| o[k]).collect()).collect();
    let level_stats = per_level
        .iter()
        .zip(&steps)
        .map(|(o, h)| PathStats::from_outcomes(&SimConfig { step: *h, ..*config }, f, o))
        .collect();
    let laplace = |o: &Option<f64>| o.map_or(1.0, |x| (-x).exp());
    let alive = |o: &Option<f64>| if o.is_some() { 1.0 } else { 0.0 };
    let increments = |g: &dyn Fn(&Option<f64>) -> f64| -> Vec<Estimate> {
        (0..levels - 1)
            .map(|k| Estimate::from_samples(outcomes.iter().map(|o| g(&o[k]) - g(&o[k + 1]))))
            .collect()
    };
    Ok(CoupledRun {
        laplace_increments: increments(&laplace),
        survival_increments: increments(&alive),
        steps,
        levels: level_stats,
    })
}

fn require_survivors(stats: &PathStats) -> Result<()> {
    if stats.survivors < MIN_SURVIVORS {
        return Err(Error::TooFewSamples {
            have: stats.survivors,
            need: MIN_SURVIVORS,
        });
    }
    Ok(())
}

/// Survivor average of `exp(-theta eta_T X_T(f))` with its standard error.
pub fn conditional_laplace_estimate(stats: &PathStats, model: &CriticalModel, theta: f64) -> Result<Estimate> {
    require_survivors(stats)?;
    if !(theta >= 0.0) {
        return Err(Error::Invalid(format!("theta must be >= 0, got {theta}")));
    }
    let e = eta(model, stats.horizon)?;
    Ok(Estimate::from_samples(stats.per_path_functional.iter().map(|x| (-theta * e * x).exp())))
}

/// Survivor average of `eta_T X_T(f)` with its standard error.
pub fn conditional_mean_estimate(stats: &PathStats, model: &CriticalModel) -> Result<Estimate> {
    require_survivors(stats)?;
    let e = eta(model, stats.horizon)?;
    Ok(Estimate::from_samples(stats.per_path_functional.iter().map(|x| e * x)))
}
