use std::cell::OnceCell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::io::Aggregate;
use super::{ExperimentSpec, Scheme, SweepOutput, TrialResult};
use crate::beamforming::{
    dynamic_phase_one, dynamic_refine, optimize_fixed_hrris_from, optimize_passive, AoConfig,
    OptResult,
};
use crate::channel::{generate_channels, ChannelPair};
use crate::error::Result;
use crate::rate::{total_power_consumption, PowerModel, PowerScheme, RateResult};
use crate::relay::relay_experiment;
use crate::surface::SurfaceConfig;

const BS_FLOOR_FLAG: &str = "bs-power-floor";
const INVALID: &str = "invalid-input";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the channel stream for one trial; shared by every scheme and K.
pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    splitmix64(splitmix64(master_seed) ^ (trial as u64))
}

pub fn trial_channels(spec: &ExperimentSpec, trial: usize) -> Result<ChannelPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(spec.master_seed, trial));
    generate_channels(&spec.fading, &spec.geometry, &spec.path_loss, &mut rng)
}

/// BS transmit powers that give every scheme the HR-RIS's nominal total
/// consumption (K chains radiating the full active budget).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualPowerPlan {
    pub hrris_total: f64,
    pub ris_n_bs: f64,
    pub ris_n_minus_k_bs: f64,
    pub relay_bs: f64,
    pub relay_floored: bool,
}

fn nominal_hrris_radiated(spec: &ExperimentSpec, k: usize) -> f64 {
    if k > 0 {
        spec.surface.active_power_budget
    } else {
        0.0
    }
}

pub fn apply_equal_power_mode(spec: &ExperimentSpec, k: usize) -> EqualPowerPlan {
    let pm = &spec.power;
    let n = spec.n_elements();
    let nu = pm.pa_efficiency;
    let hr = total_power_consumption(PowerScheme::Hrris, n - k, k, nominal_hrris_radiated(spec, k), pm);
    let ris_n = total_power_consumption(PowerScheme::Ris, n, 0, 0.0, pm);
    let ris_nk = total_power_consumption(PowerScheme::Ris, n - k, 0, 0.0, pm);
    let relay = total_power_consumption(PowerScheme::Relay, 0, k, spec.relay.relay_power, pm);
    let relay_bs = pm.bs_tx_power - nu * (relay - hr);
    EqualPowerPlan {
        hrris_total: hr,
        ris_n_bs: pm.bs_tx_power + nu * (hr - ris_n),
        ris_n_minus_k_bs: pm.bs_tx_power + nu * (hr - ris_nk),
        relay_bs: relay_bs.max(0.0),
        relay_floored: relay_bs < 0.0,
    }
}

/// Lazily computed per-trial state shared by all schemes and K values.
struct TrialContext<'a> {
    spec: &'a ExperimentSpec,
    trial: usize,
    seed: u64,
    ao: AoConfig,
    channels: OnceCell<std::result::Result<ChannelPair, &'static str>>,
    passive: OnceCell<std::result::Result<OptResult, &'static str>>,
    phase_one: OnceCell<std::result::Result<OptResult, &'static str>>,
}

type Tagged<T> = std::result::Result<T, &'static str>;

impl<'a> TrialContext<'a> {
    fn new(spec: &'a ExperimentSpec, trial: usize) -> Self {
        let seed = trial_seed(spec.master_seed, trial);
        let ao = AoConfig {
            seed: splitmix64(spec.ao.seed ^ seed),
            ..spec.ao.clone()
        };
        Self {
            spec,
            trial,
            seed,
            ao,
            channels: OnceCell::new(),
            passive: OnceCell::new(),
            phase_one: OnceCell::new(),
        }
    }

    fn channels(&self) -> Tagged<&ChannelPair> {
        self.channels
            .get_or_init(|| trial_channels(self.spec, self.trial).map_err(|e| e.tag()))
            .as_ref()
            .map_err(|e| *e)
    }

    fn passive_cfg(&self) -> SurfaceConfig {
        SurfaceConfig::passive(self.spec.n_elements(), self.spec.surface.phase_bits)
    }

    fn surface_cfg(&self, k: usize, dynamic: bool) -> SurfaceConfig {
        let s = &self.spec.surface;
        let n = self.spec.n_elements();
        let mut cfg = if dynamic {
            SurfaceConfig::dynamic(n, k, s.phase_bits, s.active_power_budget)
        } else {
            SurfaceConfig::fixed_first(n, k, s.phase_bits, s.active_power_budget)
        };
        cfg.per_element_budget = s.per_element_budget;
        cfg
    }

    /// Passive solution at the nominal BS power.
    fn passive(&self) -> Tagged<&OptResult> {
        self.passive
            .get_or_init(|| {
                let ch = self.channels()?;
                optimize_passive(ch, &self.passive_cfg(), &self.spec.noise, &self.spec.power, &self.ao)
                    .map_err(|e| e.tag())
            })
            .as_ref()
            .map_err(|e| *e)
    }

    /// Dynamic phase 1 does not depend on K.
    fn phase_one(&self) -> Tagged<&OptResult> {
        self.phase_one
            .get_or_init(|| {
                let ch = self.channels()?;
                let passive = self.passive()?;
                let cfg = self.surface_cfg(0, true);
                dynamic_phase_one(ch, &cfg, &self.spec.noise, &self.spec.power, &self.ao, passive)
                    .map_err(|e| e.tag())
            })
            .as_ref()
            .map_err(|e| *e)
    }

    fn row(&self, scheme: Scheme, k: usize) -> TrialResult {
        let mut flags = Vec::new();
        let (se, ee, total_power, iterations, converged) = match self.evaluate(scheme, k, &mut flags) {
            Ok(r) => (r.se, r.ee, r.total_power, r.iterations, r.converged),
            Err(tag) => {
                flags.push(tag.to_string());
                (f64::NAN, f64::NAN, f64::NAN, 0, false)
            }
        };
        TrialResult {
            scheme,
            n: self.spec.n_elements(),
            k,
            trial: self.trial,
            seed: self.seed,
            se,
            ee,
            total_power,
            iterations,
            converged,
            flags,
        }
    }

    fn evaluate(&self, scheme: Scheme, k: usize, flags: &mut Vec<String>) -> Tagged<RateResult> {
        let spec = self.spec;
        let n = spec.n_elements();
        if k > n {
            return Err(INVALID);
        }
        let plan = spec.equal_power_mode.then(|| apply_equal_power_mode(spec, k));
        let bw = spec.noise.bandwidth_hz;
        let with_bs = |p: f64| PowerModel {
            bs_tx_power: p,
            ..spec.power
        };
        let result = |se: f64, total: f64, opt: Option<&OptResult>| {
            let (it, conv) = opt.map_or((0, true), |o| (o.iterations, o.converged));
            RateResult::new(se, bw, total, it, conv)
        };
        match scheme {
            Scheme::RisN => {
                let pm = with_bs(plan.map_or(spec.power.bs_tx_power, |p| p.ris_n_bs));
                let total = total_power_consumption(PowerScheme::Ris, n, 0, 0.0, &pm);
                let opt = if plan.is_some() && pm.bs_tx_power != spec.power.bs_tx_power {
                    optimize_passive(self.channels()?, &self.passive_cfg(), &spec.noise, &pm, &self.ao)
                        .map_err(|e| e.tag())?
                } else {
                    self.passive()?.clone()
                };
                Ok(result(opt.se, total, Some(&opt)))
            }
            Scheme::RisNMinusK => {
                let pm = with_bs(plan.map_or(spec.power.bs_tx_power, |p| p.ris_n_minus_k_bs));
                let total = total_power_consumption(PowerScheme::Ris, n - k, 0, 0.0, &pm);
                if k == n {
                    return Ok(result(0.0, total, None));
                }
                if k == 0 && pm.bs_tx_power == spec.power.bs_tx_power {
                    let opt = self.passive()?;
                    return Ok(result(opt.se, total, Some(opt)));
                }
                let keep: Vec<usize> = (k..n).collect();
                let ch = self.channels()?.restrict(&keep);
                let cfg = SurfaceConfig::passive(n - k, spec.surface.phase_bits);
                let opt = optimize_passive(&ch, &cfg, &spec.noise, &pm, &self.ao).map_err(|e| e.tag())?;
                Ok(result(opt.se, total, Some(&opt)))
            }
            Scheme::HrrisFixed | Scheme::HrrisDynamic => {
                let passive = self.passive()?;
                let opt = if k == 0 || spec.surface.active_power_budget <= 0.0 {
                    passive.clone()
                } else if scheme == Scheme::HrrisFixed {
                    let cfg = self.surface_cfg(k, false);
                    optimize_fixed_hrris_from(self.channels()?, &cfg, &spec.noise, &spec.power, &self.ao, passive)
                        .map_err(|e| e.tag())?
                } else {
                    let cfg = self.surface_cfg(k, true);
                    let one = self.phase_one()?;
                    dynamic_refine(self.channels()?, &cfg, &spec.noise, &spec.power, &self.ao, passive, one)
                        .map_err(|e| e.tag())?
                };
                let total = match plan {
                    Some(p) => p.hrris_total,
                    None => total_power_consumption(PowerScheme::Hrris, n - k, k, opt.active_power, &spec.power),
                };
                Ok(result(opt.se, total, Some(&opt)))
            }
            Scheme::Relay => {
                if k == 0 {
                    return Err(INVALID);
                }
                let bs = plan.map_or(spec.power.bs_tx_power, |p| p.relay_bs);
                let pm = with_bs(bs);
                let cfg = spec.relay.with_antennas(k);
                if plan.is_some_and(|p| p.relay_floored) {
                    flags.push(BS_FLOOR_FLAG.to_string());
                }
                if bs <= 0.0 {
                    let total = total_power_consumption(PowerScheme::Relay, 0, k, cfg.relay_power, &pm);
                    return Ok(result(0.0, total, None));
                }
                let keep: Vec<usize> = (0..k).collect();
                let ch = self.channels()?.restrict(&keep);
                let out = relay_experiment(&ch, &cfg, &spec.noise, &pm, &self.ao).map_err(|e| e.tag())?;
                if plan.is_some() {
                    let total = total_power_consumption(PowerScheme::Relay, 0, k, cfg.relay_power, &pm);
                    Ok(RateResult::new(out.rate.se, bw, total, out.rate.iterations, out.rate.converged))
                } else {
                    Ok(out.rate)
                }
            }
        }
    }
}

/// One row; channels are derived from `(master_seed, trial)` only, so every
/// scheme and K at a given trial index sees the same realization.
pub fn run_trial(spec: &ExperimentSpec, scheme: Scheme, k: usize, trial: usize) -> TrialResult {
    TrialContext::new(spec, trial).row(scheme, k)
}

/// Every (scheme, K, trial) combination, sorted by scheme, K and trial, plus
/// per-(scheme, K) aggregates. Failed rows are kept and flagged.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepOutput> {
    spec.validate()?;
    let mut schemes = spec.schemes.clone();
    schemes.sort_unstable();
    schemes.dedup();
    let mut ks = spec.k_values.clone();
    ks.sort_unstable();
    ks.dedup();
    let per_trial: Vec<Vec<TrialResult>> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let ctx = TrialContext::new(spec, t);
            let mut rows = Vec::with_capacity(schemes.len() * ks.len());
            for &s in &schemes {
                for &k in &ks {
                    rows.push(ctx.row(s, k));
                }
            }
            rows
        })
        .collect();
    let mut rows: Vec<TrialResult> = per_trial.into_iter().flatten().collect();
    rows.sort_by(|a, b| (a.scheme, a.k, a.trial).cmp(&(b.scheme, b.k, b.trial)));
    let aggregates = aggregate(&rows);
    Ok(SweepOutput { rows, aggregates })
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and standard error per (scheme, K) over the rows that did not fail.
pub fn aggregate(rows: &[TrialResult]) -> Vec<Aggregate> {
    let mut keys: Vec<(Scheme, usize, usize)> = rows.iter().map(|r| (r.scheme, r.k, r.n)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(scheme, k, n)| {
            let group: Vec<&TrialResult> =
                rows.iter().filter(|r| r.scheme == scheme && r.k == k && r.n == n).collect();
            let ok: Vec<&&TrialResult> = group.iter().filter(|r| !r.failed()).collect();
            let col = |f: fn(&TrialResult) -> f64| mean_stderr(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (se_mean, se_stderr) = col(|r| r.se);
            let (ee_mean, ee_stderr) = col(|r| r.ee);
            let (p_mean, p_stderr) = col(|r| r.total_power);
            Aggregate {
                scheme,
                n,
                k,
                count: ok.len(),
                failed: group.len() - ok.len(),
                se_mean,
                se_stderr,
                ee_mean,
                ee_stderr,
                p_total_mean: p_mean,
                p_total_stderr: p_stderr,
            }
        })
        .collect()
}

/// Per-(scheme, K) medians over the rows that did not fail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Medians {
    pub scheme: Scheme,
    pub n: usize,
    pub k: usize,
    pub se: f64,
    pub ee: f64,
    pub total_power: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

pub fn medians(rows: &[TrialResult]) -> Vec<Medians> {
    let mut keys: Vec<(Scheme, usize, usize)> = rows.iter().map(|r| (r.scheme, r.k, r.n)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(scheme, k, n)| {
            let ok: Vec<&TrialResult> = rows
                .iter()
                .filter(|r| r.scheme == scheme && r.k == k && r.n == n && !r.failed())
                .collect();
            let col = |f: fn(&TrialResult) -> f64| median(ok.iter().map(|r| f(r)).collect());
            Medians {
                scheme,
                n,
                k,
                se: col(|r| r.se),
                ee: col(|r| r.ee),
                total_power: col(|r| r.total_power),
            }
        })
        .collect()
}
