//! Semi-passive beamforming by alternating optimization.
//!
//! All optimizers share one coordinate-ascent engine ([`engine`]); they differ
//! only in which elements may change amplitude and in how they are started.
//! Passive surfaces are the special case with no active elements, which makes
//! a fixed HR-RIS without active elements produce exactly the passive result.

mod engine;
mod oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelPair;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::rate::{NoiseModel, PowerModel};
use crate::surface::{Architecture, CoeffProfile, SurfaceConfig};

pub(crate) use engine::Engine;
pub use oracle::{brute_force_oracle, ORACLE_MAX_ELEMENTS, ORACLE_MAX_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    AllZeroPhase,
    RandomPhase,
}

/// Alternating-optimization controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AoConfig {
    pub max_outer_iters: usize,
    /// Stop once an outer iteration improves SE by less than this fraction.
    pub rel_tolerance: f64,
    /// Points of the coarse amplitude grid preceding golden-section refinement.
    pub amplitude_grid: usize,
    /// Additional random-phase starts; the best result is kept.
    pub restarts: usize,
    pub init: InitKind,
    /// Seed for random starts.
    pub seed: u64,
}

impl Default for AoConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 30,
            rel_tolerance: 1e-6,
            amplitude_grid: 12,
            restarts: 0,
            init: InitKind::AllZeroPhase,
            seed: 0,
        }
    }
}

impl AoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0) {
            return Err(Error::invalid("AO tolerance must be positive"));
        }
        if self.amplitude_grid < 2 {
            return Err(Error::invalid("amplitude grid needs at least two points"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub profile: CoeffProfile,
    /// BS transmit covariance.
    pub q: CMatrix,
    pub se: f64,
    /// SE after the initial covariance update and after every outer iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Total output power of the active elements, watts.
    pub active_power: f64,
}

impl OptResult {
    /// Largest relative decrease between consecutive trace entries.
    pub fn worst_trace_drop(&self) -> f64 {
        self.trace
            .windows(2)
            .map(|w| (w[0] - w[1]) / w[0].abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

fn check_dims(channels: &ChannelPair, cfg: &SurfaceConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.n_elements != channels.n_elements() {
        return Err(Error::invalid(format!(
            "surface has {} elements but the channels have {}",
            cfg.n_elements,
            channels.n_elements()
        )));
    }
    Ok(())
}

pub(crate) fn make_engine<'a>(
    channels: &'a ChannelPair,
    cfg: &SurfaceConfig,
    noise: &'a NoiseModel,
    pm: &PowerModel,
    ao: &AoConfig,
) -> Result<Engine<'a>> {
    noise.validate()?;
    ao.validate()?;
    let sigma2 = noise.receiver_noise_power();
    if !(sigma2 > 0.0) {
        return Err(Error::SingularNoise);
    }
    if !(pm.bs_tx_power > 0.0) {
        return Err(Error::invalid("BS transmit power must be positive"));
    }
    Ok(Engine {
        h1: &channels.h1,
        h2: &channels.h2,
        noise,
        sigma2,
        bs_power: pm.bs_tx_power,
        book: cfg.codebook(),
        budget: cfg.active_power_budget,
        per_element: cfg.per_element_budget,
        amplitude_grid: ao.amplitude_grid,
    })
}

fn start_profile(n: usize, active: &[usize], engine: &Engine<'_>, ao: &AoConfig, rng: &mut ChaCha8Rng) -> CoeffProfile {
    match ao.init {
        InitKind::AllZeroPhase => {
            let mut p = CoeffProfile::passive_zero(n);
            for &m in active {
                p.activate(m);
            }
            p
        }
        InitKind::RandomPhase => engine::random_profile(n, active, &engine.book, rng),
    }
}

fn run_with_active(
    channels: &ChannelPair,
    cfg: &SurfaceConfig,
    noise: &NoiseModel,
    pm: &PowerModel,
    ao: &AoConfig,
    active: &[usize],
) -> Result<OptResult> {
    let engine = make_engine(channels, cfg, noise, pm, ao)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ao.seed);
    let init = start_profile(cfg.n_elements, active, &engine, ao, &mut rng);
    engine.run_with_restarts(init, None, ao, &mut rng)
}

/// Phase-only coordinate ascent for a conventional surface (`K = 0`).
pub fn optimize_passive(
    channels: &ChannelPair,
    cfg: &SurfaceConfig,
    noise: &NoiseModel,
    pm: &PowerModel,
    ao: &AoConfig,
) -> Result<OptResult> {
    check_dims(channels, cfg)?;
    if cfg.n_active_chains != 0 {
        return Err(Error::invalid("passive optimization requires K = 0"));
    }
    run_with_active(channels, cfg, noise, pm, ao, &[])
}

fn fixed_indices(cfg: &SurfaceConfig) -> Result<Vec<usize>> {
    match &cfg.architecture {
        Architecture::Fixed { active_indices } => Ok(active_indices.clone()),
        Architecture::Dynamic => Err(Error::invalid("expected a fixed architecture")),
    }
}

/// Active set actually powered: a zero budget leaves every element passive.
fn powered(cfg: &SurfaceConfig, indices: Vec<usize>) -> Vec<usize> {
    if cfg.active_power_budget > 0.0 {
        indices
    } else {
        Vec::new()
    }
}

/// Fixed HR-RIS: phases everywhere, amplitudes on the predefined active set.
pub fn optimize_fixed_hrris(
    channels: &ChannelPair,
    cfg: &SurfaceConfig,
    noise: &NoiseModel,
    pm: &PowerModel,
    ao: &AoConfig,
) -> Result<OptResult> {
    check_dims(channels, cfg)?;
    let active = powered(cfg, fixed_indices(cfg)?);
    run_with_active(channels, cfg, noise, pm, ao, &active)
}

/// Fixed HR-RIS started from a converged passive solution. If amplification
/// cannot beat that solution the active elements stay unpowered and the
/// passive solution is returned, so the result never falls below it.
pub fn optimize_fixed_hrris_from(
    channels: &ChannelPair,
    cfg: &SurfaceConfig,
    noise: &NoiseModel,
    pm: &PowerModel,
    ao: &AoConfig,
    passive: &OptResult,
) -> Result<OptResult> {
    check_dims(channels, cfg)?;
    let active = powered(cfg, fixed_indices(cfg)?);
    if active.is_empty() {
        return Ok(passive.clone());
    }
    let engine = make_engine(channels, cfg, noise, pm, ao)?;
    let mut init = passive.profile.clone();
    for &m in &active {
        init.activate(m);
    }
    let res = engine.run(init, Some(passive.q.clone()), ao)?;
    Ok(if res.se >= passive.se { res } else { passive.clone() })
}

/// Activation rule: elements whose amplitude exceeds one, largest first
/// (ties to the lower index), at most `k`. Returned in ascending order.
pub fn select_active(amplitudes: &[f64], k: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..amplitudes.len()).filter(|&i| amplitudes[i] > 1.0).collect();
    cand.sort_by(|&a, &b| amplitudes[b].total_cmp(&amplitudes[a]).then(a.cmp(&b)));
    cand.truncate(k);
    cand.sort_unstable();
    cand
}

/// Dynamic phase 1: every element amplitude-free under the budget, started
/// from the passive solution.
pub fn dynamic_phase_one(
    channels: &ChannelPair,
    cfg: &SurfaceConfig,
    noise: &NoiseModel,
    pm: &PowerModel,
    ao: &AoConfig,
    passive: &OptResult,
) -> Result<OptResult> {
    check_dims(channels, cfg)?;
    let engine = make_engine(channels, cfg, noise, pm, ao)?;
    let mut init = passive.profile.clone();
    for m in 0..cfg.n_elements {
        init.activate(m);
    }
    engine.run(init, Some(passive.q.clone()), ao)
}

/// Dynamic phases 2 and 3: select the active set from the phase-1 amplitudes
/// and re-optimize with that set fixed.
pub fn dynamic_refine(
    channels: &ChannelPair,
    cfg: &SurfaceConfig,
    noise: &NoiseModel,
    pm: &PowerModel,
    ao: &AoConfig,
    passive: &OptResult,
    phase_one: &OptResult,
) -> Result<OptResult> {
    check_dims(channels, cfg)?;
    let selected = select_active(phase_one.profile.amplitudes(), cfg.n_active_chains);
    if selected.is_empty() {
        return Ok(passive.clone());
    }
    let mut init = phase_one.profile.clone();
    for m in 0..cfg.n_elements {
        if selected.binary_search(&m).is_err() {
            init.deactivate(m);
        }
    }
    let engine = make_engine(channels, cfg, noise, pm, ao)?;
    let res = engine.run(init, Some(phase_one.q.clone()), ao)?;
    Ok(if res.se >= passive.se { res } else { passive.clone() })
}

/// Dynamic HR-RIS: unrestricted amplitude optimization, activation of the
/// elements that amplify, then fixed-set refinement.
pub fn optimize_dynamic_hrris(
    channels: &ChannelPair,
    cfg: &SurfaceConfig,
    noise: &NoiseModel,
    pm: &PowerModel,
    ao: &AoConfig,
) -> Result<OptResult> {
    check_dims(channels, cfg)?;
    if cfg.n_active_chains == 0 {
        return Err(Error::invalid("dynamic HR-RIS needs at least one RF-PA chain"));
    }
    let passive_cfg = SurfaceConfig::passive(cfg.n_elements, cfg.phase_bits);
    let passive = optimize_passive(channels, &passive_cfg, noise, pm, ao)?;
    if cfg.active_power_budget <= 0.0 {
        return Ok(passive);
    }
    let one = dynamic_phase_one(channels, cfg, noise, pm, ao, &passive)?;
    dynamic_refine(channels, cfg, noise, pm, ao, &passive, &one)
}

/// One guarded covariance update applied to an optimizer state.
pub fn guarded_q_update(
    state: &OptResult,
    channels: &ChannelPair,
    cfg: &SurfaceConfig,
    noise: &NoiseModel,
    pm: &PowerModel,
) -> Result<(OptResult, bool)> {
    let engine = make_engine(channels, cfg, noise, pm, &AoConfig::default())?;
    let se = engine.evaluate(&state.profile, &state.q)?;
    let (next, accepted) = engine.guarded_q_update(&engine::State {
        profile: state.profile.clone(),
        q: state.q.clone(),
        se,
    })?;
    let mut trace = state.trace.clone();
    trace.push(next.se);
    Ok((
        OptResult {
            profile: next.profile,
            q: next.q,
            se: next.se,
            trace,
            converged: state.converged,
            iterations: state.iterations,
            active_power: state.active_power,
        },
        accepted,
    ))
}
