//! Exhaustive search over the phase codebook (and an amplitude grid on the
//! active elements) for small surfaces. Used to validate the optimizers.

use crate::channel::ChannelPair;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::rate::{
    cascaded_channel, incident_powers, noise_covariance, spectral_efficiency, water_filling,
    NoiseModel, PowerModel,
};
use crate::surface::{amplitude_for_power, budget_check, CoeffProfile, SurfaceConfig};

use super::{check_dims, fixed_indices, powered, OptResult};

pub const ORACLE_MAX_ELEMENTS: usize = 6;
pub const ORACLE_MAX_POINTS: f64 = 1e7;

/// Covariance scored for a profile: water-filling against the noise the
/// profile induces under an isotropic BS covariance.
fn covariance_for(
    channels: &ChannelPair,
    profile: &CoeffProfile,
    noise: &NoiseModel,
    q_iso: &CMatrix,
    bs_power: f64,
) -> Result<CMatrix> {
    let s = incident_powers(&channels.h1, q_iso);
    let c = noise_covariance(&channels.h2, profile, &s, noise)?;
    let g = cascaded_channel(&channels.h1, &channels.h2, profile);
    let wf = water_filling(&g, &c, bs_power)?;
    Ok(if wf.zero_channel { q_iso.clone() } else { wf.covariance })
}

pub fn brute_force_oracle(
    channels: &ChannelPair,
    cfg: &SurfaceConfig,
    noise: &NoiseModel,
    pm: &PowerModel,
    amplitude_grid: usize,
) -> Result<OptResult> {
    check_dims(channels, cfg)?;
    let n = cfg.n_elements;
    let book = cfg.codebook();
    let active = powered(cfg, fixed_indices(cfg)?);
    let grid = amplitude_grid.max(2);
    let size = (book.len() as f64).powi(n as i32) * (grid as f64).powi(active.len() as i32);
    if n > ORACLE_MAX_ELEMENTS {
        return Err(Error::invalid(format!(
            "exhaustive search supports at most {ORACLE_MAX_ELEMENTS} elements, got {n}"
        )));
    }
    if size > ORACLE_MAX_POINTS {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: ORACLE_MAX_POINTS,
        });
    }
    let nt = channels.bs_antennas();
    let q_iso = CMatrix::identity(nt, nt) * C64::new(pm.bs_tx_power / nt as f64, 0.0);

    // Amplitude ranges sized for the largest incident power any unit-trace
    // covariance can produce.
    let caps: Vec<f64> = active
        .iter()
        .map(|&m| {
            let s_max = pm.bs_tx_power * channels.h1.row(m).iter().map(|z| z.norm_sqr()).sum::<f64>();
            amplitude_for_power(cfg.active_power_budget, s_max, noise.sigma_r2, noise.sigma_si2_surface)
        })
        .collect();

    let levels = book.len();
    let mut phase_digits = vec![0usize; n];
    let mut best: Option<(f64, CoeffProfile, CMatrix)> = None;
    let mut evaluated = 0usize;
    loop {
        let phases: Vec<f64> = phase_digits.iter().map(|&d| book.values()[d]).collect();
        let mut amp_digits = vec![0usize; active.len()];
        loop {
            let mut amps = vec![1.0; n];
            for (k, &m) in active.iter().enumerate() {
                amps[m] = caps[k] * amp_digits[k] as f64 / (grid - 1) as f64;
            }
            let profile = CoeffProfile::new(amps, phases.clone(), &active, &book, cfg.n_active_chains)?;
            let q = covariance_for(channels, &profile, noise, &q_iso, pm.bs_tx_power)?;
            let s = incident_powers(&channels.h1, &q);
            evaluated += 1;
            if budget_check(&profile, &s, noise, cfg)?.feasible {
                let se = spectral_efficiency(&channels.h1, &channels.h2, &profile, &q, noise)?;
                if best.as_ref().map_or(true, |(b, _, _)| se > *b) {
                    best = Some((se, profile, q));
                }
            }
            if !increment(&mut amp_digits, grid) {
                break;
            }
        }
        if !increment(&mut phase_digits, levels) {
            break;
        }
    }
    let (se, profile, q) = best.ok_or_else(|| Error::invalid("no budget-feasible grid point"))?;
    let s = incident_powers(&channels.h1, &q);
    let active_power = budget_check(&profile, &s, noise, cfg)?.total_active_power;
    Ok(OptResult {
        profile,
        q,
        se,
        trace: vec![se],
        converged: true,
        iterations: evaluated,
        active_power,
    })
}

/// Mixed-radix counter; returns false after wrapping around.
fn increment(digits: &mut [usize], radix: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_visits_all() {
        let mut d = vec![0usize; 3];
        let mut count = 1;
        while increment(&mut d, 4) {
            count += 1;
        }
        assert_eq!(count, 64);
        let mut empty: Vec<usize> = Vec::new();
        assert!(!increment(&mut empty, 4));
    }

    #[test]
    fn rejects_large_instances() {
        let ch = ChannelPair::new(CMatrix::zeros(8, 1), CMatrix::zeros(1, 8)).unwrap();
        let cfg = SurfaceConfig::passive(8, 2);
        let err = brute_force_oracle(&ch, &cfg, &NoiseModel::default(), &PowerModel::default(), 4);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
        let ch = ChannelPair::new(CMatrix::zeros(6, 1), CMatrix::zeros(1, 6)).unwrap();
        let cfg = SurfaceConfig::fixed_first(6, 6, 3, 1e-3);
        let err = brute_force_oracle(&ch, &cfg, &NoiseModel::default(), &PowerModel::default(), 4);
        assert!(matches!(err, Err(Error::SearchSpaceTooLarge { .. })));
    }
}
