//! Full-duplex amplify-and-forward relay baseline with SVD precoding.
//!
//! The relay sits where the surface would be and uses the first `K` element
//! positions of the surface channels. Self-interference follows the same
//! loop model as an amplifying surface element: each antenna hears the
//! relay's total output through an SI channel of variance `sigma_si2`.

use serde::{Deserialize, Serialize};

use crate::beamforming::AoConfig;
use crate::channel::ChannelPair;
use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, sandwich, trace_re, CMatrix, C64};
use crate::rate::{
    mutual_information, total_power_consumption, water_fill_levels, water_filling, NoiseModel,
    PowerModel, PowerScheme, RateResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelayConfig {
    /// Set per sweep point from K.
    #[serde(skip)]
    pub n_antennas: usize,
    /// Total relay transmit power, watts.
    pub relay_power: f64,
    /// Residual SI gain after analog and digital suppression (linear).
    pub sigma_si2: f64,
}

impl Default for RelayConfig {
    fn default() -> Self {
        Self {
            n_antennas: 1,
            relay_power: 1e-3,
            sigma_si2: 10f64.powf(-9.5),
        }
    }
}

impl RelayConfig {
    pub fn with_antennas(self, k: usize) -> Self {
        Self { n_antennas: k, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_antennas == 0 {
            return Err(Error::invalid("relay needs at least one antenna"));
        }
        if !(0.0..1.0).contains(&self.sigma_si2) {
            return Err(Error::invalid("relay SI gain must lie in [0, 1)"));
        }
        if !(self.relay_power > 0.0) || !self.relay_power.is_finite() {
            return Err(Error::invalid("relay power must be positive"));
        }
        Ok(())
    }
}

/// Steady-state relay output power for precoder `w` and input signal
/// covariance `s_in`: `P = tr(W S W^H) + (sigma_r2 + sigma_si2 P) ||W||^2`.
pub fn relay_output_power(w: &CMatrix, s_in: &CMatrix, sigma_r2: f64, sigma_si2: f64) -> Result<f64> {
    let fro = frobenius_sq(w);
    let loop_gain = sigma_si2 * fro;
    if loop_gain >= 1.0 {
        return Err(Error::UnstableLoop { loop_gain });
    }
    Ok((trace_re(&sandwich(w, s_in)) + sigma_r2 * fro) / (1.0 - loop_gain))
}

/// Singular triplets sorted by decreasing singular value.
fn sorted_svd(m: &CMatrix) -> (CMatrix, Vec<f64>, CMatrix) {
    let svd = nalgebra::linalg::SVD::new(m.clone(), true, true);
    let u = svd.u.expect("left vectors requested");
    let v_t = svd.v_t.expect("right vectors requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let sv = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = CMatrix::from_fn(u.nrows(), idx.len(), |r, c| u[(r, idx[c])]);
    // columns are right singular vectors
    let v_sorted = CMatrix::from_fn(v_t.ncols(), idx.len(), |r, c| v_t[(idx[c], r)].conj());
    (u_sorted, sv, v_sorted)
}

/// `W = V2 diag(gamma) U1^H`: the i-th receive mode of the first hop is
/// forwarded on the i-th transmit mode of the second hop. Mode powers are
/// water-filled on the product channel and the whole matrix is scaled so
/// the relay emits exactly `relay_power`.
pub fn relay_precoder(
    h1r: &CMatrix,
    h2r: &CMatrix,
    q: &CMatrix,
    cfg: &RelayConfig,
    noise: &NoiseModel,
) -> Result<CMatrix> {
    cfg.validate()?;
    let k = h1r.nrows();
    if h2r.ncols() != k {
        return Err(Error::invalid("relay channel dimensions disagree"));
    }
    let sigma2 = noise.receiver_noise_power();
    let sr2 = noise.sigma_r2;
    let (u1, s1, _) = sorted_svd(h1r);
    let (_, s2, v2) = sorted_svd(h2r);
    let s_in = sandwich(h1r, q);
    let modes = s1.len().min(s2.len());
    let mut input = Vec::with_capacity(modes);
    let mut gains = Vec::with_capacity(modes);
    for i in 0..modes {
        let u = u1.column(i);
        let e = (u.adjoint() * &s_in * u)[(0, 0)].re.max(0.0);
        input.push(e);
        let g = if s1[i] > 0.0 && s2[i] > 0.0 && e > 0.0 {
            s2[i] * s2[i] * e / ((e + sr2) * sigma2)
        } else {
            0.0
        };
        gains.push(g);
    }
    if gains.iter().all(|g| *g <= 0.0) {
        return Err(Error::ZeroChannel);
    }
    let alloc = water_fill_levels(&gains, cfg.relay_power);
    let mut w = CMatrix::zeros(k, k);
    for i in 0..modes {
        let p = alloc.powers[i];
        if p <= 0.0 {
            continue;
        }
        let gamma = (p / (input[i] + sr2)).sqrt();
        let v = v2.column(i);
        let u = u1.column(i);
        for r in 0..k {
            for c in 0..k {
                w[(r, c)] += v[r] * u[c].conj() * gamma;
            }
        }
    }
    let a = trace_re(&sandwich(&w, &s_in));
    let b = frobenius_sq(&w);
    let t2 = cfg.relay_power / (a + sr2 * b + cfg.relay_power * cfg.sigma_si2 * b);
    Ok(w * C64::new(t2.sqrt(), 0.0))
}

/// Receive covariance of the relayed noise and SI plus the thermal floor.
fn relay_noise_covariance(
    h2r: &CMatrix,
    w: &CMatrix,
    p_out: f64,
    cfg: &RelayConfig,
    noise: &NoiseModel,
) -> CMatrix {
    let nr = h2r.nrows();
    let hw = h2r * w;
    let fwd = noise.sigma_r2 + cfg.sigma_si2 * p_out;
    CMatrix::identity(nr, nr) * C64::new(noise.receiver_noise_power(), 0.0)
        + sandwich(&hw, &CMatrix::identity(w.ncols(), w.ncols())) * C64::new(fwd, 0.0)
}

/// Spectral efficiency of the relayed link (full duplex, no half-rate loss).
pub fn relay_rate(
    h1r: &CMatrix,
    h2r: &CMatrix,
    w: &CMatrix,
    q: &CMatrix,
    cfg: &RelayConfig,
    noise: &NoiseModel,
) -> Result<f64> {
    let s_in = sandwich(h1r, q);
    let p_out = relay_output_power(w, &s_in, noise.sigma_r2, cfg.sigma_si2)?;
    let c = relay_noise_covariance(h2r, w, p_out, cfg, noise);
    let g = h2r * w * h1r;
    mutual_information(&g, q, &c)
}

#[derive(Debug, Clone)]
pub struct RelayOutcome {
    pub rate: RateResult,
    pub precoder: CMatrix,
    pub q: CMatrix,
    pub trace: Vec<f64>,
    pub output_power: f64,
}

/// Alternates BS water-filling against the relay-induced noise with SVD
/// precoder updates; a BS update is kept only if the rate does not drop.
pub fn relay_experiment(
    channels: &ChannelPair,
    cfg: &RelayConfig,
    noise: &NoiseModel,
    pm: &PowerModel,
    ao: &AoConfig,
) -> Result<RelayOutcome> {
    cfg.validate()?;
    let (h1r, h2r) = (&channels.h1, &channels.h2);
    if channels.n_elements() != cfg.n_antennas {
        return Err(Error::invalid(format!(
            "relay has {} antennas but the channels have {}",
            cfg.n_antennas,
            channels.n_elements()
        )));
    }
    let nt = h1r.ncols();
    let mut q = CMatrix::identity(nt, nt) * C64::new(pm.bs_tx_power / nt as f64, 0.0);
    let mut w = relay_precoder(h1r, h2r, &q, cfg, noise)?;
    let mut rate = relay_rate(h1r, h2r, &w, &q, cfg, noise)?;
    let mut trace = vec![rate];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..ao.max_outer_iters {
        iterations += 1;
        let s_in = sandwich(h1r, &q);
        let p_out = relay_output_power(&w, &s_in, noise.sigma_r2, cfg.sigma_si2)?;
        let c = relay_noise_covariance(h2r, &w, p_out, cfg, noise);
        let wf = water_filling(&(h2r * &w * h1r), &c, pm.bs_tx_power)?;
        if wf.zero_channel {
            converged = true;
            break;
        }
        let w_new = relay_precoder(h1r, h2r, &wf.covariance, cfg, noise)?;
        let r_new = relay_rate(h1r, h2r, &w_new, &wf.covariance, cfg, noise)?;
        if r_new < rate {
            converged = true;
            break;
        }
        let gain = r_new - rate;
        q = wf.covariance;
        w = w_new;
        rate = r_new;
        trace.push(rate);
        if gain <= ao.rel_tolerance * rate.abs() {
            converged = true;
            break;
        }
    }
    let output_power = relay_output_power(&w, &sandwich(h1r, &q), noise.sigma_r2, cfg.sigma_si2)?;
    let total = total_power_consumption(PowerScheme::Relay, 0, cfg.n_antennas, output_power, pm);
    Ok(RelayOutcome {
        rate: RateResult::new(rate, noise.bandwidth_hz, total, iterations, converged),
        precoder: w,
        q,
        trace,
        output_power,
    })
}
