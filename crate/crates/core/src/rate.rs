//! Achievable rate with colored noise, transmit water-filling and the power
//! ledger behind energy efficiency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, hermitian_defect, log2_det_hpd, sandwich, CMatrix, C64};
use crate::surface::CoeffProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    /// Input noise of an amplifying element, watts.
    pub sigma_r2: f64,
    /// Self-interference loop gain of a surface element (linear).
    pub sigma_si2_surface: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            noise_psd_dbm_hz: -170.0,
            bandwidth_hz: 10e6,
            sigma_r2: 1e-13,
            sigma_si2_surface: 1e-7,
        }
    }
}

impl NoiseModel {
    /// Receiver thermal noise power `PSD * B`, watts.
    pub fn receiver_noise_power(&self) -> f64 {
        10f64.powf((self.noise_psd_dbm_hz - 30.0) / 10.0) * self.bandwidth_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) || !self.bandwidth_hz.is_finite() {
            return Err(Error::invalid("bandwidth must be positive"));
        }
        if !(0.0..1.0).contains(&self.sigma_si2_surface) {
            return Err(Error::invalid("surface SI gain must lie in [0, 1)"));
        }
        if !(self.sigma_r2 >= 0.0) || !self.noise_psd_dbm_hz.is_finite() {
            return Err(Error::invalid("noise powers must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerModel {
    pub bs_tx_power: f64,
    pub pa_efficiency: f64,
    pub bs_circuit: f64,
    pub ms_circuit: f64,
    pub passive_element: f64,
    pub active_element_circuit: f64,
    pub relay_element: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            bs_tx_power: 0.1,
            pa_efficiency: 0.5,
            bs_circuit: 1.0,
            ms_circuit: 0.1,
            passive_element: 5e-3,
            active_element_circuit: 20e-3,
            relay_element: 100e-3,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.pa_efficiency > 0.0 && self.pa_efficiency <= 1.0) {
            return Err(Error::invalid("PA efficiency must lie in (0, 1]"));
        }
        let all = [
            self.bs_tx_power,
            self.bs_circuit,
            self.ms_circuit,
            self.passive_element,
            self.active_element_circuit,
            self.relay_element,
        ];
        if all.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("power figures must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateResult {
    /// bits/s/Hz
    pub se: f64,
    /// bits/joule
    pub ee: f64,
    /// watts
    pub total_power: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl RateResult {
    pub fn new(se: f64, bandwidth_hz: f64, total_power: f64, iterations: usize, converged: bool) -> Self {
        Self {
            se,
            ee: energy_efficiency(se, bandwidth_hz, total_power),
            total_power,
            iterations,
            converged,
        }
    }

    /// Bandwidth-free efficiency, bits/s/Hz per watt.
    pub fn ee_per_hz(&self) -> f64 {
        self.se / self.total_power
    }
}

/// Power impinging on each element, `[h1 q h1^H]_nn`.
pub fn incident_powers(h1: &CMatrix, q: &CMatrix) -> Vec<f64> {
    let hq = h1 * q;
    (0..h1.nrows())
        .map(|n| {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..h1.ncols() {
                acc += hq[(n, j)] * h1[(n, j)].conj();
            }
            acc.re.max(0.0)
        })
        .collect()
}

/// Noise-plus-SI share of an amplifying element's output power.
pub(crate) fn element_noise_power(alpha: f64, incident: f64, noise: &NoiseModel) -> Result<f64> {
    let a2 = alpha * alpha;
    let loop_gain = a2 * noise.sigma_si2_surface;
    if loop_gain >= 1.0 {
        return Err(Error::UnstableLoop { loop_gain });
    }
    Ok(a2 * (noise.sigma_r2 + loop_gain * incident) / (1.0 - loop_gain))
}

/// Receive noise covariance: thermal floor plus amplified noise and SI
/// forwarded by the active elements.
pub fn noise_covariance(
    h2: &CMatrix,
    p: &CoeffProfile,
    incident_powers: &[f64],
    noise: &NoiseModel,
) -> Result<CMatrix> {
    let nr = h2.nrows();
    let mut c = CMatrix::identity(nr, nr) * C64::new(noise.receiver_noise_power(), 0.0);
    for n in p.active_set() {
        let w = element_noise_power(p.amplitudes()[n], incident_powers[n], noise)?;
        let col = h2.column(n);
        for i in 0..nr {
            for j in 0..nr {
                c[(i, j)] += col[i] * col[j].conj() * w;
            }
        }
    }
    Ok(c)
}

/// End-to-end channel `h2 diag(coeffs) h1`.
pub fn cascaded_channel(h1: &CMatrix, h2: &CMatrix, p: &CoeffProfile) -> CMatrix {
    let mut scaled = h1.clone();
    for n in 0..p.len() {
        let c = p.coefficient(n);
        for j in 0..h1.ncols() {
            scaled[(n, j)] *= c;
        }
    }
    h2 * scaled
}

/// `log2 det(C + G Q G^H) - log2 det(C)`.
pub fn mutual_information(g: &CMatrix, q: &CMatrix, c: &CMatrix) -> Result<f64> {
    let ld_c = log2_det_hpd(c).ok_or(Error::SingularNoise)?;
    let total = c + sandwich(g, q);
    let ld_t = log2_det_hpd(&total).ok_or(Error::SingularNoise)?;
    Ok((ld_t - ld_c).max(0.0))
}

pub(crate) fn check_covariance(q: &CMatrix, nt: usize) -> Result<()> {
    if q.nrows() != nt || q.ncols() != nt {
        return Err(Error::invalid("transmit covariance has the wrong size"));
    }
    let scale = crate::linalg::trace_re(q).abs().max(1e-300);
    if hermitian_defect(q) > 1e-9 * scale {
        return Err(Error::invalid("transmit covariance is not Hermitian"));
    }
    if (0..nt).any(|i| q[(i, i)].re < -1e-12 * scale) {
        return Err(Error::invalid("transmit covariance has a negative diagonal"));
    }
    Ok(())
}

/// Spectral efficiency of the surface-assisted link for covariance `q`,
/// with incident powers evaluated from the same `q`.
pub fn spectral_efficiency(
    h1: &CMatrix,
    h2: &CMatrix,
    p: &CoeffProfile,
    q: &CMatrix,
    noise: &NoiseModel,
) -> Result<f64> {
    check_covariance(q, h1.ncols())?;
    if noise.receiver_noise_power() <= 0.0 {
        return Err(Error::SingularNoise);
    }
    let s = incident_powers(h1, q);
    let c = noise_covariance(h2, p, &s, noise)?;
    let g = cascaded_channel(h1, h2, p);
    mutual_information(&g, q, &c)
}

/// Water-filling allocation over parallel modes with unit noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Per-mode powers, aligned with the input gains.
    pub powers: Vec<f64>,
    /// Water level mu.
    pub level: f64,
}

impl Allocation {
    pub fn capacity(&self, gains: &[f64]) -> f64 {
        gains
            .iter()
            .zip(&self.powers)
            .map(|(g, p)| (1.0 + g * p).log2())
            .sum()
    }

    /// Worst complementary-slackness / dual-feasibility violation.
    pub fn kkt_residual(&self, gains: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (g, p) in gains.iter().zip(&self.powers) {
            if *g <= 0.0 {
                worst = worst.max(p.abs());
                continue;
            }
            let slack = self.level - 1.0 / g;
            if *p > 0.0 {
                worst = worst.max((p * (slack - p)).abs());
            } else {
                worst = worst.max(slack.max(0.0));
            }
        }
        worst
    }
}

/// `p_i = max(0, mu - 1/g_i)` with `sum p_i = power`.
pub fn water_fill_levels(gains: &[f64], power: f64) -> Allocation {
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let mut powers = vec![0.0; gains.len()];
    if order.is_empty() || !(power > 0.0) {
        return Allocation { powers, level: 0.0 };
    }
    let mut level = 0.0;
    let mut used = order.len();
    while used > 0 {
        let inv_sum: f64 = order[..used].iter().map(|&i| 1.0 / gains[i]).sum();
        level = (power + inv_sum) / used as f64;
        if level - 1.0 / gains[order[used - 1]] > 0.0 {
            break;
        }
        used -= 1;
    }
    for &i in &order[..used] {
        powers[i] = (level - 1.0 / gains[i]).max(0.0);
    }
    Allocation { powers, level }
}

#[derive(Debug, Clone)]
pub struct WaterFilling {
    pub covariance: CMatrix,
    /// Whitened eigen-mode gains, descending.
    pub gains: Vec<f64>,
    pub allocation: Allocation,
    /// Set when the channel carries no energy; the covariance is then zero.
    pub zero_channel: bool,
}

impl WaterFilling {
    pub fn capacity(&self) -> f64 {
        self.allocation.capacity(&self.gains)
    }
}

/// Capacity-achieving covariance for `channel` under noise covariance
/// `noise_cov` and total power `power`.
pub fn water_filling(channel: &CMatrix, noise_cov: &CMatrix, power: f64) -> Result<WaterFilling> {
    let nt = channel.ncols();
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::invalid("water-filling power must be positive"));
    }
    let l = cholesky_lower(noise_cov).ok_or(Error::SingularNoise)?;
    let whitened = l
        .solve_lower_triangular(channel)
        .ok_or(Error::SingularNoise)?;
    if whitened.iter().all(|z| z.norm_sqr() == 0.0) {
        return Ok(WaterFilling {
            covariance: CMatrix::zeros(nt, nt),
            gains: Vec::new(),
            allocation: Allocation {
                powers: Vec::new(),
                level: 0.0,
            },
            zero_channel: true,
        });
    }
    let svd = nalgebra::linalg::SVD::new(whitened, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let gains: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i].powi(2)).collect();
    let allocation = water_fill_levels(&gains, power);
    let mut q = CMatrix::zeros(nt, nt);
    for (k, &i) in idx.iter().enumerate() {
        let p = allocation.powers[k];
        if p <= 0.0 {
            continue;
        }
        // v_i = conj of row i of V^H
        let v: Vec<C64> = (0..nt).map(|j| v_t[(i, j)].conj()).collect();
        for r in 0..nt {
            for c in 0..nt {
                q[(r, c)] += v[r] * v[c].conj() * p;
            }
        }
    }
    let q = (&q + q.adjoint()) * C64::new(0.5, 0.0);
    Ok(WaterFilling {
        covariance: q,
        gains,
        allocation,
        zero_channel: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerScheme {
    Ris,
    Hrris,
    Relay,
}

/// Total consumed power: BS transmit (through the PA), fixed circuits, per
/// element circuits and the power radiated by amplifying elements.
pub fn total_power_consumption(
    scheme: PowerScheme,
    n_passive: usize,
    n_active: usize,
    active_radiated: f64,
    pm: &PowerModel,
) -> f64 {
    let per_active = match scheme {
        PowerScheme::Ris | PowerScheme::Hrris => pm.active_element_circuit,
        PowerScheme::Relay => pm.relay_element,
    };
    pm.bs_tx_power / pm.pa_efficiency
        + pm.bs_circuit
        + pm.ms_circuit
        + n_passive as f64 * pm.passive_element
        + n_active as f64 * per_active
        + active_radiated / pm.pa_efficiency
}

/// bits/joule.
pub fn energy_efficiency(se: f64, bandwidth_hz: f64, total_power: f64) -> f64 {
    bandwidth_hz * se / total_power
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::PhaseCodebook;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn default_noise_floor() {
        let n = NoiseModel::default();
        assert!((n.receiver_noise_power() / 1e-13 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_covariance_examples() {
        let noise = NoiseModel {
            sigma_r2: 1.0,
            sigma_si2_surface: 0.0,
            ..NoiseModel::default()
        };
        let sigma2 = noise.receiver_noise_power();
        let h2 = CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.3), c(0.0), c(0.7)]);
        let passive = CoeffProfile::passive_zero(2);
        let cov = noise_covariance(&h2, &passive, &[1.0, 1.0], &noise).unwrap();
        assert_eq!(cov, CMatrix::identity(2, 2) * c(sigma2));

        let book = PhaseCodebook::new(2);
        let p = CoeffProfile::new(vec![2.0, 1.0], vec![0.0, 0.0], &[0], &book, 1).unwrap();
        let cov = noise_covariance(&h2, &p, &[0.5, 0.5], &noise).unwrap();
        let expect = CMatrix::identity(2, 2) * c(sigma2)
            + CMatrix::from_row_slice(2, 2, &[c(4.0), c(0.0), c(0.0), c(0.0)]);
        assert!((cov - expect).norm() < 1e-12);
    }

    #[test]
    fn scalar_se() {
        let noise = NoiseModel {
            noise_psd_dbm_hz: 0.0,
            bandwidth_hz: 1e3, // 1 W
            ..NoiseModel::default()
        };
        let h1 = CMatrix::from_element(1, 1, c(3f64.sqrt()));
        let h2 = CMatrix::from_element(1, 1, c(1.0));
        let q = CMatrix::from_element(1, 1, c(1.0));
        let se = spectral_efficiency(&h1, &h2, &CoeffProfile::passive_zero(1), &q, &noise).unwrap();
        assert!((se - 2.0).abs() < 1e-12);

        let h0 = CMatrix::zeros(1, 1);
        let se0 = spectral_efficiency(&h1, &h0, &CoeffProfile::passive_zero(1), &q, &noise).unwrap();
        assert_eq!(se0, 0.0);
    }

    #[test]
    fn water_filling_worked_example() {
        let alloc = water_fill_levels(&[4.0, 1.0], 1.0);
        assert!((alloc.level - 1.125).abs() < 1e-15);
        assert!((alloc.powers[0] - 0.875).abs() < 1e-15);
        assert!((alloc.powers[1] - 0.125).abs() < 1e-15);
        assert!((alloc.capacity(&[4.0, 1.0]) - 2.33985).abs() < 1e-5);
    }

    #[test]
    fn water_filling_matrix_form() {
        // diag channel with gains 4 and 1 under unit noise
        let h = CMatrix::from_row_slice(2, 2, &[c(2.0), c(0.0), c(0.0), c(1.0)]);
        let wf = water_filling(&h, &CMatrix::identity(2, 2), 1.0).unwrap();
        assert!((wf.capacity() - 2.339850002884624).abs() < 1e-12);
        assert!((wf.covariance[(0, 0)].re - 0.875).abs() < 1e-12);
        let mi = mutual_information(&h, &wf.covariance, &CMatrix::identity(2, 2)).unwrap();
        assert!((mi - wf.capacity()).abs() < 1e-12);
    }

    #[test]
    fn water_filling_single_mode_and_low_power() {
        let alloc = water_fill_levels(&[2.5], 0.3);
        assert!((alloc.powers[0] - 0.3).abs() < 1e-15);
        let alloc = water_fill_levels(&[4.0, 1.0], 1e-9);
        assert!(alloc.powers[1] == 0.0 && alloc.powers[0] > 0.0);
        assert!(alloc.capacity(&[4.0, 1.0]) < 1e-8);
    }

    #[test]
    fn water_filling_zero_channel() {
        let wf = water_filling(&CMatrix::zeros(2, 3), &CMatrix::identity(2, 2), 1.0).unwrap();
        assert!(wf.zero_channel);
        assert_eq!(wf.covariance, CMatrix::zeros(3, 3));
    }

    #[test]
    fn power_ledger_examples() {
        let pm = PowerModel::default();
        let h = total_power_consumption(PowerScheme::Hrris, 96, 4, 1e-3, &pm);
        assert!((h - 1.862).abs() < 1e-12);
        let r = total_power_consumption(PowerScheme::Ris, 100, 0, 0.0, &pm);
        assert!((r - 1.8).abs() < 1e-12);
        let y = total_power_consumption(PowerScheme::Relay, 0, 4, 1e-3, &pm);
        assert!((y - 1.702).abs() < 1e-12);
    }

    #[test]
    fn power_ledger_slopes() {
        let pm = PowerModel::default();
        let base = total_power_consumption(PowerScheme::Hrris, 10, 3, 0.0, &pm);
        let d_pass = total_power_consumption(PowerScheme::Hrris, 11, 3, 0.0, &pm) - base;
        let d_act = total_power_consumption(PowerScheme::Hrris, 10, 4, 0.0, &pm) - base;
        let d_rel = total_power_consumption(PowerScheme::Relay, 10, 4, 0.0, &pm)
            - total_power_consumption(PowerScheme::Relay, 10, 3, 0.0, &pm);
        assert!((d_pass - 5e-3).abs() < 1e-12);
        assert!((d_act - 20e-3).abs() < 1e-12);
        assert!((d_rel - 100e-3).abs() < 1e-12);
    }

    #[test]
    fn energy_efficiency_examples() {
        assert_eq!(energy_efficiency(10.0, 1e7, 2.0), 5e7);
        assert_eq!(energy_efficiency(0.0, 1e7, 2.0), 0.0);
        assert_eq!(energy_efficiency(3.0, 1e7, 4.0) * 2.0, energy_efficiency(3.0, 1e7, 2.0));
    }

    proptest! {
        #[test]
        fn water_filling_kkt(gains in proptest::collection::vec(0.0f64..100.0, 1..8), power in 1e-6f64..50.0) {
            let alloc = water_fill_levels(&gains, power);
            let total: f64 = alloc.powers.iter().sum();
            if gains.iter().any(|g| *g > 0.0) {
                prop_assert!((total - power).abs() <= 1e-9 * power.max(1.0));
            }
            prop_assert!(alloc.kkt_residual(&gains) < 1e-9);
            prop_assert!(alloc.powers.iter().all(|p| *p >= 0.0));
        }
    }
}
