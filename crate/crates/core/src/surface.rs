//! Surface coefficient model: the diagonal reflection/relaying matrix, the
//! b-bit phase codebook and the power drawn by amplifying elements.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::rate::NoiseModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Architecture {
    /// Active positions wired at manufacture.
    Fixed { active_indices: Vec<usize> },
    /// Up to K chains switched onto elements per channel realization.
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    pub n_elements: usize,
    /// Number of RF-PA chains (K).
    pub n_active_chains: usize,
    pub architecture: Architecture,
    pub phase_bits: u32,
    /// Power budget for active processing, in watts.
    pub active_power_budget: f64,
    /// Apply the budget to each active element instead of to their sum.
    pub per_element_budget: bool,
}

impl SurfaceConfig {
    pub fn passive(n_elements: usize, phase_bits: u32) -> Self {
        Self {
            n_elements,
            n_active_chains: 0,
            architecture: Architecture::Fixed {
                active_indices: Vec::new(),
            },
            phase_bits,
            active_power_budget: 0.0,
            per_element_budget: false,
        }
    }

    /// Fixed architecture with the first `k` linear indices active.
    pub fn fixed_first(n_elements: usize, k: usize, phase_bits: u32, budget: f64) -> Self {
        Self {
            n_elements,
            n_active_chains: k,
            architecture: Architecture::Fixed {
                active_indices: (0..k).collect(),
            },
            phase_bits,
            active_power_budget: budget,
            per_element_budget: false,
        }
    }

    pub fn dynamic(n_elements: usize, k: usize, phase_bits: u32, budget: f64) -> Self {
        Self {
            n_elements,
            n_active_chains: k,
            architecture: Architecture::Dynamic,
            phase_bits,
            active_power_budget: budget,
            per_element_budget: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_active_chains > self.n_elements {
            return Err(Error::invalid("more active chains than elements"));
        }
        if self.phase_bits == 0 || self.phase_bits > 16 {
            return Err(Error::invalid("phase resolution must be between 1 and 16 bits"));
        }
        if !(self.active_power_budget >= 0.0) || !self.active_power_budget.is_finite() {
            return Err(Error::invalid("active power budget must be a non-negative number"));
        }
        if let Architecture::Fixed { active_indices } = &self.architecture {
            if active_indices.len() != self.n_active_chains {
                return Err(Error::invalid(format!(
                    "fixed architecture lists {} active indices for K = {}",
                    active_indices.len(),
                    self.n_active_chains
                )));
            }
            let mut seen = vec![false; self.n_elements];
            for &i in active_indices {
                if i >= self.n_elements || seen[i] {
                    return Err(Error::invalid(format!("bad or repeated active index {i}")));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }

    pub fn codebook(&self) -> PhaseCodebook {
        PhaseCodebook::new(self.phase_bits)
    }
}

/// `2^b` phases uniformly spaced on `[0, 2pi)` starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCodebook {
    values: Vec<f64>,
}

impl PhaseCodebook {
    pub fn new(bits: u32) -> Self {
        assert!((1..=16).contains(&bits), "phase resolution out of range");
        let levels = 1usize << bits;
        let values = (0..levels).map(|i| TAU * i as f64 / levels as f64).collect();
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.values.iter().any(|&v| v == theta)
    }
}

/// Nearest codebook phase in circular distance; ties go to the smaller value.
pub fn quantize_phase(theta: f64, book: &PhaseCodebook) -> f64 {
    let t = theta.rem_euclid(TAU);
    let mut best = book.values[0];
    let mut best_d = f64::INFINITY;
    for &v in &book.values {
        let raw = (t - v).abs();
        let d = raw.min(TAU - raw);
        if d < best_d {
            best_d = d;
            best = v;
        }
    }
    best
}

/// Per-element amplitudes and phases plus the set of amplifying elements.
///
/// Passive elements always carry amplitude exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffProfile {
    amplitudes: Vec<f64>,
    phases: Vec<f64>,
    active: Vec<bool>,
}

impl CoeffProfile {
    pub fn new(
        amplitudes: Vec<f64>,
        phases: Vec<f64>,
        active_set: &[usize],
        book: &PhaseCodebook,
        max_active: usize,
    ) -> Result<Self> {
        let n = amplitudes.len();
        if phases.len() != n {
            return Err(Error::invalid("amplitude and phase vectors differ in length"));
        }
        let mut active = vec![false; n];
        for &i in active_set {
            if i >= n || active[i] {
                return Err(Error::invalid(format!("bad or repeated active index {i}")));
            }
            active[i] = true;
        }
        if active_set.len() > max_active {
            return Err(Error::invalid(format!(
                "{} active elements exceed the {} available chains",
                active_set.len(),
                max_active
            )));
        }
        for i in 0..n {
            let a = amplitudes[i];
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::invalid(format!("amplitude {a} at element {i}")));
            }
            if !active[i] && a != 1.0 {
                return Err(Error::invalid(format!(
                    "passive element {i} has amplitude {a}, expected exactly 1"
                )));
            }
            if !book.contains(phases[i]) {
                return Err(Error::invalid(format!(
                    "phase {} at element {i} is not a codebook value",
                    phases[i]
                )));
            }
        }
        Ok(Self {
            amplitudes,
            phases,
            active,
        })
    }

    /// All elements passive with phase zero.
    pub fn passive_zero(n: usize) -> Self {
        Self {
            amplitudes: vec![1.0; n],
            phases: vec![0.0; n],
            active: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn is_active(&self, n: usize) -> bool {
        self.active[n]
    }

    pub fn active_set(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn coefficient(&self, n: usize) -> C64 {
        C64::from_polar(self.amplitudes[n], self.phases[n])
    }

    pub fn coefficients(&self) -> Vec<C64> {
        (0..self.len()).map(|n| self.coefficient(n)).collect()
    }

    pub(crate) fn set_phase(&mut self, n: usize, theta: f64) {
        self.phases[n] = theta;
    }

    pub(crate) fn set_amplitude(&mut self, n: usize, alpha: f64) {
        debug_assert!(self.active[n] || alpha == 1.0);
        self.amplitudes[n] = alpha;
    }

    /// Marks `n` active keeping its current amplitude.
    pub(crate) fn activate(&mut self, n: usize) {
        self.active[n] = true;
    }

    /// Marks `n` passive and pins its amplitude to one.
    pub(crate) fn deactivate(&mut self, n: usize) {
        self.active[n] = false;
        self.amplitudes[n] = 1.0;
    }
}

/// Diagonal coefficient matrix `diag(alpha_n e^{j theta_n})`.
pub fn coeff_matrix(p: &CoeffProfile) -> CMatrix {
    let n = p.len();
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = p.coefficient(i);
    }
    m
}

/// Steady-state output power of an amplifying element whose own output leaks
/// back into its input with gain `sigma_si2`:
/// `p = alpha^2 (s + sigma_r2 + sigma_si2 p)`.
pub fn element_output_power(alpha: f64, incident_power: f64, sigma_r2: f64, sigma_si2: f64) -> Result<f64> {
    let a2 = alpha * alpha;
    let loop_gain = a2 * sigma_si2;
    if loop_gain >= 1.0 {
        return Err(Error::UnstableLoop { loop_gain });
    }
    Ok(a2 * (incident_power + sigma_r2) / (1.0 - loop_gain))
}

/// Amplitude whose steady-state output power equals `power`.
pub fn amplitude_for_power(power: f64, incident_power: f64, sigma_r2: f64, sigma_si2: f64) -> f64 {
    if power <= 0.0 {
        return 0.0;
    }
    (power / (incident_power + sigma_r2 + power * sigma_si2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetStatus {
    pub feasible: bool,
    pub total_active_power: f64,
}

pub(crate) const BUDGET_REL_TOL: f64 = 1e-12;

pub fn budget_check(
    p: &CoeffProfile,
    incident_powers: &[f64],
    noise: &NoiseModel,
    cfg: &SurfaceConfig,
) -> Result<BudgetStatus> {
    if incident_powers.len() != p.len() {
        return Err(Error::invalid("incident power vector length mismatch"));
    }
    let limit = cfg.active_power_budget * (1.0 + BUDGET_REL_TOL);
    let mut total = 0.0;
    let mut each_ok = true;
    for n in p.active_set() {
        let out = element_output_power(
            p.amplitudes[n],
            incident_powers[n],
            noise.sigma_r2,
            noise.sigma_si2_surface,
        )?;
        each_ok &= out <= limit;
        total += out;
    }
    let feasible = if cfg.per_element_budget {
        each_ok
    } else {
        total <= limit
    };
    Ok(BudgetStatus {
        feasible,
        total_active_power: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn quantize_examples() {
        let book = PhaseCodebook::new(2);
        assert_eq!(quantize_phase(0.4, &book), 0.0);
        assert_eq!(quantize_phase(2.0, &book), FRAC_PI_2);
        assert_eq!(quantize_phase(6.0, &book), 0.0);
        // midway between 0 and pi/2
        assert_eq!(quantize_phase(PI / 4.0, &book), 0.0);
        assert_eq!(quantize_phase(-0.1, &book), 0.0);
    }

    #[test]
    fn codebook_layout() {
        let book = PhaseCodebook::new(2);
        assert_eq!(book.values(), &[0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2]);
    }

    #[test]
    fn coeff_matrix_examples() {
        let book = PhaseCodebook::new(2);
        let ident = coeff_matrix(&CoeffProfile::passive_zero(3));
        assert_eq!(ident, CMatrix::identity(3, 3));

        let p = CoeffProfile::new(vec![2.0, 1.0], vec![PI, 0.0], &[0], &book, 1).unwrap();
        let m = coeff_matrix(&p);
        assert!((m[(0, 0)] - C64::new(-2.0, 0.0)).norm() < 1e-15);
        assert_eq!(m[(1, 1)], C64::new(1.0, 0.0));
        assert_eq!(m[(0, 1)], C64::new(0.0, 0.0));

        let bad = CoeffProfile::new(vec![2.0, 1.5], vec![PI, 0.0], &[0], &book, 1);
        assert!(bad.is_err());
        let off_book = CoeffProfile::new(vec![1.0], vec![0.3], &[], &book, 0);
        assert!(off_book.is_err());
        let too_many = CoeffProfile::new(vec![2.0, 2.0], vec![0.0, 0.0], &[0, 1], &book, 1);
        assert!(too_many.is_err());
    }

    #[test]
    fn element_power_examples() {
        assert_eq!(element_output_power(0.0, 1.0, 0.5, 0.1).unwrap(), 0.0);
        let p = element_output_power(2.0, 0.5, 0.5, 0.01).unwrap();
        assert!((p - 4.0 / 0.96).abs() < 1e-12);
        assert!((p - 4.16667).abs() < 1e-5);
        assert_eq!(element_output_power(2.0, 0.7, 0.3, 0.0).unwrap(), 4.0);
        assert!(matches!(
            element_output_power(10.0, 1.0, 1.0, 0.01),
            Err(Error::UnstableLoop { .. })
        ));
    }

    #[test]
    fn amplitude_for_power_inverts() {
        let a = amplitude_for_power(1e-3, 8e-8, 1e-13, 1e-7);
        let p = element_output_power(a, 8e-8, 1e-13, 1e-7).unwrap();
        assert!((p / 1e-3 - 1.0).abs() < 1e-12);
    }

    fn noise() -> NoiseModel {
        NoiseModel {
            sigma_r2: 0.0,
            sigma_si2_surface: 0.0,
            ..NoiseModel::default()
        }
    }

    #[test]
    fn budget_examples() {
        let book = PhaseCodebook::new(2);
        let cfg = SurfaceConfig::fixed_first(3, 2, 2, 1e-3);
        let passive = CoeffProfile::passive_zero(3);
        let st = budget_check(&passive, &[1.0; 3], &noise(), &cfg).unwrap();
        assert!(st.feasible);
        assert_eq!(st.total_active_power, 0.0);

        // 0.4 mW out of each of two elements: alpha^2 * s = 4e-4
        let p = CoeffProfile::new(vec![2.0, 2.0, 1.0], vec![0.0; 3], &[0, 1], &book, 2).unwrap();
        let st = budget_check(&p, &[1e-4, 1e-4, 1e-4], &noise(), &cfg).unwrap();
        assert!(st.feasible);
        assert!((st.total_active_power - 8e-4).abs() < 1e-15);

        // stability limit alpha^2 sigma_si2 = 1
        let p = CoeffProfile::new(vec![10.0, 1.0, 1.0], vec![0.0; 3], &[0], &book, 2).unwrap();
        let loud = NoiseModel {
            sigma_si2_surface: 0.01,
            ..noise()
        };
        assert!(matches!(
            budget_check(&p, &[1e-6; 3], &loud, &cfg),
            Err(Error::UnstableLoop { .. })
        ));
    }

    #[test]
    fn per_element_budget_switch() {
        let book = PhaseCodebook::new(2);
        let mut cfg = SurfaceConfig::fixed_first(2, 2, 2, 5e-4);
        let p = CoeffProfile::new(vec![2.0, 2.0], vec![0.0; 2], &[0, 1], &book, 2).unwrap();
        let st = budget_check(&p, &[1e-4, 1e-4], &noise(), &cfg).unwrap();
        assert!(!st.feasible);
        cfg.per_element_budget = true;
        let st = budget_check(&p, &[1e-4, 1e-4], &noise(), &cfg).unwrap();
        assert!(st.feasible);
    }

    #[test]
    fn config_validation() {
        assert!(SurfaceConfig::fixed_first(4, 2, 2, 1e-3).validate().is_ok());
        let mut c = SurfaceConfig::fixed_first(4, 2, 2, 1e-3);
        c.architecture = Architecture::Fixed {
            active_indices: vec![1, 1],
        };
        assert!(c.validate().is_err());
        assert!(SurfaceConfig::dynamic(4, 5, 2, 1e-3).validate().is_err());
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent(theta in -50.0f64..50.0, bits in 1u32..6) {
            let book = PhaseCodebook::new(bits);
            let q = quantize_phase(theta, &book);
            prop_assert!(book.contains(q));
            prop_assert_eq!(quantize_phase(q, &book), q);
        }

        #[test]
        fn output_power_increasing_in_alpha(a in 0.0f64..9.0, da in 1e-6f64..0.5, s in 0.0f64..2.0) {
            let si = 0.01; // stable for alpha < 10
            let p1 = element_output_power(a, s, 0.1, si).unwrap();
            let p2 = element_output_power(a + da, s, 0.1, si).unwrap();
            prop_assert!(p2 > p1);
        }

        #[test]
        fn output_power_continuous_at_zero_si(a in 0.0f64..5.0, s in 0.0f64..2.0) {
            let base = element_output_power(a, s, 0.1, 0.0).unwrap();
            let near = element_output_power(a, s, 0.1, 1e-12).unwrap();
            prop_assert!((near - base).abs() <= 1e-9 * base.max(1e-300) + 1e-300);
        }
    }
}
