//! Coordinate-ascent core shared by the passive, fixed and dynamic optimizers.
//!
//! One outer iteration is a sweep over the elements in ascending index order
//! followed by a guarded water-filling update of the BS covariance. During a
//! sweep the covariance is frozen, so the incident powers are constants and
//! every single-element change is a rank-one perturbation of the cascaded
//! channel. Candidates are scored through the quadratic-form expansion below
//! instead of rebuilding `G Q G^H`.
//!
//! With a total budget, an active element may take power from the other
//! active elements: their amplitudes are scaled by a common factor `c <= 1`
//! so that the total output power stays on the budget.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{log2_det_hpd_in_place, CMatrix, C64, ZERO};
use crate::rate::{incident_powers, spectral_efficiency, water_filling, NoiseModel};
use crate::surface::{
    amplitude_for_power, element_output_power, CoeffProfile, PhaseCodebook, BUDGET_REL_TOL,
};

use super::{AoConfig, OptResult};

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const GOLDEN_REL_TOL: f64 = 1e-5;
const GOLDEN_MAX_ITERS: usize = 40;

/// Optimization problem: channels, noise, BS power and the active budget.
pub(crate) struct Engine<'a> {
    pub h1: &'a CMatrix,
    pub h2: &'a CMatrix,
    pub noise: &'a NoiseModel,
    pub sigma2: f64,
    pub bs_power: f64,
    pub book: PhaseCodebook,
    pub budget: f64,
    pub per_element: bool,
    pub amplitude_grid: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct State {
    pub profile: CoeffProfile,
    pub q: CMatrix,
    pub se: f64,
}

/// Noise-plus-SI power forwarded by an element at amplitude `alpha`.
#[inline]
fn forwarded_noise(alpha: f64, s: f64, sigma_r2: f64, sigma_si2: f64) -> f64 {
    let a2 = alpha * alpha;
    let lg = a2 * sigma_si2;
    a2 * (sigma_r2 + lg * s) / (1.0 - lg)
}

#[inline]
fn output_power(alpha: f64, s: f64, sigma_r2: f64, sigma_si2: f64) -> f64 {
    let a2 = alpha * alpha;
    a2 * (s + sigma_r2) / (1.0 - a2 * sigma_si2)
}

/// Common amplitude scale `c` in `[0, 1]` such that the listed elements emit
/// at most `target` in total. Each entry holds `(alpha^2 (s + sigma_r2), alpha^2 sigma_si2)`.
fn squeeze_factor(terms: &[(f64, f64)], target: f64) -> f64 {
    let at_one: f64 = terms.iter().map(|(u, v)| u / (1.0 - v)).sum();
    if at_one <= target {
        return 1.0;
    }
    if target <= 0.0 {
        return 0.0;
    }
    let lin: f64 = terms.iter().map(|(u, _)| u).sum();
    // f(x) = sum x u / (1 - x v) - target is increasing and convex in x = c^2,
    // so Newton from the linearized root approaches from the right.
    let mut x = (target / lin).min(1.0);
    for _ in 0..60 {
        let mut f = -target;
        let mut df = 0.0;
        for (u, v) in terms {
            let d = 1.0 - x * v;
            f += x * u / d;
            df += u / (d * d);
        }
        if f <= 1e-15 * target {
            break;
        }
        x -= f / df;
    }
    // guard against a final step landing just right of the root
    let total = |x: f64| terms.iter().map(|(u, v)| x * u / (1.0 - x * v)).sum::<f64>();
    while total(x) > target * (1.0 + 0.5 * BUDGET_REL_TOL) {
        x *= 1.0 - 1e-13;
    }
    x.clamp(0.0, 1.0).sqrt()
}

struct Other {
    idx: usize,
    alpha: f64,
    s: f64,
    a: Vec<C64>,
}

/// Everything needed to score candidates for one element.
struct ElementCtx<'e> {
    nr: usize,
    sigma2: f64,
    sigma_r2: f64,
    sigma_si2: f64,
    a: Vec<C64>,
    s_n: f64,
    m_ff: Vec<C64>,
    m_fy: Vec<C64>,
    m_yy: Vec<C64>,
    z_f: Vec<C64>,
    z_y: Vec<C64>,
    /// Noise covariance of the other active elements at `c = 1` (no floor).
    c_oth: Vec<C64>,
    others: &'e [Other],
    squeeze_terms: Vec<(f64, f64)>,
    buf: Vec<C64>,
    cbuf: Vec<C64>,
}

impl ElementCtx<'_> {
    fn eval(&mut self, c: f64, delta: C64, w_n: f64) -> f64 {
        let nr = self.nr;
        let d2 = delta.norm_sqr();
        // receive-side noise
        if c == 1.0 {
            self.cbuf.copy_from_slice(&self.c_oth);
        } else {
            self.cbuf.iter_mut().for_each(|z| *z = ZERO);
            for o in self.others {
                let w = forwarded_noise(c * o.alpha, o.s, self.sigma_r2, self.sigma_si2);
                if w == 0.0 {
                    continue;
                }
                for i in 0..nr {
                    for j in 0..nr {
                        self.cbuf[i * nr + j] += o.a[i] * o.a[j].conj() * w;
                    }
                }
            }
        }
        for i in 0..nr {
            self.cbuf[i * nr + i] += self.sigma2;
            for j in 0..nr {
                self.cbuf[i * nr + j] += self.a[i] * self.a[j].conj() * w_n;
            }
        }
        for i in 0..nr {
            let zi = self.z_f[i] + self.z_y[i] * c;
            for j in 0..nr {
                let zj = self.z_f[j] + self.z_y[j] * c;
                let k = i * nr + j;
                let kt = j * nr + i;
                let m = self.m_ff[k]
                    + (self.m_fy[k] + self.m_fy[kt].conj()) * c
                    + self.m_yy[k] * (c * c)
                    + delta * self.a[i] * zj.conj()
                    + delta.conj() * zi * self.a[j].conj()
                    + self.a[i] * self.a[j].conj() * (d2 * self.s_n);
                self.buf[k] = self.cbuf[k] + m;
            }
        }
        let ld_total = log2_det_hpd_in_place(&mut self.buf, nr);
        let ld_noise = log2_det_hpd_in_place(&mut self.cbuf, nr);
        match (ld_total, ld_noise) {
            (Some(t), Some(n)) => (t - n).max(0.0),
            _ => f64::NEG_INFINITY,
        }
    }
}

fn mat_flat(m: &CMatrix) -> Vec<C64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

impl<'a> Engine<'a> {
    pub fn n(&self) -> usize {
        self.h1.nrows()
    }

    pub fn evaluate(&self, profile: &CoeffProfile, q: &CMatrix) -> Result<f64> {
        spectral_efficiency(self.h1, self.h2, profile, q, self.noise)
    }

    fn output(&self, alpha: f64, s: f64) -> Result<f64> {
        element_output_power(alpha, s, self.noise.sigma_r2, self.noise.sigma_si2_surface)
    }

    /// Scales active amplitudes down until the profile meets the budget for
    /// incident powers `s`.
    pub fn project_budget(&self, profile: &mut CoeffProfile, s: &[f64]) -> Result<()> {
        let active = profile.active_set();
        if active.is_empty() {
            return Ok(());
        }
        let (sr2, si2) = (self.noise.sigma_r2, self.noise.sigma_si2_surface);
        if self.per_element {
            for &m in &active {
                let alpha = profile.amplitudes()[m];
                if self.output(alpha, s[m])? > self.budget {
                    let cap = amplitude_for_power(self.budget, s[m], sr2, si2);
                    profile.set_amplitude(m, cap.min(alpha));
                }
            }
            return Ok(());
        }
        let mut terms = Vec::with_capacity(active.len());
        for &m in &active {
            let alpha = profile.amplitudes()[m];
            self.output(alpha, s[m])?;
            terms.push((alpha * alpha * (s[m] + sr2), alpha * alpha * si2));
        }
        let c = squeeze_factor(&terms, self.budget);
        if c < 1.0 {
            for &m in &active {
                let alpha = profile.amplitudes()[m];
                profile.set_amplitude(m, c * alpha);
            }
        }
        Ok(())
    }

    /// Water-filling candidate for the BS covariance, kept only if the
    /// self-consistent SE does not drop.
    pub fn guarded_q_update(&self, st: &State) -> Result<(State, bool)> {
        let s_prev = incident_powers(self.h1, &st.q);
        let c = crate::rate::noise_covariance(self.h2, &st.profile, &s_prev, self.noise)?;
        let g = crate::rate::cascaded_channel(self.h1, self.h2, &st.profile);
        let wf = water_filling(&g, &c, self.bs_power)?;
        if wf.zero_channel {
            return Ok((st.clone(), false));
        }
        let q = wf.covariance;
        let s_new = incident_powers(self.h1, &q);
        let mut profile = st.profile.clone();
        self.project_budget(&mut profile, &s_new)?;
        let se = self.evaluate(&profile, &q)?;
        if se >= st.se {
            Ok((State { profile, q, se }, true))
        } else {
            Ok((st.clone(), false))
        }
    }

    /// One coordinate-ascent pass over all elements with the covariance fixed.
    pub fn sweep(&self, st: &mut State) -> Result<()> {
        let (nr, nt, n) = (self.h2.nrows(), self.h1.ncols(), self.n());
        let (sr2, si2) = (self.noise.sigma_r2, self.noise.sigma_si2_surface);
        let q = st.q.clone();
        let s = incident_powers(self.h1, &q);

        let cols: Vec<Vec<C64>> = (0..n)
            .map(|m| self.h2.column(m).iter().copied().collect())
            .collect();

        let mut g_pass = CMatrix::zeros(nr, nt);
        let mut g_act = CMatrix::zeros(nr, nt);
        for m in 0..n {
            let v = st.profile.coefficient(m);
            let target = if st.profile.is_active(m) { &mut g_act } else { &mut g_pass };
            add_rank_one(target, v, &cols[m], self.h1, m);
        }

        for idx in 0..n {
            let is_active = st.profile.is_active(idx);
            let v_old = st.profile.coefficient(idx);
            let mut f = g_pass.clone();
            let mut y = g_act.clone();
            if is_active {
                add_rank_one(&mut y, -v_old, &cols[idx], self.h1, idx);
            } else {
                add_rank_one(&mut f, -v_old, &cols[idx], self.h1, idx);
            }

            let others: Vec<Other> = st
                .profile
                .active_set()
                .into_iter()
                .filter(|&m| m != idx)
                .map(|m| Other {
                    idx: m,
                    alpha: st.profile.amplitudes()[m],
                    s: s[m],
                    a: cols[m].clone(),
                })
                .collect();
            let mut c_oth = vec![ZERO; nr * nr];
            for o in &others {
                let w = forwarded_noise(o.alpha, o.s, sr2, si2);
                for i in 0..nr {
                    for j in 0..nr {
                        c_oth[i * nr + j] += o.a[i] * o.a[j].conj() * w;
                    }
                }
            }

            let fq = &f * &q;
            let yq = &y * &q;
            let b_h: Vec<C64> = (0..nt).map(|j| self.h1[(idx, j)].conj()).collect();
            let qb = &q * nalgebra::DVector::from_vec(b_h);
            let mut ctx = ElementCtx {
                nr,
                sigma2: self.sigma2,
                sigma_r2: sr2,
                sigma_si2: si2,
                a: cols[idx].clone(),
                s_n: s[idx],
                m_ff: mat_flat(&(&fq * f.adjoint())),
                m_fy: mat_flat(&(&fq * y.adjoint())),
                m_yy: mat_flat(&(&yq * y.adjoint())),
                z_f: (&f * &qb).iter().copied().collect(),
                z_y: (&y * &qb).iter().copied().collect(),
                c_oth,
                squeeze_terms: others
                    .iter()
                    .map(|o| (o.alpha * o.alpha * (o.s + sr2), o.alpha * o.alpha * si2))
                    .collect(),
                others: &others,
                buf: vec![ZERO; nr * nr],
                cbuf: vec![ZERO; nr * nr],
            };

            let alpha_old = st.profile.amplitudes()[idx];
            let theta_old = st.profile.phases()[idx];
            let w_old = if is_active {
                forwarded_noise(alpha_old, s[idx], sr2, si2)
            } else {
                0.0
            };
            let incumbent = ctx.eval(1.0, v_old, w_old);

            let mut best = (incumbent, theta_old, alpha_old, 1.0);
            if !is_active {
                for &theta in self.book.values() {
                    if theta == theta_old {
                        continue;
                    }
                    let val = ctx.eval(1.0, C64::from_polar(1.0, theta), 0.0);
                    if val > best.0 {
                        best = (val, theta, 1.0, 1.0);
                    }
                }
            } else {
                for &theta in self.book.values() {
                    let (val, alpha, c) = self.line_search(&mut ctx, theta);
                    if val > best.0 {
                        best = (val, theta, alpha, c);
                    }
                }
            }

            let (_, theta, alpha, c) = best;
            st.profile.set_phase(idx, theta);
            if is_active {
                st.profile.set_amplitude(idx, alpha);
            }
            let v_new = st.profile.coefficient(idx);
            if c < 1.0 {
                for o in &others {
                    st.profile.set_amplitude(o.idx, c * o.alpha);
                }
                g_act = CMatrix::zeros(nr, nt);
                for o in &others {
                    add_rank_one(&mut g_act, st.profile.coefficient(o.idx), &cols[o.idx], self.h1, o.idx);
                }
                add_rank_one(&mut g_act, v_new, &cols[idx], self.h1, idx);
            } else if is_active {
                add_rank_one(&mut g_act, v_new - v_old, &cols[idx], self.h1, idx);
            } else {
                add_rank_one(&mut g_pass, v_new - v_old, &cols[idx], self.h1, idx);
            }
        }
        st.se = self.evaluate(&st.profile, &q)?;
        debug_assert!(self.budget_ok(&st.profile, &s));
        Ok(())
    }

    pub fn budget_ok(&self, profile: &CoeffProfile, s: &[f64]) -> bool {
        let limit = self.budget * (1.0 + BUDGET_REL_TOL);
        let mut total = 0.0;
        for m in profile.active_set() {
            match self.output(profile.amplitudes()[m], s[m]) {
                Ok(p) if self.per_element && p > limit => return false,
                Ok(p) => total += p,
                Err(_) => return false,
            }
        }
        self.per_element || total <= limit
    }

    /// Grid search over `[0, alpha_cap]` refined by golden-section search
    /// around the best grid point. Returns `(value, alpha, c)`.
    fn line_search(&self, ctx: &mut ElementCtx<'_>, theta: f64) -> (f64, f64, f64) {
        let (sr2, si2) = (ctx.sigma_r2, ctx.sigma_si2);
        let s_n = ctx.s_n;
        let cap = amplitude_for_power(self.budget, s_n, sr2, si2);
        let per_element = self.per_element;
        let budget = self.budget;
        let score = |ctx: &mut ElementCtx<'_>, alpha: f64| -> (f64, f64) {
            let c = if per_element {
                1.0
            } else {
                let p_n = output_power(alpha, s_n, sr2, si2);
                squeeze_factor(&ctx.squeeze_terms, budget - p_n)
            };
            let w_n = forwarded_noise(alpha, s_n, sr2, si2);
            (ctx.eval(c, C64::from_polar(alpha, theta), w_n), c)
        };
        if !(cap > 0.0) {
            let (v, c) = score(ctx, 0.0);
            return (v, 0.0, c);
        }
        let pts = self.amplitude_grid.max(2);
        let step = cap / (pts - 1) as f64;
        let mut best = (f64::NEG_INFINITY, 0.0, 1.0);
        let mut best_k = 0;
        for k in 0..pts {
            let alpha = if k == pts - 1 { cap } else { step * k as f64 };
            let (v, c) = score(ctx, alpha);
            if v > best.0 {
                best = (v, alpha, c);
                best_k = k;
            }
        }
        let mut lo = if best_k == 0 { 0.0 } else { step * (best_k - 1) as f64 };
        let mut hi = if best_k + 1 >= pts { cap } else { step * (best_k + 1) as f64 };
        let mut x1 = hi - GOLDEN * (hi - lo);
        let mut x2 = lo + GOLDEN * (hi - lo);
        let (mut f1, c1) = score(ctx, x1);
        let (mut f2, c2) = score(ctx, x2);
        for (v, x, c) in [(f1, x1, c1), (f2, x2, c2)] {
            if v > best.0 {
                best = (v, x, c);
            }
        }
        for _ in 0..GOLDEN_MAX_ITERS {
            if hi - lo <= GOLDEN_REL_TOL * cap {
                break;
            }
            if f1 >= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - GOLDEN * (hi - lo);
                let (v, c) = score(ctx, x1);
                f1 = v;
                if v > best.0 {
                    best = (v, x1, c);
                }
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + GOLDEN * (hi - lo);
                let (v, c) = score(ctx, x2);
                f2 = v;
                if v > best.0 {
                    best = (v, x2, c);
                }
            }
        }
        best
    }

    /// Full AO run from `init`: initial guarded covariance update, then
    /// alternating sweeps and covariance updates until the relative SE gain
    /// drops below the tolerance.
    pub fn run(&self, init: CoeffProfile, init_q: Option<CMatrix>, ao: &AoConfig) -> Result<OptResult> {
        if init.len() != self.n() {
            return Err(Error::invalid("initial profile has the wrong length"));
        }
        let nt = self.h1.ncols();
        let q0 = init_q.unwrap_or_else(|| {
            CMatrix::identity(nt, nt) * C64::new(self.bs_power / nt as f64, 0.0)
        });
        let mut profile = init;
        self.project_budget(&mut profile, &incident_powers(self.h1, &q0))?;
        let se0 = self.evaluate(&profile, &q0)?;
        let (mut st, _) = self.guarded_q_update(&State {
            profile,
            q: q0,
            se: se0,
        })?;
        let mut trace = vec![st.se];
        let mut converged = false;
        let mut iterations = 0;
        for _ in 0..ao.max_outer_iters {
            iterations += 1;
            let before = st.se;
            self.sweep(&mut st)?;
            let (next, _) = self.guarded_q_update(&st)?;
            st = next;
            trace.push(st.se);
            if st.se - before <= ao.rel_tolerance * before.abs() {
                converged = true;
                break;
            }
        }
        let s = incident_powers(self.h1, &st.q);
        let mut budget_used = 0.0;
        for m in st.profile.active_set() {
            budget_used += self.output(st.profile.amplitudes()[m], s[m])?;
        }
        Ok(OptResult {
            profile: st.profile,
            q: st.q,
            se: st.se,
            trace,
            converged,
            iterations,
            active_power: budget_used,
        })
    }

    /// Best of the primary start and `ao.restarts` random-phase starts.
    pub fn run_with_restarts<R: Rng + ?Sized>(
        &self,
        init: CoeffProfile,
        init_q: Option<CMatrix>,
        ao: &AoConfig,
        rng: &mut R,
    ) -> Result<OptResult> {
        let active = init.active_set();
        let mut best = self.run(init, init_q, ao)?;
        for _ in 0..ao.restarts {
            let start = random_profile(self.n(), &active, &self.book, rng);
            let cand = self.run(start, None, ao)?;
            if cand.se > best.se {
                best = cand;
            }
        }
        Ok(best)
    }
}

pub(crate) fn random_profile<R: Rng + ?Sized>(
    n: usize,
    active: &[usize],
    book: &PhaseCodebook,
    rng: &mut R,
) -> CoeffProfile {
    let mut p = CoeffProfile::passive_zero(n);
    for m in 0..n {
        let k = rng.random_range(0..book.len());
        p.set_phase(m, book.values()[k]);
    }
    for &m in active {
        p.activate(m);
    }
    p
}

fn add_rank_one(g: &mut CMatrix, v: C64, col: &[C64], h1: &CMatrix, row: usize) {
    if v == ZERO {
        return;
    }
    for i in 0..g.nrows() {
        let ai = col[i] * v;
        for j in 0..g.ncols() {
            g[(i, j)] += ai * h1[(row, j)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squeeze_meets_target() {
        let terms = vec![(4e-4, 1e-4), (2e-4, 5e-5), (1e-6, 0.0)];
        let c = squeeze_factor(&terms, 3e-4);
        let total: f64 = terms
            .iter()
            .map(|(u, v)| c * c * u / (1.0 - c * c * v))
            .sum();
        assert!(total <= 3e-4 * (1.0 + 1e-12));
        assert!(total >= 3e-4 * (1.0 - 1e-9));
        assert_eq!(squeeze_factor(&terms, 1.0), 1.0);
        assert_eq!(squeeze_factor(&terms, 0.0), 0.0);
    }

    #[test]
    fn forwarded_noise_matches_definition() {
        let (a, s, r, si) = (3.0, 2e-3, 1e-3, 1e-2);
        let p = output_power(a, s, r, si);
        let w = forwarded_noise(a, s, r, si);
        assert!((w - (p - a * a * s)).abs() < 1e-15);
    }
}
