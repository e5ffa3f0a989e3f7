//! Forward–backward smoothing and EM re-estimation.
//!
//! The base process is observed on base days and latent otherwise. Each
//! spike or drop state is augmented with the number of days since the last
//! base observation, so a return to base at day `n` after a gap of `g` days
//! has the exact `g`-step Vasicek transition density from `x_{n-g}`. Gaps
//! beyond a cap (where `e^{-βg}` is negligible) and excursions that start
//! before the sample use the stationary law. The smoothed probability of
//! each gap is what weights the last base value.
//!
//! The M-step is closed form for the spike, drop and transition parameters.
//! The base parameters are fitted by weighted regression of `x_n` on
//! `x_{n-g}` with gap-dependent coefficients, profiled over `β`.

use serde::{Deserialize, Serialize};

use super::quantile;
use crate::dist::{gaussian_pdf, lognormal_pdf, norm_cdf};
use crate::error::{MrsError, Result};
use crate::model::{
    BaseParams, DropParams, Matrix3, ModelParams, Regime, SpikeParams, TransitionSpec,
};

const SIGMA_FLOOR: f64 = 1e-8;
const PRUNE: f64 = 1e-16;
const MIN_SLOT_COUNT: f64 = 5.0;
const MAX_HALVINGS: usize = 30;
const MONOTONE_SLACK: f64 = 1e-8;
const MIN_GAP_CAP: usize = 30;
const MAX_GAP_CAP: usize = 400;
const BETA_RANGE: (f64, f64) = (1e-4, 20.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

/// Gaussian mixture describing the base-regime value of one day given the
/// observations before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMixture {
    /// `(weight, mean, sd)` triples, weights summing to one.
    pub components: Vec<(f64, f64, f64)>,
}

impl BaseMixture {
    pub fn cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|&(w, m, s)| {
                if s > 0.0 {
                    w * norm_cdf((x - m) / s)
                } else if x >= m {
                    w
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.0 * c.1).sum()
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        self.components
            .iter()
            .map(|c| c.0 * (c.2 * c.2 + (c.1 - m).powi(2)))
            .sum::<f64>()
            .sqrt()
    }
}

/// Output of one forward–backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// `P(R_n = i | x_1..x_N)`.
    pub smoothed: Vec<[f64; 3]>,
    /// One-step predictive law of the base value on each day.
    pub base_predictive: Vec<BaseMixture>,
    pub loglik: f64,
    /// Expected number of days since the last base observation on the final
    /// day, given that the final day is a spike (first entry) or a drop.
    pub terminal_lag: [f64; 2],
    counts: Vec<Matrix3>,
    gaps: Vec<GapStats>,
}

/// Weighted moments of base-to-base pairs `(x_{n-g}, x_n)` sharing a gap
/// `g`; gap 0 collects days drawn from the stationary law.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct GapStats {
    w: f64,
    sx: f64,
    sp: f64,
    sxx: f64,
    spp: f64,
    sxp: f64,
}

impl GapStats {
    fn add(&mut self, w: f64, x: f64, prev: f64) {
        self.w += w;
        self.sx += w * x;
        self.sp += w * prev;
        self.sxx += w * x * x;
        self.spp += w * prev * prev;
        self.sxp += w * x * prev;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: ModelParams,
    /// Regime probabilities of the first observation.
    pub initial: [f64; 3],
    pub smoothed: Vec<[f64; 3]>,
    pub loglik_trace: Vec<f64>,
    pub classification: Vec<Regime>,
    /// Mean and standard deviation of the one-step predictive base law.
    pub base_mean: Vec<f64>,
    pub base_sd: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl CalibrationResult {
    pub fn final_loglik(&self) -> f64 {
        self.loglik_trace.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct EmParams {
    mu: f64,
    phi: f64,
    /// Stationary variance of the base process.
    var: f64,
    spike: (f64, f64),
    drop: (f64, f64),
    shifts: (f64, f64),
    matrices: Vec<Matrix3>,
    initial: [f64; 3],
}

impl EmParams {
    fn from_model(p: &ModelParams, initial: [f64; 3]) -> Self {
        EmParams {
            mu: p.base.long_run_mean(),
            phi: (-p.base.beta).exp(),
            var: p.base.stationary_variance().max(SIGMA_FLOOR * SIGMA_FLOOR),
            spike: (p.spike.mu, p.spike.sigma),
            drop: (p.drop.mu, p.drop.sigma),
            shifts: (p.spike.shift, p.drop.shift),
            matrices: p.transitions.matrices().to_vec(),
            initial,
        }
    }

    fn to_model(&self) -> Result<ModelParams> {
        let beta = -self.phi.ln();
        let sigma = (2.0 * beta * self.var).sqrt();
        Ok(ModelParams {
            base: BaseParams::new(beta * self.mu, beta, sigma)?,
            spike: SpikeParams {
                mu: self.spike.0,
                sigma: self.spike.1,
                shift: self.shifts.0,
            },
            drop: DropParams {
                mu: self.drop.0,
                sigma: self.drop.1,
                shift: self.shifts.1,
            },
            transitions: TransitionSpec::new(self.matrices.clone())?,
        })
    }

    fn matrix(&self, day: usize) -> &Matrix3 {
        &self.matrices[day % self.matrices.len()]
    }

    fn gap_cap(&self) -> usize {
        let beta = -self.phi.ln();
        let g = (-(1e-12_f64).ln() / beta).ceil();
        if g.is_finite() {
            (g as usize).clamp(MIN_GAP_CAP, MAX_GAP_CAP)
        } else {
            MAX_GAP_CAP
        }
    }

    /// Convex combination `(1 - w) self + w other`.
    fn blend(&self, other: &EmParams, w: f64) -> EmParams {
        let mix = |x: f64, y: f64| (1.0 - w) * x + w * y;
        let mut matrices = self.matrices.clone();
        for (m, o) in matrices.iter_mut().zip(&other.matrices) {
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = mix(m[i][j], o[i][j]);
                }
                normalise_row(&mut m[i]);
            }
        }
        let mut initial: [f64; 3] = std::array::from_fn(|i| mix(self.initial[i], other.initial[i]));
        normalise_row(&mut initial);
        EmParams {
            mu: mix(self.mu, other.mu),
            phi: mix(self.phi, other.phi),
            var: mix(self.var, other.var),
            spike: (
                mix(self.spike.0, other.spike.0),
                mix(self.spike.1, other.spike.1),
            ),
            drop: (
                mix(self.drop.0, other.drop.0),
                mix(self.drop.1, other.drop.1),
            ),
            shifts: self.shifts,
            matrices,
            initial,
        }
    }
}

fn normalise_row(row: &mut [f64; 3]) {
    let s: f64 = row.iter().sum();
    if s > 0.0 {
        for v in row.iter_mut() {
            *v /= s;
        }
    }
}

fn spike_density(x: f64, p: &EmParams) -> f64 {
    if x <= p.shifts.0 {
        0.0
    } else {
        lognormal_pdf(x - p.shifts.0, p.spike.0, p.spike.1)
    }
}

fn drop_density(x: f64, p: &EmParams) -> f64 {
    if x >= p.shifts.1 {
        0.0
    } else {
        lognormal_pdf(p.shifts.1 - x, p.drop.0, p.drop.1)
    }
}

/// Augmented state space: index 0 is base; spike and drop states carry the
/// number of days since the last base observation, `1..=cap`, plus a stale
/// state `cap + 1` for longer gaps or no base observation yet.
#[derive(Debug, Clone, Copy)]
struct Layout {
    cap: usize,
}

impl Layout {
    fn stale(&self) -> usize {
        self.cap + 1
    }

    fn len(&self) -> usize {
        1 + 2 * self.stale()
    }

    fn index(&self, regime: usize, lag: usize) -> usize {
        if regime == 0 {
            0
        } else {
            1 + (regime - 1) * self.stale() + (lag - 1)
        }
    }

    fn regime(&self, j: usize) -> usize {
        if j == 0 {
            0
        } else {
            1 + (j - 1) / self.stale()
        }
    }

    fn lag(&self, j: usize) -> usize {
        if j == 0 {
            0
        } else {
            1 + (j - 1) % self.stale()
        }
    }

    /// Gap to the last base value when moving to base from lag `lag`;
    /// 0 denotes the stationary law.
    fn gap_from(&self, lag: usize) -> usize {
        if lag >= self.cap {
            0
        } else {
            lag + 1
        }
    }

    fn next_lag(&self, lag: usize) -> usize {
        (lag + 1).min(self.stale())
    }
}

struct GapMoments {
    phi_pow: Vec<f64>,
    sd: Vec<f64>,
    mu: f64,
    stat_sd: f64,
}

impl GapMoments {
    fn new(p: &EmParams, cap: usize) -> Self {
        let mut phi_pow = Vec::with_capacity(cap + 1);
        let mut sd = Vec::with_capacity(cap + 1);
        let mut f = 1.0;
        for _ in 0..=cap {
            phi_pow.push(f);
            sd.push(
                (p.var * (1.0 - f * f))
                    .max(SIGMA_FLOOR * SIGMA_FLOOR)
                    .sqrt(),
            );
            f *= p.phi;
        }
        GapMoments {
            phi_pow,
            sd,
            mu: p.mu,
            stat_sd: p.var.sqrt().max(SIGMA_FLOOR),
        }
    }

    fn moments(&self, gap: usize, prev: f64) -> (f64, f64) {
        if gap == 0 {
            (self.mu, self.stat_sd)
        } else {
            (self.mu + self.phi_pow[gap] * (prev - self.mu), self.sd[gap])
        }
    }
}

fn forward_backward(data: &[f64], p: &EmParams) -> Posterior {
    let n = data.len();
    let layout = Layout { cap: p.gap_cap() };
    let s = layout.len();
    let gm = GapMoments::new(p, layout.cap);
    let period = p.matrices.len();

    let gap_at = |t: usize, lag: usize| -> usize {
        let gap = layout.gap_from(lag);
        if gap > t {
            0
        } else {
            gap
        }
    };
    let base_density = |t: usize, lag: usize| -> f64 {
        let gap = gap_at(t, lag);
        let prev = if gap == 0 { 0.0 } else { data[t - gap] };
        let (m, sd) = gm.moments(gap, prev);
        gaussian_pdf(data[t], m, sd)
    };
    let emit: Vec<[f64; 3]> = data
        .iter()
        .map(|&x| [0.0, spike_density(x, p), drop_density(x, p)])
        .collect();

    let mut alpha = vec![0.0; n * s];
    let mut scale = vec![0.0; n];
    // Largest live spike/drop lag on each day; states beyond it carry no mass.
    let mut live = vec![0usize; n];
    // Base density on day t when arriving from lag `l` on day t - 1, l <= live[t - 1].
    let mut arrive: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut predictive = Vec::with_capacity(n);

    let finish = |row: &mut [f64], live: &mut usize| -> f64 {
        let c: f64 = row.iter().sum();
        if !(c > 0.0 && c.is_finite()) {
            return c;
        }
        *live = 0;
        for (j, v) in row.iter_mut().enumerate() {
            *v /= c;
            // Negligible mass is dropped so long gap chains stay short.
            if *v < PRUNE {
                *v = 0.0;
            } else if j > 0 {
                *live = (*live).max(layout.lag(j));
            }
        }
        c
    };

    {
        let row = &mut alpha[0..s];
        row[0] = p.initial[0] * gaussian_pdf(data[0], gm.mu, gm.stat_sd);
        row[layout.index(1, layout.stale())] = p.initial[1] * emit[0][1];
        row[layout.index(2, layout.stale())] = p.initial[2] * emit[0][2];
        predictive.push(BaseMixture {
            components: vec![(1.0, gm.mu, gm.stat_sd)],
        });
        arrive.push(Vec::new());
        let c = finish(row, &mut live[0]);
        scale[0] = if c > 0.0 && c.is_finite() {
            c
        } else {
            row.iter_mut().for_each(|v| *v = 0.0);
            row[0] = p.initial[0];
            row[layout.index(1, layout.stale())] = p.initial[1];
            row[layout.index(2, layout.stale())] = p.initial[2];
            live[0] = layout.stale();
            f64::MIN_POSITIVE
        };
    }

    for t in 1..n {
        let m = p.matrix(t - 1);
        let (head, tail) = alpha.split_at_mut(t * s);
        let prev = &head[(t - 1) * s..];
        let cur = &mut tail[..s];
        let lmax = live[t - 1];
        let dens: Vec<f64> = (0..=lmax).map(|l| base_density(t, l)).collect();
        let mut components: Vec<(usize, f64)> = Vec::new();
        let visit = |j: usize,
                     a: f64,
                     cur: &mut [f64],
                     components: &mut Vec<(usize, f64)>,
                     dens: &[f64],
                     with_emission: bool| {
            let (rho, lag) = (layout.regime(j), layout.lag(j));
            let to_base = a * m[rho][0];
            let nl = layout.next_lag(lag);
            if with_emission {
                if to_base > 0.0 {
                    cur[0] += to_base * dens[lag];
                    components.push((gap_at(t, lag), to_base));
                }
                cur[layout.index(1, nl)] += a * m[rho][1] * emit[t][1];
                cur[layout.index(2, nl)] += a * m[rho][2] * emit[t][2];
            } else {
                cur[0] += to_base;
                cur[layout.index(1, nl)] += a * m[rho][1];
                cur[layout.index(2, nl)] += a * m[rho][2];
            }
        };
        let live_states = |lmax: usize| {
            std::iter::once(0)
                .chain((1..=lmax).flat_map(move |l| [layout.index(1, l), layout.index(2, l)]))
        };
        for j in live_states(lmax) {
            if prev[j] > 0.0 {
                visit(j, prev[j], cur, &mut components, &dens, true);
            }
        }
        predictive.push(collapse_components(&components, data, t, &gm));
        arrive.push(dens);
        let c = finish(cur, &mut live[t]);
        scale[t] = if c > 0.0 && c.is_finite() {
            c
        } else {
            // Observation impossible under every state: carry the prior forward.
            cur.iter_mut().for_each(|v| *v = 0.0);
            for j in live_states(lmax) {
                if prev[j] > 0.0 {
                    visit(j, prev[j], cur, &mut Vec::new(), &[], false);
                }
            }
            live[t] = (lmax + 1).min(layout.stale());
            f64::MIN_POSITIVE
        };
    }
    let loglik: f64 = scale.iter().map(|c| c.ln()).sum();

    // Backward pass with edge posteriors.
    let mut beta_next = vec![1.0; s];
    let mut beta_cur = vec![0.0; s];
    let mut counts = vec![[[0.0; 3]; 3]; period];
    let mut gaps = vec![GapStats::default(); layout.cap + 1];
    let mut smoothed = vec![[0.0; 3]; n];
    let mut terminal_lag = [0.0; 3];
    for j in 0..s {
        let g = alpha[(n - 1) * s + j];
        smoothed[n - 1][layout.regime(j)] += g;
        terminal_lag[layout.regime(j)] += g * layout.lag(j) as f64;
    }
    for t in (1..n).rev() {
        let m = p.matrix(t - 1);
        let prev = &alpha[(t - 1) * s..t * s];
        let c = scale[t];
        let slot = (t - 1) % period;
        let lmax = live[t - 1];
        let dens = &arrive[t];
        let states = std::iter::once(0)
            .chain((1..=lmax).flat_map(|l| [layout.index(1, l), layout.index(2, l)]));
        // Pruned states count as impossible in both directions.
        beta_cur.fill(0.0);
        for j in states {
            let a = prev[j];
            if a == 0.0 {
                continue;
            }
            let (rho, lag) = (layout.regime(j), layout.lag(j));
            let fb = m[rho][0] * dens[lag];
            let nl = layout.next_lag(lag);
            let fs = m[rho][1] * emit[t][1];
            let fd = m[rho][2] * emit[t][2];
            let bs = beta_next[layout.index(1, nl)];
            let bd = beta_next[layout.index(2, nl)];
            beta_cur[j] = (fb * beta_next[0] + fs * bs + fd * bd) / c;
            let xb = a * fb * beta_next[0] / c;
            counts[slot][rho][0] += xb;
            counts[slot][rho][1] += a * fs * bs / c;
            counts[slot][rho][2] += a * fd * bd / c;
            if xb > 0.0 {
                let gap = gap_at(t, lag);
                let prev_x = if gap == 0 { 0.0 } else { data[t - gap] };
                gaps[gap].add(xb, data[t], prev_x);
            }
            smoothed[t - 1][rho] += a * beta_cur[j];
        }
        std::mem::swap(&mut beta_next, &mut beta_cur);
    }
    gaps[0].add(smoothed[0][0], data[0], 0.0);

    for row in smoothed.iter_mut() {
        normalise_row(row);
    }
    for r in 1..3 {
        if smoothed[n - 1][r] > 0.0 {
            terminal_lag[r] /= smoothed[n - 1][r];
        }
    }
    let terminal_lag = [terminal_lag[1], terminal_lag[2]];
    Posterior {
        smoothed,
        base_predictive: predictive,
        loglik,
        terminal_lag,
        counts,
        gaps,
    }
}

fn collapse_components(
    components: &[(usize, f64)],
    data: &[f64],
    t: usize,
    gm: &GapMoments,
) -> BaseMixture {
    let total: f64 = components.iter().map(|c| c.1).sum();
    if total <= 0.0 {
        return BaseMixture {
            components: vec![(1.0, gm.mu, gm.stat_sd)],
        };
    }
    let mut by_gap: Vec<(usize, f64)> = Vec::new();
    for &(gap, w) in components {
        match by_gap.iter_mut().find(|e| e.0 == gap) {
            Some(e) => e.1 += w,
            None => by_gap.push((gap, w)),
        }
    }
    let out = by_gap
        .into_iter()
        .filter(|e| e.1 / total > 1e-14)
        .map(|(gap, w)| {
            let prev = if gap == 0 { 0.0 } else { data[t - gap] };
            let (m, sd) = gm.moments(gap, prev);
            (w / total, m, sd)
        })
        .collect();
    BaseMixture { components: out }
}

/// Smoothed regime probabilities and predictive base laws for `data` under
/// fixed parameters (the E-step alone).
pub fn smooth(data: &[f64], params: &ModelParams, initial: [f64; 3]) -> Result<Posterior> {
    params.validate()?;
    if data.is_empty() {
        return Err(MrsError::arg("cannot smooth an empty series"));
    }
    Ok(forward_backward(
        data,
        &EmParams::from_model(params, initial),
    ))
}

fn weighted_lognormal(values: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    let (mut sw, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (w, y) in values {
        sw += w;
        s1 += w * y;
        s2 += w * y * y;
    }
    if sw <= 1e-12 {
        return None;
    }
    let mu = s1 / sw;
    let var = (s2 / sw - mu * mu).max(0.0);
    Some((mu, var.sqrt().max(SIGMA_FLOOR)))
}

/// Weighted Gaussian fit of `x = μ + φ^g (prev − μ) + ε`, with
/// `Var ε = v (1 − φ^{2g})`, for a fixed `φ`. Returns `(μ, v, objective)`.
fn base_profile(gaps: &[GapStats], phi: f64) -> (f64, f64, f64) {
    let coeff = |g: usize| -> (f64, f64) {
        if g == 0 {
            (0.0, 1.0)
        } else {
            let f = phi.powi(g as i32);
            (f, (1.0 - f * f).max(1e-300))
        }
    };
    let (mut num, mut den, mut wsum, mut logd) = (0.0, 0.0, 0.0, 0.0);
    for (g, st) in gaps.iter().enumerate().filter(|(_, st)| st.w > 0.0) {
        let (f, d) = coeff(g);
        let c = 1.0 - f;
        num += c * (st.sx - f * st.sp) / d;
        den += c * c * st.w / d;
        wsum += st.w;
        logd += st.w * d.ln();
    }
    let mu = if den > 0.0 { num / den } else { 0.0 };
    let mut rss = 0.0;
    for (g, st) in gaps.iter().enumerate().filter(|(_, st)| st.w > 0.0) {
        let (f, d) = coeff(g);
        let mc = mu * (1.0 - f);
        let r2 = st.sxx + f * f * st.spp + mc * mc * st.w - 2.0 * f * st.sxp - 2.0 * mc * st.sx
            + 2.0 * f * mc * st.sp;
        rss += r2.max(0.0) / d;
    }
    let var = (rss / wsum).max(SIGMA_FLOOR * SIGMA_FLOOR);
    (mu, var, logd + wsum * var.ln())
}

fn fit_base(gaps: &[GapStats]) -> Option<(f64, f64, f64)> {
    let wsum: f64 = gaps.iter().map(|g| g.w).sum();
    if wsum < 1e-9 {
        return None;
    }
    let objective = |log_beta: f64| base_profile(gaps, (-log_beta.exp()).exp()).2;
    let (lo, hi) = (BETA_RANGE.0.ln(), BETA_RANGE.1.ln());
    let grid = 48;
    let step = (hi - lo) / grid as f64;
    let best = (0..=grid)
        .map(|i| lo + i as f64 * step)
        .map(|lb| (lb, objective(lb)))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = objective(d);
        }
    }
    let lb = if fc < fd { c } else { d };
    let phi = (-lb.exp()).exp();
    let (mu, var, _) = base_profile(gaps, phi);
    Some((mu, phi, var))
}

fn m_step(data: &[f64], post: &Posterior, cur: &EmParams) -> EmParams {
    let mut next = cur.clone();
    let (cs, cd) = cur.shifts;

    next.initial = post.smoothed[0];

    if let Some(s) = weighted_lognormal(
        data.iter()
            .zip(&post.smoothed)
            .filter(|(&x, _)| x > cs)
            .map(|(&x, g)| (g[1], (x - cs).ln())),
    ) {
        next.spike = s;
    }
    if let Some(d) = weighted_lognormal(
        data.iter()
            .zip(&post.smoothed)
            .filter(|(&x, _)| x < cd)
            .map(|(&x, g)| (g[2], (cd - x).ln())),
    ) {
        next.drop = d;
    }
    if let Some((mu, phi, var)) = fit_base(&post.gaps) {
        next.mu = mu;
        next.phi = phi;
        next.var = var;
    }

    let mut pooled = [[0.0; 3]; 3];
    for c in &post.counts {
        for i in 0..3 {
            for j in 0..3 {
                pooled[i][j] += c[i][j];
            }
        }
    }
    for (slot, counts) in post.counts.iter().enumerate() {
        for i in 0..3 {
            let total: f64 = pooled[i].iter().sum();
            let fallback = if total > 1e-12 {
                pooled[i].map(|v| v / total)
            } else {
                cur.matrices[slot][i]
            };
            let n: f64 = counts[i].iter().sum();
            let estimate = if n > 1e-12 {
                counts[i].map(|v| v / n)
            } else {
                fallback
            };
            let w = (n / MIN_SLOT_COUNT).min(1.0);
            let mut row: [f64; 3] =
                std::array::from_fn(|j| w * estimate[j] + (1.0 - w) * fallback[j]);
            normalise_row(&mut row);
            next.matrices[slot][i] = row;
        }
    }
    next
}

fn initial_params(data: &[f64], shifts: (f64, f64), period: usize) -> Result<EmParams> {
    let (cs, cd) = shifts;
    let iqr = quantile(data, 0.75)? - quantile(data, 0.25)?;
    let class: Vec<Regime> = data
        .iter()
        .map(|&x| {
            if x > cs + 1.5 * iqr {
                Regime::Spike
            } else if x < cd - 1.5 * iqr {
                Regime::Drop
            } else {
                Regime::Base
            }
        })
        .collect();

    let unit = |v: Vec<f64>| weighted_lognormal(v.into_iter().map(|y| (1.0, y)));
    // Fallback when thresholds flag too few points: the most extreme 5%.
    let extreme = |mut v: Vec<f64>| {
        v.sort_by(|a, b| b.total_cmp(a));
        let keep = (v.len() / 20).max(2).min(v.len());
        v.truncate(keep);
        v
    };
    let tagged = |r: Regime, f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        data.iter()
            .zip(&class)
            .filter(|(_, &c)| c == r)
            .map(|(&x, _)| f(x))
            .collect()
    };
    let mut spike_logs = tagged(Regime::Spike, &|x| (x - cs).ln());
    if spike_logs.len() < 2 {
        spike_logs = extreme(
            data.iter()
                .filter(|&&x| x > cs)
                .map(|&x| (x - cs).ln())
                .collect(),
        );
    }
    let mut drop_logs = tagged(Regime::Drop, &|x| (cd - x).ln());
    if drop_logs.len() < 2 {
        drop_logs = extreme(
            data.iter()
                .filter(|&&x| x < cd)
                .map(|&x| (cd - x).ln())
                .collect(),
        );
    }
    let spike = unit(spike_logs)
        .ok_or_else(|| MrsError::Calibration("no observations above c_s".into()))?;
    let drop =
        unit(drop_logs).ok_or_else(|| MrsError::Calibration("no observations below c_d".into()))?;

    let mut pairs: Vec<(f64, f64)> = (1..data.len())
        .filter(|&t| class[t] == Regime::Base && class[t - 1] == Regime::Base)
        .map(|t| (data[t - 1], data[t]))
        .collect();
    if pairs.len() < 10 {
        pairs = (1..data.len()).map(|t| (data[t - 1], data[t])).collect();
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let phi = if sxx > 0.0 { sxy / sxx } else { 0.5 }.clamp(0.05, 0.99);
    let a = my - phi * mx;
    let rss: f64 = pairs.iter().map(|p| (p.1 - a - phi * p.0).powi(2)).sum();
    let var = (rss / n / (1.0 - phi * phi)).max(SIGMA_FLOOR * SIGMA_FLOOR);

    let m = [[0.9, 0.05, 0.05], [0.05, 0.9, 0.05], [0.05, 0.05, 0.9]];
    Ok(EmParams {
        mu: a / (1.0 - phi),
        phi,
        var,
        spike,
        drop,
        shifts,
        matrices: vec![m; period],
        initial: [0.9, 0.05, 0.05],
    })
}

fn check_data(data: &[f64], shifts: (f64, f64)) -> Result<()> {
    if data.len() < 100 {
        return Err(MrsError::arg(format!(
            "calibration needs at least 100 observations, got {}",
            data.len()
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(MrsError::arg("series contains non-finite values"));
    }
    let (cs, cd) = shifts;
    if !data.iter().any(|&x| x > cs) {
        return Err(MrsError::Calibration(format!(
            "no observations above the spike shift {cs}"
        )));
    }
    if !data.iter().any(|&x| x < cd) {
        return Err(MrsError::Calibration(format!(
            "no observations below the drop shift {cd}"
        )));
    }
    Ok(())
}

/// Fit all model parameters to a deseasonalised series by EM.
///
/// `transition_period` sets the number of distinct transition matrices;
/// the matrix for the step from day `n` to `n + 1` is slot
/// `n mod transition_period`, days counted from the first observation.
pub fn em_calibrate(
    data: &[f64],
    shifts: (f64, f64),
    transition_period: usize,
    config: &EmConfig,
) -> Result<CalibrationResult> {
    if transition_period < 1 {
        return Err(MrsError::arg("transition period must be at least 1"));
    }
    check_data(data, shifts)?;
    run_em(
        data,
        initial_params(data, shifts, transition_period)?,
        config,
    )
}

/// EM started from explicit parameter values instead of the threshold
/// initialisation. The transition period is that of `init.transitions`.
pub fn em_calibrate_from(
    data: &[f64],
    init: &ModelParams,
    initial_probs: [f64; 3],
    config: &EmConfig,
) -> Result<CalibrationResult> {
    init.validate()?;
    check_data(data, (init.spike.shift, init.drop.shift))?;
    run_em(data, EmParams::from_model(init, initial_probs), config)
}

fn run_em(data: &[f64], theta: EmParams, config: &EmConfig) -> Result<CalibrationResult> {
    let mut theta = theta;
    let mut post = forward_backward(data, &theta);
    let mut trace = vec![post.loglik];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let candidate = m_step(data, &post, &theta);
        // The M-step maximises the expected complete-data likelihood, so the
        // full step should never lose likelihood; the halving loop only
        // absorbs rounding in the one-dimensional β search.
        let mut accepted = None;
        let mut w = 1.0;
        for _ in 0..MAX_HALVINGS {
            let trial = if w == 1.0 {
                candidate.clone()
            } else {
                theta.blend(&candidate, w)
            };
            let trial_post = forward_backward(data, &trial);
            if trial_post.loglik.is_finite() && trial_post.loglik >= post.loglik {
                accepted = Some((trial, trial_post));
                break;
            }
            w *= 0.5;
        }
        let Some((next, next_post)) = accepted else {
            converged = true;
            break;
        };
        let gain = next_post.loglik - post.loglik;
        theta = next;
        post = next_post;
        trace.push(post.loglik);
        if gain < config.tol {
            converged = true;
            break;
        }
    }

    if let Some(w) = trace.windows(2).find(|w| w[1] < w[0] - MONOTONE_SLACK) {
        return Err(MrsError::Internal(format!(
            "log-likelihood decreased from {} to {}",
            w[0], w[1]
        )));
    }

    let params = theta.to_model()?;
    let classification = post
        .smoothed
        .iter()
        .map(|p| Regime::from_index((0..3).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0)))
        .collect();
    Ok(CalibrationResult {
        params,
        initial: theta.initial,
        base_mean: post.base_predictive.iter().map(BaseMixture::mean).collect(),
        base_sd: post.base_predictive.iter().map(BaseMixture::sd).collect(),
        smoothed: post.smoothed,
        loglik_trace: trace,
        classification,
        iterations,
        converged,
    })
}
