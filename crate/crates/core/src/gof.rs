//! Kolmogorov–Smirnov goodness-of-fit tests per regime and for the whole
//! model, with p-values from a parametric bootstrap.
//!
//! Each observation is mapped to `[0, 1]` by the fitted law of a regime:
//! the one-step predictive base law, the shifted lognormal above `c_s`, or
//! the reflected lognormal below `c_d`. The equally weighted variant keeps
//! observations whose most probable regime has probability above one half.
//! The weighted variant lets every observation contribute to regime `i` with
//! weight `P(R_n = i | data)`. The whole-model test pools the transforms of
//! all regimes.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{em_calibrate_from, smooth, BaseMixture, EmConfig};
use crate::dist::{lognormal_cdf, lognormal_sf};
use crate::error::{MrsError, Result};
use crate::model::{path_rng, simulate_path_with, ModelParams, Regime, RegimeHistory};
use crate::seasonal::SeasonalCurve;

/// Minimum (effective) sample size for a conclusive per-regime test.
pub const MIN_SAMPLE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Ewedf,
    Wedf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofConfig {
    pub replications: usize,
    pub seed: u64,
    /// Re-run EM on every bootstrap sample instead of smoothing it under
    /// the fitted parameters.
    pub refit: bool,
    pub em: EmConfig,
}

impl Default for GofConfig {
    fn default() -> Self {
        GofConfig {
            replications: 1000,
            seed: 0,
            refit: false,
            em: EmConfig::default(),
        }
    }
}

/// One KS test. `statistic` and `p_value` are `None` when the test is
/// inconclusive (too few observations).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    /// Number of observations, or the Kish effective size for weighted tests.
    pub sample_size: f64,
}

impl KsTest {
    pub fn is_conclusive(&self) -> bool {
        self.statistic.is_some()
    }
}

/// Statistic (when conclusive) and sample size per row.
type RowStats = [(Option<f64>, f64); 4];
/// Bootstrap statistics of one replicate: equally weighted, weighted.
type ReplicateStats = ([Option<f64>; 4], [Option<f64>; 4]);

/// Rows in the order base, spike, drop, whole model.
pub const ROW_LABELS: [&str; 4] = ["Base", "Spike", "Drop", "Model"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub ewedf: [KsTest; 4],
    pub wedf: [KsTest; 4],
    pub replications: usize,
    pub seed: u64,
}

impl GofReport {
    pub fn tests(&self, weighting: Weighting) -> &[KsTest; 4] {
        match weighting {
            Weighting::Ewedf => &self.ewedf,
            Weighting::Wedf => &self.wedf,
        }
    }
}

/// KS distance between the weighted empirical distribution of `u` and the
/// uniform law on `[0, 1]`. Weights need not be normalised; zero-weight
/// points are ignored.
pub fn ks_distance(u: &[f64], w: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> = u
        .iter()
        .zip(w)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&u, &w)| (u, w))
        .collect();
    let total: f64 = pts.iter().map(|p| p.1).sum();
    if pts.is_empty() || total <= 0.0 {
        return 0.0;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut d: f64 = 0.0;
    let mut cum = 0.0;
    let mut i = 0;
    while i < pts.len() {
        let x = pts[i].0;
        let below = cum / total;
        while i < pts.len() && pts[i].0 == x {
            cum += pts[i].1;
            i += 1;
        }
        let at = cum / total;
        d = d.max((x - below).abs()).max((at - x).abs());
    }
    d
}

/// Probability-integral transforms of every observation under each
/// regime's fitted law. Spike and drop transforms are `None` off-support.
fn transforms(
    data: &[f64],
    predictive: &[BaseMixture],
    params: &ModelParams,
) -> Vec<[Option<f64>; 3]> {
    data.iter()
        .zip(predictive)
        .map(|(&x, pred)| {
            let spike = (x > params.spike.shift).then(|| {
                lognormal_cdf(x - params.spike.shift, params.spike.mu, params.spike.sigma)
            });
            let drop = (x < params.drop.shift)
                .then(|| lognormal_sf(params.drop.shift - x, params.drop.mu, params.drop.sigma));
            [Some(pred.cdf(x)), spike, drop]
        })
        .collect()
}

fn statistics(pits: &[[Option<f64>; 3]], smoothed: &[[f64; 3]], weighting: Weighting) -> RowStats {
    let mut per: [(Vec<f64>, Vec<f64>); 3] = Default::default();
    for (pit, p) in pits.iter().zip(smoothed) {
        match weighting {
            Weighting::Ewedf => {
                if let Some(i) = (0..3).find(|&i| p[i] > 0.5) {
                    if let Some(u) = pit[i] {
                        per[i].0.push(u);
                        per[i].1.push(1.0);
                    }
                }
            }
            Weighting::Wedf => {
                for i in 0..3 {
                    if let (Some(u), true) = (pit[i], p[i] > 0.0) {
                        per[i].0.push(u);
                        per[i].1.push(p[i]);
                    }
                }
            }
        }
    }
    let conclusive = |w: &[f64]| {
        let s: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|v| v * v).sum();
        let n_eff = if s2 > 0.0 { s * s / s2 } else { 0.0 };
        let size = match weighting {
            Weighting::Ewedf => w.len() as f64,
            Weighting::Wedf => n_eff,
        };
        (s >= MIN_SAMPLE && size >= MIN_SAMPLE, size)
    };
    let mut out = [(None, 0.0); 4];
    let (mut all_u, mut all_w) = (Vec::new(), Vec::new());
    for i in 0..3 {
        let (u, w) = &per[i];
        let (ok, size) = conclusive(w);
        out[i] = (ok.then(|| ks_distance(u, w)), size);
        all_u.extend_from_slice(u);
        all_w.extend_from_slice(w);
    }
    let (ok, size) = conclusive(&all_w);
    out[3] = (ok.then(|| ks_distance(&all_u, &all_w)), size);
    out
}

fn observed_statistics(
    data: &[f64],
    smoothed: &[[f64; 3]],
    params: &ModelParams,
    initial: [f64; 3],
) -> Result<(RowStats, RowStats)> {
    if data.len() != smoothed.len() {
        return Err(MrsError::arg(format!(
            "series has {} observations but {} smoothed probabilities",
            data.len(),
            smoothed.len()
        )));
    }
    let post = smooth(data, params, initial)?;
    let pits = transforms(data, &post.base_predictive, params);
    Ok((
        statistics(&pits, smoothed, Weighting::Ewedf),
        statistics(&pits, smoothed, Weighting::Wedf),
    ))
}

/// Statistics of one bootstrap sample simulated from `params`.
fn replicate(
    params: &ModelParams,
    n: usize,
    initial: [f64; 3],
    config: &GofConfig,
    index: usize,
) -> Result<ReplicateStats> {
    let mut rng = path_rng(config.seed, index as u64);
    let z: f64 = rng.sample(StandardNormal);
    let x0 = params.base.long_run_mean() + params.base.stationary_variance().sqrt() * z;
    let flat =
        SeasonalCurve::flat(chrono::NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"));
    let horizon = (n - 1) as u32;
    let path = simulate_path_with(
        params,
        &flat,
        &RegimeHistory::base(x0),
        horizon,
        1,
        None,
        &mut rng,
    )?;
    let data = path.x_values;
    let (fit, init) = if config.refit {
        match em_calibrate_from(&data, params, initial, &config.em) {
            Ok(res) => (res.params.clone(), res.initial),
            Err(MrsError::Calibration(_)) => (params.clone(), initial),
            Err(e) => return Err(e),
        }
    } else {
        (params.clone(), initial)
    };
    let post = smooth(&data, &fit, init)?;
    let pits = transforms(&data, &post.base_predictive, &fit);
    let e = statistics(&pits, &post.smoothed, Weighting::Ewedf);
    let w = statistics(&pits, &post.smoothed, Weighting::Wedf);
    Ok((e.map(|s| s.0), w.map(|s| s.0)))
}

fn p_value(observed: Option<f64>, replicates: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let d = observed?;
    let (mut exceed, mut total) = (0usize, 0usize);
    for r in replicates.flatten() {
        total += 1;
        if r >= d {
            exceed += 1;
        }
    }
    Some((1 + exceed) as f64 / (1 + total) as f64)
}

/// Both KS variants for all regimes and the whole model.
///
/// `smoothed` are the regime probabilities used to classify or weight the
/// observations; `initial` is the regime distribution of the first day.
/// Bootstrap samples start in the base regime at a stationary draw.
pub fn goodness_of_fit(
    data: &[f64],
    smoothed: &[[f64; 3]],
    params: &ModelParams,
    initial: [f64; 3],
    config: &GofConfig,
) -> Result<GofReport> {
    if data.len() < 2 {
        return Err(MrsError::arg(
            "goodness of fit needs at least two observations",
        ));
    }
    if config.replications == 0 {
        return Err(MrsError::arg("bootstrap needs at least one replication"));
    }
    let (obs_e, obs_w) = observed_statistics(data, smoothed, params, initial)?;
    let boot: Vec<ReplicateStats> = (0..config.replications)
        .into_par_iter()
        .map(|b| replicate(params, data.len(), initial, config, b))
        .collect::<Result<_>>()?;
    let build = |obs: &[(Option<f64>, f64); 4],
                 pick: &dyn Fn(&ReplicateStats) -> [Option<f64>; 4]| {
        std::array::from_fn(|i| KsTest {
            statistic: obs[i].0,
            p_value: p_value(obs[i].0, boot.iter().map(|r| pick(r)[i])),
            sample_size: obs[i].1,
        })
    };
    Ok(GofReport {
        ewedf: build(&obs_e, &|r| r.0),
        wedf: build(&obs_w, &|r| r.1),
        replications: config.replications,
        seed: config.seed,
    })
}

/// Equally weighted variant alone.
pub fn ks_ewedf(
    data: &[f64],
    smoothed: &[[f64; 3]],
    params: &ModelParams,
    initial: [f64; 3],
    config: &GofConfig,
) -> Result<[KsTest; 4]> {
    Ok(goodness_of_fit(data, smoothed, params, initial, config)?.ewedf)
}

/// Probability-weighted variant alone.
pub fn ks_wedf(
    data: &[f64],
    smoothed: &[[f64; 3]],
    params: &ModelParams,
    initial: [f64; 3],
    config: &GofConfig,
) -> Result<[KsTest; 4]> {
    Ok(goodness_of_fit(data, smoothed, params, initial, config)?.wedf)
}

/// Regime-wise statistics without p-values, for callers that only need the
/// distances.
pub fn ks_statistics(
    data: &[f64],
    smoothed: &[[f64; 3]],
    params: &ModelParams,
    initial: [f64; 3],
    weighting: Weighting,
) -> Result<[Option<f64>; 4]> {
    let (e, w) = observed_statistics(data, smoothed, params, initial)?;
    Ok(match weighting {
        Weighting::Ewedf => e.map(|s| s.0),
        Weighting::Wedf => w.map(|s| s.0),
    })
}

/// Regime with the largest smoothed probability when it exceeds one half.
pub fn classify(p: &[f64; 3]) -> Option<Regime> {
    (0..3).find(|&i| p[i] > 0.5).map(Regime::from_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate_path;
    use chrono::NaiveDate;
    use rand::SeedableRng;

    fn double_loop_ks(u: &[f64]) -> f64 {
        let n = u.len() as f64;
        let mut d: f64 = 0.0;
        for &x in u {
            let le = u.iter().filter(|&&v| v <= x).count() as f64 / n;
            let lt = u.iter().filter(|&&v| v < x).count() as f64 / n;
            d = d.max((le - x).abs()).max((x - lt).abs());
        }
        d
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for n in [1usize, 2, 7, 50, 333] {
            let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            if n > 10 {
                u[3] = u[4];
            }
            let w = vec![1.0; n];
            assert!((ks_distance(&u, &w) - double_loop_ks(&u)).abs() < 1e-12);
        }
    }

    #[test]
    fn staircase_against_uniform() {
        let u = [0.1, 0.35, 0.6, 0.85];
        assert!((ks_distance(&u, &[1.0; 4]) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn weights_are_scale_invariant() {
        let u = [0.05, 0.2, 0.21, 0.5, 0.77, 0.9];
        let w = [0.3, 1.0, 0.2, 0.9, 0.5, 0.1];
        let half: Vec<f64> = w.iter().map(|v| v * 0.5).collect();
        assert_eq!(ks_distance(&u, &w), ks_distance(&u, &half));
    }

    #[test]
    fn monotone_transform_invariance() {
        use crate::dist::norm_cdf;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let (m, sd) = (0.4, 1.3);
        let x: Vec<f64> = (0..200)
            .map(|_| m + 1.1 * sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let direct: Vec<f64> = x.iter().map(|&v| norm_cdf((v - m) / sd)).collect();
        // Data mapped through exp, model CDF composed with ln.
        let mapped: Vec<f64> = x
            .iter()
            .map(|&v| norm_cdf((v.exp().ln() - m) / sd))
            .collect();
        let w = vec![1.0; x.len()];
        assert!((ks_distance(&direct, &w) - ks_distance(&mapped, &w)).abs() < 1e-12);
    }

    fn sample(p: &ModelParams, n: u32, seed: u64) -> Vec<f64> {
        let flat = SeasonalCurve::flat(NaiveDate::from_ymd_opt(2011, 1, 3).unwrap());
        simulate_path(
            p,
            &flat,
            &RegimeHistory::base(p.base.long_run_mean()),
            n - 1,
            1,
            None,
            seed,
        )
        .unwrap()
        .x_values
    }

    #[test]
    fn indicator_weights_reduce_to_ewedf() {
        let p = ModelParams::eex_reference();
        let data = sample(&p, 400, 2);
        let post = smooth(&data, &p, [1.0, 0.0, 0.0]).unwrap();
        let hard: Vec<[f64; 3]> = post
            .smoothed
            .iter()
            .map(|s| {
                let i = (0..3).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
                std::array::from_fn(|j| if j == i { 1.0 } else { 0.0 })
            })
            .collect();
        let e = ks_statistics(&data, &hard, &p, [1.0, 0.0, 0.0], Weighting::Ewedf).unwrap();
        let w = ks_statistics(&data, &hard, &p, [1.0, 0.0, 0.0], Weighting::Wedf).unwrap();
        for i in 0..4 {
            match (e[i], w[i]) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                (None, None) => {}
                other => panic!("row {i}: {other:?}"),
            }
        }
    }

    #[test]
    fn small_regimes_are_inconclusive() {
        let p = ModelParams::eex_reference();
        let data = sample(&p, 120, 9);
        let smoothed = vec![[1.0, 0.0, 0.0]; data.len()];
        let s = ks_statistics(&data, &smoothed, &p, [1.0, 0.0, 0.0], Weighting::Ewedf).unwrap();
        assert!(s[0].is_some());
        assert!(s[1].is_none() && s[2].is_none());
    }

    #[test]
    fn bootstrap_is_deterministic_given_seed() {
        let p = ModelParams::eex_reference();
        let data = sample(&p, 300, 4);
        let post = smooth(&data, &p, [1.0, 0.0, 0.0]).unwrap();
        let cfg = GofConfig {
            replications: 20,
            seed: 77,
            ..GofConfig::default()
        };
        let a = goodness_of_fit(&data, &post.smoothed, &p, [1.0, 0.0, 0.0], &cfg).unwrap();
        let b = goodness_of_fit(&data, &post.smoothed, &p, [1.0, 0.0, 0.0], &cfg).unwrap();
        assert_eq!(a, b);
        for t in a.ewedf.iter().chain(&a.wedf) {
            if let Some(pv) = t.p_value {
                assert!((0.0..=1.0).contains(&pv));
            }
        }
    }

    /// Observed series drawn exactly like a bootstrap sample.
    fn null_sample(p: &ModelParams, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = path_rng(seed, u64::MAX);
        let z: f64 = rng.sample(StandardNormal);
        let x0 = p.base.long_run_mean() + p.base.stationary_variance().sqrt() * z;
        let flat = SeasonalCurve::flat(NaiveDate::from_ymd_opt(2011, 1, 3).unwrap());
        simulate_path_with(
            p,
            &flat,
            &RegimeHistory::base(x0),
            (n - 1) as u32,
            1,
            None,
            &mut rng,
        )
        .unwrap()
        .x_values
    }

    #[test]
    fn p_values_are_uniform_under_the_null() {
        let p = ModelParams::eex_reference();
        let mut above = [[0usize; 4]; 2];
        let mut conclusive = [[0usize; 4]; 2];
        for rep in 0..20u64 {
            let data = null_sample(&p, 730, 1000 + rep);
            let post = smooth(&data, &p, [1.0, 0.0, 0.0]).unwrap();
            let cfg = GofConfig {
                replications: 49,
                seed: rep,
                ..GofConfig::default()
            };
            let report = goodness_of_fit(&data, &post.smoothed, &p, [1.0, 0.0, 0.0], &cfg).unwrap();
            for (v, tests) in [&report.ewedf, &report.wedf].into_iter().enumerate() {
                for (i, t) in tests.iter().enumerate() {
                    if let Some(pv) = t.p_value {
                        conclusive[v][i] += 1;
                        if pv > 0.05 {
                            above[v][i] += 1;
                        }
                    }
                }
            }
        }
        for v in 0..2 {
            // The whole-model and base tests are always conclusive here.
            assert_eq!(conclusive[v][0], 20);
            assert_eq!(conclusive[v][3], 20);
            for i in 0..4 {
                let needed = (conclusive[v][i] * 3).div_ceil(4);
                assert!(
                    above[v][i] >= needed,
                    "variant {v} row {i}: {} of {}",
                    above[v][i],
                    conclusive[v][i]
                );
            }
        }
    }

    #[test]
    fn constant_spikes_are_rejected() {
        let p = ModelParams::eex_reference();
        let flat = SeasonalCurve::flat(NaiveDate::from_ymd_opt(2011, 1, 3).unwrap());
        let path = simulate_path(&p, &flat, &RegimeHistory::base(37.4), 1825, 1, None, 12).unwrap();
        let mut data = path.x_values.clone();
        for (x, r) in data.iter_mut().zip(&path.regimes) {
            if *r == Regime::Spike {
                *x = p.spike.mean();
            }
        }
        let post = smooth(&data, &p, [1.0, 0.0, 0.0]).unwrap();
        let cfg = GofConfig {
            replications: 199,
            seed: 3,
            ..GofConfig::default()
        };
        let report = goodness_of_fit(&data, &post.smoothed, &p, [1.0, 0.0, 0.0], &cfg).unwrap();
        let pv = report.ewedf[1].p_value.unwrap();
        assert!(pv < 0.01, "{pv}");
    }
}
