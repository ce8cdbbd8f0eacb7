//! Rate checks in the single-particle, entropy-free reduction.
//!
//! With one particle and potential-only objectives both schemes become
//! (accelerated) multi-objective gradient descent on R^d, so the merit can be
//! evaluated by brute force. Iteration `n` maps to continuous time
//! `t = n * eta` for plain descent and `t = n * sqrt(eta)` for the
//! accelerated scheme.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;

use serde::Serialize;

use crate::diagnostics::{fit_exp_rate, fit_rate_slope, merit_euclidean};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Method, RateSettings, Scenario};
use crate::harness::experiment::{ensure_writable, fmt_float};
use crate::harness::run::run_with_observer;

/// Which fit a scenario uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// log(merit) against log(t).
    LogLogSlope,
    /// log(merit) against t.
    ExponentialRate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RateFit {
    Fitted {
        value: f64,
        points: usize,
    },
    /// Merit reached exactly 0 at time `t`, before the window opened.
    ConvergedBeforeWindow {
        t: f64,
    },
    InsufficientData {
        found: usize,
    },
    Diverged {
        iteration: usize,
    },
}

impl RateFit {
    pub fn value(&self) -> Option<f64> {
        match self {
            RateFit::Fitted { value, .. } => Some(*value),
            _ => None,
        }
    }
}

impl fmt::Display for RateFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFit::Fitted { value, points } => write!(f, "{value:.4} ({points} points)"),
            RateFit::ConvergedBeforeWindow { t } => write!(f, "converged before window (merit 0 at t = {t:.4})"),
            RateFit::InsufficientData { found } => write!(f, "insufficient data ({found} positive points in window)"),
            RateFit::Diverged { iteration } => write!(f, "diverged at iteration {iteration}"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RateEntry {
    /// `mwgrad` or `amwgrad`; the estimator family plays no role here.
    pub scheme: &'static str,
    pub step_size: f64,
    pub iterations: usize,
    pub fit_kind: FitKind,
    pub fit: RateFit,
    /// `(t, merit)` pairs at the sampled iterations.
    #[serde(skip)]
    pub series: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub scenario: Scenario,
    pub window: (f64, f64),
    pub entries: Vec<RateEntry>,
}

impl RateReport {
    pub fn entry(&self, accelerated: bool, step_size: f64) -> Option<&RateEntry> {
        let scheme = scheme_name(accelerated);
        self.entries
            .iter()
            .find(|e| e.scheme == scheme && e.step_size == step_size)
    }
}

fn scheme_name(accelerated: bool) -> &'static str {
    if accelerated {
        "amwgrad"
    } else {
        "mwgrad"
    }
}

/// Roughly geometric sample of iterations in `[1, last]`, always including
/// 0 and `last`.
pub fn sample_iterations(last: usize, samples: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::from([0, last]);
    if last == 0 || samples < 2 {
        return out;
    }
    let ratio = (last as f64).ln() / (samples - 1) as f64;
    for j in 0..samples {
        let n = ((j as f64) * ratio).exp().round() as usize;
        out.insert(n.clamp(1, last));
    }
    out
}

fn time_step(accelerated: bool, eta: f64) -> f64 {
    if accelerated {
        eta.sqrt()
    } else {
        eta
    }
}

fn fit_series(series: &[(f64, f64)], settings: &RateSettings, kind: FitKind) -> Result<RateFit> {
    let (lo, hi) = settings.window;
    if let Some(&(t, _)) = series.iter().find(|(t, v)| *t < lo && *v == 0.0) {
        return Ok(RateFit::ConvergedBeforeWindow { t });
    }
    let fitted = match kind {
        FitKind::LogLogSlope => fit_rate_slope(series, settings.window),
        FitKind::ExponentialRate => fit_exp_rate(series, settings.window),
    };
    let points = series.iter().filter(|(t, v)| *t >= lo && *t <= hi && *v > 0.0).count();
    match fitted {
        Ok(value) => Ok(RateFit::Fitted { value, points }),
        Err(Error::InsufficientData { found, .. }) => Ok(RateFit::InsufficientData { found }),
        Err(e) => Err(e),
    }
}

/// Runs one scheme at one step size and samples the merit along the way.
pub fn rate_entry(config: &ExperimentConfig, accelerated: bool, step_size: f64) -> Result<RateEntry> {
    let settings = config
        .rate
        .as_ref()
        .ok_or_else(|| Error::validation("scenario", "not a rate scenario"))?;
    let kind = match config.scenario {
        Scenario::EuclideanRateStronglyConvex => FitKind::ExponentialRate,
        _ => FitKind::LogLogSlope,
    };
    let quads = config
        .objectives
        .quadratics()
        .ok_or_else(|| Error::validation("targets", "rate scenarios need quadratic targets"))?;

    let dt = time_step(accelerated, step_size);
    let iterations = (settings.window.1 / dt).ceil() as usize;
    let sampled = sample_iterations(iterations, settings.merit_samples);

    // the estimator is irrelevant without entropy; any method of the right
    // scheme will do
    let method = if accelerated {
        Method::AmwgradSvgd
    } else {
        Method::MwgradSvgd
    };
    let mut run = config.run_config(method, step_size);
    run.iterations = iterations;
    run.num_particles = 1;

    let mut series = Vec::with_capacity(sampled.len());
    let (_, diverged) = run_with_observer(&run, 0, |st| {
        if sampled.contains(&st.iteration) {
            let x = st.ensemble.positions().row(0);
            let merit = merit_euclidean(x, &quads, &settings.merit_box, settings.merit_resolution)?;
            series.push((st.iteration as f64 * dt, merit));
        }
        Ok(())
    })?;

    let fit = match diverged {
        Some(iteration) => RateFit::Diverged { iteration },
        None => fit_series(&series, settings, kind)?,
    };
    Ok(RateEntry {
        scheme: scheme_name(accelerated),
        step_size,
        iterations,
        fit_kind: kind,
        fit,
        series,
    })
}

/// One entry per (scheme, step size). Schemes come from the configured
/// methods; both estimator variants of a scheme collapse to one run.
pub fn run_rate_scenario(config: &ExperimentConfig) -> Result<RateReport> {
    let settings = config
        .rate
        .as_ref()
        .ok_or_else(|| Error::validation("scenario", "rates need a euclidean-rate scenario"))?;
    let schemes: BTreeSet<bool> = config.methods.iter().map(|m| m.accelerated()).collect();
    let mut entries = Vec::new();
    for &accelerated in &schemes {
        for &eta in &config.step_sizes {
            entries.push(rate_entry(config, accelerated, eta)?);
        }
    }
    Ok(RateReport {
        scenario: config.scenario,
        window: settings.window,
        entries,
    })
}

/// Writes `rates.json` and one `merit_<scheme>_eta_<step>.csv` per entry.
pub fn write_rate_report(config: &ExperimentConfig, report: &RateReport) -> Result<()> {
    let out = &config.output_dir;
    ensure_writable(out)?;
    for e in &report.entries {
        let mut csv = String::from("t,merit\n");
        for (t, v) in &e.series {
            csv.push_str(&format!("{},{}\n", fmt_float(*t), fmt_float(*v)));
        }
        let path = out.join(format!("merit_{}_eta_{}.csv", e.scheme, e.step_size));
        fs::write(&path, csv).map_err(|err| Error::io(&path, err))?;
    }
    let path = out.join("rates.json");
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(&path, json + "\n").map_err(|err| Error::io(&path, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;
    use std::path::Path;

    #[test]
    fn sampled_iterations_cover_both_ends() {
        let s = sample_iterations(50_000, 200);
        assert!(s.contains(&0) && s.contains(&1) && s.contains(&50_000));
        assert!(s.len() > 150);
        assert_eq!(sample_iterations(0, 200), BTreeSet::from([0]));
    }

    #[test]
    fn single_quadratic_descent_has_decreasing_merit() {
        let cfg = parse_config(
            r#"
scenario = "euclidean-rate-convex"
methods = ["mwgrad-svgd"]
step_sizes = [1e-3]
initial_point = [4.0]
window = [0.5, 5.0]
targets = [{ kind = "quadratic", center = [0.0] }]
"#,
            Path::new("inline"),
        )
        .unwrap();
        let e = rate_entry(&cfg, false, 1e-3).unwrap();
        assert!(e.series.windows(2).all(|w| w[1].1 < w[0].1), "{:?}", &e.series[..5]);
        assert!((e.series[0].1 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn rates_require_a_rate_scenario() {
        let cfg = parse_config("scenario = \"toy4\"\nstep_sizes = [0.01]", Path::new("inline")).unwrap();
        assert!(run_rate_scenario(&cfg).is_err());
    }

    #[test]
    fn early_zero_is_reported() {
        let settings = RateSettings {
            window: (5.0, 50.0),
            merit_box: crate::diagnostics::SearchBox::cube(1, 5.0).unwrap(),
            merit_resolution: 1e-3,
            merit_samples: 20,
        };
        let series = vec![(1.0, 0.5), (2.0, 0.0), (10.0, 0.0)];
        let fit = fit_series(&series, &settings, FitKind::LogLogSlope).unwrap();
        assert_eq!(fit, RateFit::ConvergedBeforeWindow { t: 2.0 });
        let series: Vec<(f64, f64)> = (1..=30).map(|i| (i as f64 * 2.0, (i as f64 * 2.0).powi(-2))).collect();
        let fit = fit_series(&series, &settings, FitKind::LogLogSlope).unwrap();
        assert!((fit.value().unwrap() + 2.0).abs() < 1e-9);
    }
}
