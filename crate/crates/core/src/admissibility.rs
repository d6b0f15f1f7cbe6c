//! Admissibility diagnostics for stored-state families: a light-tail envelope
//! fit and a weak-convergence check of the standardized photon-number law.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, photon_stats, StoredState};

/// Exponents tried for the envelope `C exp(-chi u^delta)`.
pub const ENVELOPE_EXPONENTS: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

/// Largest inflation (in nats) of the least-squares constant needed to make the
/// envelope dominate the tail everywhere, for the fit to count as a witness.
pub const ENVELOPE_SLACK_NATS: f64 = 1.5;

/// Tail masses below this are truncation noise and are left out of the fit.
const TAIL_FLOOR: f64 = 1e-15;

/// A one-parameter family of stored states.
///
/// Grid values are the family's size parameter: the target variance `|alpha|^2`
/// for coherent and cat families, the variance `((M+1)^2-1)/12` rounded to the
/// nearest `M` for the uniform family, the photon number for Fock states and the
/// truncation bound for the power-law family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateFamily {
    Coherent,
    Cat { eta: f64, theta: f64 },
    Uniform,
    Fock,
    /// `|C_n|^2` proportional to `(1+n)^-exponent`, truncated.
    PowerLaw { exponent: f64 },
}

impl StateFamily {
    pub fn member(&self, parameter: f64) -> Result<StoredState> {
        if !(parameter.is_finite() && parameter >= 0.0) {
            return Err(Error::invalid(
                "variance_grid",
                "grid values must be finite and >= 0",
            ));
        }
        match *self {
            StateFamily::Coherent => fock::make_coherent(Complex64::new(parameter.sqrt(), 0.0)),
            StateFamily::Cat { eta, theta } => {
                fock::make_cat(Complex64::new(parameter.sqrt(), 0.0), eta, theta)
            }
            StateFamily::Uniform => {
                let m = ((12.0 * parameter + 1.0).sqrt() - 1.0).round() as usize;
                Ok(fock::make_uniform(m))
            }
            StateFamily::Fock => Ok(fock::make_fock(parameter.round() as usize)),
            StateFamily::PowerLaw { exponent } => {
                let n_max = parameter.round() as usize;
                let weights: Vec<f64> = (0..=n_max)
                    .map(|n| (1.0 + n as f64).powf(-exponent))
                    .collect();
                StoredState::from_probabilities(&weights)
            }
        }
    }
}

impl StateFamily {
    /// Member whose photon-number variance equals `variance`.
    ///
    /// Coherent states are exact; cat states are found by bisection in `|alpha|^2`;
    /// uniform states need `12 variance + 1` to be a perfect square.
    pub fn member_with_variance(&self, variance: f64) -> Result<StoredState> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::invalid("variance", "must be finite and > 0"));
        }
        match *self {
            StateFamily::Coherent => self.member(variance),
            StateFamily::Uniform => {
                let root = (12.0 * variance + 1.0).sqrt();
                if (root - root.round()).abs() > 1e-9 {
                    return Err(Error::invalid(
                        "variance",
                        "uniform states only reach ((M+1)^2 - 1)/12",
                    ));
                }
                self.member(variance)
            }
            StateFamily::Cat { .. } => {
                let var_at = |p: f64| self.member(p).map(|s| photon_stats(&s, 2).variance);
                let (mut lo, mut hi) = (0.0, variance.max(1.0));
                while var_at(hi)? < variance {
                    lo = hi;
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if var_at(mid)? < variance {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-14 * hi {
                        break;
                    }
                }
                let state = self.member(0.5 * (lo + hi))?;
                let got = photon_stats(&state, 2).variance;
                if (got - variance).abs() > 1e-9 * variance {
                    return Err(Error::invalid("variance", "cat family does not reach this variance"));
                }
                Ok(state)
            }
            StateFamily::Fock | StateFamily::PowerLaw { .. } => Err(Error::invalid(
                "family",
                "variance targeting is available for coherent, cat and uniform families",
            )),
        }
    }

    pub fn label(&self) -> String {
        match self {
            StateFamily::Coherent => "coherent".into(),
            StateFamily::Cat { eta, theta } => format!("cat[eta={eta} theta={theta}]"),
            StateFamily::Uniform => "uniform".into(),
            StateFamily::Fock => "fock".into(),
            StateFamily::PowerLaw { exponent } => format!("power_law[exponent={exponent}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeCandidate {
    pub delta: f64,
    /// Smallest constant for which the envelope dominates every tail point.
    pub c: f64,
    pub chi: f64,
    /// `ln C - ln C_ls`, the inflation over the least-squares intercept.
    pub slack_nats: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    /// No tail mass at any `u > 0` (point masses).
    pub zero_tail: bool,
    pub candidates: Vec<EnvelopeCandidate>,
    pub best: Option<EnvelopeCandidate>,
}

impl TailFit {
    pub fn light_tailed(&self) -> bool {
        self.zero_tail || self.best.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyPoint {
    pub parameter: f64,
    pub mean: f64,
    pub variance: f64,
    pub tail: TailFit,
    /// Kolmogorov distance of the standardized CDF to the standard normal CDF.
    pub ks_to_gaussian: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppendixBReport {
    pub family: StateFamily,
    pub points: Vec<FamilyPoint>,
    /// Kolmogorov distance between the standardized CDFs of grid points `i` and `i+1`.
    pub successive_ks: Vec<Option<f64>>,
}

impl AppendixBReport {
    pub fn all_light_tailed(&self) -> bool {
        self.points.iter().all(|p| p.tail.light_tailed())
    }

    /// Successive distances exist and strictly decrease along the grid.
    pub fn converging(&self) -> bool {
        let ks: Option<Vec<f64>> = self.successive_ks.iter().copied().collect();
        match ks {
            Some(ks) => !ks.is_empty() && ks.windows(2).all(|w| w[1] < w[0]),
            None => false,
        }
    }
}

/// Tail masses `T(u) = sum_{|n-<n>| >= u} |C_n|^2` at every positive deviation `u`
/// present in the support; `T` is a left-continuous step function so these points
/// are where any envelope bound is tightest.
pub fn tail_masses(state: &StoredState) -> Vec<(f64, f64)> {
    let probs = state.probabilities();
    let mean = photon_stats(state, 1).mean;
    let mut by_dev: Vec<(f64, f64)> = probs
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(n, p)| ((n as f64 - mean).abs(), *p))
        .filter(|(d, _)| *d > 0.0)
        .collect();
    by_dev.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = Vec::new();
    let mut acc = 0.0;
    let mut i = 0;
    while i < by_dev.len() {
        let d = by_dev[i].0;
        while i < by_dev.len() && by_dev[i].0 == d {
            acc += by_dev[i].1;
            i += 1;
        }
        out.push((d, acc));
    }
    out.reverse();
    out
}

pub fn fit_tail_envelope(state: &StoredState) -> TailFit {
    let points: Vec<(f64, f64)> = tail_masses(state)
        .into_iter()
        .filter(|(_, t)| *t >= TAIL_FLOOR)
        .collect();
    if points.is_empty() {
        return TailFit {
            zero_tail: true,
            candidates: Vec::new(),
            best: None,
        };
    }
    let candidates: Vec<EnvelopeCandidate> = ENVELOPE_EXPONENTS
        .iter()
        .map(|&delta| fit_exponent(&points, delta))
        .collect();
    let best = candidates
        .iter()
        .filter(|c| c.feasible)
        .min_by(|a, b| a.slack_nats.total_cmp(&b.slack_nats))
        .cloned();
    TailFit {
        zero_tail: false,
        candidates,
        best,
    }
}

/// Least squares of `ln T = ln C - chi u^delta`, then the intercept is raised until
/// the envelope dominates.
fn fit_exponent(points: &[(f64, f64)], delta: f64) -> EnvelopeCandidate {
    let xs: Vec<f64> = points.iter().map(|(u, _)| u.powf(delta)).collect();
    let ys: Vec<f64> = points.iter().map(|(_, t)| t.ln()).collect();
    let n = xs.len() as f64;
    let (chi, ln_c_ls) = if xs.len() < 2 {
        // one step: any decay rate works, take one e-fold across the support
        (xs[0].recip(), ys[0] + 1.0)
    } else {
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        (-slope, my - slope * mx)
    };
    let ln_c = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y + chi * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let slack = ln_c - ln_c_ls;
    EnvelopeCandidate {
        delta,
        c: ln_c.exp(),
        chi,
        slack_nats: slack,
        feasible: chi > 0.0 && slack <= ENVELOPE_SLACK_NATS,
    }
}

/// Sorted jump points and cumulative masses of a discrete CDF.
fn step_cdf(dist: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = dist.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    pts.into_iter()
        .map(|(z, p)| {
            acc += p;
            (z, acc)
        })
        .collect()
}

fn eval_step(cdf: &[(f64, f64)], y: f64) -> f64 {
    // F(y) = mass at jump points <= y
    let idx = cdf.partition_point(|(z, _)| *z <= y);
    if idx == 0 {
        0.0
    } else {
        cdf[idx - 1].1
    }
}

fn eval_step_left(cdf: &[(f64, f64)], y: f64) -> f64 {
    let idx = cdf.partition_point(|(z, _)| *z < y);
    if idx == 0 {
        0.0
    } else {
        cdf[idx - 1].1
    }
}

/// Sup-distance between two discrete CDFs, attained at a jump of either.
pub fn kolmogorov_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let ca = step_cdf(a);
    let cb = step_cdf(b);
    ca.iter()
        .chain(cb.iter())
        .map(|(y, _)| {
            let right = (eval_step(&ca, *y) - eval_step(&cb, *y)).abs();
            let left = (eval_step_left(&ca, *y) - eval_step_left(&cb, *y)).abs();
            right.max(left)
        })
        .fold(0.0, f64::max)
}

/// Sup-distance between a discrete CDF and the standard normal CDF.
pub fn kolmogorov_to_gaussian(dist: &[(f64, f64)]) -> f64 {
    let cdf = step_cdf(dist);
    let mut prev = 0.0;
    let mut worst: f64 = 0.0;
    for (z, f) in &cdf {
        let phi = std_normal_cdf(*z);
        worst = worst.max((phi - prev).abs()).max((phi - f).abs());
        prev = *f;
    }
    worst
}

pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn appendix_b_report(family: &StateFamily, variance_grid: &[f64]) -> Result<AppendixBReport> {
    if variance_grid.is_empty() {
        return Err(Error::invalid("variance_grid", "empty grid"));
    }
    if variance_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "variance_grid",
            "grid must be strictly increasing",
        ));
    }
    let mut points = Vec::with_capacity(variance_grid.len());
    let mut dists = Vec::with_capacity(variance_grid.len());
    for &parameter in variance_grid {
        let state = family.member(parameter)?;
        let stats = photon_stats(&state, 2);
        let dist = fock::normalized_distribution(&state);
        points.push(FamilyPoint {
            parameter,
            mean: stats.mean,
            variance: stats.variance,
            tail: fit_tail_envelope(&state),
            ks_to_gaussian: dist.as_deref().map(kolmogorov_to_gaussian),
        });
        dists.push(dist);
    }
    let successive_ks = dists
        .windows(2)
        .map(|w| match (&w[0], &w[1]) {
            (Some(a), Some(b)) => Some(kolmogorov_distance(a, b)),
            _ => None,
        })
        .collect();
    Ok(AppendixBReport {
        family: *family,
        points,
        successive_ks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::make_uniform;

    #[test]
    fn coherent_family_converges_to_gaussian() {
        let report = appendix_b_report(&StateFamily::Coherent, &[4.0, 25.0, 100.0]).unwrap();
        assert!(report.converging(), "{:?}", report.successive_ks);
        let to_gauss: Vec<f64> = report
            .points
            .iter()
            .map(|p| p.ks_to_gaussian.unwrap())
            .collect();
        assert!(to_gauss.windows(2).all(|w| w[1] < w[0]), "{to_gauss:?}");
        assert!(report.all_light_tailed());
    }

    #[test]
    fn fock_family_has_zero_tail() {
        let report = appendix_b_report(&StateFamily::Fock, &[0.0, 3.0, 7.0]).unwrap();
        for p in &report.points {
            assert!(p.tail.zero_tail);
            assert!(tail_masses(&fock::make_fock(p.parameter as usize)).is_empty());
        }
        assert!(report.all_light_tailed());
        assert!(report.successive_ks.iter().all(Option::is_none));
    }

    #[test]
    fn heavy_tail_flagged_for_delta_at_least_one() {
        for n_max in [30.0, 100.0, 1000.0] {
            let state = StateFamily::PowerLaw { exponent: 3.0 }.member(n_max).unwrap();
            let fit = fit_tail_envelope(&state);
            for cand in fit.candidates.iter().filter(|c| c.delta >= 1.0) {
                assert!(!cand.feasible, "n_max {n_max}: {cand:?}");
            }
        }
    }

    #[test]
    fn tail_masses_by_direct_summation() {
        let state = make_uniform(4);
        // mean 2: deviations 1 and 2
        let t = tail_masses(&state);
        assert_eq!(t.len(), 2);
        assert!((t[0].0 - 1.0).abs() < 1e-15 && (t[0].1 - 0.8).abs() < 1e-12);
        assert!((t[1].0 - 2.0).abs() < 1e-15 && (t[1].1 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn feasible_envelope_dominates_every_tail_point() {
        for fam in [
            StateFamily::Coherent,
            StateFamily::Cat { eta: 1.0, theta: std::f64::consts::PI },
            StateFamily::Uniform,
        ] {
            for v in [4.0, 16.0, 50.0] {
                let state = fam.member(v).unwrap();
                let fit = fit_tail_envelope(&state);
                let best = fit.best.expect("light-tailed family");
                for (u, t) in tail_masses(&state) {
                    assert!(t <= best.c * (-best.chi * u.powf(best.delta)).exp() * (1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn standardized_variable_has_unit_variance() {
        for state in [
            fock::make_coherent(Complex64::new(2.5, 1.0)).unwrap(),
            fock::make_cat(Complex64::new(3.0, 0.0), 1.0, 2.0).unwrap(),
            make_uniform(7),
        ] {
            let dist = fock::normalized_distribution(&state).unwrap();
            let mean: f64 = dist.iter().map(|(z, p)| z * p).sum();
            let var: f64 = dist.iter().map(|(z, p)| z * z * p).sum();
            assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_must_increase() {
        assert!(appendix_b_report(&StateFamily::Coherent, &[4.0, 4.0]).is_err());
        assert!(appendix_b_report(&StateFamily::Coherent, &[9.0, 4.0]).is_err());
    }

    #[test]
    fn variance_targeting() {
        let cat = StateFamily::Cat { eta: 0.0, theta: 0.0 };
        let s = cat.member_with_variance(10.0).unwrap();
        assert!((photon_stats(&s, 2).variance - 10.0).abs() < 1e-9);
        let u = StateFamily::Uniform.member_with_variance(10.0).unwrap();
        assert_eq!(u.n_max(), 10);
        assert!(StateFamily::Uniform.member_with_variance(3.0).is_err());
    }

    #[test]
    fn kolmogorov_of_identical_laws_is_zero() {
        let d = fock::normalized_distribution(&make_uniform(5)).unwrap();
        assert_eq!(kolmogorov_distance(&d, &d), 0.0);
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-7);
        let phi1 = std_normal_cdf(1.0);
        assert!((phi1 - 0.841_344_746_068_542_9).abs() < 1e-14, "{phi1:.17}");
    }
}
