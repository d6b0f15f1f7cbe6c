//! Truncated Fock-space states and their photon-number statistics.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tail-mass tolerance used when choosing the truncation bound.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-12;
/// Default cap on |alpha|^2 for coherent and cat constructors.
pub const DEFAULT_MAX_MEAN_PHOTONS: f64 = 400.0;

const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    /// Largest admissible tail mass beyond `n_max`.
    pub tail_tol: f64,
    /// Largest admissible |alpha|^2.
    pub max_mean_photons: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            tail_tol: DEFAULT_TRUNCATION_TOL,
            max_mean_photons: DEFAULT_MAX_MEAN_PHOTONS,
        }
    }
}

/// Normalized optical state `sum_n C_n |n>` on the support `0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateDocument", into = "StateDocument")]
pub struct StoredState {
    amplitudes: Vec<Complex64>,
}

/// JSON layout: `{ "n_max": int, "amplitudes": [[re, im], ...] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDocument {
    pub n_max: usize,
    pub amplitudes: Vec<[f64; 2]>,
}

impl TryFrom<StateDocument> for StoredState {
    type Error = Error;

    fn try_from(doc: StateDocument) -> Result<Self> {
        if doc.amplitudes.len() != doc.n_max + 1 {
            return Err(Error::invalid(
                "amplitudes",
                format!(
                    "expected n_max + 1 = {} entries, found {}",
                    doc.n_max + 1,
                    doc.amplitudes.len()
                ),
            ));
        }
        StoredState::from_amplitudes(
            doc.amplitudes
                .into_iter()
                .map(|[re, im]| Complex64::new(re, im))
                .collect(),
        )
    }
}

impl From<StoredState> for StateDocument {
    fn from(state: StoredState) -> Self {
        StateDocument {
            n_max: state.n_max(),
            amplitudes: state.amplitudes.iter().map(|c| [c.re, c.im]).collect(),
        }
    }
}

impl StoredState {
    /// Builds a state from raw amplitudes, renormalizing them.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::invalid("amplitudes", "empty amplitude vector"));
        }
        if amplitudes.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("amplitudes", "non-finite amplitude"));
        }
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::invalid("amplitudes", "state has zero norm"));
        }
        let mut amplitudes = amplitudes;
        // leave already-normalized input untouched so JSON round trips are exact
        if (norm - 1.0).abs() > 4.0 * f64::EPSILON {
            let scale = norm.sqrt().recip();
            amplitudes.iter_mut().for_each(|c| *c *= scale);
        }
        // trailing exact zeros carry no information
        while amplitudes.len() > 1 && amplitudes.last() == Some(&Complex64::new(0.0, 0.0)) {
            amplitudes.pop();
        }
        let state = StoredState { amplitudes };
        debug_assert!((state.norm_sqr() - 1.0).abs() <= NORM_TOL);
        Ok(state)
    }

    /// Builds a state with real non-negative amplitudes `sqrt(p_n)`.
    pub fn from_probabilities(probabilities: &[f64]) -> Result<Self> {
        if probabilities.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::invalid(
                "probabilities",
                "weights must be finite and non-negative",
            ));
        }
        Self::from_amplitudes(
            probabilities
                .iter()
                .map(|p| Complex64::new(p.sqrt(), 0.0))
                .collect(),
        )
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn n_max(&self) -> usize {
        self.amplitudes.len() - 1
    }

    /// Photon-number distribution `|C_n|^2`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `|<self|other>|^2`.
    pub fn overlap_sqr(&self, other: &StoredState) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm_sqr()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Truncates at the smallest `n_max` whose tail mass is below `tail_tol`, then renormalizes.
fn truncate(amplitudes: Vec<Complex64>, tail_tol: f64) -> Result<StoredState> {
    let weights: Vec<f64> = amplitudes.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::invalid("amplitudes", "state has zero norm"));
    }
    let mut tail = 0.0;
    let mut n_max = 0;
    for n in (0..weights.len()).rev() {
        if (tail + weights[n]) / total >= tail_tol {
            n_max = n;
            break;
        }
        tail += weights[n];
    }
    let mut amplitudes = amplitudes;
    amplitudes.truncate(n_max + 1);
    StoredState::from_amplitudes(amplitudes)
}

/// Coherent amplitudes `exp(-|a|^2/2) a^n / sqrt(n!)` for `n` up to a generous cap.
fn coherent_amplitudes(alpha: Complex64) -> Vec<Complex64> {
    let mean = alpha.norm_sqr();
    if mean == 0.0 {
        return vec![Complex64::new(1.0, 0.0)];
    }
    let cap = (mean + 20.0 * mean.sqrt() + 40.0).ceil() as usize;
    let (log_abs, arg) = (alpha.norm().ln(), alpha.arg());
    let mut log_fact = 0.0;
    (0..=cap)
        .map(|n| {
            if n > 0 {
                log_fact += (n as f64).ln();
            }
            let nf = n as f64;
            let log_mag = -0.5 * mean + nf * log_abs - 0.5 * log_fact;
            Complex64::from_polar(log_mag.exp(), nf * arg)
        })
        .collect()
}

fn check_budget(alpha: Complex64, trunc: &Truncation) -> Result<()> {
    let mean = alpha.norm_sqr();
    if !mean.is_finite() {
        return Err(Error::invalid("alpha", "non-finite amplitude"));
    }
    if mean > trunc.max_mean_photons {
        return Err(Error::AmplitudeTooLarge {
            mean_photons: mean,
            limit: trunc.max_mean_photons,
        });
    }
    Ok(())
}

pub fn make_coherent(alpha: Complex64) -> Result<StoredState> {
    make_coherent_with(alpha, &Truncation::default())
}

pub fn make_coherent_with(alpha: Complex64, trunc: &Truncation) -> Result<StoredState> {
    check_budget(alpha, trunc)?;
    truncate(coherent_amplitudes(alpha), trunc.tail_tol)
}

/// Normalized superposition `N0 (|alpha> + exp(eta + i theta) |-alpha>)`.
pub fn make_cat(alpha: Complex64, eta: f64, theta: f64) -> Result<StoredState> {
    make_cat_with(alpha, eta, theta, &Truncation::default())
}

pub fn make_cat_with(
    alpha: Complex64,
    eta: f64,
    theta: f64,
    trunc: &Truncation,
) -> Result<StoredState> {
    if !eta.is_finite() {
        return Err(Error::invalid("eta", "must be finite"));
    }
    if !theta.is_finite() {
        return Err(Error::invalid("theta", "must be finite"));
    }
    check_budget(alpha, trunc)?;
    // squared norm over 1 + exp(2 eta), finite for any eta
    let scaled_norm = 1.0 + theta.cos() * (-2.0 * alpha.norm_sqr()).exp() / eta.cosh();
    if !(scaled_norm > 1e-20) {
        return Err(Error::invalid("theta", "superposition has zero norm"));
    }
    // divide through by exp(eta) when it dominates so large eta cannot overflow
    let (direct, mirrored) = if eta > 0.0 {
        ((-eta).exp(), Complex64::from_polar(1.0, theta))
    } else {
        (1.0, Complex64::from_polar(eta.exp(), theta))
    };
    let amplitudes: Vec<Complex64> = coherent_amplitudes(alpha)
        .into_iter()
        .enumerate()
        .map(|(n, c)| {
            let parity = if n % 2 == 0 { 1.0 } else { -1.0 };
            c * (direct + mirrored * parity)
        })
        .collect();
    truncate(amplitudes, trunc.tail_tol)
}

/// Analytic normalization constant `N0` of the cat state, from `<alpha|-alpha> = exp(-2|alpha|^2)`.
pub fn cat_normalization(alpha: Complex64, eta: f64, theta: f64) -> f64 {
    let overlap = (-2.0 * alpha.norm_sqr()).exp();
    let norm_sqr = 1.0 + (2.0 * eta).exp() + 2.0 * eta.exp() * theta.cos() * overlap;
    norm_sqr.sqrt().recip()
}

/// Uniform superposition of `|0>, ..., |M>`.
pub fn make_uniform(m: usize) -> StoredState {
    let amp = Complex64::new(((m + 1) as f64).sqrt().recip(), 0.0);
    StoredState {
        amplitudes: vec![amp; m + 1],
    }
}

pub fn make_fock(n: usize) -> StoredState {
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); n + 1];
    amplitudes[n] = Complex64::new(1.0, 0.0);
    StoredState { amplitudes }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhotonStats {
    pub mean: f64,
    pub variance: f64,
    /// `central_moments[k] = sum_n |C_n|^2 (n - <n>)^k` for `k = 0..=max_order`.
    pub central_moments: Vec<f64>,
}

pub fn photon_stats(state: &StoredState, max_order: usize) -> PhotonStats {
    let probs = state.probabilities();
    let mean: f64 = probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    let mut central_moments = vec![0.0; max_order + 1];
    for (n, p) in probs.iter().enumerate() {
        let d = n as f64 - mean;
        let mut term = *p;
        for moment in central_moments.iter_mut() {
            *moment += term;
            term *= d;
        }
    }
    let variance = probs
        .iter()
        .enumerate()
        .map(|(n, p)| p * (n as f64 - mean).powi(2))
        .sum();
    PhotonStats {
        mean,
        variance,
        central_moments,
    }
}

/// Distribution of `Z = (n - <n>) / <dn^2>^(1/2)` as `(z, weight)` pairs over the support,
/// or `None` for a point mass.
pub fn normalized_distribution(state: &StoredState) -> Option<Vec<(f64, f64)>> {
    let stats = photon_stats(state, 2);
    if stats.variance <= 0.0 {
        return None;
    }
    let sd = stats.variance.sqrt();
    Some(
        state
            .probabilities()
            .into_iter()
            .enumerate()
            .filter(|(_, p)| *p > 0.0)
            .map(|(n, p)| ((n as f64 - stats.mean) / sd, p))
            .collect(),
    )
}
