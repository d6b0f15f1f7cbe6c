//! Inhomogeneous detuning and coupling draws for an atomic ensemble.
//!
//! Per-atom values are drawn in fixed-size chunks. Chunk `c` of a realization
//! seeded with `s` reads ChaCha8 stream `c` of key `s`, so a realization does not
//! depend on how chunks are scheduled across workers.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admissibility::std_normal_cdf;
use crate::error::{Error, Result};

/// Atoms per RNG chunk.
pub const CHUNK_SIZE: usize = 4096;

/// Largest admissible probability of a non-positive coupling draw.
pub const MAX_REJECTION_RATE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub n_atoms: u64,
    /// Global detuning `Delta`.
    pub delta: f64,
    /// Broadening `dDelta`.
    pub delta_spread: f64,
    /// Mean coupling `g`.
    pub g: f64,
    /// Coupling spread `dg`.
    pub g_spread: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_atoms < 1 {
            return Err(Error::invalid("n_atoms", "need at least one atom"));
        }
        for (name, v) in [
            ("delta", self.delta),
            ("delta_spread", self.delta_spread),
            ("g", self.g),
            ("g_spread", self.g_spread),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        if self.delta_spread < 0.0 {
            return Err(Error::invalid("delta_spread", "must be >= 0"));
        }
        if self.g <= 0.0 {
            return Err(Error::invalid("g", "mean coupling must be > 0"));
        }
        if self.g_spread < 0.0 {
            return Err(Error::invalid("g_spread", "must be >= 0"));
        }
        if self.g_spread >= self.g {
            return Err(Error::invalid(
                "g_spread",
                format!(
                    "coupling spread {} must be smaller than the mean coupling g = {} \
                     (otherwise negative couplings are sampled with non-negligible probability)",
                    self.g_spread, self.g
                ),
            ));
        }
        Ok(())
    }

    /// Probability that a single coupling draw is non-positive.
    pub fn negative_coupling_probability(&self) -> f64 {
        if self.g_spread == 0.0 {
            0.0
        } else {
            std_normal_cdf(-self.g / self.g_spread)
        }
    }

    pub fn n(&self) -> f64 {
        self.n_atoms as f64
    }
}

/// One sampled pair of vectors `(Delta_j, g_j)` with its collective statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderRealization {
    pub detunings: Vec<f64>,
    pub couplings: Vec<f64>,
    pub stats: RealizationStats,
}

/// Collective sums of a realization. These are all the phase formulas need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RealizationStats {
    pub n_atoms: u64,
    /// `D = sum_j Delta_j`.
    pub collective_detuning: f64,
    /// `G = sum_j g_j`.
    pub collective_coupling: f64,
    pub sum_g_sq: f64,
    pub sum_g_sq_detuning: f64,
    /// `(D/N - Delta)/Delta`, undefined for zero global detuning.
    pub eps_delta: Option<f64>,
    /// `(G/N - g)/g`.
    pub eps_g: f64,
    /// Rejected non-positive coupling draws.
    pub rejections: u64,
}

impl RealizationStats {
    /// `sum_j g_j^2 Delta_j / sum_k g_k^2`.
    pub fn weighted_detuning(&self) -> f64 {
        self.sum_g_sq_detuning / self.sum_g_sq
    }

    /// `sum_k g_k^2 / (N g^2)`, the factor rescaling the mean-field mixing angle.
    pub fn coupling_scale_sq(&self, params: &SystemParams) -> f64 {
        self.sum_g_sq / (params.n() * params.g * params.g)
    }
}

#[derive(Default)]
struct Accumulator {
    sum_delta: f64,
    sum_g: f64,
    sum_g_sq: f64,
    sum_g_sq_delta: f64,
    // deviations from the means, so a homogeneous ensemble gives exactly zero
    dev_delta: f64,
    dev_g: f64,
    rejections: u64,
}

impl Accumulator {
    fn push(&mut self, params: &SystemParams, delta: f64, g: f64) {
        let g_sq = g * g;
        self.dev_delta += delta - params.delta;
        self.dev_g += g - params.g;
        self.sum_delta += delta;
        self.sum_g += g;
        self.sum_g_sq += g_sq;
        self.sum_g_sq_delta += g_sq * delta;
    }

    fn finish(self, params: &SystemParams) -> RealizationStats {
        let n = params.n();
        RealizationStats {
            n_atoms: params.n_atoms,
            collective_detuning: self.sum_delta,
            collective_coupling: self.sum_g,
            sum_g_sq: self.sum_g_sq,
            sum_g_sq_detuning: self.sum_g_sq_delta,
            eps_delta: (params.delta != 0.0)
                .then(|| self.dev_delta / n / params.delta),
            eps_g: self.dev_g / n / params.g,
            rejections: self.rejections,
        }
    }
}

struct Sampler {
    detuning: Normal<f64>,
    coupling: Normal<f64>,
}

impl Sampler {
    fn new(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let p_neg = params.negative_coupling_probability();
        if p_neg > MAX_REJECTION_RATE {
            return Err(Error::RejectionRate { rate: p_neg });
        }
        Ok(Sampler {
            detuning: Normal::new(params.delta, params.delta_spread)
                .map_err(|e| Error::invalid("delta_spread", e.to_string()))?,
            coupling: Normal::new(params.g, params.g_spread)
                .map_err(|e| Error::invalid("g_spread", e.to_string()))?,
        })
    }

    /// Visits atoms `chunk * CHUNK_SIZE ..` in order; returns rejected coupling draws.
    fn chunk(
        &self,
        seed: u64,
        chunk: usize,
        len: usize,
        mut visit: impl FnMut(f64, f64),
    ) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk as u64);
        let mut rejections = 0;
        for _ in 0..len {
            let delta = self.detuning.sample(&mut rng);
            let g = loop {
                let g = self.coupling.sample(&mut rng);
                if g > 0.0 {
                    break g;
                }
                rejections += 1;
            };
            visit(delta, g);
        }
        rejections
    }
}

fn chunk_lengths(n_atoms: u64) -> impl Iterator<Item = (usize, usize)> + Clone {
    let n = n_atoms as usize;
    (0..n.div_ceil(CHUNK_SIZE)).map(move |c| (c, CHUNK_SIZE.min(n - c * CHUNK_SIZE)))
}

/// Samples one realization. Deterministic in `(params, seed)`.
pub fn sample_realization(params: &SystemParams, seed: u64) -> Result<DisorderRealization> {
    let sampler = Sampler::new(params)?;
    let chunks: Vec<(usize, usize)> = chunk_lengths(params.n_atoms).collect();
    let parts: Vec<(Vec<f64>, Vec<f64>, u64)> = chunks
        .par_iter()
        .map(|&(c, len)| {
            let mut d = Vec::with_capacity(len);
            let mut g = Vec::with_capacity(len);
            let rej = sampler.chunk(seed, c, len, |delta, coupling| {
                d.push(delta);
                g.push(coupling);
            });
            (d, g, rej)
        })
        .collect();
    let mut detunings = Vec::with_capacity(params.n_atoms as usize);
    let mut couplings = Vec::with_capacity(params.n_atoms as usize);
    let mut acc = Accumulator::default();
    for (d, g, rej) in parts {
        detunings.extend(d);
        couplings.extend(g);
        acc.rejections += rej;
    }
    for (delta, g) in detunings.iter().zip(&couplings) {
        acc.push(params, *delta, *g);
    }
    if acc.rejections > 0 {
        log::debug!("seed {seed}: redrew {} non-positive couplings", acc.rejections);
    }
    Ok(DisorderRealization {
        detunings,
        couplings,
        stats: acc.finish(params),
    })
}

/// Collective statistics of the realization `sample_realization(params, seed)` without
/// storing the per-atom vectors. Bitwise equal to the stored realization's stats.
pub fn sample_stats(params: &SystemParams, seed: u64) -> Result<RealizationStats> {
    let sampler = Sampler::new(params)?;
    Ok(stats_with(&sampler, params, seed))
}

fn stats_with(sampler: &Sampler, params: &SystemParams, seed: u64) -> RealizationStats {
    let mut acc = Accumulator::default();
    let mut rejections = 0;
    for (c, len) in chunk_lengths(params.n_atoms) {
        rejections += sampler.chunk(seed, c, len, |delta, g| acc.push(params, delta, g));
    }
    acc.rejections = rejections;
    acc.finish(params)
}

/// Statistics for realizations `0..count` of an ensemble run, each seeded by
/// [`realization_seed`]. Order of the output matches the realization index.
pub fn sample_stats_batch(
    params: &SystemParams,
    seed: u64,
    count: usize,
) -> Result<Vec<RealizationStats>> {
    let sampler = Sampler::new(params)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| stats_with(&sampler, params, realization_seed(seed, i as u64)))
        .collect())
}

/// Seed of realization `index` within a run seeded by `seed` (SplitMix64 finalizer).
pub fn realization_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollectiveMoments {
    pub mean_d: f64,
    pub var_d: f64,
    pub mean_g: f64,
    pub var_g: f64,
}

/// Laws of `D = sum Delta_j ~ N(N Delta, N dDelta^2)` and `G = sum g_j ~ N(N g, N dg^2)`.
pub fn collective_moments(params: &SystemParams) -> CollectiveMoments {
    let n = params.n();
    CollectiveMoments {
        mean_d: n * params.delta,
        var_d: n * params.delta_spread.powi(2),
        mean_g: n * params.g,
        var_g: n * params.g_spread.powi(2),
    }
}

impl DisorderRealization {
    /// Writes `j,Delta_j,g_j` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "j,Delta_j,g_j")?;
        for (j, (d, g)) in self.detunings.iter().zip(&self.couplings).enumerate() {
            writeln!(out, "{},{:.16e},{:.16e}", j + 1, d, g)?;
        }
        Ok(())
    }
}
