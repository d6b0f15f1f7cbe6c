//! Classical driving pulses, the mixing angle and the adiabatic pulse factors.
//!
//! A profile tabulates `w(t) = Omega(t) / (sum_j g_j^2)^(1/2)` on a uniform grid over
//! the driving window `[0, tau_d]`: the store-in half on `[0, tau_d/2]` and the
//! retrieval half mirrored. The storage window sits between the halves and is not
//! tabulated since `theta = pi/2` there.
//!
//! With the coupling sum rescaled by `r^2 = sum g_k^2 / (N g^2)` relative to the
//! homogeneous value, `tan theta = r / w`, so
//! `sin^2 theta = r^2 / (r^2 + w^2)` and `sin^2 2theta = 4 r^2 w^2 / (r^2 + w^2)^2`.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::disorder::SystemParams;
use crate::error::{Error, Result};
use crate::quadrature::simpson;

pub const MIN_GAUSSIAN_GRID_POINTS: usize = 1000;

/// Largest change of a pulse factor under grid doubling.
pub const QUADRATURE_TOL: f64 = 1e-8;

/// Default factor standing in for "much greater than".
pub const DEFAULT_MUCH_GREATER: f64 = 10.0;

/// Relative tolerance for mirror symmetry of tabulated profiles.
const MIRROR_TOL: f64 = 1e-9;

/// Pulse-factor values quoted for the `xi = 1000` Gaussian pulse.
pub const PAPER_KAPPA_THETA: f64 = 3.2;
pub const PAPER_ZETA_THETA: f64 = 2.7;

#[derive(Debug, Clone, PartialEq)]
enum Waveform {
    Gaussian { xi: f64 },
    Constant { value: f64 },
    Tabulated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseProfile {
    waveform: Waveform,
    tau_d: f64,
    samples: Vec<f64>,
}

impl PulseProfile {
    /// `w = xi exp(-2 ln(xi) (t / (tau_d/2))^2)` on the store-in half, mirrored for retrieval.
    pub fn gaussian(xi: f64, tau_d: f64, grid_points: usize) -> Result<Self> {
        if !(xi > 1.0 && xi.is_finite()) {
            return Err(Error::invalid("xi", "must exceed 1 for an adiabatic sweep"));
        }
        check_window(tau_d, grid_points, MIN_GAUSSIAN_GRID_POINTS)?;
        let waveform = Waveform::Gaussian { xi };
        Ok(PulseProfile {
            samples: waveform.grid(&[], grid_points),
            waveform,
            tau_d,
        })
    }

    /// Flat profile holding `w` fixed.
    pub fn constant(value: f64, tau_d: f64, grid_points: usize) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::invalid("waveform", "must be positive"));
        }
        check_window(tau_d, grid_points, 3)?;
        Ok(PulseProfile {
            waveform: Waveform::Constant { value },
            tau_d,
            samples: vec![value; grid_points],
        })
    }

    /// Flat profile with a fixed mixing angle `theta` in `(0, pi/2]`.
    pub fn constant_angle(theta: f64, tau_d: f64, grid_points: usize) -> Result<Self> {
        if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid("theta", "must lie in (0, pi/2]"));
        }
        Self::constant(theta.cos() / theta.sin(), tau_d, grid_points)
    }

    /// Profile from samples on the uniform grid `t_i = i tau_d / (len - 1)`.
    pub fn tabulated(samples: Vec<f64>, tau_d: f64) -> Result<Self> {
        check_window(tau_d, samples.len(), 3)?;
        if let Some(i) = samples.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid(
                "omega_over_sqrt_sum_g2",
                format!("sample {i} is not positive"),
            ));
        }
        let profile = PulseProfile {
            waveform: Waveform::Tabulated,
            tau_d,
            samples,
        };
        let residual = profile.mirror_residual();
        let scale = profile.samples.iter().copied().fold(0.0, f64::max);
        if residual > MIRROR_TOL * scale {
            return Err(Error::invalid(
                "omega_over_sqrt_sum_g2",
                format!("profile is not mirror symmetric (residual {residual:e})"),
            ));
        }
        Ok(profile)
    }

    /// Reads a `t,omega_over_sqrt_sum_g2` CSV with a uniform grid starting at 0.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "omega_over_sqrt_sum_g2" {
            return Err(Error::invalid(
                "pulse_csv",
                "expected header `t,omega_over_sqrt_sum_g2`",
            ));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|e| {
                    Error::invalid("pulse_csv", format!("row {}: {e}", i + 1))
                })
            };
            times.push(parse(0)?);
            values.push(parse(1)?);
        }
        if times.len() < 3 {
            return Err(Error::invalid("pulse_csv", "need at least three rows"));
        }
        let tau_d = *times.last().unwrap();
        let h = tau_d / (times.len() - 1) as f64;
        for (i, t) in times.iter().enumerate() {
            if (t - i as f64 * h).abs() > 1e-9 * tau_d.abs().max(1.0) {
                return Err(Error::invalid(
                    "pulse_csv",
                    format!("row {}: grid must be uniform and start at t = 0", i + 1),
                ));
            }
        }
        Self::tabulated(values, tau_d)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn tau_d(&self) -> f64 {
        self.tau_d
    }

    pub fn grid_points(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn times(&self) -> Vec<f64> {
        let h = self.tau_d / (self.samples.len() - 1) as f64;
        (0..self.samples.len()).map(|i| i as f64 * h).collect()
    }

    /// Mixing angle at each grid point for the homogeneous coupling sum.
    pub fn mixing_angles(&self) -> Vec<f64> {
        self.samples.iter().map(|w| w.recip().atan()).collect()
    }

    pub fn mirror_residual(&self) -> f64 {
        let n = self.samples.len();
        (0..n / 2)
            .map(|i| (self.samples[i] - self.samples[n - 1 - i]).abs())
            .fold(0.0, f64::max)
    }

    /// `(1/tau_d) int_0^tau_d sin^2 theta dt` with the coupling sum rescaled by `r_sq`.
    pub fn mean_sin_sq(&self, r_sq: f64) -> f64 {
        mean_over_window(&self.samples, |w| sin_sq_theta(w, r_sq))
    }

    /// `(1/tau_d) int_0^tau_d sin^2 2theta dt` with the coupling sum rescaled by `r_sq`.
    pub fn mean_sin_sq_double(&self, r_sq: f64) -> f64 {
        mean_over_window(&self.samples, |w| sin_sq_double(w, r_sq))
    }

    /// Samples on a grid with `points` nodes over the same window.
    fn resampled(&self, points: usize) -> Vec<f64> {
        self.waveform.grid(&self.samples, points)
    }
}

impl Waveform {
    fn grid(&self, samples: &[f64], points: usize) -> Vec<f64> {
        let last = points - 1;
        match *self {
            Waveform::Gaussian { xi } => (0..points)
                .map(|i| {
                    // index arithmetic keeps the mirror image bitwise exact
                    let s = 2.0 * i.min(last - i) as f64 / last as f64;
                    xi * (-2.0 * xi.ln() * s * s).exp()
                })
                .collect(),
            Waveform::Constant { value } => vec![value; points],
            Waveform::Tabulated => {
                let src_last = (samples.len() - 1) as f64;
                (0..points)
                    .map(|i| {
                        let x = src_last * i.min(last - i) as f64 / last as f64;
                        let k = (x.floor() as usize).min(samples.len() - 2);
                        let frac = x - k as f64;
                        samples[k] * (1.0 - frac) + samples[k + 1] * frac
                    })
                    .map(|v| v.max(f64::MIN_POSITIVE))
                    .collect::<Vec<_>>()
            }
        }
    }
}

fn check_window(tau_d: f64, grid_points: usize, min_points: usize) -> Result<()> {
    if !(tau_d > 0.0 && tau_d.is_finite()) {
        return Err(Error::invalid("tau_d", "driving time must be positive"));
    }
    if grid_points < min_points {
        return Err(Error::invalid(
            "grid_points",
            format!("need at least {min_points} grid points"),
        ));
    }
    Ok(())
}

fn sin_sq_theta(w: f64, r_sq: f64) -> f64 {
    r_sq / (r_sq + w * w)
}

fn sin_sq_double(w: f64, r_sq: f64) -> f64 {
    let d = r_sq + w * w;
    4.0 * r_sq * w * w / (d * d)
}

fn mean_over_window(samples: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let vals: Vec<f64> = samples.iter().map(|w| f(*w)).collect();
    simpson(&vals, 1.0 / (samples.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseConvention {
    /// Quadrature of the normalized integrals over the driving window.
    Definition,
    /// The quoted constants `kappa = 3.2`, `zeta = 2.7`.
    #[serde(rename = "paper", alias = "paper_constants")]
    PaperConstants,
}

impl std::str::FromStr for PulseConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "definition" => Ok(PulseConvention::Definition),
            "paper" | "paper_constants" => Ok(PulseConvention::PaperConstants),
            other => Err(Error::invalid(
                "pulse_convention",
                format!("unknown convention `{other}` (expected definition|paper)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PulseFactors {
    pub kappa_theta: f64,
    pub zeta_theta: f64,
    /// `kappa_theta - 1/2`.
    pub alpha_theta: f64,
    pub convention: PulseConvention,
}

impl PulseFactors {
    pub fn new(kappa_theta: f64, zeta_theta: f64, convention: PulseConvention) -> Self {
        PulseFactors {
            kappa_theta,
            zeta_theta,
            alpha_theta: kappa_theta - 0.5,
            convention,
        }
    }

    pub fn paper_constants() -> Self {
        Self::new(
            PAPER_KAPPA_THETA,
            PAPER_ZETA_THETA,
            PulseConvention::PaperConstants,
        )
    }
}

pub fn pulse_factors(profile: &PulseProfile, convention: PulseConvention) -> Result<PulseFactors> {
    match convention {
        PulseConvention::PaperConstants => Ok(PulseFactors::paper_constants()),
        PulseConvention::Definition => {
            let coarse = (profile.mean_sin_sq(1.0), profile.mean_sin_sq_double(1.0));
            let fine_grid = profile.resampled(2 * profile.grid_points() - 1);
            let fine = (
                mean_over_window(&fine_grid, |w| sin_sq_theta(w, 1.0)),
                mean_over_window(&fine_grid, |w| sin_sq_double(w, 1.0)),
            );
            let difference = (fine.0 - coarse.0).abs().max((fine.1 - coarse.1).abs());
            if difference > QUADRATURE_TOL {
                return Err(Error::QuadratureNonConvergence { difference });
            }
            Ok(PulseFactors::new(
                coarse.0,
                coarse.1,
                PulseConvention::Definition,
            ))
        }
    }
}

/// `min(tau_d, 1/|Delta|) / sqrt(n_max / (N g^2))`; values at or above
/// [`DEFAULT_MUCH_GREATER`] satisfy the adiabatic constraint.
pub fn adiabatic_margin(params: &SystemParams, tau_d: f64, n_max: u64) -> Result<f64> {
    if !(params.g > 0.0) || params.n_atoms < 1 {
        return Err(Error::invalid("params", "need N >= 1 and g > 0"));
    }
    if n_max < 1 {
        return Err(Error::invalid("n_max", "must be >= 1"));
    }
    if !(tau_d > 0.0) {
        return Err(Error::invalid("tau_d", "must be positive"));
    }
    let inverse_detuning = if params.delta == 0.0 {
        f64::INFINITY
    } else {
        params.delta.abs().recip()
    };
    let scale = (n_max as f64 / (params.n() * params.g * params.g)).sqrt();
    Ok(tau_d.min(inverse_detuning) / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn gaussian_endpoints() {
        let p = PulseProfile::gaussian(1000.0, 1.0, 2001).unwrap();
        let s = p.samples();
        assert!((s[0] - 1000.0).abs() < 1e-9);
        assert!((s[1000] - 1e-3).abs() < 1e-15);
        assert!((s[0] / s[1000] - 1e6).abs() < 1e-3);
        let theta = p.mixing_angles();
        assert!((theta[1000] - FRAC_PI_2).abs() < 0.05);
        assert!(theta[0] < 1.1e-3);
    }

    #[test]
    fn gaussian_is_mirror_symmetric() {
        for (xi, n) in [(2.0, 1000), (1000.0, 1001), (37.5, 4096)] {
            assert!(PulseProfile::gaussian(xi, 3.0, n).unwrap().mirror_residual() < 1e-12);
        }
    }

    #[test]
    fn gaussian_rejects_flat_or_coarse() {
        assert!(PulseProfile::gaussian(1.0, 1.0, 2000).is_err());
        assert!(PulseProfile::gaussian(10.0, 1.0, 999).is_err());
        assert!(PulseProfile::gaussian(10.0, 0.0, 2000).is_err());
    }

    #[test]
    fn storage_angle_profile_gives_unit_kappa() {
        let p = PulseProfile::constant_angle(FRAC_PI_2, 2.0, 1001).unwrap();
        let f = pulse_factors(&p, PulseConvention::Definition).unwrap();
        assert_eq!(f.kappa_theta, 1.0);
        assert!(f.zeta_theta.abs() < 1e-30);
        assert_eq!(f.alpha_theta, f.kappa_theta - 0.5);
    }

    #[test]
    fn paper_constants_mode() {
        let p = PulseProfile::gaussian(1000.0, 1.0, 2001).unwrap();
        let f = pulse_factors(&p, PulseConvention::PaperConstants).unwrap();
        assert_eq!(
            (f.kappa_theta, f.zeta_theta, f.alpha_theta),
            (3.2, 2.7, 2.7)
        );
    }

    #[test]
    fn definition_mode_converged_and_bounded() {
        let p = PulseProfile::gaussian(1000.0, 1.0, 2001).unwrap();
        let f = pulse_factors(&p, PulseConvention::Definition).unwrap();
        let fine = PulseProfile::gaussian(1000.0, 1.0, 4001).unwrap();
        assert!((fine.mean_sin_sq(1.0) - f.kappa_theta).abs() < 1e-8);
        assert!((fine.mean_sin_sq_double(1.0) - f.zeta_theta).abs() < 1e-8);
        assert!((0.0..=1.0).contains(&f.kappa_theta));
        assert!((0.0..=1.0).contains(&f.zeta_theta));
        // sin^2 theta ~ 1 once w < 1, i.e. for |s| > 1/sqrt 2 of each half
        assert!((f.kappa_theta - (1.0 - 0.5f64.sqrt())).abs() < 0.05);
    }

    #[test]
    fn refinement_detects_unresolved_profile() {
        // a sharp step tabulated on a coarse grid cannot converge
        let mut samples = vec![1e3; 11];
        for v in samples.iter_mut().take(8).skip(3) {
            *v = 1e-3;
        }
        let p = PulseProfile::tabulated(samples, 1.0).unwrap();
        assert!(matches!(
            pulse_factors(&p, PulseConvention::Definition),
            Err(Error::QuadratureNonConvergence { .. })
        ));
    }

    #[test]
    fn csv_profile_round_trip() {
        let g = PulseProfile::gaussian(50.0, 2.0, 1001).unwrap();
        let mut text = String::from("t,omega_over_sqrt_sum_g2\n");
        for (t, w) in g.times().iter().zip(g.samples()) {
            text.push_str(&format!("{t:.17e},{w:.17e}\n"));
        }
        let p = PulseProfile::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(p.grid_points(), 1001);
        assert!((p.tau_d() - 2.0).abs() < 1e-15);
        assert!((p.mean_sin_sq(1.0) - g.mean_sin_sq(1.0)).abs() < 1e-14);
        assert!(PulseProfile::from_csv_reader("t,w\n0,1\n".as_bytes()).is_err());
        let skewed = "t,omega_over_sqrt_sum_g2\n0,1\n0.5,2\n1,3\n";
        assert!(PulseProfile::from_csv_reader(skewed.as_bytes()).is_err());
    }

    #[test]
    fn adiabatic_margin_scalings() {
        let p = SystemParams {
            n_atoms: 10_000_000,
            delta: 0.0,
            delta_spread: 0.0,
            g: 0.1,
            g_spread: 0.0,
        };
        let scale = 10f64.powf(-2.5);
        let m = adiabatic_margin(&p, 1.0, 1).unwrap();
        assert!((m - 1.0 / scale).abs() / m < 1e-12);
        assert_eq!(adiabatic_margin(&p, f64::INFINITY, 1).unwrap(), f64::INFINITY);
        let doubled = SystemParams { n_atoms: 20_000_000, ..p };
        let ratio = adiabatic_margin(&doubled, 1.0, 1).unwrap() / m;
        assert!((ratio - 2f64.sqrt()).abs() < 1e-12);
        let detuned = SystemParams { delta: 100.0, ..p };
        assert!((adiabatic_margin(&detuned, 1.0, 1).unwrap() - 0.01 / scale).abs() < 1e-9);
        assert!(adiabatic_margin(&p, 1.0, 0).is_err());
    }
}
