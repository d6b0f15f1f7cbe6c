//! Multi-cycle reliabilities of memory-based devices.
//!
//! For `k` cycles with photon numbers `n = (n_1..n_k)` the reliability is
//!
//! ```text
//! R = sum_{n,n'} |C(n)|^2 |C(n')|^2 cos(gamma0 1^T d) exp(-d^T Sigma d / (2N)),  d = n - n'
//! ```
//!
//! with `Sigma = Gamma * rho`. Identity `rho` (repeater) factorizes into a power of the
//! single-cycle fidelity; all-ones `rho` (synchronizer) only sees `1^T d` and collapses to
//! the law of the total photon number. Other `rho` are summed over difference vectors,
//! each weighted by the product of per-cycle autocorrelations.

use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::berry::PhaseModel;
use crate::error::{Error, Result};
use crate::fidelity::{autocorrelation, dephased_sum};
use crate::fock::StoredState;

/// Largest number of difference vectors summed in custom mode.
pub const DEFAULT_TERM_BUDGET: u128 = 1_000_000;
const RHO_TOL: f64 = 1e-12;
const RANGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    #[serde(alias = "sync")]
    Synchronizer,
    Repeater,
    Custom,
}

impl CorrelationMode {
    pub fn label(&self) -> &'static str {
        match self {
            CorrelationMode::Synchronizer => "sync",
            CorrelationMode::Repeater => "repeater",
            CorrelationMode::Custom => "custom",
        }
    }
}

impl std::str::FromStr for CorrelationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sync" | "synchronizer" => Ok(CorrelationMode::Synchronizer),
            "repeater" => Ok(CorrelationMode::Repeater),
            "custom" => Ok(CorrelationMode::Custom),
            other => Err(Error::invalid(
                "mode",
                format!("unknown correlation mode '{other}' (sync|repeater|custom)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub k: usize,
    pub mode: CorrelationMode,
    /// Cycle correlation matrix, custom mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<Vec<f64>>>,
}

impl CorrelationSpec {
    pub fn synchronizer(k: usize) -> Self {
        CorrelationSpec {
            k,
            mode: CorrelationMode::Synchronizer,
            rho: None,
        }
    }

    pub fn repeater(k: usize) -> Self {
        CorrelationSpec {
            k,
            mode: CorrelationMode::Repeater,
            rho: None,
        }
    }

    pub fn custom(rho: Vec<Vec<f64>>) -> Result<Self> {
        let spec = CorrelationSpec {
            k: rho.len(),
            mode: CorrelationMode::Custom,
            rho: Some(rho),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The matrix `rho` with `Sigma = Gamma * rho`.
    pub fn effective_rho(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let k = self.k;
        Ok(match self.mode {
            CorrelationMode::Synchronizer => vec![vec![1.0; k]; k],
            CorrelationMode::Repeater => (0..k)
                .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            CorrelationMode::Custom => self.rho.clone().expect("validated"),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k", "need at least one cycle"));
        }
        match (self.mode, &self.rho) {
            (CorrelationMode::Custom, None) => {
                Err(Error::invalid("rho", "custom mode needs a correlation matrix"))
            }
            (CorrelationMode::Custom, Some(rho)) => validate_rho(rho, self.k),
            (_, Some(_)) => Err(Error::invalid("rho", "only custom mode takes a matrix")),
            (_, None) => Ok(()),
        }
    }
}

fn validate_rho(rho: &[Vec<f64>], k: usize) -> Result<()> {
    if rho.len() != k || rho.iter().any(|row| row.len() != k) {
        return Err(Error::invalid("rho", format!("matrix must be {k}x{k}")));
    }
    for i in 0..k {
        if rho[i][i] != 1.0 {
            return Err(Error::invalid("rho", format!("diagonal entry {i} is not 1")));
        }
        for j in 0..k {
            let v = rho[i][j];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid("rho", format!("entry ({i},{j}) = {v} outside [0, 1]")));
            }
            if (v - rho[j][i]).abs() > RHO_TOL {
                return Err(Error::invalid("rho", format!("not symmetric at ({i},{j})")));
            }
        }
    }
    if !positive_semidefinite(rho) {
        return Err(Error::invalid("rho", "matrix is not positive semidefinite"));
    }
    Ok(())
}

/// Cholesky with zero pivots allowed when the rest of their column vanishes.
fn positive_semidefinite(m: &[Vec<f64>]) -> bool {
    let k = m.len();
    let mut l = vec![vec![0.0; k]; k];
    for j in 0..k {
        let pivot = m[j][j] - (0..j).map(|p| l[j][p] * l[j][p]).sum::<f64>();
        if pivot < -1e-10 {
            return false;
        }
        let root = pivot.max(0.0).sqrt();
        l[j][j] = root;
        for i in j + 1..k {
            let r = m[i][j] - (0..j).map(|p| l[i][p] * l[j][p]).sum::<f64>();
            if root > 1e-7 {
                l[i][j] = r / root;
            } else if r.abs() > 1e-7 {
                return false;
            }
        }
    }
    true
}

/// Reads a headerless numeric CSV matrix.
pub fn read_rho_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::invalid("rho", format!("'{f}' is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_rho_path(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    read_rho_csv(std::fs::File::open(path)?)
}

fn check_range(value: f64, what: &str) {
    if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&value) {
        log::warn!("{what} reliability {value} lies outside [0, 1]; flagged for investigation");
    }
}

/// Law of the total photon number of independent cycles.
pub(crate) fn total_photon_law(states: &[StoredState]) -> Vec<f64> {
    let mut law = vec![1.0];
    for state in states {
        let p = state.probabilities();
        let mut next = vec![0.0; law.len() + p.len() - 1];
        for (i, a) in law.iter().enumerate() {
            for (j, b) in p.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        law = next;
    }
    law
}

/// Synchronizer reliability, fully correlated disorder across the `k = states.len()` cycles.
pub fn reliability_sync(states: &[StoredState], model: &PhaseModel, compensated: bool) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::invalid("states", "need at least one cycle"));
    }
    let a = autocorrelation(&total_photon_law(states));
    let value = dephased_sum(&a, model.gamma0, model.gamma_over_n(), compensated);
    check_range(value, "synchronizer");
    Ok(value)
}

/// Repeater-chain reliability, independent disorder in each of `k` identical cycles.
pub fn reliability_repeater(state: &StoredState, model: &PhaseModel, k: usize, compensated: bool) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k", "need at least one cycle"));
    }
    let a = autocorrelation(&state.probabilities());
    let value = dephased_sum(&a, model.gamma0, model.gamma_over_n(), compensated).powi(k as i32);
    check_range(value, "repeater");
    Ok(value)
}

pub fn reliability_general(
    states: &[StoredState],
    model: &PhaseModel,
    spec: &CorrelationSpec,
    compensated: bool,
) -> Result<f64> {
    reliability_general_with_budget(states, model, spec, compensated, DEFAULT_TERM_BUDGET)
}

/// Nested sum over difference vectors `d`, each cycle weighted by its autocorrelation.
///
/// The outer index is split across workers; partial sums are recombined in index order.
pub fn reliability_general_with_budget(
    states: &[StoredState],
    model: &PhaseModel,
    spec: &CorrelationSpec,
    compensated: bool,
    budget: u128,
) -> Result<f64> {
    if states.len() != spec.k {
        return Err(Error::invalid(
            "states",
            format!("spec has k = {} but {} states were given", spec.k, states.len()),
        ));
    }
    let rho = spec.effective_rho()?;
    let autos: Vec<Vec<f64>> = states.iter().map(|s| autocorrelation(&s.probabilities())).collect();
    let terms = autos
        .iter()
        .try_fold(1u128, |acc, a| acc.checked_mul(2 * a.len() as u128 - 1))
        .unwrap_or(u128::MAX);
    if terms > budget {
        return Err(Error::BudgetExceeded { terms, budget });
    }
    let k = spec.k;
    let g = model.gamma_over_n();
    let gamma0 = model.gamma0;
    let outer = autos[0].len() as i64 - 1;
    let partials: Vec<f64> = (-outer..=outer)
        .into_par_iter()
        .map(|d0| {
            let w0 = autos[0][d0.unsigned_abs() as usize];
            if w0 == 0.0 {
                return 0.0;
            }
            let mut d = vec![0i64; k];
            d[0] = d0;
            for j in 1..k {
                d[j] = -(autos[j].len() as i64 - 1);
            }
            let mut sum = 0.0;
            loop {
                let weight: f64 = w0 * (1..k).map(|j| autos[j][d[j].unsigned_abs() as usize]).product::<f64>();
                if weight != 0.0 {
                    let mut quad = 0.0;
                    for i in 0..k {
                        for j in 0..k {
                            quad += (d[i] * d[j]) as f64 * rho[i][j];
                        }
                    }
                    let osc = if compensated {
                        1.0
                    } else {
                        (gamma0 * d.iter().sum::<i64>() as f64).cos()
                    };
                    sum += weight * osc * (-0.5 * g * quad).exp();
                }
                // odometer over the inner cycles
                let mut j = k;
                loop {
                    if j == 1 {
                        return sum;
                    }
                    j -= 1;
                    let top = autos[j].len() as i64 - 1;
                    if d[j] < top {
                        d[j] += 1;
                        break;
                    }
                    d[j] = -top;
                }
            }
        })
        .collect();
    let value = partials.iter().sum();
    check_range(value, spec.mode.label());
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fidelity::fidelity_analytic;
    use crate::fock::{make_cat, make_coherent, make_fock, make_uniform};
    use num_complex::Complex64;

    fn coherent(a: f64) -> StoredState {
        make_coherent(Complex64::new(a, 0.0)).unwrap()
    }

    fn model(gamma_over_n: f64) -> PhaseModel {
        PhaseModel::from_variance(0.37, gamma_over_n * 100.0, 100)
    }

    #[test]
    fn single_cycle_is_the_fidelity() {
        let s = coherent(1.3);
        let m = model(0.05);
        for comp in [true, false] {
            let f = fidelity_analytic(&s, &m, comp).value;
            assert_eq!(reliability_sync(std::slice::from_ref(&s), &m, comp).unwrap(), f);
            assert_eq!(reliability_repeater(&s, &m, 1, comp).unwrap(), f);
        }
    }

    #[test]
    fn fock_cycles_are_perfect() {
        let states = vec![make_fock(2), make_fock(5), make_fock(0)];
        assert_eq!(reliability_sync(&states, &model(0.3), false).unwrap(), 1.0);
        let spec = CorrelationSpec::custom(vec![
            vec![1.0, 0.5, 0.0],
            vec![0.5, 1.0, 0.2],
            vec![0.0, 0.2, 1.0],
        ])
        .unwrap();
        assert_eq!(reliability_general(&states, &model(0.3), &spec, false).unwrap(), 1.0);
    }

    #[test]
    fn general_reduces_to_both_limits() {
        let s = coherent(1.0);
        let states = vec![s.clone(), s.clone(), s.clone()];
        let m = model(0.02);
        for comp in [true, false] {
            let rep = reliability_general(&states, &m, &CorrelationSpec::repeater(3), comp).unwrap();
            assert!((rep - reliability_repeater(&s, &m, 3, comp).unwrap()).abs() < 1e-12);
            let syn = reliability_general(&states, &m, &CorrelationSpec::synchronizer(3), comp).unwrap();
            assert!((syn - reliability_sync(&states, &m, comp).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_sweep_is_monotone() {
        let s = coherent(1.5);
        let states = vec![s.clone(), s];
        let m = model(0.05);
        let values: Vec<f64> = (0..=10)
            .map(|i| {
                let r = i as f64 / 10.0;
                let spec = CorrelationSpec::custom(vec![vec![1.0, r], vec![r, 1.0]]).unwrap();
                reliability_general(&states, &m, &spec, true).unwrap()
            })
            .collect();
        assert!(values.windows(2).all(|w| w[1] >= w[0]), "{values:?}");
        let s = &states[0];
        assert!((values[0] - reliability_repeater(s, &m, 2, true).unwrap()).abs() < 1e-12);
        assert!((values[10] - reliability_sync(&states, &m, true).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn permuting_cycles_leaves_value_unchanged() {
        let states = vec![coherent(1.0), make_uniform(3), make_cat(Complex64::new(1.2, 0.0), 0.0, 0.0).unwrap()];
        let rho = vec![
            vec![1.0, 0.3, 0.6],
            vec![0.3, 1.0, 0.1],
            vec![0.6, 0.1, 1.0],
        ];
        let m = model(0.04);
        let a = reliability_general(&states, &m, &CorrelationSpec::custom(rho.clone()).unwrap(), false).unwrap();
        let perm = [2, 0, 1];
        let states_p: Vec<_> = perm.iter().map(|&i| states[i].clone()).collect();
        let rho_p: Vec<Vec<f64>> = perm
            .iter()
            .map(|&i| perm.iter().map(|&j| rho[i][j]).collect())
            .collect();
        let b = reliability_general(&states_p, &m, &CorrelationSpec::custom(rho_p).unwrap(), false).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn invalid_matrices_rejected() {
        assert!(CorrelationSpec::custom(vec![vec![1.0, 0.2], vec![0.3, 1.0]]).is_err());
        assert!(CorrelationSpec::custom(vec![vec![0.9, 0.2], vec![0.2, 1.0]]).is_err());
        assert!(CorrelationSpec::custom(vec![vec![1.0, 1.2], vec![1.2, 1.0]]).is_err());
        let not_psd = vec![
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 1.0],
            vec![0.0, 1.0, 1.0],
        ];
        assert!(CorrelationSpec::custom(not_psd).is_err());
        assert!(CorrelationSpec::custom(vec![vec![1.0; 3]; 3]).is_ok());
    }

    #[test]
    fn budget_enforced() {
        let states = vec![make_uniform(30); 4];
        let err = reliability_general(&states, &model(0.1), &CorrelationSpec::repeater(4), true);
        assert!(matches!(err, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn rho_csv_parsing() {
        let rho = read_rho_csv("1, 0.5\n0.5, 1\n".as_bytes()).unwrap();
        assert_eq!(rho, vec![vec![1.0, 0.5], vec![0.5, 1.0]]);
        assert!(read_rho_csv("1, x\n".as_bytes()).is_err());
    }
}
