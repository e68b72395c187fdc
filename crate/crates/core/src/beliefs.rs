//! Bayesian estimate of an interacting vehicle's role from one-step
//! prediction residuals.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;
use crate::error::{Error, FieldError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeliefState {
    pub p_leader: f64,
    pub p_follower: f64,
}

impl Default for BeliefState {
    fn default() -> Self {
        Self::uniform()
    }
}

impl BeliefState {
    pub fn uniform() -> Self {
        Self {
            p_leader: 0.5,
            p_follower: 0.5,
        }
    }

    pub fn new(p_leader: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_leader) {
            return Err(Error::Domain(format!("probability {p_leader} outside [0, 1]")));
        }
        Ok(Self {
            p_leader,
            p_follower: 1.0 - p_leader,
        })
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.p_leader, self.p_follower]
    }

    pub fn is_valid(&self) -> bool {
        let [l, f] = self.as_array();
        (0.0..=1.0).contains(&l) && (0.0..=1.0).contains(&f) && (l + f - 1.0).abs() < 1e-12
    }
}

/// Which state components enter the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualScope {
    /// The interacting vehicle's `(x, y, v, psi)`.
    #[default]
    Interacting,
    /// Ego followed by interacting vehicle, 8 components.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeliefConfig {
    /// Residual covariance, row-major, 4x4 (or 8x8 for the joint scope).
    pub w: Vec<Vec<f64>>,
    /// Role transition matrix, rows `[leader, follower]`.
    pub transition: [[f64; 2]; 2],
    pub p0: BeliefState,
    pub floor: f64,
    pub scope: ResidualScope,
}

impl Default for BeliefConfig {
    fn default() -> Self {
        let diag = [0.25, 0.01, 0.25, 0.001];
        Self {
            w: (0..4)
                .map(|i| (0..4).map(|j| if i == j { diag[i] } else { 0.0 }).collect())
                .collect(),
            transition: [[1.0, 0.0], [0.0, 1.0]],
            p0: BeliefState::uniform(),
            floor: 1e-6,
            scope: ResidualScope::Interacting,
        }
    }
}

impl BeliefConfig {
    pub fn validate(&self, path: &str) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let dim = match self.scope {
            ResidualScope::Interacting => 4,
            ResidualScope::Joint => 8,
        };
        if self.w.len() != dim || self.w.iter().any(|r| r.len() != dim) {
            errs.push(FieldError::new(format!("{path}.w"), format!("must be {dim}x{dim}")));
        } else if let Err(e) = self.covariance() {
            errs.push(FieldError::new(format!("{path}.w"), e.to_string()));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (row[0] + row[1] - 1.0).abs() > 1e-9 {
                errs.push(FieldError::new(
                    format!("{path}.transition[{i}]"),
                    "must be a probability row summing to 1",
                ));
            }
        }
        if !self.p0.is_valid() {
            errs.push(FieldError::new(format!("{path}.p0"), "must be a valid distribution"));
        }
        if !(self.floor.is_finite() && (0.0..0.5).contains(&self.floor)) {
            errs.push(FieldError::new(format!("{path}.floor"), "must be in [0, 0.5)"));
        }
        errs
    }

    pub fn covariance(&self) -> Result<ResidualModel> {
        ResidualModel::new(&self.w)
    }
}

/// Zero-mean Gaussian residual density with a factorized covariance.
#[derive(Debug, Clone)]
pub struct ResidualModel {
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl ResidualModel {
    pub fn new(w: &[Vec<f64>]) -> Result<Self> {
        let n = w.len();
        if n == 0 || w.iter().any(|r| r.len() != n) {
            return Err(Error::Domain("covariance must be square and non-empty".into()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| w[i][j]);
        if (0..n).any(|i| (0..n).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12)) {
            return Err(Error::Domain("covariance is not symmetric".into()));
        }
        let chol = Cholesky::new(m).ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let log_norm = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self { chol, log_norm })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn log_density(&self, r: &[f64]) -> Result<f64> {
        if r.len() != self.dim() {
            return Err(Error::Domain(format!(
                "residual has {} components, covariance {}",
                r.len(),
                self.dim()
            )));
        }
        let v = DVector::from_column_slice(r);
        let z = self.chol.solve(&v);
        Ok(self.log_norm - 0.5 * v.dot(&z))
    }

    pub fn density(&self, r: &[f64]) -> Result<f64> {
        self.log_density(r).map(f64::exp)
    }

    /// Lower-triangular factor, for sampling `w = L z`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// Componentwise `observed - predicted`.
pub fn residual(observed: &VehicleState, predicted: &VehicleState) -> [f64; 4] {
    [
        observed.x - predicted.x,
        observed.y - predicted.y,
        observed.v - predicted.v,
        observed.psi - predicted.psi,
    ]
}

/// Multivariate normal density of `r` with covariance `w`.
pub fn likelihood(r: &[f64], w: &[Vec<f64>]) -> Result<f64> {
    ResidualModel::new(w)?.density(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefUpdate {
    pub posterior: BeliefState,
    /// Both likelihoods vanished and the prior was kept.
    pub degenerate: bool,
}

fn finish(unnorm: [f64; 2], floor: f64) -> BeliefState {
    let s = unnorm[0] + unnorm[1];
    let mut p = [unnorm[0] / s, unnorm[1] / s];
    if p[0] < floor || p[1] < floor {
        let lo = if p[0] < p[1] { 0 } else { 1 };
        p[lo] = floor;
        p[1 - lo] = 1.0 - floor;
    }
    BeliefState {
        p_leader: p[0],
        p_follower: 1.0 - p[0],
    }
}

fn predict(prior: &BeliefState, cfg: &BeliefConfig) -> [f64; 2] {
    let t = &cfg.transition;
    [
        prior.p_leader * t[0][0] + prior.p_follower * t[1][0],
        prior.p_leader * t[0][1] + prior.p_follower * t[1][1],
    ]
}

/// Posterior proportional to likelihood times predicted prior, then floored.
pub fn update_belief(prior: &BeliefState, lik_leader: f64, lik_follower: f64, cfg: &BeliefConfig) -> Result<BeliefUpdate> {
    if !(lik_leader >= 0.0 && lik_follower >= 0.0 && lik_leader.is_finite() && lik_follower.is_finite()) {
        return Err(Error::Domain("likelihoods must be finite and >= 0".into()));
    }
    let pri = predict(prior, cfg);
    let un = [lik_leader * pri[0], lik_follower * pri[1]];
    if un[0] + un[1] <= 0.0 {
        return Ok(BeliefUpdate {
            posterior: *prior,
            degenerate: true,
        });
    }
    Ok(BeliefUpdate {
        posterior: finish(un, cfg.floor),
        degenerate: false,
    })
}

/// [`update_belief`] from log-likelihoods, robust to densities that
/// underflow.
pub fn update_belief_log(prior: &BeliefState, ll_leader: f64, ll_follower: f64, cfg: &BeliefConfig) -> Result<BeliefUpdate> {
    if ll_leader.is_nan() || ll_follower.is_nan() || ll_leader == f64::INFINITY || ll_follower == f64::INFINITY {
        return Err(Error::Domain("log-likelihoods must not be NaN or +inf".into()));
    }
    let pri = predict(prior, cfg);
    let m = ll_leader.max(ll_follower);
    if m == f64::NEG_INFINITY {
        return Ok(BeliefUpdate {
            posterior: *prior,
            degenerate: true,
        });
    }
    let un = [(ll_leader - m).exp() * pri[0], (ll_follower - m).exp() * pri[1]];
    if un[0] + un[1] <= 0.0 {
        return Ok(BeliefUpdate {
            posterior: *prior,
            degenerate: true,
        });
    }
    Ok(BeliefUpdate {
        posterior: finish(un, cfg.floor),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(w: f64) -> Vec<Vec<f64>> {
        vec![vec![w]]
    }

    #[test]
    fn gaussian_values() {
        assert!((likelihood(&[0.0], &scalar(1.0)).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((likelihood(&[2.0], &scalar(1.0)).unwrap() - 0.053_990_966_513_188_06).abs() < 1e-15);
        assert!(likelihood(&[0.0], &scalar(-1.0)).is_err());
    }

    #[test]
    fn mode_at_zero() {
        let cfg = BeliefConfig::default();
        let m = cfg.covariance().unwrap();
        let at0 = m.density(&[0.0; 4]).unwrap();
        for r in [[0.1, 0.0, 0.0, 0.0], [0.0, -0.05, 0.2, 0.01]] {
            assert!(m.density(&r).unwrap() < at0);
        }
    }

    #[test]
    fn posterior_fixture() {
        let cfg = BeliefConfig::default();
        let u = update_belief(&BeliefState::uniform(), 0.39894, 0.05399, &cfg).unwrap();
        assert!((u.posterior.p_leader - 0.8808).abs() < 1e-4);
        let expected = 0.39894 / (0.39894 + 0.05399);
        assert!((u.posterior.p_leader - expected).abs() < 1e-15);
    }

    #[test]
    fn uninformative_and_degenerate() {
        let cfg = BeliefConfig::default();
        let prior = BeliefState::new(0.3).unwrap();
        let u = update_belief(&prior, 0.2, 0.2, &cfg).unwrap();
        assert!((u.posterior.p_leader - 0.3).abs() < 1e-15);
        let d = update_belief(&prior, 0.0, 0.0, &cfg).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.posterior, prior);
    }

    #[test]
    fn repeated_evidence_is_monotone() {
        let cfg = BeliefConfig::default();
        let mut b = BeliefState::uniform();
        for _ in 0..10 {
            let n = update_belief(&b, 0.3, 0.1, &cfg).unwrap().posterior;
            assert!(n.p_leader > b.p_leader || n.p_leader == 1.0 - cfg.floor);
            b = n;
        }
    }

    #[test]
    fn floor_keeps_roles_alive() {
        let cfg = BeliefConfig::default();
        let u = update_belief(&BeliefState::uniform(), 1.0, 1e-300, &cfg).unwrap();
        assert!((u.posterior.p_follower - cfg.floor).abs() < 1e-15);
        let u = update_belief_log(&BeliefState::uniform(), -5.0, -4000.0, &cfg).unwrap();
        assert!((u.posterior.p_follower - cfg.floor).abs() < 1e-15);
    }

    #[test]
    fn log_and_linear_agree() {
        let cfg = BeliefConfig::default();
        let prior = BeliefState::new(0.2).unwrap();
        let a = update_belief(&prior, 0.7, 0.05, &cfg).unwrap().posterior;
        let b = update_belief_log(&prior, 0.7_f64.ln(), 0.05_f64.ln(), &cfg).unwrap().posterior;
        assert!((a.p_leader - b.p_leader).abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        let mut cfg = BeliefConfig::default();
        assert!(cfg.validate("beliefs").is_empty());
        cfg.w[0][0] = -1.0;
        cfg.transition[1] = [0.7, 0.7];
        let errs = cfg.validate("beliefs");
        assert!(errs.iter().any(|e| e.path == "beliefs.w"));
        assert!(errs.iter().any(|e| e.path == "beliefs.transition[1]"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn posterior_valid(p in 0.0..=1.0f64, a in 0.0..10.0f64, b in 0.0..10.0f64) {
                let cfg = BeliefConfig::default();
                let u = update_belief(&BeliefState::new(p).unwrap(), a, b, &cfg).unwrap();
                prop_assert!(u.posterior.is_valid());
            }

            #[test]
            fn update_order_invariant(p in 0.01..0.99f64, a1 in 0.01..5.0f64, b1 in 0.01..5.0f64, a2 in 0.01..5.0f64, b2 in 0.01..5.0f64) {
                let cfg = BeliefConfig { floor: 0.0, ..BeliefConfig::default() };
                let prior = BeliefState::new(p).unwrap();
                let x = update_belief(&update_belief(&prior, a1, b1, &cfg).unwrap().posterior, a2, b2, &cfg).unwrap();
                let y = update_belief(&update_belief(&prior, a2, b2, &cfg).unwrap().posterior, a1, b1, &cfg).unwrap();
                prop_assert!((x.posterior.p_leader - y.posterior.p_leader).abs() < 1e-12);
            }
        }
    }
}
