//! Physical parameters of the coupled system.

use serde::{Deserialize, Serialize};

use crate::error::{FksError, Result};

/// Parameters of the doubly parabolic system
///
/// ```text
/// d/dt rho = -Lambda^alpha rho - chi div(rho grad c)
/// tau d/dt c = -Lambda^beta c + rho - gamma c
/// ```
///
/// `alpha` is the diffusion order of the cell density, `beta` the diffusion
/// order of the chemical, `chi >= 0` the chemotactic sensitivity, `gamma >= 0`
/// the chemical degradation rate and `tau > 0` the chemical time constant.
/// `tau = 0` (the parabolic-elliptic limit) is outside this toolkit's scope
/// and is rejected everywhere with an explanatory message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Spatial dimension (1..=3). The solution theory requires `d >= 2`;
    /// `d = 1` is accepted only by the purely spectral diagnostics.
    pub d: usize,
    /// Diffusion order of `rho`, in `(1, 2]`.
    pub alpha: f64,
    /// Diffusion order of `c`, in `(1, d]`.
    pub beta: f64,
    /// Chemotactic sensitivity, `>= 0`.
    pub chi: f64,
    /// Chemical degradation rate, `>= 0`.
    pub gamma: f64,
    /// Chemical time constant, `> 0`.
    pub tau: f64,
}

impl SystemParams {
    /// Validate the parameter ranges for a system run.
    ///
    /// # Errors
    ///
    /// Returns [`FksError::InvalidParam`] naming the first violated range.
    /// `tau == 0` is rejected with a message naming the parabolic-elliptic
    /// case, which this toolkit deliberately does not cover.
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(FksError::InvalidParam(format!(
                "dimension d = {} outside 1..=3",
                self.d
            )));
        }
        if !(self.alpha > 1.0 && self.alpha <= 2.0) {
            return Err(FksError::InvalidParam(format!(
                "alpha = {} outside (1, 2]",
                self.alpha
            )));
        }
        let beta_cap = self.d as f64;
        if !(self.beta > 1.0 && self.beta <= beta_cap) {
            return Err(FksError::InvalidParam(format!(
                "beta = {} outside (1, {}] for d = {}",
                self.beta, beta_cap, self.d
            )));
        }
        if self.chi < 0.0 {
            return Err(FksError::InvalidParam(format!("chi = {} < 0", self.chi)));
        }
        if self.gamma < 0.0 {
            return Err(FksError::InvalidParam(format!(
                "gamma = {} < 0",
                self.gamma
            )));
        }
        if self.tau == 0.0 {
            return Err(FksError::InvalidParam(
                "tau = 0 selects the parabolic-elliptic case, which is out of scope; \
                 the doubly parabolic system requires tau > 0"
                    .into(),
            ));
        }
        if !(self.tau > 0.0) {
            return Err(FksError::InvalidParam(format!(
                "tau = {} must be > 0",
                self.tau
            )));
        }
        Ok(())
    }
}
