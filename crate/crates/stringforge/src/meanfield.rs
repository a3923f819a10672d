//! Mean-field growth of string weight under random packed circuits.
//!
//! Tracking only the density `rho` of occupied lines (and, for 3-bit gates,
//! the stationary 3:4 split between flip-carrying and phase-only occupation
//! on scrambled strings) closes the dynamics into a one-variable flow
//! `d(rho)/d(tau) = rate(rho) / n`, with `tau` counting applied gates.

use crate::{Error, Result};

/// Which local update rule drives the flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanFieldModel {
    /// Random 3-bit reversible gates.
    ThreeBitGates,
    /// Haar-random two-qubit unitaries.
    TwoQubitHaar,
}

impl MeanFieldModel {
    /// Stable fixed point of the density flow.
    pub fn fixed_point(self) -> f64 {
        match self {
            MeanFieldModel::ThreeBitGates => 0.5,
            MeanFieldModel::TwoQubitHaar => 0.75,
        }
    }

    /// `n * d(rho)/d(tau)` as a function of the current density.
    pub fn rate(self, rho: f64) -> f64 {
        match self {
            MeanFieldModel::ThreeBitGates => (12.0 / 7.0) * rho * (0.5 - rho) * (2.5 - rho),
            MeanFieldModel::TwoQubitHaar => (8.0 / 5.0) * rho * (0.75 - rho),
        }
    }

    /// Exact number of gates needed to grow the density from `rho_i` to
    /// `rho_f`, by quadrature of the flow.
    pub fn hitting_time(self, n: u32, rho_i: f64, rho_f: f64) -> Result<f64> {
        let fp = self.fixed_point();
        for (name, rho) in [("rho_i", rho_i), ("rho_f", rho_f)] {
            if !(rho > 0.0 && rho < fp) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("density {rho} outside the flow interval (0, {fp})"),
                });
            }
        }
        let nf = f64::from(n);
        Ok(match self {
            MeanFieldModel::ThreeBitGates => {
                // 1/(rho (1/2-rho)(5/2-rho)) = (4/5)/rho + 1/(1/2-rho) - (1/5)/(5/2-rho)
                (7.0 / 12.0)
                    * nf
                    * (0.8 * (rho_f / rho_i).ln() - ((0.5 - rho_f) / (0.5 - rho_i)).ln()
                        + 0.2 * ((2.5 - rho_f) / (2.5 - rho_i)).ln())
            }
            MeanFieldModel::TwoQubitHaar => {
                (5.0 / 6.0) * nf * ((rho_f * (0.75 - rho_i)) / (rho_i * (0.75 - rho_f))).ln()
            }
        })
    }
}

/// Integrates the density flow for `tau` gates starting from `rho0`, with
/// adaptive classic Runge-Kutta (step doubling, relative tolerance 1e-10).
pub fn evolve(model: MeanFieldModel, n: u32, rho0: f64, tau: f64) -> f64 {
    let nf = f64::from(n);
    let f = |rho: f64| model.rate(rho.clamp(0.0, model.fixed_point())) / nf;
    let mut rho = rho0;
    let mut t = 0.0;
    let mut h = tau.max(1.0) / 64.0;
    while t < tau {
        if t + h > tau {
            h = tau - t;
        }
        let full = rk4_step(&f, rho, h);
        let half = rk4_step(&f, rk4_step(&f, rho, h / 2.0), h / 2.0);
        let err = (full - half).abs();
        let scale = 1e-10 * half.abs().max(1e-3);
        if err > scale && h > 1e-9 {
            h /= 2.0;
            continue;
        }
        rho = half;
        t += h;
        if err < scale / 32.0 {
            h *= 2.0;
        }
    }
    rho
}

fn rk4_step(f: &impl Fn(f64) -> f64, y: f64, h: f64) -> f64 {
    let k1 = f(y);
    let k2 = f(y + 0.5 * h * k1);
    let k3 = f(y + 0.5 * h * k2);
    let k4 = f(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Density samples along the flow at the requested gate counts.
pub fn trajectory(model: MeanFieldModel, n: u32, rho0: f64, taus: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(taus.len());
    let mut rho = rho0;
    let mut last = 0.0;
    for &tau in taus {
        debug_assert!(tau >= last);
        rho = evolve(model, n, rho, tau - last);
        last = tau;
        out.push(rho);
    }
    out
}
