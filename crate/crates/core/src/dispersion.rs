//! Phase-matching terms from tabulated refractive indices.
//!
//! The tables are interpolated with local three-point Lagrange stencils in
//! each axis; derivatives of those stencils are second-order accurate in the
//! grid spacing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in µm/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e14;

/// `n(ω, φ)` on a rectangular grid, row-major in ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexTable {
    /// Angular frequency, rad/s.
    pub omega: Vec<f64>,
    /// Phase-matching angle, rad.
    pub phi: Vec<f64>,
    /// `n[i * phi.len() + j] = n(omega[i], phi[j])`.
    pub n: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionSamples {
    pub pump: IndexTable,
    pub signal: IndexTable,
    pub idler: IndexTable,
}

/// The dispersion-derived part of a [`crate::PhaseMatchConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionTerms {
    pub k_p: f64,
    pub k_s: f64,
    pub k_i: f64,
    pub n_p: f64,
    pub n_s: f64,
    /// Group-index difference `c·(dK_s/dω − dK_i/dω)`.
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DispersionError {
    #[error("{table}: {axis} = {value} lies outside the tabulated range")]
    OutOfGridRange {
        table: &'static str,
        axis: &'static str,
        value: f64,
    },
    #[error("{table}: {reason}")]
    BadGrid { table: &'static str, reason: String },
}

impl IndexTable {
    pub fn from_fn(omega: Vec<f64>, phi: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = omega
            .iter()
            .flat_map(|&w| phi.iter().map(move |&p| (w, p)))
            .map(|(w, p)| f(w, p))
            .collect();
        Self { omega, phi, n }
    }

    fn check(&self, table: &'static str) -> Result<(), DispersionError> {
        let bad = |reason: &str| DispersionError::BadGrid {
            table,
            reason: reason.to_string(),
        };
        for (axis, grid) in [("omega", &self.omega), ("phi", &self.phi)] {
            if grid.len() < 3 {
                return Err(bad(&format!("{axis} needs at least 3 points")));
            }
            if grid.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(bad(&format!("{axis} must be strictly increasing")));
            }
        }
        if self.n.len() != self.omega.len() * self.phi.len() {
            return Err(bad("index table size does not match the axes"));
        }
        Ok(())
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.n[i * self.phi.len() + j]
    }

    fn stencil(
        grid: &[f64],
        x: f64,
        table: &'static str,
        axis: &'static str,
    ) -> Result<(usize, [f64; 3], [f64; 3]), DispersionError> {
        if !(x >= grid[0] && x <= grid[grid.len() - 1]) {
            return Err(DispersionError::OutOfGridRange { table, axis, value: x });
        }
        // Centre the three-point stencil on the nearest node.
        let nearest = grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let start = nearest.clamp(1, grid.len() - 2) - 1;
        let (x0, x1, x2) = (grid[start], grid[start + 1], grid[start + 2]);
        let value = [
            (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2)),
            (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2)),
            (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1)),
        ];
        let slope = [
            ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2)),
            ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2)),
            ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1)),
        ];
        Ok((start, value, slope))
    }

    /// `(n, ∂n/∂ω, ∂n/∂φ)` at `(omega, phi)`.
    fn evaluate(&self, table: &'static str, omega: f64, phi: f64) -> Result<(f64, f64, f64), DispersionError> {
        let (i0, wv, wd) = Self::stencil(&self.omega, omega, table, "omega")?;
        let (j0, pv, pd) = Self::stencil(&self.phi, phi, table, "phi")?;
        let (mut n, mut dn_domega, mut dn_dphi) = (0.0, 0.0, 0.0);
        for a in 0..3 {
            for b in 0..3 {
                let s = self.at(i0 + a, j0 + b);
                n += wv[a] * pv[b] * s;
                dn_domega += wd[a] * pv[b] * s;
                dn_dphi += wv[a] * pd[b] * s;
            }
        }
        Ok((n, dn_domega, dn_dphi))
    }
}

/// `K`, `𝒩` and `D` at the central frequencies and phase-matching angle.
pub fn walkoff_from_dispersion(
    samples: &DispersionSamples,
    omega_p: f64,
    omega_s: f64,
    omega_i: f64,
    phi_0: f64,
) -> Result<DispersionTerms, DispersionError> {
    samples.pump.check("pump")?;
    samples.signal.check("signal")?;
    samples.idler.check("idler")?;
    let c = SPEED_OF_LIGHT;
    let (np, _, dnp_dphi) = samples.pump.evaluate("pump", omega_p, phi_0)?;
    let (ns, dns_domega, dns_dphi) = samples.signal.evaluate("signal", omega_s, phi_0)?;
    let (ni, dni_domega, _) = samples.idler.evaluate("idler", omega_i, phi_0)?;
    // d(nω/c)/dω = (n + ω ∂n/∂ω)/c; D is reported times c (group index).
    let group_s = ns + omega_s * dns_domega;
    let group_i = ni + omega_i * dni_domega;
    Ok(DispersionTerms {
        k_p: np * omega_p / c,
        k_s: ns * omega_s / c,
        k_i: ni * omega_i / c,
        n_p: omega_p / c * dnp_dphi,
        n_s: omega_s / c * dns_dphi,
        d: group_s - group_i,
    })
}

impl DispersionTerms {
    pub fn into_config(self, theta_i: f64, theta_s: f64, length: f64) -> crate::PhaseMatchConfig {
        crate::PhaseMatchConfig {
            k_p: self.k_p,
            k_s: self.k_s,
            k_i: self.k_i,
            n_p: self.n_p,
            n_s: self.n_s,
            d: self.d,
            theta_i,
            theta_s,
            length,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OMEGA_P: f64 = 5.366e15;
    const OMEGA_S: f64 = 2.683e15;

    fn axis(center: f64, half: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| center - half + 2.0 * half * k as f64 / (n - 1) as f64)
            .collect()
    }

    fn samples(n: usize, f: impl Fn(f64, f64) -> f64 + Copy) -> DispersionSamples {
        let phi = axis(0.9, 0.05, n);
        let table = |center| IndexTable::from_fn(axis(center, 2e14, n), phi.clone(), f);
        DispersionSamples {
            pump: table(OMEGA_P),
            signal: table(OMEGA_S),
            idler: table(OMEGA_S),
        }
    }

    #[test]
    fn angle_independent_index_has_no_walkoff() {
        let s = samples(7, |w, _| 1.8 + 1e-17 * w);
        let t = walkoff_from_dispersion(&s, OMEGA_P, OMEGA_S, OMEGA_S, 0.9).unwrap();
        assert!(t.n_p.abs() < 1e-12 && t.n_s.abs() < 1e-12);
    }

    #[test]
    fn degenerate_identical_arms_have_zero_d() {
        let s = samples(7, |w, p| 1.8 + 1e-17 * w + 0.01 * p);
        let t = walkoff_from_dispersion(&s, OMEGA_P, OMEGA_S, OMEGA_S, 0.9).unwrap();
        assert_eq!(t.d, 0.0);
        assert_eq!(t.k_s, t.k_i);
    }

    #[test]
    fn quadratic_index_gives_exact_derivative() {
        let f = |_: f64, p: f64| 1.7 + 0.2 * p - 0.3 * p * p;
        let s = samples(9, f);
        let phi0 = 0.913;
        let t = walkoff_from_dispersion(&s, OMEGA_P, OMEGA_S, OMEGA_S, phi0).unwrap();
        let exact = OMEGA_P / SPEED_OF_LIGHT * (0.2 - 0.6 * phi0);
        assert!(((t.n_p - exact) / exact).abs() < 1e-6);
        let kp = f(0.0, phi0) * OMEGA_P / SPEED_OF_LIGHT;
        assert!(((t.k_p - kp) / kp).abs() < 1e-12);
    }

    #[test]
    fn group_index_difference() {
        // n = a + bω gives group index a + 2bω.
        let s = DispersionSamples {
            signal: IndexTable::from_fn(axis(OMEGA_S, 2e14, 5), axis(0.9, 0.05, 5), |w, _| 1.6 + 2e-17 * w),
            idler: IndexTable::from_fn(axis(OMEGA_S, 2e14, 5), axis(0.9, 0.05, 5), |w, _| 1.6 + 1e-17 * w),
            pump: IndexTable::from_fn(axis(OMEGA_P, 2e14, 5), axis(0.9, 0.05, 5), |_, _| 1.7),
        };
        let t = walkoff_from_dispersion(&s, OMEGA_P, OMEGA_S, OMEGA_S, 0.9).unwrap();
        let expected = 2.0 * 1e-17 * OMEGA_S;
        assert!((t.d - expected).abs() < 1e-10);
    }

    #[test]
    fn second_order_convergence() {
        // Evaluate on a node so the stencil is the symmetric central difference.
        let f = |_: f64, p: f64| 1.7 + 0.05 * (3.0 * p).sin();
        let phi0: f64 = 0.9;
        let exact = OMEGA_P / SPEED_OF_LIGHT * 0.15 * (3.0 * phi0).cos();
        let err = |n: usize| {
            let s = samples(n, f);
            let t = walkoff_from_dispersion(&s, OMEGA_P, OMEGA_S, OMEGA_S, phi0).unwrap();
            (t.n_p - exact).abs()
        };
        let (e1, e2, e3) = (err(5), err(9), err(17));
        let r1 = e1 / e2;
        let r2 = e2 / e3;
        assert!((r1 - 4.0).abs() < 0.2 && (r2 - 4.0).abs() < 0.1, "{r1} {r2}");
    }

    #[test]
    fn out_of_range_is_an_error() {
        let s = samples(5, |_, _| 1.7);
        let err = walkoff_from_dispersion(&s, OMEGA_P, OMEGA_S, OMEGA_S, 1.5).unwrap_err();
        assert!(matches!(err, DispersionError::OutOfGridRange { axis: "phi", .. }));
        let err = walkoff_from_dispersion(&s, 1e15, OMEGA_S, OMEGA_S, 0.9).unwrap_err();
        assert!(matches!(err, DispersionError::OutOfGridRange { table: "pump", .. }));
    }

    #[test]
    fn short_grid_rejected() {
        let mut s = samples(5, |_, _| 1.7);
        s.idler.phi.truncate(2);
        assert!(matches!(
            walkoff_from_dispersion(&s, OMEGA_P, OMEGA_S, OMEGA_S, 0.9),
            Err(DispersionError::BadGrid { .. })
        ));
    }
}
