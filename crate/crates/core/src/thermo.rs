//! Barotropic pressure law `p = a rho + b rho^gamma` and its free energy.

use thiserror::Error;

use crate::spaces::CellField;

#[derive(Debug, Error, PartialEq)]
pub enum ThermoError {
    #[error("adiabatic exponent must exceed 1, got {0}")]
    Exponent(f64),
    #[error("pressure coefficients must be non-negative and not both zero (a_lin = {a_lin}, b = {b})")]
    Coefficients { a_lin: f64, b: f64 },
    #[error("reference density must be positive, got {0}")]
    Reference(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureLaw {
    pub a_lin: f64,
    pub b: f64,
    pub gamma: f64,
}

impl PressureLaw {
    pub fn new(a_lin: f64, b: f64, gamma: f64) -> Result<PressureLaw, ThermoError> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(ThermoError::Exponent(gamma));
        }
        if !(a_lin >= 0.0 && b >= 0.0) || (a_lin == 0.0 && b == 0.0) || !a_lin.is_finite() || !b.is_finite() {
            return Err(ThermoError::Coefficients { a_lin, b });
        }
        Ok(PressureLaw { a_lin, b, gamma })
    }

    /// Whether the law has `p'(0) > 0` and `gamma >= 3/2`, the range covered
    /// by the error estimates.
    pub fn within_theory(&self) -> bool {
        self.a_lin > 0.0 && self.gamma >= 1.5
    }

    /// Large-density limit of `p'(rho) / rho^(gamma-1)`.
    pub fn p_infinity(&self) -> f64 {
        self.b * self.gamma
    }

    pub fn pressure(&self, rho: f64) -> f64 {
        self.a_lin * rho + self.b * rho.powf(self.gamma)
    }

    pub fn dpressure(&self, rho: f64) -> f64 {
        self.a_lin + self.b * self.gamma * rho.powf(self.gamma - 1.0)
    }

    /// Free energy with `H(1) = 0`, extended by `H(0) = 0`.
    pub fn free_energy(&self, rho: f64) -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        self.a_lin * rho * rho.ln() + self.b * (rho.powf(self.gamma) - rho) / (self.gamma - 1.0)
    }

    pub fn dfree_energy(&self, rho: f64) -> f64 {
        self.a_lin * (rho.ln() + 1.0)
            + self.b * (self.gamma * rho.powf(self.gamma - 1.0) - 1.0) / (self.gamma - 1.0)
    }

    pub fn d2free_energy(&self, rho: f64) -> f64 {
        self.a_lin / rho + self.b * self.gamma * rho.powf(self.gamma - 2.0)
    }

    /// Bregman divergence `E(rho | z) = H(rho) - H'(z)(rho - z) - H(z)`.
    pub fn relative_energy(&self, rho: f64, z: f64) -> Result<f64, ThermoError> {
        if !(z > 0.0) {
            return Err(ThermoError::Reference(z));
        }
        Ok(self.relative_energy_unchecked(rho, z))
    }

    pub(crate) fn relative_energy_unchecked(&self, rho: f64, z: f64) -> f64 {
        self.free_energy(rho) - self.dfree_energy(z) * (rho - z) - self.free_energy(z)
    }

    /// Largest `c` with `E(rho|z) >= c (rho - z)^2` on the sampled band
    /// `rho in [z/2, 2z]`, minimized over the given references `z`.
    pub fn fit_quadratic_lower_bound(&self, references: &[f64], samples: usize) -> f64 {
        let mut c = f64::INFINITY;
        for &z in references {
            for k in 0..=samples {
                let rho = z * (0.5 + 1.5 * k as f64 / samples as f64);
                if (rho - z).abs() < 1e-8 * z {
                    continue;
                }
                c = c.min(self.relative_energy_unchecked(rho, z) / (rho - z).powi(2));
            }
        }
        c
    }

    /// Exponent `a` of the spatial error term for the standard scheme.
    pub fn rate_exponent(&self) -> f64 {
        if self.gamma <= 2.0 {
            ((2.0 * self.gamma - 3.0) / self.gamma).max(0.0)
        } else {
            0.5
        }
    }

    /// Exponent for the stabilized and modified-upwind schemes.
    pub fn rate_exponent_stabilized(&self, epsilon: f64) -> f64 {
        let eps_rate = (1.0 - epsilon) / 2.0;
        if self.gamma < 2.0 {
            ((2.0 * self.gamma - 3.0) / self.gamma).max(0.0).min(eps_rate)
        } else {
            eps_rate
        }
    }
}

/// Cell masks for the essential band `[r_lo/2, 2 r_hi]` and its complement.
#[derive(Debug, Clone, PartialEq)]
pub struct EssentialSplit {
    pub essential: Vec<bool>,
}

impl EssentialSplit {
    pub fn new(rho: &CellField, r_lo: f64, r_hi: f64) -> EssentialSplit {
        assert!(0.0 < r_lo && r_lo <= r_hi, "need 0 < r_lo <= r_hi");
        EssentialSplit {
            essential: rho
                .values
                .iter()
                .map(|&r| (0.5 * r_lo..=2.0 * r_hi).contains(&r))
                .collect(),
        }
    }

    pub fn num_essential(&self) -> usize {
        self.essential.iter().filter(|&&e| e).count()
    }

    pub fn num_residual(&self) -> usize {
        self.essential.len() - self.num_essential()
    }

    pub fn residual_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.essential
            .iter()
            .enumerate()
            .filter(|(_, &e)| !e)
            .map(|(i, _)| i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law() -> PressureLaw {
        PressureLaw::new(1.0, 1.0, 2.0).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(PressureLaw::new(1.0, 1.0, 1.0), Err(ThermoError::Exponent(1.0)));
        assert!(PressureLaw::new(0.0, 0.0, 2.0).is_err());
        assert!(PressureLaw::new(-1.0, 1.0, 2.0).is_err());
        assert!(!PressureLaw::new(0.0, 1.0, 2.0).unwrap().within_theory());
        assert!(law().within_theory());
    }

    #[test]
    fn free_energy_values() {
        let l = law();
        assert_eq!(l.free_energy(1.0), 0.0);
        assert!((l.free_energy(2.0) - (2.0 * 2f64.ln() + 2.0)).abs() < 1e-14);
        assert!((l.free_energy(2.0) - 3.386294).abs() < 1e-6);
        assert_eq!(l.free_energy(0.0), 0.0);
        let pure = PressureLaw::new(0.0, 1.0, 2.0).unwrap();
        for rho in [0.3, 1.0, 2.5] {
            assert!((pure.free_energy(rho) - (rho * rho - rho)).abs() < 1e-14);
            assert!((pure.pressure(rho) - rho * rho).abs() < 1e-14);
        }
    }

    /// Composite Simpson on `rho * int_1^rho p(z)/z^2 dz`.
    fn free_energy_by_quadrature(l: &PressureLaw, rho: f64) -> f64 {
        let n = 2000;
        let h = (rho - 1.0) / n as f64;
        let f = |z: f64| l.pressure(z) / (z * z);
        let mut s = f(1.0) + f(rho);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(1.0 + i as f64 * h);
        }
        rho * s * h / 3.0
    }

    #[test]
    fn free_energy_matches_quadrature() {
        for l in [law(), PressureLaw::new(0.5, 2.0, 1.4).unwrap()] {
            for rho in [0.2, 0.7, 2.0, 5.0] {
                let q = free_energy_by_quadrature(&l, rho);
                assert!((q - l.free_energy(rho)).abs() < 1e-9 * (1.0 + q.abs()), "rho={rho}");
            }
        }
    }

    #[test]
    fn relative_energy_values() {
        let l = law();
        assert_eq!(l.relative_energy(3.0, 3.0).unwrap(), 0.0);
        assert!((l.relative_energy(2.0, 1.0).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-14);
        assert_eq!(l.relative_energy(1.0, 0.0), Err(ThermoError::Reference(0.0)));
        let c = l.fit_quadratic_lower_bound(&[0.5, 1.0, 2.0], 200);
        assert!(c > 0.0);
    }

    #[test]
    fn ode_identity_on_log_grid() {
        for l in [law(), PressureLaw::new(0.2, 3.0, 1.5).unwrap(), PressureLaw::new(1.0, 0.5, 3.0).unwrap()] {
            for k in 0..=120 {
                let rho = 10f64.powf(-6.0 + 12.0 * k as f64 / 120.0);
                let lhs = rho * l.dfree_energy(rho) - l.free_energy(rho);
                let p = l.pressure(rho);
                assert!((lhs - p).abs() <= 1e-10 * (1.0 + p), "rho={rho}");
                assert!(l.d2free_energy(rho) > 0.0);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let l = PressureLaw::new(0.7, 1.3, 1.8).unwrap();
        for rho in [0.1, 0.5, 1.0, 3.0, 10.0] {
            let d = 1e-5 * rho;
            let fd = |f: &dyn Fn(f64) -> f64| (f(rho + d) - f(rho - d)) / (2.0 * d);
            let checks = [
                (fd(&|r| l.pressure(r)), l.dpressure(rho)),
                (fd(&|r| l.free_energy(r)), l.dfree_energy(rho)),
                (fd(&|r| l.dfree_energy(r)), l.d2free_energy(rho)),
            ];
            for (approx, exact) in checks {
                assert!((approx - exact).abs() <= 1e-6 * exact.abs().max(1.0), "rho={rho}");
            }
        }
    }

    #[test]
    fn pressure_growth_identifies_p_infinity() {
        let l = PressureLaw::new(1.0, 2.0, 2.5).unwrap();
        let rho = 1e8;
        let ratio = l.dpressure(rho) / rho.powf(l.gamma - 1.0);
        assert!((ratio - l.p_infinity()).abs() < 1e-6 * l.p_infinity());
        assert_eq!(l.pressure(0.0), 0.0);
    }

    #[test]
    fn rate_exponents() {
        assert_eq!(law().rate_exponent(), 0.5);
        assert_eq!(PressureLaw::new(1.0, 1.0, 1.5).unwrap().rate_exponent(), 0.0);
        assert_eq!(PressureLaw::new(1.0, 1.0, 4.0).unwrap().rate_exponent(), 0.5);
        assert_eq!(law().rate_exponent_stabilized(0.0), 0.5);
        assert_eq!(law().rate_exponent_stabilized(0.5), 0.25);
        let g175 = PressureLaw::new(1.0, 1.0, 1.75).unwrap();
        assert!((g175.rate_exponent_stabilized(0.0) - 0.5 / 1.75).abs() < 1e-15);
    }

    #[test]
    fn essential_split() {
        let rho = CellField { values: vec![1.0, 1.0, 10.0, 0.4, 0.5] };
        let s = EssentialSplit::new(&rho, 1.0, 1.0);
        assert_eq!(s.essential, vec![true, true, false, false, true]);
        assert_eq!(s.num_essential() + s.num_residual(), 5);
        assert_eq!(s.residual_cells().collect::<Vec<_>>(), vec![2, 3]);
    }
}
