//! Reduced Han photosystem kinetics.
//!
//! The inhibited fraction `C` of the photosystems obeys the single linear ODE
//!
//! ```text
//! dC/dt = -α(I) C + β(I),   α(I) = β(I) + k_r,   β(I) = k_d τ (σI)² / (τσI + 1)
//! ```
//!
//! and the net specific growth rate is affine in `C`:
//!
//! ```text
//! μ(C, I) = -γ(I) C + ζ(I),   γ(I) = kσI / (τσI + 1),   ζ(I) = γ(I) - R
//! ```
//!
//! All rates are in s⁻¹ and light intensities in µmol·m⁻²·s⁻¹. The
//! I-derivatives are analytic because they enter the adjoint gradient.

use crate::error::{ModelError, Result};

/// Seconds per day, for reporting rates in d⁻¹.
pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Han model constants plus respiration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HanParams {
    /// Repair rate (s⁻¹).
    pub k_r: f64,
    /// Damage ratio (dimensionless).
    pub k_d: f64,
    /// Turnover time (s).
    pub tau: f64,
    /// Specific photon absorption (m²·µmol⁻¹).
    pub sigma: f64,
    /// Energy-to-growth factor (dimensionless).
    pub k: f64,
    /// Respiration rate (s⁻¹).
    pub respiration: f64,
}

impl Default for HanParams {
    fn default() -> Self {
        Self {
            k_r: 6.8e-3,
            k_d: 2.99e-4,
            tau: 0.25,
            sigma: 0.047,
            k: 8.7e-6,
            respiration: 1.389e-7,
        }
    }
}

/// Rates and their I-derivatives evaluated at one light level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSet {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub d_alpha: f64,
    pub d_beta: f64,
    pub d_gamma: f64,
    pub d_zeta: f64,
}

impl HanParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("k_r", self.k_r),
            ("k_d", self.k_d),
            ("tau", self.tau),
            ("sigma", self.sigma),
            ("k", self.k),
            ("R", self.respiration),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParameter {
                    name,
                    value,
                    reason: "must be strictly positive",
                });
            }
        }
        Ok(())
    }

    #[inline]
    fn saturation(&self, light: f64) -> f64 {
        self.tau * self.sigma * light + 1.0
    }

    /// Damage rate β(I).
    #[inline]
    pub fn beta(&self, light: f64) -> f64 {
        let si = self.sigma * light;
        self.k_d * self.tau * si * si / self.saturation(light)
    }

    /// Relaxation rate α(I) = β(I) + k_r.
    #[inline]
    pub fn alpha(&self, light: f64) -> f64 {
        self.beta(light) + self.k_r
    }

    /// Photosynthetic production γ(I).
    #[inline]
    pub fn gamma(&self, light: f64) -> f64 {
        self.k * self.sigma * light / self.saturation(light)
    }

    /// ζ(I) = γ(I) - R; negative at low light.
    #[inline]
    pub fn zeta(&self, light: f64) -> f64 {
        self.gamma(light) - self.respiration
    }

    #[inline]
    pub fn d_beta(&self, light: f64) -> f64 {
        let s = self.saturation(light);
        let ts = self.tau * self.sigma;
        self.k_d * self.tau * self.sigma * self.sigma * light * (ts * light + 2.0) / (s * s)
    }

    #[inline]
    pub fn d_alpha(&self, light: f64) -> f64 {
        self.d_beta(light)
    }

    #[inline]
    pub fn d_gamma(&self, light: f64) -> f64 {
        let s = self.saturation(light);
        self.k * self.sigma / (s * s)
    }

    #[inline]
    pub fn d_zeta(&self, light: f64) -> f64 {
        self.d_gamma(light)
    }

    /// Net specific growth rate μ(C, I).
    #[inline]
    pub fn growth_rate(&self, inhibited: f64, light: f64) -> f64 {
        -self.gamma(light) * inhibited + self.zeta(light)
    }

    /// Equilibrium inhibited fraction C*(I) = β/α, in [0, 1).
    #[inline]
    pub fn steady_state_c(&self, light: f64) -> f64 {
        let beta = self.beta(light);
        beta / (beta + self.k_r)
    }

    /// Growth rate at the equilibrium fraction for constant light.
    #[inline]
    pub fn steady_growth(&self, light: f64) -> f64 {
        self.growth_rate(self.steady_state_c(light), light)
    }

    /// All rates and derivatives at once, sharing the saturation term.
    pub fn rates(&self, light: f64) -> RateSet {
        let s = self.saturation(light);
        let si = self.sigma * light;
        let ts = self.tau * self.sigma;
        let beta = self.k_d * self.tau * si * si / s;
        let gamma = self.k * si / s;
        let d_beta = self.k_d * self.tau * self.sigma * si * (ts * light + 2.0) / (s * s);
        let d_gamma = self.k * self.sigma / (s * s);
        RateSet {
            alpha: beta + self.k_r,
            beta,
            gamma,
            zeta: gamma - self.respiration,
            d_alpha: d_beta,
            d_beta,
            d_gamma,
            d_zeta: d_gamma,
        }
    }

    /// Light level at which steady growth exactly balances respiration.
    ///
    /// Solves `k_d τ R (σI)² + (k_r τ σ R - k_r k σ) I + k_r R = 0` and returns
    /// the smaller positive root, which must lie in `(0, surface)`.
    pub fn compensation_intensity(&self, surface: f64) -> Result<f64> {
        let r = self.respiration;
        let a = self.k_d * self.tau * r * self.sigma * self.sigma;
        let b = self.k_r * self.tau * self.sigma * r - self.k_r * self.k * self.sigma;
        let c = self.k_r * r;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 || a <= 0.0 {
            return Err(ModelError::NoCompensationRoot { surface });
        }
        // Cancellation-free pair of roots.
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        let mut roots = [q / a, c / q];
        roots.sort_by(|x, y| x.total_cmp(y));
        let root = roots
            .into_iter()
            .find(|&i| i > 0.0 && i < surface && i.is_finite())
            .ok_or(ModelError::NoCompensationRoot { surface })?;
        debug_assert!(self.steady_growth(root).abs() <= 1e-12);
        Ok(root)
    }
}

/// Light-extinction constants for the variable-volume (areal) problem.
///
/// Extinction is affine in biomass, `ε(X) = α₀ X + α₁`, and the biomass is
/// regulated so that steady growth vanishes at the mean bottom depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArealParams {
    /// Specific extinction of the species (m²·gC⁻¹).
    pub alpha0: f64,
    /// Background turbidity (m⁻¹).
    pub alpha1: f64,
    /// Surface light (µmol·m⁻²·s⁻¹).
    pub surface: f64,
    /// Compensation intensity at the mean bottom (µmol·m⁻²·s⁻¹).
    pub compensation: f64,
}

impl ArealParams {
    /// Builds the areal constants using the compensation root of `han`.
    pub fn from_han(alpha0: f64, alpha1: f64, surface: f64, han: &HanParams) -> Result<Self> {
        let params = Self {
            alpha0,
            alpha1,
            surface,
            compensation: han.compensation_intensity(surface)?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "alpha0",
                value: self.alpha0,
                reason: "must be strictly positive",
            });
        }
        if !(self.alpha1 >= 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "alpha1",
                value: self.alpha1,
                reason: "must be non-negative",
            });
        }
        if !(self.compensation > 0.0 && self.compensation < self.surface) {
            return Err(ModelError::InvalidParameter {
                name: "I_zb",
                value: self.compensation,
                reason: "must lie strictly between 0 and the surface light",
            });
        }
        Ok(())
    }

    /// Optical depth of the mean bottom, ln(I_s / I_zb).
    #[inline]
    pub fn optical_depth(&self) -> f64 {
        (self.surface / self.compensation).ln()
    }

    /// α₂ = ln(I_s/I_zb) / α₀ (gC·m⁻²).
    #[inline]
    pub fn alpha2(&self) -> f64 {
        self.optical_depth() / self.alpha0
    }

    /// α₃ = α₁ / α₀ (gC·m⁻³).
    #[inline]
    pub fn alpha3(&self) -> f64 {
        self.alpha1 / self.alpha0
    }

    /// Biomass per unit ground surface, X(a₀)·a₀ = α₂ - α₃ a₀.
    #[inline]
    pub fn areal_loading(&self, mean_depth: f64) -> f64 {
        self.alpha2() - self.alpha3() * mean_depth
    }

    /// Biomass concentration X(a₀) meeting the compensation condition.
    pub fn biomass_concentration(&self, mean_depth: f64) -> Result<f64> {
        if !(mean_depth > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "a0",
                value: mean_depth,
                reason: "mean depth must be positive",
            });
        }
        let x = (self.optical_depth() / mean_depth - self.alpha1) / self.alpha0;
        if x < 0.0 {
            return Err(ModelError::NegativeBiomass { a0: mean_depth });
        }
        Ok(x)
    }

    /// Extinction coefficient ε = ln(I_s/I_zb) / a₀ implied by the compensation condition.
    #[inline]
    pub fn extinction(&self, mean_depth: f64) -> f64 {
        self.optical_depth() / mean_depth
    }

    /// Mean depth maximizing the flat-raceway areal objective, α₂ / (2α₃).
    pub fn optimal_mean_depth(&self) -> Result<f64> {
        let a3 = self.alpha3();
        if !(a3 > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "alpha1",
                value: self.alpha1,
                reason: "optimal depth needs positive background turbidity",
            });
        }
        Ok(self.alpha2() / (2.0 * a3))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Reference values evaluated in 30-digit arithmetic from the closed forms.
    const BETA_2000: f64 = 0.026_958_816_326_530_612;
    const ALPHA_2000: f64 = 0.033_758_816_326_530_612;
    const GAMMA_2000: f64 = 3.337_959_183_673_469_4e-5;
    const CSTAR_2000: f64 = 0.798_571_136_670_571_92;
    const MU_2000: f64 = 6.584_713_242_073_725_9e-6;
    const I_ZB: f64 = 0.341_054_091_911_890_63;

    #[test]
    fn rates_at_zero_light() {
        let p = HanParams::default();
        assert_eq!(p.beta(0.0), 0.0);
        assert_eq!(p.alpha(0.0), 6.8e-3);
        assert_eq!(p.gamma(0.0), 0.0);
        assert_eq!(p.zeta(0.0), -p.respiration);
        assert_eq!(p.steady_state_c(0.0), 0.0);
        assert_eq!(p.steady_growth(0.0), -p.respiration);
        assert_eq!(p.growth_rate(0.7, 0.0), -p.respiration);
    }

    #[test]
    fn rates_at_full_sun() {
        let p = HanParams::default();
        assert_relative_eq!(p.beta(2000.0), BETA_2000, max_relative = 1e-13);
        assert_relative_eq!(p.alpha(2000.0), ALPHA_2000, max_relative = 1e-13);
        assert_relative_eq!(p.gamma(2000.0), GAMMA_2000, max_relative = 1e-13);
        assert_relative_eq!(p.steady_state_c(2000.0), CSTAR_2000, max_relative = 1e-13);
        assert_relative_eq!(p.steady_growth(2000.0), MU_2000, max_relative = 1e-11);
        // ≈ 0.57 d⁻¹
        assert!((p.steady_growth(2000.0) * SECONDS_PER_DAY - 0.569).abs() < 1e-3);
    }

    #[test]
    fn rate_set_matches_individual_functions() {
        let p = HanParams::default();
        for light in [0.0, 0.3, 20.0, 450.0, 2000.0] {
            let r = p.rates(light);
            assert_relative_eq!(r.alpha, p.alpha(light), max_relative = 1e-15);
            assert_relative_eq!(r.beta, p.beta(light), max_relative = 1e-15);
            assert_relative_eq!(r.gamma, p.gamma(light), max_relative = 1e-15);
            assert_relative_eq!(r.zeta, p.zeta(light), max_relative = 1e-15, epsilon = 1e-20);
            assert_relative_eq!(r.d_beta, p.d_beta(light), max_relative = 1e-15);
            assert_relative_eq!(r.d_gamma, p.d_gamma(light), max_relative = 1e-15);
        }
    }

    #[test]
    fn compensation_root() {
        let p = HanParams::default();
        let root = p.compensation_intensity(2000.0).unwrap();
        assert_relative_eq!(root, I_ZB, max_relative = 1e-12);
        assert!(p.steady_growth(root).abs() <= 1e-12);
        // Bisection on μ as an independent route.
        let (mut lo, mut hi) = (1e-6, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p.steady_growth(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(root, lo, max_relative = 1e-10);
    }

    #[test]
    fn no_compensation_without_growth() {
        let p = HanParams {
            k: 0.0,
            ..HanParams::default()
        };
        assert_eq!(
            p.compensation_intensity(2000.0),
            Err(ModelError::NoCompensationRoot { surface: 2000.0 })
        );
        // Root above the available light is rejected too.
        let dim = HanParams::default();
        assert!(dim.compensation_intensity(0.2).is_err());
    }

    #[test]
    fn areal_constants() {
        let han = HanParams::default();
        let ap = ArealParams::from_han(0.2, 10.0, 2000.0, &han).unwrap();
        assert_relative_eq!(ap.alpha2(), 43.383_083_232_565_43, max_relative = 1e-10);
        assert_eq!(ap.alpha3(), 50.0);
        assert_relative_eq!(
            ap.optimal_mean_depth().unwrap(),
            0.433_830_832_325_654_3,
            max_relative = 1e-10
        );
        // Hand evaluation: (ln(2000/I_zb)/0.4 - 10)/0.2
        let x = ap.biomass_concentration(0.4).unwrap();
        assert_relative_eq!(x, 58.457_708_081_413_58, max_relative = 1e-10);
        assert_relative_eq!(x * 0.4, ap.areal_loading(0.4), max_relative = 1e-12);
        let zero = ap.alpha2() / ap.alpha3();
        assert!(ap.biomass_concentration(zero).unwrap().abs() < 1e-12);
        assert_eq!(
            ap.biomass_concentration(zero * 1.1),
            Err(ModelError::NegativeBiomass { a0: zero * 1.1 })
        );
        assert_relative_eq!(ap.extinction(0.4) * 0.4, ap.optical_depth(), max_relative = 1e-15);
    }

    #[test]
    fn doubling_turbidity_halves_optimal_depth() {
        let han = HanParams::default();
        let a = ArealParams::from_han(0.2, 10.0, 2000.0, &han).unwrap();
        let b = ArealParams { alpha1: 20.0, ..a };
        assert_relative_eq!(
            b.optimal_mean_depth().unwrap(),
            0.5 * a.optimal_mean_depth().unwrap(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn invalid_params_rejected() {
        let p = HanParams {
            tau: -1.0,
            ..HanParams::default()
        };
        assert!(p.validate().is_err());
        assert!(HanParams::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn alpha_minus_beta_is_repair_rate(light in 0.0f64..5000.0) {
            let p = HanParams::default();
            prop_assert!((p.alpha(light) - p.beta(light) - p.k_r).abs() <= 1e-15);
            prop_assert!(p.beta(light) / p.alpha(light) < 1.0);
        }

        #[test]
        fn steady_fraction_in_unit_interval(light in 0.0f64..1e7) {
            let c = HanParams::default().steady_state_c(light);
            prop_assert!((0.0..1.0).contains(&c));
        }

        #[test]
        fn gamma_monotone_and_bounded(light in 0.0f64..1e5, dl in 1e-3f64..100.0) {
            let p = HanParams::default();
            prop_assert!(p.gamma(light + dl) > p.gamma(light));
            prop_assert!(p.gamma(light) < p.k / p.tau);
            prop_assert!(p.beta(light + dl) > p.beta(light));
        }

        #[test]
        fn analytic_derivatives_match_differences(light in 0.05f64..3000.0) {
            let p = HanParams::default();
            let h = 1e-6 * light;
            let fd = |f: &dyn Fn(f64) -> f64| (f(light + h) - f(light - h)) / (2.0 * h);
            let db = fd(&|i| p.beta(i));
            let dg = fd(&|i| p.gamma(i));
            prop_assert!((db - p.d_beta(light)).abs() <= 1e-6 * p.d_beta(light).abs());
            prop_assert!((dg - p.d_gamma(light)).abs() <= 1e-6 * p.d_gamma(light).abs());
            prop_assert_eq!(p.d_alpha(light), p.d_beta(light));
            prop_assert_eq!(p.d_zeta(light), p.d_gamma(light));
        }
    }
}
