//! Bulk dispersion of congruent lithium niobate and the material constants
//! every other module reads.
//!
//! Wavelengths are in micrometres and temperatures in degrees Celsius. The
//! physical constants are SI.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Vacuum permittivity, F/m.
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    #[serde(rename = "o")]
    O,
    #[serde(rename = "e")]
    E,
}

impl Polarization {
    pub fn other(self) -> Self {
        match self {
            Self::O => Self::E,
            Self::E => Self::O,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::O => f.write_str("o"),
            Self::E => f.write_str("e"),
        }
    }
}

/// Temperature-dependent Sellmeier law
///
/// `n² = a1 + (a2 + b1 F) / (λ² − (a3 + b2 F)²) + b3 F − a4 λ²`
/// with `F = (T − T0)(T + T0 + offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellmeierTerms {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl SellmeierTerms {
    fn n_squared(&self, wl: f64, f: f64) -> f64 {
        let pole = self.a3 + self.b2 * f;
        self.a1 + (self.a2 + self.b1 * f) / (wl * wl - pole * pole) + self.b3 * f
            - self.a4 * wl * wl
    }

    fn d_n_squared(&self, wl: f64, f: f64) -> f64 {
        let pole = self.a3 + self.b2 * f;
        let den = wl * wl - pole * pole;
        -2.0 * wl * (self.a2 + self.b1 * f) / (den * den) - 2.0 * self.a4 * wl
    }
}

/// One polarization's index law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum IndexLaw {
    Sellmeier(SellmeierTerms),
    /// Dispersionless medium, used for toy models and limit checks.
    Constant { n: f64 },
}

/// Bulk dispersion model with its validity window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellmeierModel {
    pub name: String,
    pub citation: String,
    pub ordinary: IndexLaw,
    pub extraordinary: IndexLaw,
    /// `T0` in the temperature factor, °C.
    pub reference_temperature_c: f64,
    /// Additive offset in the second factor of `F`, °C.
    pub temperature_offset_c: f64,
    pub wavelength_range_um: [f64; 2],
    pub temperature_range_c: [f64; 2],
}

impl SellmeierModel {
    /// Edwards & Lawrence (1984) congruent LiNbO3.
    pub fn congruent_lithium_niobate() -> Self {
        Self {
            name: "edwards-lawrence-1984".into(),
            citation: "G. J. Edwards and M. Lawrence, Opt. Quantum Electron. 16, 373-375 (1984)"
                .into(),
            ordinary: IndexLaw::Sellmeier(SellmeierTerms {
                a1: 4.9048,
                a2: 0.11775,
                a3: 0.21802,
                a4: 0.027153,
                b1: 2.2314e-8,
                b2: -2.9671e-8,
                b3: 2.1429e-8,
            }),
            extraordinary: IndexLaw::Sellmeier(SellmeierTerms {
                a1: 4.5820,
                a2: 0.099169,
                a3: 0.21090,
                a4: 0.021940,
                b1: 5.2716e-8,
                b2: -4.9143e-8,
                b3: 2.2971e-7,
            }),
            reference_temperature_c: 24.5,
            temperature_offset_c: 546.0,
            wavelength_range_um: [0.4, 3.1],
            temperature_range_c: [-50.0, 375.0],
        }
    }

    /// Dispersionless birefringent toy medium.
    pub fn constant(n_o: f64, n_e: f64) -> Self {
        Self {
            name: "constant".into(),
            citation: String::new(),
            ordinary: IndexLaw::Constant { n: n_o },
            extraordinary: IndexLaw::Constant { n: n_e },
            reference_temperature_c: 0.0,
            temperature_offset_c: 0.0,
            wavelength_range_um: [0.2, 10.0],
            temperature_range_c: [-273.15, 1000.0],
        }
    }

    fn law(&self, pol: Polarization) -> &IndexLaw {
        match pol {
            Polarization::O => &self.ordinary,
            Polarization::E => &self.extraordinary,
        }
    }

    fn temperature_factor(&self, t: f64) -> f64 {
        let t0 = self.reference_temperature_c;
        (t - t0) * (t + t0 + self.temperature_offset_c)
    }

    pub fn check_window(&self, wl: f64, t: f64) -> Result<()> {
        let [wmin, wmax] = self.wavelength_range_um;
        if !(wmin..=wmax).contains(&wl) {
            return Err(Error::OutOfValidityRange {
                quantity: "wavelength_um",
                value: wl,
                min: wmin,
                max: wmax,
            });
        }
        let [tmin, tmax] = self.temperature_range_c;
        if !(tmin..=tmax).contains(&t) {
            return Err(Error::OutOfValidityRange {
                quantity: "temperature_c",
                value: t,
                min: tmin,
                max: tmax,
            });
        }
        Ok(())
    }

    /// Bulk refractive index `n_σ(λ, T)`.
    pub fn bulk_index(&self, pol: Polarization, wl: f64, t: f64) -> Result<f64> {
        self.check_window(wl, t)?;
        Ok(match self.law(pol) {
            IndexLaw::Sellmeier(s) => s.n_squared(wl, self.temperature_factor(t)).sqrt(),
            IndexLaw::Constant { n } => *n,
        })
    }

    /// `dn/dλ` in 1/μm, from the analytic derivative of the Sellmeier form.
    pub fn index_derivative(&self, pol: Polarization, wl: f64, t: f64) -> Result<f64> {
        self.check_window(wl, t)?;
        Ok(match self.law(pol) {
            IndexLaw::Sellmeier(s) => {
                let f = self.temperature_factor(t);
                s.d_n_squared(wl, f) / (2.0 * s.n_squared(wl, f).sqrt())
            }
            IndexLaw::Constant { .. } => 0.0,
        })
    }
}

impl Default for SellmeierModel {
    fn default() -> Self {
        Self::congruent_lithium_niobate()
    }
}

/// Nonlinear and electro-optic tensor elements, in pm/V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialConstants {
    pub d31_pm_per_v: f64,
    pub gamma51_pm_per_v: f64,
}

impl Default for MaterialConstants {
    fn default() -> Self {
        Self {
            d31_pm_per_v: 4.6,
            gamma51_pm_per_v: 32.6,
        }
    }
}

impl MaterialConstants {
    pub fn validate(&self) -> Result<()> {
        if self.d31_pm_per_v > 0.0 && self.gamma51_pm_per_v > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "material constants must be strictly positive".into(),
            ))
        }
    }

    pub fn d31_m_per_v(&self) -> f64 {
        self.d31_pm_per_v * 1e-12
    }

    pub fn gamma51_m_per_v(&self) -> f64 {
        self.gamma51_pm_per_v * 1e-12
    }
}

/// The dispersion model plus tensor constants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Material {
    pub sellmeier: SellmeierModel,
    pub constants: MaterialConstants,
}

impl Material {
    pub fn bulk_index(&self, pol: Polarization, wl: f64, t: f64) -> Result<f64> {
        self.sellmeier.bulk_index(pol, wl, t)
    }

    pub fn index_derivative(&self, pol: Polarization, wl: f64, t: f64) -> Result<f64> {
        self.sellmeier.index_derivative(pol, wl, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln() -> SellmeierModel {
        SellmeierModel::congruent_lithium_niobate()
    }

    // Hand evaluation of the ordinary/extraordinary laws at 1.3162 um, 25 C:
    // F = 0.5 * 595 = 297.5, giving n_o = 2.21983, n_e = 2.14542.
    #[test]
    fn indices_at_idler() {
        let no = ln().bulk_index(Polarization::O, 1.3162, 25.0).unwrap();
        let ne = ln().bulk_index(Polarization::E, 1.3162, 25.0).unwrap();
        assert!((no - 2.219_833).abs() < 5e-6, "{no}");
        assert!((ne - 2.145_419).abs() < 5e-6, "{ne}");
        assert!((no - 2.22).abs() < 0.01 && (ne - 2.14).abs() < 0.01);
        assert!(ne < no);
    }

    #[test]
    fn below_window_is_rejected() {
        let err = ln().bulk_index(Polarization::O, 0.2, 25.0).unwrap_err();
        assert!(matches!(err, Error::OutOfValidityRange { .. }));
        assert!(ln().bulk_index(Polarization::O, 1.0, 900.0).is_err());
    }

    #[test]
    fn constant_model_has_zero_derivative() {
        let m = SellmeierModel::constant(2.0, 1.9);
        assert_eq!(m.index_derivative(Polarization::O, 1.2, 25.0).unwrap(), 0.0);
    }

    #[test]
    fn normal_dispersion_sign() {
        let d = ln().index_derivative(Polarization::O, 1.3162, 25.0).unwrap();
        assert!(d < 0.0);
    }

    #[test]
    fn richardson_matches_analytic() {
        let m = ln();
        for pol in [Polarization::O, Polarization::E] {
            let (wl, t) = (1.3162, 25.0);
            let fd = |h: f64| {
                (m.bulk_index(pol, wl + h, t).unwrap() - m.bulk_index(pol, wl - h, t).unwrap())
                    / (2.0 * h)
            };
            let h = 1e-3;
            let rich = (4.0 * fd(h / 2.0) - fd(h)) / 3.0;
            let exact = m.index_derivative(pol, wl, t).unwrap();
            assert!(((rich - exact) / exact).abs() < 1e-8, "{rich} vs {exact}");
        }
    }

    #[test]
    fn constants_positive() {
        assert!(MaterialConstants::default().validate().is_ok());
        let bad = MaterialConstants { d31_pm_per_v: 0.0, gamma51_pm_per_v: 1.0 };
        assert!(bad.validate().is_err());
    }
}
