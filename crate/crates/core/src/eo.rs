//! Coupled-mode propagation of the signal's o/e amplitudes under the
//! quasi-phase-matched electro-optic interaction.
//!
//! Lengths in metres, coupling and detuning in rad/m, fields in V/m.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::Polarization;
use crate::numeric::ode::{dopri5, Tolerances, Trajectory};
use crate::numeric::optimize::{bisect, golden_section_max};

/// Parameters of one electro-optic section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EoSetting {
    pub field_v_per_m: f64,
    /// κ ≥ 0, rad/m.
    pub kappa_per_m: f64,
    /// Residual mismatch Δβ3 − K, rad/m.
    pub detuning_per_m: f64,
    pub length_m: f64,
}

impl EoSetting {
    pub fn validate(&self) -> Result<()> {
        if self.kappa_per_m >= 0.0 && self.length_m > 0.0 && self.detuning_per_m.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid EO setting {self:?}")))
        }
    }
}

/// Complex o/e amplitudes of the signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldAmplitudes {
    pub o: Complex64,
    pub e: Complex64,
}

impl FieldAmplitudes {
    pub fn new(o: Complex64, e: Complex64) -> Self {
        Self { o, e }
    }

    pub fn pure(pol: Polarization) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match pol {
            Polarization::O => Self::new(one, zero),
            Polarization::E => Self::new(zero, one),
        }
    }

    pub fn power(&self) -> f64 {
        self.o.norm_sqr() + self.e.norm_sqr()
    }

    fn to_state(self) -> [f64; 4] {
        [self.o.re, self.o.im, self.e.re, self.e.im]
    }

    fn from_state(y: [f64; 4]) -> Self {
        Self::new(Complex64::new(y[0], y[1]), Complex64::new(y[2], y[3]))
    }
}

/// κ = π n_o² n_e² γ51 E_a |G| F / (λ √(n_o n_e)), in rad/m.
pub fn coupling_coefficient(
    signal_um: f64,
    n_o: f64,
    n_e: f64,
    gamma51_pm_per_v: f64,
    field_v_per_m: f64,
    g_eff: f64,
    f_eo: f64,
) -> f64 {
    let wl_m = signal_um * 1e-6;
    PI * n_o * n_o * n_e * n_e * gamma51_pm_per_v * 1e-12 * field_v_per_m * g_eff.abs() * f_eo
        / (wl_m * (n_o * n_e).sqrt())
}

fn coupled_rhs(kappa: f64, delta: f64) -> impl Fn(f64, &[f64; 4]) -> [f64; 4] {
    move |x, y| {
        let a_o = Complex64::new(y[0], y[1]);
        let a_e = Complex64::new(y[2], y[3]);
        let phase = Complex64::from_polar(1.0, delta * x);
        let i_kappa = Complex64::new(0.0, kappa);
        let d_o = i_kappa * a_e * phase;
        let d_e = i_kappa * a_o * phase.conj();
        [d_o.re, d_o.im, d_e.re, d_e.im]
    }
}

fn integrate(setting: &EoSetting, initial: &FieldAmplitudes, tol: Tolerances) -> Result<Trajectory<4>> {
    setting.validate()?;
    if initial.power() == 0.0 {
        return Err(Error::ZeroPower);
    }
    dopri5(
        coupled_rhs(setting.kappa_per_m, setting.detuning_per_m),
        0.0,
        initial.to_state(),
        setting.length_m,
        tol,
    )
}

fn eo_tolerances() -> Tolerances {
    Tolerances {
        rtol: 1e-10,
        atol: 1e-12,
        ..Tolerances::default()
    }
}

/// Integrates `dA_o/dx = iκ A_e e^{iδx}`, `dA_e/dx = iκ A_o e^{−iδx}` over the device.
pub fn propagate(setting: &EoSetting, initial: &FieldAmplitudes) -> Result<FieldAmplitudes> {
    if setting.kappa_per_m == 0.0 {
        setting.validate()?;
        return Ok(*initial);
    }
    Ok(FieldAmplitudes::from_state(integrate(setting, initial, eo_tolerances())?.last()))
}

/// `(x, P_o, P_e)` at `samples` evenly spaced positions from dense output.
pub fn propagate_trace(
    setting: &EoSetting,
    initial: &FieldAmplitudes,
    samples: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    let traj = integrate(setting, initial, eo_tolerances())?;
    let n = samples.max(2);
    Ok((0..n)
        .map(|k| {
            let x = setting.length_m * k as f64 / (n - 1) as f64;
            let a = FieldAmplitudes::from_state(traj.eval(x));
            (x, a.o.norm_sqr(), a.e.norm_sqr())
        })
        .collect())
}

/// Closed-form converted fraction for a pure input:
/// `(κ²/Ω²)·sin²(ΩL)` with `Ω = √(κ² + (δ/2)²)`.
pub fn analytic_conversion(kappa_per_m: f64, detuning_per_m: f64, length_m: f64) -> f64 {
    let omega = (kappa_per_m * kappa_per_m + 0.25 * detuning_per_m * detuning_per_m).sqrt();
    if omega == 0.0 {
        return 0.0;
    }
    let s = (omega * length_m).sin();
    (kappa_per_m / omega).powi(2) * s * s
}

/// Fraction of power in `converted`.
pub fn conversion_efficiency(out: &FieldAmplitudes, converted: Polarization) -> Result<f64> {
    let total = out.power();
    if total == 0.0 {
        return Err(Error::ZeroPower);
    }
    let part = match converted {
        Polarization::O => out.o.norm_sqr(),
        Polarization::E => out.e.norm_sqr(),
    };
    Ok(part / total)
}

/// κ per unit field (rad/m per V/m) that yields `efficiency` at `field`
/// over `length_m` with zero detuning, on the first conversion lobe.
pub fn calibrated_slope(efficiency: f64, length_m: f64, field_v_per_m: f64) -> Result<f64> {
    if !(efficiency > 0.0 && efficiency <= 1.0 && length_m > 0.0 && field_v_per_m > 0.0) {
        return Err(Error::InvalidParameter("calibration needs η in (0,1], L > 0, E > 0".into()));
    }
    Ok(efficiency.sqrt().asin() / length_m / field_v_per_m)
}

/// Smallest field reaching `eta_target` on the first conversion maximum.
///
/// `slope` is κ per unit applied field.
pub fn field_for_target(eta_target: f64, length_m: f64, detuning_per_m: f64, slope: f64) -> Result<f64> {
    if !(eta_target > 0.0 && eta_target <= 1.0) || !(length_m > 0.0) || !(slope > 0.0) {
        return Err(Error::InvalidParameter(
            "field_for_target needs 0 < η ≤ 1, L > 0, slope > 0".into(),
        ));
    }
    let eta = |field: f64| analytic_conversion(slope * field, detuning_per_m, length_m);
    // κ steps of π/(64 L) resolve every oscillation of sin²(ΩL), since dΩ/dκ ≤ 1
    let step = PI / (64.0 * length_m * slope);
    let mut prev = 0.0;
    let mut k = 1usize;
    let peak_bracket = loop {
        let cur = eta(k as f64 * step);
        if cur < prev {
            break ((k.saturating_sub(2)) as f64 * step, k as f64 * step);
        }
        prev = cur;
        k += 1;
        if k > 1_000_000 {
            return Err(Error::NonConvergence("field_for_target maximum scan"));
        }
    };
    let (field_peak, eta_peak) = golden_section_max(eta, peak_bracket.0, peak_bracket.1, step * 1e-9);
    if eta_peak < eta_target - 1e-12 {
        return Err(Error::Unreachable {
            target: eta_target,
            ceiling: eta_peak,
        });
    }
    if eta_target >= eta_peak {
        return Ok(field_peak);
    }
    bisect(|f| eta(f) - eta_target, 0.0, field_peak, field_peak * 1e-12, 0.0)
}

/// Field giving κL = π/2 with zero detuning.
pub fn full_conversion_field(length_m: f64, slope: f64) -> f64 {
    FRAC_PI_2 / (length_m * slope)
}
