//! Biphoton spectra, anticorrelation dips and entanglement entropy in the
//! single-detuning reduction.
//!
//! Detuning ν in rad/s (signal at Ω_s + ν, idler at Ω_i − ν), walk-off
//! coefficients in s/m, lengths in metres.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grating::{effective_coefficient, PolingDesign};
use crate::material::{Polarization, SPEED_OF_LIGHT, VACUUM_PERMITTIVITY};
use crate::numeric::optimize::bisect;
use crate::qpm::PhaseMatchSolution;
use crate::waveguide::{dispersion_parameter, overlap_integral, ModeSolver, Propagation};

use Polarization::{E, O};

/// `e^{−ix/2}·sin(x/2)/(x/2)`.
pub fn h_eval(x: f64) -> Complex64 {
    let half = 0.5 * x;
    let sinc = if half.abs() < 1e-8 {
        1.0 - half * half / 6.0
    } else {
        half.sin() / half
    };
    Complex64::from_polar(sinc, -half)
}

fn h_norm_sqr(x: f64) -> f64 {
    let half = 0.5 * x;
    if half.abs() < 1e-8 {
        1.0 - half * half / 3.0
    } else {
        let s = half.sin() / half;
        s * s
    }
}

/// Half-power point of `|h(x)|²`.
pub const H_HALF_POWER: f64 = 2.783_114_756_503;

/// The four mismatches expanded in ν.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Process {
    /// o-signal, e-idler down-conversion
    Oeo,
    /// e-signal, o-idler down-conversion
    Eoo,
    /// signal o → e
    Oe,
    /// signal e → o
    Eo,
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Process::Oeo => "oeo",
            Process::Eoo => "eoo",
            Process::Oe => "oe",
            Process::Eo => "eo",
        })
    }
}

/// Δβ(ν) in rad/m relative to the design point.
pub type MismatchFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Linearized mismatch `Δβ(ν) = D·ν`, optionally replaced by a full evaluator.
#[derive(Clone)]
pub struct DetuningExpansion {
    pub process: Process,
    pub walkoff_s_per_m: f64,
    pub full: Option<MismatchFn>,
}

impl fmt::Debug for DetuningExpansion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DetuningExpansion")
            .field("process", &self.process)
            .field("walkoff_s_per_m", &self.walkoff_s_per_m)
            .field("full", &self.full.is_some())
            .finish()
    }
}

impl DetuningExpansion {
    pub fn linear(process: Process, walkoff_s_per_m: f64) -> Self {
        Self {
            process,
            walkoff_s_per_m,
            full: None,
        }
    }

    pub fn with_full(mut self, f: MismatchFn) -> Self {
        self.full = Some(f);
        self
    }

    pub fn delta_beta(&self, nu: f64) -> f64 {
        match &self.full {
            Some(f) => f(nu),
            None => self.walkoff_s_per_m * nu,
        }
    }
}

/// Group delays per unit length `β′ = dβ/dω`, s/m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupDelays {
    pub signal_o: f64,
    pub signal_e: f64,
    pub idler_o: f64,
    pub idler_e: f64,
}

impl GroupDelays {
    pub fn evaluate<P: Propagation + ?Sized>(
        model: &P,
        signal_um: f64,
        idler_um: f64,
        temperature_c: f64,
    ) -> Result<Self> {
        Ok(Self {
            signal_o: dispersion_parameter(model, O, signal_um, temperature_c)?,
            signal_e: dispersion_parameter(model, E, signal_um, temperature_c)?,
            idler_o: dispersion_parameter(model, O, idler_um, temperature_c)?,
            idler_e: dispersion_parameter(model, E, idler_um, temperature_c)?,
        })
    }

    pub fn expansions(&self) -> Expansions {
        let oe = self.signal_o - self.signal_e;
        Expansions {
            oeo: DetuningExpansion::linear(Process::Oeo, -(self.signal_o - self.idler_e)),
            eoo: DetuningExpansion::linear(Process::Eoo, -(self.signal_e - self.idler_o)),
            oe: DetuningExpansion::linear(Process::Oe, oe),
            eo: DetuningExpansion::linear(Process::Eo, -oe),
        }
    }
}

/// One expansion per process.
#[derive(Debug, Clone)]
pub struct Expansions {
    pub oeo: DetuningExpansion,
    pub eoo: DetuningExpansion,
    pub oe: DetuningExpansion,
    pub eo: DetuningExpansion,
}

impl Expansions {
    pub fn get(&self, p: Process) -> &DetuningExpansion {
        match p {
            Process::Oeo => &self.oeo,
            Process::Eoo => &self.eoo,
            Process::Oe => &self.oe,
            Process::Eo => &self.eo,
        }
    }

    pub fn get_mut(&mut self, p: Process) -> &mut DetuningExpansion {
        match p {
            Process::Oeo => &mut self.oeo,
            Process::Eoo => &mut self.eoo,
            Process::Oe => &mut self.oe,
            Process::Eo => &mut self.eo,
        }
    }

    pub fn factors(&self, branch: Branch) -> Vec<DetuningExpansion> {
        branch.processes().iter().map(|&p| self.get(p).clone()).collect()
    }
}

/// Full-dispersion mismatch of `process` about the design point, rad/m.
///
/// Failed evaluations yield NaN.
pub fn full_mismatch<P>(
    model: Arc<P>,
    process: Process,
    pump_um: f64,
    signal_um: f64,
    temperature_c: f64,
) -> Result<MismatchFn>
where
    P: Propagation + Send + 'static,
{
    let omega_s = TAU * SPEED_OF_LIGHT / (signal_um * 1e-6);
    let omega_p = TAU * SPEED_OF_LIGHT / (pump_um * 1e-6);
    let omega_i = omega_p - omega_s;
    let wl = |omega: f64| TAU * SPEED_OF_LIGHT / omega * 1e6;
    let eval = move |nu: f64| -> Result<f64> {
        let (ws, wi) = (wl(omega_s + nu), wl(omega_i - nu));
        let b = |pol, w| model.beta(pol, w, temperature_c).map(|v| v * 1e6);
        Ok(match process {
            Process::Oeo => b(O, wl(omega_p))? - b(O, ws)? - b(E, wi)?,
            Process::Eoo => b(O, wl(omega_p))? - b(E, ws)? - b(O, wi)?,
            Process::Oe => b(O, ws)? - b(E, ws)?,
            Process::Eo => b(E, ws)? - b(O, ws)?,
        })
    };
    let origin = eval(0.0)?;
    Ok(Arc::new(move |nu| eval(nu).map(|v| v - origin).unwrap_or(f64::NAN)))
}

/// Signal/idler polarization pair of a state component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Oe,
    Eo,
    Oo,
    Ee,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::Oe, Branch::Eo, Branch::Oo, Branch::Ee];

    /// Processes whose h-factors shape this component.
    pub fn processes(self) -> &'static [Process] {
        match self {
            Branch::Oe => &[Process::Oeo],
            Branch::Eo => &[Process::Eoo],
            Branch::Oo => &[Process::Eo, Process::Eoo],
            Branch::Ee => &[Process::Oe, Process::Oeo],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Branch::Oe => "oe",
            Branch::Eo => "eo",
            Branch::Oo => "oo",
            Branch::Ee => "ee",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Uniform detuning grid symmetric about zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningGrid {
    pub nu: Vec<f64>,
}

impl DetuningGrid {
    /// `points` must be odd so that ν = 0 is a node.
    pub fn symmetric(half_width: f64, points: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) || points < 3 || points % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "detuning grid needs a positive half width and an odd point count ≥ 3, got {half_width}, {points}"
            )));
        }
        let mid = (points / 2) as f64;
        Ok(Self {
            nu: (0..points)
                .map(|k| half_width * (k as f64 - mid) / mid)
                .collect(),
        })
    }

    /// 4001 points over ±8 sinc zeros of the widest factor.
    pub fn spectral(factors: &[DetuningExpansion], length_m: f64) -> Result<Self> {
        Self::spectral_with(factors, length_m, 8.0, 4001)
    }

    pub fn spectral_with(factors: &[DetuningExpansion], length_m: f64, zeros: f64, points: usize) -> Result<Self> {
        let d = narrowest_walkoff(factors)?;
        Self::symmetric(zeros * TAU / (length_m * d), points)
    }

    /// Grid for the dip transform: the sinc² envelope `4/x²` falls below
    /// 1e-6 over the outer 2% and the step resolves delays up to several
    /// dip widths.
    pub fn for_dip(factors: &[DetuningExpansion], length_m: f64) -> Result<Self> {
        let d_min = narrowest_walkoff(factors)?;
        let d_sum: f64 = factors.iter().map(|f| f.walkoff_s_per_m.abs()).sum();
        let half_width = 2100.0 / (length_m * d_min);
        let step = PI / (4.0 * length_m * d_sum);
        let half_points = (half_width / step).ceil() as usize;
        Self::symmetric(half_width, 2 * half_points + 1)
    }

    pub fn step(&self) -> f64 {
        self.nu[1] - self.nu[0]
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.nu.len();
        n >= 3 && (0..n / 2).all(|k| (self.nu[k] + self.nu[n - 1 - k]).abs() <= 1e-12 * self.nu[n - 1].abs())
    }
}

fn narrowest_walkoff(factors: &[DetuningExpansion]) -> Result<f64> {
    factors
        .iter()
        .map(|f| f.walkoff_s_per_m.abs())
        .filter(|d| *d > 0.0)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))))
        .ok_or_else(|| Error::InvalidParameter("all walk-off coefficients vanish; grid width undefined".into()))
}

fn product_h(factors: &[DetuningExpansion], length_m: f64, nu: f64) -> Complex64 {
    factors
        .iter()
        .map(|f| h_eval(length_m * f.delta_beta(nu)))
        .fold(Complex64::new(1.0, 0.0), |a, b| a * b)
}

fn product_h_sqr(factors: &[DetuningExpansion], length_m: f64, nu: f64) -> f64 {
    factors
        .iter()
        .map(|f| h_norm_sqr(length_m * f.delta_beta(nu)))
        .product()
}

/// Normalized `|Π h|²` of one branch on a grid.
#[derive(Debug, Clone)]
pub struct BiphotonSpectrum {
    pub branch: Branch,
    pub length_m: f64,
    pub nu: Vec<f64>,
    pub values: Vec<f64>,
    factors: Vec<DetuningExpansion>,
    peak: f64,
}

impl BiphotonSpectrum {
    /// Normalized spectrum at an arbitrary detuning.
    pub fn eval(&self, nu: f64) -> f64 {
        product_h_sqr(&self.factors, self.length_m, nu) / self.peak
    }

    pub fn factors(&self) -> &[DetuningExpansion] {
        &self.factors
    }
}

pub fn spectrum(branch: Branch, length_m: f64, expansions: &Expansions, grid: &DetuningGrid) -> Result<BiphotonSpectrum> {
    if !(length_m > 0.0) {
        return Err(Error::InvalidParameter(format!("length must be positive, got {length_m} m")));
    }
    if !grid.is_symmetric() {
        return Err(Error::InvalidParameter("detuning grid must be symmetric about 0".into()));
    }
    let factors = expansions.factors(branch);
    let raw: Vec<f64> = grid
        .nu
        .iter()
        .map(|&nu| product_h_sqr(&factors, length_m, nu))
        .collect();
    let peak = raw.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::ZeroPower);
    }
    Ok(BiphotonSpectrum {
        branch,
        length_m,
        nu: grid.nu.clone(),
        values: raw.iter().map(|v| v / peak).collect(),
        factors,
        peak,
    })
}

/// Full width at half maximum, converted to nm about `center_um`.
pub fn fwhm_nm(spec: &BiphotonSpectrum, center_um: f64) -> Result<f64> {
    let dnu = fwhm_rad_per_s(spec)?;
    let wl = center_um * 1e-6;
    Ok(wl * wl * dnu / (TAU * SPEED_OF_LIGHT) * 1e9)
}

/// Full width at half maximum in ν, rad/s.
pub fn fwhm_rad_per_s(spec: &BiphotonSpectrum) -> Result<f64> {
    let v = &spec.values;
    let i0 = v
        .iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > v[best] { i } else { best });
    let right = (i0 + 1..v.len())
        .find(|&j| v[j] < 0.5)
        .ok_or_else(|| Error::GridTooNarrow("half maximum not bracketed above the peak".into()))?;
    let left = (0..i0)
        .rev()
        .find(|&j| v[j] < 0.5)
        .ok_or_else(|| Error::GridTooNarrow("half maximum not bracketed below the peak".into()))?;
    let f = |nu: f64| spec.eval(nu) - 0.5;
    let xtol = 1e-12 * spec.nu[right].abs().max(spec.nu[left].abs());
    let hi = bisect(f, spec.nu[right - 1], spec.nu[right], xtol, 0.0)?;
    let lo = bisect(f, spec.nu[left], spec.nu[left + 1], xtol, 0.0)?;
    Ok(hi - lo)
}

/// Coincidence rate `R_C(τ) = 1 − V(τ)/2` with the visibility normalized to
/// `V(0) = 1`.
pub fn hom_dip(spec: &BiphotonSpectrum, taus: &[f64]) -> Result<Vec<f64>> {
    let n = spec.values.len();
    let edge = (n / 50).max(1);
    let tail = spec.values[..edge]
        .iter()
        .chain(&spec.values[n - edge..])
        .copied()
        .fold(0.0, f64::max);
    if tail >= 1e-6 {
        return Err(Error::GridTooNarrow(format!(
            "spectral tail {tail:.3e} of peak exceeds 1e-6; widen the detuning grid"
        )));
    }
    let weight = |k: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
    let norm: f64 = (0..n).map(|k| weight(k) * spec.values[k]).sum();
    if !(norm > 0.0) {
        return Err(Error::ZeroPower);
    }
    Ok(taus
        .par_iter()
        .map(|&tau| {
            let num: f64 = (0..n)
                .map(|k| weight(k) * spec.values[k] * (spec.nu[k] * tau).cos())
                .sum();
            1.0 - 0.5 * num / norm
        })
        .collect())
}

/// One value per state component.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BranchValues<T> {
    pub oe: T,
    pub eo: T,
    pub oo: T,
    pub ee: T,
}

impl<T: Copy> BranchValues<T> {
    pub fn get(&self, b: Branch) -> T {
        match b {
            Branch::Oe => self.oe,
            Branch::Eo => self.eo,
            Branch::Oo => self.oo,
            Branch::Ee => self.ee,
        }
    }

    fn from_fn(mut f: impl FnMut(Branch) -> T) -> Self {
        Self {
            oe: f(Branch::Oe),
            eo: f(Branch::Eo),
            oo: f(Branch::Oo),
            ee: f(Branch::Ee),
        }
    }
}

/// Which polarization pair is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActiveBranch {
    Orthogonal,
    Parallel,
}

impl ActiveBranch {
    pub fn pair(self) -> (Branch, Branch) {
        match self {
            ActiveBranch::Orthogonal => (Branch::Oe, Branch::Eo),
            ActiveBranch::Parallel => (Branch::Oo, Branch::Ee),
        }
    }
}

/// Refractive indices seen by the signal and idler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchIndices {
    pub signal_o: f64,
    pub signal_e: f64,
    pub idler_o: f64,
    pub idler_e: f64,
}

/// Per-process transverse overlaps and grating coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessFactors {
    /// o-signal/e-idler down-conversion.
    pub oeo: f64,
    /// e-signal/o-idler down-conversion.
    pub eoo: f64,
    pub electro_optic: f64,
}

/// Everything the state prefactors depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub length_m: f64,
    pub signal_omega: f64,
    pub idler_omega: f64,
    pub indices: BranchIndices,
    pub overlaps: ProcessFactors,
    pub grating: ProcessFactors,
    pub d31_m_per_v: f64,
    pub gamma51_m_per_v: f64,
    pub pump_amplitude: f64,
    pub delays: GroupDelays,
}

impl SourceModel {
    /// Evaluates modes, overlaps, coincident-order coefficients and group
    /// delays at a solved design point.
    pub fn evaluate(
        solver: &ModeSolver,
        solution: &PhaseMatchSolution,
        poling: &PolingDesign,
        cutoff: i64,
    ) -> Result<Self> {
        let t = solution.temperature_c;
        let pump = solver.solve(O, solution.pump_um, t)?;
        let so = solver.solve(O, solution.signal_um, t)?;
        let se = solver.solve(E, solution.signal_um, t)?;
        let io = solver.solve(O, solution.idler_um, t)?;
        let ie = solver.solve(E, solution.idler_um, t)?;
        let g = |(m, n): (i64, i64)| effective_coefficient(poling.reciprocal_vector(m, n), poling, cutoff);
        let material = solver.material();
        Ok(Self {
            length_m: poling.length_cm * 1e-2,
            signal_omega: TAU * SPEED_OF_LIGHT / (solution.signal_um * 1e-6),
            idler_omega: TAU * SPEED_OF_LIGHT / (solution.idler_um * 1e-6),
            indices: BranchIndices {
                signal_o: so.n_eff,
                signal_e: se.n_eff,
                idler_o: io.n_eff,
                idler_e: ie.n_eff,
            },
            overlaps: ProcessFactors {
                oeo: overlap_integral(&[&pump, &so, &ie])?,
                eoo: overlap_integral(&[&pump, &se, &io])?,
                electro_optic: overlap_integral(&[&so, &se])?,
            },
            grating: ProcessFactors {
                oeo: g(solution.orders.spdc_ooe),
                eoo: g(solution.orders.spdc_oeo),
                electro_optic: g(solution.orders.electro_optic),
            },
            d31_m_per_v: material.constants.d31_m_per_v(),
            gamma51_m_per_v: material.constants.gamma51_m_per_v(),
            pump_amplitude: 1.0,
            delays: GroupDelays::evaluate(solver, solution.signal_um, solution.idler_um, t)?,
        })
    }
}

/// How the integrated weights are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRule {
    /// `|∫ P·Π h dν|²` on the grid.
    #[default]
    Integrated,
    /// `|P|²`, every h-factor set to 1.
    PhaseMatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateOptions {
    pub weights: WeightRule,
    /// Conversion efficiency of the EO section; below 1 the unconverted
    /// orthogonal state leaks into the parallel one.
    pub conversion_efficiency: Option<f64>,
}

/// One multiplicative factor of a prefactor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub coefficient: String,
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCoefficients {
    pub prefactors: BranchValues<Complex64>,
    /// `∫ P·Π h dν` per component.
    pub amplitudes: BranchValues<Complex64>,
    pub weights: BranchValues<f64>,
    pub branch: ActiveBranch,
    /// Fraction of the state left in the orthogonal pair when the parallel
    /// branch is requested.
    pub unconverted_fraction: f64,
    pub provenance: Vec<Factor>,
}

fn prefactors(src: &SourceModel) -> (BranchValues<Complex64>, Vec<Factor>) {
    let ix = &src.indices;
    let (ws, wi) = (src.signal_omega, src.idler_omega);
    let l = src.length_m;
    let spdc = PI * l * src.pump_amplitude * src.d31_m_per_v;
    let cascade =
        0.5 * PI * PI * VACUUM_PERMITTIVITY.powi(2) * src.d31_m_per_v * src.gamma51_m_per_v * ws * src.pump_amplitude * l * l;
    let root_oe = (ws * wi / (ix.signal_o.powi(2) * ix.idler_e.powi(2))).sqrt();
    let root_eo = (ws * wi / (ix.signal_e.powi(2) * ix.idler_o.powi(2))).sqrt();
    let root_oo = (ix.signal_o.powi(2) * ws * wi / (ix.idler_o.powi(2) * ix.signal_e.powi(2))).sqrt();
    let root_ee = (ix.signal_e.powi(2) * ws * wi / (ix.idler_e.powi(2) * ix.signal_o.powi(2))).sqrt();
    let i = Complex64::new(0.0, 1.0);
    let p = BranchValues {
        oe: i * spdc * src.grating.oeo * src.overlaps.oeo * root_oe,
        eo: i * spdc * src.grating.eoo * src.overlaps.eoo * root_eo,
        oo: Complex64::from(cascade * src.grating.electro_optic * src.grating.eoo * src.overlaps.electro_optic * src.overlaps.eoo * root_oo),
        ee: Complex64::from(cascade * src.grating.electro_optic * src.grating.oeo * src.overlaps.electro_optic * src.overlaps.oeo * root_ee),
    };
    let mut rec = Vec::new();
    let mut push = |c: &str, items: &[(&str, f64)]| {
        for (name, value) in items {
            rec.push(Factor {
                coefficient: c.into(),
                name: (*name).into(),
                value: *value,
            });
        }
    };
    let common_spdc = [("pi*L*E_p0*d31", spdc)];
    push("oe", &common_spdc);
    push("oe", &[("G_oeo", src.grating.oeo), ("F_oeo", src.overlaps.oeo), ("index_root", root_oe)]);
    push("eo", &common_spdc);
    push("eo", &[("G_eoo", src.grating.eoo), ("F_eoo", src.overlaps.eoo), ("index_root", root_eo)]);
    let common_cascade = [
        ("pi^2*eps0^2/2*d31*gamma51*Omega_s*E_p0*L^2", cascade),
        ("G_eo", src.grating.electro_optic),
        ("F_eo", src.overlaps.electro_optic),
    ];
    push("oo", &common_cascade);
    push("oo", &[("G_eoo", src.grating.eoo), ("F_eoo", src.overlaps.eoo), ("index_root", root_oo)]);
    push("ee", &common_cascade);
    push("ee", &[("G_oeo", src.grating.oeo), ("F_oeo", src.overlaps.oeo), ("index_root", root_ee)]);
    (p, rec)
}

fn integrated_amplitude(factors: &[DetuningExpansion], length_m: f64, grid: &DetuningGrid) -> Complex64 {
    let n = grid.nu.len();
    let h = grid.step();
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &nu) in grid.nu.iter().enumerate() {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc += w * product_h(factors, length_m, nu);
    }
    acc * h
}

/// State prefactors and branch weights; `field_v_per_m = 0` selects the
/// orthogonal pair, any other value the parallel pair.
pub fn state_coefficients(
    src: &SourceModel,
    expansions: &Expansions,
    grid: &DetuningGrid,
    field_v_per_m: f64,
    options: StateOptions,
) -> Result<StateCoefficients> {
    if !grid.is_symmetric() {
        return Err(Error::InvalidParameter("detuning grid must be symmetric about 0".into()));
    }
    let (p, provenance) = prefactors(src);
    let amplitudes = BranchValues::from_fn(|b| {
        let integral = match options.weights {
            WeightRule::Integrated => integrated_amplitude(&expansions.factors(b), src.length_m, grid),
            WeightRule::PhaseMatched => Complex64::new(1.0, 0.0),
        };
        p.get(b) * integral
    });
    let branch = if field_v_per_m == 0.0 {
        ActiveBranch::Orthogonal
    } else {
        ActiveBranch::Parallel
    };
    let unconverted = match (branch, options.conversion_efficiency) {
        (ActiveBranch::Parallel, Some(eta)) => {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::InvalidParameter(format!("conversion efficiency {eta} outside [0, 1]")));
            }
            1.0 - eta
        }
        _ => 0.0,
    };
    let weights = if unconverted > 0.0 {
        let c = mixed_components(&amplitudes, unconverted)?;
        BranchValues::from_fn(|b| c.get(b).norm_sqr())
    } else {
        let (a, b) = branch.pair();
        BranchValues::from_fn(|x| if x == a || x == b { amplitudes.get(x).norm_sqr() } else { 0.0 })
    };
    Ok(StateCoefficients {
        prefactors: p,
        amplitudes,
        weights,
        branch,
        unconverted_fraction: unconverted,
        provenance,
    })
}

fn normalized_pair(a: Complex64, b: Complex64) -> Result<(Complex64, Complex64)> {
    let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if n == 0.0 {
        return Err(Error::DegenerateState);
    }
    Ok((a / n, b / n))
}

/// `√(1−ε)·(parallel pair) + √ε·(orthogonal pair)`, each pair normalized.
fn mixed_components(amp: &BranchValues<Complex64>, unconverted: f64) -> Result<BranchValues<Complex64>> {
    let (oe, eo) = normalized_pair(amp.oe, amp.eo)?;
    let (oo, ee) = normalized_pair(amp.oo, amp.ee)?;
    let (kept, leak) = ((1.0 - unconverted).sqrt(), unconverted.sqrt());
    Ok(BranchValues {
        oe: leak * oe,
        eo: leak * eo,
        oo: kept * oo,
        ee: kept * ee,
    })
}

/// `−p·log₂p − (1−p)·log₂(1−p)` with `0·log₂0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}

/// Entropy of the reduced signal state, bits.
pub fn entropy(coeffs: &StateCoefficients) -> Result<f64> {
    if coeffs.unconverted_fraction > 0.0 {
        let c = mixed_components(&coeffs.amplitudes, coeffs.unconverted_fraction)?;
        // Signal-reduced density matrix of the 2×2 amplitude matrix
        // [[c_oo, c_oe], [c_eo, c_ee]]; its eigenvalues follow from |det|².
        let det = c.oo * c.ee - c.oe * c.eo;
        let disc = (1.0 - 4.0 * det.norm_sqr()).max(0.0).sqrt();
        return Ok(binary_entropy(0.5 * (1.0 + disc)));
    }
    let (a, b) = coeffs.branch.pair();
    let (wa, wb) = (coeffs.weights.get(a), coeffs.weights.get(b));
    if wa + wb <= 0.0 {
        return Err(Error::DegenerateState);
    }
    Ok(binary_entropy(wa / (wa + wb)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn delays() -> GroupDelays {
        // s/m; differences of the order found for lithium niobate
        let c = SPEED_OF_LIGHT;
        GroupDelays {
            signal_o: 2.290 / c,
            signal_e: 2.209 / c,
            idler_o: 2.300 / c,
            idler_e: 2.220 / c,
        }
    }

    fn source() -> SourceModel {
        SourceModel {
            length_m: 0.05,
            signal_omega: TAU * SPEED_OF_LIGHT / 1.6568e-6,
            idler_omega: TAU * SPEED_OF_LIGHT / 1.3162e-6,
            indices: BranchIndices {
                signal_o: 2.21,
                signal_e: 2.14,
                idler_o: 2.22,
                idler_e: 2.15,
            },
            overlaps: ProcessFactors {
                oeo: 0.072,
                eoo: 0.070,
                electro_optic: 0.98,
            },
            grating: ProcessFactors {
                oeo: -0.0417,
                eoo: 0.0417,
                electro_optic: 0.405,
            },
            d31_m_per_v: 4.6e-12,
            gamma51_m_per_v: 32.6e-12,
            pump_amplitude: 1.0,
            delays: delays(),
        }
    }

    #[test]
    fn h_basics() {
        assert_eq!(h_eval(0.0), Complex64::new(1.0, 0.0));
        assert!(h_eval(TAU).norm_sqr() < 1e-30);
        let x = 2.78311;
        assert!((h_eval(x).norm_sqr() - 0.5).abs() < 1e-5);
        let half = bisect(|x| h_norm_sqr(x) - 0.5, 2.0, 3.0, 1e-14, 0.0).unwrap();
        assert!((half - H_HALF_POWER).abs() < 1e-10);
    }

    #[test]
    fn walkoff_signs() {
        let d = delays();
        let e = d.expansions();
        assert_eq!(e.oeo.walkoff_s_per_m, -(d.signal_o - d.idler_e));
        assert_eq!(e.eoo.walkoff_s_per_m, -(d.signal_e - d.idler_o));
        assert_eq!(e.oe.walkoff_s_per_m, d.signal_o - d.signal_e);
        assert_eq!(e.eo.walkoff_s_per_m, -e.oe.walkoff_s_per_m);
    }

    #[test]
    fn spectra_even_and_parallel_narrower() {
        let e = delays().expansions();
        let grid = DetuningGrid::spectral(&e.factors(Branch::Oe), 0.05).unwrap();
        let s: Vec<_> = Branch::ALL
            .iter()
            .map(|&b| spectrum(b, 0.05, &e, &grid).unwrap())
            .collect();
        for sp in &s {
            let n = sp.values.len();
            for k in 0..n {
                assert!((sp.values[k] - sp.values[n - 1 - k]).abs() < 1e-12);
                assert!((0.0..=1.0).contains(&sp.values[k]));
            }
            assert_eq!(sp.values[n / 2], 1.0);
        }
        for k in 0..grid.nu.len() {
            assert!(s[3].values[k] <= s[0].values[k] + 1e-15);
            assert!(s[2].values[k] <= s[1].values[k] + 1e-15);
        }
    }

    #[test]
    fn single_sinc_fwhm() {
        let d = 0.0703 / SPEED_OF_LIGHT;
        let mut e = delays().expansions();
        e.oeo.walkoff_s_per_m = -d;
        let l = 0.05;
        let grid = DetuningGrid::spectral(&e.factors(Branch::Oe), l).unwrap();
        let sp = spectrum(Branch::Oe, l, &e, &grid).unwrap();
        let w = fwhm_rad_per_s(&sp).unwrap();
        assert_relative_eq!(w, 2.0 * H_HALF_POWER / (l * d), max_relative = 1e-7);
        let sp2 = spectrum(Branch::Oe, 2.0 * l, &e, &grid).unwrap();
        assert_relative_eq!(fwhm_rad_per_s(&sp2).unwrap() / w, 0.5, max_relative = 1e-6);
    }

    #[test]
    fn narrow_grid_is_reported() {
        let e = delays().expansions();
        let grid = DetuningGrid::symmetric(1e6, 101).unwrap();
        let sp = spectrum(Branch::Oe, 0.05, &e, &grid).unwrap();
        assert!(matches!(fwhm_nm(&sp, 1.6568), Err(Error::GridTooNarrow(_))));
        assert!(matches!(hom_dip(&sp, &[0.0]), Err(Error::GridTooNarrow(_))));
    }

    #[test]
    fn dip_is_triangular() {
        let e = delays().expansions();
        let l = 0.05;
        let grid = DetuningGrid::for_dip(&e.factors(Branch::Oe), l).unwrap();
        let sp = spectrum(Branch::Oe, l, &e, &grid).unwrap();
        let base = l * e.oeo.walkoff_s_per_m.abs();
        let taus: Vec<f64> = (-60..=60).map(|k| base * k as f64 / 20.0).collect();
        let rc = hom_dip(&sp, &taus).unwrap();
        assert_eq!(rc[60], 0.5);
        for (t, r) in taus.iter().zip(&rc) {
            let tri = 1.0 - 0.5 * (1.0 - t.abs() / base).max(0.0);
            assert!((r - tri).abs() < 1e-3, "τ={t:e} {r} {tri}");
        }
    }

    #[test]
    fn gate_and_prefactor_ratio() {
        let src = source();
        let e = src.delays.expansions();
        let grid = DetuningGrid::spectral(&e.factors(Branch::Oe), src.length_m).unwrap();
        let orth = state_coefficients(&src, &e, &grid, 0.0, StateOptions::default()).unwrap();
        assert_eq!(orth.branch, ActiveBranch::Orthogonal);
        assert_eq!((orth.weights.oo, orth.weights.ee), (0.0, 0.0));
        let par = state_coefficients(&src, &e, &grid, 4.5e5, StateOptions::default()).unwrap();
        assert_eq!(par.branch, ActiveBranch::Parallel);
        assert_eq!((par.weights.oe, par.weights.eo), (0.0, 0.0));

        let ix = src.indices;
        let hand = (0.0417 * 0.072 / (ix.signal_o * ix.idler_e)) / (0.0417 * 0.070 / (ix.signal_e * ix.idler_o));
        assert_relative_eq!(orth.prefactors.oe.norm() / orth.prefactors.eo.norm(), hand, max_relative = 1e-12);
        assert!(orth.provenance.iter().any(|f| f.coefficient == "oo" && f.name == "G_eo"));
    }

    #[test]
    fn entropy_values() {
        let mut c = state_coefficients(
            &source(),
            &delays().expansions(),
            &DetuningGrid::symmetric(1e12, 101).unwrap(),
            0.0,
            StateOptions::default(),
        )
        .unwrap();
        c.weights.oe = 2.0;
        c.weights.eo = 2.0;
        assert_eq!(entropy(&c).unwrap(), 1.0);
        c.weights.oe = 9.0;
        c.weights.eo = 1.0;
        assert!((entropy(&c).unwrap() - 0.46900).abs() < 1e-5);
        c.weights.eo = 0.0;
        assert_eq!(entropy(&c).unwrap(), 0.0);
        c.weights.oe = 0.0;
        assert_eq!(entropy(&c), Err(Error::DegenerateState));
    }

    #[test]
    fn impurity_limits() {
        let src = source();
        let e = src.delays.expansions();
        let grid = DetuningGrid::spectral(&e.factors(Branch::Oe), src.length_m).unwrap();
        let ideal = state_coefficients(&src, &e, &grid, 1.0, StateOptions::default()).unwrap();
        let full = StateOptions {
            conversion_efficiency: Some(1.0),
            ..Default::default()
        };
        let same = state_coefficients(&src, &e, &grid, 1.0, full).unwrap();
        assert_eq!(same.unconverted_fraction, 0.0);
        assert_eq!(entropy(&same).unwrap(), entropy(&ideal).unwrap());
        let leaky = StateOptions {
            conversion_efficiency: Some(0.9958),
            ..Default::default()
        };
        let mixed = state_coefficients(&src, &e, &grid, 1.0, leaky).unwrap();
        let s = entropy(&mixed).unwrap();
        assert!((0.0..=1.0).contains(&s));
        let total: f64 = Branch::ALL.iter().map(|&b| mixed.weights.get(b)).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn h_modulus_and_phase(x in -1e3f64..1e3) {
            let h = h_eval(x);
            let s = if x == 0.0 { 1.0 } else { (x / 2.0).sin() / (x / 2.0) };
            prop_assert!((h.norm_sqr() - s * s).abs() < 1e-12);
            if s.abs() > 1e-6 {
                let want = Complex64::from_polar(1.0, -x / 2.0) * s.signum();
                prop_assert!((h / h.norm() - want).norm() < 1e-9);
            }
        }

        #[test]
        fn entropy_scale_invariant(a in 1e-6f64..1e6, b in 1e-6f64..1e6, k in 1e-6f64..1e6) {
            let mut c = state_coefficients(
                &source(), &delays().expansions(),
                &DetuningGrid::symmetric(1e12, 11).unwrap(), 0.0, StateOptions::default()).unwrap();
            c.weights.oe = a; c.weights.eo = b;
            let s1 = entropy(&c).unwrap();
            c.weights.oe = a * k; c.weights.eo = b * k;
            prop_assert!((entropy(&c).unwrap() - s1).abs() < 1e-12);
        }

        #[test]
        fn dip_even_and_bounded(tau in 0.0f64..2e-11) {
            let e = delays().expansions();
            let grid = DetuningGrid::for_dip(&e.factors(Branch::Eo), 0.05).unwrap();
            let sp = spectrum(Branch::Eo, 0.05, &e, &grid).unwrap();
            let r = hom_dip(&sp, &[tau, -tau]).unwrap();
            prop_assert!((r[0] - r[1]).abs() < 1e-12);
            prop_assert!(r[0] >= 0.5 - 1e-12 && r[0] <= 1.0 + 1e-3);
        }
    }
}
