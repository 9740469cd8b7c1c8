//! Quasi-phase-matching of the two parametric processes and the
//! electro-optic conversion: mismatches, period inversion, Δ landscapes
//! and their zero loci.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grating::reciprocal_vector;
use crate::material::Polarization;
use crate::numeric::optimize::bisect;
use crate::waveguide::Propagation;

use Polarization::{E, O};

/// The three interactions hosted by the poling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProcessKind {
    /// o-pump → o-signal + e-idler
    SpdcOOE,
    /// o-pump → e-signal + o-idler
    SpdcOEO,
    /// o ↔ e conversion of the signal
    ElectroOptic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub kind: ProcessKind,
    pub order: (i64, i64),
}

impl ProcessSpec {
    /// `(pump, signal, idler)` polarizations; the electro-optic process
    /// reports the input/output pair of the signal in the first two slots.
    pub fn polarizations(&self) -> (Polarization, Polarization, Polarization) {
        match self.kind {
            ProcessKind::SpdcOOE => (O, O, E),
            ProcessKind::SpdcOEO => (O, E, O),
            ProcessKind::ElectroOptic => (O, E, E),
        }
    }

    pub fn consumes_pump(&self) -> bool {
        !matches!(self.kind, ProcessKind::ElectroOptic)
    }
}

/// Order assignment for the three processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderSet {
    pub spdc_ooe: (i64, i64),
    pub spdc_oeo: (i64, i64),
    pub electro_optic: (i64, i64),
}

impl Default for OrderSet {
    fn default() -> Self {
        Self {
            spdc_ooe: (3, 1),
            spdc_oeo: (3, -1),
            electro_optic: (1, 1),
        }
    }
}

impl OrderSet {
    pub fn processes(&self) -> [ProcessSpec; 3] {
        [
            ProcessSpec { kind: ProcessKind::SpdcOOE, order: self.spdc_ooe },
            ProcessSpec { kind: ProcessKind::SpdcOEO, order: self.spdc_oeo },
            ProcessSpec { kind: ProcessKind::ElectroOptic, order: self.electro_optic },
        ]
    }
}

/// `1/λ_i = 1/λ_p − 1/λ_s`.
pub fn idler_wavelength(pump_um: f64, signal_um: f64) -> Result<f64> {
    if !(pump_um > 0.0 && signal_um > pump_um) {
        return Err(Error::NonPhysical { pump_um, signal_um });
    }
    Ok(1.0 / (1.0 / pump_um - 1.0 / signal_um))
}

/// The three phase mismatches, rad/μm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mismatches {
    /// β_po − β_so − β_ie
    pub spdc_ooe: f64,
    /// β_po − β_se − β_io
    pub spdc_oeo: f64,
    /// β_so − β_se
    pub electro_optic: f64,
}

/// The six propagation constants entering the mismatches, rad/μm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationSet {
    pub pump_o: f64,
    pub signal_o: f64,
    pub signal_e: f64,
    pub idler_o: f64,
    pub idler_e: f64,
}

impl PropagationSet {
    pub fn evaluate<P: Propagation + ?Sized>(
        model: &P,
        pump_um: f64,
        signal_um: f64,
        temperature_c: f64,
    ) -> Result<Self> {
        let idler_um = idler_wavelength(pump_um, signal_um)?;
        Ok(Self {
            pump_o: model.beta(O, pump_um, temperature_c)?,
            signal_o: model.beta(O, signal_um, temperature_c)?,
            signal_e: model.beta(E, signal_um, temperature_c)?,
            idler_o: model.beta(O, idler_um, temperature_c)?,
            idler_e: model.beta(E, idler_um, temperature_c)?,
        })
    }

    pub fn mismatches(&self) -> Mismatches {
        Mismatches {
            spdc_ooe: self.pump_o - self.signal_o - self.idler_e,
            spdc_oeo: self.pump_o - self.signal_e - self.idler_o,
            electro_optic: self.signal_o - self.signal_e,
        }
    }
}

/// Left-hand sides of the three phase-matching conditions.
pub fn mismatches<P: Propagation + ?Sized>(
    model: &P,
    pump_um: f64,
    signal_um: f64,
    temperature_c: f64,
) -> Result<Mismatches> {
    Ok(PropagationSet::evaluate(model, pump_um, signal_um, temperature_c)?.mismatches())
}

/// Solves `K_{m1,n1} = Δβ1`, `K_{m2,n2} = Δβ2` for `(Λ1, Λ2)` in μm.
pub fn solve_periods(
    delta1: f64,
    delta2: f64,
    orders: [(i64, i64); 2],
) -> Result<(f64, f64)> {
    let [(m1, n1), (m2, n2)] = orders;
    let det = (m1 * n2 - m2 * n1) as f64;
    if det == 0.0 {
        return Err(Error::SingularOrders);
    }
    // unknowns are the spatial frequencies 1/Λ1 and 1/Λ2
    let inv1 = (delta1 * n2 as f64 - delta2 * n1 as f64) / (TAU * det);
    let inv2 = (m1 as f64 * delta2 - m2 as f64 * delta1) / (TAU * det);
    for inv in [inv1, inv2] {
        if !(inv > 0.0) {
            return Err(Error::NegativePeriod(1.0 / inv));
        }
    }
    Ok((1.0 / inv1, 1.0 / inv2))
}

/// A fully evaluated design point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatchSolution {
    pub pump_um: f64,
    pub signal_um: f64,
    pub idler_um: f64,
    pub temperature_c: f64,
    pub period1_um: f64,
    pub period2_um: f64,
    pub mismatches: Mismatches,
    /// `K − Δβ` for the two parametric processes, `Δβ3 − K` for the
    /// electro-optic one, rad/μm.
    pub residuals: [f64; 3],
    pub orders: OrderSet,
}

impl PhaseMatchSolution {
    /// Residual of the electro-optic condition, rad/μm.
    pub fn eo_detuning(&self) -> f64 {
        self.residuals[2]
    }
}

/// Solves the periods from the parametric conditions and audits all three.
pub fn design<P: Propagation + ?Sized>(
    model: &P,
    pump_um: f64,
    signal_um: f64,
    temperature_c: f64,
    orders: OrderSet,
) -> Result<PhaseMatchSolution> {
    let idler_um = idler_wavelength(pump_um, signal_um)?;
    let mm = mismatches(model, pump_um, signal_um, temperature_c)?;
    audit(pump_um, signal_um, idler_um, temperature_c, mm, orders)
}

fn audit(
    pump_um: f64,
    signal_um: f64,
    idler_um: f64,
    temperature_c: f64,
    mm: Mismatches,
    orders: OrderSet,
) -> Result<PhaseMatchSolution> {
    let (p1, p2) = solve_periods(mm.spdc_ooe, mm.spdc_oeo, [orders.spdc_ooe, orders.spdc_oeo])?;
    let k = |(m, n): (i64, i64)| reciprocal_vector(m, n, p1, p2);
    Ok(PhaseMatchSolution {
        pump_um,
        signal_um,
        idler_um,
        temperature_c,
        period1_um: p1,
        period2_um: p2,
        mismatches: mm,
        residuals: [
            k(orders.spdc_ooe) - mm.spdc_ooe,
            k(orders.spdc_oeo) - mm.spdc_oeo,
            mm.electro_optic - k(orders.electro_optic),
        ],
        orders,
    })
}

/// Residual mismatch Δ of the electro-optic condition after the periods
/// have been fitted to the two parametric conditions, rad/μm.
pub fn delta_at<P: Propagation + ?Sized>(
    model: &P,
    pump_um: f64,
    signal_um: f64,
    temperature_c: f64,
    orders: OrderSet,
) -> Result<f64> {
    Ok(design(model, pump_um, signal_um, temperature_c, orders)?.eo_detuning())
}

/// Uniformly spaced axis, `steps` samples from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisRange {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl AxisRange {
    pub fn validate(&self, what: &str) -> Result<()> {
        if self.steps == 0 || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::InvalidParameter(format!("{what}: empty axis")));
        }
        if self.steps > 1 && self.start == self.stop {
            return Err(Error::InvalidParameter(format!("{what}: zero-width axis range")));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let h = (self.stop - self.start) / (self.steps - 1) as f64;
        (0..self.steps).map(|k| self.start + k as f64 * h).collect()
    }
}

/// Which pair of parameters spans the map; the remaining one is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapAxes {
    /// axis1 = signal λ (μm), axis2 = pump λ (μm)
    SignalPump {
        signal_um: AxisRange,
        pump_um: AxisRange,
        temperature_c: f64,
    },
    /// axis1 = signal λ (μm), axis2 = temperature (°C)
    SignalTemperature {
        signal_um: AxisRange,
        temperature_c: AxisRange,
        pump_um: f64,
    },
}

impl MapAxes {
    pub fn ranges(&self) -> (AxisRange, AxisRange) {
        match *self {
            Self::SignalPump { signal_um, pump_um, .. } => (signal_um, pump_um),
            Self::SignalTemperature { signal_um, temperature_c, .. } => (signal_um, temperature_c),
        }
    }

    pub fn names(&self) -> (&'static str, &'static str) {
        match self {
            Self::SignalPump { .. } => ("signal_um", "pump_um"),
            Self::SignalTemperature { .. } => ("signal_um", "temperature_c"),
        }
    }

    /// `(pump, signal, temperature)` at a map coordinate.
    pub fn point(&self, a1: f64, a2: f64) -> (f64, f64, f64) {
        match *self {
            Self::SignalPump { temperature_c, .. } => (a2, a1, temperature_c),
            Self::SignalTemperature { pump_um, .. } => (pump_um, a1, a2),
        }
    }
}

/// Δ sampled on a rectangular grid; `None` marks cells without modes.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaMap {
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// Row-major with axis2 as the slow index.
    pub cells: Vec<Option<f64>>,
}

impl DeltaMap {
    pub fn get(&self, i1: usize, i2: usize) -> Option<f64> {
        self.cells[i2 * self.axis1.len() + i1]
    }

    /// Tabulates an arbitrary evaluator; failing cells become `None`.
    pub fn tabulate<F>(axis1: Vec<f64>, axis2: Vec<f64>, eval: F) -> Self
    where
        F: Fn(f64, f64) -> Result<f64> + Sync,
    {
        let n1 = axis1.len();
        let cells = (0..n1 * axis2.len())
            .into_par_iter()
            .map(|idx| eval(axis1[idx % n1], axis2[idx / n1]).ok())
            .collect();
        Self { axis1, axis2, cells }
    }
}

/// Δ = Δβ3 − K_{m3,n3}(Λ1, Λ2) over the map, with the periods fitted
/// to the two parametric conditions in every cell.
pub fn delta_map<P: Propagation + ?Sized>(
    model: &P,
    axes: &MapAxes,
    orders: OrderSet,
) -> Result<DeltaMap> {
    let (r1, r2) = axes.ranges();
    r1.validate("axis1")?;
    r2.validate("axis2")?;
    let axes = *axes;
    Ok(DeltaMap::tabulate(r1.values(), r2.values(), move |a1, a2| {
        let (p, s, t) = axes.point(a1, a2);
        delta_at(model, p, s, t, orders)
    }))
}

/// Zero crossings of Δ: each column (fixed axis1) is scanned along
/// axis2 and every bracketed sign change refined by bisection on `eval`.
pub fn matching_locus<F>(grid: &DeltaMap, eval: F) -> Result<Vec<(f64, f64)>>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    let n1 = grid.axis1.len();
    let per_column: Vec<Vec<(f64, f64)>> = (0..n1)
        .into_par_iter()
        .map(|i1| {
            let a1 = grid.axis1[i1];
            let mut pts = Vec::new();
            for i2 in 0..grid.axis2.len().saturating_sub(1) {
                let (Some(lo), Some(hi)) = (grid.get(i1, i2), grid.get(i1, i2 + 1)) else {
                    continue;
                };
                let (b_lo, b_hi) = (grid.axis2[i2], grid.axis2[i2 + 1]);
                if lo == 0.0 {
                    pts.push((a1, b_lo));
                    continue;
                }
                if lo.signum() == hi.signum() || hi == 0.0 {
                    continue;
                }
                let f = |b: f64| eval(a1, b).unwrap_or(f64::NAN);
                let xtol = 1e-15 * b_lo.abs().max(b_hi.abs()).max(1.0);
                if let Ok(root) = bisect(f, b_lo, b_hi, xtol, 1e-8) {
                    if f(root).abs() < 1e-8 {
                        pts.push((a1, root));
                    }
                }
            }
            if let (Some(last), Some(&b)) = (grid.get(i1, grid.axis2.len() - 1), grid.axis2.last()) {
                if last == 0.0 {
                    pts.push((a1, b));
                }
            }
            pts
        })
        .collect();
    let locus: Vec<(f64, f64)> = per_column.into_iter().flatten().collect();
    if locus.is_empty() {
        Err(Error::EmptyLocus)
    } else {
        Ok(locus)
    }
}

/// Signal wavelength on the Δ = 0 locus for a fixed pump and temperature.
pub fn matched_signal_wavelength<P: Propagation + ?Sized>(
    model: &P,
    pump_um: f64,
    temperature_c: f64,
    bracket_um: (f64, f64),
    orders: OrderSet,
) -> Result<f64> {
    let f = |s: f64| delta_at(model, pump_um, s, temperature_c, orders).unwrap_or(f64::NAN);
    bisect(f, bracket_um.0, bracket_um.1, 1e-12, 1e-10)
}
