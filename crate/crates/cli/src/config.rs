//! Run configuration: JSON with a versioned schema, validated before any
//! computation.

use std::fs;
use std::path::{Path, PathBuf};

use dppln::biphoton::{Branch, WeightRule};
use dppln::material::Material;
use dppln::qpm::{AxisRange, MapAxes, OrderSet};
use dppln::waveguide::{SolverOptions, WaveguideGeometry};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub material: Material,
    #[serde(default)]
    pub geometry: WaveguideGeometry,
    #[serde(default)]
    pub solver: SolverOptions,
    pub waves: WavesSection,
    #[serde(default)]
    pub poling: PolingSection,
    #[serde(default)]
    pub eo: EoSection,
    #[serde(default)]
    pub biphoton: BiphotonSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavesSection {
    pub pump_um: f64,
    pub signal_um: f64,
    pub temperature_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolingSection {
    /// Fixed `[Λ1, Λ2]` in μm; mutually exclusive with `solve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods_um: Option<[f64; 2]>,
    #[serde(default)]
    pub solve: bool,
    #[serde(default = "half_duties")]
    pub duty: [f64; 2],
    #[serde(default = "default_length_cm")]
    pub length_cm: f64,
    #[serde(default)]
    pub orders: OrderSet,
    #[serde(default = "default_cutoff")]
    pub coincidence_cutoff: i64,
}

impl Default for PolingSection {
    fn default() -> Self {
        Self {
            periods_um: None,
            solve: true,
            duty: half_duties(),
            length_cm: default_length_cm(),
            orders: OrderSet::default(),
            coincidence_cutoff: default_cutoff(),
        }
    }
}

fn half_duties() -> [f64; 2] {
    [0.5, 0.5]
}
fn default_length_cm() -> f64 {
    5.0
}
fn default_cutoff() -> i64 {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keyword {
    Solve,
    Design,
}

/// A number or a keyword.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueOr {
    Value(f64),
    Keyword(Keyword),
}

/// How κ per unit applied field is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CouplingSpec {
    /// Slope fixed so that `efficiency` is reached at `field_v_per_m` over
    /// the EO length with zero detuning.
    Calibrated { efficiency: f64, field_v_per_m: f64 },
    /// Slope from the coupling formula with solved indices, the coincident
    /// grating coefficient and the two-mode overlap (or `overlap` if set).
    Physical {
        #[serde(default)]
        overlap: Option<f64>,
    },
    /// κ per V/m given directly.
    Slope { kappa_per_m_per_v_per_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EoSweep {
    pub field_v_per_m: AxisRange,
    pub length_cm: AxisRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EoSection {
    /// Applied field in V/m, or `"solve"` to invert `eta_target`.
    pub field_v_per_m: ValueOr,
    pub eta_target: f64,
    pub length_cm: f64,
    pub coupling: CouplingSpec,
    /// Residual mismatch in rad/m, or `"design"` for the solved design's.
    pub detuning_per_m: ValueOr,
    pub trace_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<EoSweep>,
}

impl Default for EoSection {
    fn default() -> Self {
        Self {
            field_v_per_m: ValueOr::Value(4.5e5),
            eta_target: 0.9958,
            length_cm: 3.0,
            coupling: CouplingSpec::Calibrated {
                efficiency: 0.9958,
                field_v_per_m: 4.5e5,
            },
            detuning_per_m: ValueOr::Value(0.0),
            trace_samples: 201,
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dispersion {
    Linear,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySweep {
    /// Relative half-span applied to width and depth.
    pub span: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiphotonSection {
    pub branches: Vec<Branch>,
    pub grid_points: usize,
    pub grid_zeros: f64,
    pub dispersion: Dispersion,
    pub weights: WeightRule,
    /// Mix the unconverted fraction of the EO section into the parallel state.
    pub impurity: bool,
    /// Delays for the dip, seconds; defaults to ±2 dip widths.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dip_delays_s: Option<AxisRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry_sweep: Option<GeometrySweep>,
}

impl Default for BiphotonSection {
    fn default() -> Self {
        Self {
            branches: Branch::ALL.to_vec(),
            grid_points: 4001,
            grid_zeros: 8.0,
            dispersion: Dispersion::Linear,
            weights: WeightRule::Integrated,
            impurity: false,
            dip_delays_s: None,
            geometry_sweep: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagationModel {
    Waveguide,
    Bulk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub axes: MapAxes,
    #[serde(default = "waveguide_model")]
    pub model: PropagationModel,
}

fn waveguide_model() -> PropagationModel {
    PropagationModel::Waveguide
}

impl Default for MapSection {
    fn default() -> Self {
        Self {
            axes: MapAxes::SignalPump {
                signal_um: AxisRange {
                    start: 1.55,
                    stop: 1.75,
                    steps: 201,
                },
                pump_um: AxisRange {
                    start: 0.72,
                    stop: 0.76,
                    steps: 201,
                },
                temperature_c: 25.0,
            },
            model: PropagationModel::Waveguide,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub map: MapSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
    Txt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json, Format::Svg, Format::Txt],
        }
    }
}

impl OutputSection {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

fn schema(path: &str, msg: impl Into<String>) -> CliError {
    CliError::Schema {
        path: path.into(),
        message: msg.into(),
    }
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(schema(path, format!("must be a positive finite number, got {v}")))
    }
}

fn axis(path: &str, r: &AxisRange) -> Result<(), CliError> {
    r.validate(path).map_err(|e| schema(path, e.to_string()))
}

impl RunConfig {
    /// Semantic checks that serde cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        self.material
            .constants
            .validate()
            .map_err(|e| schema("material.constants", e.to_string()))?;
        self.geometry
            .validate()
            .map_err(|e| schema("geometry", e.to_string()))?;
        let w = &self.waves;
        positive("waves.pump_um", w.pump_um)?;
        positive("waves.signal_um", w.signal_um)?;
        if w.signal_um <= w.pump_um {
            return Err(schema("waves.signal_um", "signal must be longer than the pump"));
        }
        if !w.temperature_c.is_finite() {
            return Err(schema("waves.temperature_c", "must be finite"));
        }
        let p = &self.poling;
        match (p.periods_um, p.solve) {
            (Some(_), true) => {
                return Err(schema("poling", "give either periods_um or solve: true, not both"))
            }
            (None, false) => return Err(schema("poling", "one of periods_um or solve: true is required")),
            (Some([a, b]), false) => {
                positive("poling.periods_um[0]", a)?;
                positive("poling.periods_um[1]", b)?;
            }
            (None, true) => {}
        }
        for (i, d) in p.duty.iter().enumerate() {
            if !(*d > 0.0 && *d < 1.0) {
                return Err(schema(&format!("poling.duty[{i}]"), "must lie in (0, 1)"));
            }
        }
        positive("poling.length_cm", p.length_cm)?;
        if p.coincidence_cutoff < 1 {
            return Err(schema("poling.coincidence_cutoff", "must be at least 1"));
        }
        let e = &self.eo;
        if let ValueOr::Value(f) = e.field_v_per_m {
            if !(f >= 0.0 && f.is_finite()) {
                return Err(schema("eo.field_v_per_m", "must be nonnegative"));
            }
        } else if e.field_v_per_m != ValueOr::Keyword(Keyword::Solve) {
            return Err(schema("eo.field_v_per_m", "expected a number or \"solve\""));
        }
        if let ValueOr::Keyword(k) = e.detuning_per_m {
            if k != Keyword::Design {
                return Err(schema("eo.detuning_per_m", "expected a number or \"design\""));
            }
        }
        if !(e.eta_target > 0.0 && e.eta_target <= 1.0) {
            return Err(schema("eo.eta_target", "must lie in (0, 1]"));
        }
        positive("eo.length_cm", e.length_cm)?;
        match e.coupling {
            CouplingSpec::Calibrated { efficiency, field_v_per_m } => {
                if !(efficiency > 0.0 && efficiency <= 1.0) {
                    return Err(schema("eo.coupling.efficiency", "must lie in (0, 1]"));
                }
                positive("eo.coupling.field_v_per_m", field_v_per_m)?;
            }
            CouplingSpec::Physical { overlap: Some(f) } => positive("eo.coupling.overlap", f)?,
            CouplingSpec::Physical { overlap: None } => {}
            CouplingSpec::Slope { kappa_per_m_per_v_per_m } => {
                positive("eo.coupling.kappa_per_m_per_v_per_m", kappa_per_m_per_v_per_m)?
            }
        }
        if e.trace_samples < 2 {
            return Err(schema("eo.trace_samples", "must be at least 2"));
        }
        if let Some(s) = &e.sweep {
            axis("eo.sweep.field_v_per_m", &s.field_v_per_m)?;
            axis("eo.sweep.length_cm", &s.length_cm)?;
            if s.length_cm.start <= 0.0 || s.length_cm.stop <= 0.0 {
                return Err(schema("eo.sweep.length_cm", "lengths must be positive"));
            }
        }
        let b = &self.biphoton;
        if b.branches.is_empty() {
            return Err(schema("biphoton.branches", "at least one branch is required"));
        }
        if b.grid_points < 3 || b.grid_points % 2 == 0 {
            return Err(schema("biphoton.grid_points", "must be odd and at least 3"));
        }
        positive("biphoton.grid_zeros", b.grid_zeros)?;
        if let Some(r) = &b.dip_delays_s {
            axis("biphoton.dip_delays_s", r)?;
        }
        if let Some(g) = &b.geometry_sweep {
            if !(g.span > 0.0 && g.span < 1.0) {
                return Err(schema("biphoton.geometry_sweep.span", "must lie in (0, 1)"));
            }
            if g.steps < 2 {
                return Err(schema("biphoton.geometry_sweep.steps", "must be at least 2"));
            }
        }
        let (r1, r2) = self.sweep.map.axes.ranges();
        axis("sweep.map.axes.axis1", &r1)?;
        axis("sweep.map.axes.axis2", &r2)?;
        Ok(())
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(&path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}
