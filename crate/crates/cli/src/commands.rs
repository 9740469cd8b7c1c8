//! Command dispatch: each command wraps one toolkit operation and writes
//! its artifacts plus a manifest.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ValueEnum;
use dppln::biphoton::{
    entropy, full_mismatch, fwhm_nm, fwhm_rad_per_s, hom_dip, spectrum, state_coefficients,
    DetuningGrid, Expansions, GroupDelays, Process, SourceModel, StateCoefficients, StateOptions, WeightRule,
};
use dppln::eo::{
    analytic_conversion, calibrated_slope, conversion_efficiency, coupling_coefficient, field_for_target,
    propagate, propagate_trace, EoSetting, FieldAmplitudes,
};
use dppln::grating::{coincident_orders, effective_coefficient, synthesize_pattern, PolingDesign};
use dppln::material::{Material, Polarization};
use dppln::qpm::{
    delta_at, delta_map, design, idler_wavelength, matching_locus, mismatches, MapAxes, OrderSet,
    PhaseMatchSolution,
};
use dppln::waveguide::{overlap_integral, BulkMedium, GuidedMode, ModeSolver, Propagation, WaveguideGeometry};
use dppln::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::cache::{geometry_digest, ModeCache};
use crate::config::{
    CouplingSpec, Dispersion, Format, PolingSection, PropagationModel, RunConfig, ValueOr, WavesSection,
};
use crate::output::{fmt_f64, heatmap, line_plot, sha256_hex, ArtifactWriter, Csv, Manifest};
use crate::validate::{run_suite, OracleOutcome};
use crate::{CliError, Context, CACHE_DIR_ENV};

use Polarization::{E, O};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Design,
    Map,
    Spectrum,
    Dip,
    Eo,
    Entropy,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Design => "design",
            Command::Map => "map",
            Command::Spectrum => "spectrum",
            Command::Dip => "dip",
            Command::Eo => "eo",
            Command::Entropy => "entropy",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Overrides the configured output directory.
    pub out_dir: Option<PathBuf>,
    /// Overrides the cache directory; otherwise the environment variable,
    /// otherwise `<out>/.cache`.
    pub cache_dir: Option<PathBuf>,
    pub use_cache: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            out_dir: None,
            cache_dir: None,
            use_cache: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    /// Mode solves actually computed in this run (cache hits excluded).
    pub mode_solves: usize,
    pub cache_loaded: usize,
    pub validation: Vec<OracleOutcome>,
}

/// Runs one command to completion and writes its manifest.
pub fn execute(command: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let out = opts.out_dir.clone().unwrap_or_else(|| cfg.output.directory.clone());
    let solver = Arc::new(
        ModeSolver::with_options(cfg.material.clone(), cfg.geometry, cfg.solver).context("mode solver")?,
    );
    let digest = geometry_digest(&cfg.material, &cfg.geometry, &cfg.solver);
    let cache = opts.use_cache.then(|| {
        let dir = opts
            .cache_dir
            .clone()
            .or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| out.join(".cache"));
        ModeCache::new(&dir)
    });
    let cache_loaded = match &cache {
        Some(c) => solver.preload(c.load(&digest)?),
        None => 0,
    };
    let mut writer = ArtifactWriter::new(&out, &cfg.output.formats)?;
    let result = {
        let mut s = Session {
            cfg,
            solver: solver.clone(),
            w: &mut writer,
        };
        match command {
            Command::Design => s.design().map(|_| Vec::new()),
            Command::Map => s.map().map(|_| Vec::new()),
            Command::Spectrum => s.spectrum().map(|_| Vec::new()),
            Command::Dip => s.dip().map(|_| Vec::new()),
            Command::Eo => s.eo().map(|_| Vec::new()),
            Command::Entropy => s.entropy().map(|_| Vec::new()),
            Command::Validate => s.validate(),
        }
    };
    if let Some(c) = &cache {
        c.store(&digest, &solver.cached_modes())?;
    }
    let validation = result?;
    let config_sha = sha256_hex(&serde_json::to_vec(cfg).map_err(|e| CliError::Io(e.to_string()))?);
    let mode_solves = solver.solve_count();
    let (manifest, manifest_path) = writer.finish(command.name(), config_sha, mode_solves)?;
    let failed: Vec<&str> = validation.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(CliError::ValidationFailed(failed.join(", ")));
    }
    Ok(RunReport {
        manifest,
        manifest_path,
        mode_solves,
        cache_loaded,
        validation,
    })
}

struct Session<'a> {
    cfg: &'a RunConfig,
    solver: Arc<ModeSolver>,
    w: &'a mut ArtifactWriter,
}

/// Design evaluated with the periods either solved or taken from config.
pub fn design_point<P: Propagation + ?Sized>(
    model: &P,
    waves: &WavesSection,
    poling: &PolingSection,
) -> Result<(PhaseMatchSolution, PolingDesign), CliError> {
    let (p, s, t) = (waves.pump_um, waves.signal_um, waves.temperature_c);
    let sol = match poling.periods_um {
        None => design(model, p, s, t, poling.orders).context("design")?,
        Some([a, b]) => fixed_period_solution(model, p, s, t, poling.orders, a, b).context("design")?,
    };
    let design = PolingDesign {
        period1_um: sol.period1_um,
        period2_um: sol.period2_um,
        duty1: poling.duty[0],
        duty2: poling.duty[1],
        length_cm: poling.length_cm,
    };
    design.validate().context("poling")?;
    Ok((sol, design))
}

fn fixed_period_solution<P: Propagation + ?Sized>(
    model: &P,
    pump_um: f64,
    signal_um: f64,
    temperature_c: f64,
    orders: OrderSet,
    p1: f64,
    p2: f64,
) -> dppln::Result<PhaseMatchSolution> {
    let idler_um = idler_wavelength(pump_um, signal_um)?;
    let mm = mismatches(model, pump_um, signal_um, temperature_c)?;
    let k = |(m, n): (i64, i64)| dppln::grating::reciprocal_vector(m, n, p1, p2);
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

/// Linear expansions from group delays, optionally upgraded to the full
/// dispersion relation.
pub fn expansions(
    solver: &Arc<ModeSolver>,
    sol: &PhaseMatchSolution,
    dispersion: Dispersion,
) -> Result<Expansions, CliError> {
    let delays = GroupDelays::evaluate(&**solver, sol.signal_um, sol.idler_um, sol.temperature_c)
        .context("group delays")?;
    let mut e = delays.expansions();
    if dispersion == Dispersion::Full {
        for p in [Process::Oeo, Process::Eoo, Process::Oe, Process::Eo] {
            let f = full_mismatch(solver.clone(), p, sol.pump_um, sol.signal_um, sol.temperature_c)
                .context("full dispersion")?;
            let slot = e.get_mut(p);
            *slot = slot.clone().with_full(f);
        }
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EoOperatingPoint {
    pub length_m: f64,
    pub slope_per_m_per_v_per_m: f64,
    pub field_v_per_m: f64,
    pub kappa_per_m: f64,
    pub detuning_per_m: f64,
    pub eta_o_to_e: f64,
    pub eta_e_to_o: f64,
    pub eta_analytic: f64,
}

/// κ slope, detuning and field of the EO section, plus both conversion
/// efficiencies.
pub fn eo_operating_point(
    cfg: &RunConfig,
    solver: &ModeSolver,
    sol: &PhaseMatchSolution,
    poling: &PolingDesign,
) -> Result<EoOperatingPoint, CliError> {
    let e = &cfg.eo;
    let l = e.length_cm * 1e-2;
    let slope = match e.coupling {
        CouplingSpec::Calibrated { efficiency, field_v_per_m } => {
            calibrated_slope(efficiency, l, field_v_per_m).context("eo calibration")?
        }
        CouplingSpec::Physical { overlap } => {
            let so = solver.solve(O, sol.signal_um, sol.temperature_c).context("eo modes")?;
            let se = solver.solve(E, sol.signal_um, sol.temperature_c).context("eo modes")?;
            let f = match overlap {
                Some(f) => f,
                None => overlap_integral(&[&so, &se]).context("eo overlap")?,
            };
            let (m, n) = sol.orders.electro_optic;
            let g = effective_coefficient(poling.reciprocal_vector(m, n), poling, cfg.poling.coincidence_cutoff);
            coupling_coefficient(
                sol.signal_um,
                so.n_eff,
                se.n_eff,
                cfg.material.constants.gamma51_pm_per_v,
                1.0,
                g,
                f,
            )
        }
        CouplingSpec::Slope { kappa_per_m_per_v_per_m } => kappa_per_m_per_v_per_m,
    };
    let delta = match e.detuning_per_m {
        ValueOr::Value(v) => v,
        ValueOr::Keyword(_) => sol.eo_detuning() * 1e6,
    };
    let field = match e.field_v_per_m {
        ValueOr::Value(v) => v,
        ValueOr::Keyword(_) => field_for_target(e.eta_target, l, delta, slope).context("eo field")?,
    };
    let setting = EoSetting {
        field_v_per_m: field,
        kappa_per_m: slope * field,
        detuning_per_m: delta,
        length_m: l,
    };
    let oe = propagate(&setting, &FieldAmplitudes::pure(O)).context("eo propagation")?;
    let eo = propagate(&setting, &FieldAmplitudes::pure(E)).context("eo propagation")?;
    Ok(EoOperatingPoint {
        length_m: l,
        slope_per_m_per_v_per_m: slope,
        field_v_per_m: field,
        kappa_per_m: setting.kappa_per_m,
        detuning_per_m: delta,
        eta_o_to_e: conversion_efficiency(&oe, E).context("eo efficiency")?,
        eta_e_to_o: conversion_efficiency(&eo, O).context("eo efficiency")?,
        eta_analytic: analytic_conversion(setting.kappa_per_m, delta, l),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    pub source: SourceModel,
    pub orthogonal: StateCoefficients,
    pub parallel: Option<StateCoefficients>,
    pub entropy_orthogonal: f64,
    pub entropy_parallel: Option<f64>,
    /// Entropies with every h-factor set to 1.
    pub entropy_orthogonal_phase_matched: f64,
    pub entropy_parallel_phase_matched: Option<f64>,
}

/// Orthogonal and parallel states at one design point.
pub fn entropy_report(
    cfg: &RunConfig,
    solver: &Arc<ModeSolver>,
    sol: &PhaseMatchSolution,
    poling: &PolingDesign,
    eo: &EoOperatingPoint,
) -> Result<EntropyReport, CliError> {
    let b = &cfg.biphoton;
    let src = SourceModel::evaluate(solver, sol, poling, cfg.poling.coincidence_cutoff).context("source model")?;
    let e = expansions(solver, sol, b.dispersion)?;
    let all: Vec<_> = [Process::Oeo, Process::Eoo, Process::Oe, Process::Eo]
        .iter()
        .map(|&p| e.get(p).clone())
        .collect();
    let grid = DetuningGrid::spectral_with(&all, src.length_m, b.grid_zeros, b.grid_points).context("entropy grid")?;
    let opts = StateOptions {
        weights: b.weights,
        conversion_efficiency: b.impurity.then_some(eo.eta_o_to_e),
    };
    let pm = StateOptions {
        weights: WeightRule::PhaseMatched,
        conversion_efficiency: None,
    };
    let state = |field: f64, o: StateOptions| state_coefficients(&src, &e, &grid, field, o).context("state");
    let orthogonal = state(0.0, opts)?;
    let entropy_orthogonal = entropy(&orthogonal).context("entropy")?;
    let entropy_orthogonal_phase_matched = entropy(&state(0.0, pm)?).context("entropy")?;
    let (parallel, entropy_parallel, entropy_parallel_phase_matched) = if eo.field_v_per_m != 0.0 {
        let p = state(eo.field_v_per_m, opts)?;
        let s = entropy(&p).context("entropy")?;
        let spm = entropy(&state(eo.field_v_per_m, pm)?).context("entropy")?;
        (Some(p), Some(s), Some(spm))
    } else {
        (None, None, None)
    };
    Ok(EntropyReport {
        source: src,
        orthogonal,
        parallel,
        entropy_orthogonal,
        entropy_parallel,
        entropy_orthogonal_phase_matched,
        entropy_parallel_phase_matched,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GeometryPoint {
    pub width_scale: f64,
    pub depth_scale: f64,
    pub entropy_orthogonal: f64,
    pub entropy_parallel: f64,
    pub entropy_orthogonal_phase_matched: f64,
    pub entropy_parallel_phase_matched: f64,
}

/// Entropy over a width × depth grid of scaled geometries; the periods are
/// re-solved at every point. Points without guided modes give NaN.
pub fn geometry_sweep(cfg: &RunConfig, span: f64, steps: usize) -> Vec<GeometryPoint> {
    let scales: Vec<f64> = (0..steps)
        .map(|k| 1.0 - span + 2.0 * span * k as f64 / (steps - 1) as f64)
        .collect();
    let pairs: Vec<(f64, f64)> = scales
        .iter()
        .flat_map(|&sd| scales.iter().map(move |&sw| (sw, sd)))
        .collect();
    pairs
        .par_iter()
        .map(|&(sw, sd)| {
            let nan = f64::NAN;
            let eval = || -> Result<EntropyReport, CliError> {
                let mut geom: WaveguideGeometry = cfg.geometry;
                geom.width_um *= sw;
                geom.depth_um *= sd;
                let solver = Arc::new(
                    ModeSolver::with_options(cfg.material.clone(), geom, cfg.solver).context("mode solver")?,
                );
                let (sol, poling) = design_point(&*solver, &cfg.waves, &cfg.poling)?;
                let eo = eo_operating_point(cfg, &solver, &sol, &poling)?;
                entropy_report(cfg, &solver, &sol, &poling, &eo)
            };
            match eval() {
                Ok(r) => GeometryPoint {
                    width_scale: sw,
                    depth_scale: sd,
                    entropy_orthogonal: r.entropy_orthogonal,
                    entropy_parallel: r.entropy_parallel.unwrap_or(nan),
                    entropy_orthogonal_phase_matched: r.entropy_orthogonal_phase_matched,
                    entropy_parallel_phase_matched: r.entropy_parallel_phase_matched.unwrap_or(nan),
                },
                Err(_) => GeometryPoint {
                    width_scale: sw,
                    depth_scale: sd,
                    entropy_orthogonal: nan,
                    entropy_parallel: nan,
                    entropy_orthogonal_phase_matched: nan,
                    entropy_parallel_phase_matched: nan,
                },
            }
        })
        .collect()
}

fn mode_row(m: &GuidedMode) -> Vec<String> {
    vec![
        m.pol.to_string(),
        fmt_f64(m.wavelength_um),
        fmt_f64(m.n_eff),
        fmt_f64(m.n_bulk),
        fmt_f64(m.w_y_um),
        fmt_f64(m.w_z_um),
    ]
}

#[derive(Serialize)]
struct OrderSummary {
    process: &'static str,
    order: (i64, i64),
    k_rad_per_um: f64,
    effective_g: f64,
    coincident_orders: usize,
    leading: Vec<dppln::grating::FourierOrder>,
}

impl Session<'_> {
    fn point(&self) -> Result<(PhaseMatchSolution, PolingDesign), CliError> {
        design_point(&*self.solver, &self.cfg.waves, &self.cfg.poling)
    }

    fn design(&mut self) -> Result<(), CliError> {
        let (sol, poling) = self.point()?;
        let mut csv = Csv::new(&[
            "period1_um",
            "period2_um",
            "residual1_rad_per_um",
            "residual2_rad_per_um",
            "eo_detuning_rad_per_um",
        ]);
        csv.row(&[
            fmt_f64(sol.period1_um),
            fmt_f64(sol.period2_um),
            fmt_f64(sol.residuals[0]),
            fmt_f64(sol.residuals[1]),
            fmt_f64(sol.residuals[2]),
        ]);
        self.w.csv("periods", "periods.csv", csv)?;

        let t = sol.temperature_c;
        let mut modes = Csv::new(&["pol", "wavelength_um", "n_eff", "n_bulk", "w_y_um", "w_z_um"]);
        for (pol, wl) in [
            (O, sol.pump_um),
            (O, sol.signal_um),
            (E, sol.signal_um),
            (O, sol.idler_um),
            (E, sol.idler_um),
        ] {
            modes.row(&mode_row(&self.solver.solve(pol, wl, t).context("design modes")?));
        }
        self.w.csv("modes", "modes.csv", modes)?;

        let cutoff = self.cfg.poling.coincidence_cutoff;
        let summaries: Vec<OrderSummary> = [
            ("oeo", sol.orders.spdc_ooe),
            ("eoo", sol.orders.spdc_oeo),
            ("eo", sol.orders.electro_optic),
        ]
        .iter()
        .map(|&(process, (m, n))| {
            let k = poling.reciprocal_vector(m, n);
            let orders = coincident_orders(k, &poling, cutoff);
            OrderSummary {
                process,
                order: (m, n),
                k_rad_per_um: k,
                effective_g: effective_coefficient(k, &poling, cutoff),
                coincident_orders: orders.len(),
                leading: orders.into_iter().take(5).collect(),
            }
        })
        .collect();
        #[derive(Serialize)]
        struct DesignRecord<'a> {
            solution: &'a PhaseMatchSolution,
            poling: &'a PolingDesign,
            period_ratio: f64,
            grating: &'a [OrderSummary],
        }
        self.w.json(
            "design",
            "design.json",
            &DesignRecord {
                solution: &sol,
                poling: &poling,
                period_ratio: sol.period2_um / sol.period1_um,
                grating: &summaries,
            },
        )?;
        if self.w.wants(Format::Txt) {
            let pattern = synthesize_pattern(&poling).context("poling pattern")?;
            self.w
                .write("poling_segments", "poling_segments.txt", Format::Txt, pattern.to_segment_text().as_bytes())?;
        }
        Ok(())
    }

    fn map(&mut self) -> Result<(), CliError> {
        let section = self.cfg.sweep.map;
        let material: &Material = &self.cfg.material;
        match section.model {
            PropagationModel::Waveguide => {
                let solver = self.solver.clone();
                self.map_with(&*solver, &section.axes)
            }
            PropagationModel::Bulk => self.map_with(&BulkMedium(material), &section.axes),
        }
    }

    fn map_with<P: Propagation + ?Sized>(&mut self, model: &P, axes: &MapAxes) -> Result<(), CliError> {
        let orders = self.cfg.poling.orders;
        let grid = delta_map(model, axes, orders).map_err(|e| match e {
            Error::InvalidParameter(m) => CliError::Schema {
                path: "sweep.map.axes".into(),
                message: m,
            },
            e => CliError::Computation {
                context: "map".into(),
                source: e,
            },
        })?;
        let eval = |a1: f64, a2: f64| {
            let (p, s, t) = axes.point(a1, a2);
            delta_at(model, p, s, t, orders)
        };
        let locus = match matching_locus(&grid, eval) {
            Ok(l) => l,
            Err(Error::EmptyLocus) => Vec::new(),
            Err(e) => return Err(CliError::Computation { context: "locus".into(), source: e }),
        };
        let (n1, n2) = axes.names();
        let mut csv = Csv::new(&["axis1", "axis2", "delta_rad_per_um", "valid"]);
        for (i2, &a2) in grid.axis2.iter().enumerate() {
            for (i1, &a1) in grid.axis1.iter().enumerate() {
                let v = grid.get(i1, i2);
                csv.row(&[
                    fmt_f64(a1),
                    fmt_f64(a2),
                    fmt_f64(v.unwrap_or(f64::NAN)),
                    if v.is_some() { "1".into() } else { "0".into() },
                ]);
            }
        }
        self.w.csv("delta_map", "delta_map.csv", csv)?;
        let mut lc = Csv::new(&["axis1", "axis2"]);
        for &(a, b) in &locus {
            lc.row(&[fmt_f64(a), fmt_f64(b)]);
        }
        self.w.csv("locus", "locus.csv", lc)?;

        let w = &self.cfg.waves;
        let design_xy = match axes {
            MapAxes::SignalPump { .. } => (w.signal_um, w.pump_um),
            MapAxes::SignalTemperature { .. } => (w.signal_um, w.temperature_c),
        };
        let (r1, r2) = axes.ranges();
        let span = ((r1.stop - r1.start).abs(), (r2.stop - r2.start).abs());
        let nearest = locus
            .iter()
            .map(|&(a, b)| {
                let d = (((a - design_xy.0) / span.0).powi(2) + ((b - design_xy.1) / span.1).powi(2)).sqrt();
                (d, a, b)
            })
            .fold(None, |best: Option<(f64, f64, f64)>, c| match best {
                Some(b) if b.0 <= c.0 => Some(b),
                _ => Some(c),
            });
        #[derive(Serialize)]
        struct MapRecord {
            axis1: &'static str,
            axis2: &'static str,
            locus_points: usize,
            design_point: (f64, f64),
            nearest_locus_point: Option<(f64, f64)>,
            nearest_relative_distance: Option<f64>,
        }
        self.w.json(
            "map_summary",
            "map.json",
            &MapRecord {
                axis1: n1,
                axis2: n2,
                locus_points: locus.len(),
                design_point: design_xy,
                nearest_locus_point: nearest.map(|n| (n.1, n.2)),
                nearest_relative_distance: nearest.map(|n| n.0),
            },
        )?;
        if self.w.wants(Format::Svg) {
            let svg = heatmap("Δ (rad/μm)", n1, n2, &grid.axis1, &grid.axis2, &grid.cells, &locus);
            self.w.svg("delta_map_plot", "delta_map.svg", svg)?;
        }
        Ok(())
    }

    fn spectrum(&mut self) -> Result<(), CliError> {
        let (sol, poling) = self.point()?;
        let b = &self.cfg.biphoton;
        let e = expansions(&self.solver, &sol, b.dispersion)?;
        let l = poling.length_cm * 1e-2;
        let mut csv = Csv::new(&["nu_rad_per_s", "amplitude_sq", "branch"]);
        let mut bw = Csv::new(&["branch", "fwhm_nm", "fwhm_rad_per_s"]);
        let mut series = Vec::new();
        for &branch in &b.branches {
            let grid = DetuningGrid::spectral_with(&e.factors(branch), l, b.grid_zeros, b.grid_points)
                .context("spectrum grid")?;
            let sp = spectrum(branch, l, &e, &grid).context("spectrum")?;
            for (nu, v) in sp.nu.iter().zip(&sp.values) {
                csv.row(&[fmt_f64(*nu), fmt_f64(*v), branch.label().into()]);
            }
            let ctx = format!("bandwidth of {branch}");
            bw.row(&[
                branch.label().into(),
                fmt_f64(fwhm_nm(&sp, sol.signal_um).context(&ctx)?),
                fmt_f64(fwhm_rad_per_s(&sp).context(&ctx)?),
            ]);
            series.push((branch.label().to_string(), sp.nu.iter().copied().zip(sp.values.iter().copied()).collect()));
        }
        self.w.csv("spectrum", "spectrum.csv", csv)?;
        self.w.csv("bandwidths", "bandwidths.csv", bw)?;
        if self.w.wants(Format::Svg) {
            let svg = line_plot("Normalized signal spectra", "ν (rad/s)", "|h|²", &series);
            self.w.svg("spectrum_plot", "spectrum.svg", svg)?;
        }
        Ok(())
    }

    fn dip(&mut self) -> Result<(), CliError> {
        let (sol, poling) = self.point()?;
        let b = &self.cfg.biphoton;
        let e = expansions(&self.solver, &sol, b.dispersion)?;
        let l = poling.length_cm * 1e-2;
        let mut series = Vec::new();
        for &branch in &b.branches {
            let factors = e.factors(branch);
            let grid = DetuningGrid::for_dip(&factors, l).context("dip grid")?;
            let sp = spectrum(branch, l, &e, &grid).context("dip spectrum")?;
            let taus = match b.dip_delays_s {
                Some(r) => r.values(),
                None => {
                    let width: f64 = factors.iter().map(|f| l * f.walkoff_s_per_m.abs()).sum();
                    (0..401).map(|k| -2.0 * width + 4.0 * width * k as f64 / 400.0).collect()
                }
            };
            let rc = hom_dip(&sp, &taus).context(&format!("dip of {branch}"))?;
            let mut csv = Csv::new(&["tau_s", "Rc"]);
            for (t, r) in taus.iter().zip(&rc) {
                csv.row(&[fmt_f64(*t), fmt_f64(*r)]);
            }
            self.w.csv(&format!("dip_{branch}"), &format!("dip_{branch}.csv"), csv)?;
            series.push((branch.label().to_string(), taus.into_iter().zip(rc).collect()));
        }
        if self.w.wants(Format::Svg) {
            let svg = line_plot("Coincidence rate", "τ (s)", "R_C", &series);
            self.w.svg("dip_plot", "dip.svg", svg)?;
        }
        Ok(())
    }

    fn eo(&mut self) -> Result<(), CliError> {
        let (sol, poling) = self.point()?;
        let op = eo_operating_point(self.cfg, &self.solver, &sol, &poling)?;
        let setting = EoSetting {
            field_v_per_m: op.field_v_per_m,
            kappa_per_m: op.kappa_per_m,
            detuning_per_m: op.detuning_per_m,
            length_m: op.length_m,
        };
        self.w.json("eo", "eo.json", &op)?;
        let trace = propagate_trace(&setting, &FieldAmplitudes::pure(O), self.cfg.eo.trace_samples)
            .context("eo trace")?;
        let mut csv = Csv::new(&["x_m", "P_o", "P_e"]);
        for &(x, po, pe) in &trace {
            csv.row(&[fmt_f64(x), fmt_f64(po), fmt_f64(pe)]);
        }
        self.w.csv("eo_trace", "eo_trace.csv", csv)?;
        if self.w.wants(Format::Svg) {
            let series = vec![
                ("P_o".to_string(), trace.iter().map(|t| (t.0, t.1)).collect()),
                ("P_e".to_string(), trace.iter().map(|t| (t.0, t.2)).collect()),
            ];
            self.w.svg("eo_trace_plot", "eo_trace.svg", line_plot("Signal power along the EO section", "x (m)", "power", &series))?;
        }
        if let Some(sweep) = self.cfg.eo.sweep {
            let fields = sweep.field_v_per_m.values();
            let lengths = sweep.length_cm.values();
            let pts: Vec<(f64, f64)> = lengths
                .iter()
                .flat_map(|&lc| fields.iter().map(move |&f| (f, lc)))
                .collect();
            let slope = op.slope_per_m_per_v_per_m;
            let delta = op.detuning_per_m;
            let etas: Vec<dppln::Result<f64>> = pts
                .par_iter()
                .map(|&(f, lc)| {
                    let s = EoSetting {
                        field_v_per_m: f,
                        kappa_per_m: slope * f,
                        detuning_per_m: delta,
                        length_m: lc * 1e-2,
                    };
                    conversion_efficiency(&propagate(&s, &FieldAmplitudes::pure(O))?, E)
                })
                .collect();
            let mut csv = Csv::new(&["E_a_V_per_m", "L_cm", "eta"]);
            for (&(f, lc), eta) in pts.iter().zip(etas) {
                csv.row(&[fmt_f64(f), fmt_f64(lc), fmt_f64(eta.context("eo sweep")?)]);
            }
            self.w.csv("eo_sweep", "eo_sweep.csv", csv)?;
        }
        Ok(())
    }

    fn entropy(&mut self) -> Result<(), CliError> {
        let (sol, poling) = self.point()?;
        let eo = eo_operating_point(self.cfg, &self.solver, &sol, &poling)?;
        let report = entropy_report(self.cfg, &self.solver, &sol, &poling, &eo)?;
        #[derive(Serialize)]
        struct StateRecord<'a> {
            eo: &'a EoOperatingPoint,
            report: &'a EntropyReport,
            geometry_sweep_floor: Option<Floor>,
        }
        #[derive(Serialize)]
        struct Floor {
            orthogonal: f64,
            parallel: f64,
            orthogonal_phase_matched: f64,
            parallel_phase_matched: f64,
        }
        let mut floor = None;
        if let Some(g) = self.cfg.biphoton.geometry_sweep {
            let points = geometry_sweep(self.cfg, g.span, g.steps);
            let mut csv = Csv::new(&[
                "width_scale",
                "depth_scale",
                "S_orthogonal",
                "S_parallel",
                "S_orthogonal_phase_matched",
                "S_parallel_phase_matched",
            ]);
            let min = |f: fn(&GeometryPoint) -> f64| points.iter().map(f).fold(f64::INFINITY, f64::min);
            for p in &points {
                csv.row(&[
                    fmt_f64(p.width_scale),
                    fmt_f64(p.depth_scale),
                    fmt_f64(p.entropy_orthogonal),
                    fmt_f64(p.entropy_parallel),
                    fmt_f64(p.entropy_orthogonal_phase_matched),
                    fmt_f64(p.entropy_parallel_phase_matched),
                ]);
            }
            self.w.csv("entropy_sweep", "entropy_sweep.csv", csv)?;
            floor = Some(Floor {
                orthogonal: min(|p| p.entropy_orthogonal),
                parallel: min(|p| p.entropy_parallel),
                orthogonal_phase_matched: min(|p| p.entropy_orthogonal_phase_matched),
                parallel_phase_matched: min(|p| p.entropy_parallel_phase_matched),
            });
        }
        self.w.json(
            "state",
            "state.json",
            &StateRecord {
                eo: &eo,
                report: &report,
                geometry_sweep_floor: floor,
            },
        )?;
        Ok(())
    }

    fn validate(&mut self) -> Result<Vec<OracleOutcome>, CliError> {
        let outcomes = run_suite(self.cfg, &self.solver);
        let mut csv = Csv::new(&["oracle", "module", "passed", "detail"]);
        for o in &outcomes {
            csv.row(&[o.name.clone(), o.module.into(), o.passed.to_string(), o.detail.clone()]);
        }
        self.w.csv("validation", "validation.csv", csv)?;
        self.w.json("validation_record", "validation.json", &outcomes)?;
        Ok(outcomes)
    }
}

/// Resolves the artifact path of a manifest entry.
pub fn artifact_path(manifest_path: &Path, name: &str, manifest: &Manifest) -> Option<PathBuf> {
    let dir = manifest_path.parent()?;
    manifest.artifacts.iter().find(|a| a.name == name).map(|a| dir.join(&a.path))
}
