//! Built-in oracle suite: every invariant of the toolkit checked against an
//! independent computation, reported as a pass/fail table.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use dppln::biphoton::{
    binary_entropy, entropy, fwhm_rad_per_s, h_eval, hom_dip, spectrum, state_coefficients, Branch,
    BranchIndices, DetuningGrid, GroupDelays, ProcessFactors, SourceModel, StateOptions,
};
use dppln::eo::{analytic_conversion, propagate, EoSetting, FieldAmplitudes};
use dppln::grating::{
    effective_coefficient, fourier_coefficient, reciprocal_vector, spectrum_amplitude, synthesize_pattern,
    PolingDesign,
};
use dppln::material::{Material, Polarization, SPEED_OF_LIGHT};
use dppln::qpm::{design, solve_periods, OrderSet};
use dppln::waveguide::{
    overlap_integral, solve_mode, trial_beta_squared, BulkMedium, ModeSolver, WaveguideGeometry,
};
use dppln::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::commands::design_point;
use crate::config::RunConfig;

use Polarization::{E, O};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOutcome {
    pub name: String,
    pub module: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = Result<String, String>;

fn outcome(module: &'static str, name: &str, r: Check) -> OracleOutcome {
    let (passed, detail) = match r {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    OracleOutcome {
        name: name.into(),
        module,
        passed,
        detail,
    }
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: Error) -> String {
    e.to_string()
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed_0000 + tag)
}

/// Runs every oracle; the configured material, geometry and design point
/// are used wherever an oracle depends on them.
pub fn run_suite(cfg: &RunConfig, solver: &ModeSolver) -> Vec<OracleOutcome> {
    let m = &cfg.material;
    vec![
        outcome("material", "birefringence_sign", birefringence(m)),
        outcome("material", "normal_dispersion", normal_dispersion(m)),
        outcome("material", "analytic_derivative", derivative(m)),
        outcome("waveguide", "cutoff_monotonicity", cutoff(m)),
        outcome("waveguide", "variational_bound", variational(cfg)),
        outcome("waveguide", "overlap_symmetry", overlap(cfg, solver)),
        outcome("grating", "coefficient_parity", parity()),
        outcome("grating", "coefficient_symmetry", symmetry()),
        outcome("grating", "segment_vs_order_sum", segment_vs_sum()),
        outcome("grating", "sampled_transform", sampled_transform()),
        outcome("grating", "pattern_power", pattern_power(cfg, solver)),
        outcome("qpm", "period_round_trip", round_trip()),
        outcome("qpm", "energy_conservation", energy(cfg, solver)),
        outcome("qpm", "residual_contract", residuals(cfg, solver)),
        outcome("eo", "norm_and_closed_form", eo_grid()),
        outcome("eo", "zero_detuning_periodicity", eo_periodic()),
        outcome("biphoton", "h_identity", h_identity()),
        outcome("biphoton", "bandwidth_scaling", bandwidth_scaling(cfg, solver)),
        outcome("biphoton", "dip_shape", dip_shape()),
        outcome("biphoton", "entropy_scale_invariance", entropy_scaling()),
        outcome("biphoton", "eo_factor_neutrality", neutrality()),
        outcome("cli", "cache_transparency", cache_transparency(cfg, solver)),
    ]
}

fn birefringence(m: &Material) -> Check {
    let [w0, w1] = m.sellmeier.wavelength_range_um;
    let [t0, t1] = m.sellmeier.temperature_range_c;
    let mut worst = f64::INFINITY;
    for i in 0..=40 {
        for j in 0..=10 {
            let wl = w0 + (w1 - w0) * i as f64 / 40.0;
            let t = t0 + (t1 - t0) * j as f64 / 10.0;
            let d = m.bulk_index(O, wl, t).map_err(err)? - m.bulk_index(E, wl, t).map_err(err)?;
            worst = worst.min(d);
        }
    }
    ensure(worst > 0.0, format!("min n_o - n_e = {worst:.3e}"))
}

fn normal_dispersion(m: &Material) -> Check {
    for pol in [O, E] {
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let wl = 0.7 + 1e-3 * i as f64;
            let n = m.bulk_index(pol, wl, 25.0).map_err(err)?;
            if n >= prev {
                return Err(format!("{pol}: not decreasing at {wl} um"));
            }
            prev = n;
        }
    }
    Ok("monotone over 0.7-1.7 um".into())
}

fn derivative(m: &Material) -> Check {
    let mut r = rng(1);
    let [w0, w1] = m.sellmeier.wavelength_range_um;
    let [t0, t1] = m.sellmeier.temperature_range_c;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let wl = r.random_range(w0 + 0.01..w1 - 0.01);
        let t = r.random_range(t0..t1);
        let pol = if r.random_bool(0.5) { E } else { O };
        let h = 1e-3;
        let n = |x: f64| m.bulk_index(pol, x, t);
        let fd = (-n(wl + 2.0 * h).map_err(err)? + 8.0 * n(wl + h).map_err(err)? - 8.0 * n(wl - h).map_err(err)?
            + n(wl - 2.0 * h).map_err(err)?)
            / (12.0 * h);
        let an = m.index_derivative(pol, wl, t).map_err(err)?;
        let rel = if an == 0.0 { fd.abs() } else { ((an - fd) / an).abs() };
        worst = worst.max(rel);
    }
    ensure(worst < 1e-7, format!("max relative deviation {worst:.2e}"))
}

fn cutoff(m: &Material) -> Check {
    let g = WaveguideGeometry::new(4.0, 3.0, 0.002).map_err(err)?;
    let opts = Default::default();
    let mut prev = f64::INFINITY;
    let mut cut_at = None;
    for i in 0..=60 {
        let wl = 0.5 + 0.04 * i as f64;
        match solve_mode(m, &g, O, wl, 25.0, &opts) {
            Ok(mode) => {
                if cut_at.is_some() {
                    return Err(format!("guided again at {wl} um"));
                }
                let x = mode.n_eff - mode.n_bulk;
                if x >= prev {
                    return Err(format!("excess index rose at {wl} um"));
                }
                prev = x;
            }
            Err(Error::NoGuidedMode { .. }) => {
                cut_at.get_or_insert(wl);
            }
            Err(e) => return Err(err(e)),
        }
    }
    match cut_at {
        Some(wl) => Ok(format!("monotone up to cutoff near {wl:.2} um")),
        None => Err("no cutoff inside the sweep".into()),
    }
}

fn variational(cfg: &RunConfig) -> Check {
    let (m, g) = (&cfg.material, &cfg.geometry);
    let (wl, t) = (cfg.waves.signal_um, cfg.waves.temperature_c);
    let mode = solve_mode(m, g, O, wl, t, &cfg.solver).map_err(err)?;
    let k = TAU / wl;
    let mut best = f64::NEG_INFINITY;
    for i in 0..200 {
        let wy = mode.w_y_um * (0.5 + 1.5 * i as f64 / 199.0);
        for j in 0..200 {
            let wz = mode.w_z_um * (0.5 + 1.5 * j as f64 / 199.0);
            best = best.max(trial_beta_squared(m, g, O, wl, t, wy, wz).map_err(err)?);
        }
    }
    let gain = best.sqrt() / k - mode.n_eff;
    ensure(gain <= 1e-9, format!("grid exceeds optimizer by {gain:.2e}"))
}

fn overlap(cfg: &RunConfig, s: &ModeSolver) -> Check {
    let t = cfg.waves.temperature_c;
    let a = s.solve(O, cfg.waves.signal_um, t).map_err(err)?;
    let b = s.solve(E, cfg.waves.signal_um, t).map_err(err)?;
    let c = s.solve(O, cfg.waves.pump_um, t).map_err(err)?;
    let mut lines = Vec::new();
    for (x, y) in [(&a, &b), (&a, &c), (&b, &c)] {
        let f = overlap_integral(&[x, y]).map_err(err)?;
        let r = overlap_integral(&[y, x]).map_err(err)?;
        if (f - r).abs() > 1e-12 || f > 1.0 {
            return Err(format!("asymmetric or > 1: {f} {r}"));
        }
        lines.push(format!("{f:.6}"));
    }
    let selfo = overlap_integral(&[&a, &a]).map_err(err)?;
    ensure(selfo == 1.0, format!("overlaps {}; self {selfo}", lines.join(" ")))
}

fn parity() -> Check {
    for m in -11i64..=11 {
        for n in -11i64..=11 {
            if m == 0 || n == 0 {
                continue;
            }
            let g = fourier_coefficient(m, n, 0.5, 0.5).map_err(err)?;
            if (g == 0.0) != (m % 2 == 0 || n % 2 == 0) {
                return Err(format!("G({m},{n}) = {g}"));
            }
        }
    }
    Ok("|m|,|n| <= 11".into())
}

fn symmetry() -> Check {
    let mut r = rng(2);
    for _ in 0..200 {
        let (m, n) = (r.random_range(1..15i64), r.random_range(1..15i64));
        let d = r.random_range(0.05..0.95);
        let g = fourier_coefficient(m, n, d, d).map_err(err)?;
        let swapped = fourier_coefficient(n, m, d, d).map_err(err)?;
        let neg = fourier_coefficient(-m, -n, d, d).map_err(err)?;
        if g != swapped || g != neg {
            return Err(format!("G({m},{n}) at duty {d}"));
        }
    }
    Ok("200 random orders and duties".into())
}

fn converged_sum(k: f64, d: &PolingDesign) -> f64 {
    let mut cutoff = 64;
    let mut prev = effective_coefficient(k, d, cutoff);
    loop {
        cutoff *= 2;
        let cur = effective_coefficient(k, d, cutoff);
        if (cur - prev).abs() < 1e-4 || cutoff > 1 << 20 {
            return cur;
        }
        prev = cur;
    }
}

fn segment_vs_sum() -> Check {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 20 {
        let p1 = r.random_range(5.0..40.0);
        let q = r.random_range(1..4i64);
        let p = r.random_range(q + 1..9i64);
        let (m, n) = (r.random_range(1..6i64), r.random_range(-5..6i64));
        if n == 0 {
            continue;
        }
        let d = PolingDesign {
            period1_um: p1,
            period2_um: p1 * p as f64 / q as f64,
            duty1: r.random_range(0.2..0.8),
            duty2: r.random_range(0.2..0.8),
            length_cm: r.random_range(2..6u32) as f64 * p1 * p as f64 * 1e-4,
        };
        let k = reciprocal_vector(m, n, d.period1_um, d.period2_um);
        if k.abs() < 1e-6 {
            continue;
        }
        let a = spectrum_amplitude(&synthesize_pattern(&d).map_err(err)?, k);
        let g = converged_sum(k, &d);
        worst = worst.max((a.re - g).abs()).max(a.im.abs());
        done += 1;
    }
    ensure(worst < 1e-3, format!("20 designs, max |difference| {worst:.2e}"))
}

fn sampled_transform() -> Check {
    let d = PolingDesign::new(25.84, 6.0 * 25.84, 6.0 * 25.84e-4).map_err(err)?;
    let pattern = synthesize_pattern(&d).map_err(err)?;
    let k = d.reciprocal_vector(1, 1);
    let n = 1usize << 20;
    let h = pattern.length_um / n as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for j in 0..n {
        let x = (j as f64 + 0.5) * h;
        let s = f64::from(pattern.sign_at(x));
        re += s * (k * x).cos();
        im -= s * (k * x).sin();
    }
    let a = spectrum_amplitude(&pattern, k);
    let diff = (re / n as f64 - a.re).hypot(im / n as f64 - a.im);
    ensure(diff < 1e-3, format!("2^20 samples vs segment-exact: {diff:.2e}"))
}

fn pattern_power(cfg: &RunConfig, s: &ModeSolver) -> Check {
    let (_, d) = design_point(s, &cfg.waves, &cfg.poling).map_err(|e| e.to_string())?;
    let p = synthesize_pattern(&d).map_err(err)?;
    let power = p.mean_power();
    ensure(power == 1.0, format!("{} walls, mean f^2 = {power}", p.walls_um.len()))
}

fn round_trip() -> Check {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let p1 = r.random_range(3.0..60.0);
        let p2 = r.random_range(61.0..400.0);
        let k1 = reciprocal_vector(3, 1, p1, p2);
        let k2 = reciprocal_vector(3, -1, p1, p2);
        let (a, b) = solve_periods(k1, k2, [(3, 1), (3, -1)]).map_err(err)?;
        worst = worst.max((a / p1 - 1.0).abs()).max((b / p2 - 1.0).abs());
    }
    ensure(worst < 1e-9, format!("max relative error {worst:.2e}"))
}

fn energy(cfg: &RunConfig, s: &ModeSolver) -> Check {
    let mut r = rng(5);
    let bulk = BulkMedium(&cfg.material);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = r.random_range(0.70..0.76);
        let sg = r.random_range(1.55..1.75);
        let t = r.random_range(0.0..150.0);
        let sol = design(&bulk, p, sg, t, OrderSet::default()).map_err(err)?;
        let lhs = 1.0 / sol.pump_um;
        worst = worst.max((lhs - 1.0 / sol.signal_um - 1.0 / sol.idler_um).abs() / lhs);
    }
    let (sol, _) = design_point(s, &cfg.waves, &cfg.poling).map_err(|e| e.to_string())?;
    let lhs = 1.0 / sol.pump_um;
    worst = worst.max((lhs - 1.0 / sol.signal_um - 1.0 / sol.idler_um).abs() / lhs);
    ensure(worst <= 4.0 * f64::EPSILON, format!("max relative defect {worst:.2e}"))
}

fn residuals(cfg: &RunConfig, s: &ModeSolver) -> Check {
    let w = &cfg.waves;
    let sol = design(s, w.pump_um, w.signal_um, w.temperature_c, cfg.poling.orders).map_err(err)?;
    let worst = sol.residuals[0].abs().max(sol.residuals[1].abs());
    ensure(
        worst < 1e-12,
        format!(
            "r1 = {:.2e}, r2 = {:.2e} rad/um; EO residual {:.4e} rad/um",
            sol.residuals[0], sol.residuals[1], sol.residuals[2]
        ),
    )
}

fn eo_grid() -> Check {
    let l = 0.03;
    let (mut dev, mut drift): (f64, f64) = (0.0, 0.0);
    for i in 0..10 {
        let kappa = (0.2 + 0.6 * i as f64) / l;
        for j in 0..10 {
            let delta = kappa * 0.5 * j as f64;
            let s = EoSetting {
                field_v_per_m: 0.0,
                kappa_per_m: kappa,
                detuning_per_m: delta,
                length_m: l,
            };
            let out = propagate(&s, &FieldAmplitudes::pure(O)).map_err(err)?;
            dev = dev.max((out.e.norm_sqr() - analytic_conversion(kappa, delta, l)).abs());
            drift = drift.max((out.power() - 1.0).abs());
        }
    }
    ensure(dev < 1e-8 && drift < 1e-9, format!("max |d eta| {dev:.2e}, norm drift {drift:.2e}"))
}

fn eo_periodic() -> Check {
    let kappa = 50.2;
    let eta = |l: f64| -> Result<f64, String> {
        let s = EoSetting {
            field_v_per_m: 0.0,
            kappa_per_m: kappa,
            detuning_per_m: 0.0,
            length_m: l,
        };
        Ok(propagate(&s, &FieldAmplitudes::pure(O)).map_err(err)?.e.norm_sqr())
    };
    let base = eta(0.013)?;
    let mut worst: f64 = 0.0;
    for k in 1..4 {
        worst = worst.max((eta(0.013 + PI / kappa * k as f64)? - base).abs());
    }
    worst = worst.max((eta(FRAC_PI_2 / kappa)? - 1.0).abs());
    ensure(worst < 1e-8, format!("max deviation {worst:.2e}"))
}

fn h_identity() -> Check {
    let mut r = rng(6);
    for _ in 0..1000 {
        let x: f64 = r.random_range(-1e3..1e3);
        let h = h_eval(x);
        let s = (x / 2.0).sin() / (x / 2.0);
        if (h.norm_sqr() - s * s).abs() > 1e-12 {
            return Err(format!("modulus at {x}"));
        }
        if s.abs() > 1e-6 {
            let phase = (h / (s * num_complex::Complex64::from_polar(1.0, -x / 2.0))).arg();
            if phase.abs() > 1e-9 {
                return Err(format!("phase at {x}"));
            }
        }
    }
    Ok("1000 random arguments".into())
}

fn bandwidth_scaling(cfg: &RunConfig, s: &ModeSolver) -> Check {
    let (sol, poling) = design_point(s, &cfg.waves, &cfg.poling).map_err(|e| e.to_string())?;
    let delays = GroupDelays::evaluate(s, sol.signal_um, sol.idler_um, sol.temperature_c).map_err(err)?;
    let e = delays.expansions();
    let l = poling.length_cm * 1e-2;
    let mut parts = Vec::new();
    for b in Branch::ALL {
        let grid = DetuningGrid::spectral(&e.factors(b), l).map_err(err)?;
        let w1 = fwhm_rad_per_s(&spectrum(b, l, &e, &grid).map_err(err)?).map_err(err)?;
        let w2 = fwhm_rad_per_s(&spectrum(b, 2.0 * l, &e, &grid).map_err(err)?).map_err(err)?;
        let ratio = w2 / w1;
        if !(0.495..=0.505).contains(&ratio) {
            return Err(format!("{b}: ratio {ratio}"));
        }
        parts.push(format!("{b} {ratio:.4}"));
    }
    Ok(parts.join(", "))
}

fn toy_delays() -> GroupDelays {
    let c = SPEED_OF_LIGHT;
    GroupDelays {
        signal_o: 2.290 / c,
        signal_e: 2.209 / c,
        idler_o: 2.300 / c,
        idler_e: 2.220 / c,
    }
}

fn dip_shape() -> Check {
    let e = toy_delays().expansions();
    let l = 0.05;
    let mut worst_tri: f64 = 0.0;
    for b in Branch::ALL {
        let factors = e.factors(b);
        let grid = DetuningGrid::for_dip(&factors, l).map_err(err)?;
        let sp = spectrum(b, l, &e, &grid).map_err(err)?;
        let width: f64 = factors.iter().map(|f| l * f.walkoff_s_per_m.abs()).sum();
        let taus: Vec<f64> = (-40..=40).map(|k| width * k as f64 / 20.0).collect();
        let rc = hom_dip(&sp, &taus).map_err(err)?;
        if rc[40] != 0.5 {
            return Err(format!("{b}: R_C(0) = {}", rc[40]));
        }
        for k in 0..rc.len() {
            if (rc[k] - rc[80 - k]).abs() > 1e-12 || rc[k] < 0.5 || rc[k] > 1.0 + 1e-3 {
                return Err(format!("{b}: R_C({}) = {}", taus[k], rc[k]));
            }
        }
        if factors.len() == 1 {
            for (t, r) in taus.iter().zip(&rc) {
                let tri = 1.0 - 0.5 * (1.0 - t.abs() / width).max(0.0);
                worst_tri = worst_tri.max((r - tri).abs());
            }
        }
    }
    ensure(worst_tri < 1e-3, format!("even, minimal at 0, bounded; triangle error {worst_tri:.2e}"))
}

fn toy_source(delays: GroupDelays, n_so: f64, n_se: f64) -> SourceModel {
    SourceModel {
        length_m: 0.05,
        signal_omega: TAU * SPEED_OF_LIGHT / 1.6568e-6,
        idler_omega: TAU * SPEED_OF_LIGHT / 1.3162e-6,
        indices: BranchIndices {
            signal_o: n_so,
            signal_e: n_se,
            idler_o: 2.23,
            idler_e: 2.15,
        },
        overlaps: ProcessFactors {
            oeo: 0.071,
            eoo: 0.069,
            electro_optic: 0.97,
        },
        grating: ProcessFactors {
            oeo: -0.045,
            eoo: 0.045,
            electro_optic: 0.405,
        },
        d31_m_per_v: 4.6e-12,
        gamma51_m_per_v: 32.6e-12,
        pump_amplitude: 1.0,
        delays,
    }
}

fn entropy_scaling() -> Check {
    let src = toy_source(toy_delays(), 2.21, 2.14);
    let e = src.delays.expansions();
    let grid = DetuningGrid::symmetric(1e12, 11).map_err(err)?;
    let mut c = state_coefficients(&src, &e, &grid, 0.0, StateOptions::default()).map_err(err)?;
    let mut r = rng(7);
    for _ in 0..100 {
        let (a, b, k) = (r.random_range(1e-6..1e6), r.random_range(1e-6..1e6), r.random_range(1e-6..1e6));
        c.weights.oe = a;
        c.weights.eo = b;
        let s1 = entropy(&c).map_err(err)?;
        c.weights.oe = a * k;
        c.weights.eo = b * k;
        let s2 = entropy(&c).map_err(err)?;
        if (s1 - s2).abs() > 1e-12 || (s1 - binary_entropy(a / (a + b))).abs() > 1e-12 {
            return Err(format!("weights {a}, {b} scaled by {k}"));
        }
    }
    Ok("100 random rescalings".into())
}

fn neutrality() -> Check {
    let mut d = toy_delays();
    d.signal_e = d.signal_o;
    let mut e = d.expansions();
    e.oeo.walkoff_s_per_m = -0.0703 / SPEED_OF_LIGHT;
    e.eoo.walkoff_s_per_m = 0.0927 / SPEED_OF_LIGHT;
    let src = toy_source(d, 2.2, 2.2);
    let grid = DetuningGrid::spectral(&e.factors(Branch::Oe), src.length_m).map_err(err)?;
    let so = entropy(&state_coefficients(&src, &e, &grid, 0.0, StateOptions::default()).map_err(err)?).map_err(err)?;
    let sp = entropy(&state_coefficients(&src, &e, &grid, 1.0, StateOptions::default()).map_err(err)?).map_err(err)?;
    ensure((so - sp).abs() < 1e-12, format!("orthogonal {so:.12}, parallel {sp:.12}"))
}

fn cache_transparency(cfg: &RunConfig, s: &ModeSolver) -> Check {
    let fresh = ModeSolver::with_options(cfg.material.clone(), cfg.geometry, cfg.solver).map_err(err)?;
    let t = cfg.waves.temperature_c;
    let a = s.solve(O, cfg.waves.signal_um, t).map_err(err)?;
    let b = fresh.solve(O, cfg.waves.signal_um, t).map_err(err)?;
    let warm = ModeSolver::with_options(cfg.material.clone(), cfg.geometry, cfg.solver).map_err(err)?;
    warm.preload(vec![b]);
    let c = warm.solve(O, cfg.waves.signal_um, t).map_err(err)?;
    ensure(
        a == b && b == c && warm.solve_count() == 0,
        format!("cached and recomputed modes identical; warm solves {}", warm.solve_count()),
    )
}
