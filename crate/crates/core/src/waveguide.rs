//! Variational Hermite–Gauss mode solver for a Ti-indiffused channel guide.
//!
//! The index profile is separable: `n(y, z) = n_bulk + Δn · f(y) · g(z)`
//! with a sum-of-error-functions lateral law `f` and a Gaussian depth law
//! `g` (the half-Gaussian diffusion profile mirrored about the surface).
//! The fundamental trial field is `exp(−y²/w_y² − z²/w_z²)`; its scalar
//! Rayleigh quotient gives a lower bound on `β²` that is maximized over the
//! two widths.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::{Material, Polarization, SPEED_OF_LIGHT};
use crate::numeric::optimize::golden_section_max;
use crate::numeric::quad::adaptive_simpson;

const SQRT_HALF_PI: f64 = 1.253_314_137_315_500_3;

/// Channel dimensions and index contrast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideGeometry {
    pub width_um: f64,
    pub depth_um: f64,
    pub delta_n_max: f64,
    /// Lateral diffusion length of the erf profile; defaults to the depth.
    #[serde(default)]
    pub lateral_diffusion_um: Option<f64>,
}

impl Default for WaveguideGeometry {
    fn default() -> Self {
        Self {
            width_um: 10.0,
            depth_um: 10.0,
            delta_n_max: 0.003,
            lateral_diffusion_um: None,
        }
    }
}

impl WaveguideGeometry {
    pub fn new(width_um: f64, depth_um: f64, delta_n_max: f64) -> Result<Self> {
        let g = Self {
            width_um,
            depth_um,
            delta_n_max,
            lateral_diffusion_um: None,
        };
        g.validate()?;
        Ok(g)
    }

    /// A zero contrast is accepted here so that the solver can report
    /// [`Error::NoGuidedMode`] for it.
    pub fn validate(&self) -> Result<()> {
        let lat_ok = self.lateral_diffusion_um.is_none_or(|d| d > 0.0);
        if self.width_um > 0.0
            && self.depth_um > 0.0
            && (0.0..0.1).contains(&self.delta_n_max)
            && lat_ok
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid waveguide geometry {self:?}")))
        }
    }

    fn lateral_length(&self) -> f64 {
        self.lateral_diffusion_um.unwrap_or(self.depth_um)
    }

    /// Lateral profile, 1 on axis.
    pub fn lateral_profile(&self, y: f64) -> f64 {
        let half = 0.5 * self.width_um;
        let d = self.lateral_length();
        (libm::erf((half + y) / d) + libm::erf((half - y) / d)) / (2.0 * libm::erf(half / d))
    }

    /// Depth profile, 1 at the surface.
    pub fn depth_profile(&self, z: f64) -> f64 {
        let u = z / self.depth_um;
        (-u * u).exp()
    }

    /// Index contrast at a point of the cross-section.
    pub fn index_contrast(&self, y: f64, z: f64) -> f64 {
        self.delta_n_max * self.lateral_profile(y) * self.depth_profile(z)
    }
}

/// Numerical settings of the mode solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub width_tol_um: f64,
    pub quad_rel_tol: f64,
    pub cutoff: f64,
    pub min_width_um: f64,
    pub max_width_um: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            width_tol_um: 1e-4,
            quad_rel_tol: 1e-9,
            cutoff: 1e-7,
            min_width_um: 0.05,
            max_width_um: 500.0,
        }
    }
}

/// Fundamental mode of the guide at one wavelength and polarization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidedMode {
    pub pol: Polarization,
    pub wavelength_um: f64,
    pub temperature_c: f64,
    pub n_eff: f64,
    pub n_bulk: f64,
    pub w_y_um: f64,
    pub w_z_um: f64,
    pub geometry: WaveguideGeometry,
}

impl GuidedMode {
    /// Amplitude prefactor making `∫∫ ψ² dy dz = 1` (1/μm).
    pub fn normalization(&self) -> f64 {
        (2.0 / (std::f64::consts::PI * self.w_y_um * self.w_z_um)).sqrt()
    }

    pub fn field(&self, y: f64, z: f64) -> f64 {
        let (u, v) = (y / self.w_y_um, z / self.w_z_um);
        self.normalization() * (-(u * u) - v * v).exp()
    }

    /// β = 2π n_eff / λ in rad/μm.
    pub fn propagation_constant(&self) -> f64 {
        propagation_constant(self.n_eff, self.wavelength_um)
    }
}

/// β = 2π·n_eff/λ, rad/μm for λ in μm.
pub fn propagation_constant(n_eff: f64, wavelength_um: f64) -> f64 {
    std::f64::consts::TAU * n_eff / wavelength_um
}

/// Power-weighted mean of `f(y)^power` under the lateral trial intensity.
fn lateral_average(geom: &WaveguideGeometry, w: f64, power: i32, rel_tol: f64) -> f64 {
    let integrand = |y: f64| {
        let u = y / w;
        geom.lateral_profile(y).powi(power) * (-2.0 * u * u).exp()
    };
    // f is even; integrate one half of the ±6w window
    2.0 * adaptive_simpson(integrand, 0.0, 6.0 * w, rel_tol, 40) / (w * SQRT_HALF_PI)
}

/// Same average for the Gaussian depth law, in closed form.
fn depth_average(geom: &WaveguideGeometry, w: f64, power: i32) -> f64 {
    let r = w / geom.depth_um;
    1.0 / (1.0 + f64::from(power) * r * r / 2.0).sqrt()
}

struct Rayleigh<'a> {
    geom: &'a WaveguideGeometry,
    k: f64,
    n_bulk: f64,
    rel_tol: f64,
}

impl Rayleigh<'_> {
    fn with_lateral(&self, f1: f64, f2: f64, wy: f64, wz: f64) -> f64 {
        let dn = self.geom.delta_n_max;
        let g1 = depth_average(self.geom, wz, 1);
        let g2 = depth_average(self.geom, wz, 2);
        let nb = self.n_bulk;
        self.k * self.k * (nb * nb + 2.0 * nb * dn * f1 * g1 + dn * dn * f2 * g2)
            - 1.0 / (wy * wy)
            - 1.0 / (wz * wz)
    }

    fn beta_squared(&self, wy: f64, wz: f64) -> f64 {
        let f1 = lateral_average(self.geom, wy, 1, self.rel_tol);
        let f2 = lateral_average(self.geom, wy, 2, self.rel_tol);
        self.with_lateral(f1, f2, wy, wz)
    }
}

/// Variational effective index of the fundamental mode, without caching.
pub fn solve_mode(
    material: &Material,
    geom: &WaveguideGeometry,
    pol: Polarization,
    wavelength_um: f64,
    temperature_c: f64,
    opts: &SolverOptions,
) -> Result<GuidedMode> {
    geom.validate()?;
    let n_bulk = material.bulk_index(pol, wavelength_um, temperature_c)?;
    let k = std::f64::consts::TAU / wavelength_um;
    let rq = Rayleigh {
        geom,
        k,
        n_bulk,
        rel_tol: opts.quad_rel_tol,
    };
    let (lo, hi) = (opts.min_width_um, opts.max_width_um);
    let mut wy = 0.5 * geom.width_um.max(geom.depth_um);
    let mut wz = wy;
    let mut b2 = f64::NEG_INFINITY;
    for _ in 0..100 {
        let (f1, f2) = (
            lateral_average(geom, wy, 1, opts.quad_rel_tol),
            lateral_average(geom, wy, 2, opts.quad_rel_tol),
        );
        let (wz_new, _) =
            golden_section_max(|w| rq.with_lateral(f1, f2, wy, w), lo, hi, opts.width_tol_um);
        let (wy_new, val) =
            golden_section_max(|w| rq.beta_squared(w, wz_new), lo, hi, opts.width_tol_um);
        let moved = (wy_new - wy).abs().max((wz_new - wz).abs());
        wy = wy_new;
        wz = wz_new;
        b2 = val;
        if moved < opts.width_tol_um {
            break;
        }
    }
    let no_mode = Error::NoGuidedMode {
        pol,
        wavelength_um,
        temperature_c,
    };
    if !(b2 > 0.0) {
        return Err(no_mode);
    }
    let n_eff = b2.sqrt() / k;
    if n_eff - n_bulk <= opts.cutoff {
        return Err(no_mode);
    }
    Ok(GuidedMode {
        pol,
        wavelength_um,
        temperature_c,
        n_eff,
        n_bulk,
        w_y_um: wy,
        w_z_um: wz,
        geometry: *geom,
    })
}

/// Variational `β²` (1/μm²) at explicit trial widths; exposed for audits.
pub fn trial_beta_squared(
    material: &Material,
    geom: &WaveguideGeometry,
    pol: Polarization,
    wavelength_um: f64,
    temperature_c: f64,
    w_y_um: f64,
    w_z_um: f64,
) -> Result<f64> {
    let n_bulk = material.bulk_index(pol, wavelength_um, temperature_c)?;
    let rq = Rayleigh {
        geom,
        k: std::f64::consts::TAU / wavelength_um,
        n_bulk,
        rel_tol: 1e-9,
    };
    Ok(rq.beta_squared(w_y_um, w_z_um))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct ModeKey {
    pol: Polarization,
    wavelength: u64,
    temperature: u64,
}

impl ModeKey {
    fn new(pol: Polarization, wl: f64, t: f64) -> Self {
        Self {
            pol,
            wavelength: wl.to_bits(),
            temperature: t.to_bits(),
        }
    }
}

/// Mode solver bound to one material and geometry, with a memo cache.
///
/// The cache holds exact results of [`solve_mode`], so lookups are
/// value-identical to recomputation.
#[derive(Debug)]
pub struct ModeSolver {
    material: Material,
    geometry: WaveguideGeometry,
    options: SolverOptions,
    cache: RwLock<HashMap<ModeKey, GuidedMode>>,
    solves: AtomicUsize,
}

impl ModeSolver {
    pub fn new(material: Material, geometry: WaveguideGeometry) -> Result<Self> {
        Self::with_options(material, geometry, SolverOptions::default())
    }

    pub fn with_options(
        material: Material,
        geometry: WaveguideGeometry,
        options: SolverOptions,
    ) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            material,
            geometry,
            options,
            cache: RwLock::new(HashMap::new()),
            solves: AtomicUsize::new(0),
        })
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn geometry(&self) -> &WaveguideGeometry {
        &self.geometry
    }

    pub fn solve(&self, pol: Polarization, wavelength_um: f64, temperature_c: f64) -> Result<GuidedMode> {
        let key = ModeKey::new(pol, wavelength_um, temperature_c);
        if let Some(m) = self.cache.read().expect("mode cache poisoned").get(&key) {
            return Ok(*m);
        }
        let mode = solve_mode(
            &self.material,
            &self.geometry,
            pol,
            wavelength_um,
            temperature_c,
            &self.options,
        )?;
        self.solves.fetch_add(1, Ordering::Relaxed);
        self.cache
            .write()
            .expect("mode cache poisoned")
            .insert(key, mode);
        Ok(mode)
    }

    /// Number of modes actually computed (cache misses).
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    /// Seeds the cache; entries for another geometry are ignored.
    pub fn preload<I: IntoIterator<Item = GuidedMode>>(&self, modes: I) -> usize {
        let mut cache = self.cache.write().expect("mode cache poisoned");
        let mut n = 0;
        for m in modes {
            if m.geometry == self.geometry {
                cache.insert(ModeKey::new(m.pol, m.wavelength_um, m.temperature_c), m);
                n += 1;
            }
        }
        n
    }

    /// Snapshot of cached modes in a deterministic order.
    pub fn cached_modes(&self) -> Vec<GuidedMode> {
        let cache = self.cache.read().expect("mode cache poisoned");
        let mut modes: Vec<GuidedMode> = cache.values().copied().collect();
        modes.sort_by(|a, b| {
            (a.pol as u8, a.wavelength_um, a.temperature_c)
                .partial_cmp(&(b.pol as u8, b.wavelength_um, b.temperature_c))
                .expect("finite mode keys")
        });
        modes
    }
}

/// Anything that can supply a propagation constant in rad/μm.
pub trait Propagation: Sync {
    fn beta(&self, pol: Polarization, wavelength_um: f64, temperature_c: f64) -> Result<f64>;
}

impl Propagation for ModeSolver {
    fn beta(&self, pol: Polarization, wavelength_um: f64, temperature_c: f64) -> Result<f64> {
        Ok(self.solve(pol, wavelength_um, temperature_c)?.propagation_constant())
    }
}

/// Plane-wave propagation in the bulk crystal.
#[derive(Debug, Clone, Copy)]
pub struct BulkMedium<'a>(pub &'a Material);

impl Propagation for BulkMedium<'_> {
    fn beta(&self, pol: Polarization, wavelength_um: f64, temperature_c: f64) -> Result<f64> {
        let n = self.0.bulk_index(pol, wavelength_um, temperature_c)?;
        Ok(propagation_constant(n, wavelength_um))
    }
}

/// `dβ/dω` in s/m by central differences in ω with step halving.
pub fn dispersion_parameter<P: Propagation + ?Sized>(
    model: &P,
    pol: Polarization,
    wavelength_um: f64,
    temperature_c: f64,
) -> Result<f64> {
    // β(ω) in rad/m, ω in rad/s
    let omega0 = std::f64::consts::TAU * SPEED_OF_LIGHT / (wavelength_um * 1e-6);
    let beta = |omega: f64| -> Result<f64> {
        let wl = std::f64::consts::TAU * SPEED_OF_LIGHT / omega * 1e6;
        Ok(model.beta(pol, wl, temperature_c)? * 1e6)
    };
    let central = |h: f64| -> Result<f64> { Ok((beta(omega0 + h)? - beta(omega0 - h)?) / (2.0 * h)) };
    let mut h = 2e-3 * omega0;
    let mut prev = central(h)?;
    for _ in 0..20 {
        h *= 0.5;
        let cur = central(h)?;
        if ((cur - prev) / cur).abs() < 1e-6 {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::NonConvergence("dispersion_parameter step halving"))
}

fn axis_overlap(widths: &[f64]) -> f64 {
    if widths.len() == 2 && widths[0] == widths[1] {
        return 1.0;
    }
    let norm: f64 = widths
        .iter()
        .map(|w| (2.0 / (std::f64::consts::PI * w * w)).powf(0.25))
        .product();
    let inv: f64 = widths.iter().map(|w| 1.0 / (w * w)).sum();
    let half = 6.0 * widths.iter().copied().fold(0.0, f64::max);
    2.0 * norm * adaptive_simpson(|y| (-inv * y * y).exp(), 0.0, half, 1e-12, 40)
}

/// Transverse overlap of unit-power mode profiles.
///
/// Two modes give the electro-optic overlap (dimensionless, in (0, 1]);
/// three give the parametric overlap in 1/μm.
pub fn overlap_integral(modes: &[&GuidedMode]) -> Result<f64> {
    if !(2..=3).contains(&modes.len()) {
        return Err(Error::InvalidParameter(format!(
            "overlap needs 2 or 3 modes, got {}",
            modes.len()
        )));
    }
    if modes.iter().any(|m| m.geometry != modes[0].geometry) {
        return Err(Error::GeometryMismatch);
    }
    let wy: Vec<f64> = modes.iter().map(|m| m.w_y_um).collect();
    let wz: Vec<f64> = modes.iter().map(|m| m.w_z_um).collect();
    Ok(axis_overlap(&wy) * axis_overlap(&wz))
}
