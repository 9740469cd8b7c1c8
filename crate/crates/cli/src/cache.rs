//! Persistent store of solved modes, one JSON document per line.
//!
//! Entries are keyed by a digest of everything that determines a solve
//! (material, geometry, solver options) plus polarization, wavelength and
//! temperature. Each line carries its own digest; lines that fail to parse
//! or verify are ignored.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dppln::material::Material;
use dppln::waveguide::{GuidedMode, SolverOptions, WaveguideGeometry};
use serde::{Deserialize, Serialize};

use crate::output::sha256_hex;
use crate::CliError;

pub const CACHE_FILE: &str = "modes.jsonl";

/// Digest of the solver context; any change in a field changes the key.
pub fn geometry_digest(material: &Material, geometry: &WaveguideGeometry, options: &SolverOptions) -> String {
    let mut bytes = Vec::new();
    for v in [
        geometry.width_um,
        geometry.depth_um,
        geometry.delta_n_max,
        geometry.lateral_diffusion_um.unwrap_or(f64::NAN),
        options.width_tol_um,
        options.quad_rel_tol,
        options.cutoff,
        options.min_width_um,
        options.max_width_um,
    ] {
        bytes.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    bytes.extend(serde_json::to_vec(material).expect("material serializes"));
    sha256_hex(&bytes)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    geometry: String,
    mode: GuidedMode,
    digest: String,
}

fn entry_digest(geometry: &str, mode: &GuidedMode) -> String {
    let mut body = geometry.as_bytes().to_vec();
    body.extend(serde_json::to_vec(mode).expect("mode serializes"));
    sha256_hex(&body)
}

type Key = (String, u8, u64, u64);

fn key(geometry: &str, m: &GuidedMode) -> Key {
    (
        geometry.to_string(),
        m.pol as u8,
        m.wavelength_um.to_bits(),
        m.temperature_c.to_bits(),
    )
}

fn read_entries(path: &Path) -> Result<BTreeMap<Key, Entry>, CliError> {
    let text = match fs::read(path) {
        Ok(b) => String::from_utf8_lossy(&b).into_owned(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(CliError::Io(format!("{}: {e}", path.display()))),
    };
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let Ok(entry) = serde_json::from_str::<Entry>(line) else {
            continue;
        };
        if entry.digest != entry_digest(&entry.geometry, &entry.mode) {
            continue;
        }
        out.insert(key(&entry.geometry, &entry.mode), entry);
    }
    Ok(out)
}

/// Handle on a cache directory.
#[derive(Debug, Clone)]
pub struct ModeCache {
    path: PathBuf,
}

impl ModeCache {
    pub fn new(dir: &Path) -> Self {
        Self {
            path: dir.join(CACHE_FILE),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Verified entries for one solver context.
    pub fn load(&self, geometry: &str) -> Result<Vec<GuidedMode>, CliError> {
        Ok(read_entries(&self.path)?
            .into_values()
            .filter(|e| e.geometry == geometry)
            .map(|e| e.mode)
            .collect())
    }

    pub fn store(&self, geometry: &str, modes: &[GuidedMode]) -> Result<usize, CliError> {
        cache_modes(&self.path, geometry, modes)
    }
}

/// Merges `modes` into the store at `path`; returns how many were new.
///
/// The file is rewritten through a temporary sibling and renamed into
/// place, so concurrent readers see either the old or the new content.
pub fn cache_modes(path: &Path, geometry: &str, modes: &[GuidedMode]) -> Result<usize, CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut entries = read_entries(path)?;
    let mut added = 0;
    for m in modes {
        let k = key(geometry, m);
        if entries.contains_key(&k) {
            continue;
        }
        entries.insert(
            k,
            Entry {
                geometry: geometry.to_string(),
                mode: *m,
                digest: entry_digest(geometry, m),
            },
        );
        added += 1;
    }
    if added == 0 && path.exists() {
        return Ok(0);
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension(format!("jsonl.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        for e in entries.values() {
            serde_json::to_writer(&mut f, e).map_err(|e| CliError::Io(e.to_string()))?;
            f.write_all(b"\n").map_err(io)?;
        }
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)?;
    Ok(added)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dppln::material::Polarization;
    use dppln::waveguide::ModeSolver;

    fn solved(n: usize) -> (String, Vec<GuidedMode>) {
        let s = ModeSolver::new(Material::default(), WaveguideGeometry::default()).unwrap();
        let modes = (0..n)
            .map(|i| s.solve(Polarization::O, 1.3 + 0.01 * i as f64, 25.0).unwrap())
            .collect();
        (
            geometry_digest(s.material(), s.geometry(), &SolverOptions::default()),
            modes,
        )
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ModeCache::new(dir.path());
        let (g, modes) = solved(3);
        assert_eq!(cache.store(&g, &modes).unwrap(), 3);
        assert_eq!(cache.store(&g, &modes).unwrap(), 0);
        let back = cache.load(&g).unwrap();
        assert_eq!(back.len(), 3);
        for m in &modes {
            assert!(back.contains(m));
        }
    }

    #[test]
    fn digest_tracks_tiny_geometry_changes() {
        let m = Material::default();
        let g = WaveguideGeometry::default();
        let mut h = g;
        h.width_um += 1e-6;
        let o = SolverOptions::default();
        assert_ne!(geometry_digest(&m, &g, &o), geometry_digest(&m, &h, &o));
    }

    #[test]
    fn corrupt_lines_are_misses() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ModeCache::new(dir.path());
        let (g, modes) = solved(2);
        cache.store(&g, &modes).unwrap();
        let text = fs::read_to_string(cache.path()).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[0] = lines[0].replacen("\"n_eff\":2", "\"n_eff\":3", 1);
        fs::write(cache.path(), lines.join("\n")).unwrap();
        assert_eq!(cache.load(&g).unwrap().len(), 1);
        let truncated = &text[..text.len() / 3];
        fs::write(cache.path(), truncated).unwrap();
        assert!(cache.load(&g).unwrap().len() <= 1);
    }
}
