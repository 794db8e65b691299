//! Run configuration: one TOML file with flat sections mirroring the module types.

use crate::error::{CliError, Result};
use magtunnel::amplitude::{AmplitudeOptions, Subprincipal};
use magtunnel::eikonal::{EikonalGrid, SealSpec};
use magtunnel::field_model::{make_example_field, ExampleFieldParams, FieldSpec};
use magtunnel_spectra::{GaugeChoice, GridSpec, SolverOptions};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Named field presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// `b0 = 1, eps1 = 0.1, eps2 = 0.0755, c_u = 0.8, beta = 1, r = 0.75`; action about 0.394.
    A,
}

impl Preset {
    pub fn params(self) -> ExampleFieldParams {
        match self {
            Preset::A => ExampleFieldParams {
                b0: 1.0,
                eps1: 0.1,
                eps2: 0.0755,
                c_u: 0.8,
                beta: 1.0,
                strip_r: 0.75,
                eps: None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldConfig {
    Preset {
        preset: Preset,
    },
    Params(ExampleFieldParams),
}

impl FieldConfig {
    pub fn params(&self) -> ExampleFieldParams {
        match *self {
            FieldConfig::Preset { preset } => preset.params(),
            FieldConfig::Params(p) => p,
        }
    }
}

/// Seal bump on the lower well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SealConfig {
    pub radius: f64,
    pub amplitude: f64,
}

impl Default for SealConfig {
    fn default() -> Self {
        Self { radius: 0.15, amplitude: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EikonalConfig {
    /// Defaults to `2 c_u + 1`.
    pub half_width: Option<f64>,
    pub intervals: usize,
}

impl Default for EikonalConfig {
    fn default() -> Self {
        let g = EikonalGrid::default();
        Self { half_width: g.half_width, intervals: g.intervals }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmplitudeConfig {
    pub intervals: usize,
    pub seal_margin: f64,
    /// Overrides the transport value of `z2`.
    pub z2: Option<f64>,
    pub subprincipal: Subprincipal,
    pub delta_rel: f64,
    pub quad_rel: f64,
}

impl Default for AmplitudeConfig {
    fn default() -> Self {
        let o = AmplitudeOptions::default();
        Self {
            intervals: o.intervals,
            seal_margin: o.seal_margin,
            z2: o.z2,
            subprincipal: o.t,
            delta_rel: o.delta_rel,
            quad_rel: o.quad_rel,
        }
    }
}

impl AmplitudeConfig {
    pub fn options(&self) -> AmplitudeOptions {
        AmplitudeOptions {
            intervals: self.intervals,
            seal_margin: self.seal_margin,
            z2: self.z2,
            t: self.subprincipal,
            delta_rel: self.delta_rel,
            quad_rel: self.quad_rel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraConfig {
    /// Semiclassical parameters, strictly descending.
    pub h: Vec<f64>,
    #[serde(default = "default_gauge")]
    pub gauge: GaugeChoice,
    /// Divides the default spacing of the box template.
    #[serde(default = "one")]
    pub refine: usize,
    /// Fixed coarse spacing instead of the template rule.
    #[serde(default)]
    pub spacing: Option<f64>,
    #[serde(default = "default_nev")]
    pub nev: usize,
    #[serde(default = "default_ncv")]
    pub ncv: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_restarts")]
    pub max_restarts: usize,
    #[serde(default = "default_sigma_factor")]
    pub sigma_factor: f64,
    /// Three-level grid refinement at the largest `h`.
    #[serde(default = "yes")]
    pub refinement_check: bool,
}

fn default_gauge() -> GaugeChoice {
    GaugeChoice::LandauX
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_nev() -> usize {
    SolverOptions::default().nev
}
fn default_ncv() -> usize {
    SolverOptions::default().ncv
}
fn default_tol() -> f64 {
    SolverOptions::default().tol
}
fn default_max_restarts() -> usize {
    SolverOptions::default().max_restarts
}
fn default_sigma_factor() -> f64 {
    SolverOptions::default().sigma_factor
}

/// Window selection for the gap fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Points with `gap <= noise_factor * noise_floor` are discarded.
    pub noise_factor: f64,
    pub min_points: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { noise_factor: 100.0, min_points: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub field: FieldConfig,
    #[serde(default)]
    pub seal: SealConfig,
    #[serde(default)]
    pub eikonal: EikonalConfig,
    #[serde(default)]
    pub amplitude: AmplitudeConfig,
    pub spectra: SpectraConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    SolverOptions::default().seed
}

/// A configuration that passed validation, with the objects built from it.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub params: ExampleFieldParams,
    pub field: FieldSpec,
    pub seal: SealSpec,
}

impl Loaded {
    pub fn eikonal_grid(&self) -> EikonalGrid {
        EikonalGrid {
            half_width: self.config.eikonal.half_width,
            intervals: self.config.eikonal.intervals,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.config.spectra;
        SolverOptions {
            nev: s.nev,
            ncv: s.ncv,
            tol: s.tol,
            max_restarts: s.max_restarts,
            sigma_factor: s.sigma_factor,
            seed: self.config.seed,
        }
    }

    /// Coarse grid for one `h`; the solver adds its own refinement.
    pub fn grid(&self, h: f64) -> Result<GridSpec> {
        let s = &self.config.spectra;
        let template = GridSpec::for_field(&self.field, h, s.refine)?;
        let g = match s.spacing {
            Some(d) => GridSpec::with_spacing(template.half_widths, d)?,
            None => template,
        };
        g.validate(h)?;
        Ok(g)
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.output.dir
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Re-validates every module invariant the run depends on.
    pub fn validate(self) -> Result<Loaded> {
        let bad = |m: String| Err(CliError::Config(m));
        let params = self.field.params();
        params.validate()?;
        let field = make_example_field(params)?;
        let seal = SealSpec::at_lower_well(&field, self.seal.radius, self.seal.amplitude);
        seal.validate(&field)?;

        if self.eikonal.intervals < 2 {
            return bad(format!("eikonal.intervals = {} must be at least 2", self.eikonal.intervals));
        }
        if let Some(x) = self.eikonal.half_width {
            if !(x > field.c_u) {
                return bad(format!("eikonal.half_width = {x} must exceed c_u = {}", field.c_u));
            }
        }
        let a = &self.amplitude;
        if a.intervals < 8 || a.intervals % 2 == 1 {
            return bad(format!("amplitude.intervals = {} must be even and at least 8", a.intervals));
        }
        if !(a.seal_margin >= 0.0 && a.delta_rel > 0.0 && a.quad_rel > 0.0) {
            return bad("amplitude tolerances must be positive".into());
        }

        let s = &self.spectra;
        if s.h.len() < self.fit.min_points.max(4) {
            return bad(format!(
                "spectra.h has {} values; fitting needs at least {}",
                s.h.len(),
                self.fit.min_points.max(4)
            ));
        }
        if s.h.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return bad("spectra.h values must be positive".into());
        }
        if s.h.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("spectra.h must be strictly descending, got {:?}", s.h));
        }
        if s.nev < 2 {
            return bad(format!("spectra.nev = {} must be at least 2 to resolve the pair", s.nev));
        }
        if s.ncv < s.nev + 2 {
            return bad(format!("spectra.ncv = {} must be at least nev + 2", s.ncv));
        }
        if !(s.tol > 0.0 && s.sigma_factor > 0.0 && s.sigma_factor < 1.0) || s.refine == 0 {
            return bad("spectra.tol > 0, 0 < sigma_factor < 1 and refine >= 1 are required".into());
        }
        if !(self.fit.noise_factor > 0.0) {
            return bad("fit.noise_factor must be positive".into());
        }
        let loaded = Loaded { config: self, params, field, seal };
        for &h in &loaded.config.spectra.h {
            loaded.grid(h)?;
        }
        Ok(loaded)
    }
}
