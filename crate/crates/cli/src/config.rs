//! TOML run configuration and its mapping onto the core experiment configs.
//!
//! One config drives one experiment. `mode = "scattering"` seeds the solver
//! from the singular expansion of `(f, ψ)` and swings out and back;
//! `mode = "stability"` perturbs the model data at `t = 1` and evolves toward
//! the blow-up. Field defaults are mode-aware: the two experiments need very
//! different step fractions and fit windows.

use nlw_core::error::{Error, Result};
use nlw_core::expr::Expr;
use nlw_core::grid::{Grid1D, SpatialField};
use nlw_core::pipeline::{ScatteringConfig, StabilityConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Scattering,
    Stability,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    #[default]
    Standard,
    Tilted,
}

fn default_n() -> usize {
    256
}

fn default_length() -> f64 {
    2.0 * std::f64::consts::PI
}

fn default_t_seed() -> f64 {
    1e-3
}

fn default_t_far() -> f64 {
    1e-1
}

fn default_back_slices() -> usize {
    90
}

fn default_refine() -> usize {
    6
}

fn default_modes() -> usize {
    12
}

fn default_phi_cap() -> f64 {
    1e4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub p: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default)]
    pub chart: ChartKind,
    /// surface profile (scattering mode), expression string
    #[serde(default)]
    pub f: Option<String>,
    /// scattering datum profile (scattering mode)
    #[serde(default)]
    pub psi: Option<String>,
    #[serde(default = "default_t_seed")]
    pub t_seed: f64,
    #[serde(default = "default_t_far")]
    pub t_far: f64,
    /// step fraction; defaults to 1e-3 (scattering) or 1e-2 (stability)
    #[serde(default)]
    pub dt_frac: Option<f64>,
    #[serde(default = "default_back_slices")]
    pub back_slices: usize,
    /// expansion order; default 2β + 4
    #[serde(default)]
    pub order: Option<f64>,
    /// ψ-fit window in surface distance; defaults to [0.01, 0.05]
    /// (scattering) or [0.05, 0.2] (stability)
    #[serde(default)]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default = "default_refine")]
    pub refine_iterations: usize,
    #[serde(default = "default_modes")]
    pub surface_modes: usize,
    /// perturbation size (stability mode)
    #[serde(default)]
    pub eps: Option<f64>,
    /// φ perturbation profile (stability mode)
    #[serde(default)]
    pub g0: Option<String>,
    /// ∂_tφ perturbation profile (stability mode)
    #[serde(default)]
    pub g1: Option<String>,
    #[serde(default = "default_phi_cap")]
    pub phi_cap: f64,
    /// recorded for reproducibility; all pipeline stages are deterministic
    #[serde(default)]
    pub rng_seed: u64,
}

impl RunConfig {
    pub fn parse(src: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(src)
            .map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(Error::InvalidParameter(format!("p = {} must exceed 1", self.p)));
        }
        match self.mode {
            Mode::Scattering => {
                if self.f.is_none() || self.psi.is_none() {
                    return Err(Error::InvalidParameter(
                        "scattering mode needs `f` and `psi` profiles".into(),
                    ));
                }
                if !(self.t_seed > 0.0 && self.t_far > self.t_seed) {
                    return Err(Error::InvalidParameter(format!(
                        "need 0 < t_seed < t_far, got {} and {}",
                        self.t_seed, self.t_far
                    )));
                }
            }
            Mode::Stability => {
                if self.eps.is_none() || self.g0.is_none() {
                    return Err(Error::InvalidParameter(
                        "stability mode needs `eps` and `g0`".into(),
                    ));
                }
                if self.chart == ChartKind::Tilted {
                    return Err(Error::InvalidParameter(
                        "stability runs use the standard chart".into(),
                    ));
                }
            }
        }
        if let Some(w) = self.fit_window {
            if !(w[0] > 0.0 && w[1] > w[0]) {
                return Err(Error::InvalidParameter(format!("bad fit window {w:?}")));
            }
        }
        if let Some(d) = self.dt_frac {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::InvalidParameter(format!("dt_frac {d} out of (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.length, self.n)
    }

    fn sample(&self, spec: &Option<String>, what: &str) -> Result<SpatialField> {
        let spec = spec
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter(format!("missing `{what}` profile")))?;
        Ok(Expr::parse(spec)?.sample(self.grid()?))
    }

    pub fn f_field(&self) -> Result<SpatialField> {
        self.sample(&self.f, "f")
    }

    pub fn psi_field(&self) -> Result<SpatialField> {
        self.sample(&self.psi, "psi")
    }

    pub fn g0_field(&self) -> Result<SpatialField> {
        self.sample(&self.g0, "g0")
    }

    pub fn g1_field(&self) -> Result<SpatialField> {
        match &self.g1 {
            Some(_) => self.sample(&self.g1, "g1"),
            None => Ok(SpatialField::zeros(self.grid()?)),
        }
    }

    pub fn to_scattering(&self) -> Result<ScatteringConfig> {
        if self.mode != Mode::Scattering {
            return Err(Error::InvalidParameter("not a scattering config".into()));
        }
        let d = ScatteringConfig::default();
        Ok(ScatteringConfig {
            p: self.p,
            n: self.n,
            length: self.length,
            t_seed: self.t_seed,
            t_far: self.t_far,
            order: self.order,
            dt_frac_back: self.dt_frac.unwrap_or(d.dt_frac_back),
            fit_window: self.fit_window.map(|w| (w[0], w[1])).unwrap_or(d.fit_window),
            back_slices: self.back_slices,
            refine_iterations: self.refine_iterations,
            surface_modes: self.surface_modes,
            tilted: self.chart == ChartKind::Tilted,
        })
    }

    pub fn to_stability(&self) -> Result<StabilityConfig> {
        if self.mode != Mode::Stability {
            return Err(Error::InvalidParameter("not a stability config".into()));
        }
        let d = StabilityConfig::default();
        Ok(StabilityConfig {
            p: self.p,
            n: self.n,
            length: self.length,
            phi_cap: self.phi_cap,
            dt_frac: self.dt_frac.unwrap_or(d.dt_frac),
            fit_window: self.fit_window.map(|w| (w[0], w[1])).unwrap_or(d.fit_window),
            refine_iterations: self.refine_iterations,
            surface_modes: self.surface_modes,
        })
    }
}
