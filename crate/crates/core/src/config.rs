//! Run configuration: flat `key = value` text with `#` comments.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Loading validates every key and fills defaults for optional ones,
//! so a loaded [`RunConfig`] written back with [`RunConfig::to_config_string`]
//! reloads to an identical value.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{ParamPair, ScalarField};
use crate::forward::TimeGrid;
use crate::grid::Grid2D;
use crate::io::{read_field, read_mask, read_observations, BundleInfo};
use crate::observation::{generate_synthetic, ObservationSet};
use crate::optimizer::{NewtonCgConfig, ParamMode};
use crate::problem::Problem;
use crate::regularization::RegOperator;
use crate::synthetic::{domain_center, gaussian_bump, smooth_random_field};
use crate::verification::default_epsilons;

/// Split `key = value` lines. Blank lines and `#` comments are skipped.
/// Returns `(key, value, line_number)`.
pub(crate) fn parse_key_values(text: &str, path: &Path) -> Result<Vec<(String, String, usize)>> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "empty key".into(),
            });
        }
        if out.iter().any(|e| e.0 == key) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("duplicate key `{key}`"),
            });
        }
        out.push((key, v.trim().to_string(), i + 1));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Disk {
        nx: usize,
        ny: usize,
        radius: f64,
    },
    Square {
        nx: usize,
        ny: usize,
    },
    /// Mask file; spacing comes from its header.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// `center = None` places the bump at the middle of the bounding box.
    Gaussian {
        center: Option<(f64, f64)>,
        width: f64,
        amplitude: f64,
    },
    File(PathBuf),
}

/// Where a parameter field comes from. Seeded smooth random fields are
/// written `smooth:mean:rel_amplitude:seed`.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Constant(f64),
    File(PathBuf),
    Smooth {
        mean: f64,
        rel_amplitude: f64,
        seed: u64,
    },
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSpec::Constant(v) => write!(f, "{v}"),
            FieldSpec::File(p) => write!(f, "file:{}", p.display()),
            FieldSpec::Smooth {
                mean,
                rel_amplitude,
                seed,
            } => write!(f, "smooth:{mean}:{rel_amplitude}:{seed}"),
        }
    }
}

impl FromStr for FieldSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some(p) = s.strip_prefix("file:") {
            return Ok(FieldSpec::File(PathBuf::from(p.trim())));
        }
        if let Some(rest) = s.strip_prefix("smooth:") {
            let parts: Vec<&str> = rest.split(':').map(str::trim).collect();
            if parts.len() != 3 {
                return Err("expected smooth:mean:rel_amplitude:seed".into());
            }
            let num = |t: &str| {
                t.parse::<f64>()
                    .map_err(|_| format!("`{t}` is not a number"))
            };
            return Ok(FieldSpec::Smooth {
                mean: num(parts[0])?,
                rel_amplitude: num(parts[1])?,
                seed: parts[2]
                    .parse()
                    .map_err(|_| format!("`{}` is not a seed", parts[2]))?,
            });
        }
        s.parse::<f64>()
            .map(FieldSpec::Constant)
            .map_err(|_| format!("`{s}` is not a number, file:<path> or smooth:mean:amp:seed"))
    }
}

impl FieldSpec {
    fn finite(&self) -> bool {
        match self {
            FieldSpec::Constant(v) => v.is_finite(),
            FieldSpec::File(_) => true,
            FieldSpec::Smooth {
                mean,
                rel_amplitude,
                ..
            } => mean.is_finite() && rel_amplitude.is_finite(),
        }
    }

    pub fn resolve(&self, grid: &Arc<Grid2D>, base: &Path) -> Result<ScalarField> {
        match self {
            FieldSpec::Constant(v) => Ok(ScalarField::constant(grid.clone(), *v)),
            FieldSpec::File(p) => read_field(&base.join(p), Some(grid)),
            FieldSpec::Smooth {
                mean,
                rel_amplitude,
                seed,
            } => Ok(smooth_random_field(grid, *mean, *rel_amplitude, *seed)),
        }
    }
}

/// Every knob of a CLI run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
    pub grid: GridSpec,
    pub hx: f64,
    pub hy: f64,
    pub final_time: f64,
    pub steps: usize,
    pub u0: InitialSpec,
    pub d_true: FieldSpec,
    pub g_true: FieldSpec,
    pub d_mean: FieldSpec,
    pub g_mean: FieldSpec,
    pub d_init: FieldSpec,
    pub g_init: FieldSpec,
    pub gamma_d: f64,
    pub delta_d: f64,
    pub gamma_g: f64,
    pub delta_g: f64,
    pub obs_steps: Vec<usize>,
    pub noise_std: f64,
    pub sigma_noise: f64,
    pub seed: u64,
    /// Observation bundle to calibrate against; synthetic data otherwise.
    pub data_dir: Option<PathBuf>,
    pub optimizer: NewtonCgConfig,
    pub fd_epsilons: Vec<f64>,
    pub symmetry_pairs: usize,
    pub output_dir: PathBuf,
}

const KNOWN_KEYS: &[&str] = &[
    "grid",
    "grid_file",
    "nx",
    "ny",
    "radius",
    "hx",
    "hy",
    "final_time",
    "steps",
    "u0",
    "u0_file",
    "center",
    "width",
    "amplitude",
    "d_true",
    "g_true",
    "d_mean",
    "g_mean",
    "d_init",
    "g_init",
    "gamma_d",
    "delta_d",
    "gamma_g",
    "delta_g",
    "obs_steps",
    "noise_std",
    "sigma_noise",
    "seed",
    "data_dir",
    "max_newton_iters",
    "grad_rtol",
    "grad_atol",
    "cg_max_iters",
    "forcing_exponent",
    "forcing_cap",
    "armijo_c",
    "backtrack_factor",
    "max_backtracks",
    "param_floor_d",
    "param_mode",
    "gauss_newton",
    "precondition",
    "fd_epsilons",
    "symmetry_pairs",
    "output_dir",
];

struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.raw(key)
            .ok_or_else(|| Error::config(key, "missing required key"))
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::config(key, format!("expected {what}, got `{v}`")))
            })
            .transpose()
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.parse::<f64>(key, "a number")?.unwrap_or(default);
        if !v.is_finite() {
            return Err(Error::config(key, "must be finite"));
        }
        Ok(v)
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self
            .parse::<usize>(key, "a non-negative integer")?
            .unwrap_or(default))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self.parse::<bool>(key, "true or false")?.unwrap_or(default))
    }

    fn field_or(&self, key: &str, default: FieldSpec) -> Result<FieldSpec> {
        let spec = match self.raw(key) {
            Some(v) => v.parse::<FieldSpec>().map_err(|m| Error::config(key, m))?,
            None => default,
        };
        if !spec.finite() {
            return Err(Error::config(key, "must be finite"));
        }
        Ok(spec)
    }

    fn list<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        t.parse::<T>()
                            .map_err(|_| Error::config(key, format!("expected {what}, got `{t}`")))
                    })
                    .collect()
            })
            .transpose()
    }
}

fn require_file(base: &Path, p: &Path, key: &str) -> Result<()> {
    if base.join(p).is_file() {
        Ok(())
    } else {
        Err(Error::config(
            key,
            format!("file `{}` does not exist", base.join(p).display()),
        ))
    }
}

impl RunConfig {
    /// Read and validate a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_str(&text, path, &base)
    }

    /// Parse config text; `path` is only used in error messages.
    pub fn parse_str(text: &str, path: &Path, base_dir: &Path) -> Result<Self> {
        let entries = parse_key_values(text, path)?;
        for (k, _, line) in &entries {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: *line,
                    message: format!("unknown key `{k}`"),
                });
            }
        }
        let e = Entries {
            map: entries.into_iter().map(|(k, v, _)| (k, v)).collect(),
        };

        let hx = e.f64_or("hx", 1.0)?;
        let hy = e.f64_or("hy", 1.0)?;
        let grid = match e.required("grid")? {
            "disk" | "square" => {
                let nx = e
                    .parse::<usize>("nx", "a positive integer")?
                    .ok_or_else(|| Error::config("nx", "missing required key"))?;
                let ny = e
                    .parse::<usize>("ny", "a positive integer")?
                    .ok_or_else(|| Error::config("ny", "missing required key"))?;
                if nx == 0 {
                    return Err(Error::config("nx", "must be >= 1"));
                }
                if ny == 0 {
                    return Err(Error::config("ny", "must be >= 1"));
                }
                if e.raw("grid") == Some("disk") {
                    let default_r = 0.5 * nx.min(ny) as f64 - 0.5;
                    let radius = e.f64_or("radius", default_r)?;
                    if radius <= 0.0 {
                        return Err(Error::config("radius", "must be > 0"));
                    }
                    GridSpec::Disk { nx, ny, radius }
                } else {
                    GridSpec::Square { nx, ny }
                }
            }
            "file" => GridSpec::File(PathBuf::from(e.required("grid_file")?)),
            other => {
                return Err(Error::config(
                    "grid",
                    format!("expected disk, square or file, got `{other}`"),
                ))
            }
        };
        if hx <= 0.0 {
            return Err(Error::config("hx", "must be > 0"));
        }
        if hy <= 0.0 {
            return Err(Error::config("hy", "must be > 0"));
        }
        // spacing used for the default smoothing weight
        let h = match &grid {
            GridSpec::File(p) => {
                require_file(base_dir, p, "grid_file")?;
                let g = read_mask(&base_dir.join(p))?;
                g.hx().min(g.hy())
            }
            _ => hx.min(hy),
        };

        let final_time = e
            .parse::<f64>("final_time", "a number")?
            .ok_or_else(|| Error::config("final_time", "missing required key"))?;
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::config("final_time", "must be > 0"));
        }
        let steps = e
            .parse::<usize>("steps", "a positive integer")?
            .ok_or_else(|| Error::config("steps", "missing required key"))?;
        if steps == 0 {
            return Err(Error::config("steps", "must be >= 1"));
        }

        let u0 = match e.raw("u0").unwrap_or("gaussian") {
            "gaussian" => {
                let center = match e.list::<f64>("center", "a number")? {
                    None => None,
                    Some(c) if c.len() == 2 && c.iter().all(|v| v.is_finite()) => {
                        Some((c[0], c[1]))
                    }
                    Some(_) => return Err(Error::config("center", "expected `x, y`")),
                };
                let width = e.f64_or("width", 2.0 * h)?;
                let amplitude = e.f64_or("amplitude", 0.5)?;
                if width <= 0.0 {
                    return Err(Error::config("width", "must be > 0"));
                }
                if !(0.0..=1.0).contains(&amplitude) {
                    return Err(Error::config("amplitude", "must lie in [0, 1]"));
                }
                InitialSpec::Gaussian {
                    center,
                    width,
                    amplitude,
                }
            }
            "file" => {
                let p = PathBuf::from(e.required("u0_file")?);
                require_file(base_dir, &p, "u0_file")?;
                InitialSpec::File(p)
            }
            other => {
                return Err(Error::config(
                    "u0",
                    format!("expected gaussian or file, got `{other}`"),
                ))
            }
        };

        let d_true = e.field_or(
            "d_true",
            FieldSpec::Smooth {
                mean: 1.0,
                rel_amplitude: 0.25,
                seed: 11,
            },
        )?;
        let g_true = e.field_or(
            "g_true",
            FieldSpec::Smooth {
                mean: 0.3,
                rel_amplitude: 0.25,
                seed: 12,
            },
        )?;
        let d_mean = e.field_or("d_mean", FieldSpec::Constant(1.0))?;
        let g_mean = e.field_or("g_mean", FieldSpec::Constant(0.3))?;
        let d_init = e.field_or("d_init", d_mean.clone())?;
        let g_init = e.field_or("g_init", g_mean.clone())?;
        for (key, spec) in [
            ("d_true", &d_true),
            ("g_true", &g_true),
            ("d_mean", &d_mean),
            ("g_mean", &g_mean),
            ("d_init", &d_init),
            ("g_init", &g_init),
        ] {
            match spec {
                FieldSpec::File(p) => require_file(base_dir, p, key)?,
                FieldSpec::Constant(v) if key.starts_with('d') && *v < 0.0 => {
                    return Err(Error::config(key, "diffusivity must be >= 0"))
                }
                _ => {}
            }
        }

        let mut reg = [0.0; 4];
        for (slot, (key, default)) in reg.iter_mut().zip([
            ("gamma_d", 0.1 * h * h),
            ("delta_d", 0.1),
            ("gamma_g", 0.1 * h * h),
            ("delta_g", 0.1),
        ]) {
            *slot = e.f64_or(key, default)?;
            if key.starts_with("gamma") && *slot <= 0.0 {
                return Err(Error::config(
                    key,
                    "gamma must be > 0 so the regularization operator is elliptic",
                ));
            }
            if key.starts_with("delta") && *slot < 0.0 {
                return Err(Error::config(key, "delta must be >= 0"));
            }
        }

        let obs_steps = match e.list::<usize>("obs_steps", "a step index")? {
            Some(s) => s,
            None if steps >= 2 => vec![steps / 2, steps],
            None => vec![steps],
        };
        if obs_steps.iter().any(|&s| s == 0 || s > steps) {
            return Err(Error::config(
                "obs_steps",
                format!("steps must lie in 1..={steps}"),
            ));
        }
        if obs_steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("obs_steps", "must be strictly increasing"));
        }
        let noise_std = e.f64_or("noise_std", 0.0)?;
        if noise_std < 0.0 {
            return Err(Error::config("noise_std", "must be >= 0"));
        }
        let sigma_noise = e.f64_or("sigma_noise", 0.05)?;
        if sigma_noise <= 0.0 {
            return Err(Error::config("sigma_noise", "must be > 0"));
        }
        let seed = e
            .parse::<u64>("seed", "a non-negative integer")?
            .unwrap_or(0);
        let data_dir = e.raw("data_dir").map(PathBuf::from);
        if let Some(d) = &data_dir {
            require_file(base_dir, &d.join(crate::io::OBS_MANIFEST), "data_dir")?;
        }

        let dflt = NewtonCgConfig::default();
        let optimizer = NewtonCgConfig {
            max_newton_iters: e.usize_or("max_newton_iters", dflt.max_newton_iters)?,
            grad_rtol: e.f64_or("grad_rtol", dflt.grad_rtol)?,
            grad_atol: e.f64_or("grad_atol", dflt.grad_atol)?,
            cg_max_iters: e.usize_or("cg_max_iters", dflt.cg_max_iters)?,
            forcing_exponent: e.f64_or("forcing_exponent", dflt.forcing_exponent)?,
            forcing_cap: e.f64_or("forcing_cap", dflt.forcing_cap)?,
            armijo_c: e.f64_or("armijo_c", dflt.armijo_c)?,
            backtrack_factor: e.f64_or("backtrack_factor", dflt.backtrack_factor)?,
            max_backtracks: e.usize_or("max_backtracks", dflt.max_backtracks)?,
            param_floor_d: e.f64_or("param_floor_d", dflt.param_floor_d)?,
            mode: match e.raw("param_mode") {
                None => dflt.mode,
                Some(v) => ParamMode::parse(v).ok_or_else(|| {
                    Error::config("param_mode", format!("expected direct or log, got `{v}`"))
                })?,
            },
            gauss_newton: e.bool_or("gauss_newton", dflt.gauss_newton)?,
            precondition: e.bool_or("precondition", dflt.precondition)?,
        };
        optimizer.validate()?;
        if optimizer.precondition && (reg[1] == 0.0 || reg[3] == 0.0) {
            return Err(Error::config(
                "precondition",
                "requires delta_d > 0 and delta_g > 0",
            ));
        }

        let fd_epsilons = e
            .list::<f64>("fd_epsilons", "a number")?
            .unwrap_or_else(default_epsilons);
        if fd_epsilons.is_empty()
            || fd_epsilons.iter().any(|&v| !(v > 0.0 && v < 1.0))
            || fd_epsilons.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::config(
                "fd_epsilons",
                "must be strictly decreasing values in (0, 1)",
            ));
        }
        let symmetry_pairs = e.usize_or("symmetry_pairs", 5)?;
        if symmetry_pairs == 0 {
            return Err(Error::config("symmetry_pairs", "must be >= 1"));
        }
        let output_dir = PathBuf::from(e.raw("output_dir").unwrap_or("out"));

        Ok(RunConfig {
            base_dir: base_dir.to_path_buf(),
            grid,
            hx,
            hy,
            final_time,
            steps,
            u0,
            d_true,
            g_true,
            d_mean,
            g_mean,
            d_init,
            g_init,
            gamma_d: reg[0],
            delta_d: reg[1],
            gamma_g: reg[2],
            delta_g: reg[3],
            obs_steps,
            noise_std,
            sigma_noise,
            seed,
            data_dir,
            optimizer,
            fd_epsilons,
            symmetry_pairs,
            output_dir,
        })
    }

    /// Every effective setting, defaults included, in loadable form.
    pub fn to_config_string(&self) -> String {
        let mut lines: Vec<String> = Vec::new();
        let mut kv = |k: &str, v: String| lines.push(format!("{k} = {v}"));
        match &self.grid {
            GridSpec::Disk { nx, ny, radius } => {
                kv("grid", "disk".into());
                kv("nx", nx.to_string());
                kv("ny", ny.to_string());
                kv("radius", radius.to_string());
            }
            GridSpec::Square { nx, ny } => {
                kv("grid", "square".into());
                kv("nx", nx.to_string());
                kv("ny", ny.to_string());
            }
            GridSpec::File(p) => {
                kv("grid", "file".into());
                kv("grid_file", p.display().to_string());
            }
        }
        kv("hx", self.hx.to_string());
        kv("hy", self.hy.to_string());
        kv("final_time", self.final_time.to_string());
        kv("steps", self.steps.to_string());
        match &self.u0 {
            InitialSpec::Gaussian {
                center,
                width,
                amplitude,
            } => {
                kv("u0", "gaussian".into());
                if let Some((x, y)) = center {
                    kv("center", format!("{x}, {y}"));
                }
                kv("width", width.to_string());
                kv("amplitude", amplitude.to_string());
            }
            InitialSpec::File(p) => {
                kv("u0", "file".into());
                kv("u0_file", p.display().to_string());
            }
        }
        kv("d_true", self.d_true.to_string());
        kv("g_true", self.g_true.to_string());
        kv("d_mean", self.d_mean.to_string());
        kv("g_mean", self.g_mean.to_string());
        kv("d_init", self.d_init.to_string());
        kv("g_init", self.g_init.to_string());
        kv("gamma_d", self.gamma_d.to_string());
        kv("delta_d", self.delta_d.to_string());
        kv("gamma_g", self.gamma_g.to_string());
        kv("delta_g", self.delta_g.to_string());
        kv("obs_steps", join(&self.obs_steps));
        kv("noise_std", self.noise_std.to_string());
        kv("sigma_noise", self.sigma_noise.to_string());
        kv("seed", self.seed.to_string());
        if let Some(d) = &self.data_dir {
            kv("data_dir", d.display().to_string());
        }
        let o = &self.optimizer;
        kv("max_newton_iters", o.max_newton_iters.to_string());
        kv("grad_rtol", o.grad_rtol.to_string());
        kv("grad_atol", o.grad_atol.to_string());
        kv("cg_max_iters", o.cg_max_iters.to_string());
        kv("forcing_exponent", o.forcing_exponent.to_string());
        kv("forcing_cap", o.forcing_cap.to_string());
        kv("armijo_c", o.armijo_c.to_string());
        kv("backtrack_factor", o.backtrack_factor.to_string());
        kv("max_backtracks", o.max_backtracks.to_string());
        kv("param_floor_d", o.param_floor_d.to_string());
        kv("param_mode", o.mode.as_str().into());
        kv("gauss_newton", o.gauss_newton.to_string());
        kv("precondition", o.precondition.to_string());
        kv("fd_epsilons", join(&self.fd_epsilons));
        kv("symmetry_pairs", self.symmetry_pairs.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        lines.push(String::new());
        lines.join("\n")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_config_string())?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Materialize the grid and every configured field.
    pub fn build(&self) -> Result<Experiment> {
        let grid = Arc::new(match &self.grid {
            GridSpec::Disk { nx, ny, radius } => Grid2D::disk(*nx, *ny, *radius, self.hx, self.hy)?,
            GridSpec::Square { nx, ny } => Grid2D::square(*nx, *ny, self.hx, self.hy)?,
            GridSpec::File(p) => read_mask(&self.resolve(p))?,
        });
        let time_grid = TimeGrid::new(self.final_time, self.steps)?;
        let u0 = match &self.u0 {
            InitialSpec::Gaussian {
                center,
                width,
                amplitude,
            } => gaussian_bump(
                &grid,
                center.unwrap_or_else(|| domain_center(&grid)),
                *width,
                *amplitude,
            ),
            InitialSpec::File(p) => read_field(&self.resolve(p), Some(&grid))?,
        };
        if u0.min() < 0.0 || u0.max() > 1.0 {
            return Err(Error::config("u0", "initial state must lie in [0, 1]"));
        }
        let field = |key: &str, spec: &FieldSpec| -> Result<ScalarField> {
            spec.resolve(&grid, &self.base_dir)
                .map_err(|e| Error::config(key, e.to_string()))
        };
        let truth = ParamPair::new(
            field("d_true", &self.d_true)?,
            field("g_true", &self.g_true)?,
        )?;
        let initial = ParamPair::new(
            field("d_init", &self.d_init)?,
            field("g_init", &self.g_init)?,
        )?;
        truth
            .validate_params()
            .map_err(|e| Error::config("d_true", e.to_string()))?;
        initial
            .validate_params()
            .map_err(|e| Error::config("d_init", e.to_string()))?;
        let reg_d = RegOperator::new(self.gamma_d, self.delta_d, field("d_mean", &self.d_mean)?)?;
        let reg_g = RegOperator::new(self.gamma_g, self.delta_g, field("g_mean", &self.g_mean)?)?;
        Ok(Experiment {
            grid,
            time_grid,
            u0,
            truth,
            initial,
            reg_d,
            reg_g,
        })
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

/// A materialized configuration.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub grid: Arc<Grid2D>,
    pub time_grid: TimeGrid,
    pub u0: ScalarField,
    pub truth: ParamPair,
    pub initial: ParamPair,
    pub reg_d: RegOperator,
    pub reg_g: RegOperator,
}

impl Experiment {
    /// Synthetic observations from the true parameters.
    pub fn synthesize(&self, config: &RunConfig, seed: u64) -> Result<ObservationSet> {
        generate_synthetic(
            &self.truth,
            &self.u0,
            &self.time_grid,
            &config.obs_steps,
            config.noise_std,
            config.sigma_noise,
            seed,
        )
    }

    /// The configured data bundle if any, synthetic observations otherwise.
    pub fn observations(&self, config: &RunConfig, seed: u64) -> Result<ObservationSet> {
        match &config.data_dir {
            Some(dir) => {
                let (obs, _): (ObservationSet, BundleInfo) =
                    read_observations(&config.resolve(dir), &self.grid)?;
                if obs
                    .steps()
                    .last()
                    .is_some_and(|&s| s > self.time_grid.steps())
                {
                    return Err(Error::config(
                        "data_dir",
                        "observation step beyond the configured horizon",
                    ));
                }
                Ok(obs)
            }
            None => self.synthesize(config, seed),
        }
    }

    pub fn problem(&self, obs: ObservationSet) -> Result<Problem> {
        Problem::new(
            self.u0.clone(),
            self.time_grid,
            obs,
            self.reg_d.clone(),
            self.reg_g.clone(),
        )
    }
}
