//! Plain-text file formats.
//!
//! Field file: a header line `nx ny hx hy`, then `ny` rows of `nx`
//! whitespace-separated values (row-major, `j` outer), with `NaN` in
//! inactive cells. Mask file: same layout with `0`/`1` entries. Floats are
//! written in Rust's shortest round-trip form, so files reload bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::config::parse_key_values;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::forward::StateTrajectory;
use crate::grid::Grid2D;
use crate::observation::{Observation, ObservationSet};
use crate::optimizer::IterationRecord;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Header plus row-major raw tokens of a field or mask file.
struct RawGrid {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    tokens: Vec<(String, usize)>,
}

fn read_raw(path: &Path) -> Result<RawGrid> {
    let text = fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 4 {
        return Err(parse_err(path, hline + 1, "header must be `nx ny hx hy`"));
    }
    let nx = h[0]
        .parse()
        .map_err(|_| parse_err(path, hline + 1, "bad nx"))?;
    let ny = h[1]
        .parse()
        .map_err(|_| parse_err(path, hline + 1, "bad ny"))?;
    let hx = h[2]
        .parse()
        .map_err(|_| parse_err(path, hline + 1, "bad hx"))?;
    let hy = h[3]
        .parse()
        .map_err(|_| parse_err(path, hline + 1, "bad hy"))?;
    let tokens: Vec<(String, usize)> = lines
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (t.to_string(), i + 1)))
        .collect();
    let expected: usize = nx * ny;
    if tokens.len() != expected {
        return Err(parse_err(
            path,
            0,
            format!("expected {expected} values, found {}", tokens.len()),
        ));
    }
    Ok(RawGrid {
        nx,
        ny,
        hx,
        hy,
        tokens,
    })
}

fn header(grid: &Grid2D) -> String {
    format!(
        "{} {} {:e} {:e}\n",
        grid.nx(),
        grid.ny(),
        grid.hx(),
        grid.hy()
    )
}

/// Serialize a field; inactive cells become `NaN`.
pub fn field_to_string(field: &ScalarField) -> String {
    let grid = field.grid();
    let mut s = header(grid);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            if i > 0 {
                s.push(' ');
            }
            match grid.active_index(i, j) {
                Some(k) => write!(s, "{:e}", field.values()[k]).unwrap(),
                None => s.push_str("NaN"),
            }
        }
        s.push('\n');
    }
    s
}

pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    fs::write(path, field_to_string(field))?;
    Ok(())
}

/// Read a field. With `grid` given, the file must match its shape and
/// active pattern exactly; otherwise the grid is rebuilt from the
/// non-`NaN` pattern.
pub fn read_field(path: &Path, grid: Option<&Arc<Grid2D>>) -> Result<ScalarField> {
    let raw = read_raw(path)?;
    let mut mask = Vec::with_capacity(raw.tokens.len());
    let mut values = Vec::new();
    for (t, line) in &raw.tokens {
        let v: f64 = t
            .parse()
            .map_err(|_| parse_err(path, *line, format!("bad value `{t}`")))?;
        if v.is_nan() {
            mask.push(false);
        } else if v.is_finite() {
            mask.push(true);
            values.push(v);
        } else {
            return Err(parse_err(path, *line, "infinite value"));
        }
    }
    let file_grid = Grid2D::from_flat_mask(raw.nx, raw.ny, raw.hx, raw.hy, mask)?;
    let grid = match grid {
        Some(g) => {
            if **g != file_grid {
                return Err(parse_err(path, 0, "field does not match the run grid"));
            }
            g.clone()
        }
        None => Arc::new(file_grid),
    };
    ScalarField::new(grid, values)
}

pub fn mask_to_string(grid: &Grid2D) -> String {
    let mut s = header(grid);
    for j in 0..grid.ny() {
        let row: Vec<&str> = (0..grid.nx())
            .map(|i| if grid.is_active(i, j) { "1" } else { "0" })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_mask(path: &Path, grid: &Grid2D) -> Result<()> {
    fs::write(path, mask_to_string(grid))?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<Grid2D> {
    let raw = read_raw(path)?;
    let mask = raw
        .tokens
        .iter()
        .map(|(t, line)| match t.as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(parse_err(
                path,
                *line,
                format!("mask entries must be 0 or 1, got `{t}`"),
            )),
        })
        .collect::<Result<Vec<bool>>>()?;
    Grid2D::from_flat_mask(raw.nx, raw.ny, raw.hx, raw.hy, mask)
}

/// Write the requested snapshots plus `manifest.csv` (`step,time,filename`).
pub fn write_trajectory(
    dir: &Path,
    prefix: &str,
    traj: &StateTrajectory,
    steps: &[usize],
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("step,time,filename\n");
    for &k in steps {
        if k > traj.time_grid().steps() {
            return Err(Error::InvalidParameter(format!(
                "snapshot {k} out of range"
            )));
        }
        let name = format!("{prefix}_{k:05}.txt");
        write_field(&dir.join(&name), traj.snapshot(k))?;
        writeln!(manifest, "{k},{:e},{name}", traj.time_grid().time(k)).unwrap();
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest)?;
    Ok(path)
}

/// One manifest row: `(step, time, path)`.
pub fn read_trajectory_manifest(path: &Path) -> Result<Vec<(usize, f64, PathBuf)>> {
    let text = fs::read_to_string(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let parts: Vec<&str> = l.split(',').collect();
            if parts.len() != 3 {
                return Err(parse_err(path, i + 1, "expected step,time,filename"));
            }
            let step = parts[0]
                .parse()
                .map_err(|_| parse_err(path, i + 1, "bad step"))?;
            let time = parts[1]
                .parse()
                .map_err(|_| parse_err(path, i + 1, "bad time"))?;
            Ok((step, time, dir.join(parts[2])))
        })
        .collect()
}

pub const OBS_MANIFEST: &str = "observations.txt";

/// Provenance stored with an observation bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleInfo {
    pub noise_std: f64,
    pub seed: u64,
}

/// Write `observations.txt` plus one field file per observation (and one
/// mask file per restricted support).
pub fn write_observations(dir: &Path, obs: &ObservationSet, info: BundleInfo) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut supports = Vec::new();
    for o in obs.observations() {
        let name = format!("obs_{:05}.txt", o.step);
        write_field(&dir.join(&name), &o.data)?;
        files.push(name);
        if let Some(s) = &o.support {
            let name = format!("support_{:05}.txt", o.step);
            let grid = o.data.grid();
            let mut flat = vec![false; grid.nx() * grid.ny()];
            for (k, &keep) in s.iter().enumerate() {
                let (i, j) = grid.cell(k);
                flat[j * grid.nx() + i] = keep;
            }
            let mask_grid =
                Grid2D::from_flat_mask(grid.nx(), grid.ny(), grid.hx(), grid.hy(), flat)?;
            write_mask(&dir.join(&name), &mask_grid)?;
            supports.push(name);
        } else {
            supports.push("-".to_string());
        }
    }
    let steps: Vec<String> = obs.steps().iter().map(|s| s.to_string()).collect();
    let manifest = format!(
        "steps = {}\nsigma_noise = {:e}\nnoise_std = {:e}\nseed = {}\nfiles = {}\nsupports = {}\n",
        steps.join(", "),
        obs.sigma_noise(),
        info.noise_std,
        info.seed,
        files.join(", "),
        supports.join(", "),
    );
    let path = dir.join(OBS_MANIFEST);
    fs::write(&path, manifest)?;
    Ok(path)
}

/// Load an observation bundle written by [`write_observations`].
pub fn read_observations(dir: &Path, grid: &Arc<Grid2D>) -> Result<(ObservationSet, BundleInfo)> {
    let path = dir.join(OBS_MANIFEST);
    let entries = parse_key_values(&fs::read_to_string(&path)?, &path)?;
    let get = |key: &str| -> Result<&str> {
        entries
            .iter()
            .find(|e| e.0 == key)
            .map(|e| e.1.as_str())
            .ok_or_else(|| parse_err(&path, 0, format!("missing key `{key}`")))
    };
    let list = |s: &str| -> Vec<String> {
        s.split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect()
    };
    let num = |key: &str| -> Result<f64> {
        get(key)?
            .parse()
            .map_err(|_| parse_err(&path, 0, format!("bad number for `{key}`")))
    };
    let steps = list(get("steps")?)
        .iter()
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| parse_err(&path, 0, format!("bad step `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let files = list(get("files")?);
    let supports = get("supports").map(list).unwrap_or_default();
    if files.len() != steps.len() {
        return Err(parse_err(
            &path,
            0,
            "one file per observation step is required",
        ));
    }
    let mut observations = Vec::with_capacity(steps.len());
    for (idx, (&step, file)) in steps.iter().zip(&files).enumerate() {
        let data = read_field(&dir.join(file), Some(grid))?;
        let support = match supports.get(idx).map(String::as_str) {
            None | Some("-") => None,
            Some(name) => {
                let m = read_mask(&dir.join(name))?;
                Some(
                    (0..grid.num_active())
                        .map(|k| {
                            let (i, j) = grid.cell(k);
                            m.is_active(i, j)
                        })
                        .collect(),
                )
            }
        };
        observations.push(Observation {
            step,
            data,
            support,
        });
    }
    let info = BundleInfo {
        noise_std: num("noise_std")?,
        seed: get("seed")?
            .parse()
            .map_err(|_| parse_err(&path, 0, "bad seed"))?,
    };
    Ok((
        ObservationSet::new(observations, num("sigma_noise")?)?,
        info,
    ))
}

/// History CSV: `iter,cost,misfit,regD,regG,grad_norm,cg_iters,cg_exit,alpha`.
pub fn write_history_csv<W: Write>(mut out: W, history: &[IterationRecord]) -> std::io::Result<()> {
    writeln!(
        out,
        "iter,cost,misfit,regD,regG,grad_norm,cg_iters,cg_exit,alpha"
    )?;
    for r in history {
        let exit = r
            .cg_exit
            .map_or_else(|| "none".to_string(), |e| e.to_string());
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{},{},{:e}",
            r.iter, r.cost, r.misfit, r.reg_d, r.reg_g, r.grad_norm, r.cg_iters, exit, r.alpha
        )?;
    }
    Ok(())
}
