//! Run configuration: flat `key = value` text with `[section]` headers.
//!
//! ```text
//! [run]
//! kernel = matern:m=2,d=1
//! h = 1..1/32
//! out = results
//!
//! [tolerances]
//! symbol = 1e-14
//! ```

use std::path::PathBuf;

use serde::Serialize;

use crate::consts::{
    DECAY_FLOOR, DEFAULT_COEFF_TOL, DEFAULT_EVAL_TOL, DEFAULT_GRID, DEFAULT_SYMBOL_TOL, ERROR_OFFSETS, LEBESGUE_SAMPLES,
};
use crate::error::{Error, Result};
use crate::interp::{ConvergenceConfig, LebesgueConfig};
use crate::lagrange::LagrangeConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub kernel: String,
    pub h_list: Vec<f64>,
    pub grid_size: usize,
    /// Cap of the coefficient grid doubling; None uses the per-dimension default.
    pub max_grid: Option<usize>,
    pub symbol_tol: f64,
    pub coeff_tol: f64,
    pub eval_tol: f64,
    pub lebesgue_samples: usize,
    pub refine_levels: usize,
    pub error_offsets: usize,
    pub eval_radius: f64,
    pub decay_floor: f64,
    pub decay_r_max: f64,
    /// Upper end of the Lagrange profile table.
    pub profile_radius: f64,
    pub test_function: String,
    pub synthesis_delta: f64,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kernel: "matern:m=1,d=1".into(),
            h_list: vec![1.0, 0.5, 0.25, 0.125],
            grid_size: DEFAULT_GRID,
            max_grid: None,
            symbol_tol: DEFAULT_SYMBOL_TOL,
            coeff_tol: DEFAULT_COEFF_TOL,
            eval_tol: DEFAULT_EVAL_TOL,
            lebesgue_samples: LEBESGUE_SAMPLES,
            refine_levels: 3,
            error_offsets: ERROR_OFFSETS,
            eval_radius: 4.0,
            decay_floor: DECAY_FLOOR,
            decay_r_max: 40.0,
            profile_radius: 10.0,
            test_function: "gaussian".into(),
            synthesis_delta: 0.5,
            out: PathBuf::from("."),
            threads: None,
        }
    }
}

fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| Error::Config(format!("bad number `{s}`")))?;
            let b: f64 = b.trim().parse().map_err(|_| Error::Config(format!("bad number `{s}`")))?;
            a / b
        }
        None => s.parse().map_err(|_| Error::Config(format!("bad number `{s}`")))?,
    };
    if !v.is_finite() {
        return Err(Error::Config(format!("bad number `{s}`")));
    }
    Ok(v)
}

/// `1,0.5,1/4` lists values; `1..1/32` is the dyadic sweep 1, 1/2, …, 1/32.
pub fn parse_h_list(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (hi, lo) = (parse_number(a)?, parse_number(b)?);
        if !(hi > 0.0 && lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!("bad h range `{s}`")));
        }
        let mut out = vec![hi];
        let mut h = hi;
        while h / 2.0 >= lo * (1.0 - 1e-12) {
            h /= 2.0;
            out.push(h);
        }
        if (h / lo - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("h range `{s}` does not end on a dyadic step of {hi}")));
        }
        return Ok(out);
    }
    let out: Vec<f64> = s.split(',').map(parse_number).collect::<Result<_>>()?;
    if out.is_empty() || out.iter().any(|&h| !(h > 0.0 && h <= 1.0)) {
        return Err(Error::Config(format!("h values must lie in (0, 1]: `{s}`")));
    }
    Ok(out)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| Error::Config(format!("`{key}` needs a non-negative integer, got `{v}`")))
}

fn parse_positive(key: &str, v: &str) -> Result<f64> {
    let x = parse_number(v)?;
    if x <= 0.0 {
        return Err(Error::Config(format!("`{key}` must be positive, got `{v}`")));
    }
    Ok(x)
}

/// Every accepted `section.key`.
pub const KEYS: &[&str] = &[
    "run.kernel",
    "run.h",
    "run.out",
    "run.threads",
    "run.test_function",
    "grid.size",
    "grid.max",
    "tolerances.symbol",
    "tolerances.coeff",
    "tolerances.eval",
    "sampling.lebesgue_samples",
    "sampling.refine_levels",
    "sampling.error_offsets",
    "sampling.eval_radius",
    "sampling.profile_radius",
    "decay.floor",
    "decay.r_max",
    "synthesis.delta",
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "run.kernel" => self.kernel = v.to_string(),
            "run.h" => self.h_list = parse_h_list(v)?,
            "run.out" => self.out = PathBuf::from(v),
            "run.threads" => self.threads = Some(parse_usize(key, v)?),
            "run.test_function" => self.test_function = v.to_string(),
            "grid.size" => self.grid_size = parse_usize(key, v)?,
            "grid.max" => self.max_grid = Some(parse_usize(key, v)?),
            "tolerances.symbol" => self.symbol_tol = parse_positive(key, v)?,
            "tolerances.coeff" => self.coeff_tol = parse_positive(key, v)?,
            "tolerances.eval" => self.eval_tol = parse_positive(key, v)?,
            "sampling.lebesgue_samples" => self.lebesgue_samples = parse_usize(key, v)?,
            "sampling.refine_levels" => self.refine_levels = parse_usize(key, v)?,
            "sampling.error_offsets" => self.error_offsets = parse_usize(key, v)?,
            "sampling.eval_radius" => self.eval_radius = parse_positive(key, v)?,
            "sampling.profile_radius" => self.profile_radius = parse_positive(key, v)?,
            "decay.floor" => self.decay_floor = parse_positive(key, v)?,
            "decay.r_max" => self.decay_r_max = parse_positive(key, v)?,
            "synthesis.delta" => self.synthesis_delta = parse_positive(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`; accepted: {}", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Applies a config text on top of `self`. Keys before any header belong to `[run]`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::from("run");
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", n + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(&format!("{section}.{}", k.trim()), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Resolved configuration in the same format, in a fixed key order.
    pub fn to_text(&self) -> String {
        let hs: Vec<String> = self.h_list.iter().map(|h| format!("{h:?}")).collect();
        let opt = |v: Option<usize>| v.map_or_else(|| "auto".to_string(), |x| x.to_string());
        let mut out = String::new();
        out += &format!(
            "[run]\nkernel = {}\nh = {}\nout = {}\nthreads = {}\ntest_function = {}\n\n",
            self.kernel,
            hs.join(","),
            self.out.display(),
            opt(self.threads),
            self.test_function
        );
        out += &format!("[grid]\nsize = {}\nmax = {}\n\n", self.grid_size, opt(self.max_grid));
        out += &format!(
            "[tolerances]\nsymbol = {:e}\ncoeff = {:e}\neval = {:e}\n\n",
            self.symbol_tol, self.coeff_tol, self.eval_tol
        );
        out += &format!(
            "[sampling]\nlebesgue_samples = {}\nrefine_levels = {}\nerror_offsets = {}\neval_radius = {:?}\nprofile_radius = {:?}\n\n",
            self.lebesgue_samples, self.refine_levels, self.error_offsets, self.eval_radius, self.profile_radius
        );
        out += &format!("[decay]\nfloor = {:e}\nr_max = {:?}\n\n", self.decay_floor, self.decay_r_max);
        out += &format!("[synthesis]\ndelta = {:?}\n", self.synthesis_delta);
        out
    }

    pub fn lagrange(&self) -> LagrangeConfig {
        LagrangeConfig {
            grid_size: self.grid_size,
            symbol_tol: self.symbol_tol,
            coeff_tol: self.coeff_tol,
            max_grid: self.max_grid,
            route: None,
        }
    }

    pub fn convergence(&self) -> ConvergenceConfig {
        ConvergenceConfig {
            lagrange: self.lagrange(),
            eval_radius: self.eval_radius,
            offsets: self.error_offsets,
            eval_tol: self.eval_tol,
            decay_r_max: self.decay_r_max,
            decay_floor: self.decay_floor,
            with_lebesgue: false,
            lebesgue: LebesgueConfig {
                samples: self.lebesgue_samples,
                refine_levels: self.refine_levels,
                eval_tol: self.eval_tol,
                decay_r_max: self.decay_r_max,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_lists() {
        assert_eq!(parse_h_list("1..1/32").unwrap(), vec![1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125]);
        assert_eq!(parse_h_list("1,0.5, 1/4").unwrap(), vec![1.0, 0.5, 0.25]);
        assert!(parse_h_list("1..0.3").is_err());
        assert!(parse_h_list("0,1").is_err());
        assert!(parse_h_list("2").is_err());
        assert!(parse_h_list("x").is_err());
    }

    #[test]
    fn sections_and_round_trip() {
        let text = "kernel = matern:m=2,d=2\n[grid]\nsize = 128 # comment\n[tolerances]\neval = 1e-9\n[run]\nh = 1..1/4\n";
        let cfg = RunConfig::from_text(text).unwrap();
        assert_eq!(cfg.kernel, "matern:m=2,d=2");
        assert_eq!(cfg.grid_size, 128);
        assert_eq!(cfg.eval_tol, 1e-9);
        assert_eq!(cfg.h_list.len(), 3);
        let mut again = RunConfig::from_text(&cfg.to_text().replace("threads = auto\n", "").replace("max = auto\n", "")).unwrap();
        again.threads = cfg.threads;
        assert_eq!(again, cfg);
    }

    #[test]
    fn errors_name_the_line() {
        let e = RunConfig::from_text("[grid]\nsize = 64\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        assert!(RunConfig::from_text("[grid\n").is_err());
        assert!(RunConfig::from_text("just text\n").is_err());
        assert!(RunConfig::from_text("[tolerances]\neval = -1\n").is_err());
    }
}
