//! `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Every key is optional and defaults to the published parameter set.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use raceway_core::hydro::Grid;
use raceway_core::optimizer::OptimizerConfig;
use raceway_core::{
    FixedPointSettings, FourierShape, HanParams, HydroConfig, ModelError, Settings, Variant, WheelKind,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: {key} = {value}: {reason}")]
    UnitViolation {
        line: usize,
        key: String,
        value: String,
        reason: &'static str,
    },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub han: HanParams,
    /// Raceway length L (m).
    pub length: f64,
    /// Grid spacing Δx (m).
    pub dx: f64,
    pub discharge: f64,
    pub a0: f64,
    pub zb0: f64,
    pub gravity: f64,
    pub surface_light: f64,
    pub bottom_light: f64,
    pub nz: usize,
    /// Relative depth of the single-trajectory variant.
    pub q: f64,
    pub c0: f64,
    pub laps: usize,
    pub wheel: WheelKind,
    pub alpha0: f64,
    pub alpha1: f64,
    pub fp_tol: f64,
    pub fp_max_iters: usize,
    pub rho: f64,
    pub rho_a0: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Fourier truncation order N.
    pub order: usize,
    /// Initial or simulated Fourier coefficients; empty means flat of order N.
    pub coeffs: Vec<f64>,
    pub seed: u64,
    pub backtracking: bool,
    pub optimize_a0: bool,
    /// Overrides the experiment's own default variant.
    pub variant: Option<Variant>,
    pub fd_eta: f64,
    pub gradcheck_shapes: usize,
    pub samples: usize,
    pub nz_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub c0_values: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        let fp = FixedPointSettings::default();
        Self {
            han: HanParams::default(),
            length: 100.0,
            dx: 0.01,
            discharge: 0.04,
            a0: 0.4,
            zb0: -0.4,
            gravity: 9.81,
            surface_light: 2000.0,
            bottom_light: 20.0,
            nz: 50,
            q: 0.5,
            c0: 0.9,
            laps: 2,
            wheel: WheelKind::AntiDiagonal,
            alpha0: 0.2,
            alpha1: 10.0,
            fp_tol: fp.tol,
            fp_max_iters: fp.max_iters,
            rho: opt.rho,
            rho_a0: opt.rho_a0,
            tol: opt.tol,
            max_iters: opt.max_iters,
            order: 5,
            coeffs: Vec::new(),
            seed: 0,
            backtracking: false,
            optimize_a0: true,
            variant: None,
            fd_eta: 1e-6,
            gradcheck_shapes: 10,
            samples: 100,
            nz_values: vec![1, 2, 5, 10, 20, 50, 100],
            n_values: vec![0, 5, 10, 15, 20],
            c0_values: vec![0.1, 0.9],
        }
    }
}

type Check = fn(f64) -> Option<&'static str>;

fn positive(v: f64) -> Option<&'static str> {
    (!(v > 0.0 && v.is_finite())).then_some("must be positive")
}

fn non_negative(v: f64) -> Option<&'static str> {
    (!(v >= 0.0 && v.is_finite())).then_some("must be non-negative")
}

fn finite(v: f64) -> Option<&'static str> {
    (!v.is_finite()).then_some("must be finite")
}

fn unit_interval(v: f64) -> Option<&'static str> {
    (!(0.0..=1.0).contains(&v)).then_some("must lie in [0, 1]")
}

fn fraction(v: f64) -> Option<&'static str> {
    (!(v > 0.0 && v <= 1.0)).then_some("must lie in (0, 1]")
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Parse {
                    line,
                    message: "missing key".into(),
                });
            }
            cfg.set(key, value, line)?;
            if !seen.insert(key.to_owned()) {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let parse_err = |what: &str| ConfigError::Parse {
            line,
            message: format!("{key}: cannot parse `{value}` as {what}"),
        };
        let violation = |reason| ConfigError::UnitViolation {
            line,
            key: key.to_owned(),
            value: value.to_owned(),
            reason,
        };
        let real = |check: Check| -> Result<f64, ConfigError> {
            let v: f64 = value.parse().map_err(|_| parse_err("a number"))?;
            match check(v) {
                Some(reason) => Err(violation(reason)),
                None => Ok(v),
            }
        };
        let count = |min: usize| -> Result<usize, ConfigError> {
            let v: usize = value.parse().map_err(|_| parse_err("a non-negative integer"))?;
            if v < min {
                Err(violation("must be at least 1"))
            } else {
                Ok(v)
            }
        };
        let flag = || -> Result<bool, ConfigError> {
            value.parse().map_err(|_| parse_err("`true` or `false`"))
        };
        let items = || value.split(',').map(str::trim).filter(|s| !s.is_empty());

        match key {
            "k_r" => self.han.k_r = real(positive)?,
            "k_d" => self.han.k_d = real(positive)?,
            "tau" => self.han.tau = real(positive)?,
            "sigma" => self.han.sigma = real(positive)?,
            "k" => self.han.k = real(positive)?,
            "R" => self.han.respiration = real(positive)?,
            "L" => self.length = real(positive)?,
            "dx" => self.dx = real(positive)?,
            "Q0" => self.discharge = real(positive)?,
            "a0" => self.a0 = real(positive)?,
            "zb0" => self.zb0 = real(finite)?,
            "g" => self.gravity = real(positive)?,
            "I_s" => self.surface_light = real(positive)?,
            "I_b" => self.bottom_light = real(positive)?,
            "Nz" => self.nz = count(1)?,
            "q" => self.q = real(fraction)?,
            "C0" => self.c0 = real(unit_interval)?,
            "laps" => self.laps = count(1)?,
            "wheel" => {
                self.wheel = match value {
                    "anti_diagonal" => WheelKind::AntiDiagonal,
                    "identity" => WheelKind::Identity,
                    _ => return Err(parse_err("`anti_diagonal` or `identity`")),
                }
            }
            "alpha0" => self.alpha0 = real(positive)?,
            "alpha1" => self.alpha1 = real(non_negative)?,
            "fp_tol" => self.fp_tol = real(positive)?,
            "fp_max_iters" => self.fp_max_iters = count(1)?,
            "rho" => self.rho = real(positive)?,
            "rho_a0" => self.rho_a0 = real(positive)?,
            "tol" => self.tol = real(positive)?,
            "max_iters" => self.max_iters = count(0)?,
            "N" => self.order = count(0)?,
            "seed" => self.seed = value.parse().map_err(|_| parse_err("an unsigned integer"))?,
            "backtracking" => self.backtracking = flag()?,
            "optimize_a0" => self.optimize_a0 = flag()?,
            "variant" => self.variant = Some(value.parse().map_err(|_| parse_err("a variant"))?),
            "fd_eta" => self.fd_eta = real(positive)?,
            "gradcheck_shapes" => self.gradcheck_shapes = count(1)?,
            "samples" => self.samples = count(0)?,
            "Nz_values" => {
                self.nz_values = items()
                    .map(|s| match s.parse::<usize>() {
                        Ok(0) => Err(violation("must be at least 1")),
                        Ok(v) => Ok(v),
                        Err(_) => Err(parse_err("a list of integers")),
                    })
                    .collect::<Result<_, _>>()?
            }
            "a" => {
                self.coeffs = items()
                    .map(|s| {
                        let v: f64 = s.parse().map_err(|_| parse_err("a list of numbers"))?;
                        match finite(v) {
                            Some(reason) => Err(violation(reason)),
                            None => Ok(v),
                        }
                    })
                    .collect::<Result<_, _>>()?
            }
            "N_values" => {
                self.n_values = items()
                    .map(|s| s.parse().map_err(|_| parse_err("a list of integers")))
                    .collect::<Result<_, _>>()?
            }
            "C0_values" => {
                self.c0_values = items()
                    .map(|s| {
                        let v: f64 = s.parse().map_err(|_| parse_err("a list of numbers"))?;
                        match unit_interval(v) {
                            Some(reason) => Err(violation(reason)),
                            None => Ok(v),
                        }
                    })
                    .collect::<Result<_, _>>()?
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_owned(),
                })
            }
        }
        Ok(())
    }

    /// Canonical listing of every key; parsing it reproduces `self`.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("k_r", self.han.k_r.to_string());
        put("k_d", self.han.k_d.to_string());
        put("tau", self.han.tau.to_string());
        put("sigma", self.han.sigma.to_string());
        put("k", self.han.k.to_string());
        put("R", self.han.respiration.to_string());
        put("L", self.length.to_string());
        put("dx", self.dx.to_string());
        put("Q0", self.discharge.to_string());
        put("a0", self.a0.to_string());
        put("zb0", self.zb0.to_string());
        put("g", self.gravity.to_string());
        put("I_s", self.surface_light.to_string());
        put("I_b", self.bottom_light.to_string());
        put("Nz", self.nz.to_string());
        put("q", self.q.to_string());
        put("C0", self.c0.to_string());
        put("laps", self.laps.to_string());
        put(
            "wheel",
            match self.wheel {
                WheelKind::AntiDiagonal => "anti_diagonal",
                WheelKind::Identity => "identity",
            }
            .into(),
        );
        put("alpha0", self.alpha0.to_string());
        put("alpha1", self.alpha1.to_string());
        put("fp_tol", self.fp_tol.to_string());
        put("fp_max_iters", self.fp_max_iters.to_string());
        put("rho", self.rho.to_string());
        put("rho_a0", self.rho_a0.to_string());
        put("tol", self.tol.to_string());
        put("max_iters", self.max_iters.to_string());
        put("N", self.order.to_string());
        put("a", list(&self.coeffs));
        put("seed", self.seed.to_string());
        put("backtracking", self.backtracking.to_string());
        put("optimize_a0", self.optimize_a0.to_string());
        put("fd_eta", self.fd_eta.to_string());
        put("gradcheck_shapes", self.gradcheck_shapes.to_string());
        put("samples", self.samples.to_string());
        put("Nz_values", list(&self.nz_values));
        put("N_values", list(&self.n_values));
        put("C0_values", list(&self.c0_values));
        match self.variant {
            Some(v) => put("variant", v.to_string()),
            None => out.push_str("# variant = (experiment default)\n"),
        }
        out
    }

    pub fn settings(&self) -> Result<Settings, ModelError> {
        Ok(Settings {
            han: self.han,
            hydro: HydroConfig {
                grid: Grid::from_step(self.length, self.dx)?,
                discharge: self.discharge,
                gravity: self.gravity,
                zb0: self.zb0,
                surface_light: self.surface_light,
            },
            a0: self.a0,
            bottom_light: self.bottom_light,
            nz: self.nz,
            single_fraction: self.q,
            c0: self.c0,
            laps: self.laps,
            wheel: self.wheel,
            alpha0: self.alpha0,
            alpha1: self.alpha1,
            fixed_point: FixedPointSettings {
                tol: self.fp_tol,
                max_iters: self.fp_max_iters,
            },
        })
    }

    /// Shape given by `a`, or flat of order N.
    pub fn initial_shape(&self) -> FourierShape {
        if self.coeffs.is_empty() {
            FourierShape::flat(self.a0, self.order)
        } else {
            FourierShape {
                a0: self.a0,
                coeffs: self.coeffs.clone(),
            }
        }
    }

    pub fn optimizer(&self, order: usize) -> OptimizerConfig {
        OptimizerConfig {
            rho: self.rho,
            rho_a0: self.rho_a0,
            tol: self.tol,
            max_iters: self.max_iters,
            order,
            seed: self.seed,
            optimize_a0: self.optimize_a0,
            backtracking: self.backtracking,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.han, HanParams::default());
        assert_eq!(cfg.nz, 50);
        assert_eq!(cfg.dx, 0.01);
        assert_eq!(cfg.bottom_light, 0.01 * cfg.surface_light);
    }

    #[test]
    fn comments_and_whitespace() {
        let cfg = ExperimentConfig::parse("# header\n\n  dx = 0.02   # finer\nNz=10\n").unwrap();
        assert_eq!(cfg.dx, 0.02);
        assert_eq!(cfg.nz, 10);
        assert_eq!(
            ExperimentConfig { dx: 0.01, nz: 50, ..cfg },
            ExperimentConfig::default()
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        match ExperimentConfig::parse("dx = 0.1\nQ0 = -1\n") {
            Err(ConfigError::UnitViolation { line: 2, key, .. }) => assert_eq!(key, "Q0"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            ExperimentConfig::parse("\n\nfoo = 1"),
            Err(ConfigError::UnknownKey { line: 3, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("dx 0.1"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("Nz = many"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("dx = 0.1\ndx = 0.2"),
            Err(ConfigError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("C0 = 1.5"),
            Err(ConfigError::UnitViolation { .. })
        ));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig {
            dx: 0.025,
            c0: 0.1,
            variant: Some(Variant::Paddle),
            wheel: WheelKind::Identity,
            nz_values: vec![3, 7],
            coeffs: vec![0.01, -2.5e-3],
            c0_values: vec![0.25],
            seed: 42,
            ..ExperimentConfig::default()
        };
        assert_eq!(ExperimentConfig::parse(&cfg.echo()).unwrap(), cfg);
        let d = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&d.echo()).unwrap(), d);
    }

    #[test]
    fn settings_follow_grid_step() {
        let cfg = ExperimentConfig::parse("dx = 0.02").unwrap();
        let s = cfg.settings().unwrap();
        assert_eq!(s.hydro.grid.cells, 5000);
        assert_eq!(s.hydro.discharge, 0.04);
    }
}
