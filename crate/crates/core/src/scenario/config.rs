//! `key = value` scenario files.
//!
//! Blank lines and lines starting with `#` are ignored; an optional
//! `[section]` header is accepted and ignored so files may be grouped.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::ScenarioError;
use crate::continuation::PathConfig;
use crate::torus::FourierMode;

/// Frame connection `A^{0,1}` of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum A01Spec {
    Zero,
    /// `ε · E₁₂` (nilpotent, upper triangular), `ε` from the config.
    Nilpotent,
    /// Constant matrix given by its nonzero entries `(i, j, re, im)`.
    Entries(Vec<(usize, usize, f64, f64)>),
    /// Band-limited random entries of the given amplitude, drawn from the scenario seed.
    Random { amplitude: f64, kmax: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// `None` means fully explicit data.
    pub preset: Option<String>,
    pub n: usize,
    pub rank: Option<usize>,
    /// Constant part of `β`.
    pub beta: Option<f64>,
    /// Extra Fourier modes added to `β`.
    pub beta_modes: Vec<FourierMode>,
    /// Amplitude of a seeded zero-mean band-limited perturbation of `β`.
    pub beta_perturbation: f64,
    /// Diagonal entries of the trace-free reference curvature.
    pub c0: Option<Vec<f64>>,
    pub a01: Option<A01Spec>,
    pub epsilon: f64,
    pub alpha_margin: f64,
    /// Defaults to `2r`.
    pub lambda_exp: Option<f64>,
    pub path: PathConfig,
    pub out_dir: Option<PathBuf>,
    pub snapshots: bool,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            preset: None,
            n: 64,
            rank: None,
            beta: None,
            beta_modes: Vec::new(),
            beta_perturbation: 0.0,
            c0: None,
            a01: None,
            epsilon: 0.5,
            alpha_margin: 1.0,
            lambda_exp: None,
            path: PathConfig::default(),
            out_dir: None,
            snapshots: false,
            seed: 0,
        }
    }
}

fn validation(key: &str, constraint: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        key: key.to_string(),
        constraint: constraint.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ScenarioError> {
    v.parse().map_err(|_| ScenarioError::Parse {
        line,
        message: format!("cannot parse value of `{key}`: `{v}`"),
    })
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>, ScenarioError> {
    v.split(',').map(|x| parse_num(line, key, x.trim())).collect()
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ScenarioError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ScenarioError::Parse {
            line,
            message: format!("`{key}` expects true or false, got `{v}`"),
        }),
    }
}

fn parse_a01(line: usize, v: &str) -> Result<A01Spec, ScenarioError> {
    let bad = |message: String| ScenarioError::Parse { line, message };
    match v {
        "zero" => return Ok(A01Spec::Zero),
        "nilpotent" => return Ok(A01Spec::Nilpotent),
        _ => {}
    }
    if let Some(rest) = v.strip_prefix("random:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 2 {
            return Err(bad(format!("a01 random spec is `random:AMPLITUDE:KMAX`, got `{v}`")));
        }
        return Ok(A01Spec::Random {
            amplitude: parse_num(line, "a01", parts[0])?,
            kmax: parse_num(line, "a01", parts[1])?,
        });
    }
    if let Some(rest) = v.strip_prefix("entries:") {
        let mut entries = Vec::new();
        for item in rest.split(';').filter(|s| !s.trim().is_empty()) {
            let f: Vec<&str> = item.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(bad(format!("a01 entry needs `i,j,re,im`, got `{item}`")));
            }
            entries.push((
                parse_num(line, "a01", f[0])?,
                parse_num(line, "a01", f[1])?,
                parse_num(line, "a01", f[2])?,
                parse_num(line, "a01", f[3])?,
            ));
        }
        return Ok(A01Spec::Entries(entries));
    }
    Err(bad(format!("unknown a01 spec `{v}`")))
}

fn parse_modes(line: usize, v: &str) -> Result<Vec<FourierMode>, ScenarioError> {
    v.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let f: Vec<&str> = item.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(ScenarioError::Parse {
                    line,
                    message: format!("beta mode needs `kx,ky,cos,sin`, got `{item}`"),
                });
            }
            Ok(FourierMode {
                kx: parse_num(line, "beta_modes", f[0])?,
                ky: parse_num(line, "beta_modes", f[1])?,
                re: parse_num(line, "beta_modes", f[2])?,
                im: parse_num(line, "beta_modes", f[3])?,
            })
        })
        .collect()
}

impl ScenarioConfig {
    /// Parses a config text; defaults fill every missing key.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut cfg = ScenarioConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') || (s.starts_with('[') && s.ends_with(']')) {
                continue;
            }
            let Some((k, v)) = s.split_once('=') else {
                return Err(ScenarioError::Parse {
                    line,
                    message: format!("expected `key = value`, got `{s}`"),
                });
            };
            let (k, v) = (k.trim(), v.trim().trim_matches('"'));
            match k {
                "preset" => cfg.preset = Some(v.to_string()),
                "n" => cfg.n = parse_num(line, k, v)?,
                "rank" => cfg.rank = Some(parse_num(line, k, v)?),
                "beta" => cfg.beta = Some(parse_num(line, k, v)?),
                "beta_modes" => cfg.beta_modes = parse_modes(line, v)?,
                "beta_perturbation" => cfg.beta_perturbation = parse_num(line, k, v)?,
                "c0" => cfg.c0 = Some(parse_list(line, k, v)?),
                "a01" => cfg.a01 = Some(parse_a01(line, v)?),
                "epsilon" => cfg.epsilon = parse_num(line, k, v)?,
                "alpha_margin" => cfg.alpha_margin = parse_num(line, k, v)?,
                "lambda_exp" => cfg.lambda_exp = Some(parse_num(line, k, v)?),
                "dt_init" => cfg.path.dt_init = parse_num(line, k, v)?,
                "dt_min" => cfg.path.dt_min = parse_num(line, k, v)?,
                "dt_max" => cfg.path.dt_max = parse_num(line, k, v)?,
                "newton_tol" => cfg.path.newton_tol = parse_num(line, k, v)?,
                "max_newton" => cfg.path.max_newton = parse_num(line, k, v)?,
                "destab_f_floor" => cfg.path.destab_f_floor = parse_num(line, k, v)?,
                "destab_lambda_ceiling" => cfg.path.destab_lambda_ceiling = parse_num(line, k, v)?,
                "record_every" => cfg.path.record_every = parse_num(line, k, v)?,
                "out" => cfg.out_dir = Some(PathBuf::from(v)),
                "snapshots" => cfg.snapshots = parse_bool(line, k, v)?,
                "seed" => cfg.seed = parse_num(line, k, v)?,
                _ => {
                    return Err(ScenarioError::Parse {
                        line,
                        message: format!("unknown key `{k}`"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n < 8 || self.n % 2 != 0 {
            return Err(validation("n", "even and >= 8"));
        }
        if let Some(r) = self.rank {
            if r == 0 {
                return Err(validation("rank", ">= 1"));
            }
        }
        if let Some(c0) = &self.c0 {
            if let Some(r) = self.rank {
                if c0.len() != r {
                    return Err(validation("c0", format!("needs {r} entries")));
                }
            }
            if c0.iter().sum::<f64>().abs() > 1e-12 {
                return Err(validation("c0", "entries sum to 0"));
            }
        }
        if !(self.alpha_margin > 0.0) {
            return Err(validation("alpha_margin", "> 0"));
        }
        if let Some(l) = self.lambda_exp {
            if !(l > 0.0) {
                return Err(validation("lambda_exp", "> 0"));
            }
        }
        if !(self.beta_perturbation >= 0.0) {
            return Err(validation("beta_perturbation", ">= 0"));
        }
        if !self.epsilon.is_finite() {
            return Err(validation("epsilon", "finite"));
        }
        if let Some(A01Spec::Random { amplitude, kmax }) = &self.a01 {
            if !(*amplitude >= 0.0) || *kmax < 1 {
                return Err(validation("a01", "random amplitude >= 0 and kmax >= 1"));
            }
        }
        self.path.validate().map_err(|e| match e {
            crate::Error::InvalidParameter { name, constraint } => validation(name, constraint),
            other => validation("path", other.to_string()),
        })
    }

    /// Serializes to the text format; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        if let Some(p) = &self.preset {
            kv("preset", p.clone());
        }
        kv("n", self.n.to_string());
        if let Some(r) = self.rank {
            kv("rank", r.to_string());
        }
        if let Some(b) = self.beta {
            kv("beta", format!("{b:?}"));
        }
        if !self.beta_modes.is_empty() {
            let modes: Vec<String> = self
                .beta_modes
                .iter()
                .map(|m| format!("{},{},{:?},{:?}", m.kx, m.ky, m.re, m.im))
                .collect();
            kv("beta_modes", modes.join(";"));
        }
        kv("beta_perturbation", format!("{:?}", self.beta_perturbation));
        if let Some(c0) = &self.c0 {
            kv("c0", c0.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","));
        }
        if let Some(a) = &self.a01 {
            let v = match a {
                A01Spec::Zero => "zero".to_string(),
                A01Spec::Nilpotent => "nilpotent".to_string(),
                A01Spec::Random { amplitude, kmax } => format!("random:{amplitude:?}:{kmax}"),
                A01Spec::Entries(e) => format!(
                    "entries:{}",
                    e.iter()
                        .map(|(i, j, re, im)| format!("{i},{j},{re:?},{im:?}"))
                        .collect::<Vec<_>>()
                        .join(";")
                ),
            };
            kv("a01", v);
        }
        kv("epsilon", format!("{:?}", self.epsilon));
        kv("alpha_margin", format!("{:?}", self.alpha_margin));
        if let Some(l) = self.lambda_exp {
            kv("lambda_exp", format!("{l:?}"));
        }
        let p = &self.path;
        kv("dt_init", format!("{:?}", p.dt_init));
        kv("dt_min", format!("{:?}", p.dt_min));
        kv("dt_max", format!("{:?}", p.dt_max));
        kv("newton_tol", format!("{:?}", p.newton_tol));
        kv("max_newton", p.max_newton.to_string());
        kv("destab_f_floor", format!("{:?}", p.destab_f_floor));
        kv("destab_lambda_ceiling", format!("{:?}", p.destab_lambda_ceiling));
        kv("record_every", p.record_every.to_string());
        if let Some(o) = &self.out_dir {
            kv("out", o.display().to_string());
        }
        kv("snapshots", self.snapshots.to_string());
        kv("seed", self.seed.to_string());
        s
    }
}
