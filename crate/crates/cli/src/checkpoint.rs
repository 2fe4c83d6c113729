//! Text checkpoints.
//!
//! ```text
//! NNDE-CKPT v1
//! config <line count>
//! <the RunConfig as TOML>
//! stages <count>
//! stage 0 primary params <count>
//! <one hex float per line>
//! stage 1 correction bprime exact scale <hex float> params <count>
//! <one hex float per line>
//! ```
//!
//! Network shapes come from the embedded configuration. Correction `j` uses
//! the correction network settings with the seed offset of
//! [`SolveAndCorrectConfig::correction_stage`].

use std::fmt::Write as _;
use std::path::Path;

use nnde_core::model::{Correction, Stage};
use nnde_core::trainer::{correction_arch, primary_arch};
use nnde_core::{BPrimeForm, CorrectedModel, ParameterVector, ProblemSpec};

use crate::config::{ConfigError, RunConfig};
use crate::hexfloat;

pub const MAGIC: &str = "NNDE-CKPT v1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a version 1 checkpoint (first line is `{0}`)")]
    Version(String),
    #[error("checkpoint line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("stage {stage}: expected {expected} parameters, found {found}")]
    ParamCount { stage: usize, expected: usize, found: usize },
    #[error("embedded configuration: {0}")]
    Config(#[from] ConfigError),
}

/// Serializes `model` trained under `config`.
pub fn to_text(config: &RunConfig, model: &CorrectedModel) -> String {
    let echo = config.to_toml();
    let mut out = String::new();
    let lines: Vec<&str> = echo.lines().collect();
    writeln!(out, "{MAGIC}\nconfig {}", lines.len()).unwrap();
    for l in lines {
        writeln!(out, "{l}").unwrap();
    }
    writeln!(out, "stages {}", 1 + model.n_corrections()).unwrap();
    let block = |out: &mut String, params: &ParameterVector| {
        for v in params.as_slice() {
            writeln!(out, "{}", hexfloat::format(*v)).unwrap();
        }
    };
    let primary = model.primary();
    writeln!(out, "stage 0 primary params {}", primary.params.len()).unwrap();
    block(&mut out, &primary.params);
    for (i, c) in model.corrections().iter().enumerate() {
        writeln!(
            out,
            "stage {} correction bprime {} scale {} params {}",
            i + 1,
            c.form,
            hexfloat::format(c.stage.arch.scale),
            c.stage.params.len()
        )
        .unwrap();
        block(&mut out, &c.stage.params);
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<&'a str> {
        self.inner.next().map(|(i, l)| {
            self.last = i + 1;
            l
        })
    }

    fn require(&mut self, what: &str) -> Result<&'a str, CheckpointError> {
        let line = self.last + 1;
        self.next().ok_or_else(|| CheckpointError::Malformed {
            line,
            message: format!("unexpected end of file, expected {what}"),
        })
    }

    fn bad<T>(&self, message: impl Into<String>) -> Result<T, CheckpointError> {
        Err(CheckpointError::Malformed {
            line: self.last,
            message: message.into(),
        })
    }
}

/// `prefix <usize>`.
fn counted(lines: &mut Lines, prefix: &str) -> Result<usize, CheckpointError> {
    let l = lines.require(prefix)?;
    match l.strip_prefix(prefix).and_then(|r| r.strip_prefix(' ')).map(str::parse) {
        Some(Ok(n)) => Ok(n),
        _ => lines.bad(format!("expected `{prefix} <count>`, got `{l}`")),
    }
}

fn read_params(lines: &mut Lines, stage: usize, declared: usize, expected: usize) -> Result<ParameterVector, CheckpointError> {
    if declared != expected {
        return Err(CheckpointError::ParamCount {
            stage,
            expected,
            found: declared,
        });
    }
    let mut v = Vec::with_capacity(expected);
    for _ in 0..expected {
        // A block that ends early runs into the next header or end of file.
        let l = match lines.next() {
            Some(l) if !l.starts_with("stage ") => l,
            _ => {
                return Err(CheckpointError::ParamCount {
                    stage,
                    expected,
                    found: v.len(),
                })
            }
        };
        match hexfloat::parse(l) {
            Ok(x) => v.push(x),
            Err(e) => return lines.bad(e.to_string()),
        }
    }
    Ok(ParameterVector(v))
}

/// A file cut off before a declared stage has lost that stage's parameters.
fn stage_header<'a>(lines: &mut Lines<'a>, stage: usize, expected: usize) -> Result<&'a str, CheckpointError> {
    lines.next().ok_or(CheckpointError::ParamCount {
        stage,
        expected,
        found: 0,
    })
}

/// Parses a checkpoint back into its configuration and model. The problem is
/// rebuilt from the configuration and returned alongside.
pub fn from_text(text: &str) -> Result<(RunConfig, ProblemSpec, CorrectedModel), CheckpointError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let first = lines.next().unwrap_or("");
    if first != MAGIC {
        return Err(CheckpointError::Version(first.to_string()));
    }
    let n_config = counted(&mut lines, "config")?;
    let mut echo = String::new();
    for _ in 0..n_config {
        echo.push_str(lines.require("configuration line")?);
        echo.push('\n');
    }
    let config = RunConfig::parse(&echo)?;
    let resolved = config.resolve()?;
    let p = resolved.problem;
    let n_stages = counted(&mut lines, "stages")?;
    if n_stages == 0 {
        return lines.bad("a checkpoint holds at least the primary stage");
    }

    let arch = primary_arch(&p, resolved.algorithm.primary_net).map_err(ConfigError::from)?;
    let header = stage_header(&mut lines, 0, arch.param_count())?;
    let Some(Ok(declared)) = header.strip_prefix("stage 0 primary params ").map(str::parse) else {
        return lines.bad(format!("expected `stage 0 primary params <count>`, got `{header}`"));
    };
    let params = read_params(&mut lines, 0, declared, arch.param_count())?;
    let mut model = CorrectedModel::new(Stage { arch, params });

    for j in 1..n_stages {
        let (net, _) = resolved.algorithm.correction_stage(j);
        let header = stage_header(&mut lines, j, net.param_count())?;
        let fields: Vec<&str> = header.split(' ').collect();
        let parsed = match fields.as_slice() {
            ["stage", idx, "correction", "bprime", form, "scale", scale, "params", count] => {
                (|| -> Option<(usize, BPrimeForm, f64, usize)> {
                    Some((idx.parse().ok()?, form.parse().ok()?, hexfloat::parse(scale).ok()?, count.parse().ok()?))
                })()
            }
            _ => None,
        };
        let Some((_, form, scale, declared)) = parsed.filter(|t| t.0 == j) else {
            return lines.bad(format!("expected header of correction stage {j}, got `{header}`"));
        };
        let arch = correction_arch(&p, net, scale).map_err(ConfigError::from)?;
        let params = read_params(&mut lines, j, declared, arch.param_count())?;
        model.push(Correction {
            stage: Stage { arch, params },
            form,
        });
    }
    if let Some(extra) = lines.next() {
        return lines.bad(format!("trailing content `{extra}`"));
    }
    Ok((config, p, model))
}

pub fn save(path: &Path, config: &RunConfig, model: &CorrectedModel) -> Result<(), CheckpointError> {
    std::fs::write(path, to_text(config, model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(RunConfig, ProblemSpec, CorrectedModel), CheckpointError> {
    from_text(&std::fs::read_to_string(path)?)
}
