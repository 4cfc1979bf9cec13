use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use regpath::located::{REFERENCE_NODES_PER_SIDE, REFERENCE_TIME_STEPS, REDUCED_NODES_PER_SIDE, REDUCED_TIME_STEPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Example {
    LocatedHeat,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Markdown,
    Jsonl,
    All,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::All)
    }

    pub fn markdown(self) -> bool {
        matches!(self, Self::Markdown | Self::All)
    }

    pub fn jsonl(self) -> bool {
        matches!(self, Self::Jsonl | Self::All)
    }
}

/// Level list written as `1..6`, `1,2,5` or a single level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Levels(pub Vec<i32>);

impl FromStr for Levels {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<i32>().map_err(|e| format!("bad level {t:?}: {e}"));
        let levels = if let Some((a, b)) = s.split_once("..") {
            let (a, b) = (parse(a)?, parse(b.trim_start_matches('='))?);
            if b < a {
                return Err(format!("empty level range {s}"));
            }
            (a..=b).collect()
        } else {
            s.split(',').map(parse).collect::<std::result::Result<Vec<_>, _>>()?
        };
        if levels.is_empty() {
            return Err("no levels given".into());
        }
        Ok(Levels(levels))
    }
}

impl fmt::Display for Levels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = &self.0;
        let contiguous = v.len() > 1 && v.windows(2).all(|w| w[1] == w[0] + 1);
        if contiguous {
            write!(f, "{}..{}", v[0], v[v.len() - 1])
        } else {
            let s: Vec<String> = v.iter().map(|l| l.to_string()).collect();
            write!(f, "{}", s.join(","))
        }
    }
}

/// Flags shared by all commands. Unset flags fall back to the config file
/// and then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long, value_enum)]
    pub example: Option<Example>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Levels `l` with `alpha = 2^-l`, e.g. `1..6` or `2,4`.
    #[arg(long)]
    pub levels: Option<Levels>,
    #[arg(long)]
    pub n_per_side: Option<usize>,
    #[arg(long)]
    pub time_steps: Option<usize>,
    /// Fixed-point threshold `t0`.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Relaxation of the fixed-point iteration in (0, 1].
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub warm_start: bool,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// 17 x 17 nodes and 512 time steps.
    #[arg(long)]
    pub reduced_scale: bool,
    /// Fit rates over all levels instead of the last four.
    #[arg(long)]
    pub full_range_fit: bool,
    /// Plain `key = value` file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_adjoint_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub example: Example,
    pub kappa: f64,
    pub levels: Levels,
    pub n_per_side: usize,
    pub time_steps: usize,
    pub tol: f64,
    pub max_iterations: usize,
    pub damping: f64,
    pub warm_start: bool,
    pub output: PathBuf,
    pub format: OutputFormat,
    pub seed: u64,
    pub reduced_scale: bool,
    pub full_range_fit: bool,
    #[serde(skip)]
    pub inject_adjoint_fault: bool,
}

const KEYS: [&str; 14] = [
    "example",
    "kappa",
    "levels",
    "n_per_side",
    "time_steps",
    "tol",
    "max_iterations",
    "damping",
    "warm_start",
    "output",
    "format",
    "seed",
    "reduced_scale",
    "full_range_fit",
];

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value", path.display(), i + 1);
        };
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            bail!("{}:{}: unknown key {key:?}", path.display(), i + 1);
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn from_file<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("config key {key}: {e}")))
        .transpose()
}

fn enum_from_file<T: ValueEnum>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| T::from_str(v, true).map_err(|e| anyhow::anyhow!("config key {key}: {e}")))
        .transpose()
}

impl RunConfig {
    pub fn resolve(command: &str, args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => read_config_file(p)?,
            None => BTreeMap::new(),
        };
        let example = args.example.or(enum_from_file(&file, "example")?).unwrap_or(Example::LocatedHeat);
        let reduced_scale = args.reduced_scale || from_file(&file, "reduced_scale")?.unwrap_or(false);
        let (n_default, m_default) = if reduced_scale {
            (REDUCED_NODES_PER_SIDE, REDUCED_TIME_STEPS)
        } else {
            (REFERENCE_NODES_PER_SIDE, REFERENCE_TIME_STEPS)
        };
        let pick_grid = |flag: Option<usize>, key: &str, default: usize| -> Result<usize> {
            if reduced_scale {
                return Ok(default);
            }
            Ok(flag.or(from_file(&file, key)?).unwrap_or(default))
        };
        let damping_default = match example {
            Example::LocatedHeat => 1.0,
            Example::Poisson => 0.5,
        };
        let cfg = Self {
            command: command.to_string(),
            example,
            kappa: args.kappa.or(from_file(&file, "kappa")?).unwrap_or(1.0),
            levels: args
                .levels
                .clone()
                .or(from_file(&file, "levels")?)
                .unwrap_or(Levels((1..=6).collect())),
            n_per_side: pick_grid(args.n_per_side, "n_per_side", n_default)?,
            time_steps: pick_grid(args.time_steps, "time_steps", m_default)?,
            tol: args.tol.or(from_file(&file, "tol")?).unwrap_or(1e-5),
            max_iterations: args.max_iterations.or(from_file(&file, "max_iterations")?).unwrap_or(10_000),
            damping: args.damping.or(from_file(&file, "damping")?).unwrap_or(damping_default),
            warm_start: args.warm_start || from_file(&file, "warm_start")?.unwrap_or(false),
            output: args
                .output
                .clone()
                .or(from_file(&file, "output")?)
                .unwrap_or_else(|| PathBuf::from("regpath-out")),
            format: args.format.or(enum_from_file(&file, "format")?).unwrap_or(OutputFormat::All),
            seed: args.seed.or(from_file(&file, "seed")?).unwrap_or(0),
            reduced_scale,
            full_range_fit: args.full_range_fit || from_file(&file, "full_range_fit")?.unwrap_or(false),
            inject_adjoint_fault: args.inject_adjoint_fault,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            bail!("kappa must be positive, got {}", self.kappa);
        }
        if self.n_per_side < 3 {
            bail!("n_per_side must be at least 3, got {}", self.n_per_side);
        }
        if self.time_steps < 1 {
            bail!("time_steps must be at least 1");
        }
        if !(self.tol > 0.0) {
            bail!("tol must be positive, got {}", self.tol);
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            bail!("damping must lie in (0, 1], got {}", self.damping);
        }
        Ok(())
    }

    pub fn fixed_point(&self) -> regpath::solver::FixedPointConfig {
        regpath::solver::FixedPointConfig {
            tolerance: self.tol,
            max_iterations: self.max_iterations,
            damping: self.damping,
            ..Default::default()
        }
    }

    /// `key=value` lines describing the resolved configuration.
    pub fn header_lines(&self) -> Vec<String> {
        let example = match self.example {
            Example::LocatedHeat => "located-heat",
            Example::Poisson => "poisson",
        };
        let format = match self.format {
            OutputFormat::Csv => "csv",
            OutputFormat::Markdown => "markdown",
            OutputFormat::Jsonl => "jsonl",
            OutputFormat::All => "all",
        };
        vec![
            format!("command={}", self.command),
            format!("example={example}"),
            format!("kappa={}", self.kappa),
            format!("levels={}", self.levels),
            format!("n_per_side={}", self.n_per_side),
            format!("time_steps={}", self.time_steps),
            format!("tol={:e}", self.tol),
            format!("max_iterations={}", self.max_iterations),
            format!("damping={}", self.damping),
            format!("warm_start={}", self.warm_start),
            format!("format={format}"),
            format!("seed={}", self.seed),
            format!("reduced_scale={}", self.reduced_scale),
            format!("full_range_fit={}", self.full_range_fit),
        ]
    }

    /// Header as `#`-prefixed lines.
    pub fn comment_header(&self) -> String {
        self.header_lines().iter().map(|l| format!("# {l}\n")).collect()
    }

    /// Header as an HTML comment for markdown files.
    pub fn markdown_header(&self) -> String {
        format!("<!--\n{}-->\n\n", self.header_lines().iter().map(|l| format!("{l}\n")).collect::<String>())
    }
}
