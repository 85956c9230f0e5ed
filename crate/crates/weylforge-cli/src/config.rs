//! Flat `key = value` experiment configuration with flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use weylforge::majorant::{MultiplierSequence, Strategy};
use weylforge::Exec;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    DemeterScaling,
    MajorantScaling,
    CrtVerify,
    PipelineBuild,
    MrCheck,
    C1Build,
    DivergenceSim,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::DemeterScaling,
        Experiment::MajorantScaling,
        Experiment::CrtVerify,
        Experiment::PipelineBuild,
        Experiment::MrCheck,
        Experiment::C1Build,
        Experiment::DivergenceSim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::DemeterScaling => "demeter-scaling",
            Experiment::MajorantScaling => "majorant-scaling",
            Experiment::CrtVerify => "crt-verify",
            Experiment::PipelineBuild => "pipeline-build",
            Experiment::MrCheck => "mr-check",
            Experiment::C1Build => "c1-build",
            Experiment::DivergenceSim => "divergence-sim",
        }
    }

    pub fn randomized(self) -> bool {
        matches!(
            self,
            Experiment::MajorantScaling | Experiment::MrCheck | Experiment::C1Build | Experiment::DivergenceSim
        )
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::invalid("experiment", format!("unknown experiment '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: Option<u64>,
    pub n: Vec<usize>,
    pub grid: Option<usize>,
    pub strategy: String,
    pub max_q: i64,
    pub exhaustive: bool,
    pub multiplier: String,
    pub stages: usize,
    pub cap: usize,
    pub levels: usize,
    pub rho: f64,
    pub trials: usize,
    pub samples: usize,
    pub parallel: bool,
    pub out: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub constants: Option<PathBuf>,
}

pub const KEYS: [&str; 17] = [
    "seed", "n", "grid", "strategy", "max-q", "exhaustive", "multiplier", "stages", "cap", "levels", "rho",
    "trials", "samples", "parallel", "out", "out-dir", "constants",
];

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let n = match experiment {
            Experiment::DemeterScaling | Experiment::MajorantScaling => vec![16, 32, 64, 128],
            Experiment::PipelineBuild => vec![8, 16, 32],
            Experiment::MrCheck => vec![16, 64, 256],
            _ => Vec::new(),
        };
        ExperimentConfig {
            experiment,
            seed: None,
            n,
            grid: None,
            strategy: "witness".into(),
            max_q: 50,
            exhaustive: false,
            multiplier: "loglog".into(),
            stages: 3,
            cap: 256,
            levels: 64,
            rho: 4.0,
            trials: 100,
            samples: 4096,
            parallel: cfg!(feature = "parallel"),
            out: None,
            out_dir: PathBuf::from("."),
            constants: None,
        }
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::default()
        } else {
            Exec::Sequential
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = |what: &str| CliError::invalid(key, format!("'{value}' is not {what}"));
        match key {
            "seed" => self.seed = Some(value.parse().map_err(|_| bad("an unsigned integer"))?),
            "n" => {
                self.n = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad("a comma-separated list of sizes"))?
            }
            "grid" => self.grid = Some(value.parse().map_err(|_| bad("a grid size"))?),
            "strategy" => self.strategy = value.to_string(),
            "max-q" => self.max_q = value.parse().map_err(|_| bad("an integer"))?,
            "exhaustive" => self.exhaustive = parse_bool(value).ok_or_else(|| bad("a boolean"))?,
            "multiplier" => self.multiplier = value.to_string(),
            "stages" => self.stages = value.parse().map_err(|_| bad("a count"))?,
            "cap" => self.cap = value.parse().map_err(|_| bad("a size"))?,
            "levels" => self.levels = value.parse().map_err(|_| bad("a count"))?,
            "rho" => self.rho = value.parse().map_err(|_| bad("a number"))?,
            "trials" => self.trials = value.parse().map_err(|_| bad("a count"))?,
            "samples" => self.samples = value.parse().map_err(|_| bad("a count"))?,
            "parallel" => self.parallel = parse_bool(value).ok_or_else(|| bad("a boolean"))?,
            "out" => self.out = Some(PathBuf::from(value)),
            "out-dir" => self.out_dir = PathBuf::from(value),
            "constants" => self.constants = Some(PathBuf::from(value)),
            _ => return Err(CliError::invalid(key, "unknown key".into())),
        }
        Ok(())
    }

    /// Applies a flat config file; `#` starts a comment, `_` and `-` are
    /// interchangeable in keys.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::invalid("config", format!("line {}: expected key = value", i + 1)))?;
            self.set(&k.trim().replace('_', "-"), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::invalid("config", format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Defaults, then the file, then the overrides.
    pub fn build(
        experiment: Experiment,
        file: Option<&Path>,
        overrides: &[(String, String)],
    ) -> Result<Self, CliError> {
        let mut cfg = Self::defaults(experiment);
        if let Some(p) = file {
            cfg.apply_file(p)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        use Experiment::*;
        let e = self.experiment;
        if e.randomized() && self.seed.is_none() {
            return Err(CliError::invalid("seed", format!("{e} is randomized and needs a seed")));
        }
        let sizes = |lo: usize, hi: usize| -> Result<(), CliError> {
            if self.n.is_empty() {
                return Err(CliError::invalid("n", "empty size list".into()));
            }
            match self.n.iter().find(|&&n| n < lo || n > hi) {
                Some(n) => Err(CliError::invalid("n", format!("{n} outside {lo}..={hi}"))),
                None => Ok(()),
            }
        };
        match e {
            DemeterScaling => {
                sizes(2, 256)?;
                if let Some(m) = self.grid {
                    if !m.is_power_of_two() || !(16..=4096).contains(&m) {
                        return Err(CliError::invalid("grid", format!("{m} is not a power of two in 16..=4096")));
                    }
                }
            }
            MajorantScaling => {
                sizes(2, 256)?;
                Strategy::parse(&self.strategy).map_err(|e| CliError::invalid("strategy", e.to_string()))?;
            }
            CrtVerify => {
                if !(2..=60).contains(&self.max_q) {
                    return Err(CliError::invalid("max-q", format!("{} outside 2..=60", self.max_q)));
                }
            }
            PipelineBuild => sizes(2, 32)?,
            MrCheck => {
                sizes(2, 4096)?;
                if !(1..=1000).contains(&self.trials) {
                    return Err(CliError::invalid("trials", format!("{} outside 1..=1000", self.trials)));
                }
            }
            C1Build => {
                MultiplierSequence::parse(&self.multiplier)
                    .map_err(|e| CliError::invalid("multiplier", e.to_string()))?;
                if self.stages > 6 {
                    return Err(CliError::invalid("stages", format!("{} above 6", self.stages)));
                }
                if !(4..=4096).contains(&self.cap) {
                    return Err(CliError::invalid("cap", format!("{} outside 4..=4096", self.cap)));
                }
            }
            DivergenceSim => {
                if !(1..=128).contains(&self.levels) {
                    return Err(CliError::invalid("levels", format!("{} outside 1..=128", self.levels)));
                }
                if !(self.rho > 1.0 && self.rho < 100.0) {
                    return Err(CliError::invalid("rho", format!("{} outside (1, 100)", self.rho)));
                }
                if self.samples == 0 {
                    return Err(CliError::invalid("samples", "must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!(matches!("warp-drive".parse::<Experiment>(), Err(CliError::ConfigInvalid { .. })));
    }

    #[test]
    fn file_then_overrides() {
        let mut cfg = ExperimentConfig::defaults(Experiment::MrCheck);
        cfg.apply_text("# comment\nseed = 4\nn = 16, 32\ntrials=7 # inline\n").unwrap();
        assert_eq!((cfg.seed, cfg.n.clone(), cfg.trials), (Some(4), vec![16, 32], 7));
        cfg.set("trials", "9").unwrap();
        assert_eq!(cfg.trials, 9);
        cfg.validate().unwrap();
    }

    #[test]
    fn field_level_errors() {
        let mut cfg = ExperimentConfig::defaults(Experiment::DivergenceSim);
        match cfg.validate() {
            Err(CliError::ConfigInvalid { field, .. }) => assert_eq!(field, "seed"),
            other => panic!("{other:?}"),
        }
        match cfg.apply_text("rho = fast") {
            Err(CliError::ConfigInvalid { field, .. }) => assert_eq!(field, "rho"),
            other => panic!("{other:?}"),
        }
        match cfg.set("warp", "9") {
            Err(CliError::ConfigInvalid { field, .. }) => assert_eq!(field, "warp"),
            other => panic!("{other:?}"),
        }
        let mut cfg = ExperimentConfig::defaults(Experiment::DemeterScaling);
        cfg.grid = Some(500);
        assert!(cfg.validate().is_err());
    }
}
