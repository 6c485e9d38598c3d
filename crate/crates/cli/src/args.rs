//! Flag parsing and plain-text configuration.
//!
//! Configuration is `key=value` lines with `#` comments. Command-line
//! flags override file values under the same key (`--scan-count 12` sets
//! `scan_count`). Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric
//! failure.

use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

pub const USAGE: &str = "\
segloc - context-aware description of 3-D LiDAR segments on synthetic scans

usage: segloc <command> [flags]

commands:
  synth      generate a synthetic world and write scan archives
  train      train the descriptor network on a scan archive
  describe   compute segment descriptors for one sequence
  localize   match a query sequence against a database sequence
  attention  attention heatmaps and scores for one sequence
  evaluate   full evaluation report for a two-sequence dataset
  selftest   run the built-in oracle suites

common flags:
  --config FILE   key=value configuration file (# comments)
  --seed N        master seed (default 1)
  --out DIR       output directory
  --threads N     worker threads; 1 (default) is bit-reproducible
  --width N       image width in columns
  --epochs N      training epochs
  --policy P      localization policy: 25nn or 1nn
  --k N           neighbors fetched per query (default 25)
  --data DIR      input scan archive
  --db DIR        database scan archive (localize)
  --net FILE      network checkpoint
  --stats FILE    normalization statistics (default: stats.txt next to --net)

environment:
  SEGLOC_LOG={error|info|debug}
";

/// Parsed command line: subcommand plus a key=value map where flag names
/// have dashes normalized to underscores.
#[derive(Debug)]
pub struct Args {
    pub command: String,
    pub values: BTreeMap<String, String>,
}

const KNOWN_FLAGS: &[&str] = &[
    "config", "seed", "out", "threads", "width", "height", "epochs", "policy", "k", "data", "db",
    "net", "stats", "scenario", "n-objects", "aliasing", "speed", "scan-count", "period",
    "query-offset", "radius", "min-points", "ground-z", "range-tolerance", "margin-rows",
    "margin-cols", "lr", "batch", "val-fraction", "max-train-views", "max-observations",
    "dilation", "ratio", "epsilon", "min-cluster", "pose-noise-trans", "pose-noise-rot",
    "max-range", "threshold",
];

pub fn parse_args(argv: &[String]) -> Result<Args, CliError> {
    let mut it = argv.iter();
    let Some(command) = it.next() else {
        return Err(CliError::Usage("missing command".into()));
    };
    let mut flags: BTreeMap<String, String> = BTreeMap::new();
    while let Some(arg) = it.next() {
        let Some(name) = arg.strip_prefix("--") else {
            return Err(CliError::Usage(format!("unexpected argument `{arg}`")));
        };
        if !KNOWN_FLAGS.contains(&name) {
            return Err(CliError::Usage(format!("unknown flag `--{name}`")));
        }
        let Some(value) = it.next() else {
            return Err(CliError::Usage(format!("flag `--{name}` needs a value")));
        };
        flags.insert(name.replace('-', "_"), value.clone());
    }
    // Config file first, flags override.
    let mut values = BTreeMap::new();
    if let Some(path) = flags.get("config") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {path}: {e}")))?;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Data(format!(
                    "{path}:{}: expected key=value",
                    ln + 1
                )));
            };
            values.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
    }
    values.extend(flags);
    Ok(Args {
        command: command.clone(),
        values,
    })
}

impl Args {
    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.get_str(key)
            .map(PathBuf::from)
            .ok_or_else(|| CliError::Usage(format!("missing required flag `--{key}`")))
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid value `{v}` for `{key}`"))),
        }
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.values.get(key).map(|s| s.as_str()) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(CliError::Usage(format!("invalid boolean `{v}` for `{key}`"))),
        }
    }

    /// Echo of every effective setting for the run manifest. The output
    /// directory is omitted so reruns into different directories stay
    /// byte-identical.
    pub fn manifest_entries(&self) -> Vec<(String, String)> {
        self.values
            .iter()
            .filter(|(k, _)| k.as_str() != "out")
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}
