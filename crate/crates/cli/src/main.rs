//! `ssolab`: power flow, modes, singular values, delay sweeps, simulation,
//! Prony and grouping from the command line.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FrameworkArg {
    Spc,
    Qpc,
    /// Both frameworks (sv only).
    Both,
}

#[derive(Debug, Parser)]
#[command(name = "ssolab", version, about = "SSO analysis for grids with droop-controlled grid-forming converters")]
pub struct Cli {
    /// Modeling framework; defaults to the configuration's (sv: both).
    #[arg(long, global = true, value_enum)]
    pub framework: Option<FrameworkArg>,
    /// Droop power-feedback delay for every GFC, e.g. `2ms` or `0.002`.
    #[arg(long = "tau-p", global = true, value_parser = parse_delay)]
    pub tau_p: Option<f64>,
    /// Padé order of the delay rationalization.
    #[arg(long, global = true, default_value_t = 2)]
    pub pade: usize,
    /// Worker threads for sweeps and frequency grids.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long = "out-dir", global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Power flow report (pf.json).
    Pf { spec: String },
    /// Eigenvalues, participation and grouping (modes.json, compass.csv).
    Modes {
        spec: String,
        /// Relative magnitude below which a machine joins no group.
        #[arg(long, default_value_t = ssolab::smallsignal::GROUPING_THRESHOLD)]
        threshold: f64,
    },
    /// Maximum singular value curves (sv_<framework>.csv, sv.svg).
    Sv {
        spec: String,
        #[arg(long, default_value_t = 1.0)]
        fmin: f64,
        #[arg(long, default_value_t = 100.0)]
        fmax: f64,
        #[arg(long, default_value_t = 2000)]
        points: usize,
    },
    /// SSO mode loci over the droop delay (loci.csv, loci.svg).
    Sweep {
        spec: String,
        /// Comma-separated delays; a trailing unit applies to bare entries.
        #[arg(long, default_value = "0,1,2,3,5,10ms", value_parser = parse_delay_list)]
        tau: DelayList,
    },
    /// Nonlinear simulation (timeseries.csv, timeseries.json, freq.svg).
    Sim {
        spec: String,
        /// Scenario JSON; without it the system runs undisturbed for 1 s.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Ringdown identification on one CSV channel (prony.json).
    Prony {
        csv: PathBuf,
        #[arg(long)]
        channel: String,
        /// `start,stop` in seconds.
        #[arg(long, value_parser = parse_window)]
        window: (f64, f64),
        #[arg(long, default_value_t = ssolab::modal_id::DEFAULT_ORDER)]
        order: usize,
        /// Use the matrix pencil instead of least-squares Prony.
        #[arg(long)]
        pencil: bool,
    },
    /// Grouping labels from a compass CSV (grouping.json).
    Classify {
        compass: PathBuf,
        #[arg(long, default_value_t = ssolab::smallsignal::GROUPING_THRESHOLD)]
        threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayList(pub Vec<f64>);

fn unit_scale(unit: &str) -> Result<f64, String> {
    match unit {
        "" | "s" => Ok(1.0),
        "ms" => Ok(1e-3),
        "us" => Ok(1e-6),
        u => Err(format!("unknown delay unit {u:?}")),
    }
}

fn split_unit(s: &str) -> (&str, &str) {
    let s = s.trim();
    let cut = s.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(s.len());
    (s[..cut].trim(), s[cut..].trim())
}

/// Seconds from `2ms`, `0.002s` or `0.002`.
pub fn parse_delay(s: &str) -> Result<f64, String> {
    let (num, unit) = split_unit(s);
    let v: f64 = num.parse().map_err(|_| format!("not a delay: {s:?}"))?;
    let v = v * unit_scale(unit)?;
    if !(v >= 0.0) || !v.is_finite() {
        return Err(format!("delay must be >= 0: {s:?}"));
    }
    Ok(v)
}

pub fn parse_delay_list(s: &str) -> Result<DelayList, String> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    if items.is_empty() {
        return Err("empty delay list".into());
    }
    let trailing = split_unit(items[items.len() - 1]).1;
    let scale = unit_scale(trailing)?;
    items
        .iter()
        .map(|it| {
            let (num, unit) = split_unit(it);
            if unit.is_empty() {
                let v: f64 = num.parse().map_err(|_| format!("not a delay: {it:?}"))?;
                if !(v >= 0.0) {
                    return Err(format!("delay must be >= 0: {it:?}"));
                }
                Ok(v * scale)
            } else {
                parse_delay(it)
            }
        })
        .collect::<Result<_, _>>()
        .map(DelayList)
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("window is `start,stop`")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad window start {a:?}"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad window stop {b:?}"))?;
    Ok((a, b))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("io: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delays_in_seconds() {
        assert_eq!(parse_delay("2ms").unwrap(), 0.002);
        assert_eq!(parse_delay("0.002").unwrap(), 0.002);
        assert_eq!(parse_delay("3 ms").unwrap(), 0.003);
        assert!(parse_delay("-1ms").is_err());
        assert!(parse_delay("2h").is_err());
    }

    #[test]
    fn trailing_unit_applies_to_list() {
        let l = parse_delay_list("0,1,2,3,5,10ms").unwrap();
        let expect = [0.0, 1e-3, 2e-3, 3e-3, 5e-3, 10e-3];
        assert!(l.0.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(parse_delay_list("0.001s,4ms").unwrap(), DelayList(vec![0.001, 0.004]));
        assert!(parse_delay_list("").is_err());
    }

    #[test]
    fn window_pair() {
        assert_eq!(parse_window("0.1, 0.6").unwrap(), (0.1, 0.6));
        assert!(parse_window("0.1").is_err());
    }

    #[test]
    fn command_line_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
