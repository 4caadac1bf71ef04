//! Command-line front end. Every command prints exactly one JSON object on
//! stdout; diagnostics go to stderr.
//!
//! Exit codes: 0 ok, 2 bad input, 3 grid cap exceeded, 4 atom cap exceeded,
//! 5 disagreement between counting methods.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::approx::ot_approx;
use crate::brute_oracle::{ot_closed_form, Mode, DEFAULT_ATOM_CAP};
use crate::dp_solver::{ot_exact, plan_descriptor, plan_query};
use crate::error::{Error, Result};
use crate::grid::DEFAULT_GRID_CAP;
use crate::knapsack_reduction::{count_dp, count_via_ot, ExactDpOracle, KnapsackInstance, NoisyOracle};
use crate::model::{
    parse_rational, render_rational, Marginal, OtScalar, OtValue, ProductDistribution, Rational, TwoPointTarget,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_GRID_CAP: i32 = 3;
pub const EXIT_ATOM_CAP: i32 = 4;
pub const EXIT_DISAGREEMENT: i32 = 5;

/// Name of the environment variable overriding the default grid cap.
pub const GRID_CAP_ENV: &str = "OTDP_MAX_GRID";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalDocument {
    pub support: Vec<String>,
    pub probs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDocument {
    pub y1: Vec<String>,
    pub y2: Vec<String>,
    pub t: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub marginals: Vec<MarginalDocument>,
    pub target: TargetDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

fn parse_all(values: &[String]) -> Result<Vec<Rational>> {
    values.iter().map(|v| parse_rational(v)).collect()
}

fn render_all(values: &[Rational]) -> Vec<String> {
    values.iter().map(render_rational).collect()
}

impl InstanceDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_instance(mu: &ProductDistribution, target: &TwoPointTarget, p: Option<f64>) -> Self {
        InstanceDocument {
            marginals: mu
                .marginals
                .iter()
                .map(|m| MarginalDocument {
                    support: render_all(&m.support),
                    probs: render_all(&m.probs),
                })
                .collect(),
            target: TargetDocument {
                y1: render_all(&target.y1),
                y2: render_all(&target.y2),
                t: render_rational(&target.t),
            },
            p,
        }
    }

    pub fn exponent(&self) -> Result<f64> {
        match self.p {
            None => Ok(2.0),
            Some(p) if p.is_finite() && p > 0.0 => Ok(p),
            Some(p) => Err(Error::InvalidArgument(format!("p = {p} must be positive"))),
        }
    }

    pub fn to_instance(&self) -> Result<(ProductDistribution, TwoPointTarget)> {
        let marginals = self
            .marginals
            .iter()
            .map(|m| Marginal::new(parse_all(&m.support)?, parse_all(&m.probs)?))
            .collect::<Result<Vec<_>>>()?;
        let mu = ProductDistribution::new(marginals)?;
        let target = TwoPointTarget::new(
            parse_all(&self.target.y1)?,
            parse_all(&self.target.y2)?,
            parse_rational(&self.target.t)?,
        )?;
        crate::model::validate_instance(&mu, &target)?;
        Ok((mu, target))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultMode {
    Exact,
    Float,
    Approx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_rational: Option<String>,
    pub value_decimal: f64,
    pub mode: ResultMode,
    #[serde(rename = "grid_N", default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minkowski_size: Option<usize>,
    /// One-based critical index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_bound: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice_m: Option<String>,
}

impl ResultDocument {
    pub fn from_value(value: &OtValue, mode: ResultMode) -> Self {
        let value_rational = match &value.value {
            OtScalar::Exact(r) => Some(render_rational(r)),
            OtScalar::Float(_) => None,
        };
        ResultDocument {
            value_rational,
            value_decimal: value.value.to_f64(),
            mode,
            grid_n: value.diagnostics.grid_n,
            minkowski_size: value.diagnostics.minkowski_size,
            n_t: value.diagnostics.critical_index.map(|n| n + 1),
            error_bound: None,
            lattice_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountDocument {
    pub count: String,
    pub via: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_calls: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub threshold: String,
    pub fraction: String,
    pub pi1: String,
    pub pi2: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Via {
    Ot,
    Dp,
    Both,
}

#[derive(Debug, Parser)]
#[command(name = "otdp", version, about = "Exact optimal transport to a two-point target")]
pub struct Cli {
    /// Grid cap for the DP solver [default: $OTDP_MAX_GRID or 1000000]
    #[arg(long, global = true)]
    pub max_grid: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact value by the dynamic program (p = 2)
    Exact { instance: PathBuf },
    /// Closed-form value over enumerated atoms
    Brute {
        instance: PathBuf,
        /// Cost exponent; defaults to the instance's p, else 2
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, value_enum, default_value = "exact")]
        mode: ModeArg,
        /// Maximum number of atoms to enumerate
        #[arg(long, default_value_t = DEFAULT_ATOM_CAP)]
        cap: usize,
    },
    /// Value within `eps` after snapping to a lattice
    Approx {
        instance: PathBuf,
        #[arg(long)]
        eps: String,
    },
    /// Count knapsack solutions
    Count {
        /// Comma separated nonnegative integers, may be empty
        #[arg(long, default_value = "")]
        weights: String,
        #[arg(long)]
        capacity: u64,
        #[arg(long, value_enum, default_value = "ot")]
        via: Via,
        /// Magnitude of alternating oracle offsets, as a rational
        #[arg(long)]
        noise: Option<String>,
    },
    /// Masses one atom sends to y1 and y2 under an optimal plan
    Plan {
        instance: PathBuf,
        /// Zero-based support index in each marginal, comma separated
        #[arg(long)]
        atom: String,
    },
}

enum Failure {
    Solver(Error),
    Disagreement(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::GridTooLarge { .. } => EXIT_GRID_CAP,
        Error::TooManyAtoms { .. } => EXIT_ATOM_CAP,
        _ => EXIT_INPUT,
    }
}

fn read_source(path: &Path) -> Result<String> {
    let mut text = String::new();
    let outcome = if path == Path::new("-") {
        std::io::stdin().read_to_string(&mut text).map(|_| ())
    } else {
        std::fs::read_to_string(path).map(|s| text = s)
    };
    outcome.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(text)
}

fn load(path: &Path) -> Result<(InstanceDocument, ProductDistribution, TwoPointTarget)> {
    let doc = InstanceDocument::from_json(&read_source(path)?)?;
    let (mu, target) = doc.to_instance()?;
    Ok((doc, mu, target))
}

fn require_quadratic(doc: &InstanceDocument) -> Result<()> {
    let p = doc.exponent()?;
    if p != 2.0 {
        return Err(Error::InvalidArgument(format!(
            "the dynamic program needs p = 2, instance has p = {p}; use `brute`"
        )));
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{what}: {s:?} is not a nonnegative integer")))
        })
        .collect()
}

fn grid_cap(flag: Option<usize>, env: Option<&str>) -> Result<usize> {
    if let Some(cap) = flag {
        return Ok(cap);
    }
    match env {
        None => Ok(DEFAULT_GRID_CAP),
        Some(text) => text
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{GRID_CAP_ENV}={text:?} is not a nonnegative integer"))),
    }
}

fn execute(cli: Cli, env_grid: Option<&str>, err: &mut dyn Write) -> std::result::Result<String, Failure> {
    let cap = grid_cap(cli.max_grid, env_grid)?;
    let json = match cli.command {
        Command::Exact { instance } => {
            let (doc, mu, target) = load(&instance)?;
            require_quadratic(&doc)?;
            let value = ot_exact(&mu, &target, cap)?;
            to_json(&ResultDocument::from_value(&value, ResultMode::Exact))
        }
        Command::Brute {
            instance,
            p,
            mode,
            cap: atom_cap,
        } => {
            let (doc, mu, target) = load(&instance)?;
            let p = match p {
                Some(p) => p,
                None => doc.exponent()?,
            };
            let (mode, result_mode) = match mode {
                ModeArg::Exact => (Mode::Exact, ResultMode::Exact),
                ModeArg::Float => (Mode::Float, ResultMode::Float),
            };
            let value = ot_closed_form(&mu, &target, p, mode, atom_cap)?;
            to_json(&ResultDocument::from_value(&value, result_mode))
        }
        Command::Approx { instance, eps } => {
            let (doc, mu, target) = load(&instance)?;
            require_quadratic(&doc)?;
            let eps = parse_rational(&eps)?;
            let (value, report) = ot_approx(&mu, &target, &eps, cap)?;
            let _ = writeln!(
                err,
                "lattice 1/{} with U = {}, largest coordinate shift {}",
                report.m,
                report.u,
                render_rational(&report.max_coordinate_shift)
            );
            let mut doc = ResultDocument::from_value(&value, ResultMode::Approx);
            doc.error_bound = Some(render_rational(&report.guaranteed_error));
            doc.lattice_m = Some(report.m.to_string());
            to_json(&doc)
        }
        Command::Count {
            weights,
            capacity,
            via,
            noise,
        } => {
            let inst = KnapsackInstance::new(parse_list(&weights, "weights")?, capacity);
            count(&inst, via, noise.as_deref(), cap, err)?
        }
        Command::Plan { instance, atom } => {
            let (doc, mu, target) = load(&instance)?;
            require_quadratic(&doc)?;
            let indices: Vec<usize> = parse_list(&atom, "atom")?;
            let (point, prob) = mu.atom(&indices)?;
            let desc = plan_descriptor(&mu, &target, cap)?;
            let (pi1, pi2) = plan_query(&desc, &point, &prob, &target)?;
            to_json(&PlanDocument {
                threshold: render_rational(&desc.threshold),
                fraction: render_rational(&desc.fraction),
                pi1: render_rational(&pi1),
                pi2: render_rational(&pi2),
            })
        }
    };
    Ok(json)
}

fn count(
    inst: &KnapsackInstance,
    via: Via,
    noise: Option<&str>,
    cap: usize,
    err: &mut dyn Write,
) -> std::result::Result<String, Failure> {
    let noise = noise.map(parse_rational).transpose()?;
    if inst.weights.iter().chain([&inst.capacity]).any(|&v| v >= 1 << 62) {
        return Err(Error::InvalidArgument("weights and capacity must be below 2^62".into()).into());
    }
    let via_ot = |inst: &KnapsackInstance| -> Result<(BigUint, usize)> {
        let mut exact = ExactDpOracle { grid_cap: cap };
        let outcome = match &noise {
            Some(magnitude) => count_via_ot(inst, &mut NoisyOracle::new(exact, magnitude.clone(), true))?,
            None => count_via_ot(inst, &mut exact)?,
        };
        Ok((outcome.count, outcome.oracle_calls))
    };
    let doc = match via {
        Via::Dp => CountDocument {
            count: count_dp(inst).to_string(),
            via: "dp".into(),
            oracle_calls: None,
        },
        Via::Ot => {
            let (n, calls) = via_ot(inst)?;
            CountDocument {
                count: n.to_string(),
                via: "ot".into(),
                oracle_calls: Some(calls),
            }
        }
        Via::Both => {
            let (n, calls) = via_ot(inst)?;
            let reference = count_dp(inst);
            if n != reference {
                return Err(Failure::Disagreement(format!(
                    "transport reduction counted {n}, dynamic program counted {reference}"
                )));
            }
            let _ = writeln!(err, "ot and dp agree");
            CountDocument {
                count: n.to_string(),
                via: "both".into(),
                oracle_calls: Some(calls),
            }
        }
    };
    Ok(to_json(&doc))
}

fn to_json<T: Serialize>(doc: &T) -> String {
    serde_json::to_string(doc).expect("documents serialize")
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. `env_grid` is the value of [`GRID_CAP_ENV`], if set.
pub fn run<I, T>(args: I, env_grid: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(cli, env_grid, err) {
        Ok(json) => {
            let _ = writeln!(out, "{json}");
            EXIT_OK
        }
        Err(Failure::Solver(e)) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
        Err(Failure::Disagreement(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_DISAGREEMENT
        }
    }
}
