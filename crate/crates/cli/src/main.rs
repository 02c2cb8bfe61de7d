//! `blgeo`: JSON front end for the blgeo library.

mod render;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blgeo_core::covers::{self, PointPolytope, UniformCover, VoxelBody};
use blgeo_core::determinantal::{ball_barthe_check, cauchy_binet_expansion, determinantal_high_check};
use blgeo_core::integrals::{
    densities_from_json, gaussian_barthe_eval, gaussian_bl_eval, gaussian_supconv_closed_form, supconv_eval,
    DensitySpec, GridSpec,
};
use blgeo_core::structure::{analyze, is_critical};
use blgeo_core::transport::{brenier_1d, linear_growth_estimate, monge_ampere_residual};
use blgeo_core::{Error, GeometricDatum, Subspace, Tolerance};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::{json, Value};

const SCHEMA: &str = "blgeo/1";

#[derive(Parser, Debug)]
#[command(name = "blgeo", version, about = "Geometric Brascamp–Lieb data: structure, determinantal checks, inequalities")]
struct Cli {
    /// Relative singular-value cutoff for rank decisions.
    #[arg(long, global = true, default_value_t = 1e-9)]
    rank_tol: f64,
    /// Residual cutoff for matrix identities.
    #[arg(long, global = true, default_value_t = 1e-9)]
    residual_tol: f64,
    /// Seed for randomized sanity checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check Σ c_i P_{E_i} = I.
    Validate { datum: PathBuf },
    /// Independent and dependent subspaces and the indecomposable decomposition.
    Analyze { datum: PathBuf },
    /// Criticality of a subspace given as {"n", "frame"}.
    Critical { datum: PathBuf, subspace: PathBuf },
    /// Determinantal inequality: rank-one form with --t, block form with --A.
    Detcheck {
        datum: PathBuf,
        /// One positive number per rank-one vector.
        #[arg(long, conflicts_with = "a", required_unless_present = "a")]
        t: Option<PathBuf>,
        /// One positive definite matrix per subspace, in its frame coordinates.
        #[arg(long = "A", visible_alias = "a", id = "a")]
        a: Option<PathBuf>,
        /// Also list the Cauchy–Binet expansion (rank-one form).
        #[arg(long, requires = "t")]
        cauchy_binet: bool,
    },
    /// Brascamp–Lieb functional for centred Gaussians exp(−π⟨A_i z, z⟩).
    BlEval {
        datum: PathBuf,
        #[arg(long = "A", visible_alias = "a")]
        a: PathBuf,
    },
    /// Barthe functional: closed form for Φ or Gaussian densities, grid otherwise.
    BartheEval {
        datum: PathBuf,
        #[arg(long, conflicts_with = "densities", required_unless_present = "densities")]
        phi: Option<PathBuf>,
        #[arg(long)]
        densities: Option<PathBuf>,
        /// Grid as h=0.05,box=±4; forces grid evaluation.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Monotone map T = F_f⁻¹ ∘ F_g pushing g forward to f on a line.
    Transport {
        /// Target density.
        #[arg(long = "f", visible_alias = "target")]
        f: PathBuf,
        /// Source density.
        #[arg(long = "g", visible_alias = "source")]
        g: PathBuf,
        /// Sample spacing and interval as h=0.001,box=±8.
        #[arg(long, default_value = "h=0.001,box=±8")]
        grid: String,
        /// Leave the map samples out of the report.
        #[arg(long)]
        no_samples: bool,
    },
    /// Bollobás–Thomason inequality on a voxel body.
    Bt { cover: PathBuf, body: PathBuf },
    /// Dual inequality on a polytope containing the origin.
    DualBt {
        cover: PathBuf,
        polytope: PathBuf,
        #[arg(long, default_value_t = 0)]
        mc_samples: usize,
    },
    /// Validate a cover and list its induced partition.
    CoversInduce { cover: PathBuf },
}

/// Outcome classes mapped to exit codes 0, 2 and 1.
enum Failure {
    Input(Error),
    Violation(Value),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

type Outcome = std::result::Result<Value, Failure>;

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn load_datum(path: &Path, tol: &Tolerance) -> Result<GeometricDatum, Error> {
    let mut d = GeometricDatum::from_json(&read(path)?).map_err(|e| with_path(path, e))?;
    let rep = d.validate(tol);
    if !rep.is_valid {
        return Err(Error::InvalidDatum(format!(
            "{}: Σ c_i P_i − I has max defect {:e} > {:e}",
            path.display(),
            rep.defect,
            tol.residual_tol
        )));
    }
    Ok(d)
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, Error> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Parse("matrix rows differ in length".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Numbers {
    Wrapped { t: Vec<f64> },
    Bare(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Matrices {
    Wrapped {
        #[serde(rename = "A", alias = "a")]
        matrices: Vec<Vec<Vec<f64>>>,
    },
    Bare(Vec<Vec<Vec<f64>>>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneMatrix {
    Wrapped { phi: Vec<Vec<f64>> },
    Bare(Vec<Vec<f64>>),
}

fn load_matrices(path: &Path) -> Result<Vec<DMatrix<f64>>, Error> {
    let m: Matrices = parse(path)?;
    let list = match m {
        Matrices::Wrapped { matrices } | Matrices::Bare(matrices) => matrices,
    };
    list.iter().map(|rows| matrix(rows)).collect()
}

fn verdict(holds: bool, report: Value) -> Outcome {
    if holds {
        Ok(report)
    } else {
        Err(Failure::Violation(report))
    }
}

fn value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

fn run(cli: &Cli, tol: &Tolerance) -> Outcome {
    match &cli.command {
        Command::Validate { datum } => {
            let mut d = GeometricDatum::from_json(&read(datum)?).map_err(|e| with_path(datum, e))?;
            let rep = d.validate(tol);
            let v = value(&rep);
            if rep.is_valid {
                Ok(v)
            } else {
                // an invalid datum is an input problem; the report still goes out
                Err(Failure::Input(Error::InvalidDatum(v.to_string())))
            }
        }
        Command::Analyze { datum } => {
            let d = load_datum(datum, tol)?;
            Ok(value(&analyze(&d, tol)?))
        }
        Command::Critical { datum, subspace } => {
            let d = load_datum(datum, tol)?;
            let v: Subspace = parse(subspace)?;
            Ok(value(&is_critical(&d, &v, tol)?))
        }
        Command::Detcheck {
            datum,
            t,
            a,
            cauchy_binet,
        } => {
            let d = load_datum(datum, tol)?;
            if let Some(tp) = t {
                let t = match parse::<Numbers>(tp)? {
                    Numbers::Wrapped { t } | Numbers::Bare(t) => t,
                };
                let r = d.rank_one_expansion()?;
                let res = ball_barthe_check(&r, &t, tol)?;
                let mut v = value(&res);
                v["form"] = json!("rank_one");
                if *cauchy_binet {
                    v["cauchy_binet"] = value(&cauchy_binet_expansion(&r, &t)?);
                }
                verdict(res.holds, v)
            } else {
                let a = load_matrices(a.as_ref().expect("clap requires one of t or A"))?;
                let res = determinantal_high_check(&d, &a, tol)?;
                let mut v = value(&res);
                v["form"] = json!("block");
                verdict(res.holds, v)
            }
        }
        Command::BlEval { datum, a } => {
            let d = load_datum(datum, tol)?;
            let a = load_matrices(a)?;
            let res = gaussian_bl_eval(&d, &a, tol)?;
            verdict(res.holds, value(&res))
        }
        Command::BartheEval {
            datum,
            phi,
            densities,
            grid,
        } => {
            let d = load_datum(datum, tol)?;
            let res = if let Some(p) = phi {
                let rows = match parse::<OneMatrix>(p)? {
                    OneMatrix::Wrapped { phi } | OneMatrix::Bare(phi) => phi,
                };
                gaussian_barthe_eval(&d, &matrix(&rows)?, tol)?
            } else {
                let path = densities.as_ref().expect("clap requires one of phi or densities");
                let domains: Vec<Subspace> = d.entries().iter().map(|e| e.e.clone()).collect();
                let f = densities_from_json(&read(path)?, &domains).map_err(|e| with_path(path, e))?;
                match grid {
                    Some(g) => supconv_eval(&d, &f, GridSpec::parse(g)?, tol)?,
                    None if f.iter().all(|x| x.as_gaussian().is_some()) => gaussian_supconv_closed_form(&d, &f, tol)?,
                    None => {
                        return Err(Failure::Input(Error::Precondition(
                            "non-Gaussian densities need --grid h=..,box=±..".into(),
                        )))
                    }
                }
            };
            verdict(res.holds, value(&res))
        }
        Command::Transport { f, g, grid, no_samples } => {
            let spec = GridSpec::parse(grid)?;
            let line = Subspace::full(1);
            let target = parse::<DensitySpec>(f)?.into_density(line.clone()).map_err(|e| with_path(f, e))?;
            let source = parse::<DensitySpec>(g)?.into_density(line).map_err(|e| with_path(g, e))?;
            let map = brenier_1d(&target, &source, (-spec.half_width, spec.half_width), spec.h)?;
            let residual = monge_ampere_residual(&map, &target, &source)?;
            let growth = linear_growth_estimate(&map);
            let (lo, hi) = map.domain();
            let mut v = json!({
                "grid": spec,
                "domain": [lo, hi],
                "sample_count": map.len(),
                "monge_ampere": residual,
                "growth": growth,
            });
            if !no_samples {
                v["map"] = value(&map);
            }
            Ok(v)
        }
        Command::Bt { cover, body } => {
            let c = UniformCover::from_json(&read(cover)?).map_err(|e| with_path(cover, e))?;
            let k = VoxelBody::from_json(&read(body)?).map_err(|e| with_path(body, e))?;
            let res = covers::bt_check(&k, &c)?;
            verdict(res.holds, value(&res))
        }
        Command::DualBt {
            cover,
            polytope,
            mc_samples,
        } => {
            let c = UniformCover::from_json(&read(cover)?).map_err(|e| with_path(cover, e))?;
            let k = PointPolytope::from_json(&read(polytope)?).map_err(|e| with_path(polytope, e))?;
            let res = covers::dual_bt_check(&k, &c, *mc_samples, cli.seed)?;
            verdict(res.holds, value(&res))
        }
        Command::CoversInduce { cover } => {
            let c = UniformCover::from_json(&read(cover)?).map_err(|e| with_path(cover, e))?;
            let validation = covers::validate_cover(&c)?;
            let partition = if validation.valid {
                Some(covers::induced_one_cover(&c)?)
            } else {
                None
            };
            let v = json!({ "validation": validation, "partition": partition });
            if validation.valid {
                Ok(v)
            } else {
                Err(Failure::Input(Error::InvalidCover(v.to_string())))
            }
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate { .. } => "validate",
        Command::Analyze { .. } => "analyze",
        Command::Critical { .. } => "critical",
        Command::Detcheck { .. } => "detcheck",
        Command::BlEval { .. } => "bl-eval",
        Command::BartheEval { .. } => "barthe-eval",
        Command::Transport { .. } => "transport",
        Command::Bt { .. } => "bt",
        Command::DualBt { .. } => "dual-bt",
        Command::CoversInduce { .. } => "covers-induce",
    }
}

fn envelope(cli: &Cli, tol: &Tolerance, status: &str, result: Value) -> Value {
    json!({
        "schema": SCHEMA,
        "command": command_name(&cli.command),
        "status": status,
        "tolerance": tol,
        "seed": cli.seed,
        "result": result,
    })
}

fn emit(cli: &Cli, v: &Value) {
    let body = match cli.format {
        Format::Json => serde_json::to_string_pretty(v).expect("valid JSON") + "\n",
        Format::Text => render::text(v),
    };
    // a closed pipe downstream is not our failure
    let _ = std::io::stdout().lock().write_all(body.as_bytes());
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(s) = std::env::var("BLGEO_THREADS") {
        let n: usize = s
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Parse(format!("BLGEO_THREADS={s:?} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let tol = match Tolerance::new(cli.rank_tol, cli.residual_tol) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&cli, &tol) {
        Ok(v) => {
            emit(&cli, &envelope(&cli, &tol, "ok", v));
            ExitCode::SUCCESS
        }
        Err(Failure::Violation(v)) => {
            emit(&cli, &envelope(&cli, &tol, "violation", v));
            eprintln!("error: inequality violated beyond tolerance");
            ExitCode::from(2)
        }
        Err(Failure::Input(e)) => {
            // validation failures carry their report as JSON
            let report = match &e {
                Error::InvalidDatum(m) | Error::InvalidCover(m) => serde_json::from_str::<Value>(m).ok(),
                _ => None,
            };
            match report {
                Some(v) => {
                    emit(&cli, &envelope(&cli, &tol, "invalid", v));
                    eprintln!("error: input is invalid");
                }
                None => eprintln!("error: {e}"),
            }
            ExitCode::from(1)
        }
    }
}
