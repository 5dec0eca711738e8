use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atc_core::coupling_opt::HessianMode;
use atc_core::domain_mesh::{build_graded_mesh, count_dof, DomainDecomposition, NormMode};
use atc_core::harness::{fit_rate, read_csv, run_single, run_sweep, write_csv, write_plot_data, RunOptions};
use atc_core::lattice_potential::LatticeModel;
use atc_core::AtcError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "atc", version, about = "Optimization-based atomistic-to-continuum coupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the manufactured problem for one core radius.
    Run {
        #[arg(long)]
        r_core: Option<i64>,
        #[command(flatten)]
        common: Common,
        /// Write the convergence record as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the Newton history as CSV.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Solve for several core radii and write the convergence table.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        r_core: Vec<i64>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write `dof err_l2` columns for plotting.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Start each point from the previous solution (sequential).
        #[arg(long)]
        warm_start: bool,
        /// Write 0 in the wall_time column for reproducible output.
        #[arg(long)]
        no_timing: bool,
    },
    /// Fit the convergence rate of a sweep CSV.
    Rate { file: PathBuf },
    /// Print the graded mesh nodes, one per line.
    Mesh {
        #[arg(long)]
        r_core: Option<i64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Decay exponent of the exact solution.
    #[arg(long)]
    gamma: Option<f64>,
    /// Error norm the radii and mesh are optimized for: energy | uniform.
    #[arg(long)]
    norm: Option<String>,
    /// full | gauss
    #[arg(long)]
    hessian: Option<String>,
    /// Newton tolerance on the max-norm of the Lagrangian gradient.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// key=value file with the same option names; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

struct Config(HashMap<String, String>);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self, AtcError> {
        let mut map = HashMap::new();
        let Some(path) = path else {
            return Ok(Self(map));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| AtcError::Usage(format!("cannot read {}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                AtcError::Usage(format!("{}:{}: expected key=value", path.display(), n + 1))
            })?;
            map.insert(k.trim().replace('_', "-"), v.trim().to_string());
        }
        Ok(Self(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, AtcError> {
        self.0
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| AtcError::Usage(format!("invalid value '{v}' for {key}")))
            })
            .transpose()
    }
}

fn resolve<T: std::str::FromStr>(flag: Option<T>, cfg: &Config, key: &str) -> Result<Option<T>, AtcError> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(key),
    }
}

fn options(common: &Common, cfg: &Config) -> Result<RunOptions, AtcError> {
    let gamma = resolve(common.gamma, cfg, "gamma")?
        .ok_or_else(|| AtcError::Usage("--gamma is required".into()))?;
    let mut opts = RunOptions::new(gamma);
    if let Some(n) = resolve(common.norm.clone(), cfg, "norm")? {
        opts.norm = n.parse::<NormMode>()?;
    }
    if let Some(h) = resolve(common.hessian.clone(), cfg, "hessian")? {
        opts.newton.hessian_mode = h.parse::<HessianMode>()?;
    }
    if let Some(t) = resolve(common.tol, cfg, "tol")? {
        opts.newton.tolerance = t;
    }
    if let Some(m) = resolve(common.max_iter, cfg, "max-iter")? {
        opts.newton.max_iterations = m;
    }
    Ok(opts)
}

fn create(path: &Path) -> Result<BufWriter<File>, AtcError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| AtcError::Usage(format!("cannot create {}: {e}", path.display())))
}

fn r_core_from(flag: Option<i64>, cfg: &Config) -> Result<i64, AtcError> {
    resolve(flag, cfg, "r-core")?.ok_or_else(|| AtcError::Usage("--r-core is required".into()))
}

enum Outcome {
    Done,
    NotConverged,
}

fn execute(cli: Cli) -> Result<Outcome, AtcError> {
    match cli.command {
        Command::Run {
            r_core,
            common,
            out,
            diagnostics,
        } => {
            let cfg = Config::load(common.config.as_deref())?;
            let r_core = r_core_from(r_core, &cfg)?;
            let opts = options(&common, &cfg)?;
            let outcome = run_single(r_core, &opts)?;
            let rec = &outcome.record;
            match out.or(cfg.get("out")?) {
                Some(p) => write_csv(std::slice::from_ref(rec), create(&p)?)?,
                None => write_csv(std::slice::from_ref(rec), std::io::stdout().lock())?,
            }
            if let Some(p) = diagnostics {
                create(&p)?
                    .write_all(outcome.diagnostics.to_csv().as_bytes())
                    .map_err(|e| AtcError::Usage(format!("cannot write {}: {e}", p.display())))?;
            }
            eprintln!(
                "r_core={} dof={} err_l2={:.6e} newton_iters={} residual={:.3e}",
                rec.r_core, rec.dof, rec.err_l2, rec.newton_iters, rec.residual
            );
            Ok(if rec.converged {
                Outcome::Done
            } else {
                Outcome::NotConverged
            })
        }
        Command::Sweep {
            r_core,
            common,
            out,
            plot,
            warm_start,
            no_timing,
        } => {
            let cfg = Config::load(common.config.as_deref())?;
            let radii = if r_core.is_empty() {
                let list: Option<String> = cfg.get("r-core")?;
                list.map(|l| {
                    l.split(',')
                        .map(|s| {
                            s.trim()
                                .parse::<i64>()
                                .map_err(|_| AtcError::Usage(format!("invalid core radius '{s}'")))
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .transpose()?
                .unwrap_or_default()
            } else {
                r_core
            };
            let mut opts = options(&common, &cfg)?;
            opts.warm_start = warm_start || cfg.get("warm-start")?.unwrap_or(false);
            opts.record_timing = !(no_timing || cfg.get("no-timing")?.unwrap_or(false));
            let records = run_sweep(&radii, &opts)?;
            match out.or(cfg.get("out")?) {
                Some(p) => write_csv(&records, create(&p)?)?,
                None => write_csv(&records, std::io::stdout().lock())?,
            }
            if let Some(p) = plot {
                write_plot_data(&records, create(&p)?)?;
            }
            match fit_rate(&records) {
                Ok(rate) => eprintln!("fitted rate: {rate:.4}"),
                Err(e) => eprintln!("{e}"),
            }
            Ok(if records.iter().all(|r| r.converged) {
                Outcome::Done
            } else {
                Outcome::NotConverged
            })
        }
        Command::Rate { file } => {
            let f = File::open(&file)
                .map_err(|e| AtcError::Usage(format!("cannot open {}: {e}", file.display())))?;
            let rate = fit_rate(&read_csv(f)?)?;
            println!("{rate:.6}");
            Ok(Outcome::Done)
        }
        Command::Mesh { r_core, common } => {
            let cfg = Config::load(common.config.as_deref())?;
            let r_core = r_core_from(r_core, &cfg)?;
            let opts = options(&common, &cfg)?;
            let model = LatticeModel::reference();
            let dec = DomainDecomposition::from_core_radius(r_core, opts.gamma, opts.norm, &model)?;
            let mesh = build_graded_mesh(&dec, opts.gamma, opts.norm);
            eprintln!(
                "r_core={} r_a={} r_c={} dof={}",
                dec.r_core(),
                dec.r_a(),
                dec.r_c(),
                count_dof(&dec, &mesh)
            );
            print!("{}", mesh.dump());
            Ok(Outcome::Done)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                AtcError::Usage(_) | AtcError::IllPosed(_) | AtcError::Domain(_) => 2,
                AtcError::NonConvergence { .. } => 3,
                _ => 4,
            })
        }
    }
}
