use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use besovlab::besov::{run_catalogue, Suite};
use besovlab::decay::{
    energy_inequality_audit, geometric_times, proposition_4_1_audit, ExperimentConfig, NormKind,
};
use besovlab::linalg;
use besovlab::littlewood_paley::DyadicCutoffs;
use besovlab::solver::{evolve_nonlinear_partial, lemma_seed_sweep, write_trajectory, LemmaId, LemmaParams};
use besovlab::systems::{eta1, log_grid, BUILTIN_MODELS};
use besovlab::{
    check_structure, evolve_linear, resolve_model, run_experiment, synthesize_initial_data, DataKind, DecayExperiment,
    Direction, Error, GridSpec, InitialDataSpec, SnapshotSchedule, SystemSpec, TrackedNorm, VerifierSetup,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "besovlab", version, about = "Decay and Besov-norm laboratory for partially dissipative systems")]
struct Cli {
    /// Directory reports are written to.
    #[arg(long, global = true, env = "BESOVLAB_OUT_DIR", default_value = "besovlab-out")]
    out_dir: PathBuf,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "BESOVLAB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the structure conditions and fit the dissipation constant.
    Check {
        /// Built-in name or path to a TOML descriptor.
        model: String,
        #[command(flatten)]
        sweep: XiSweep,
    },
    /// Tabulate the spectrum of the symbol over a frequency sweep.
    Spectrum {
        model: String,
        #[command(flatten)]
        sweep: XiSweep,
    },
    /// Evolve initial data and store the trajectory.
    Evolve {
        #[arg(long)]
        model: String,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 10.0)]
        t_final: f64,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        /// Record every k-th step.
        #[arg(long, default_value_t = 10)]
        every: usize,
        /// Exact linear propagation instead of the nonlinear integrator.
        #[arg(long)]
        linear: bool,
    },
    /// Measure decay rates of tracked norms.
    Decay(DecayArgs),
    /// Run the Besov inequality suites.
    Inequalities {
        /// all, embeddings, bernstein, interpolation or products.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Check the low-frequency envelope bounds over data seeds.
    LemmaBounds {
        #[arg(long)]
        model: String,
        /// 3.2, 3.3, 3.4 or all.
        #[arg(long, default_value = "all")]
        lemma: String,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        ell: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        /// Summability exponent (a number or inf).
        #[arg(long, default_value = "2")]
        r: String,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 4096)]
        n: usize,
        #[arg(long, default_value = "400pi", value_parser = parse_length)]
        box_length: f64,
    },
    /// Small-data and energy inequality audits.
    Audit {
        #[arg(long, value_enum)]
        kind: AuditKind,
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1 << 13)]
        n: usize,
        #[arg(long, default_value = "2000pi", value_parser = parse_length)]
        box_length: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4])]
        amplitudes: Vec<f64>,
        #[arg(long, default_value_t = 2000.0)]
        t_final: f64,
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AuditKind {
    /// Scale invariance of sup E1 / E0 in the amplitude.
    Prop41,
    /// Energy inequality constant over seeds and amplitudes.
    Energy,
}

#[derive(Args)]
struct XiSweep {
    #[arg(long, default_value_t = 1e-3)]
    xi_min: f64,
    #[arg(long, default_value_t = 1e3)]
    xi_max: f64,
    #[arg(long, default_value_t = 400)]
    points: usize,
}

impl XiSweep {
    fn grid(&self) -> Result<Vec<f64>, Error> {
        if !(self.xi_min > 0.0 && self.xi_max > self.xi_min && self.points >= 2) {
            return Err(Error::InvalidInput("need 0 < xi-min < xi-max and at least 2 points".into()));
        }
        Ok(log_grid(self.xi_min, self.xi_max, self.points))
    }
}

#[derive(Args)]
struct GridArgs {
    /// Grid points (a power of two).
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Box length; accepts a multiple of pi such as 200pi.
    #[arg(long, default_value = "200pi", value_parser = parse_length)]
    box_length: f64,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, value_enum, default_value_t = DataChoice::BesovTail)]
    data: DataChoice,
    /// Low-frequency index of besov-tail data.
    #[arg(long, default_value_t = 0.5)]
    s: f64,
    /// Frequency of single-tone data.
    #[arg(long, default_value_t = 1.0)]
    xi: f64,
    /// Field container for custom data.
    #[arg(long)]
    path: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    cutoff: f64,
    /// random, m-perp, or comma-separated components.
    #[arg(long, default_value = "random")]
    direction: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataChoice {
    BesovTail,
    GaussianL1,
    HighFreqOnly,
    SingleTone,
    Custom,
}

impl DataArgs {
    fn spec(&self) -> Result<InitialDataSpec, Error> {
        let kind = match self.data {
            DataChoice::BesovTail => DataKind::BesovTail { s: self.s },
            DataChoice::GaussianL1 => DataKind::GaussianL1,
            DataChoice::HighFreqOnly => DataKind::HighFreqOnly,
            DataChoice::SingleTone => DataKind::SingleTone { xi: self.xi },
            DataChoice::Custom => DataKind::Custom {
                path: self
                    .path
                    .clone()
                    .ok_or_else(|| Error::InvalidInput("custom data needs --path".into()))?,
            },
        };
        let direction = match self.direction.as_str() {
            "random" => Direction::Random,
            "m-perp" => Direction::RandomInMPerp,
            list => Direction::Fixed(
                list.split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| Error::InvalidInput(format!("direction {list:?}: {e}")))?,
            ),
        };
        Ok(InitialDataSpec {
            kind,
            amplitude: self.amplitude,
            direction,
            seed: self.seed,
            spectral_cutoff: self.cutoff,
        })
    }
}

#[derive(Args)]
struct DecayArgs {
    #[arg(long, required_unless_present = "config")]
    model: Option<String>,
    /// TOML experiment file; replaces the other experiment flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Derivative orders of the tracked norms.
    #[arg(long = "l", value_delimiter = ',', default_values_t = [0.0, 0.5])]
    ell: Vec<f64>,
    #[arg(long, value_enum, default_value_t = NormChoice::L2)]
    norm: NormChoice,
    #[arg(long, default_value_t = 1 << 15)]
    n: usize,
    #[arg(long, default_value = "2000pi", value_parser = parse_length)]
    box_length: f64,
    #[arg(long, default_value_t = 1.0)]
    t_min: f64,
    #[arg(long, default_value_t = 5000.0)]
    t_max: f64,
    #[arg(long, default_value_t = 40)]
    samples: usize,
    /// Fit window as start,end.
    #[arg(long, default_value = "100,5000", value_parser = parse_window)]
    window: (f64, f64),
    /// Run the full nonlinear system (default: linearized).
    #[arg(long)]
    nonlinear: bool,
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormChoice {
    L2,
    BesovB21,
}

impl DecayArgs {
    fn experiment(&self) -> Result<DecayExperiment, Error> {
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)?;
            return ExperimentConfig::from_toml(&text)?.build();
        }
        let system = load_model(self.model.as_deref().unwrap_or_default())?;
        let kind = match self.norm {
            NormChoice::L2 => NormKind::L2,
            NormChoice::BesovB21 => NormKind::BesovB21,
        };
        Ok(DecayExperiment {
            grid: GridSpec::new(self.n, self.box_length, system.dim_state())?,
            system,
            data: self.data.spec()?,
            sample_times: geometric_times(self.t_min, self.t_max, self.samples)?,
            tracked_norms: self.ell.iter().map(|&ell| TrackedNorm { ell, kind }).collect(),
            fit_window: self.window,
            linear_only: !self.nonlinear,
            dt: self.dt,
            tolerance: self.tolerance,
        })
    }
}

fn parse_length(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let v = match t.strip_suffix("pi") {
        Some("") => PI,
        Some(m) => m.trim().parse::<f64>().map_err(|e| e.to_string())? * PI,
        None => t.parse::<f64>().map_err(|e| e.to_string())?,
    };
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("box length must be positive, got {text}"))
    }
}

fn parse_window(text: &str) -> Result<(f64, f64), String> {
    let (a, b) = text.split_once(',').ok_or("expected start,end")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a < b {
        Ok((a, b))
    } else {
        Err(format!("window start {a} must precede end {b}"))
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Aborted { .. } | Error::Singular(_) | Error::Overflow { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load_model(name: &str) -> Result<SystemSpec, Error> {
    if BUILTIN_MODELS.contains(&name) || Path::new(name).exists() {
        return resolve_model(name);
    }
    Err(Error::InvalidInput(format!(
        "unknown model {name:?}; built-ins are {}",
        BUILTIN_MODELS.join(", ")
    )))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Config(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let out = &cli.out_dir;
    match cli.command {
        Command::Check { model, sweep } => {
            let spec = load_model(&model)?;
            let report = check_structure(&spec, &sweep.grid()?);
            let path = write_json(out, "structure.json", &report)?;
            println!("{}: {}", report.system, verdict(report.pass));
            println!("  condition A  {}", verdict(report.condition_a.pass()));
            println!("  condition K  {}", verdict(report.condition_k.passed()));
            println!("  dissipation constant c = {:.6}", report.dissipation_constant);
            if let Some(w) = report.condition_k.witness() {
                println!("  kernel witness {w:?}");
            }
            for n in &report.notes {
                println!("  note: {n}");
            }
            println!("wrote {}", path.display());
            Ok(report.pass)
        }
        Command::Spectrum { model, sweep } => {
            let spec = load_model(&model)?;
            let xi = sweep.grid()?;
            let mut csv = String::from("xi,eta1,max_re,ratio");
            for k in 0..spec.dim_state() {
                csv.push_str(&format!(",re{k},im{k}"));
            }
            csv.push('\n');
            let mut damped = true;
            for &x in &xi {
                let mut ev = linalg::eigenvalues(&spec.symbol(x))?;
                ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
                let max_re = ev[0].re;
                damped &= max_re < 0.0;
                csv.push_str(&format!("{x:.17e},{:.17e},{max_re:.17e},{:.17e}", eta1(x), -max_re / eta1(x)));
                for z in &ev {
                    csv.push_str(&format!(",{:.17e},{:.17e}", z.re, z.im));
                }
                csv.push('\n');
            }
            fs::create_dir_all(out)?;
            let path = out.join("spectrum.csv");
            fs::write(&path, csv)?;
            println!("{}: {} frequencies, strictly damped: {damped}", spec.name(), xi.len());
            println!("wrote {}", path.display());
            Ok(true)
        }
        Command::Evolve { model, grid, data, t_final, dt, every, linear } => {
            let spec = load_model(&model)?;
            let grid = GridSpec::new(grid.n, grid.box_length, spec.dim_state())?;
            let z0 = synthesize_initial_data(&spec, &grid, &data.spec()?)?;
            let (traj, abort) = if linear {
                let steps = (t_final / dt).round().max(1.0) as usize;
                let times: Vec<f64> = (every.max(1)..=steps)
                    .step_by(every.max(1))
                    .map(|k| k as f64 * t_final / steps as f64)
                    .collect();
                (evolve_linear(&spec.linearized(), &z0, &times)?, None)
            } else {
                evolve_nonlinear_partial(&spec, &z0, t_final, dt, &SnapshotSchedule::Every(every))?
            };
            let dir = out.join("trajectory");
            write_trajectory(&traj, &dir)?;
            let (t, last) = traj.last().expect("trajectory holds the initial state");
            println!("{}: {} snapshots, ||z(0)|| = {:.6e}", spec.name(), traj.len(), z0.l2_norm());
            println!("  ||z({t})|| = {:.6e}", last.l2_norm());
            if let Some(a) = &abort {
                println!("  aborted at step {} (t = {}): {}", a.step, a.time, a.reason);
            }
            println!("wrote {}", dir.display());
            Ok(abort.is_none())
        }
        Command::Decay(args) => {
            let exp = args.experiment()?;
            let report = run_experiment(&exp)?;
            let path = write_json(out, "decay.json", &report)?;
            let mut csv = Vec::new();
            report.write_csv(&mut csv)?;
            fs::write(out.join("decay.csv"), csv)?;
            println!(
                "{} ({}): {}",
                report.meta.system,
                if report.meta.linear_only { "linear" } else { "nonlinear" },
                verdict(report.pass)
            );
            for s in &report.series {
                let fitted = s.fit.map_or("n/a".to_string(), |f| format!("{:+.4} (R2 {:.4})", f.slope, f.r_squared));
                let theory = s.theoretical.map_or("n/a".to_string(), |t| format!("{t:+.4}"));
                println!("  {:<14} slope {fitted}  theory {theory}  {}", s.norm.label(), verdict(s.pass));
            }
            if let Some(r) = report.e1_over_e0 {
                println!("  sup E1 / E0 = {r:.4e}");
            }
            if let Some(a) = &report.abort {
                println!("  aborted at t = {}: {}", a.time, a.reason);
            }
            println!("wrote {}", path.display());
            Ok(report.pass)
        }
        Command::Inequalities { suite, samples, seed } => {
            let suites = Suite::parse(&suite)?;
            let setup = VerifierSetup { seed, ..VerifierSetup::default() };
            let reports = run_catalogue(&suites, samples, &setup)?;
            let path = write_json(out, "inequalities.json", &reports)?;
            for r in &reports {
                println!(
                    "{:<40} max {:.4e}  spread {:.3}  {}",
                    r.inequality_id,
                    r.ratio_max,
                    r.seed_spread,
                    verdict(r.pass)
                );
            }
            println!("wrote {}", path.display());
            Ok(reports.iter().all(|r| r.pass))
        }
        Command::LemmaBounds { model, lemma, sigma, ell, s, r, seeds, n, box_length } => {
            let spec = load_model(&model)?;
            let lemmas = if lemma == "all" {
                vec![LemmaId::DivergenceLowBlock, LemmaId::DivergenceBlocks, LemmaId::SourceBlocks]
            } else {
                vec![LemmaId::parse(&lemma)?]
            };
            let r: f64 = if r == "inf" {
                f64::INFINITY
            } else {
                r.parse().map_err(|_| Failure::Config(format!("invalid exponent {r:?}")))?
            };
            let tuples: Vec<(f64, f64)> = match (sigma, ell) {
                (None, None) => vec![(0.0, 0.0), (1.0, 0.0), (1.0, 0.5)],
                (sg, l) => vec![(sg.unwrap_or(0.0), l.unwrap_or(0.0))],
            };
            let grid = GridSpec::new(n, box_length, spec.dim_state())?;
            let mut times = vec![0.0];
            times.extend(geometric_times(0.5, 1000.0, 30)?.into_iter().skip(1));
            let seeds: Vec<u64> = (0..seeds).collect();
            let mut reports = Vec::new();
            for &id in &lemmas {
                for &(sigma, ell) in &tuples {
                    let params = LemmaParams { sigma, ell, s, r: r.into() };
                    let rep = lemma_seed_sweep(&spec, &grid, id, params, &seeds, &times, &DyadicCutoffs::default())?;
                    println!(
                        "{:?} sigma={sigma} ell={ell}: spread {:.3}{}  {}",
                        id,
                        rep.spread,
                        rep.comparison_ratio_max.map_or(String::new(), |c| format!("  comparison {c:.3}")),
                        verdict(rep.pass)
                    );
                    reports.push(rep);
                }
            }
            let path = write_json(out, "lemma_bounds.json", &reports)?;
            println!("wrote {}", path.display());
            Ok(reports.iter().all(|r| r.pass))
        }
        Command::Audit { kind, model, n, box_length, amplitudes, t_final, dt, seeds } => {
            let spec = load_model(&model)?;
            let grid = GridSpec::new(n, box_length, spec.dim_state())?;
            match kind {
                AuditKind::Prop41 => {
                    let exp = DecayExperiment {
                        grid,
                        data: InitialDataSpec::new(DataKind::BesovTail { s: 0.5 }, amplitudes[0], 0),
                        sample_times: geometric_times(1.0, t_final, 30)?,
                        tracked_norms: vec![],
                        fit_window: (1.0, t_final),
                        linear_only: false,
                        dt,
                        tolerance: 0.05,
                        system: spec,
                    };
                    let audit = proposition_4_1_audit(&exp, &amplitudes)?;
                    for r in &audit.runs {
                        println!("  amplitude {:.3e}: sup E1 / E0 = {:.4e}", r.amplitude, r.ratio);
                    }
                    println!("{}: spread {:.3}  {}", audit.system, audit.spread, verdict(audit.pass));
                    let path = write_json(out, "audit_prop41.json", &audit)?;
                    println!("wrote {}", path.display());
                    Ok(audit.pass)
                }
                AuditKind::Energy => {
                    let data = InitialDataSpec::new(DataKind::GaussianL1, amplitudes[0], 0);
                    let seeds: Vec<u64> = (0..seeds).collect();
                    let audit = energy_inequality_audit(&spec, &grid, &data, &seeds, &amplitudes, t_final, dt)?;
                    let lo = audit.runs.iter().map(|r| r.c0).fold(f64::INFINITY, f64::min);
                    let hi = audit.runs.iter().map(|r| r.c0).fold(0.0, f64::max);
                    println!(
                        "{}: C0 in [{lo:.3}, {hi:.3}], spread {:.3}  {}",
                        audit.system,
                        audit.c0_spread,
                        verdict(audit.pass)
                    );
                    let path = write_json(out, "audit_energy.json", &audit)?;
                    println!("wrote {}", path.display());
                    Ok(audit.pass)
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
