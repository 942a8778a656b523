//! `bm`: command-line front end for simulation, sampling, and verification.
//!
//! Exit codes: 0 = pass, 1 = a check failed, 2 = usage or domain error.
//! A `--config` file of `key = value` lines supplies defaults for any flag
//! not given on the command line; flags always win. All numeric output is
//! printed with 17 significant digits so golden files stay meaningful.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use blocking_measures::ext_int::{ExtInt, Finite};
use blocking_measures::measures::{
    effective_c, sample_blocking, sample_sector, theta_sequence,
};
use blocking_measures::model::{builtin, BuiltinModel};
use blocking_measures::state::Configuration;
use blocking_measures::verify::{
    check_detailed_balance, check_gap_expansion, check_jacobi, check_sector_decomposition,
    check_sector_transport, check_shift_identity, check_stationarity_flux, check_stationary_solve,
    FiniteChain, IdentityReport,
};
use blocking_measures::{
    dynamics, standup, BuiltinParams, Error, MarginalLaw, ModelSpec, Result, SectorWeight,
};

#[derive(Parser)]
#[command(name = "bm", version, about = "Particle systems with product blocking measures")]
struct Cli {
    /// Key=value file supplying defaults for omitted flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the event-driven dynamics and report time-averaged occupations.
    Simulate(SimulateArgs),
    /// Check an identity; prints a JSON report and exits 0 iff it passes.
    Verify {
        #[command(subcommand)]
        check: VerifyCmd,
    },
    /// Draw exact samples or export measure tables.
    Sample {
        #[command(subcommand)]
        what: SampleCmd,
    },
}

/// Model selection shared by every model-bound subcommand.
#[derive(Args, Clone)]
struct ModelArgs {
    /// Builtin model: asep, k_exclusion, zrp_rate1, independent_walkers,
    /// q_zrp, are_you_alone, bricklayers.
    #[arg(long)]
    model: String,
    /// Asymmetry p in (1/2, 1].
    #[arg(long)]
    p: f64,
    /// Measure anchor c (rejected if the model forces a different value).
    #[arg(long)]
    c: Option<f64>,
    /// Maximal occupancy K (k_exclusion only).
    #[arg(long)]
    k: Option<i64>,
    /// Rate deformation parameter (q_zrp only).
    #[arg(long)]
    q_hat: Option<f64>,
    /// Crowding amplitude (are_you_alone only).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Crowding asymmetry (are_you_alone only).
    #[arg(long)]
    delta: Option<f64>,
    /// Growth-rate slope (bricklayers only).
    #[arg(long)]
    beta: Option<f64>,
    /// Left lattice end (integer or -inf).
    #[arg(long, allow_hyphen_values = true)]
    ell: Option<ExtInt>,
    /// Right lattice end (integer or inf).
    #[arg(long, allow_hyphen_values = true)]
    r: Option<ExtInt>,
}

impl ModelArgs {
    fn builtin_model(&self) -> Result<BuiltinModel> {
        let name = self.model.replace('-', "_");
        match name.as_str() {
            "asep" => Ok(BuiltinModel::Asep),
            "k_exclusion" => Ok(BuiltinModel::KExclusion),
            "zrp_rate1" => Ok(BuiltinModel::ZrpRate1),
            "independent_walkers" => Ok(BuiltinModel::IndependentWalkers),
            "q_zrp" => Ok(BuiltinModel::QZrp),
            "are_you_alone" => Ok(BuiltinModel::AreYouAlone),
            "bricklayers" => Ok(BuiltinModel::Bricklayers),
            other => Err(Error::UnknownModel(other.into())),
        }
    }

    fn params(&self) -> BuiltinParams {
        let mut params = BuiltinParams::new(self.p);
        params.c = self.c;
        params.k = self.k;
        params.q_hat = self.q_hat;
        params.epsilon = self.epsilon;
        params.delta = self.delta;
        params.beta = self.beta;
        params.ell = self.ell;
        params.r = self.r;
        params
    }

    /// Builds the spec on the model's default volume, or on the one implied
    /// by `--ell/--r`.
    fn spec(&self) -> Result<ModelSpec> {
        builtin(self.builtin_model()?, self.params())
    }

    /// Builds the spec on a finite lattice of `sites` sites: symmetric
    /// around the origin for exclusion-type and bricklayers models,
    /// right-anchored at 0 for the reservoir-driven zero-range family.
    fn spec_on_sites(&self, sites: i64) -> Result<ModelSpec> {
        if sites < 1 {
            return Err(Error::Parameter(format!("--sites must be >= 1, got {sites}")));
        }
        let model = self.builtin_model()?;
        let mut params = self.params();
        if params.ell.is_none() && params.r.is_none() {
            let r = match model {
                BuiltinModel::Asep | BuiltinModel::KExclusion | BuiltinModel::Bricklayers => {
                    (sites - 1) / 2
                }
                _ => 0,
            };
            params.ell = Some(Finite(r - sites + 1));
            params.r = Some(Finite(r));
        }
        builtin(model, params)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Start from the ground state of sector n (full-line exclusion only);
    /// default is the plain ground state.
    #[arg(long, allow_hyphen_values = true)]
    sector: Option<i64>,
    /// Simulated time horizon.
    #[arg(long)]
    t_max: f64,
    /// Optional hard cap on the number of events.
    #[arg(long)]
    events: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra allocated sites past the initial window at infinite ends.
    #[arg(long, default_value_t = 64)]
    margin: i64,
    /// Sites summarized in the CSV, as lo..hi; defaults to the lattice
    /// (finite volumes) or -10..10 (full line).
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    sites: Option<(i64, i64)>,
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Pairwise reversibility of an exhaustively enumerated finite chain.
    DetailedBalance(ChainArgs),
    /// Zero net probability flux through every interior state.
    Stationarity(ChainArgs),
    /// Linear stationary solve against the product-measure prediction.
    StationarySolve(ChainArgs),
    /// Shift covariance of the blocking density on random configurations.
    ShiftIdentity {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Conserved-quantity law of the exclusion blocking measure.
    Decomposition {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        c: f64,
        /// Deviations confined to [-radius, radius].
        #[arg(long, default_value_t = 6)]
        radius: i64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// The triple product identity at one (x, y) point.
    Jacobi {
        #[arg(long)]
        x: f64,
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Stack-measure transport through the lay-down map at level n.
    Transport {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        c: f64,
        /// Stack occupancies z_0,z_{-1},... (comma separated).
        #[arg(long, value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
        z: Vec<i64>,
        /// Transport level; defaults to the particle count of z.
        #[arg(long, allow_hyphen_values = true)]
        n: Option<i64>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Site-by-site product expansion of the transported measure.
    GapExpansion {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        c: f64,
        #[arg(long, value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
        z: Vec<i64>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

/// Flags for checks that enumerate a finite chain.
#[derive(Args)]
struct ChainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of lattice sites (ignored when --ell/--r are given).
    #[arg(long)]
    sites: i64,
    /// Symmetric occupancy truncation for infinite alphabets.
    #[arg(long, default_value_t = 12)]
    cap: i64,
    /// Lower truncation (overrides --cap downward).
    #[arg(long, allow_hyphen_values = true)]
    cap_lo: Option<i64>,
    /// Upper truncation (overrides --cap upward).
    #[arg(long)]
    cap_hi: Option<i64>,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

impl ChainArgs {
    fn chain(&self) -> Result<FiniteChain<f64>> {
        let spec = self.model.spec_on_sites(self.sites)?;
        FiniteChain::with_caps(
            &spec,
            self.cap_lo.unwrap_or(-self.cap),
            self.cap_hi.unwrap_or(self.cap),
        )
    }
}

#[derive(Subcommand)]
enum SampleCmd {
    /// CSV of exact single-site marginals over a site range.
    Marginals {
        #[command(flatten)]
        model: ModelArgs,
        /// Site range lo..hi.
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        sites: (i64, i64),
        /// Occupancy columns are clamped to [-cap, cap].
        #[arg(long, default_value_t = 12)]
        cap: i64,
    },
    /// Exact draws from the blocking measure, one per line.
    Blocking {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Total-variation budget for the finite sampling window.
        #[arg(long, default_value_t = 1e-10)]
        tail_eps: f64,
    },
    /// Exact draws conditioned on the conserved quantity, one per line.
    Sector {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        n: i64,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        max_tries: u64,
    },
    /// CSV of the discrete Gaussian sector weights over a level range.
    Weights {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        c: f64,
        /// Level range lo..hi.
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        n: (i64, i64),
    },
}

fn parse_range(s: &str) -> std::result::Result<(i64, i64), String> {
    let (lo, hi) = s.split_once("..").ok_or_else(|| format!("expected lo..hi, got {s:?}"))?;
    let lo: i64 = lo.trim().parse().map_err(|e| format!("bad range start {lo:?}: {e}"))?;
    let hi: i64 = hi.trim().parse().map_err(|e| format!("bad range end {hi:?}: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

/// Injects `key = value` lines from a `--config` file as trailing `--key
/// value` arguments, skipping keys already present on the command line.
fn merged_args() -> std::result::Result<Vec<String>, String> {
    let mut args: Vec<String> = std::env::args().collect();
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(v) = a.strip_prefix("--config=") {
            path = Some(v.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("--config {path}: {e}"))?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{}: expected key = value", lineno + 1))?;
        let flag = format!("--{}", key.trim());
        let given = args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if !given {
            args.push(flag);
            args.push(value.trim().to_string());
        }
    }
    Ok(args)
}

fn print_report(report: &IdentityReport) -> Result<bool> {
    println!("{}", serde_json::to_string(report).expect("report serializes"));
    Ok(report.pass)
}

fn stack_config(z: &[i64]) -> Result<Configuration> {
    let (lattice, occupancy) = standup::stack_shape();
    let mut stored = z.to_vec();
    stored.reverse();
    let window_lo = 1 - stored.len() as i64;
    Configuration::new(lattice, occupancy, window_lo, stored, 0, 0)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<bool> {
    let spec = args.model.spec()?;
    let c = effective_c(&spec, args.model.c)?;
    let mut initial = Configuration::ground(spec.lattice, spec.occupancy);
    if let Some(n) = args.sector {
        initial = initial.shift(-n)?;
    }
    let (site_lo, site_hi) = match args.sites {
        Some(range) => range,
        None => match (spec.lattice.ell, spec.lattice.r) {
            (Finite(ell), Finite(r)) => (ell, r),
            (Finite(ell), _) => (ell, ell + 20),
            (_, Finite(r)) => (r - 20, r),
            _ => (-10, 10),
        },
    };
    if !(args.t_max > 0.0) {
        return Err(Error::Parameter(format!("--t-max must be positive, got {}", args.t_max)));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let mut sim = dynamics::Simulation::new(&spec, initial, args.margin)?;
    let width = (site_hi - site_lo + 1) as usize;
    let mut acc = vec![0.0f64; width];
    let event_cap = args.events.unwrap_or(u64::MAX);
    loop {
        let t0 = sim.time();
        if t0 >= args.t_max || sim.events() >= event_cap {
            break;
        }
        let snapshot: Vec<i64> = (site_lo..=site_hi).map(|i| sim.config().get(i)).collect();
        let t1 = match sim.step(&mut rng) {
            Ok(event) => event.time.min(args.t_max),
            Err(Error::Structure(_)) => args.t_max, // absorbing state
            Err(e) => return Err(e),
        };
        for (a, &v) in acc.iter_mut().zip(&snapshot) {
            *a += (t1 - t0) * v as f64;
        }
        if t1 >= args.t_max {
            break;
        }
    }
    let elapsed = sim.time().min(args.t_max).max(f64::MIN_POSITIVE);

    println!("site,time_average");
    for (k, a) in acc.iter().enumerate() {
        println!("{},{:.16e}", site_lo + k as i64, a / elapsed);
    }

    let mut hasher = DefaultHasher::new();
    format!(
        "{} p={:.16e} c={:.16e} lattice=[{},{}] occupancy=[{},{}]",
        spec.name,
        args.model.p,
        c,
        spec.lattice.ell,
        spec.lattice.r,
        spec.occupancy.omega_min,
        spec.occupancy.omega_max
    )
    .hash(&mut hasher);
    let metadata = serde_json::json!({
        "model": spec.name,
        "p": args.model.p,
        "c": c,
        "seed": args.seed,
        "events": sim.events(),
        "t_final": sim.time().min(args.t_max),
        "audit_failures": sim.audit_failures(),
        "spec_hash": format!("{:016x}", hasher.finish()),
    });
    eprintln!("{metadata}");
    Ok(true)
}

fn cmd_verify(check: &VerifyCmd) -> Result<bool> {
    let report = match check {
        VerifyCmd::DetailedBalance(args) => check_detailed_balance(&args.chain()?, args.tol)?,
        VerifyCmd::Stationarity(args) => check_stationarity_flux(&args.chain()?, args.tol)?,
        VerifyCmd::StationarySolve(args) => check_stationary_solve(&args.chain()?, args.tol)?,
        VerifyCmd::ShiftIdentity { model, trials, seed, tol } => {
            check_shift_identity(&model.spec()?, model.c, *trials, *seed, *tol)?
        }
        VerifyCmd::Decomposition { p, c, radius, tol } => {
            check_sector_decomposition(*p, *c, *radius, *tol)?
        }
        VerifyCmd::Jacobi { x, y, tol } => check_jacobi(*x, *y, *tol)?,
        VerifyCmd::Transport { p, c, z, n, tol } => {
            let stack = stack_config(z)?;
            let n = n.unwrap_or_else(|| stack.count_particles().expect_finite("N_p"));
            check_sector_transport(*p, *c, &stack, n, *tol)?
        }
        VerifyCmd::GapExpansion { p, c, z, tol } => {
            check_gap_expansion(*p, *c, &stack_config(z)?, *tol)?
        }
    };
    print_report(&report)
}

fn cmd_sample(what: &SampleCmd) -> Result<bool> {
    match what {
        SampleCmd::Marginals { model, sites, cap } => {
            let spec = model.spec()?;
            let c = effective_c(&spec, model.c)?;
            let lo = spec.occupancy.omega_min.clamp_to(-cap, *cap);
            let hi = spec.occupancy.omega_max.clamp_to(-cap, *cap);
            let header: Vec<String> =
                (lo..=hi).map(|v| format!("pmf_{v}")).collect();
            println!("site,theta,mean,{}", header.join(","));
            for i in sites.0..=sites.1 {
                let theta = theta_sequence(&spec, c, i)?;
                let law = MarginalLaw::new(&spec, theta)?;
                let mut row = format!("{i},{theta:.16e},{:.16e}", law.mean());
                for v in lo..=hi {
                    row.push_str(&format!(",{:.16e}", law.pmf(v)?));
                }
                println!("{row}");
            }
        }
        SampleCmd::Blocking { model, count, seed, tail_eps } => {
            let spec = model.spec()?;
            let c = effective_c(&spec, model.c)?;
            let mut rng = ChaCha12Rng::seed_from_u64(*seed);
            for _ in 0..*count {
                println!("{}", sample_blocking(&spec, c, *tail_eps, &mut rng)?.to_text());
            }
        }
        SampleCmd::Sector { model, n, count, seed, max_tries } => {
            let spec = model.spec()?;
            let c = effective_c(&spec, model.c)?;
            let mut rng = ChaCha12Rng::seed_from_u64(*seed);
            for _ in 0..*count {
                println!("{}", sample_sector(&spec, c, *n, &mut rng, *max_tries)?.to_text());
            }
        }
        SampleCmd::Weights { p, c, n } => {
            let sector = SectorWeight::new(*p, *c)?;
            println!("n,weight");
            for level in n.0..=n.1 {
                println!("{level},{:.16e}", sector.weight(level));
            }
        }
    }
    Ok(true)
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify { check } => cmd_verify(check),
        Command::Sample { what } => cmd_sample(what),
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("BM_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("bm: BM_THREADS must be a positive integer, got {threads:?}");
                return ExitCode::from(2);
            }
        }
    }
    let args = match merged_args() {
        Ok(args) => args,
        Err(message) => {
            eprintln!("bm: {message}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 2) as u8);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("bm: {e}");
            ExitCode::from(2)
        }
    }
}
