use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;

use gzfdp_core::channel::{
    format_matrix, gen_fdmimo_los, gen_iid_gaussian, gen_kronecker_rayleigh, parse_channel_fixture,
    ChannelMatrix, CorrelationSpec, FdMimoGeometry,
};
use gzfdp_core::gram::{build_gram, GramGeometry};
use gzfdp_core::linalg::CONDITION_LIMIT;
use gzfdp_core::ordering::{all_permutations, apply_ordering, order_random, BRUTE_FORCE_MAX_USERS};
use gzfdp_core::precoder::{build, Objective, PrecoderFamily, WaterLevel};
use gzfdp_core::sim::{
    choose_ordering, db_to_linear, emit_report, evaluate_precoder, hash_text, load_spec,
    objective_under, run_experiment, ChannelSpec, ExperimentSpec, FamilyKind, OrderingChoice,
    PrecoderSpec, SweepSpec,
};
use gzfdp_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "gzfdp",
    version,
    about = "GZF-DP precoding for MISO broadcast channels"
)]
struct Cli {
    /// Seed for every random draw. Falls back to GZFDP_SEED, then to fresh entropy.
    #[arg(long, global = true, env = "GZFDP_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build one precoder for a channel fixture and print the per-user rates.
    Rates(RatesArgs),
    /// Compare user-ordering methods on a channel fixture.
    Order(OrderArgs),
    /// Run an experiment spec and write the rate report as CSV.
    Sweep(SweepArgs),
    /// Evaluate the FD-MIMO line-of-sight scenario.
    Fdmimo(FdmimoArgs),
    /// Generate or normalize channel fixtures.
    #[command(subcommand)]
    Fixture(FixtureCommand),
}

#[derive(Args, Debug)]
struct PowerArgs {
    /// Total transmit power in dB.
    #[arg(long = "pt-db", allow_hyphen_values = true)]
    pt_db: f64,
    /// Noise power (linear).
    #[arg(long, default_value_t = 1.0)]
    n0: f64,
    /// Largest accepted condition number of HH^H.
    #[arg(long, default_value_t = CONDITION_LIMIT)]
    condition_limit: f64,
}

#[derive(Args, Debug)]
struct PrecoderArgs {
    #[arg(long, default_value = "gzfdp", value_parser = parse_family)]
    family: FamilyKind,
    /// Interference depth for gzfdp.
    #[arg(long)]
    nu: Option<usize>,
    /// Group size for ugdp.
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Sum)]
    objective: ObjectiveArg,
}

#[derive(Args, Debug)]
struct RatesArgs {
    #[arg(long)]
    channel: PathBuf,
    #[command(flatten)]
    precoder: PrecoderArgs,
    #[command(flatten)]
    power: PowerArgs,
    /// identity, alg1, alg2, brute or random:k (one random ordering).
    #[arg(long, default_value = "identity", value_parser = parse_ordering)]
    ordering: OrderingChoice,
    /// Prefix for dumping F and P as `<prefix>.F.txt` and `<prefix>.P.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OrderArgs {
    #[arg(long)]
    channel: PathBuf,
    #[command(flatten)]
    precoder: PrecoderArgs,
    #[command(flatten)]
    power: PowerArgs,
    /// Comma-separated methods: identity, alg1, alg2, brute, average, random:k.
    #[arg(
        long = "ordering",
        value_delimiter = ',',
        default_value = "identity,alg1,alg2,brute",
        value_parser = parse_ordering
    )]
    methods: Vec<OrderingChoice>,
    /// Also print the objective under every permutation.
    #[arg(long)]
    enumerate: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Experiment spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the spec's trial count.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args, Debug)]
struct FdmimoArgs {
    #[arg(long = "pt-db", default_value_t = 90.0, allow_hyphen_values = true)]
    pt_db: f64,
    #[arg(long, default_value_t = 1.0)]
    n0: f64,
    #[arg(long, default_value_t = 8)]
    users: usize,
    /// Largest accepted condition number of HH^H. The scenario sits near 2e12.
    #[arg(long, default_value_t = 1e14)]
    condition_limit: f64,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum FixtureCommand {
    /// Draw a channel and write it as a fixture.
    Write(FixtureWriteArgs),
    /// Parse a fixture and print it in canonical form.
    Read {
        #[arg(long)]
        channel: PathBuf,
    },
}

#[derive(Args, Debug)]
struct FixtureWriteArgs {
    #[arg(long, value_enum, default_value_t = ChannelKind::Iid)]
    kind: ChannelKind,
    #[arg(long, default_value_t = 4)]
    users: usize,
    #[arg(long, default_value_t = 4)]
    antennas: usize,
    #[arg(long, default_value_t = 0.0)]
    beta_t: f64,
    #[arg(long, default_value_t = 0.0)]
    beta_r: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ChannelKind {
    Iid,
    Kronecker,
    Fdmimo,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ObjectiveArg {
    #[value(alias = "sumrate")]
    Sum,
    #[value(alias = "minrate")]
    Min,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Sum => Objective::Sum,
            ObjectiveArg::Min => Objective::Min,
        }
    }
}

fn parse_family(s: &str) -> Result<FamilyKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_ordering(s: &str) -> Result<OrderingChoice, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 4,
        e if e.is_numeric() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed.unwrap_or_else(rand::random);
    match run(&cli, seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli, seed: u64) -> Result<(), Error> {
    match &cli.command {
        Command::Rates(args) => cmd_rates(args, seed),
        Command::Order(args) => cmd_order(args, seed),
        Command::Sweep(args) => cmd_sweep(args, cli.seed, seed),
        Command::Fdmimo(args) => cmd_fdmimo(args, seed),
        Command::Fixture(FixtureCommand::Write(args)) => cmd_fixture_write(args, seed),
        Command::Fixture(FixtureCommand::Read { channel }) => {
            let text = read_text(channel);
            announce(seed, &hash_text(text.as_deref().unwrap_or_default()));
            print!(
                "{}",
                format_matrix(parse_channel_fixture(&text?)?.entries())
            );
            Ok(())
        }
    }
}

fn announce(seed: u64, hash: &str) {
    eprintln!("seed={seed}");
    eprintln!("spec_sha256={hash}");
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Linear power budget from dB, rejecting values that do not give a positive budget.
fn budget(pt_db: f64, n0: f64) -> Result<f64, Error> {
    if !pt_db.is_finite() {
        return Err(Error::Parameter(format!("--pt-db {pt_db} must be finite")));
    }
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(Error::Parameter(format!("--n0 {n0} must be positive")));
    }
    Ok(db_to_linear(pt_db))
}

fn one_based(perm: &[usize]) -> String {
    perm.iter()
        .map(|u| (u + 1).to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Announces the seed and a hash over arguments and fixture contents, then loads the
/// channel and its Gram geometry.
fn load(
    path: &Path,
    args: &impl std::fmt::Debug,
    seed: u64,
    power: &PowerArgs,
) -> Result<(ChannelMatrix, GramGeometry), Error> {
    let text = read_text(path);
    let contents = text.as_deref().unwrap_or_default();
    announce(seed, &hash_text(&format!("{args:?}\n{contents}")));
    let h = parse_channel_fixture(&text?)?.with_condition_limit(power.condition_limit)?;
    let gram = build_gram(&h, power.n0)?;
    Ok((h, gram))
}

fn cmd_rates(args: &RatesArgs, seed: u64) -> Result<(), Error> {
    let (h, gram) = load(&args.channel, args, seed, &args.power)?;
    let power_budget = budget(args.power.pt_db, args.power.n0)?;
    let family = args
        .precoder
        .family
        .resolve(args.precoder.nu, args.precoder.group_size)?;
    let objective: Objective = args.precoder.objective.into();

    let ordering = match args.ordering {
        OrderingChoice::RandomAvg(_) => {
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            order_random(h.n_users(), seed, &mut rng)
        }
        OrderingChoice::AllAverage => {
            return Err(Error::Parameter(
                "rates needs a single ordering; use the order command for averages".into(),
            ))
        }
        choice => choose_ordering(
            &h,
            &gram,
            family,
            objective,
            choice,
            power_budget,
            args.power.n0,
        )?,
    };
    let h = apply_ordering(&h, &ordering)?;
    let gram = gram.permuted(&ordering.perm)?;
    let sol = build(&h, &gram, family, objective, power_budget, args.power.n0)?;
    eprintln!(
        "precoder {family}, objective {objective}, ordering {} [{}]",
        args.ordering,
        one_based(&ordering.perm)
    );

    println!("position user rate_bits diag_gain");
    for (pos, (&user, rate)) in ordering.perm.iter().zip(&sol.user_rates).enumerate() {
        println!(
            "{:>8} {:>4} {:.6} {:.6}",
            pos + 1,
            user + 1,
            rate,
            sol.diag_gains[pos]
        );
    }
    println!("sum_rate {:.6}", sol.sum_rate);
    println!("min_rate {:.6}", sol.min_rate);
    match &sol.water_level {
        WaterLevel::Common(level) => println!("water_level {level:.6}"),
        WaterLevel::PerUser(levels) => {
            let text: Vec<String> = levels.iter().map(|l| format!("{l:.6}")).collect();
            println!("water_levels {}", text.join(" "));
        }
    }
    println!(
        "power_residual {:.3e}",
        (sol.total_power - power_budget).abs() / power_budget
    );

    if let Some(prefix) = &args.out {
        let with_suffix = |suffix: &str| {
            let mut name = prefix.as_os_str().to_owned();
            name.push(suffix);
            PathBuf::from(name)
        };
        write_text(&with_suffix(".F.txt"), &format_matrix(&sol.effective))?;
        write_text(&with_suffix(".P.txt"), &format_matrix(&sol.precoder))?;
    }
    Ok(())
}

fn cmd_order(args: &OrderArgs, seed: u64) -> Result<(), Error> {
    let (h, gram) = load(&args.channel, args, seed, &args.power)?;
    let power_budget = budget(args.power.pt_db, args.power.n0)?;
    let n = h.n_users();
    let nu = args.precoder.nu.unwrap_or(1.min(n - 1));
    let family = args
        .precoder
        .family
        .resolve(Some(nu), args.precoder.group_size)?;
    let objective: Objective = args.precoder.objective.into();
    let n0 = args.power.n0;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);

    println!("method objective_bits ordering");
    for &method in &args.methods {
        match (method, objective) {
            (OrderingChoice::Alg2, Objective::Sum) => {
                eprintln!("warning: alg2 targets the minimum rate; running it for the sum rate")
            }
            (OrderingChoice::Alg1, Objective::Min) => {
                eprintln!("warning: alg1 targets the sum rate; running it for the minimum rate")
            }
            _ => {}
        }
        let exhaustive = matches!(
            method,
            OrderingChoice::BruteForce | OrderingChoice::AllAverage
        );
        if exhaustive && n > BRUTE_FORCE_MAX_USERS {
            eprintln!("skipping {method}: needs N <= {BRUTE_FORCE_MAX_USERS}, channel has {n}");
            continue;
        }
        match method {
            OrderingChoice::RandomAvg(_) | OrderingChoice::AllAverage => {
                let value = evaluate_precoder(
                    &h,
                    &gram,
                    family,
                    objective,
                    method,
                    power_budget,
                    n0,
                    &mut rng,
                )?;
                println!("{method} {value:.6} -");
            }
            _ => {
                let ord = choose_ordering(&h, &gram, family, objective, method, power_budget, n0)?;
                let value =
                    objective_under(&h, &gram, family, objective, &ord.perm, power_budget, n0)?;
                if let Some(note) = &ord.note {
                    eprintln!("{method}: {note}");
                }
                println!("{method} {value:.6} {}", one_based(&ord.perm));
            }
        }
    }

    if args.enumerate {
        if n > BRUTE_FORCE_MAX_USERS {
            return Err(Error::Capability(format!(
                "enumerating {n}! orderings is too costly (limit N <= {BRUTE_FORCE_MAX_USERS})"
            )));
        }
        println!();
        println!("ordering objective_bits");
        for perm in all_permutations(n) {
            let value = objective_under(&h, &gram, family, objective, &perm, power_budget, n0)?;
            println!("{} {value:.6}", one_based(&perm));
        }
    }
    Ok(())
}

/// The seed comes from `--seed` or `GZFDP_SEED`, then the spec, then `fallback_seed`.
fn cmd_sweep(args: &SweepArgs, cli_seed: Option<u64>, fallback_seed: u64) -> Result<(), Error> {
    let mut spec = match load_spec(&args.spec) {
        Ok(spec) => spec,
        Err(e) => {
            announce(fallback_seed, &hash_text(""));
            return Err(e);
        }
    };
    if let Some(seed) = cli_seed {
        spec.seed = Some(seed);
    }
    spec.seed.get_or_insert(fallback_seed);
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    run_and_emit(&spec, args.out.as_deref())
}

fn run_and_emit(spec: &ExperimentSpec, out: Option<&Path>) -> Result<(), Error> {
    announce(spec.seed.unwrap_or_default(), &spec.hash());
    let report = run_experiment(spec)?;
    if report.metadata.failed_trials > 0 {
        eprintln!(
            "excluded {} rank-deficient trials",
            report.metadata.failed_trials
        );
    }
    match out {
        Some(path) => emit_report(&report, path),
        None => {
            print!("{}", report.to_csv());
            Ok(())
        }
    }
}

fn cmd_fdmimo(args: &FdmimoArgs, seed: u64) -> Result<(), Error> {
    if let Err(e) = budget(args.pt_db, args.n0) {
        announce(seed, &hash_text(&format!("{args:?}")));
        return Err(e);
    }
    let geometry = FdMimoGeometry {
        n_users: args.users,
        ..FdMimoGeometry::default()
    };
    let n = args.users;
    let mut families = vec![PrecoderFamily::Zf];
    for depth in [1, 3] {
        if depth < n {
            families.push(PrecoderFamily::GzfDp { depth });
        }
    }
    if n.is_multiple_of(4) {
        families.push(PrecoderFamily::UgDp { group_size: 4 });
    }
    families.push(PrecoderFamily::ZfDp);
    let spec = ExperimentSpec {
        name: "fdmimo".into(),
        trials: 1,
        seed: Some(seed),
        noise_power: args.n0,
        condition_limit: Some(args.condition_limit),
        channel: ChannelSpec::Fdmimo { geometry },
        sweep: SweepSpec::None {
            power_db: args.pt_db,
        },
        precoders: families
            .into_iter()
            .map(|f| PrecoderSpec::new(f, Objective::Sum, OrderingChoice::Identity))
            .collect(),
    };
    run_and_emit(&spec, args.out.as_deref())
}

fn cmd_fixture_write(args: &FixtureWriteArgs, seed: u64) -> Result<(), Error> {
    announce(seed, &hash_text(&format!("{args:?}")));
    let h = match args.kind {
        ChannelKind::Iid => gen_iid_gaussian(args.users, args.antennas, seed)?,
        ChannelKind::Kronecker => {
            let corr = CorrelationSpec {
                beta_t: args.beta_t,
                beta_r: args.beta_r,
            };
            gen_kronecker_rayleigh(args.users, args.antennas, corr, seed)?
        }
        ChannelKind::Fdmimo => gen_fdmimo_los(&FdMimoGeometry {
            n_users: args.users,
            ..FdMimoGeometry::default()
        })?,
    };
    h.write_fixture(&args.out)
}
