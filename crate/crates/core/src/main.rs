use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hris_core::harness::{run_sweep, write_csv, SweepVar};
use hris_core::hris_rx::BalsOptions;
use hris_core::identifiability::{
    bals_counting_bound, check_identifiability, feedback_bits, flops_estimate, Dims, IdentReport, Receiver, ReceiverPair,
};
use hris_core::scenario::{ScenarioConfig, Scheme};

#[derive(Parser)]
#[command(name = "hris-sim", version, about = "Channel and symbol estimation through a hybrid reflecting/sensing surface")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep over transmit power or power split, written as CSV.
    Sweep(SweepArgs),
    /// Identifiability and cost report for a receiver pair.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// Key-value scenario file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Receiver pair `<hris>-<bs>` with receivers bals, kronf, krf or h.
    #[arg(long, default_value = "bals-bals")]
    pair: String,
    #[arg(long, value_enum, default_value_t = SchemeArg::Tstc)]
    scheme: SchemeArg,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    sweep: SweepArg,
    /// Comma separated sweep values (dBm for pt, fraction for rho).
    #[arg(long, value_delimiter = ',', required = true)]
    points: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Tstc,
    Krstc,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Pt,
    Rho,
}

fn setup(common: &Common) -> hris_core::Result<(ScenarioConfig, ReceiverPair)> {
    let scheme = match common.scheme {
        SchemeArg::Tstc => Scheme::Tstc,
        SchemeArg::Krstc => Scheme::Krstc,
    };
    let cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    }
    .with_scheme(scheme);
    cfg.validate()?;
    let pair = ReceiverPair::parse(&common.pair, scheme)?;
    Ok((cfg, pair))
}

fn sweep(args: &SweepArgs) -> hris_core::Result<()> {
    let (cfg, pair) = setup(&args.common)?;
    let var = match args.sweep {
        SweepArg::Pt => SweepVar::Pt,
        SweepArg::Rho => SweepVar::Rho,
    };
    let records = run_sweep(&cfg, &pair, var, &args.points, args.trials, args.seed, &BalsOptions::default())?;
    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_csv(&records, &mut w)?;
            w.flush()?;
        }
        None => write_csv(&records, io::stdout().lock())?,
    }
    Ok(())
}

fn print_report(cfg: &ScenarioConfig, report: &IdentReport) -> hris_core::Result<()> {
    let d = Dims::from(cfg);
    println!("pair      {}", report.pair);
    println!("K         {}", report.k);
    println!("{:<8} {:<6} {:>8} {:>10} {:>14}", "receiver", "entity", "min_K", "satisfied", "flops");
    for row in &report.rows {
        let flops = flops_estimate(&d, row.receiver, row.entity, row.scheme, 1)?;
        let unit = if row.receiver == Receiver::Bals { "/iter" } else { "" };
        println!(
            "{:<8} {:<6} {:>8} {:>10} {:>14}",
            row.receiver.to_string(),
            row.entity.to_string(),
            row.min_k,
            if row.satisfied { "yes" } else { "no" },
            format!("{flops:.0}{unit}")
        );
        for c in &row.conditions {
            println!("  {:<22} K >= {}", c.matrix, c.min_k);
        }
        if row.receiver == Receiver::Bals {
            println!("  {:<22} K >= {}", "unique solution", bals_counting_bound(&d, row.entity, row.scheme));
        }
    }
    let scenario = report.pair.scenario();
    println!("feedback  {} bits (scenario {scenario})", feedback_bits(cfg, scenario, report.pair.scheme)?);
    println!("required  K >= {}", report.required_k);
    println!("status    {}", if report.satisfied { "identifiable" } else { "NOT identifiable" });
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Sweep(args) => sweep(args).map(|_| true),
        Command::Check(common) => setup(common).and_then(|(cfg, pair)| {
            let report = check_identifiability(&cfg, &pair)?;
            print_report(&cfg, &report)?;
            Ok(report.satisfied)
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
