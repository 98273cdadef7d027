use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fairscore::protocol::{
    join_trials, read_protocol, read_scores, ClassLabel, ColumnLayout, GroupLabel, JoinOptions,
    Orientation, Polarity,
};
use fairscore::report::{self, render_toml, ReportFormat, RunConfig, SystemSpec};
use fairscore::scoring::{compute_eer, render_det_csv, DetCurve};
use fairscore::simgen::{generate, SimConfig};
use fairscore::stats::HolmFamily;

const OUT_DIR_ENV: &str = "FAIRSCORE_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "fairscore-report";

#[derive(Parser)]
#[command(name = "fairscore", version, about = "Gender-fairness evaluation of spoofing-detection scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full evaluation and write the report tables.
    Eval(EvalArgs),
    /// Write a synthetic dev/eval fixture plus a matching run config.
    Simulate(SimulateArgs),
    /// Export a DET curve as CSV.
    Det(DetArgs),
    /// Parse and join input files and print their counts.
    Check(CheckArgs),
}

#[derive(Args)]
struct Orient {
    /// Score direction of the input files.
    #[arg(long)]
    polarity: Option<Polarity>,
    /// Class treated as Y=1.
    #[arg(long)]
    positive_class: Option<ClassLabel>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    orient: Orient,
    #[arg(long)]
    alpha: Option<f64>,
    /// fpr-only or tpr-fpr-mean
    #[arg(long)]
    eo_variant: Option<fairscore::fairness::EoVariant>,
    /// count-ratio or rate-ratio
    #[arg(long)]
    te_variant: Option<fairscore::fairness::TeVariant>,
    /// per-run or per-metric
    #[arg(long)]
    holm_family: Option<HolmFamily>,
    /// markdown, csv or json; repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',')]
    format: Vec<ReportFormat>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    allow_orphans: bool,
    /// Record the wall-clock time in the report header.
    #[arg(long)]
    timestamp: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Eval trials per group and class.
    #[arg(long, default_value_t = 10_000)]
    count: u64,
    /// Dev trials per group and class.
    #[arg(long, default_value_t = 2_000)]
    dev_count: u64,
    /// Distance between bonafide and spoof means, in standard deviations.
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    /// Added to the mean of female spoof scores, in standard deviations.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    female_spoof_shift: f64,
    #[arg(long, default_value_t = 1)]
    systems: u32,
}

#[derive(Args)]
struct DetArgs {
    #[arg(long)]
    protocol: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    #[command(flatten)]
    orient: Orient,
    /// Restrict to one group.
    #[arg(long)]
    group: Option<GroupLabel>,
    /// Take the column layout from a run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    allow_orphans: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    protocol: Option<PathBuf>,
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Check every file of a run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    orient: Orient,
    #[arg(long)]
    allow_orphans: bool,
}

fn orientation(base: Orientation, o: &Orient) -> Orientation {
    Orientation::new(
        o.polarity.unwrap_or(base.polarity),
        o.positive_class.unwrap_or(base.positive_class),
    )
}

fn absolute(path: &Path) -> anyhow::Result<PathBuf> {
    Ok(if path.is_absolute() {
        path.to_path_buf()
    } else {
        std::env::current_dir()?.join(path)
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn unix_timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    format!("unix:{secs}")
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    config.orientation = orientation(config.orientation, &args.orient);
    if let Some(a) = args.alpha {
        config.significance.alpha = a;
    }
    if let Some(v) = args.eo_variant {
        config.variants.eo = v;
    }
    if let Some(v) = args.te_variant {
        config.variants.te = v;
    }
    if let Some(f) = args.holm_family {
        config.significance.family = f;
    }
    if !args.format.is_empty() {
        config.formats = args.format.clone();
        config.formats.sort();
        config.formats.dedup();
    }
    config.allow_orphans |= args.allow_orphans;
    config.validate()?;

    let out_dir = match (&args.out_dir, config.output_dir()) {
        (Some(flag), _) => flag.clone(),
        (None, Some(dir)) => dir,
        (None, None) => std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
    };

    let mut bundle = report::run(&config)?;
    if args.timestamp {
        bundle.provenance.timestamp = Some(unix_timestamp());
    }
    for s in &bundle.systems {
        if s.dev_orphans + s.eval_orphans > 0 {
            eprintln!(
                "warning: system {:?}: ignored {} dev and {} eval scores without a trial",
                s.name, s.dev_orphans, s.eval_orphans
            );
        }
    }

    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    for &format in &config.formats {
        for (name, bytes) in report::render(&bundle, format) {
            let path = out_dir.join(name);
            write_file(&path, &bytes)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    if args.systems == 0 {
        bail!("--systems must be at least 1");
    }
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let female = GroupLabel::female();
    let mut specs = Vec::new();
    for i in 0..args.systems {
        let name = format!("sys{}", i + 1);
        let mut files = Vec::new();
        for (split, count, prefix) in [("dev", args.dev_count, "D"), ("eval", args.count, "E")] {
            let seed = args.seed ^ (u64::from(i) << 32) ^ u64::from(split == "eval");
            let config = SimConfig::symmetric(count, args.separation, seed)
                .with_prefix(prefix)
                .shift_mean(&female, ClassLabel::Spoof, args.female_spoof_shift);
            let g = generate(&config)?;
            let protocol = format!("{split}_protocol.txt");
            if i == 0 {
                write_file(&args.out_dir.join(&protocol), g.protocol.as_bytes())?;
            }
            let scores = format!("{name}_{split}_scores.txt");
            write_file(&args.out_dir.join(&scores), g.scores.as_bytes())?;
            write_file(
                &args.out_dir.join(format!("{name}_{split}_manifest.txt")),
                g.manifest.render().as_bytes(),
            )?;
            files.push((PathBuf::from(protocol), PathBuf::from(scores)));
        }
        let [(dev_protocol, dev_scores), (eval_protocol, eval_scores)]: [_; 2] =
            files.try_into().expect("two splits");
        specs.push(SystemSpec {
            name,
            dev_protocol,
            dev_scores,
            eval_protocol,
            eval_scores,
        });
    }

    let run = RunConfig::new(specs, &args.out_dir);
    let path = args.out_dir.join("run.toml");
    write_file(&path, render_toml(&run).as_bytes())?;
    println!("{}", path.display());
    Ok(())
}

fn layout_from(config: Option<&Path>) -> anyhow::Result<(ColumnLayout, Orientation)> {
    Ok(match config {
        Some(p) => {
            let c = RunConfig::load(p)?;
            (c.layout, c.orientation)
        }
        None => (ColumnLayout::default(), Orientation::default()),
    })
}

fn det(args: DetArgs) -> anyhow::Result<()> {
    let (layout, base) = layout_from(args.config.as_deref())?;
    let o = orientation(base, &args.orient);
    let joined = join_trials(
        read_protocol(&args.protocol, &layout)?,
        read_scores(&args.scores)?,
        o,
        JoinOptions {
            allow_orphans: args.allow_orphans,
        },
    )?;
    let pairs = joined
        .set
        .trials()
        .iter()
        .filter(|t| args.group.as_ref().is_none_or(|g| &t.trial.group == g))
        .map(|t| (o.orient(t.score), o.is_positive(t.trial.label)))
        .collect();
    let curve = DetCurve::from_oriented(pairs, o.positive_class)?;
    let csv = render_det_csv(&curve);
    match &args.out {
        Some(path) => write_file(path, csv.as_bytes())?,
        None => std::io::stdout().lock().write_all(csv.as_bytes())?,
    }
    let eer = compute_eer(&curve);
    eprintln!("points: {}  eer: {:.4}%", curve.len(), eer.eer * 100.0);
    Ok(())
}

fn print_summary(label: &str, summary: &fairscore::protocol::SetSummary) {
    println!("{label}: {} trials", summary.n_total);
    for (class, n) in [
        (ClassLabel::Bonafide, summary.per_class.bonafide),
        (ClassLabel::Spoof, summary.per_class.spoof),
    ] {
        println!("  {class}: {n}");
    }
    for (g, c) in &summary.per_group {
        println!("  group {g}: {} (bonafide {}, spoof {})", c.total(), c.bonafide, c.spoof);
    }
}

fn check_pair(
    protocol: &Path,
    scores: &Path,
    layout: &ColumnLayout,
    o: Orientation,
    allow_orphans: bool,
) -> anyhow::Result<()> {
    let joined = join_trials(
        read_protocol(protocol, layout)?,
        read_scores(scores)?,
        o,
        JoinOptions { allow_orphans },
    )?;
    print_summary(&format!("{} + {}", protocol.display(), scores.display()), &joined.set.summary());
    if !joined.orphans.is_empty() {
        eprintln!("warning: {} scores without a trial", joined.orphans.len());
    }
    Ok(())
}

fn check(args: CheckArgs) -> anyhow::Result<()> {
    let (layout, base) = layout_from(args.config.as_deref())?;
    let o = orientation(base, &args.orient);
    if let Some(path) = &args.config {
        let config = RunConfig::load(path)?;
        for s in &config.systems {
            println!("system {}", s.name);
            for (p, sc) in [(&s.dev_protocol, &s.dev_scores), (&s.eval_protocol, &s.eval_scores)] {
                check_pair(&config.resolve(p), &config.resolve(sc), &layout, o, args.allow_orphans)
                    .map_err(|e| e.context(format!("system {:?}", s.name)))?;
            }
        }
    }
    match (&args.protocol, &args.scores) {
        (Some(p), Some(s)) => check_pair(p, s, &layout, o, args.allow_orphans)?,
        (Some(p), None) => {
            let trials = read_protocol(p, &layout)?;
            println!("{}: {} trials", p.display(), trials.len());
        }
        (None, Some(s)) => {
            let scores = read_scores(s)?;
            let sum: f64 = scores.iter().map(|r| r.score).sum();
            println!("{}: {} scores, sum {sum}", s.display(), scores.len());
        }
        (None, None) if args.config.is_none() => {
            bail!("nothing to check: pass --protocol, --scores or --config")
        }
        (None, None) => {}
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let internal = err
        .chain()
        .any(|e| e.downcast_ref::<fairscore::Error>().is_some_and(fairscore::Error::is_internal));
    if internal {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Eval(mut a) => absolute(&a.config).and_then(|c| {
            a.config = c;
            eval(a)
        }),
        Command::Simulate(a) => simulate(a),
        Command::Det(a) => det(a),
        Command::Check(a) => check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fairscore::fairness::Metric;

    #[test]
    fn cross_check_failures_exit_with_two() {
        let mismatch = fairscore::Error::CrossCheckMismatch {
            metric: Metric::StatisticalParity,
            group: GroupLabel::female(),
        };
        assert_eq!(exit_code(&anyhow::Error::new(mismatch.in_system("S"))), 2);
        let input = fairscore::Error::EmptyFile.in_file("x.txt");
        assert_eq!(exit_code(&anyhow::Error::new(input)), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), 1);
    }
}
