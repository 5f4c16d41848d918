//! `hrris` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hrris::beamforming::{brute_force_oracle, optimize_passive, AoConfig};
use hrris::channel::generate_channels;
use hrris::experiment::{aggregate_path, medians, run_sweep, write_results, ExperimentSpec, Scheme};
use hrris::surface::SurfaceConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ncore: hrris-core ",
    env!("CARGO_PKG_VERSION"),
    "\nprofile: ",
    env!("HRRIS_BUILD_PROFILE"),
    "\ntarget: ",
    env!("HRRIS_BUILD_TARGET"),
);

#[derive(Parser, Debug)]
#[command(name = "hrris", version, long_version = LONG_VERSION, about = "HR-RIS link simulator and optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte-Carlo sweep and write CSV results.
    Run {
        /// TOML scenario file; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated subset of ris-n, ris-n-minus-k, hrris-fixed, hrris-dynamic, relay.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<Scheme>>,
        /// K values as a list (`1,4,10`) or an inclusive range (`1:20`).
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Give every scheme the HR-RIS's total power consumption.
        #[arg(long)]
        equal_power: bool,
        /// Output CSV; aggregates go to the sibling `.agg.csv`.
        #[arg(long)]
        out: PathBuf,
        /// Print the effective scenario as TOML and exit.
        #[arg(long)]
        print_config: bool,
        /// Also print per-(scheme, K) medians.
        #[arg(long)]
        medians: bool,
    },
    /// Compare coordinate ascent with exhaustive search on small passive surfaces.
    Oracle {
        /// Surface elements.
        #[arg(long)]
        n: usize,
        /// Phase bits.
        #[arg(long)]
        b: u32,
        #[arg(long, default_value_t = 100)]
        channels: usize,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn parse_k(text: &str) -> Result<Vec<usize>> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once(':') {
        let a: usize = a.trim().parse().with_context(|| format!("bad range start in `{text}`"))?;
        let b: usize = b.trim().parse().with_context(|| format!("bad range end in `{text}`"))?;
        if a > b {
            bail!("empty K range `{text}`");
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad K value `{s}`")))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: Option<PathBuf>,
    schemes: Option<Vec<Scheme>>,
    k: Option<String>,
    trials: Option<usize>,
    seed: Option<u64>,
    equal_power: bool,
    out: PathBuf,
    print_config: bool,
    show_medians: bool,
) -> Result<()> {
    let mut spec = match &config {
        Some(path) => ExperimentSpec::from_path(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(s) = schemes {
        spec.schemes = s;
    }
    if let Some(k) = k {
        spec.k_values = parse_k(&k)?;
    }
    if let Some(t) = trials {
        spec.trials = t;
    }
    if let Some(s) = seed {
        spec.master_seed = s;
    }
    spec.equal_power_mode |= equal_power;
    spec.validate()?;
    if print_config {
        print!("{}", spec.to_toml_string());
        return Ok(());
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let start = Instant::now();
    let sweep = run_sweep(&spec)?;
    write_results(&sweep.rows, &sweep.aggregates, &out)?;
    let failed = sweep.rows.iter().filter(|r| r.failed()).count();
    let bw = spec.noise.bandwidth_hz;
    println!(
        "{:<14} {:>3} {:>6} {:>12} {:>10} {:>14} {:>12} {:>10}",
        "scheme", "k", "count", "se_mean", "se_stderr", "ee_bit/J", "ee_bps/Hz/W", "p_total"
    );
    for a in &sweep.aggregates {
        println!(
            "{:<14} {:>3} {:>6} {:>12.4} {:>10.4} {:>14.4e} {:>12.4} {:>10.4}",
            a.scheme.name(),
            a.k,
            a.count,
            a.se_mean,
            a.se_stderr,
            a.ee_mean,
            a.ee_mean / bw,
            a.p_total_mean
        );
    }
    if show_medians {
        println!();
        println!("{:<14} {:>3} {:>12} {:>14} {:>10}", "scheme", "k", "se_median", "ee_median", "p_median");
        for m in medians(&sweep.rows) {
            println!(
                "{:<14} {:>3} {:>12.4} {:>14.4e} {:>10.4}",
                m.scheme.name(),
                m.k,
                m.se,
                m.ee,
                m.total_power
            );
        }
    }
    eprintln!(
        "{} rows ({failed} failed) in {:.1?} -> {} and {}",
        sweep.rows.len(),
        start.elapsed(),
        out.display(),
        aggregate_path(&out).display()
    );
    Ok(())
}

fn oracle(n: usize, b: u32, channels: usize, restarts: usize, seed: u64) -> Result<bool> {
    let mut spec = ExperimentSpec::default();
    spec.fading.surface_elements = n;
    spec.surface.phase_bits = b;
    spec.k_values = vec![0];
    spec.schemes = vec![Scheme::RisN];
    spec.validate()?;
    let cfg = SurfaceConfig::passive(n, b);
    let start = Instant::now();
    let (mut matches, mut above) = (0, 0);
    let mut gaps = Vec::with_capacity(channels);
    for i in 0..channels as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(i));
        let ch = generate_channels(&spec.fading, &spec.geometry, &spec.path_loss, &mut rng)?;
        let ao = AoConfig {
            restarts,
            seed: i,
            ..spec.ao.clone()
        };
        let ca = optimize_passive(&ch, &cfg, &spec.noise, &spec.power, &ao)?;
        let or = brute_force_oracle(&ch, &cfg, &spec.noise, &spec.power, 2)?;
        let gap = (or.se - ca.se) / or.se;
        if gap < -1e-9 {
            above += 1;
        } else if gap <= 1e-9 {
            matches += 1;
        }
        gaps.push(gap.max(0.0));
    }
    gaps.sort_by(f64::total_cmp);
    let median = if gaps.is_empty() {
        0.0
    } else if gaps.len() % 2 == 1 {
        gaps[gaps.len() / 2]
    } else {
        0.5 * (gaps[gaps.len() / 2 - 1] + gaps[gaps.len() / 2])
    };
    let max = gaps.last().copied().unwrap_or(0.0);
    println!("channels: {channels}");
    println!("matches: {matches}");
    println!("above_oracle: {above}");
    println!("median_gap: {median:.3e}");
    println!("max_gap: {max:.3e}");
    println!("elapsed_s: {:.3}", start.elapsed().as_secs_f64());
    Ok(above == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            schemes,
            k,
            trials,
            seed,
            equal_power,
            out,
            print_config,
            medians,
        } => run(config, schemes, k, trials, seed, equal_power, out, print_config, medians).map(|_| true),
        Command::Oracle {
            n,
            b,
            channels,
            restarts,
            seed,
        } => oracle(n, b, channels, restarts, seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::parse_k;

    #[test]
    fn k_lists_and_ranges() {
        assert_eq!(parse_k("1,4,10").unwrap(), vec![1, 4, 10]);
        assert_eq!(parse_k("3:5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_k("7").unwrap(), vec![7]);
        assert!(parse_k("5:3").is_err());
        assert!(parse_k("a").is_err());
    }
}
