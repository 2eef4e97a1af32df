use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pim_gemv::acceptance;
use pim_gemv::codec;
use pim_gemv::config::{effective_roofline, minimum_page_size, preferred_page_size, SystemConfig};
use pim_gemv::experiments::{run_experiment, Experiment};
use pim_gemv::planner::manifest::Manifest;
use pim_gemv::planner::plan_gemv;
use pim_gemv::problem::{reference_gemv, GemvData, GemvProblem};
use pim_gemv::repro::emit_repro_manifest;
use pim_gemv::sim::{run_trace, verify_placement};
use pim_gemv::suite::{verify_suite, DEFAULT_CASES, DEFAULT_SEED};
use pim_gemv::timing::report_for_trace;
use pim_gemv::trace::generate_trace;

const ENV_PREFIX: &str = "PIM_GEMV_";

/// `println!` that exits quietly when the reader closed the pipe.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        if let Err(e) = writeln!(std::io::stdout().lock(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            return Err(e.into());
        }
    }};
}

#[derive(Parser)]
#[command(name = "pim-gemv", version, about = "GEMV data placement and timing for bank-level PIM")]
struct Cli {
    /// TOML or JSON system config; defaults apply when omitted.
    #[arg(long, global = true, env = "PIM_GEMV_CONFIG")]
    config: Option<PathBuf>,
    /// `section.field=value` override, repeatable. Applied after PIM_GEMV_SECTION__FIELD variables.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plan one GEMV and print the plan, placement summary and timing.
    Plan {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        /// Write the tile placement manifest here.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Use the binary manifest encoding.
        #[arg(long)]
        binary: bool,
    },
    /// Run the functional simulator and compare with the reference GEMV.
    Simulate {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        /// Packed row-major weights; random when omitted.
        #[arg(long, requires = "iv")]
        weights: Option<PathBuf>,
        /// Packed input vector.
        #[arg(long, requires = "weights")]
        iv: Option<PathBuf>,
    },
    /// Run a named experiment, or `all`.
    Sweep {
        experiment: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Randomized oracle and invariant battery; exits nonzero on failure.
    Verify {
        #[arg(long, default_value_t = DEFAULT_CASES)]
        cases: usize,
    },
    /// Evaluate acceptance criteria (A1..A8, or `all`).
    Check { criterion: String },
    /// Print the minimum and preferred page sizes.
    PageSize,
    /// Write the reproduction manifest.
    Manifest {
        #[arg(long, default_value = "repro.json")]
        out: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<SystemConfig> {
    let base = match &cli.config {
        Some(p) => SystemConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => SystemConfig::default(),
    };
    let mut ov = SystemConfig::env_overrides(ENV_PREFIX, std::env::vars().filter(|(k, _)| k != "PIM_GEMV_CONFIG"));
    ov.extend(cli.overrides.iter().cloned());
    Ok(base.with_overrides(ov.iter().map(String::as_str))?)
}

fn problem(cfg: &SystemConfig, m: usize, k: usize) -> Result<GemvProblem> {
    Ok(GemvProblem::new(m, k, cfg.format.in_fmt(), cfg.format.out_fmt())?)
}

fn cmd_plan(cfg: &SystemConfig, m: usize, k: usize, manifest: Option<&Path>, binary: bool) -> Result<()> {
    let p = problem(cfg, m, k)?;
    let planned = plan_gemv(&p, cfg)?;
    let trace = generate_trace(&planned, &cfg.pim)?;
    let timing = report_for_trace(&planned, &trace, cfg);
    let checks = verify_placement(&planned, &trace, &cfg.pim);
    let parts: Vec<_> = planned
        .parts
        .iter()
        .map(|part| {
            serde_json::json!({
                "k_offset": part.sub.k_offset,
                "channels": [part.sub.channels.start, part.sub.channels.end],
                "plan": part.plan,
                "m_tm": part.map.m_tm,
                "k_tm": part.map.k_tm,
                "rows_per_bank_max": part.map.rows_per_bank.iter().max(),
                "distinct_bank_layouts": part.map.layouts.len(),
            })
        })
        .collect();
    let out = serde_json::json!({
        "problem": p,
        "split_k": planned.split_k,
        "parts": parts,
        "timing": timing,
        "checks": checks.checks,
    });
    out!("{}", serde_json::to_string_pretty(&out)?);
    if let Some(path) = manifest {
        let part = &planned.parts[0];
        let man = Manifest::from_map(&part.sub.problem, &part.plan, &part.map);
        if binary {
            fs::write(path, man.to_bytes())?;
        } else {
            fs::write(path, man.to_json()?)?;
        }
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn read_elements(path: &Path, bits: u32, count: usize) -> Result<Vec<i32>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    codec::decode(&bytes, bits, count).with_context(|| format!("decoding {}", path.display()))
}

fn cmd_simulate(cfg: &SystemConfig, seed: u64, m: usize, k: usize, files: Option<(&Path, &Path)>) -> Result<bool> {
    let p = problem(cfg, m, k)?;
    if p.sf_block().is_some() && files.is_some() {
        bail!("operand files carry no scale factors; drop --weights/--iv or format.sf_block");
    }
    let data = match files {
        Some((w, iv)) => GemvData {
            weights: read_elements(w, p.in_fmt.bits, m * k)?,
            iv: read_elements(iv, p.in_fmt.bits, k)?,
            weight_scales: vec![],
            iv_scales: vec![],
        },
        None => GemvData::random(&p, &mut ChaCha8Rng::seed_from_u64(seed)),
    };
    let planned = plan_gemv(&p, cfg)?;
    let trace = generate_trace(&planned, &cfg.pim)?;
    let sim = run_trace(&planned, &trace, &data, &cfg.pim)?;
    let want = reference_gemv(&p, &data)?;
    let ok = sim.output == want;
    let timing = report_for_trace(&planned, &trace, cfg);
    let out = serde_json::json!({
        "matches_reference": ok,
        "fits_out_fmt": sim.fits_out_fmt,
        "speedup": timing.speedup,
        "pim_time_ns": timing.pim_time_ns,
        "soc_time_ns": timing.soc_time_ns,
        "counts": timing.counts,
        "output_head": &sim.output[..sim.output.len().min(8)],
    });
    out!("{}", serde_json::to_string_pretty(&out)?);
    Ok(ok)
}

fn cmd_sweep(cfg: &SystemConfig, name: &str, out: &Path, format: Format) -> Result<()> {
    let exps: Vec<Experiment> = if name == "all" { Experiment::ALL.to_vec() } else { vec![name.parse()?] };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for e in exps {
        let table = run_experiment(e, cfg)?;
        let (ext, body) = match format {
            Format::Csv => ("csv", table.to_csv()),
            Format::Json => ("json", table.to_json()),
        };
        let path = out.join(format!("{}.{ext}", e.name()));
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        let geo = table
            .rows
            .iter()
            .filter(|r| r.model == "all")
            .map(|r| format!("{}={:.2}", r.variant, r.speedup))
            .collect::<Vec<_>>();
        out!("{} -> {} {}", e.name(), path.display(), geo.join(" "));
    }
    out!("roofline {:.2}", effective_roofline(&cfg.memory, &cfg.pim, &cfg.dram_timing()));
    Ok(())
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    match &cli.cmd {
        Cmd::Plan { m, k, manifest, binary } => cmd_plan(&cfg, *m, *k, manifest.as_deref(), *binary).map(|_| true),
        Cmd::Simulate { m, k, weights, iv } => {
            let files = weights.as_deref().zip(iv.as_deref());
            cmd_simulate(&cfg, cli.seed, *m, *k, files)
        }
        Cmd::Sweep { experiment, out } => cmd_sweep(&cfg, experiment, out, cli.format).map(|_| true),
        Cmd::Verify { cases } => {
            let report = verify_suite(cli.seed, *cases, &cfg);
            for c in report.failed() {
                out!("FAIL {}: {}", c.name, c.failures.join(", "));
            }
            out!("{}", report.summary());
            Ok(report.pass())
        }
        Cmd::Check { criterion } => {
            let ids: Vec<&str> = if criterion.eq_ignore_ascii_case("all") { acceptance::IDS.to_vec() } else { vec![criterion] };
            let mut ok = true;
            for id in ids {
                let o = acceptance::check(id)?;
                out!("{}", o.line());
                ok &= o.pass;
            }
            Ok(ok)
        }
        Cmd::PageSize => {
            let mem = &cfg.memory;
            out!(
                "{} channels x {} banks, {} B rows, {} B granularity: minimum {} KB, preferred {} KB",
                mem.num_channels,
                mem.banks_per_channel,
                mem.row_buffer_bytes,
                mem.interleave_gran_bytes,
                minimum_page_size(mem) >> 10,
                preferred_page_size(mem) >> 10
            );
            Ok(true)
        }
        Cmd::Manifest { out } => {
            emit_repro_manifest(out)?;
            out!("wrote {}", out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
