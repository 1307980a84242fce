//! Command-line front end binding the library into reproducible
//! experiments.
//!
//! Exit codes: 0 on success (all checks passed), 1 when a verification or
//! replay check fails, 2 on usage errors.

use clap::{Args, Parser, Subcommand};
use mbnd_core::distinguishers::{play_game, AlgorithmConfig, Budget, GameResult};
use mbnd_core::exact::{verify_gap, GapReport};
use mbnd_core::instance::{assemble, Instance};
use mbnd_core::oracle::{replay, Transcript};
use mbnd_core::params::{derive_paper_params, validate, ParamSet, Side};
use mbnd_core::stats::{analyze, random_probe_transcript, AnalyzeConfig, StructuralStats};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mbnd",
    about = "Build hard YES/NO instances for matching-size estimation, verify their exact gap, and run budgeted query experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Parameter file (flat `key = value` lines).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Derive paper-faithful parameters from this query-budget exponent.
    #[arg(long)]
    delta: Option<f64>,
    /// Scale hint for the derived base width.
    #[arg(long, default_value_t = 1)]
    scale_hint: u64,
    /// Toy-mode overrides / definitions, e.g. -O L=1 -O r=3 -O "zeta=1/9".
    #[arg(short = 'O', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand toy preset: small-l1, wide-l1, small-l2, stats-l1, big-l1.
    #[arg(long)]
    preset: Option<String>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<ParamSet, String> {
        if let Some(delta) = self.delta {
            return derive_paper_params(delta, self.scale_hint).map_err(|e| e.to_string());
        }
        let mut base = String::new();
        if let Some(name) = &self.preset {
            base = preset_kv(name).ok_or_else(|| format!("unknown preset {name}"))?;
        }
        if let Some(path) = &self.params {
            base = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        }
        if base.is_empty() && self.set.is_empty() {
            return Err("no parameters given; use --params, --preset, --delta, or -O".into());
        }
        if base.is_empty() {
            base = "mode = toy\n".into();
        }
        let overrides: Vec<(String, String)> = self
            .set
            .iter()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| format!("bad override {kv}; expected KEY=VALUE"))
            })
            .collect::<Result<_, _>>()?;
        ParamSet::from_kv(&base, &overrides).map_err(|e| e.to_string())
    }
}

/// Ready-made toy parameter sets used across the experiments.
fn preset_kv(name: &str) -> Option<String> {
    let s = match name {
        "small-l1" => "mode = toy\nL = 1\nr = 3\nzeta = 1/9\nxi = 1/4\ngamma = 1/1000\ntau = 3/83\nd = 4\nN1 = 72\n",
        "wide-l1" => "mode = toy\nL = 1\nr = 5\nzeta = 1/25\nxi = 1/4\ngamma = 1/1000\ntau = 100/4340\nd = 8\nN1 = 200\n",
        "small-l2" => "mode = toy\nL = 2\nr = 2\nzeta = 1/4\nxi = 1/4\ngamma = 1/1000\ntau = 24/40320\nd = 4,16\nN1 = 48\n",
        "stats-l1" => "mode = toy\nL = 1\nr = 10\nzeta = 1/25\nxi = 1/4\ngamma = 1/10000\ntau = 1200/100560\nd = 8\nN1 = 2400\n",
        "big-l1" => "mode = toy\nL = 1\nr = 10\nzeta = 1/25\nxi = 1/4\ngamma = 1/10000\ntau = 12000/1005600\nd = 24\nN1 = 24000\n",
        _ => return None,
    };
    Some(s.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Build an instance and save it (binary format + text manifest).
    Gen {
        #[command(flatten)]
        params: ParamArgs,
        /// Which distribution to draw from.
        #[arg(long)]
        side: String,
        /// Master seed; the whole instance is a deterministic function of
        /// (parameters, side, seed).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Validate a parameter set and print the report.
    Check {
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Exact YES/NO gap verification on two saved instances.
    Verify {
        yes: PathBuf,
        no: PathBuf,
        /// Optional CSV output (appends one row).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a distinguishing game and report the success rate.
    Attack {
        #[command(flatten)]
        params: ParamArgs,
        /// Algorithm: full_scan, sampled_greedy, special_chaser.
        #[arg(long)]
        algo: String,
        /// Query budget: a number, `n^X` (e.g. n^1.5), or `full`.
        #[arg(long, default_value = "full")]
        budget: String,
        #[arg(long, default_value_t = 20)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// sampled_greedy: vertices to sample.
        #[arg(long, default_value_t = 100)]
        sample: u64,
        /// sampled_greedy: list prefix length per sampled vertex.
        #[arg(long, default_value_t = 50)]
        probes: u64,
        /// special_chaser: number of starting vertices.
        #[arg(long, default_value_t = 8)]
        starts: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Structural statistics of a transcript against a saved instance.
    Stats {
        /// Saved instance file.
        #[arg(long)]
        instance: PathBuf,
        /// Transcript CSV to analyze; mutually exclusive with --random-budget.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Generate a uniform-random probe transcript with this budget.
        #[arg(long)]
        random_budget: Option<u64>,
        /// Seed for the random probe strategy.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Spoiled-size cutoff override (defaults to sqrt(n) for toys).
        #[arg(long)]
        spoiled_cutoff: Option<u64>,
        /// Write the shallow-size histogram here.
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also dump the (possibly generated) transcript.
        #[arg(long)]
        dump_transcript: Option<PathBuf>,
    },
    /// Re-execute a transcript against an instance; fails on any deviation.
    Replay {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        transcript: PathBuf,
    },
    /// Aggregate numeric CSV files: per-column mean/min/max/median/p90.
    Report { files: Vec<PathBuf> },
}

fn parse_side(s: &str) -> Result<Side, String> {
    match s.to_ascii_lowercase().as_str() {
        "yes" | "y" => Ok(Side::Yes),
        "no" | "n" => Ok(Side::No),
        other => Err(format!("side must be yes or no, got {other}")),
    }
}

fn parse_budget(s: &str) -> Result<Budget, String> {
    if s == "full" {
        return Ok(Budget::FullRead);
    }
    if let Some(exp) = s.strip_prefix("n^") {
        return exp
            .parse::<f64>()
            .map(Budget::Exponent)
            .map_err(|_| format!("bad budget exponent {exp}"));
    }
    s.parse::<u64>()
        .map(Budget::Absolute)
        .map_err(|_| format!("bad budget {s}"))
}

fn append_csv(path: &Path, header: &str, row: &str) -> std::io::Result<()> {
    use std::io::Write;
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    writeln!(f, "{row}")
}

fn write_run_manifest(target: &Path, body: String) {
    let path = target.with_extension("run-manifest.txt");
    let _ = std::fs::write(path, body);
}

fn run() -> Result<bool, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen {
            params,
            side,
            seed,
            output,
        } => {
            let p = params.resolve()?;
            let side = parse_side(&side)?;
            let inst = assemble(&p, side, seed).map_err(|e| e.to_string())?;
            inst.save(&output).map_err(|e| e.to_string())?;
            println!(
                "wrote {} ({} vertices, {} core edges, side {side})",
                output.display(),
                inst.n_total(),
                inst.core_edge_count()
            );
            Ok(true)
        }
        Command::Check { params } => {
            let p = params.resolve()?;
            let rep = validate(&p);
            print!("{rep}");
            println!(
                "n = {} (core {}, dummies {}), guaranteed gap N1/2 = {}",
                p.total_vertices,
                p.level_counts.last().unwrap(),
                p.dummy_count,
                p.base_width.clone() / 2u32
            );
            Ok(rep.ok())
        }
        Command::Verify { yes, no, csv } => {
            let iy = Instance::load(&yes).map_err(|e| e.to_string())?;
            let ino = Instance::load(&no).map_err(|e| e.to_string())?;
            let p = iy.params.clone();
            let rep: GapReport = verify_gap(&iy, &ino, &p).map_err(|e| e.to_string())?;
            println!("{}", rep.json_line());
            if let Some(path) = csv {
                append_csv(&path, GapReport::csv_header(), &rep.csv_row())
                    .map_err(|e| e.to_string())?;
            }
            Ok(rep.all_pass())
        }
        Command::Attack {
            params,
            algo,
            budget,
            trials,
            seed,
            sample,
            probes,
            starts,
            csv,
        } => {
            let p = params.resolve()?;
            let algo = match algo.as_str() {
                "full_scan" => AlgorithmConfig::FullScan,
                "sampled_greedy" => AlgorithmConfig::SampledGreedy { sample, probes },
                "special_chaser" => AlgorithmConfig::SpecialChaser { starts },
                other => return Err(format!("unknown algorithm {other}")),
            };
            let budget = parse_budget(&budget)?;
            let r: GameResult =
                play_game(&algo, &p, budget, trials, seed).map_err(|e| e.to_string())?;
            println!("{}", r.summary());
            if let Some(path) = csv {
                append_csv(&path, GameResult::csv_header(), &r.csv_row())
                    .map_err(|e| e.to_string())?;
                write_run_manifest(
                    &path,
                    format!(
                        "command = attack\nalgorithm = {}\nbudget = {}\ntrials = {trials}\nseed = {seed}\n{}",
                        r.algorithm,
                        r.budget_desc,
                        p.to_kv()
                    ),
                );
            }
            Ok(true)
        }
        Command::Stats {
            instance,
            transcript,
            random_budget,
            seed,
            spoiled_cutoff,
            histogram,
            csv,
            dump_transcript,
        } => {
            let inst = Instance::load(&instance).map_err(|e| e.to_string())?;
            let t: Transcript = match (transcript, random_budget) {
                (Some(path), None) => {
                    let text =
                        std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                    let t = Transcript::from_csv(&text)?;
                    // rebuild the discovered-edge view by replaying
                    let answers = replay(&inst, &t).map_err(|e| e.to_string())?;
                    for (r, a) in t.records.iter().zip(answers.iter()) {
                        if r.answer != *a {
                            return Err("transcript does not replay on this instance".into());
                        }
                    }
                    let mut s = mbnd_core::oracle::open_session(&inst, t.records.len() as u64);
                    for r in &t.records {
                        let _ = s.query(r.vertex, r.slot);
                    }
                    s.freeze()
                }
                (None, Some(budget)) => {
                    random_probe_transcript(&inst, budget, seed).map_err(|e| e.to_string())?
                }
                _ => return Err("give exactly one of --transcript or --random-budget".into()),
            };
            let cfg = AnalyzeConfig {
                shallow_depth: None,
                spoiled_size_cutoff: spoiled_cutoff,
            };
            let st: StructuralStats = analyze(&t, &inst, cfg).map_err(|e| e.to_string())?;
            println!("{}", StructuralStats::csv_header());
            println!("{}", st.csv_row());
            for lv in &st.per_level {
                println!(
                    "level {}: black={} special={} components={} cycles={} trees={} identified_inner={}{}",
                    lv.level,
                    lv.black_edges,
                    lv.special_edges,
                    lv.component_sizes.len(),
                    lv.cycle_count,
                    lv.all_components_trees,
                    lv.identified_inner_edges,
                    lv.g_exponent
                        .map(|g| format!(" g_exp={g:.3}"))
                        .unwrap_or_default()
                );
            }
            if let Some(path) = csv {
                append_csv(&path, StructuralStats::csv_header(), &st.csv_row())
                    .map_err(|e| e.to_string())?;
            }
            if let Some(path) = histogram {
                std::fs::write(&path, st.histogram_csv()).map_err(|e| e.to_string())?;
            }
            if let Some(path) = dump_transcript {
                std::fs::write(&path, t.to_csv()).map_err(|e| e.to_string())?;
            }
            Ok(true)
        }
        Command::Replay {
            instance,
            transcript,
        } => {
            let inst = Instance::load(&instance).map_err(|e| e.to_string())?;
            let text = std::fs::read_to_string(&transcript)
                .map_err(|e| format!("{}: {e}", transcript.display()))?;
            let t = Transcript::from_csv(&text)?;
            let answers = replay(&inst, &t).map_err(|e| e.to_string())?;
            let mut ok = true;
            for (r, a) in t.records.iter().zip(answers.iter()) {
                if r.answer != *a {
                    ok = false;
                    println!(
                        "mismatch at step {}: recorded {:?}, replayed {:?}",
                        r.step, r.answer, a
                    );
                }
            }
            println!(
                "replayed {} queries: {}",
                t.records.len(),
                if ok { "identical" } else { "DIVERGED" }
            );
            Ok(ok)
        }
        Command::Report { files } => {
            if files.is_empty() {
                return Err("no input files".into());
            }
            for path in files {
                let text =
                    std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                let mut lines = text.lines();
                let Some(header) = lines.next() else { continue };
                let cols: Vec<&str> = header.split(',').collect();
                let mut data: Vec<Vec<f64>> = vec![Vec::new(); cols.len()];
                for line in lines {
                    for (i, field) in line.split(',').enumerate() {
                        if i < cols.len() {
                            if let Ok(v) = field.trim().parse::<f64>() {
                                data[i].push(v);
                            }
                        }
                    }
                }
                println!("# {}", path.display());
                println!("column,count,mean,min,median,p90,max");
                for (name, col) in cols.iter().zip(data.iter_mut()) {
                    if col.is_empty() {
                        continue;
                    }
                    col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let n = col.len();
                    let mean = col.iter().sum::<f64>() / n as f64;
                    let q = |f: f64| col[((n - 1) as f64 * f).round() as usize];
                    println!(
                        "{name},{n},{mean:.4},{:.4},{:.4},{:.4},{:.4}",
                        col[0],
                        q(0.5),
                        q(0.9),
                        col[n - 1]
                    );
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
