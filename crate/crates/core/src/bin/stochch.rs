use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use stochch::config::{parse_config, ProblemSpec, StudyAxis};
use stochch::diagnostics::{confinement_scaling, convergence_study, mass_moment_check, mc_energy_inequality};
use stochch::io::{code_version, write_atomic, write_snapshot, write_timeseries, RunManifest, Verdict};
use stochch::mobility::compat_mf;
use stochch::{simulate_path, Error, Result};

#[derive(Parser)]
#[command(name = "stochch", version, about = "Stochastic Cahn-Hilliard spectral solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Key = value problem description.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides run.paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run paths one after another instead of in parallel.
    #[arg(long)]
    serial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate every path and write time series and final snapshots.
    Simulate(Common),
    /// Strong refinement study along one axis.
    Study {
        /// modes, dt, lambda or epsilon
        axis: String,
        /// Comma separated levels; defaults to study.levels.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Verification checks: compat, energy, mass or confinement.
    Check {
        kind: String,
        /// Epsilon levels for the confinement check.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run a manifest into a fresh directory and compare outputs byte for byte.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        serial: bool,
    },
}

struct Outcome {
    outputs: Vec<PathBuf>,
    verdicts: Vec<Verdict>,
}

fn load(common: &Common) -> Result<ProblemSpec> {
    let text = fs::read_to_string(&common.config).map_err(|e| Error::Io {
        path: common.config.clone(),
        source: e,
    })?;
    let mut spec = parse_config(&text)?;
    if let Some(p) = common.paths {
        spec.paths = p;
    }
    if let Some(s) = common.seed {
        spec.seed = s;
    }
    Ok(spec)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn verdict(criterion: &str, pass: bool, detail: String) -> Verdict {
    Verdict {
        criterion: criterion.into(),
        pass,
        detail,
    }
}

fn run_simulate(spec: &ProblemSpec, out: &Path, serial: bool) -> Result<Outcome> {
    let cfg = spec.build()?;
    let results = stochch::diagnostics::run_paths(spec.paths, serial, |p| simulate_path(&cfg, p))?;
    let mut outputs = Vec::new();
    for (p, recs) in results.iter().enumerate() {
        let csv = PathBuf::from(format!("path_{p:04}.csv"));
        write_timeseries(recs, &out.join(&csv))?;
        let snap = PathBuf::from(format!("path_{p:04}_final.bin"));
        write_snapshot(&recs.last().expect("initial record").phi, &out.join(&snap))?;
        outputs.push(csv);
        outputs.push(snap);
    }
    Ok(Outcome {
        outputs,
        verdicts: Vec::new(),
    })
}

fn run_study(spec: &ProblemSpec, axis: StudyAxis, levels: &[f64], out: &Path, serial: bool) -> Result<Outcome> {
    let table = convergence_study(spec, axis, levels, spec.paths, serial)?;
    let name = PathBuf::from(format!("study_{}.csv", axis.name()));
    write_atomic(&out.join(&name), table.csv().as_bytes())?;
    let detail = match table.slope {
        Some(s) => format!("slope {s:.4}, monotone {}", table.monotone),
        None => format!("no slope, monotone {}", table.monotone),
    };
    Ok(Outcome {
        outputs: vec![name],
        verdicts: vec![verdict(&format!("study {}", axis.name()), table.monotone, detail)],
    })
}

fn run_check(spec: &ProblemSpec, kind: &str, eps: Option<&[f64]>, out: &Path, serial: bool) -> Result<Outcome> {
    let mut report = String::new();
    let v = match kind {
        "compat" => {
            let pot = spec.potential_spec()?;
            let mob = spec.mobility_spec()?;
            let noise = spec.noise_spec()?;
            let c = noise.compat_constants(&pot, &mob, 0)?;
            report.push_str("k,sup_g2_F2,sup_g2_M2\n");
            for (k, (f, m)) in c.sup_f.iter().zip(&c.sup_m).enumerate() {
                report.push_str(&format!("{k},{f:e},{m:e}\n"));
            }
            let table = compat_mf(&mob, &pot, 2001)?;
            let detail = format!("L_G = {:e}, max jump of m F'' = {:e}", c.l_g, table.max_jump);
            verdict("compat", c.l_g.is_finite(), detail)
        }
        "energy" => {
            let cfg = spec.build()?;
            let r = mc_energy_inequality(&cfg, spec.paths, serial)?;
            report.push_str("t,lhs,rhs,residual_mean,residual_se\n");
            for c in &r.checkpoints {
                report.push_str(&format!(
                    "{:e},{:e},{:e},{:e},{:e}\n",
                    c.t, c.lhs, c.rhs, c.residual.mean, c.residual.se
                ));
            }
            let detail = format!("allowance {:e}, worst margin {:e}", r.allowance, r.worst_margin());
            verdict("energy", r.pass, detail)
        }
        "mass" => {
            let cfg = spec.build()?;
            report.push_str("ell,estimate,se,bound\n");
            let mut pass = true;
            for ell in [2, 4, 8] {
                let r = mass_moment_check(&cfg, spec.paths, ell, serial)?;
                report.push_str(&format!("{ell},{:e},{:e},{:e}\n", r.estimate.mean, r.estimate.se, r.bound));
                pass &= r.pass;
            }
            verdict("mass", pass, String::new())
        }
        "confinement" => {
            let base = spec.epsilon.unwrap_or(0.2);
            let default = [base, base / 2.0, base / 4.0, base / 8.0];
            let list = eps.unwrap_or(&default);
            let r = confinement_scaling(spec, list, spec.paths, serial)?;
            report.push_str("epsilon,metric\n");
            for (e, m) in r.eps.iter().zip(&r.metric) {
                report.push_str(&format!("{e:e},{m:e}\n"));
            }
            verdict(
                "confinement",
                r.pass,
                format!("{:?}, worst gap {:e}", r.verdict, r.worst_gap),
            )
        }
        other => {
            return Err(Error::Validation(format!(
                "unknown check '{other}': expected compat, energy, mass or confinement"
            )))
        }
    };
    let name = PathBuf::from(format!("check_{kind}.csv"));
    write_atomic(&out.join(&name), report.as_bytes())?;
    Ok(Outcome {
        outputs: vec![name],
        verdicts: vec![v],
    })
}

fn dispatch(command: &[String], spec: &ProblemSpec, eps: Option<&[f64]>, out: &Path, serial: bool) -> Result<Outcome> {
    ensure_dir(out)?;
    match command.first().map(String::as_str) {
        Some("simulate") => run_simulate(spec, out, serial),
        Some("study") => {
            let name = command.get(1).map(String::as_str).unwrap_or("");
            let axis = StudyAxis::parse(name)
                .ok_or_else(|| Error::Validation(format!("unknown study axis '{name}'")))?;
            let levels = match (&spec.study, eps) {
                (_, Some(l)) => l.to_vec(),
                (Some(s), None) if s.axis == axis => s.levels.clone(),
                _ => return Err(Error::Validation("no levels given for the study".into())),
            };
            run_study(spec, axis, &levels, out, serial)
        }
        Some("check") => run_check(spec, command.get(1).map(String::as_str).unwrap_or(""), eps, out, serial),
        _ => Err(Error::Validation(format!("cannot run command {command:?}"))),
    }
}

/// Runs and writes the manifest; the level list (if any) is kept in the command line.
fn execute(command: Vec<String>, spec: ProblemSpec, levels: Option<Vec<f64>>, out: &Path, serial: bool) -> Result<RunManifest> {
    let start = Instant::now();
    let outcome = dispatch(&command, &spec, levels.as_deref(), out, serial)?;
    let mut recorded = command;
    if let Some(l) = levels {
        let joined: Vec<String> = l.iter().map(|x| format!("{x:e}")).collect();
        recorded.push(format!("--levels={}", joined.join(",")));
    }
    let manifest = RunManifest {
        command: recorded,
        config: spec.to_text(),
        seed: spec.seed,
        paths: spec.paths,
        code_version: code_version(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs: outcome.outputs,
        verdicts: outcome.verdicts,
    };
    manifest.write(&out.join("manifest.json"))?;
    Ok(manifest)
}

fn split_command(recorded: &[String]) -> Result<(Vec<String>, Option<Vec<f64>>)> {
    let mut command = Vec::new();
    let mut levels = None;
    for part in recorded {
        if let Some(list) = part.strip_prefix("--levels=") {
            let parsed: std::result::Result<Vec<f64>, _> = list.split(',').map(str::parse).collect();
            levels = Some(parsed.map_err(|_| Error::Validation(format!("bad level list '{list}'")))?);
        } else {
            command.push(part.clone());
        }
    }
    Ok((command, levels))
}

fn replay(manifest_path: &Path, out: &Path, serial: bool) -> Result<bool> {
    let original = RunManifest::read(manifest_path)?;
    let spec = parse_config(&original.config)?;
    let (command, levels) = split_command(&original.command)?;
    let fresh = execute(command, spec, levels, out, serial)?;
    let src_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut identical = fresh.outputs == original.outputs;
    for name in &original.outputs {
        let a = fs::read(src_dir.join(name)).map_err(|e| Error::Io {
            path: src_dir.join(name),
            source: e,
        })?;
        let b = fs::read(out.join(name)).unwrap_or_default();
        let same = a == b;
        println!("{} {}", if same { "identical" } else { "DIFFERS  " }, name.display());
        identical &= same;
    }
    Ok(identical)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(c) => {
            let spec = load(&c)?;
            execute(vec!["simulate".into()], spec, None, &c.out, c.serial)?;
            Ok(true)
        }
        Command::Study { axis, levels, common } => {
            let spec = load(&common)?;
            let m = execute(vec!["study".into(), axis], spec, levels, &common.out, common.serial)?;
            report(&m)
        }
        Command::Check { kind, eps, common } => {
            let spec = load(&common)?;
            let m = execute(vec!["check".into(), kind], spec, eps, &common.out, common.serial)?;
            report(&m)
        }
        Command::Replay { manifest, out, serial } => replay(&manifest, &out, serial),
    }
}

fn report(m: &RunManifest) -> Result<bool> {
    for v in &m.verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.criterion, v.detail);
    }
    Ok(m.verdicts.iter().all(|v| v.pass))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
