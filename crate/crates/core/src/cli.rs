//! `tomotact` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, configuration or I/O error, 2 numerical
//! failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::exec::{with_threads, Execution};
use crate::fingerprint;
use crate::io::{fmt_g, read_frames, write_frames, FrameHeader, RunConfig};
use crate::jacobian::JacobianMatrix;
use crate::mesh::{apply_regions, build_volume_mesh};
use crate::metrics::{fit_output_model, fmax_metric, sensitivity_metric};
use crate::protocol::{acquire_frame, PotentialFrame};
use crate::recon::Reconstructor;
use crate::studies::{
    material_positioning, run_adhesion_study, run_performance_map, run_thickness_study, write_thickness_csv,
    SimConfig, TABLE_MATERIALS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

const DEFAULT_OUT: &str = "tomotact-out";

#[derive(Debug, Parser)]
#[command(name = "tomotact", version, about = "Tomographic tactile sensor simulation and reconstruction")]
struct Cli {
    /// JSON run configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Scales every mesh resolution and the conductivity grid.
    #[arg(long = "grid-scale", global = true, default_value_t = 1.0)]
    grid_scale: f64,
    /// Seed for the multi-start output-model fit.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// More diagnostics on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forward-simulate one frame per configured contact.
    Simulate,
    /// Build the thin-shell sensitivity matrix.
    Jacobian {
        /// Also write a CSV export.
        #[arg(long)]
        csv: bool,
    },
    /// Reconstruct every frame of a frames file.
    Reconstruct {
        /// Binary sensitivity matrix from `jacobian`.
        #[arg(long)]
        jacobian: PathBuf,
        /// Frames file as written by `simulate`
        #[arg(long)]
        frames: PathBuf,
        /// Overrides the configured regularization weight.
        #[arg(long = "lambda-sq")]
        lambda_sq: Option<f64>,
    },
    /// Reconstruct frame lines from stdin, one raster line per frame on stdout.
    ReconstructStream {
        #[arg(long)]
        jacobian: PathBuf,
        #[arg(long = "lambda-sq")]
        lambda_sq: Option<f64>,
    },
    /// Run a design study.
    Sweep {
        #[command(subcommand)]
        study: Study,
    },
    /// Fit the output model to force/output samples and report the metrics.
    Metrics {
        /// CSV of `force,output` rows.
        #[arg(long)]
        input: PathBuf,
        /// Load level for the sensitivity (default: half the largest force).
        #[arg(long = "f-h")]
        f_h: Option<f64>,
        #[arg(long, default_value = "sample")]
        label: String,
    },
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Study {
    /// Conductivity performance map with material positioning.
    Perfmap,
    /// Thick-detector frames against the thin-shell reference.
    Thickness,
    /// Dot-adhesion position error and interface current.
    Adhesion,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let threads = cli.threads;
    match with_threads(threads, || execute(&cli)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    sim: SimConfig,
    out: PathBuf,
    out_given: bool,
    exec: Execution,
    scale: f64,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = cli.seed {
            cfg.sim.seed = seed;
        }
        let sim = cfg.sim.scaled(cli.grid_scale)?;
        let given = cli.out.clone().or_else(|| cfg.output_dir.clone());
        let out_given = given.is_some();
        let out = given.unwrap_or_else(|| DEFAULT_OUT.into());
        let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
        Ok(Self { cfg, sim, out, out_given, exec, scale: cli.grid_scale })
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| Error::config(format!("cannot create output directory {}: {e}", self.out.display())))?;
        Ok(&self.out)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out_dir()?.join(name);
        let f = File::create(&path).map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))?;
        Ok(BufWriter::new(f))
    }

    fn manifest(&self, command: &str, seconds: f64, extra: serde_json::Value) -> Result<()> {
        let doc = json!({
            "command": command,
            "grid_scale": self.scale,
            "seed": self.sim.seed,
            "config": self.cfg,
            "effective_sim": self.sim,
            "seconds": seconds,
            "results": extra,
        });
        let mut w = self.create("manifest.json")?;
        serde_json::to_writer_pretty(&mut w, &doc)?;
        writeln!(w)?;
        Ok(())
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let ctx = Ctx::new(cli)?;
    match &cli.command {
        Command::Simulate => simulate(&ctx),
        Command::Jacobian { csv } => jacobian(&ctx, *csv),
        Command::Reconstruct { jacobian, frames, lambda_sq } => reconstruct(&ctx, jacobian, frames, *lambda_sq),
        Command::ReconstructStream { jacobian, lambda_sq } => reconstruct_stream(&ctx, jacobian, *lambda_sq),
        Command::Sweep { study } => sweep(&ctx, *study),
        Command::Metrics { input, f_h, label } => metrics(&ctx, input, *f_h, label),
    }
}

fn simulate(ctx: &Ctx) -> Result<()> {
    let sim = &ctx.sim;
    let [nx, ny, nz] = sim.volume_divisions;
    let grad = ctx.cfg.gradient.spec(sim.height)?;
    let base = build_volume_mesh(sim.width, sim.depth, sim.height, (nx, ny, nz), sim.layout, &grad)?;
    if ctx.cfg.contacts.is_empty() {
        log::warn!("configuration lists no contacts; writing an empty frames file");
    }
    let mut frames = Vec::with_capacity(ctx.cfg.contacts.len());
    for c in &ctx.cfg.contacts {
        let (mesh, report) = apply_regions(&base, c, ctx.cfg.adhesion_mask.as_ref())?;
        for w in &report.warnings {
            log::warn!("{w}");
        }
        frames.push(acquire_frame(&mesh, sim.v_cc, ctx.exec)?);
    }
    let mut w = ctx.create("frames.csv")?;
    write_frames(&mut w, &frames)?;
    w.flush()?;
    Ok(())
}

fn jacobian(ctx: &Ctx, csv: bool) -> Result<()> {
    let j = ctx.sim.jacobian(ctx.exec)?;
    let mut w = ctx.create("jacobian.bin")?;
    j.write_binary(&mut w)?;
    w.flush()?;
    if csv {
        let mut w = ctx.create("jacobian.csv")?;
        j.write_csv(&mut w)?;
        w.flush()?;
    }
    log::info!("{} x {} sensitivity matrix, protocol {}", j.rows, j.cols, fingerprint::format(j.protocol_fingerprint));
    Ok(())
}

fn load_reconstructor(ctx: &Ctx, path: &Path, lambda_sq: Option<f64>) -> Result<(JacobianMatrix, Reconstructor)> {
    let f = File::open(path).map_err(|e| Error::config(format!("cannot open Jacobian {}: {e}", path.display())))?;
    let j = JacobianMatrix::read_binary(BufReader::new(f))?;
    let mut rc = ctx.sim.recon;
    if let Some(l) = lambda_sq {
        rc.lambda_sq = l;
    }
    let recon = Reconstructor::new(&j, &rc)?;
    Ok((j, recon))
}

fn check_header(h: &FrameHeader, j: &JacobianMatrix) -> Result<()> {
    if h.protocol != j.protocol_fingerprint {
        return Err(Error::Contract(format!(
            "frames protocol fingerprint {} does not match Jacobian protocol fingerprint {}",
            fingerprint::format(h.protocol),
            fingerprint::format(j.protocol_fingerprint)
        )));
    }
    Ok(())
}

fn reconstruct(ctx: &Ctx, jac: &Path, frames: &Path, lambda_sq: Option<f64>) -> Result<()> {
    let (j, recon) = load_reconstructor(ctx, jac, lambda_sq)?;
    let f = File::open(frames).map_err(|e| Error::config(format!("cannot open frames {}: {e}", frames.display())))?;
    let file = read_frames(BufReader::new(f), j.rows, &frames.display().to_string())?;
    match &file.header {
        Some(h) => check_header(h, &j)?,
        None => log::warn!("frames file has no header; protocol fingerprint not checked"),
    }
    let n_e = j.layout.count();
    for (k, (_, values)) in file.frames.iter().enumerate() {
        let frame = PotentialFrame { values: values.clone(), n_electrodes: n_e, v_cc: j.v_cc, fingerprint: j.protocol_fingerprint };
        let img = recon.reconstruct(&frame)?;
        let mut w = ctx.create(&format!("image_{k:04}.csv"))?;
        img.write_csv(&mut w)?;
        w.flush()?;
        let mut w = ctx.create(&format!("image_{k:04}.pgm"))?;
        img.write_pgm(&mut w)?;
        w.flush()?;
    }
    log::info!("reconstructed {} frames", file.frames.len());
    Ok(())
}

fn reconstruct_stream(ctx: &Ctx, jac: &Path, lambda_sq: Option<f64>) -> Result<()> {
    let (j, recon) = load_reconstructor(ctx, jac, lambda_sq)?;
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let (mut good, mut bad) = (0usize, 0usize);
    for (i, line) in stdin.lock().lines().enumerate() {
        let line = line?;
        if let Some(h) = FrameHeader::parse(&line) {
            check_header(&h?, &j)?;
            continue;
        }
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        match crate::io::parse_frame_line(&line, j.rows) {
            Ok((_, values)) => {
                let img = recon.reconstruct_values(&values)?;
                writeln!(out, "{}", img.raster_line())?;
                out.flush()?;
                good += 1;
            }
            Err(reason) => {
                eprintln!("line {}: skipped: {reason}", i + 1);
                bad += 1;
            }
        }
    }
    eprintln!("reconstructed {good} frames, skipped {bad} malformed lines");
    Ok(())
}

fn sweep(ctx: &Ctx, study: Study) -> Result<()> {
    let t0 = Instant::now();
    match study {
        Study::Perfmap => {
            let grid = ctx.cfg.sweep.grid(ctx.scale)?;
            let recon = ctx.sim.reconstructor(ctx.exec)?;
            let res = run_performance_map(&grid, &ctx.sim, &recon, ctx.exec)?;
            let mut w = ctx.create("perfmap.csv")?;
            res.write_csv(&mut w)?;
            w.flush()?;
            let mut artifacts = vec!["perfmap.csv".to_string(), "positioning.csv".to_string()];
            artifacts.extend(res.write_heatmaps(ctx.out_dir()?, "perfmap")?);
            let mut labelled = Vec::new();
            for label in TABLE_MATERIALS.iter().map(|m| m.0.to_string()).chain(["BC".to_string()]) {
                labelled.push((label.clone(), res.material_record(&label)?));
            }
            let pos = material_positioning(&labelled, &res);
            let mut w = ctx.create("positioning.csv")?;
            pos.write_csv(&mut w)?;
            w.flush()?;
            ctx.manifest(
                "sweep perfmap",
                t0.elapsed().as_secs_f64(),
                json!({
                    "conditions": res.records.len(),
                    "f_h": res.f_h,
                    "normalization": res.normalization,
                    "failures": res.failures,
                    "positioning_warnings": pos.warnings,
                    "artifacts": artifacts,
                }),
            )
        }
        Study::Thickness => {
            let rows = run_thickness_study(&ctx.cfg.thicknesses, &ctx.sim, ctx.exec)?;
            let mut w = ctx.create("thickness.csv")?;
            write_thickness_csv(&rows, &mut w)?;
            w.flush()?;
            ctx.manifest("sweep thickness", t0.elapsed().as_secs_f64(), json!({ "rows": rows, "artifacts": ["thickness.csv"] }))
        }
        Study::Adhesion => {
            let recon = ctx.sim.reconstructor(ctx.exec)?;
            let res = run_adhesion_study(&ctx.cfg.adhesion, &ctx.sim, ctx.scale, &recon, ctx.exec)?;
            let mut w = ctx.create("adhesion_position.csv")?;
            res.write_positions_csv(&mut w)?;
            w.flush()?;
            let mut w = ctx.create("adhesion_current.csv")?;
            res.write_currents_csv(&mut w)?;
            w.flush()?;
            ctx.manifest(
                "sweep adhesion",
                t0.elapsed().as_secs_f64(),
                json!({
                    "baseline_error_mm": res.baseline_error,
                    "baseline_current_a": res.baseline_current,
                    "skipped": res.skipped,
                    "artifacts": ["adhesion_position.csv", "adhesion_current.csv"],
                }),
            )
        }
    }
}

/// Reads `force,output` pairs, skipping blank lines, `#` comments and a
/// non-numeric header row.
fn read_samples(path: &Path) -> Result<Vec<(f64, f64)>> {
    let f = File::open(path).map_err(|e| Error::config(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [a, b] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some(p) => out.push(p),
            None if i == 0 && out.is_empty() => continue,
            None => {
                return Err(Error::Parse {
                    location: format!("{}:{}", path.display(), i + 1),
                    reason: "expected two numeric fields: force,output".into(),
                })
            }
        }
    }
    Ok(out)
}

fn metrics(ctx: &Ctx, input: &Path, f_h: Option<f64>, label: &str) -> Result<()> {
    let samples = read_samples(input)?;
    let fit = fit_output_model(&samples, ctx.sim.seed)?;
    let f_h = f_h.unwrap_or_else(|| samples.iter().map(|s| s.0).fold(0.0, f64::max) / 2.0);
    if !fit.converged {
        log::warn!("output-model fit did not converge (residual {})", fmt_g(fit.residual));
    }
    let fmax = fmax_metric(&fit).unwrap_or_else(|e| {
        log::warn!("FMAX unavailable: {e}");
        f64::NAN
    });
    let header = "label,f_h,p1,p2,p3,converged,residual,sens,fmax";
    let row = format!(
        "{label},{},{},{},{},{},{},{},{}",
        fmt_g(f_h),
        fmt_g(fit.p1),
        fmt_g(fit.p2),
        fmt_g(fit.p3),
        fit.converged,
        fmt_g(fit.residual),
        fmt_g(sensitivity_metric(&fit, f_h)),
        fmt_g(fmax)
    );
    println!("{header}\n{row}");
    if ctx.out_given {
        let mut w = ctx.create("metrics.csv")?;
        writeln!(w, "{header}\n{row}")?;
        w.flush()?;
    }
    if fit.degenerate {
        return Err(Error::numerical("samples are flat; the output model is not identifiable"));
    }
    Ok(())
}
