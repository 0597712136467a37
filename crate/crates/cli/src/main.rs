//! papergrain: synthesize paper microstructure, render and align captures,
//! extract norm maps, run enrollment/verification against a directory store,
//! and execute the physical and digital attack suites.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use papergrain_cli::store::DirStore;
use papergrain_cli::{clock, formats, report, CliError, Result};
use papergrain_core::config::{CaptureMode, RunConfig};
use papergrain_core::forge::{blackbox_attack, latent_greedy, AttackMethod, GreedyParams};
use papergrain_core::rng;
use papergrain_core::tamper::{apply_attack, degradation_sweep, AttackKind, AttackSpec};
use papergrain_core::{
    align, collision_log10_probability, collision_monte_carlo, extract_feature, generate_patch,
    histogram_report, render, score, CodecPair, CollisionQuery, LatentCodec, LightConfig, NormMap,
};

#[derive(Parser)]
#[command(
    name = "papergrain",
    version,
    about = "Simulator and attack toolkit for paper-surface (norm map) authentication"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output path; its meaning depends on the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a paper surface patch (--out file.patch).
    Generate,
    /// Render captures of a patch (--out sidecar.json, images beside it).
    Render(RenderArgs),
    /// Re-align a capture set and report recovered offsets (--out sidecar.json).
    Align(CaptureArgs),
    /// Extract a norm map from a capture set (--out file.nmap).
    Extract(CaptureArgs),
    /// Enroll a norm map under an id.
    Enroll(EnrollArgs),
    /// Verify a query map against the store and append to its query log.
    Verify(VerifyArgs),
    /// Physical and digital attack suites.
    #[command(subcommand)]
    Attack(AttackCmd),
    /// Latent codec operations.
    #[command(subcommand)]
    Codec(CodecCmd),
    /// Derived CSV reports.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Collision probability of independent norm maps.
    Collide(CollideArgs),
}

#[derive(Args)]
struct RenderArgs {
    /// Surface to photograph.
    #[arg(long, value_name = "FILE")]
    patch: PathBuf,
    /// Sensor noise in gray levels; overrides the config value.
    #[arg(long)]
    noise_sigma: Option<f64>,
}

#[derive(Args)]
struct CaptureArgs {
    /// Capture sidecar written by `render`.
    #[arg(long, value_name = "FILE")]
    capture: PathBuf,
}

#[derive(Args)]
struct EnrollArgs {
    /// Store directory; created with the configured threshold when absent.
    #[arg(long, value_name = "DIR")]
    store: PathBuf,
    #[arg(long)]
    id: String,
    /// Template to enroll.
    #[arg(long, value_name = "FILE")]
    map: PathBuf,
    /// Capture source tag recorded in the index.
    #[arg(long, value_enum, default_value_t = SourceArg::Scanner)]
    source: SourceArg,
}

#[derive(Args)]
#[command(group(ArgGroup::new("target").required(true).args(["id", "search"])))]
struct VerifyArgs {
    #[arg(long, value_name = "DIR")]
    store: PathBuf,
    /// Query map.
    #[arg(long, value_name = "FILE")]
    map: PathBuf,
    /// Verify against this enrolled id.
    #[arg(long)]
    id: Option<String>,
    /// Search the whole store for the best match.
    #[arg(long)]
    search: bool,
}

#[derive(Subcommand)]
enum AttackCmd {
    /// Physical denial-of-service sweep against one patch (--out table.csv).
    Phys(PhysArgs),
    /// Digital forgery against one enrolled target.
    Digital(DigitalArgs),
}

#[derive(Args)]
struct PhysArgs {
    /// Surface to damage; it is enrolled internally as the reference.
    #[arg(long, value_name = "FILE")]
    patch: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Comma-separated coverage fractions.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.10, 0.25, 0.50, 0.75])]
    strength: Vec<f64>,
    /// Attack trials per strength.
    #[arg(long, default_value_t = 10)]
    trials: usize,
}

#[derive(Args)]
struct DigitalArgs {
    #[arg(long, value_name = "DIR")]
    store: PathBuf,
    /// baseline | latent | nm | powell | cg
    #[arg(long, value_parser = parse_method)]
    method: AttackMethod,
    #[arg(long)]
    target_id: String,
    /// Oracle evaluation budget.
    #[arg(long, default_value_t = 50_000)]
    budget: usize,
    /// Latent codec pair fitted on a disjoint holdout.
    #[arg(long, value_name = "FILE")]
    codec: PathBuf,
    /// Write the best-score trajectory as CSV.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// Write the final forged map.
    #[arg(long, value_name = "FILE")]
    forged: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CodecCmd {
    /// Fit a latent codec on a directory of norm maps (--out codec.lpc).
    Fit(CodecFitArgs),
}

#[derive(Args)]
struct CodecFitArgs {
    /// Directory holding the holdout .nmap files (read in name order).
    #[arg(long, value_name = "DIR")]
    maps: PathBuf,
    /// Cumulative explained-variance target in (0, 1].
    #[arg(long, default_value_t = 0.99)]
    variance_target: f64,
    /// Fit one codec over both components instead of a per-component pair.
    #[arg(long)]
    joint: bool,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Matched vs unmatched score histogram from a synthetic run (--out csv).
    Hist(HistArgs),
    /// Latent-greedy subset-fraction sweep against one target (--out csv).
    Sweep(FractionSweepArgs),
}

#[derive(Args)]
struct HistArgs {
    /// Distinct sheets to synthesize.
    #[arg(long, default_value_t = 8)]
    sheets: usize,
    /// Query scans per sheet.
    #[arg(long, default_value_t = 3)]
    scans: usize,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Damage every sheet before the query scans.
    #[arg(long, value_enum)]
    attack_kind: Option<KindArg>,
    #[arg(long, default_value_t = 0.25)]
    attack_strength: f64,
}

#[derive(Args)]
struct FractionSweepArgs {
    #[arg(long, value_name = "DIR")]
    store: PathBuf,
    #[arg(long, value_name = "FILE")]
    codec: PathBuf,
    #[arg(long)]
    target_id: String,
    /// Comma-separated fractions of latent dims perturbed per step.
    #[arg(long, value_delimiter = ',', default_values_t = [0.005, 0.01, 0.02, 0.05, 0.10])]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 50_000)]
    budget: usize,
}

#[derive(Args)]
struct CollideArgs {
    /// Feature dimensions.
    #[arg(long, default_value_t = 40_000)]
    dims: usize,
    /// Similarity radius in feature units.
    #[arg(long, default_value_t = 0.3)]
    epsilon: f64,
    /// Sampling-ball radius in feature units.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Cross-check with brute-force sampling (low dims only).
    #[arg(long)]
    monte_carlo: bool,
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Scratch,
    Patch,
    Scribble,
    #[value(alias = "crumple_random")]
    CrumpleRandom,
    #[value(alias = "crumple_fold")]
    CrumpleFold,
}

impl From<KindArg> for AttackKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Scratch => AttackKind::Scratch,
            KindArg::Patch => AttackKind::Patch,
            KindArg::Scribble => AttackKind::Scribble,
            KindArg::CrumpleRandom => AttackKind::CrumpleRandom,
            KindArg::CrumpleFold => AttackKind::CrumpleFold,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Scanner,
    Mobile,
}

impl From<SourceArg> for CaptureMode {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Scanner => CaptureMode::Scanner,
            SourceArg::Mobile => CaptureMode::Mobile,
        }
    }
}

fn parse_method(s: &str) -> std::result::Result<AttackMethod, String> {
    AttackMethod::parse(s).map_err(|_| "expected one of baseline|latent|nm|powell|cg".to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    match cli.cmd {
        Cmd::Generate => cmd_generate(&cfg, require_out(&cli.global)?),
        Cmd::Render(a) => cmd_render(&cfg, &a, require_out(&cli.global)?),
        Cmd::Align(a) => cmd_align(&a, require_out(&cli.global)?),
        Cmd::Extract(a) => cmd_extract(&a, require_out(&cli.global)?),
        Cmd::Enroll(a) => cmd_enroll(&cfg, &a),
        Cmd::Verify(a) => cmd_verify(&a),
        Cmd::Attack(AttackCmd::Phys(a)) => cmd_attack_phys(&cfg, &a, require_out(&cli.global)?),
        Cmd::Attack(AttackCmd::Digital(a)) => cmd_attack_digital(&cfg, &a),
        Cmd::Codec(CodecCmd::Fit(a)) => cmd_codec_fit(&a, require_out(&cli.global)?),
        Cmd::Report(ReportCmd::Hist(a)) => cmd_report_hist(&cfg, &a, require_out(&cli.global)?),
        Cmd::Report(ReportCmd::Sweep(a)) => {
            cmd_report_sweep(&cfg, &a, require_out(&cli.global)?)
        }
        Cmd::Collide(a) => cmd_collide(&cfg, &a),
    }
}

fn resolve_config(global: &Global) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => {
            let raw = fs::read_to_string(path).map_err(CliError::io(path))?;
            toml::from_str(&raw)
                .map_err(|e| CliError::format(path, format!("bad config: {e}")))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_out(global: &Global) -> Result<PathBuf> {
    global
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("--out is required for this command".into()))
}

fn lights_from(cfg: &RunConfig) -> Result<LightConfig> {
    match cfg.mode {
        CaptureMode::Scanner => Ok(LightConfig::scanner(cfg.intensity)),
        CaptureMode::Mobile => {
            Ok(LightConfig::mobile(cfg.capture_count, cfg.intensity, cfg.max_shift)?)
        }
    }
}

fn cmd_generate(cfg: &RunConfig, out: PathBuf) -> Result<()> {
    let patch =
        generate_patch(cfg.seed, cfg.patch_size, cfg.correlation_length, cfg.roughness)?;
    formats::write_patch(&out, &patch)?;
    println!("seed: {}", cfg.seed);
    println!("wrote {} ({}x{})", out.display(), patch.width(), patch.height());
    Ok(())
}

fn cmd_render(cfg: &RunConfig, args: &RenderArgs, out: PathBuf) -> Result<()> {
    let patch = formats::read_patch(&args.patch)?;
    let lights = lights_from(cfg)?;
    let noise = args.noise_sigma.unwrap_or(cfg.noise_sigma);
    let capture = render(&patch, &lights, noise, cfg.seed)?;
    formats::write_capture(&out, &capture)?;
    println!("seed: {}", cfg.seed);
    println!(
        "wrote {} ({} images, {}x{}, noise_sigma {noise})",
        out.display(),
        capture.images.len(),
        capture.width,
        capture.height
    );
    Ok(())
}

fn cmd_align(args: &CaptureArgs, out: PathBuf) -> Result<()> {
    let capture = formats::read_capture(&args.capture)?;
    let alignment = align(&capture)?;
    formats::write_capture(&out, &alignment.capture)?;
    for (i, (off, ncc)) in alignment.offsets.iter().zip(&alignment.ncc).enumerate() {
        println!("image {i}: offset ({}, {}), ncc {:.4}", off[0], off[1], ncc);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_extract(args: &CaptureArgs, out: PathBuf) -> Result<()> {
    let capture = formats::read_capture(&args.capture)?;
    let map = extract_feature(&capture)?;
    formats::write_nmap(&out, &map)?;
    println!("wrote {} ({}x{})", out.display(), map.width(), map.height());
    Ok(())
}

fn cmd_enroll(cfg: &RunConfig, args: &EnrollArgs) -> Result<()> {
    let map = formats::read_nmap(&args.map)?;
    let store = DirStore::open_or_init(&args.store, cfg.threshold)?;
    store.enroll(&args.id, &map, args.source.into(), clock::timestamp()?)?;
    println!("enrolled {} ({} records)", args.id, store.index()?.len());
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let store = DirStore::open(&args.store)?;
    let mut mem = store.load()?;
    let map = formats::read_nmap(&args.map)?;
    let outcome = mem.verify(&map, args.id.as_deref(), clock::timestamp()?)?;
    store.append_query_log(mem.query_log())?;
    println!("corr_x: {:.6}", outcome.score.corr_x);
    println!("corr_y: {:.6}", outcome.score.corr_y);
    println!("min_corr: {:.6}", outcome.score.min_component());
    println!("accepted: {}", outcome.accepted);
    if let Some(id) = &outcome.matched_id {
        println!("matched_id: {id}");
    }
    Ok(())
}

fn cmd_attack_phys(cfg: &RunConfig, args: &PhysArgs, out: PathBuf) -> Result<()> {
    let patch = formats::read_patch(&args.patch)?;
    let rows = degradation_sweep(&patch, args.kind.into(), &args.strength, args.trials, cfg)?;
    formats::write_atomic(&out, report::sweep_csv(&rows).as_bytes())?;
    println!("seed: {}", cfg.seed);
    println!("wrote {} ({} strengths x {} trials)", out.display(), rows.len(), args.trials);
    Ok(())
}

fn cmd_attack_digital(cfg: &RunConfig, args: &DigitalArgs) -> Result<()> {
    let store = DirStore::open(&args.store)?;
    let mut mem = store.load()?;
    if mem.get(&args.target_id).is_none() {
        return Err(papergrain_core::Error::UnknownId(args.target_id.clone()).into());
    }
    let codecs = formats::read_codec(&args.codec)?.into_pair(&args.codec)?;
    let tau = mem.threshold();
    let ts = clock::timestamp()?;
    let target = args.target_id.clone();
    let mut oracle = |m: &NormMap| mem.verify(m, Some(&target), ts).map(|o| o.score);
    let trace = blackbox_attack(
        &mut oracle,
        &args.target_id,
        &codecs,
        None,
        args.method,
        tau,
        args.budget,
        cfg.seed,
    )?;
    store.append_query_log(mem.query_log())?;
    if let Some(path) = &args.trace {
        formats::write_atomic(path, report::trace_csv(&trace).as_bytes())?;
    }
    if let Some(path) = &args.forged {
        formats::write_nmap(path, &trace.forged)?;
    }
    println!("seed: {}", cfg.seed);
    println!("method: {}", args.method.as_str());
    println!("target_id: {}", args.target_id);
    println!("success: {}", trace.success);
    println!("function_evals: {}", trace.function_evals);
    if let Some(rho) = trace.rho_trajectory.last() {
        println!("rho_best: {rho:.6}");
    }
    Ok(())
}

fn cmd_codec_fit(args: &CodecFitArgs, out: PathBuf) -> Result<()> {
    let holdout = load_nmap_dir(&args.maps)?;
    if args.joint {
        let codec = LatentCodec::fit_joint(&holdout, args.variance_target)?;
        formats::write_codec_single(&out, &codec)?;
        println!(
            "fitted joint codec: d {}, m {}, explained {:.4}",
            codec.d(),
            codec.m(),
            codec.explained_fraction()
        );
    } else {
        let pair = CodecPair::fit(&holdout, args.variance_target)?;
        formats::write_codec_pair(&out, &pair)?;
        println!(
            "fitted codec pair: d {}, m_x {}, m_y {}, explained {:.4}/{:.4}",
            pair.x.d(),
            pair.x.m(),
            pair.y.m(),
            pair.x.explained_fraction(),
            pair.y.explained_fraction()
        );
    }
    println!("wrote {} (from {} maps)", out.display(), holdout.len());
    Ok(())
}

fn load_nmap_dir(dir: &Path) -> Result<Vec<NormMap>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(CliError::io(dir))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(CliError::io(dir))?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "nmap"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::format(dir, "no .nmap files found"));
    }
    paths.iter().map(|p| formats::read_nmap(p)).collect()
}

fn cmd_report_hist(cfg: &RunConfig, args: &HistArgs, out: PathBuf) -> Result<()> {
    if args.sheets < 2 || args.scans == 0 {
        return Err(CliError::Usage("need at least 2 sheets and 1 scan".into()));
    }
    let lights = lights_from(cfg)?;
    let mut templates = Vec::with_capacity(args.sheets);
    let mut patches = Vec::with_capacity(args.sheets);
    for s in 0..args.sheets {
        let patch = generate_patch(
            rng::derive(cfg.seed, "hist-sheet", &[s as u64]),
            cfg.patch_size,
            cfg.correlation_length,
            cfg.roughness,
        )?;
        // Enrollment captures run at the scanner's zero noise floor.
        let capture =
            render(&patch, &lights, 0.0, rng::derive(cfg.seed, "hist-enroll", &[s as u64]))?;
        templates.push(extract_feature(&capture)?);
        patches.push(patch);
    }

    let mut matched = Vec::new();
    let mut unmatched = Vec::new();
    let mut failures = 0usize;
    for s in 0..args.sheets {
        for k in 0..args.scans {
            let su = s as u64;
            let ku = k as u64;
            let surface = match args.attack_kind {
                Some(kind) => {
                    let spec = AttackSpec {
                        kind: kind.into(),
                        strength: args.attack_strength,
                        seed: rng::derive(cfg.seed, "hist-attack", &[su, ku]),
                    };
                    apply_attack(&patches[s], &spec)?.surface
                }
                None => patches[s].clone(),
            };
            let capture = render(
                &surface,
                &lights,
                cfg.noise_sigma,
                rng::derive(cfg.seed, "hist-scan", &[su, ku]),
            )?;
            let query = match extract_feature(&capture) {
                Ok(q) => q,
                Err(papergrain_core::Error::AlignmentFailed { .. }) => {
                    failures += 1;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            for (t, template) in templates.iter().enumerate() {
                let rho = score(&query, template)?.min_component();
                if t == s {
                    matched.push(rho);
                } else {
                    unmatched.push(rho);
                }
            }
        }
    }

    let hist = histogram_report(&matched, &unmatched, args.bins)?;
    formats::write_atomic(&out, report::hist_csv(&hist).as_bytes())?;
    println!("seed: {}", cfg.seed);
    println!("matched: {}", hist.matched_total);
    println!("unmatched: {}", hist.unmatched_total);
    println!("failures: {failures}");
    println!("gap: {:.6}", hist.gap);
    println!("overlap: {}", hist.overlap);
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_report_sweep(cfg: &RunConfig, args: &FractionSweepArgs, out: PathBuf) -> Result<()> {
    let store = DirStore::open(&args.store)?;
    let mut mem = store.load()?;
    if mem.get(&args.target_id).is_none() {
        return Err(papergrain_core::Error::UnknownId(args.target_id.clone()).into());
    }
    let codecs = formats::read_codec(&args.codec)?.into_pair(&args.codec)?;
    let tau = mem.threshold();
    let ts = clock::timestamp()?;
    // Same step rule as the latent attack driver: twice the holdout's
    // measured per-dimension spread.
    let (w, h) = codecs.dims();
    let d = (w * h) as f64;
    let delta =
        2.0 * ((codecs.x.total_variance() + codecs.y.total_variance()) / (2.0 * d)).sqrt();

    let mut rows = Vec::with_capacity(args.fractions.len());
    for (i, &fraction) in args.fractions.iter().enumerate() {
        let params = GreedyParams { delta, subset_fraction: fraction, max_iters: usize::MAX };
        let target = args.target_id.clone();
        let mut oracle =
            |m: &NormMap| mem.verify(m, Some(&target), ts).map(|o| o.score);
        let trace = latent_greedy(
            &mut oracle,
            &args.target_id,
            &codecs,
            None,
            &params,
            tau,
            args.budget,
            rng::derive(cfg.seed, "fraction-sweep", &[i as u64]),
        )?;
        rows.push(report::FractionRow {
            subset_fraction: fraction,
            function_evals: trace.function_evals,
            best_rho: trace.rho_trajectory.last().copied().unwrap_or(f64::NAN),
            success: trace.success,
        });
    }
    store.append_query_log(mem.query_log())?;
    formats::write_atomic(&out, report::fraction_sweep_csv(&rows).as_bytes())?;
    println!("seed: {}", cfg.seed);
    println!("wrote {} ({} fractions)", out.display(), rows.len());
    Ok(())
}

fn cmd_collide(cfg: &RunConfig, args: &CollideArgs) -> Result<()> {
    let query =
        CollisionQuery { dims: args.dims, epsilon: args.epsilon, radius: args.radius };
    let log10_p = collision_log10_probability(&query)?;
    let mantissa = 10f64.powf(log10_p - log10_p.floor());
    println!("log10_p: {log10_p:.6}");
    println!("p: {mantissa:.2}e{}", log10_p.floor() as i64);
    if args.monte_carlo {
        let est = collision_monte_carlo(&query, args.samples, cfg.seed)?;
        println!("seed: {}", cfg.seed);
        println!("mc_probability: {:.6e}", est.probability);
        println!("mc_log10_p: {:.6}", est.log10_probability);
        println!("mc_hits: {} / {}", est.hits, est.samples);
    }
    Ok(())
}
