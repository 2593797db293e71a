use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tcskin::eval::{DegreeBins, EvalReport, DEFAULT_ZERO_EPS};
use tcskin::formats::*;
use tcskin::pedsim::PedigreeDesign;
use tcskin::pipeline::{polygenic_phenotype, PipelineOutput};
use tcskin::reml::{fit_variance_components, profile_lambda, PhenotypeVector};
use tcskin::tuning::{auto_lambda_grid, BlackoutUnit, LambdaGrid, SmoothingMethod, SplitMode};
use tcskin::*;

mod header;

use header::Header;

#[derive(Parser, Debug)]
#[command(
    name = "tcskin",
    version,
    about = "Relationship matrices, treelet covariance smoothing and REML heritability"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output path: a file stem or directory depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Thread cap (defaults to all cores).
    #[arg(long, global = true, env = "TCSKIN_THREADS")]
    threads: Option<usize>,
    /// Omit the timestamp line from output headers.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate families, genotypes, truth matrices and a phenotype.
    Simulate(SimulateArgs),
    /// Estimate a GRM from a genotype panel.
    Grm(GrmArgs),
    /// Build the treelet of a GRM and write its rotations.
    Treelet(TreeletArgs),
    /// Threshold a GRM in the treelet (or identity) basis.
    Smooth(SmoothArgs),
    /// Choose the threshold by genome subsampling.
    Tune(TuneArgs),
    /// Fit heritability by REML.
    Reml(RemlArgs),
    /// Profile the REML likelihood over thresholds.
    Profile(ProfileArgs),
    /// Score estimates against a truth matrix by degree of relationship.
    Eval(EvalArgs),
    /// simulate, grm, tune, smooth, reml and eval in one run.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetName {
    Desk,
    Paper,
}

impl PresetName {
    fn preset(self, seed: u64) -> Preset {
        match self {
            PresetName::Desk => Preset::desk(seed),
            PresetName::Paper => Preset::paper(seed),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Design {
    Extended,
    Nuclear,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Method {
    Tcs,
    Simple,
    Pca,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Auto,
    Text,
    Binary,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Unit {
    Snps,
    Bp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SimilarityArg {
    Correlation,
    Covariance,
}

impl From<SimilarityArg> for Similarity {
    fn from(s: SimilarityArg) -> Self {
        match s {
            SimilarityArg::Correlation => Similarity::Correlation,
            SimilarityArg::Covariance => Similarity::Covariance,
        }
    }
}

/// Simulation overrides shared by `simulate` and `pipeline`.
#[derive(Args, Debug, Clone)]
struct SimOverrides {
    #[arg(long, value_enum, default_value = "desk")]
    preset: PresetName,
    #[arg(long, value_enum)]
    design: Option<Design>,
    #[arg(long)]
    families: Option<usize>,
    #[arg(long)]
    family_size: Option<usize>,
    #[arg(long)]
    chromosomes: Option<usize>,
    #[arg(long)]
    snps_per_chromosome: Option<usize>,
    #[arg(long)]
    h2: Option<f64>,
    #[arg(long)]
    causal: Option<usize>,
}

impl SimOverrides {
    fn apply(&self, seed: u64) -> Preset {
        let mut p = self.preset.preset(seed);
        let s = &mut p.simulation;
        if let Some(d) = self.design {
            s.design = match d {
                Design::Extended => PedigreeDesign::Extended,
                Design::Nuclear => PedigreeDesign::Nuclear,
            };
        }
        if let Some(v) = self.families {
            s.n_families = v;
        }
        if let Some(v) = self.family_size {
            s.family_size = v;
        }
        if let Some(v) = self.chromosomes {
            s.pool.chromosomes = v;
        }
        if let Some(v) = self.snps_per_chromosome {
            s.pool.snps_per_chromosome = v;
        }
        if let Some(v) = self.h2 {
            s.h2_true = v;
        }
        if let Some(v) = self.causal {
            s.causal_count = v;
        }
        p
    }
}

#[derive(Args, Debug, Clone)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimOverrides,
    /// Write the panel in the binary format.
    #[arg(long)]
    binary: bool,
}

#[derive(Args, Debug, Clone)]
struct PanelInput {
    /// Genotype panel.
    #[arg(long = "in")]
    input: PathBuf,
    /// SNP sidecar (`id chrom pos`); defaults to `<in>.snps` if present.
    #[arg(long)]
    snps: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    format: FormatArg,
}

impl PanelInput {
    fn load(&self) -> Result<GenotypePanel> {
        let format = match self.format {
            FormatArg::Auto => detect_genotype_format(&self.input)?,
            FormatArg::Text => GenotypeFormat::Text,
            FormatArg::Binary => GenotypeFormat::Binary,
        };
        load_genotypes(&self.input, format, self.snps.as_deref())
            .with_context(|| format!("reading {}", self.input.display()))
    }
}

#[derive(Args, Debug, Clone)]
struct GrmArgs {
    #[command(flatten)]
    panel: PanelInput,
    #[arg(long, default_value_t = 0.05)]
    maf: f64,
}

#[derive(Args, Debug, Clone)]
struct TreeletArgs {
    /// GRM stem (`<stem>.grm.bin`, `<stem>.grm.id`).
    #[arg(long)]
    grm: PathBuf,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long, value_enum, default_value = "correlation")]
    similarity: SimilarityArg,
}

#[derive(Args, Debug, Clone)]
struct SmoothArgs {
    #[arg(long)]
    grm: PathBuf,
    /// Threshold; alternatively read `lambda_hat` from a `tune` output.
    #[arg(long, conflicts_with = "tuning", required_unless_present = "tuning")]
    lambda: Option<f64>,
    #[arg(long)]
    tuning: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tcs")]
    method: Method,
    /// Rotations from `treelet`; rebuilt from the GRM when absent.
    #[arg(long)]
    treelet: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "correlation")]
    similarity: SimilarityArg,
    #[arg(long)]
    preserve_diagonal: bool,
    #[arg(long)]
    psd_repair: bool,
}

#[derive(Args, Debug, Clone)]
struct TuneArgs {
    #[command(flatten)]
    panel: PanelInput,
    /// Parameter defaults; the flags below override them.
    #[arg(long, value_enum, default_value = "desk")]
    preset: PresetName,
    #[arg(long, value_enum, default_value = "tcs")]
    method: Method,
    #[arg(long)]
    training_snps: Option<usize>,
    #[arg(long)]
    blackout: Option<u64>,
    #[arg(long, value_enum)]
    blackout_unit: Option<Unit>,
    #[arg(long)]
    test_snps: Option<usize>,
    #[arg(long)]
    subsamples: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Size of the automatic grid.
    #[arg(long, conflicts_with = "lambdas")]
    grid_points: Option<usize>,
    /// Explicit comma-separated grid.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long)]
    maf: Option<f64>,
    /// Split each chromosome into this many blocks instead of splitting by
    /// chromosome (single-chromosome panels).
    #[arg(long)]
    position_blocks: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct RemlArgs {
    #[arg(long)]
    grm: PathBuf,
    /// Phenotype file (`id value`).
    #[arg(long)]
    pheno: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct ProfileArgs {
    #[arg(long)]
    grm: PathBuf,
    #[arg(long)]
    pheno: PathBuf,
    #[arg(long, value_enum, default_value = "tcs")]
    method: Method,
    #[arg(long, default_value_t = 30, conflicts_with = "lambdas")]
    grid_points: usize,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
}

#[derive(Args, Debug, Clone)]
struct EvalArgs {
    /// Truth GRM stem.
    #[arg(long)]
    truth: PathBuf,
    /// Estimates as `name=stem`; repeatable.
    #[arg(long = "est", required = true, value_parser = parse_named)]
    estimates: Vec<(String, PathBuf)>,
    #[arg(long, default_value_t = DEFAULT_ZERO_EPS)]
    eps: f64,
    /// Pool degrees from this value up to 11 into one bin.
    #[arg(long)]
    pool_from: Option<u32>,
}

#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    #[command(flatten)]
    sim: SimOverrides,
    #[arg(long)]
    grm_snps: Option<usize>,
    #[arg(long)]
    training_snps: Option<usize>,
    #[arg(long)]
    subsamples: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    grid_points: Option<usize>,
}

fn parse_named(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected name=stem, got {s:?}")),
    }
}

fn out_path(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn method_of(m: Method) -> Result<SmoothingMethod> {
    match m {
        Method::Tcs => Ok(SmoothingMethod::Treelet),
        Method::Simple => Ok(SmoothingMethod::Simple),
        Method::Pca => bail!("--method pca is only available for profile"),
    }
}

fn lambda_from_tuning(path: &Path) -> Result<f64> {
    let table = CsvTable::read(path)?;
    table
        .comments
        .iter()
        .find_map(|c| c.strip_prefix("lambda_hat="))
        .with_context(|| format!("{} has no lambda_hat line", path.display()))?
        .parse()
        .with_context(|| format!("bad lambda_hat in {}", path.display()))
}

fn simulate(common: &Common, args: &SimulateArgs, header: &Header) -> Result<()> {
    let preset = args.sim.apply(common.seed);
    let dir = out_path(common, "sim");
    std::fs::create_dir_all(&dir)?;
    let hdr = header.with_line(format!("simulation: {:?}", preset.simulation));
    let sim = pedsim::simulate_panel(&preset.simulation)?;
    let panel_path = dir.join(if args.binary { "panel.bin" } else { "panel.txt" });
    if args.binary {
        write_genotypes_binary(&panel_path, &sim.panel)?;
    } else {
        write_genotypes_text(&panel_path, &sim.panel, &hdr.lines())?;
    }
    write_snp_meta(&with_suffix(&panel_path, ".snps"), sim.panel.snps(), &hdr.lines())?;
    write_pedigree(&dir.join("pedigree.txt"), &sim.pedigree, &hdr.lines())?;
    hdr.write_grm(&dir.join("truth"), &sim.truth)?;
    hdr.write_grm(&dir.join("realized"), &sim.realized)?;
    let common_snps = estimate_allele_freqs(sim.panel.clone())?.common_snps(preset.tuning.maf_min);
    let s = &preset.simulation;
    let y = polygenic_phenotype(&sim, &common_snps, s.causal_count, s.h2_true, common.seed)?;
    write_phenotype(&dir.join("phenotype.txt"), &y, &hdr.lines())?;
    println!(
        "simulated {} samples x {} SNPs into {}",
        sim.panel.n_samples(),
        sim.panel.n_snps(),
        dir.display()
    );
    Ok(())
}

fn grm(common: &Common, args: &GrmArgs, header: &Header) -> Result<()> {
    let panel = estimate_allele_freqs(args.panel.load()?)?;
    let z = scale_genotypes::<f64>(&panel, args.maf)?;
    let a = estimate_grm(&z)?;
    let stem = out_path(common, "study");
    ensure_parent(&stem)?;
    header.write_grm(&stem, &a)?;
    println!(
        "GRM of {} samples from {} SNPs written to {}",
        a.n(),
        z.n_snps(),
        grm_paths(&stem).0.display()
    );
    Ok(())
}

fn load_grm(stem: &Path) -> Result<RelationshipMatrix<f64>> {
    read_grm(stem, MatrixKind::RawEstimate).with_context(|| format!("reading GRM {}", stem.display()))
}

fn treelet(common: &Common, args: &TreeletArgs, header: &Header) -> Result<()> {
    let a = load_grm(&args.grm)?;
    let dec = build_treelet(
        &a,
        TreeletConfig {
            levels: args.levels,
            similarity: args.similarity.into(),
        },
    )?;
    let path = out_path(common, "treelet.csv");
    ensure_parent(&path)?;
    write_treelet(&path, &dec, &header.lines())?;
    println!("{} rotations written to {}", dec.rotations().len(), path.display());
    Ok(())
}

fn smooth(common: &Common, args: &SmoothArgs, header: &Header) -> Result<()> {
    let a = load_grm(&args.grm)?;
    let lambda = match (&args.lambda, &args.tuning) {
        (Some(l), _) => *l,
        (None, Some(path)) => lambda_from_tuning(path)?,
        (None, None) => unreachable!("clap requires one of --lambda and --tuning"),
    };
    let opts = SmoothOptions {
        preserve_diagonal: args.preserve_diagonal,
        psd_repair: args.psd_repair,
    };
    let smoothed = match method_of(args.method)? {
        SmoothingMethod::Simple => simple_threshold(&a, lambda, opts)?,
        SmoothingMethod::Treelet => {
            let dec = match &args.treelet {
                Some(path) => {
                    let (rotations, similarity) = read_treelet(path)?;
                    TreeletDecomposition::from_rotations(&a, rotations, similarity)?
                }
                None => build_treelet(
                    &a,
                    TreeletConfig {
                        levels: None,
                        similarity: args.similarity.into(),
                    },
                )?,
            };
            smooth_covariance(&a, &dec, lambda, opts)?
        }
    };
    let stem = out_path(common, "smoothed");
    ensure_parent(&stem)?;
    header
        .with_line(format!("lambda: {lambda}"))
        .write_grm(&stem, &smoothed.values)?;
    println!(
        "lambda {lambda}: {} coefficients zeroed, written to {}",
        smoothed.zeroed_count,
        grm_paths(&stem).0.display()
    );
    Ok(())
}

fn tune(common: &Common, args: &TuneArgs, header: &Header) -> Result<()> {
    let panel = args.panel.load()?;
    let mut cfg = args.preset.preset(common.seed).tuning;
    cfg.method = method_of(args.method)?;
    macro_rules! set {
        ($($field:ident <- $value:expr),*) => {$(if let Some(v) = $value { cfg.$field = v; })*};
    }
    set!(
        training_snps <- args.training_snps,
        blackout <- args.blackout,
        test_snps <- args.test_snps,
        test_subsamples <- args.subsamples,
        repeats <- args.repeats,
        maf_min <- args.maf
    );
    if let Some(u) = args.blackout_unit {
        cfg.blackout_unit = match u {
            Unit::Snps => BlackoutUnit::Snps,
            Unit::Bp => BlackoutUnit::BasePairs,
        };
    }
    if let Some(points) = args.grid_points {
        cfg.lambda_grid = LambdaGrid::Auto { points };
    }
    if let Some(l) = &args.lambdas {
        cfg.lambda_grid = LambdaGrid::Explicit(l.clone());
    }
    if let Some(b) = args.position_blocks {
        cfg.split = SplitMode::PositionBlocks(b);
    }
    let result = select_lambda::<f64>(&panel, &cfg)?;
    let path = out_path(common, "tuning.csv");
    ensure_parent(&path)?;
    write_tuning_csv(&path, &result, &header.with_line(format!("config: {cfg:?}")).lines())?;
    println!("lambda_hat = {} ({})", result.lambda_hat, cfg.method.as_str());
    Ok(())
}

fn load_pheno(path: &Path, a: &RelationshipMatrix<f64>) -> Result<PhenotypeVector<f64>> {
    let y: PhenotypeVector<f64> = read_phenotype(path)?;
    Ok(y.aligned_to(a.sample_ids())?)
}

fn reml(common: &Common, args: &RemlArgs, header: &Header) -> Result<()> {
    let a = load_grm(&args.grm)?;
    let y = load_pheno(&args.pheno, &a)?;
    let fit = fit_variance_components(&y, &a)?;
    let path = out_path(common, "reml.csv");
    ensure_parent(&path)?;
    write_fit_csv(&path, None, &fit, &header.lines())?;
    println!(
        "h2 = {:.4} (sigma_g2 = {:.4}, sigma_e2 = {:.4})",
        fit.h2, fit.sigma_g2, fit.sigma_e2
    );
    Ok(())
}

fn profile(common: &Common, args: &ProfileArgs, header: &Header) -> Result<()> {
    let a = load_grm(&args.grm)?;
    let y = load_pheno(&args.pheno, &a)?;
    let dec = build_treelet(&a, TreeletConfig::default())?;
    let grid = match &args.lambdas {
        Some(l) => l.clone(),
        None => auto_lambda_grid(dec.transformed(), args.grid_points),
    };
    let opts = SmoothOptions::default();
    let result = match args.method {
        Method::Tcs => profile_lambda(&y, &a, &dec, &grid, opts)?,
        Method::Simple => profile_lambda(&y, &a, &DiracBasis::new(&a), &grid, opts)?,
        Method::Pca => profile_lambda(&y, &a, &PcaBasis::new(&a), &grid, opts)?,
    };
    let path = out_path(common, "profile.csv");
    ensure_parent(&path)?;
    write_profile_csv(&path, &result.curve, result.lambda_star, &header.lines())?;
    println!("lambda* = {} with h2 = {:.4}", result.lambda_star, result.best.h2);
    Ok(())
}

fn eval(common: &Common, args: &EvalArgs, header: &Header) -> Result<()> {
    let truth = load_grm(&args.truth)?;
    let bins = DegreeBins {
        pool_from: args.pool_from,
        ..DegreeBins::default()
    };
    let mut report = EvalReport::new();
    for (name, stem) in &args.estimates {
        let est = load_grm(stem)?;
        report.add(name, &truth, &est, &bins, args.eps)?;
    }
    let prefix = out_path(common, "eval");
    ensure_parent(&prefix)?;
    write_eval(&prefix, &report, header)?;
    for (name, _) in &args.estimates {
        println!("{name}: overall RMSE {:.6}", report.overall(name).unwrap_or(f64::NAN));
    }
    Ok(())
}

fn write_eval(prefix: &Path, report: &EvalReport, header: &Header) -> Result<()> {
    write_rmse_csv(&with_suffix(prefix, ".rmse.csv"), &report.per_degree, &header.lines())?;
    write_zero_csv(
        &with_suffix(prefix, ".zero.csv"),
        &report.zero_proportions,
        &header.lines(),
    )?;
    Ok(())
}

fn pipeline(common: &Common, args: &PipelineArgs, header: &Header) -> Result<()> {
    let mut preset = args.sim.apply(common.seed);
    if let Some(v) = args.grm_snps {
        preset.grm_snps = v;
    }
    if let Some(v) = args.training_snps {
        preset.tuning.training_snps = v;
    }
    if let Some(v) = args.subsamples {
        preset.tuning.test_subsamples = v;
    }
    if let Some(v) = args.repeats {
        preset.tuning.repeats = v;
    }
    if let Some(points) = args.grid_points {
        preset.tuning.lambda_grid = LambdaGrid::Auto { points };
    }
    let out = run_pipeline(&preset)?;
    let dir = out_path(common, "pipeline");
    std::fs::create_dir_all(&dir)?;
    let hdr = header.with_line(format!("preset: {preset:?}"));
    write_pipeline(&dir, &out, &hdr)?;
    for f in &out.fits {
        match &f.fit {
            Ok(v) => println!(
                "{:>6}: h2 {:.4}  RMSE {:.6}",
                f.method,
                v.h2,
                out.report.overall(&f.method).unwrap_or(f64::NAN)
            ),
            Err(e) => println!("{:>6}: REML failed ({e})", f.method),
        }
    }
    println!(
        "lambda_hat tcs {} simple {}; outputs in {}",
        out.tcs_tuning.lambda_hat,
        out.simple_tuning.lambda_hat,
        dir.display()
    );
    Ok(())
}

fn write_pipeline(dir: &Path, out: &PipelineOutput, hdr: &Header) -> Result<()> {
    let lines = hdr.lines();
    write_genotypes_text(&dir.join("panel.txt"), &out.sim.panel, &lines)?;
    write_snp_meta(&dir.join("panel.txt.snps"), out.sim.panel.snps(), &lines)?;
    write_pedigree(&dir.join("pedigree.txt"), &out.sim.pedigree, &lines)?;
    write_phenotype(&dir.join("phenotype.txt"), &out.phenotype, &lines)?;
    hdr.write_grm(&dir.join("truth"), &out.sim.truth)?;
    hdr.write_grm(&dir.join("raw"), &out.a_hat)?;
    hdr.write_grm(&dir.join("tcs"), &out.tcs.values)?;
    hdr.write_grm(&dir.join("simple"), &out.simple.values)?;
    write_treelet(&dir.join("treelet.csv"), &out.treelet, &lines)?;
    write_tuning_csv(&dir.join("tuning_tcs.csv"), &out.tcs_tuning, &lines)?;
    write_tuning_csv(&dir.join("tuning_simple.csv"), &out.simple_tuning, &lines)?;
    for f in &out.fits {
        let path = dir.join(format!("reml_{}.csv", f.method));
        match &f.fit {
            Ok(v) => write_fit_csv(&path, f.lambda, v, &lines)?,
            Err(e) => log::warn!("no REML output for {}: {e}", f.method),
        }
    }
    write_eval(&dir.join("eval"), &out.report, hdr)
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let header = Header::new(&cli.command, common);
    match &cli.command {
        Command::Simulate(a) => simulate(common, a, &header),
        Command::Grm(a) => grm(common, a, &header),
        Command::Treelet(a) => treelet(common, a, &header),
        Command::Smooth(a) => smooth(common, a, &header),
        Command::Tune(a) => tune(common, a, &header),
        Command::Reml(a) => reml(common, a, &header),
        Command::Profile(a) => profile(common, a, &header),
        Command::Eval(a) => eval(common, a, &header),
        Command::Pipeline(a) => pipeline(common, a, &header),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
