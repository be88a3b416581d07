use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qgc::bootstrap::Resampling;
use qgc::kv::KvDoc;
use qgc::limitsim::{CvCache, NullFamily, NullSampler};
use qgc::montecarlo::profiles::{self, Scale};
use qgc::regimes::{detect_regimes, RegimeOptions, Variant};
use qgc::stats::{Method, QuantileGrid, TestRunner};
use qgc_cli::adl::{build_adl, AdlSpec};
use qgc_cli::data::ingest_csv;
use std::path::PathBuf;
use std::sync::Arc;

/// Granger causality tests in conditional quantiles, robust to structural
/// instability.
#[derive(Parser)]
#[command(name = "qgc", version, about)]
struct Cli {
    /// Cap on worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Flat key-value file supplying defaults for any long flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one test on a dataset.
    Test(TestArgs),
    /// Pre-simulate and cache a critical value table.
    Cv(CvArgs),
    /// Identify regimes of causality with the sequential procedure.
    Regimes(RegimesArgs),
    /// Run a named Monte Carlo profile.
    Mc(McArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV file with a header line; a column named `date` is kept as labels.
    #[arg(long)]
    data: PathBuf,
    /// Dependent column.
    #[arg(long)]
    dep: String,
    /// Comma-separated causal columns (the tested block).
    #[arg(long, value_delimiter = ',')]
    causal: Vec<String>,
    /// Comma-separated control columns, used contemporaneously.
    #[arg(long, value_delimiter = ',', default_value = "")]
    controls: Vec<String>,
    /// Lag order for both blocks (overridden by the specific flags).
    #[arg(long, default_value_t = 1)]
    lags: usize,
    /// Lag order of the dependent block.
    #[arg(long)]
    lags_dep: Option<usize>,
    /// Lag order of the causal block.
    #[arg(long)]
    lags_causal: Option<usize>,
    /// Drop the intercept column.
    #[arg(long, default_value_t = false)]
    no_intercept: bool,
    /// Number of polynomial trend columns.
    #[arg(long, default_value_t = 0)]
    trend: usize,
}

impl DataArgs {
    fn load(&self) -> Result<(qgc_cli::adl::AdlDesign, usize)> {
        let data = ingest_csv(&self.data)?;
        if data.dropped > 0 {
            eprintln!("warning: dropped {} rows with missing cells", data.dropped);
        }
        let spec = AdlSpec {
            dependent: self.dep.clone(),
            causal: self.causal.iter().filter(|c| !c.is_empty()).cloned().collect(),
            controls: self.controls.iter().filter(|c| !c.is_empty()).cloned().collect(),
            lags_dep: self.lags_dep.unwrap_or(self.lags),
            lags_causal: self.lags_causal.unwrap_or(self.lags),
            include_intercept: !self.no_intercept,
            trend_terms: self.trend,
        };
        let design = build_adl(&data, &spec)?;
        let p = design.p;
        Ok((design, p))
    }
}

#[derive(Args, Clone)]
struct SimArgs {
    /// Seed for bootstrap draws and null simulation.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Bootstrap replications.
    #[arg(long, default_value_t = 499)]
    b: usize,
    /// Replications for simulated null tables.
    #[arg(long, default_value_t = 9999)]
    sim_reps: usize,
    /// Time steps of the simulated limit processes.
    #[arg(long, default_value_t = 1000)]
    lambda_steps: usize,
    /// Directory for cached critical value tables.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Row resampling scheme for the bootstrap.
    #[arg(long, value_enum, default_value_t = ResampleArg::Index)]
    resample: ResampleArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResampleArg {
    Index,
    Multinomial,
}

impl SimArgs {
    fn cache(&self) -> Result<Arc<CvCache>> {
        Ok(match &self.cache_dir {
            Some(dir) => Arc::new(CvCache::with_dir(dir.clone())?),
            None => Arc::new(CvCache::in_memory()),
        })
    }

    fn runner(&self, method: Method) -> Result<TestRunner> {
        let mut runner = TestRunner::new(method, self.seed)
            .with_cache(self.cache()?)
            .with_bootstrap_b(self.b)
            .with_sim_reps(self.sim_reps);
        runner.lambda_steps = self.lambda_steps;
        runner.resampling = match self.resample {
            ResampleArg::Index => Resampling::Index,
            ResampleArg::Multinomial => Resampling::Multinomial,
        };
        Ok(runner)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StatArg {
    /// Fixed-quantile LM test (needs --tau).
    Lm,
    /// supLM over the quantile grid.
    Sup,
    /// expLM over the quantile grid.
    Exp,
    /// sup-Wald benchmark.
    Supwald,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Asy,
    Adj,
    Boot,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Asy => Method::Asymptotic,
            MethodArg::Adj => Method::Adjusted,
            MethodArg::Boot => Method::Bootstrap,
        }
    }
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    sim: SimArgs,
    /// Single quantile level (conflicts with --tau-range).
    #[arg(long, conflicts_with = "tau_range")]
    tau: Option<f64>,
    /// Quantile grid lo:hi:step.
    #[arg(long, default_value = "0.05:0.95:0.01")]
    tau_range: String,
    #[arg(long, value_enum, default_value_t = StatArg::Exp)]
    stat: StatArg,
    /// Critical value method; defaults to boot for sup/exp, adj for lm.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Write the machine-readable result here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    /// Statistic family of the null.
    #[arg(long)]
    family: String,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value = "0.05:0.95:0.01")]
    tau_range: String,
    #[arg(long, default_value_t = 1000)]
    lambda_steps: usize,
    #[arg(long, default_value_t = 9999)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for the cached table.
    #[arg(long, default_value = "cv-cache")]
    cache_dir: PathBuf,
}

#[derive(Args)]
struct RegimesArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value = "0.05:0.95:0.01")]
    tau_range: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Boot)]
    method: MethodArg,
    /// sup- or exp-weighted statistics.
    #[arg(long, value_enum, default_value_t = VariantArg::Exp)]
    variant: VariantArg,
    /// Run the confirmation pass over the flanking windows.
    #[arg(long, default_value_t = false)]
    refine: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Sup,
    Exp,
}

#[derive(Args)]
struct McArgs {
    /// Profile name.
    #[arg(value_parser = ["table1", "fig3", "table3", "appB"])]
    profile: String,
    /// desk or full replication counts.
    #[arg(value_parser = ["desk", "full"], default_value = "desk")]
    scale: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for the emitted tables.
    #[arg(long, default_value = "mc-out")]
    out: PathBuf,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

fn parse_range(spec: &str) -> Result<QuantileGrid> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("--tau-range must be lo:hi:step, got `{spec}`");
    }
    let lo: f64 = parts[0].parse().context("bad lo")?;
    let hi: f64 = parts[1].parse().context("bad hi")?;
    let step: f64 = parts[2].parse().context("bad step")?;
    Ok(QuantileGrid::new(lo, hi, step)?)
}

fn result_to_kv(r: &qgc::stats::TestResult) -> KvDoc {
    let mut doc = KvDoc::new();
    doc.push("result.family", r.family.as_str());
    doc.push_f64("result.value", r.value);
    doc.push_f64("result.critical_value", r.critical_value);
    doc.push_f64("result.p_value", r.p_value);
    doc.push_f64("result.level", r.level);
    doc.push("result.method", r.method.as_str());
    doc.push("result.reject", r.reject());
    doc
}

fn write_or_print(doc: &KvDoc, out: Option<&PathBuf>) -> Result<()> {
    if let Some(path) = out {
        std::fs::write(path, doc.render())?;
    }
    Ok(())
}

fn cmd_test(args: TestArgs) -> Result<()> {
    let (design, p) = args.data.load()?;
    let method: Method = args
        .method
        .map(Into::into)
        .unwrap_or(match args.stat {
            StatArg::Lm => Method::Adjusted,
            _ => Method::Bootstrap,
        });
    let runner = args.sim.runner(method)?;
    let grid = parse_range(&args.tau_range)?;
    let result = match (args.stat, args.tau) {
        (StatArg::Lm, Some(tau)) => runner.lm_fixed(&design.y, &design.x, p, tau, args.alpha)?,
        (StatArg::Lm, None) => bail!("--stat lm needs --tau"),
        (StatArg::Sup, None) => runner.sup_lm(&design.y, &design.x, p, &grid, args.alpha)?,
        (StatArg::Exp, None) => runner.exp_lm(&design.y, &design.x, p, &grid, args.alpha)?,
        (StatArg::Supwald, None) => {
            runner.sup_wald(&design.y, &design.x, p, &grid, args.sim.b, args.alpha)?
        }
        (_, Some(_)) => bail!("--tau is only valid with --stat lm; use --tau-range"),
    };
    println!(
        "{} = {:.6}  critical value ({:.0}%) = {:.6}  p = {:.4}  -> {}",
        result.family.as_str(),
        result.value,
        100.0 * (1.0 - result.level),
        result.critical_value,
        result.p_value,
        if result.reject() {
            "reject no-causality"
        } else {
            "no rejection"
        }
    );
    write_or_print(&result_to_kv(&result), args.out.as_ref())?;
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Result<()> {
    let family = match args.family.as_str() {
        "LM_fixed" | "lm" => NullFamily::LmFixed,
        "supLM" | "sup" => NullFamily::SupLm,
        "expLM" | "exp" => NullFamily::ExpLm,
        "supWald" | "supwald" => NullFamily::SupWald,
        "supCUSUM" => NullFamily::SupCusum,
        "expCUSUM" => NullFamily::ExpCusum,
        "maxTwoSupCUSUM" => NullFamily::MaxTwoSupCusum,
        "maxTwoExpCUSUM" => NullFamily::MaxTwoExpCusum,
        other => bail!("unknown family `{other}`"),
    };
    let grid = parse_range(&args.tau_range)?;
    let sampler = NullSampler::new(family, args.p, args.k, grid, args.reps, args.seed)?
        .with_lambda_steps(args.lambda_steps)?;
    let cache = CvCache::with_dir(args.cache_dir.clone())?;
    let table = cache.get_or_simulate(&sampler)?;
    println!(
        "cached {} samples for {} at {}",
        table.samples().len(),
        sampler.key().header_line(),
        args.cache_dir.join(sampler.key().file_name()).display()
    );
    for alpha in [0.10, 0.05, 0.01] {
        println!("  {:.0}% critical value: {:.6}", 100.0 * (1.0 - alpha), table.critical_value(alpha)?);
    }
    Ok(())
}

fn cmd_regimes(args: RegimesArgs) -> Result<()> {
    let (design, p) = args.data.load()?;
    let runner = args.sim.runner(args.method.into())?;
    let grid = parse_range(&args.tau_range)?;
    let opts = RegimeOptions {
        alpha: args.alpha,
        method: args.method.into(),
        variant: match args.variant {
            VariantArg::Sup => Variant::Sup,
            VariantArg::Exp => Variant::Exp,
        },
        refine: args.refine,
    };
    let mut report = detect_regimes(&design.y, &design.x, p, &grid, &opts, &runner)?;
    report.labels = design.labels.clone();
    print!("{}", report.render_text());
    write_or_print(&report.to_kv(), args.out.as_ref())?;
    Ok(())
}

fn cmd_mc(args: McArgs) -> Result<()> {
    let scale = if args.scale == "full" {
        Scale::Full
    } else {
        Scale::Desk
    };
    let cache = match &args.cache_dir {
        Some(dir) => Arc::new(CvCache::with_dir(dir.clone())?),
        None => Arc::new(CvCache::in_memory()),
    };
    let tables = match args.profile.as_str() {
        "table1" => profiles::profile_table1(scale, args.seed, &cache)?,
        "fig3" => profiles::profile_fig3(scale, args.seed, &cache)?,
        "table3" => profiles::profile_table3(scale, args.seed, &cache)?,
        "appB" => profiles::profile_appb(scale, args.seed, &cache)?,
        other => bail!("unknown profile `{other}`"),
    };
    std::fs::create_dir_all(&args.out)?;
    for t in tables {
        let path = args.out.join(&t.name);
        std::fs::write(&path, &t.content)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Apply config-file values for long flags the command line left unset.
fn merge_config(mut argv: Vec<String>) -> Result<Vec<String>> {
    let pos = argv.iter().position(|a| a == "--config");
    let Some(pos) = pos else {
        return Ok(argv);
    };
    let path = argv
        .get(pos + 1)
        .context("--config needs a file path")?
        .clone();
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("cannot read config `{path}`"))?;
    let doc = KvDoc::parse(&text)?;
    for (key, value) in doc.entries() {
        let flag = format!("--{key}");
        if !argv.iter().any(|a| *a == flag) {
            argv.push(flag);
            argv.push(value.clone());
        }
    }
    Ok(argv)
}

fn main() -> Result<()> {
    let argv: Vec<String> = std::env::args().collect();
    let argv = merge_config(argv)?;
    let cli = Cli::parse_from(argv);
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    match cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Regimes(args) => cmd_regimes(args),
        Command::Mc(args) => cmd_mc(args),
    }
}
