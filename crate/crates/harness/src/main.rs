use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use shiftreg::synthdata::{curve_seed, sample_with_spectrum, NonstationarySpec};
use shiftreg::{
    dft_coeffs, estimate_shifts, fisher_info, generate_dataset, pattern_error, sample_nonstationary_process,
    sample_shifts, shift_error, sup_derivative, van_trees_shift_bound, van_trees_sim_bound, BoundInputs, BoundMode,
    Dataset, DesignGrid, ErrorMode, FourierTemplate, OptimizerOptions, ProcessRealization, ShiftDensitySpec,
    ShiftVector, StationaryCovSpec, StationarySpectrum,
};
use shiftreg_harness::checks::{self, Status};
use shiftreg_harness::output::{emit_boxplot_svg, emit_csv, emit_summary_csv};
use shiftreg_harness::{run_experiment, summarize, ExperimentConfig, Scenario, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "shiftreg", version, about = "Shift estimation and Fréchet means of shifted curves")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and write it as CSV plus a JSON sidecar.
    Simulate(SimulateArgs),
    /// Estimate shifts and the mean pattern of a dataset CSV.
    Estimate(EstimateArgs),
    /// Print the lower bound on the shift estimation risk.
    Bound(BoundArgs),
    /// Run a Monte Carlo experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Run the built-in property checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "sim")]
    scenario: Scenario,
    #[arg(long, default_value_t = 512)]
    n: usize,
    #[arg(long = "j", default_value_t = 20)]
    curves: usize,
    /// Noise level; defaults to 2 for sim and 8 otherwise.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 4.0)]
    varsigma: f64,
    #[arg(long, default_value_t = 4.0)]
    phi: f64,
    #[arg(long, default_value = "uniform:0.2")]
    density: ShiftDensitySpec,
    #[arg(long, default_value = "sin-cos")]
    template: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Harmonics of the stationary process (default n/2).
    #[arg(long)]
    harmonics: Option<usize>,
    /// Output CSV; the sidecar gets the same name with a `.json` extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 7)]
    lambda: usize,
    /// JSON file with optimizer options.
    #[arg(long)]
    options: Option<PathBuf>,
    /// Sidecar with the true shifts; defaults to the input's `.json` sibling
    /// when it exists.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Result file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    sigma: f64,
    /// Shift prior; must be differentiable (`raised-cosine:RHO`).
    #[arg(long)]
    density: ShiftDensitySpec,
    #[arg(long, default_value = "sin-cos")]
    template: String,
    /// Use this constant in place of `‖f'‖²_∞`.
    #[arg(long)]
    c_theta_f: Option<f64>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config and the environment.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Include the full Monte Carlo checks (minutes).
    #[arg(long)]
    full: bool,
    /// Run only these check ids.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    scenario: Scenario,
    n: usize,
    #[serde(rename = "J")]
    j: usize,
    sigma: f64,
    varsigma: f64,
    phi: f64,
    density: String,
    template: String,
    seed: u64,
    shifts: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct Coefficient {
    k: i64,
    re: f64,
    im: f64,
}

#[derive(Debug, Serialize)]
struct EstimateOutput {
    theta_hat: Vec<f64>,
    criterion_value: f64,
    iterations: usize,
    converged: bool,
    multistart_values: Vec<f64>,
    /// Non-negative frequencies of the Fréchet mean; negative ones are conjugates.
    frechet_mean: Vec<Coefficient>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shift_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pattern_error: Option<f64>,
}

fn default_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let template = FourierTemplate::builtin(&a.template)?;
    let sigma = a.sigma.unwrap_or_else(|| a.scenario.default_sigma());
    let grid = DesignGrid::new(a.n)?;
    let shifts = sample_shifts(a.curves, &a.density, a.seed)?;
    let processes: Vec<ProcessRealization> = match a.scenario {
        Scenario::Sim => vec![ProcessRealization::zero(); a.curves],
        Scenario::Stationary => {
            let spec = StationaryCovSpec { scale: a.varsigma, shape: a.phi };
            let spectrum = StationarySpectrum::new(&spec, a.harmonics.unwrap_or(a.n / 2).max(1));
            (0..a.curves).map(|j| sample_with_spectrum(&spectrum, curve_seed(a.seed, j))).collect()
        }
        Scenario::Nonstationary => {
            let spec = NonstationarySpec::with_default_profile(a.varsigma);
            (0..a.curves)
                .map(|j| sample_nonstationary_process(&spec, curve_seed(a.seed, j)))
                .collect::<Result<_, _>>()?
        }
    };
    let data = generate_dataset(&template, &shifts, &processes, sigma, grid, a.seed)?;
    let out = a.out.unwrap_or_else(|| default_dir().join("dataset.csv"));
    let mut text = String::from("j");
    for l in 1..=a.n {
        text.push_str(&format!(",t_{l}"));
    }
    text.push('\n');
    for (j, row) in data.rows().iter().enumerate() {
        text.push_str(&(j + 1).to_string());
        for v in row {
            text.push(',');
            text.push_str(&v.to_string());
        }
        text.push('\n');
    }
    write_file(&out, &text)?;
    let meta = DatasetMeta {
        scenario: a.scenario,
        n: a.n,
        j: a.curves,
        sigma,
        varsigma: a.varsigma,
        phi: a.phi,
        density: format_density(&a.density),
        template: a.template,
        seed: a.seed,
        shifts: shifts.into_vec(),
    };
    let sidecar = out.with_extension("json");
    write_file(&sidecar, &serde_json::to_string_pretty(&meta)?)?;
    println!("wrote {} and {}", out.display(), sidecar.display());
    Ok(())
}

fn format_density(d: &ShiftDensitySpec) -> String {
    let kind = match d.kind {
        shiftreg::DensityKind::Uniform => "uniform",
        shiftreg::DensityKind::RaisedCosine => "raised-cosine",
    };
    format!("{kind}:{}", d.half_width)
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let n = reader.headers()?.len().saturating_sub(1);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        let row = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}: row {} has a non-numeric value", path.display(), i + 1))?;
        rows.push(row);
    }
    Ok(Dataset::new(rows, DesignGrid::new(n)?)?)
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let data = read_dataset(&a.input)?;
    let opts: OptimizerOptions = match &a.options {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => OptimizerOptions::default(),
    };
    let curves = dft_coeffs(&data, a.lambda)?;
    let res = estimate_shifts(&curves, &opts)?;
    let truth_path = a.truth.clone().or_else(|| {
        let p = a.input.with_extension("json");
        p.exists().then_some(p)
    });
    let (mut se, mut pe) = (None, None);
    if let Some(p) = truth_path {
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?;
        let truth = ShiftVector::new(meta.shifts)?;
        se = Some(shift_error(&res.theta_hat, &truth, ErrorMode::Centered)?);
        pe = Some(pattern_error(&res.frechet_mean, &FourierTemplate::builtin(&meta.template)?, truth.mean()));
    }
    let out = EstimateOutput {
        theta_hat: res.theta_hat.as_slice().to_vec(),
        criterion_value: res.criterion_value,
        iterations: res.iterations,
        converged: res.converged,
        multistart_values: res.multistart_values,
        frechet_mean: res
            .frechet_mean
            .iter()
            .filter(|(k, _)| *k >= 0)
            .map(|(k, c)| Coefficient { k, re: c.re, im: c.im })
            .collect(),
        shift_error: se,
        pattern_error: pe,
    };
    let text = serde_json::to_string_pretty(&out)?;
    match a.out {
        Some(p) => write_file(&p, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn bound(a: BoundArgs) -> Result<()> {
    let template = FourierTemplate::builtin(&a.template)?;
    let inputs = BoundInputs {
        n: a.n,
        sigma: a.sigma,
        sup_deriv: sup_derivative(&template),
        fisher_g: fisher_info(&a.density)?,
        mode: BoundMode::Sim,
    };
    let value = match a.c_theta_f {
        Some(c) => van_trees_sim_bound(&inputs, c)?,
        None => van_trees_shift_bound(&inputs)?,
    };
    println!("{value}");
    Ok(())
}

/// Bound per grid size under a raised-cosine prior with the configured
/// support; empty when it cannot be formed.
fn bounds_for(cfg: &ExperimentConfig) -> BTreeMap<usize, f64> {
    let compute = || -> Result<BTreeMap<usize, f64>> {
        let support = cfg.density_spec()?.half_width;
        let fisher = fisher_info(&ShiftDensitySpec::raised_cosine(support)?)?;
        let sup = sup_derivative(&cfg.template_coeffs()?);
        cfg.n_list
            .iter()
            .map(|&n| {
                let b = van_trees_shift_bound(&BoundInputs {
                    n,
                    sigma: cfg.sigma(),
                    sup_deriv: sup,
                    fisher_g: fisher,
                    mode: BoundMode::Sim,
                })?;
                Ok((n, b))
            })
            .collect()
    };
    compute().unwrap_or_else(|e| {
        log::warn!("no lower bound drawn: {e}");
        BTreeMap::new()
    })
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let cfg = ExperimentConfig::from_json(&text).with_context(|| format!("loading {}", a.config.display()))?;
    let dir = cfg.resolve_output_dir(a.output_dir);
    let records = run_experiment(&cfg)?;
    let summaries = summarize(&records)?;
    let bounds = bounds_for(&cfg);
    let stem = cfg.scenario.name();
    emit_csv(&records, &dir.join(format!("{stem}_records.csv")))?;
    emit_summary_csv(&summaries, &bounds, &dir.join(format!("{stem}_summary.csv")))?;
    for metric in ["shift", "pattern"] {
        emit_boxplot_svg(&summaries, metric, &bounds, &dir.join(format!("{stem}_{metric}_boxplot.svg")))?;
    }
    let stalled = records.iter().filter(|r| !r.converged).count();
    println!(
        "{} records ({} not converged) written to {}",
        records.len(),
        stalled,
        dir.display()
    );
    Ok(())
}

fn selftest(a: SelftestArgs) -> Result<()> {
    let ids: Vec<u8> = if !a.only.is_empty() {
        a.only
    } else if a.full {
        checks::ALL.to_vec()
    } else {
        checks::QUICK.to_vec()
    };
    let mut failed = 0;
    for id in ids {
        let outcome = checks::run(id);
        println!("{outcome}");
        if outcome.status == Status::Fail {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} check(s) failed");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Bound(a) => bound(a),
        Command::Experiment(a) => experiment(a),
        Command::Selftest(a) => selftest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
