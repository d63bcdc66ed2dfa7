use std::f64::consts::TAU;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vmreg::decision::{acc_med_err, maad, mean_and_sem, mean_log_likelihood, point_estimate, MeanWithError};
use vmreg::harness::{
    load_models, random_search, save_model, save_models, selftest, train, train_multi, Dataset, MultiAngleTask,
    SearchSpace, Split, SyntheticKind, SyntheticSpec, SyntheticTask, TrainedModel,
};
use vmreg::heads::{multi_angle_log_pdf, PredictiveDensity};
use vmreg::rng::derive_seed;
use vmreg::Angle;

mod config;

use config::ModelArgs;

type CliResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

#[derive(Debug, Parser)]
#[command(name = "vmreg", version, about = "Probabilistic regression of angles with von Mises heads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV
    Gen(GenArgs),
    /// Train a model
    Train(TrainArgs),
    /// Report MAAD, log-likelihood and (for triples) Acc_π/6 / MedErr
    Eval(EvalArgs),
    /// Point estimates per row
    Predict(PredictArgs),
    /// Draw from the predictive density of each row
    Sample(SampleArgs),
    /// Export a 512-point log-density curve for one row
    Density(DensityArgs),
    /// Random hyperparameter search
    Search(SearchArgs),
    /// Run the built-in invariant checks
    Selftest,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Unimodal,
    Heteroscedastic,
    Bimodal,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Rows to draw
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Seed of the task's parameter functions; keep it fixed across splits
    #[arg(long, default_value_t = 0)]
    task_seed: u64,
    /// Seed of the draw
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Constant concentration instead of κ(x)
    #[arg(long)]
    kappa: Option<f64>,
    /// Bimodal mode weights, e.g. `0.6,0.4`
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Write (az, el, tilt) triples instead of a single angle
    #[arg(long)]
    multi: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Reporting {
    /// Report angles in degrees
    #[arg(long)]
    degrees: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Predictive draws per row for the decision rule
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    report: Reporting,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    report: Reporting,
    /// CSV destination; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Only this row
    #[arg(long)]
    row: Option<usize>,
    /// Draws per row
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    report: Reporting,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DensityArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    row: usize,
    /// Which angle of a triple model (0 = az, 1 = el, 2 = tilt)
    #[arg(long, default_value_t = 0)]
    angle: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write `phi` in degrees; `log_density` stays per radian
    #[command(flatten)]
    report: Reporting,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    /// Number of sampled configurations
    #[arg(long, default_value_t = 10)]
    budget: usize,
    #[command(flatten)]
    model: ModelArgs,
    /// Learning-rate range, sampled log-uniformly
    #[arg(long, value_delimiter = ',')]
    lr_range: Option<Vec<f64>>,
    /// Hidden width range, sampled log-uniformly
    #[arg(long, value_delimiter = ',')]
    units_range: Option<Vec<usize>>,
    /// Hidden depth range, sampled uniformly
    #[arg(long, value_delimiter = ',')]
    layers_range: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    batch_sizes: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Sample(a) => sample(a),
        Command::Density(a) => density(a),
        Command::Search(a) => search(a),
        Command::Selftest => return selftest_cmd(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Writes `text` to `out` atomically, or to stdout.
fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
        }
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(text.as_bytes())?;
            tmp.persist(path)?;
        }
    }
    Ok(())
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn angle_value(a: Angle, degrees: bool) -> f64 {
    if degrees {
        a.degrees()
    } else {
        a.radians()
    }
}

fn radians_value(r: f64, degrees: bool) -> f64 {
    if degrees {
        r.to_degrees()
    } else {
        r
    }
}

fn pair<T: Copy>(v: &[T], flag: &str) -> CliResult<(T, T)> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("{flag} takes two comma-separated values").into()),
    }
}

fn pm(m: &MeanWithError) -> String {
    format!("{:.6} ± {:.6}", m.mean, m.sem)
}

fn gen(a: GenArgs) -> CliResult {
    let kind = match a.kind {
        KindArg::Unimodal => SyntheticKind::Unimodal,
        KindArg::Heteroscedastic => SyntheticKind::Heteroscedastic,
        KindArg::Bimodal => SyntheticKind::Bimodal,
    };
    let mut spec = SyntheticSpec::new(kind, a.task_seed).with_dim(a.dim);
    if let Some(k) = a.kappa {
        spec = spec.with_kappa(k);
    }
    if let Some(w) = &a.weights {
        let (a, b) = pair(w, "--weights")?;
        spec = spec.with_weights([a, b]);
    }
    if a.multi {
        let data = MultiAngleTask::new(spec)?.generate(a.n, a.seed, Split::Train)?;
        data.write_csv(&a.out)?;
        println!("rows: {}", data.len());
        return Ok(());
    }
    let task = SyntheticTask::new(spec)?;
    let data = task.generate(a.n, a.seed, Split::Train)?;
    data.write_csv(&a.out)?;
    println!("rows: {}", data.len());
    println!("bayes log-likelihood: {}", pm(&task.bayes_log_likelihood(&data)?));
    Ok(())
}

fn read(path: &Path, split: Split) -> CliResult<Dataset> {
    Ok(Dataset::read_csv(path, split)?)
}

fn describe(m: &TrainedModel) -> String {
    let h = &m.history;
    let mut s = format!(
        "head: {}\nepochs: {}\nbest epoch: {}\nbest validation loss: {:.6}",
        m.model.head().name(),
        h.epochs_run(),
        h.best_epoch,
        h.best().val_loss
    );
    if let Some(k) = m.model.fixed_kappa() {
        s.push_str(&format!("\nkappa: {k:.6}"));
    }
    s
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let cfg = a.model.resolve(a.seed)?;
    let tr = read(&a.train, Split::Train)?;
    let va = read(&a.val, Split::Val)?;
    if tr.triples().is_ok() {
        let models = train_multi(&cfg, &tr, &va)?;
        save_models(&models, &a.out)?;
        for (name, m) in ["az", "el", "tilt"].iter().zip(&models) {
            println!("[{name}]\n{}", describe(m));
        }
    } else {
        let m = train(&cfg, &tr, &va)?;
        save_model(&m, &a.out)?;
        println!("{}", describe(&m));
    }
    Ok(())
}

/// One model for single-angle data, three for triples.
fn load_for(path: &Path, data: &Dataset) -> CliResult<Vec<TrainedModel>> {
    let models = load_models(path)?;
    let want = if data.triples().is_ok() { 3 } else { 1 };
    if models.len() != want {
        return Err(format!("model file holds {} models but the data needs {want}", models.len()).into());
    }
    if models[0].model.input_dim() != data.dim() {
        return Err(format!(
            "model expects {} features, data has {}",
            models[0].model.input_dim(),
            data.dim()
        )
        .into());
    }
    Ok(models)
}

/// Targets of angle `k` (0 for single-angle data).
fn column(data: &Dataset, k: usize) -> CliResult<Vec<Angle>> {
    Ok(match data.angles() {
        Ok(a) => a.to_vec(),
        Err(_) => data.triples()?.iter().map(|t| t[k]).collect(),
    })
}

fn decision_estimates(d: &[PredictiveDensity], samples: usize, seed: u64) -> CliResult<Vec<Angle>> {
    d.iter()
        .enumerate()
        .map(|(i, d)| Ok(point_estimate(d, samples, derive_seed(seed, i as u64))?.angle))
        .collect()
}

fn eval(a: EvalArgs) -> CliResult {
    let data = read(&a.data, Split::Test)?;
    let models = load_for(&a.model, &data)?;
    let deg = a.report.degrees;
    let unit = if deg { "deg" } else { "rad" };
    let names: &[&str] = if models.len() == 3 { &["az", "el", "tilt"] } else { &[""] };
    let mut estimates = Vec::new();
    let mut out = String::new();
    for (k, m) in models.iter().enumerate() {
        let seed = derive_seed(a.seed, k as u64);
        let truth = column(&data, k)?;
        let dens = m.model.predictive_densities(data.features(), derive_seed(seed, 0))?;
        let rule = decision_estimates(&dens, a.samples, derive_seed(seed, 1))?;
        // mean direction, falling back to the decision rule when undefined
        let means: Vec<Angle> = dens.iter().zip(&rule).map(|(d, r)| d.mean_direction().unwrap_or(*r)).collect();
        let scale = |m: MeanWithError| MeanWithError {
            mean: radians_value(m.mean, deg),
            sem: radians_value(m.sem, deg),
        };
        let prefix = if names[k].is_empty() { String::new() } else { format!("{} ", names[k]) };
        out.push_str(&format!("{prefix}MAAD decision rule ({unit}): {}\n", pm(&scale(maad(&rule, &truth)?))));
        out.push_str(&format!("{prefix}MAAD mean direction ({unit}): {}\n", pm(&scale(maad(&means, &truth)?))));
        if models.len() == 1 {
            let ll = mean_log_likelihood(&m.model, data.features(), &truth, derive_seed(seed, 2))?;
            out.push_str(&format!("log-likelihood (nats): {}\n", pm(&ll)));
        }
        estimates.push(rule);
    }
    if models.len() == 3 {
        let truth = data.triples()?;
        let pred: Vec<[Angle; 3]> = (0..data.len()).map(|i| [estimates[0][i], estimates[1][i], estimates[2][i]]).collect();
        let scores = acc_med_err(&pred, truth)?;
        let trio = [models[0].model.clone(), models[1].model.clone(), models[2].model.clone()];
        let lls = (0..data.len())
            .map(|i| multi_angle_log_pdf(&trio, data.features().row(i), truth[i], derive_seed(a.seed, 3 + i as u64)))
            .collect::<vmreg::Result<Vec<_>>>()?;
        out.push_str(&format!("log-likelihood (nats): {}\n", pm(&mean_and_sem(&lls)?)));
        out.push_str(&format!("Acc_pi/6: {:.6}\n", scores.accuracy));
        out.push_str(&format!("MedErr (deg): {:.6}\n", scores.median_error_degrees));
    }
    emit(None, &out)
}

fn predict(a: PredictArgs) -> CliResult {
    let data = read(&a.data, Split::Test)?;
    let models = load_for(&a.model, &data)?;
    let deg = a.report.degrees;
    let mut cols = Vec::new();
    let mut losses = Vec::new();
    for (k, m) in models.iter().enumerate() {
        let seed = derive_seed(a.seed, k as u64);
        let dens = m.model.predictive_densities(data.features(), derive_seed(seed, 0))?;
        let mut est = Vec::with_capacity(dens.len());
        for (i, d) in dens.iter().enumerate() {
            let p = point_estimate(d, a.samples, derive_seed(derive_seed(seed, 1), i as u64))?;
            est.push(p.angle);
            if models.len() == 1 {
                losses.push(p.expected_loss);
            }
        }
        cols.push(est);
    }
    let text = if models.len() == 1 {
        let rows = (0..data.len()).map(|i| {
            vec![
                i.to_string(),
                angle_value(cols[0][i], deg).to_string(),
                radians_value(losses[i], deg).to_string(),
            ]
        });
        csv_text(&["row", "estimate", "expected_loss"], rows)?
    } else {
        let rows = (0..data.len()).map(|i| {
            let mut r = vec![i.to_string()];
            r.extend(cols.iter().map(|c| angle_value(c[i], deg).to_string()));
            r
        });
        csv_text(&["row", "az", "el", "tilt"], rows)?
    };
    emit(a.out.as_deref(), &text)
}

fn sample(a: SampleArgs) -> CliResult {
    let data = read(&a.data, Split::Test)?;
    let models = load_for(&a.model, &data)?;
    let rows: Vec<usize> = match a.row {
        Some(r) if r >= data.len() => return Err(format!("row {r} out of range (0..{})", data.len()).into()),
        Some(r) => vec![r],
        None => (0..data.len()).collect(),
    };
    let deg = a.report.degrees;
    let mut records = Vec::new();
    for &i in &rows {
        let x = data.features().row(i);
        let mut draws = Vec::new();
        for (k, m) in models.iter().enumerate() {
            let seed = derive_seed(derive_seed(a.seed, k as u64), i as u64);
            let d = m.model.predictive_density(x, derive_seed(seed, 0))?;
            draws.push(d.sample(a.n, derive_seed(seed, 1)));
        }
        for j in 0..a.n {
            let mut r = vec![i.to_string()];
            r.extend(draws.iter().map(|d| angle_value(d[j], deg).to_string()));
            records.push(r);
        }
    }
    let header: &[&str] = if models.len() == 1 { &["row", "phi"] } else { &["row", "az", "el", "tilt"] };
    emit(a.out.as_deref(), &csv_text(header, records)?)
}

/// Grid size of `density` exports.
const DENSITY_GRID: usize = 512;

fn density(a: DensityArgs) -> CliResult {
    let data = read(&a.data, Split::Test)?;
    let models = load_for(&a.model, &data)?;
    if a.row >= data.len() {
        return Err(format!("row {} out of range (0..{})", a.row, data.len()).into());
    }
    let m = models
        .get(a.angle)
        .ok_or_else(|| format!("angle index {} out of range for {} model(s)", a.angle, models.len()))?;
    let d = m.model.predictive_density(data.features().row(a.row), a.seed)?;
    let rows = (0..DENSITY_GRID).map(|j| {
        let phi = TAU * j as f64 / DENSITY_GRID as f64;
        vec![
            radians_value(phi, a.report.degrees).to_string(),
            d.log_pdf_radians(phi).to_string(),
        ]
    });
    emit(a.out.as_deref(), &csv_text(&["phi", "log_density"], rows)?)
}

fn search(a: SearchArgs) -> CliResult {
    let base = a.model.resolve(a.seed)?;
    let tr = read(&a.train, Split::Train)?;
    let va = read(&a.val, Split::Val)?;
    if tr.angles().is_err() {
        return Err("search needs single-angle data".into());
    }
    let mut space = SearchSpace::default();
    if let Some(r) = &a.lr_range {
        space.learning_rate = pair(r, "--lr-range")?;
    }
    if let Some(r) = &a.units_range {
        space.hidden_units = pair(r, "--units-range")?;
    }
    if let Some(r) = &a.layers_range {
        space.hidden_layers = pair(r, "--layers-range")?;
    }
    if let Some(b) = &a.batch_sizes {
        space.batch_sizes = b.clone();
    }
    let result = random_search(&base, &space, a.budget, &tr, &va, base.seed)?;
    save_model(&result.best, &a.out)?;
    let mut out = String::from("trial  val_loss    lr          units  layers  batch  epochs\n");
    for t in &result.leaderboard {
        let c = &t.config;
        out.push_str(&format!(
            "{:<6} {:<11.6} {:<11.3e} {:<6} {:<7} {:<6} {}\n",
            t.index,
            t.best_val_loss,
            c.optimizer.learning_rate,
            c.hidden.first().map_or(0, |l| l.units),
            c.hidden.len(),
            c.batch_size,
            t.epochs_run
        ));
    }
    for d in &result.diverged {
        out.push_str(&format!("{:<6} diverged: {}\n", d.index, d.reason));
    }
    out.push_str(&format!("best trial: {}\n", result.best_index));
    emit(None, &out)
}

fn selftest_cmd() -> ExitCode {
    let outcomes = selftest();
    for c in &outcomes {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if outcomes.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
