use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use flatmin::analysis::{
    flatness_radius, gradient_component_stats, pick_components, simplex_interpolation, tv_distance,
    GradientSampling, Histogram,
};
use flatmin::boltzmann::{marginal_1d, quadrature, rejection_sample, Source};
use flatmin::dynamics::{
    run_ensemble, Batch, DynamicsConfig, Initial, NoiseMode, Rule, SampleSet, Schedule,
};
use flatmin::experiments::{self, svg, ExperimentConfig, EXPERIMENTS};
use flatmin::model::{
    make_blobs, randomize_labels, train_to_interpolation, Activation, LabeledDataset, LossKind,
    MlpSpec, TrainConfig,
};
use flatmin::potentials::{
    from_empirical_loss, DecomposedPotential, Point, Potential, PotentialSpec,
};
use flatmin::{Error, Result};

#[derive(Parser)]
#[command(
    name = "flatmin",
    version,
    about = "Langevin dynamics, Boltzmann oracles and flatness measurements"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run GD/SGD/GDL/SGDL trajectories on a catalog potential.
    Simulate(SimulateArgs),
    /// Exact Boltzmann marginal by quadrature or rejection sampling.
    Oracle(OracleArgs),
    /// Flatness radius of a trained network checkpoint.
    Flatness(FlatnessArgs),
    /// Loss and accuracy on the simplex spanned by three checkpoints.
    Interp(InterpArgs),
    /// Histograms and shape statistics of gradient components.
    NoiseHist(NoiseArgs),
    /// Train a network to interpolation.
    Train(TrainArgs),
    /// Total-variation distance between a histogram (or `simulate` samples) and an oracle histogram.
    Compare(CompareArgs),
    /// Run a named experiment.
    Run(RunArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// e.g. `quadratic:d=2,a=1`, `flat_sharp:d=3,s=0.5,ff=2,k=1`, `wedge:d=5,k=1,L=1`
    #[arg(long)]
    potential: String,
    #[arg(long)]
    rule: Rule,
    /// Step-size schedule: a number, or `constant|inverse_t|inverse_sqrt_t:base[,floor=x]`.
    #[arg(long, default_value = "0.01")]
    gamma: String,
    /// `anneal:<schedule>` or `stationary:T=<real>` (Langevin rules only).
    #[arg(long)]
    noise_mode: Option<String>,
    /// Minibatch size, or `all` for the exhaustive batch (stochastic rules).
    #[arg(long, default_value = "1")]
    batch: String,
    /// Synthetic examples the potential is decomposed into (stochastic rules).
    #[arg(long, default_value_t = 256)]
    examples: usize,
    /// Standard deviation of the per-example gradient offsets.
    #[arg(long, default_value_t = 0.5)]
    offset_scale: f64,
    #[arg(long)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    burn_in: u64,
    #[arg(long, default_value_t = 1)]
    thin: u64,
    #[arg(long, default_value_t = 1)]
    traj: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `uniform` or a comma-separated starting point.
    #[arg(long, default_value = "uniform")]
    init: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    potential: String,
    #[arg(long)]
    temp: f64,
    /// `quad:res=R` or `reject:n=N`.
    #[arg(long, default_value = "quad:res=400")]
    method: String,
    /// Coordinate whose marginal is written.
    #[arg(long, default_value_t = 0)]
    marginal: usize,
    #[arg(long, default_value_t = 40)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV `x_0,...,x_{d-1},label`; every row is a training example.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct FlatnessArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 50)]
    dirs: usize,
    /// `all` or `top` (last layer only).
    #[arg(long, default_value = "all")]
    subset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional per-direction radii CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InterpArgs {
    #[arg(long)]
    w1: PathBuf,
    #[arg(long)]
    w2: PathBuf,
    #[arg(long)]
    w3: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 60)]
    m: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also draw the accuracy surface.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Minibatch size; 0 takes per-example gradients instead.
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 16)]
    components: usize,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long, default_value_t = 40)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Histogram CSV `component,bin_lo,bin_hi,prob`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "10-30-30-2")]
    arch: String,
    #[arg(long, default_value = "softplus")]
    act: Activation,
    #[arg(long, default_value = "square")]
    loss: LossKind,
    /// `natural` or `random:<seed>`.
    #[arg(long, default_value = "natural")]
    labels: String,
    #[arg(long, default_value = "sgd")]
    rule: Rule,
    /// Noise mode for sgdl.
    #[arg(long, default_value = "anneal:constant:0.0005")]
    noise_mode: String,
    #[arg(long, default_value = "0.1")]
    lr: String,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 200_000)]
    max_steps: u64,
    #[arg(long, default_value_t = 1e-3)]
    target_loss: f64,
    /// Dataset CSV; synthetic blobs when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, default_value_t = 0.2)]
    spread: f64,
    #[arg(long, default_value_t = 128)]
    held_out: usize,
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Write the (labelled) training split used, for the other subcommands.
    #[arg(long)]
    save_data: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Histogram CSV, or a sample CSV from `simulate` binned onto the oracle's axis.
    #[arg(long)]
    hist: PathBuf,
    #[arg(long)]
    oracle: PathBuf,
    /// Coordinate taken from a sample CSV.
    #[arg(long, default_value_t = 0)]
    axis: usize,
}

#[derive(Args)]
struct RunArgs {
    experiment: String,
    /// Master seed (default 0, or the config file's).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `out/<experiment>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key = value` file (TOML), or an artifact written by an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn header(out: &mut impl Write, pairs: &[(&str, String)]) -> Result<()> {
    for (k, v) in pairs {
        writeln!(out, "# {k} = {v:?}")?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let spec: PotentialSpec = a.potential.parse()?;
    let step: Schedule = a.gamma.parse()?;
    let noise = a
        .noise_mode
        .as_deref()
        .map(str::parse::<NoiseMode>)
        .transpose()?;
    let batch = match a.batch.as_str() {
        "all" => Batch::Exhaustive,
        b => Batch::Replacement(
            b.parse()
                .map_err(|_| Error::Parameter(format!("bad batch '{b}'")))?,
        ),
    };
    let config = DynamicsConfig {
        rule: a.rule,
        step,
        noise,
        batch,
        total_steps: a.steps,
        burn_in: a.burn_in,
        thinning: a.thin,
        seed: a.seed,
    };
    let initial = if a.init == "uniform" {
        Initial::Uniform
    } else {
        let coords = a
            .init
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad coordinate '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Initial::Point(Point::new(coords)?)
    };
    let sets = if a.rule.is_stochastic() {
        let u = DecomposedPotential::new(spec.clone(), a.examples, a.offset_scale, a.seed)?;
        run_ensemble(&u, &config, &initial, a.traj)?
    } else {
        run_ensemble(&spec, &config, &initial, a.traj)?
    };
    let all = SampleSet::merge(sets)?;
    let mut out = create(&a.out)?;
    header(
        &mut out,
        &[
            ("potential", spec.to_string()),
            ("dynamics", config.to_string()),
        ],
    )?;
    all.write_csv(&mut out)?;
    out.flush()?;
    eprintln!("{} samples written to {}", all.len(), a.out.display());
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let spec: PotentialSpec = a.potential.parse()?;
    if a.marginal >= spec.dimension() {
        return Err(Error::Parameter(format!(
            "marginal axis {} out of range",
            a.marginal
        )));
    }
    let (kind, arg) = a.method.split_once(':').ok_or_else(|| {
        Error::Parse(format!(
            "expected quad:res=R or reject:n=N, got '{}'",
            a.method
        ))
    })?;
    let num = |key: &str| -> Result<usize> {
        arg.strip_prefix(key)
            .and_then(|v| v.strip_prefix('='))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad method argument '{arg}'")))
    };
    let hist = match kind {
        "quad" => {
            let density = quadrature(&spec, a.temp, num("res")?)?;
            eprintln!("Z = {}", density.z);
            marginal_1d(Source::Density(&density), a.marginal, a.bins)?
        }
        "reject" => {
            let draws = rejection_sample(&spec, a.temp, num("n")?, a.seed)?;
            eprintln!(
                "Z = {} (acceptance {})",
                draws.density.z, draws.acceptance_rate
            );
            marginal_1d(
                Source::Samples(&draws.samples, spec.domain()),
                a.marginal,
                a.bins,
            )?
        }
        other => return Err(Error::Parse(format!("unknown oracle method '{other}'"))),
    };
    let mut out = create(&a.out)?;
    header(
        &mut out,
        &[
            ("potential", spec.to_string()),
            ("temperature", a.temp.to_string()),
            ("method", a.method.clone()),
            ("seed", a.seed.to_string()),
        ],
    )?;
    hist.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn load_data(path: &Path, spec: &MlpSpec) -> Result<Arc<LabeledDataset>> {
    Ok(Arc::new(LabeledDataset::load_csv(
        path,
        Some(spec.output_dim()),
    )?))
}

fn flatness(a: FlatnessArgs) -> Result<()> {
    let (spec, params) = MlpSpec::load(&a.checkpoint)?;
    let data = load_data(&a.data.data, &spec)?;
    let mask = match a.subset.as_str() {
        "all" => None,
        "top" => Some(spec.top_layer_mask()),
        other => {
            return Err(Error::Parameter(format!(
                "subset must be all or top, got '{other}'"
            )))
        }
    };
    let u = from_empirical_loss(spec, data)?;
    let loss = |w: &[f64]| u.value(w);
    let r = flatness_radius(
        &loss,
        &params.weights,
        a.epsilon,
        a.dirs,
        a.seed,
        mask.as_deref(),
        &a.subset,
    )?;
    println!("subset,epsilon,directions,mean,std,capped,failed");
    println!(
        "{},{},{},{},{},{},{}",
        r.subset,
        r.epsilon,
        r.radii.len(),
        r.mean,
        r.std,
        r.capped,
        r.failed
    );
    if let Some(path) = a.out {
        let mut out = create(&path)?;
        writeln!(out, "direction,radius")?;
        for (i, x) in r.radii.iter().enumerate() {
            writeln!(out, "{i},{x}")?;
        }
        out.flush()?;
    }
    Ok(())
}

fn interp(a: InterpArgs) -> Result<()> {
    let (spec, p1) = MlpSpec::load(&a.w1)?;
    let mut ws = vec![p1];
    for path in [&a.w2, &a.w3] {
        let (s, p) = MlpSpec::load(path)?;
        if s != spec {
            return Err(Error::Parameter(format!(
                "{} has a different architecture",
                path.display()
            )));
        }
        ws.push(p);
    }
    let data = load_data(&a.data.data, &spec)?;
    let eval = |w: &[f64]| spec.loss_and_accuracy(w, &data, data.train());
    let s = simplex_interpolation(&eval, &ws[0].weights, &ws[1].weights, &ws[2].weights, a.m)?;
    let mut out = create(&a.out)?;
    s.write_csv(&mut out)?;
    out.flush()?;
    if let Some(path) = a.svg {
        let pts: Vec<(f64, f64, f64)> = s.rows.iter().map(|r| (r.x, r.y, r.accuracy)).collect();
        fs::write(path, svg::simplex_map(&[], "training accuracy", &pts, a.m))?;
    }
    println!(
        "fraction with accuracy >= 0.99: {}",
        s.fraction_at_least(0.99)
    );
    Ok(())
}

fn noise_hist(a: NoiseArgs) -> Result<()> {
    let (spec, params) = MlpSpec::load(&a.checkpoint)?;
    let data = load_data(&a.data.data, &spec)?;
    let u = from_empirical_loss(spec, data)?;
    let sampling = if a.batch == 0 {
        GradientSampling::PerExample
    } else {
        GradientSampling::MinibatchMean {
            batch: a.batch,
            draws: a.draws,
        }
    };
    let comps = pick_components(u.dimension(), a.components, None, a.seed);
    let stats = gradient_component_stats(&u, &params.weights, &comps, sampling, a.bins, a.seed)?;
    let mut out = create(&a.out)?;
    writeln!(out, "component,bin_lo,bin_hi,prob")?;
    println!("component,mean,variance,skewness,excess_kurtosis");
    for s in &stats {
        match (&s.moments, &s.histogram) {
            (Some(m), Some(h)) => {
                println!(
                    "{},{},{},{},{}",
                    s.component, s.mean, m.variance, m.skewness, m.excess_kurtosis
                );
                let ax = &h.axes()[0];
                for i in 0..ax.bins {
                    writeln!(
                        out,
                        "{},{},{},{}",
                        s.component,
                        ax.edge(i),
                        ax.edge(i + 1),
                        h.masses()[i]
                    )?;
                }
            }
            _ => println!("{},{},0,,", s.component, s.mean),
        }
    }
    out.flush()?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let spec = MlpSpec::parse_arch(&a.arch, a.act, a.loss)?;
    let base = match &a.data {
        Some(path) => LabeledDataset::load_csv(path, Some(spec.output_dim()))?,
        None => make_blobs(
            a.samples,
            spec.input_dim(),
            spec.output_dim(),
            a.spread,
            a.data_seed,
        )?,
    };
    let base = if a.held_out > 0 && a.data.is_none() {
        base.with_held_out(a.held_out)?
    } else {
        base
    };
    let data = match a.labels.as_str() {
        "natural" => base,
        other => {
            let seed = other
                .strip_prefix("random:")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| {
                    Error::Parse(format!(
                        "labels must be natural or random:<seed>, got '{other}'"
                    ))
                })?;
            randomize_labels(&base, seed)
        }
    };
    let mut cfg = TrainConfig {
        step: a.lr.parse()?,
        target_loss: a.target_loss,
        ..TrainConfig::sgd(0.0, a.batch, a.max_steps, a.seed)
    };
    if a.rule == Rule::Sgdl {
        cfg.rule = Rule::Sgdl;
        cfg.noise = Some(a.noise_mode.parse()?);
    } else if a.rule != Rule::Sgd {
        return Err(Error::Parameter("training uses sgd or sgdl".into()));
    }
    let data = Arc::new(data);
    let o = train_to_interpolation(&spec, data.clone(), &cfg)?;
    spec.save(&o.params, &a.out)?;
    if let Some(path) = a.save_data {
        let train_only = LabeledDataset::new(
            data.train()
                .iter()
                .flat_map(|&i| data.input(i).to_vec())
                .collect(),
            data.input_dim(),
            data.train().iter().map(|&i| data.label(i)).collect(),
            data.classes(),
        )?;
        train_only.save_csv(&path)?;
    }
    if let Some(path) = a.log {
        let mut out = create(&path)?;
        writeln!(
            out,
            "step,train_loss,train_accuracy,held_out_loss,held_out_accuracy"
        )?;
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        for r in &o.log {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.step,
                r.train_loss,
                r.train_accuracy,
                opt(r.held_out_loss),
                opt(r.held_out_accuracy)
            )?;
        }
        out.flush()?;
    }
    let f = o.final_record();
    println!(
        "interpolated={} steps={} train_loss={} train_accuracy={} held_out_accuracy={}",
        o.interpolated,
        o.steps,
        f.train_loss,
        f.train_accuracy,
        f.held_out_accuracy.map_or("n/a".into(), |v| v.to_string())
    );
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let read =
        |p: &Path| -> Result<Histogram> { Histogram::read_csv(BufReader::new(fs::File::open(p)?)) };
    let oracle = read(&a.oracle)?;
    let text = fs::read_to_string(&a.hist)?;
    let is_samples = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .is_some_and(|l| l.starts_with("traj,t"));
    let hist = if is_samples {
        if oracle.axes().len() != 1 {
            return Err(Error::Parameter(
                "samples can only be compared with a 1-D oracle marginal".into(),
            ));
        }
        let column = 2 + a.axis;
        let mut xs = Vec::new();
        for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let field = line
                .split(',')
                .nth(column)
                .ok_or_else(|| Error::Parameter(format!("no coordinate {} in samples", a.axis)))?;
            xs.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number '{field}' in samples")))?,
            );
        }
        Histogram::from_points(
            oracle.axes().to_vec(),
            &[0],
            xs.iter().map(std::slice::from_ref),
        )?
    } else {
        Histogram::read_csv(text.as_bytes())?
    };
    let tv = tv_distance(&hist, &oracle)?;
    println!("tv = {tv}");
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = experiments::defaults(&a.experiment, 0)?;
    if let Some(path) = &a.config {
        cfg.apply_text(&fs::read_to_string(path)?)?;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    for pair in &a.set {
        cfg.set_pair(pair)?;
    }
    let out = a
        .out
        .unwrap_or_else(|| Path::new("out").join(&a.experiment));
    let outcome = experiments::run_experiment(&cfg, &out)?;
    let stdout = io::stdout();
    let mut w = stdout.lock();
    for (k, v) in &outcome.metrics {
        writeln!(w, "{k} = {v}")?;
    }
    writeln!(
        w,
        "{} files written to {}",
        outcome.files.len(),
        out.display()
    )?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Oracle(a) => oracle(a),
        Command::Flatness(a) => flatness(a),
        Command::Interp(a) => interp(a),
        Command::NoiseHist(a) => noise_hist(a),
        Command::Train(a) => train(a),
        Command::Compare(a) => compare(a),
        Command::Run(a) => run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let unknown_experiment =
        matches!(&cli.command, Command::Run(r) if !EXPERIMENTS.contains(&r.experiment.as_str()));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n.max(1));
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| dispatch(cli)),
        Err(e) => Err(Error::Parameter(e.to_string())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if unknown_experiment {
                eprintln!("usage: flatmin run <experiment> [--seed S] [--out DIR] [--config FILE] [--set KEY=VALUE]...");
                eprintln!("experiments: {}", EXPERIMENTS.join(", "));
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
