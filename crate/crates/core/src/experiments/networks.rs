use std::io::Write;
use std::sync::Arc;

use super::landscapes::{marginal_series, wedge_runs, write_marginals, write_wedge_occupancy};
use super::svg::{figure, simplex_map, Panel, Series};
use super::{downsample, Artifacts, ExperimentConfig};
use crate::analysis::{
    flatness_radius, gradient_component_stats, pick_components, pool, simplex_interpolation,
    FlatnessReport, GradientSampling, SimplexSurface,
};
use crate::boltzmann::{marginal_1d, Source};
use crate::dynamics::{NoiseMode, Rule};
use crate::error::{Error, Result};
use crate::model::{
    make_blobs, randomize_labels, train_to_interpolation, Activation, LabeledDataset, LossKind,
    MlpSpec, TrainConfig, TrainOutcome, TrainRecord,
};
use crate::potentials::{from_empirical_loss, Potential};
use crate::rng::child_seed;

// Blobs are tight enough that natural labels generalize while the width
// still lets random labels be memorized within the budget.
pub(super) const MLP_DEFAULTS: [(&str, &str); 10] = [
    ("arch", "10-30-30-2"),
    ("activation", "softplus"),
    ("loss", "square"),
    ("samples", "256"),
    ("held_out", "128"),
    ("spread", "0.2"),
    ("lr", "0.1"),
    ("batch", "16"),
    ("max_steps", "200000"),
    ("target_loss", "0.001"),
];

pub(super) const SGDL_VS_SGD_DEFAULTS: [(&str, &str); 13] = [
    ("sgdl_noise", "anneal:constant:0.0005"),
    ("stiffness", "1"),
    ("half_width", "1"),
    ("temperature", "0.5"),
    ("gamma", "0.01"),
    ("wedge_chains", "8"),
    ("wedge_steps", "2000000"),
    ("burn_fraction", "0.2"),
    ("thinning", "20"),
    ("margin", "1.5"),
    ("examples", "256"),
    ("wedge_batch", "8"),
    ("oracle_samples", "200000"),
];

pub(super) const GAUSS_NOISE_DEFAULTS: [(&str, &str); 5] = [
    ("noise_batch", "64"),
    ("draws", "10000"),
    ("components", "16"),
    ("bins", "40"),
    ("sampling", "minibatch"),
];

pub(super) const INTERP_DEFAULTS: [(&str, &str); 2] = [("m", "30"), ("minima", "3")];

pub(super) const FLATNESS_DEFAULTS: [(&str, &str); 3] =
    [("epsilon", "0.05"), ("directions", "50"), ("minima", "3")];

/// Network, natural and random-label datasets, and SGD settings shared by
/// the network experiments.
struct Setup {
    spec: MlpSpec,
    natural: Arc<LabeledDataset>,
    random: Arc<LabeledDataset>,
    train: TrainConfig,
    seed: u64,
}

impl Setup {
    fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let act: Activation = cfg.get_str("activation")?.parse()?;
        let loss: LossKind = cfg.get_str("loss")?.parse()?;
        let spec = MlpSpec::parse_arch(cfg.get_str("arch")?, act, loss)?;
        let natural = make_blobs(
            cfg.get("samples")?,
            spec.input_dim(),
            spec.output_dim(),
            cfg.get("spread")?,
            child_seed(cfg.seed, 1),
        )?
        .with_held_out(cfg.get("held_out")?)?;
        let random = randomize_labels(&natural, child_seed(cfg.seed, 2));
        let mut train =
            TrainConfig::sgd(cfg.get("lr")?, cfg.get("batch")?, cfg.get("max_steps")?, 0);
        train.target_loss = cfg.get("target_loss")?;
        Ok(Setup {
            spec,
            natural: Arc::new(natural),
            random: Arc::new(random),
            train,
            seed: cfg.seed,
        })
    }

    fn data(&self, labels: Labels) -> &Arc<LabeledDataset> {
        match labels {
            Labels::Natural => &self.natural,
            Labels::Random => &self.random,
        }
    }

    /// Minimizer `rep` of the given labelling. Replicas differ only in
    /// their initialization and minibatch streams; the two labellings share
    /// them.
    fn minimum(&self, labels: Labels, rep: u64) -> Result<TrainOutcome> {
        let cfg = TrainConfig {
            seed: child_seed(self.seed, 16 + rep),
            ..self.train.clone()
        };
        train_to_interpolation(&self.spec, self.data(labels).clone(), &cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Labels {
    Natural,
    Random,
}

impl Labels {
    fn name(self) -> &'static str {
        match self {
            Labels::Natural => "natural",
            Labels::Random => "random",
        }
    }
}

const BOTH: [Labels; 2] = [Labels::Natural, Labels::Random];

fn write_log_rows(w: &mut Vec<u8>, tag: &str, log: &[TrainRecord]) -> Result<()> {
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    for r in log {
        writeln!(
            w,
            "{tag},{},{},{},{},{}",
            r.step,
            r.train_loss,
            r.train_accuracy,
            opt(r.held_out_loss),
            opt(r.held_out_accuracy)
        )?;
    }
    Ok(())
}

fn curve(log: &[TrainRecord], f: impl Fn(&TrainRecord) -> Option<f64>) -> Vec<(f64, f64)> {
    let pts: Vec<(f64, f64)> = log
        .iter()
        .filter_map(|r| f(r).map(|v| (r.step as f64, v)))
        .collect();
    downsample(&pts, 1500)
}

fn held_out(o: &TrainOutcome) -> f64 {
    o.final_record().held_out_accuracy.unwrap_or(f64::NAN)
}

pub(super) fn sgdl_vs_sgd(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let setup = Setup::from_config(cfg)?;
    let noise: NoiseMode = cfg.get_str("sgdl_noise")?.parse()?;
    let seed = child_seed(cfg.seed, 16);
    let sgd_cfg = TrainConfig {
        seed,
        ..setup.train.clone()
    };
    let sgdl_cfg = TrainConfig {
        rule: Rule::Sgdl,
        noise: Some(noise),
        ..sgd_cfg.clone()
    };
    let sgd = train_to_interpolation(&setup.spec, setup.natural.clone(), &sgd_cfg)?;
    let sgdl = train_to_interpolation(&setup.spec, setup.natural.clone(), &sgdl_cfg)?;
    for (tag, o) in [("sgd", &sgd), ("sgdl", &sgdl)] {
        let f = o.final_record();
        art.metric(
            format!("{tag}_interpolated"),
            f64::from(u8::from(o.interpolated)),
        );
        art.metric(format!("{tag}_steps"), o.steps as f64);
        art.metric(format!("{tag}_train_loss"), f.train_loss);
        art.metric(format!("{tag}_held_out_accuracy"), held_out(o));
    }
    art.csv("train_log.csv", |w| {
        writeln!(
            w,
            "rule,step,train_loss,train_accuracy,held_out_loss,held_out_accuracy"
        )?;
        write_log_rows(w, "sgd", &sgd.log)?;
        write_log_rows(w, "sgdl", &sgdl.log)
    })?;

    // The same comparison on the wedge: SGD's minibatch noise is given the
    // per-step variance of stationary SGDL at the same temperature.
    let temperature: f64 = cfg.get("temperature")?;
    let gamma: f64 = cfg.get("gamma")?;
    let batch: usize = cfg.get("wedge_batch")?;
    let sgd_scale = (2.0 * temperature * batch as f64 / gamma).sqrt();
    let (u, basins, runs) = wedge_runs(
        cfg,
        2,
        &[(Rule::Sgd, sgd_scale, "sgd"), (Rule::Sgdl, 0.0, "sgdl")],
        cfg.get("wedge_steps")?,
        cfg.get("wedge_chains")?,
        batch,
        cfg.get("oracle_samples")?,
        600,
    )?;
    let deg = basins
        .iter()
        .position(|b| b.label == "degenerate")
        .expect("wedge basins");
    for r in &runs {
        art.metric(format!("wedge_degenerate_{}", r.label), r.masses[deg]);
    }
    art.csv("wedge_occupancy.csv", |w| {
        write_wedge_occupancy(w, &basins, &runs, None)
    })?;
    let hists = runs
        .iter()
        .map(|r| marginal_1d(Source::Samples(&r.samples, u.domain()), 0, 40))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<&str> = runs.iter().map(|r| r.label.as_str()).collect();
    art.csv("wedge_marginal_axis0.csv", |w| {
        write_marginals(w, &names, &hists)
    })?;

    let mut wedge = Panel::new("wedge d = 2: coordinate 0", "w_0", "probability");
    for (r, h) in runs.iter().zip(&hists) {
        wedge = wedge.with(marginal_series(&r.label, h));
    }
    let mut loss = Panel::new("training loss (natural labels)", "step", "train loss");
    loss.log_y = true;
    let loss = loss
        .with(Series::line("SGD", curve(&sgd.log, |r| Some(r.train_loss))))
        .with(Series::line(
            "SGDL",
            curve(&sgdl.log, |r| Some(r.train_loss)),
        ));
    let acc = Panel::new("held-out accuracy", "step", "accuracy")
        .with(Series::line(
            "SGD",
            curve(&sgd.log, |r| r.held_out_accuracy),
        ))
        .with(Series::line(
            "SGDL",
            curve(&sgdl.log, |r| r.held_out_accuracy),
        ));
    art.svg(
        "sgdl_vs_sgd.svg",
        &figure(art.header(), &[loss, acc, wedge], 2),
    )
}

pub(super) fn gauss_noise(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let setup = Setup::from_config(cfg)?;
    let trained = setup.minimum(Labels::Natural, 0)?;
    let u = from_empirical_loss(setup.spec.clone(), setup.natural.clone())?;
    let sampling = match cfg.get_str("sampling")? {
        "minibatch" => GradientSampling::MinibatchMean {
            batch: cfg.get("noise_batch")?,
            draws: cfg.get("draws")?,
        },
        "per_example" => GradientSampling::PerExample,
        other => {
            return Err(Error::param(format!(
                "sampling must be minibatch or per_example, got '{other}'"
            )))
        }
    };
    let comps = pick_components(
        u.dimension(),
        cfg.get("components")?,
        None,
        child_seed(cfg.seed, 3),
    );
    let w = &trained.params.weights;
    let stats = gradient_component_stats(
        &u,
        w,
        &comps,
        sampling,
        cfg.get("bins")?,
        child_seed(cfg.seed, 4),
    )?;

    let gaussian = stats
        .iter()
        .filter(|s| {
            s.moments
                .as_ref()
                .is_some_and(|m| m.skewness.abs() <= 0.5 && m.excess_kurtosis.abs() <= 1.0)
        })
        .count();
    art.metric("train_loss", trained.final_record().train_loss);
    art.metric("components", stats.len() as f64);
    art.metric("gaussian_components", gaussian as f64);
    art.metric(
        "gaussian_fraction",
        gaussian as f64 / stats.len().max(1) as f64,
    );
    art.csv("noise_stats.csv", |out| {
        writeln!(
            out,
            "component,mean,variance,skewness,excess_kurtosis,degenerate"
        )?;
        for s in &stats {
            match &s.moments {
                Some(m) => writeln!(
                    out,
                    "{},{},{},{},{},false",
                    s.component, s.mean, m.variance, m.skewness, m.excess_kurtosis
                )?,
                None => writeln!(out, "{},{},0,,,true", s.component, s.mean)?,
            }
        }
        Ok(())
    })?;
    art.csv("noise_hist.csv", |out| {
        writeln!(out, "component,bin_lo,bin_hi,prob")?;
        for s in &stats {
            if let Some(h) = &s.histogram {
                let a = &h.axes()[0];
                for i in 0..a.bins {
                    writeln!(
                        out,
                        "{},{},{},{}",
                        s.component,
                        a.edge(i),
                        a.edge(i + 1),
                        h.masses()[i]
                    )?;
                }
            }
        }
        Ok(())
    })?;
    let panels: Vec<Panel> = stats
        .iter()
        .map(|s| {
            let mut p = Panel::new(
                format!("component {}", s.component),
                "gradient",
                "probability",
            );
            if let (Some(h), Some(m)) = (&s.histogram, &s.moments) {
                p = p.with(marginal_series("minibatch", h));
                let a = &h.axes()[0];
                let sd = m.variance.sqrt();
                let fit: Vec<(f64, f64)> = (0..=4 * a.bins)
                    .map(|i| {
                        let x = a.lo + (a.hi - a.lo) * i as f64 / (4 * a.bins) as f64;
                        let z = (x - m.mean) / sd;
                        (
                            x,
                            a.width() * (-0.5 * z * z).exp()
                                / (sd * (2.0 * std::f64::consts::PI).sqrt()),
                        )
                    })
                    .collect();
                p = p.with(Series::line("gaussian fit", fit));
            }
            p
        })
        .collect();
    art.svg("gauss_noise.svg", &figure(art.header(), &panels, 4))
}

fn write_minima(w: &mut Vec<u8>, rows: &[(Labels, u64, &TrainOutcome, f64)]) -> Result<()> {
    writeln!(
        w,
        "labels,minimum,interpolated,steps,train_loss,train_accuracy,held_out_accuracy"
    )?;
    for (labels, rep, o, acc) in rows {
        writeln!(
            w,
            "{},{rep},{},{},{},{acc},{}",
            labels.name(),
            o.interpolated,
            o.steps,
            o.final_record().train_loss,
            held_out(o)
        )?;
    }
    Ok(())
}

fn minima(setup: &Setup, labels: Labels, count: u64) -> Result<Vec<TrainOutcome>> {
    (0..count).map(|rep| setup.minimum(labels, rep)).collect()
}

pub(super) fn interp(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let setup = Setup::from_config(cfg)?;
    let m: usize = cfg.get("m")?;
    if cfg.get::<u64>("minima")? != 3 {
        return Err(Error::param("simplex interpolation takes exactly 3 minima"));
    }
    let mut surfaces: Vec<(Labels, SimplexSurface)> = Vec::new();
    let mut all_minima = Vec::new();
    let mut exact = true;
    for labels in BOTH {
        let data = setup.data(labels);
        let found = minima(&setup, labels, 3)?;
        let accs = found
            .iter()
            .map(|o| setup.spec.accuracy(&o.params.weights, data, data.train()))
            .collect::<Result<Vec<_>>>()?;
        let eval = |w: &[f64]| setup.spec.loss_and_accuracy(w, data, data.train());
        let s = simplex_interpolation(
            &eval,
            &found[0].params.weights,
            &found[1].params.weights,
            &found[2].params.weights,
            m,
        )?;
        for (v, acc) in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
            .iter()
            .zip(&accs)
        {
            exact &= s.row(*v).is_some_and(|r| r.accuracy == *acc);
        }
        art.metric(
            format!("fraction_{}", labels.name()),
            s.fraction_at_least(0.99),
        );
        all_minima.extend(
            found
                .into_iter()
                .zip(accs)
                .enumerate()
                .map(|(i, (o, a))| (labels, i as u64, o, a)),
        );
        surfaces.push((labels, s));
    }
    art.metric("vertices_exact", f64::from(u8::from(exact)));
    let rows: Vec<(Labels, u64, &TrainOutcome, f64)> = all_minima
        .iter()
        .map(|(l, i, o, a)| (*l, *i, o, *a))
        .collect();
    art.csv("minima.csv", |w| write_minima(w, &rows))?;
    for (labels, s) in &surfaces {
        let name = labels.name();
        art.csv(&format!("simplex_{name}.csv"), |w| s.write_csv(w))?;
        let pts: Vec<(f64, f64, f64)> = s.rows.iter().map(|r| (r.x, r.y, r.accuracy)).collect();
        let title = format!("training accuracy on the simplex of three minimizers ({name} labels)");
        art.svg(
            &format!("simplex_{name}.svg"),
            &simplex_map(art.header(), &title, &pts, m),
        )?;
    }
    Ok(())
}

pub(super) fn table_flatness(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let setup = Setup::from_config(cfg)?;
    let epsilon: f64 = cfg.get("epsilon")?;
    let directions: usize = cfg.get("directions")?;
    let count: u64 = cfg.get("minima")?;
    if count == 0 {
        return Err(Error::param("need at least one minimum"));
    }
    let top = setup.spec.top_layer_mask();
    let mut reports: Vec<(Labels, &str, u64, FlatnessReport)> = Vec::new();
    let mut trained = Vec::new();
    for labels in BOTH {
        let data = setup.data(labels);
        let u = from_empirical_loss(setup.spec.clone(), data.clone())?;
        let loss = |w: &[f64]| u.value(w);
        for (rep, o) in minima(&setup, labels, count)?.into_iter().enumerate() {
            let rep = rep as u64;
            let dir_seed = child_seed(cfg.seed, 64 + rep);
            let w = &o.params.weights;
            for (subset, mask) in [("all", None), ("top", Some(top.as_slice()))] {
                let r = flatness_radius(&loss, w, epsilon, directions, dir_seed, mask, subset)?;
                reports.push((labels, subset, rep, r));
            }
            let acc = setup.spec.accuracy(w, data, data.train())?;
            trained.push((labels, rep, o, acc));
        }
    }
    let rows: Vec<(Labels, u64, &TrainOutcome, f64)> =
        trained.iter().map(|(l, i, o, a)| (*l, *i, o, *a)).collect();
    art.csv("minima.csv", |w| write_minima(w, &rows))?;

    let mut summary = Vec::new();
    for labels in BOTH {
        for subset in ["all", "top"] {
            let group: Vec<FlatnessReport> = reports
                .iter()
                .filter(|(l, s, _, _)| *l == labels && *s == subset)
                .map(|(_, _, _, r)| r.clone())
                .collect();
            let p = pool(&group)?;
            let held: Vec<f64> = trained
                .iter()
                .filter(|t| t.0 == labels)
                .map(|t| held_out(&t.2))
                .collect();
            let held = held.iter().sum::<f64>() / held.len() as f64;
            art.metric(
                format!("{}_{subset}_mean", labels.name()),
                p.across_minima.0,
            );
            if subset == "all" {
                art.metric(format!("{}_held_out_accuracy", labels.name()), held);
            }
            summary.push((labels, subset, p, held));
        }
    }
    for subset in ["all", "top"] {
        let get = |l: Labels| {
            summary
                .iter()
                .find(|s| s.0 == l && s.1 == subset)
                .expect("both rows")
                .2
                .across_minima
                .0
        };
        art.metric(
            format!("ratio_{subset}"),
            get(Labels::Natural) / get(Labels::Random),
        );
    }
    art.csv("flatness.csv", |w| {
        writeln!(w, "labels,subset,mean_radius,std_across_minima,pooled_mean,pooled_std,minima,directions,held_out_accuracy")?;
        for (labels, subset, p, held) in &summary {
            writeln!(
                w,
                "{},{subset},{},{},{},{},{count},{directions},{held}",
                labels.name(),
                p.across_minima.0,
                p.across_minima.1,
                p.pooled.0,
                p.pooled.1
            )?;
        }
        Ok(())
    })?;
    art.csv("flatness_minima.csv", |w| {
        writeln!(w, "labels,subset,minimum,mean,std,directions,capped,failed")?;
        for (labels, subset, rep, r) in &reports {
            writeln!(
                w,
                "{},{subset},{rep},{},{},{},{},{}",
                labels.name(),
                r.mean,
                r.std,
                r.radii.len(),
                r.capped,
                r.failed
            )?;
        }
        Ok(())
    })?;
    art.csv("radii.csv", |w| {
        writeln!(w, "labels,subset,minimum,direction,radius")?;
        for (labels, subset, rep, r) in &reports {
            for (i, x) in r.radii.iter().enumerate() {
                writeln!(w, "{},{subset},{rep},{i},{x}", labels.name())?;
            }
        }
        Ok(())
    })?;
    let panels: Vec<Panel> = ["all", "top"]
        .iter()
        .map(|subset| {
            let mut p = Panel::new(
                format!("flatness radius per minimum ({subset} weights)"),
                "minimum",
                "radius",
            );
            for labels in BOTH {
                let pts = reports
                    .iter()
                    .filter(|(l, s, _, _)| *l == labels && s == subset)
                    .map(|(_, _, rep, r)| (*rep as f64, r.mean))
                    .collect();
                p = p.with(Series::line(labels.name(), pts));
            }
            p
        })
        .collect();
    art.svg("flatness.svg", &figure(art.header(), &panels, 2))
}
