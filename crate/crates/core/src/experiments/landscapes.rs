use std::io::Write;

use super::svg::{figure, Panel, Series};
use super::{Artifacts, ExperimentConfig};
use crate::analysis::{occupancy, Axis, Histogram};
use crate::boltzmann::{basin_mass, marginal_1d, rejection_sample, BasinSpec, Source};
use crate::dynamics::{
    run_ensemble, Batch, DynamicsConfig, Initial, NoiseMode, Rule, SampleSet, Schedule,
};
use crate::error::{Error, Result};
use crate::potentials::{DecomposedPotential, Potential, PotentialSpec};
use crate::rng::child_seed;

// Step counts grow with d because inter-basin crossings slow down as the
// basins' relative volumes separate.
pub(super) const FLAT_VOLUME_DEFAULTS: [(&str, &str); 13] = [
    ("dims", "1,2,3,4,5"),
    ("side", "2"),
    ("flat_factor", "2"),
    ("stiffness", "1"),
    ("temperature", "0.04"),
    ("gamma", "0.15"),
    ("chains", "50"),
    ("steps", "1000000,1000000,2000000,5000000,5000000"),
    ("burn_fraction", "0.2"),
    ("thinning", "100"),
    ("margin", "0.45"),
    ("oracle_samples", "200000"),
    ("bins", "40"),
];

pub(super) const WEDGE_2D_DEFAULTS: [(&str, &str); 14] = [
    ("stiffness", "1"),
    ("half_width", "1"),
    ("temperature", "0.5"),
    ("gamma", "0.01"),
    ("chains", "8"),
    ("steps", "4000000"),
    ("burn_fraction", "0.2"),
    ("thinning", "20"),
    ("margin", "1.5"),
    ("examples", "256"),
    ("offset_scale", "0.5"),
    ("batch", "8"),
    ("oracle_samples", "400000"),
    ("bins", "40"),
];

pub(super) const WEDGE_5D_DEFAULTS: [(&str, &str); 12] = [
    ("dims", "2,3,4,5"),
    ("stiffness", "1"),
    ("half_width", "1"),
    ("temperature", "0.5"),
    ("gamma", "0.01"),
    ("chains", "8"),
    ("steps", "1000000"),
    ("burn_fraction", "0.2"),
    ("thinning", "20"),
    ("margin", "1.5"),
    ("oracle_samples", "200000"),
    ("bins", "40"),
];

pub(super) fn stationary(
    rule: Rule,
    gamma: f64,
    temperature: f64,
    batch: usize,
    steps: u64,
    burn_fraction: f64,
    thinning: u64,
    seed: u64,
) -> Result<DynamicsConfig> {
    if !(0.0..1.0).contains(&burn_fraction) {
        return Err(Error::param(format!(
            "burn_fraction must lie in [0, 1), got {burn_fraction}"
        )));
    }
    let noise = match rule {
        Rule::Gdl | Rule::Sgdl => Some(NoiseMode::Stationary { temperature }),
        Rule::Gd | Rule::Sgd => None,
    };
    Ok(DynamicsConfig {
        rule,
        step: Schedule::new(crate::dynamics::ScheduleKind::Constant, gamma, 0.0)?,
        noise,
        batch: Batch::Replacement(batch),
        total_steps: steps,
        burn_in: (steps as f64 * burn_fraction) as u64,
        thinning,
        seed,
    })
}

pub(super) fn sample(u: &dyn Potential, config: &DynamicsConfig, chains: u64) -> Result<SampleSet> {
    SampleSet::merge(run_ensemble(u, config, &Initial::Uniform, chains)?)
}

/// Columns of several 1-D histograms on the same axis.
pub(super) fn write_marginals(w: &mut Vec<u8>, names: &[&str], hists: &[Histogram]) -> Result<()> {
    write!(w, "bin_lo,bin_hi")?;
    for n in names {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    let axis = &hists[0].axes()[0];
    for i in 0..axis.bins {
        write!(w, "{},{}", axis.edge(i), axis.edge(i + 1))?;
        for h in hists {
            write!(w, ",{}", h.masses()[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub(super) fn marginal_series(name: &str, h: &Histogram) -> Series {
    let a = &h.axes()[0];
    let bins: Vec<(f64, f64, f64)> = (0..a.bins)
        .map(|i| (a.edge(i), a.edge(i + 1), h.masses()[i]))
        .collect();
    Series::histogram(name, &bins)
}

fn index_of(basins: &[BasinSpec], label: &str) -> usize {
    basins
        .iter()
        .position(|b| b.label == label)
        .expect("catalog basins are labelled")
}

pub(super) fn flat_volume_dims(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let dims: Vec<usize> = cfg.get_list("dims")?;
    let steps: Vec<u64> = cfg.get_list("steps")?;
    if steps.len() != dims.len() {
        return Err(Error::param(format!(
            "steps lists {} entries for {} dimensions",
            steps.len(),
            dims.len()
        )));
    }
    let (s, ff, k): (f64, f64, f64) = (
        cfg.get("side")?,
        cfg.get("flat_factor")?,
        cfg.get("stiffness")?,
    );
    let temperature: f64 = cfg.get("temperature")?;
    let gamma: f64 = cfg.get("gamma")?;
    let chains: u64 = cfg.get("chains")?;
    let margin: f64 = cfg.get("margin")?;
    let bins: usize = cfg.get("bins")?;
    let oracle_n: usize = cfg.get("oracle_samples")?;

    struct Row {
        d: usize,
        steps: u64,
        samples: usize,
        dynamics: Vec<f64>,
        oracle: Vec<f64>,
        rate: f64,
        marginals: [Histogram; 2],
    }
    let share = |m: &[f64], flat: usize, sharp: usize| -> Result<f64> {
        let total = m[flat] + m[sharp];
        if total > 0.0 {
            Ok(m[flat] / total)
        } else {
            Err(Error::EmptySamples)
        }
    };
    let mut rows = Vec::new();
    for (&d, &n_steps) in dims.iter().zip(&steps) {
        let u = PotentialSpec::flat_sharp(d, s, ff, k)?;
        let basins = BasinSpec::for_potential(&u, margin)?;
        let dc = stationary(
            Rule::Gdl,
            gamma,
            temperature,
            1,
            n_steps,
            cfg.get("burn_fraction")?,
            cfg.get("thinning")?,
            child_seed(cfg.seed, 100 + d as u64),
        )?;
        let set = sample(&u, &dc, chains)?;
        let oracle = rejection_sample(
            &u,
            temperature,
            oracle_n,
            child_seed(cfg.seed, 200 + d as u64),
        )?;
        rows.push(Row {
            d,
            steps: n_steps,
            samples: set.len(),
            dynamics: occupancy(&set, u.domain(), &basins)?,
            oracle: basin_mass(Source::Samples(&oracle.samples, u.domain()), &basins)?,
            rate: oracle.acceptance_rate,
            marginals: [
                marginal_1d(Source::Samples(&set, u.domain()), 0, bins)?,
                marginal_1d(Source::Samples(&oracle.samples, u.domain()), 0, bins)?,
            ],
        });
    }

    let probe = BasinSpec::for_potential(&PotentialSpec::flat_sharp(1, s, ff, k)?, margin)?;
    let (flat, sharp) = (index_of(&probe, "flat"), index_of(&probe, "sharp"));
    let mut table = Vec::new();
    for r in &rows {
        let prediction = ff.powi(r.d as i32) / (ff.powi(r.d as i32) + 1.0);
        let (ds, os) = (
            share(&r.dynamics, flat, sharp)?,
            share(&r.oracle, flat, sharp)?,
        );
        art.metric(format!("share_d{}", r.d), ds);
        art.metric(format!("oracle_share_d{}", r.d), os);
        art.metric(format!("prediction_d{}", r.d), prediction);
        table.push((r.d as f64, ds, os, prediction));
    }
    art.csv("occupancy.csv", |w| {
        writeln!(w, "d,steps,samples,flat,sharp,share,oracle_flat,oracle_sharp,oracle_share,prediction,acceptance_rate")?;
        for (r, t) in rows.iter().zip(&table) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.d, r.steps, r.samples, r.dynamics[flat], r.dynamics[sharp], t.1, r.oracle[flat], r.oracle[sharp], t.2, t.3, r.rate
            )?;
        }
        Ok(())
    })?;
    let mut panels = vec![Panel::new("flat-basin share vs dimension", "d", "share")
        .with(Series::line(
            "GDL",
            table.iter().map(|t| (t.0, t.1)).collect(),
        ))
        .with(Series::line(
            "rejection oracle",
            table.iter().map(|t| (t.0, t.2)).collect(),
        ))
        .with(Series::line(
            "2^d/(2^d+1)",
            table.iter().map(|t| (t.0, t.3)).collect(),
        ))];
    for r in &rows {
        art.csv(&format!("marginal_d{}.csv", r.d), |w| {
            write_marginals(w, &["gdl", "oracle"], &r.marginals)
        })?;
        panels.push(
            Panel::new(format!("d = {}: coordinate 0", r.d), "w_0", "probability")
                .with(marginal_series("GDL", &r.marginals[0]))
                .with(marginal_series("oracle", &r.marginals[1])),
        );
    }
    art.svg("flat_volume_dims.svg", &figure(art.header(), &panels, 3))
}

pub(super) struct WedgeRun {
    pub label: String,
    pub samples: SampleSet,
    pub masses: Vec<f64>,
}

/// Occupancies of the listed rules on `wedge:d` plus a rejection oracle
/// (always last). Stochastic rules run on a per-example decomposition of
/// the wedge whose offset scale is given per rule.
pub(super) fn wedge_runs(
    cfg: &ExperimentConfig,
    d: usize,
    rules: &[(Rule, f64, &str)],
    steps: u64,
    chains: u64,
    batch: usize,
    oracle_n: usize,
    tag: u64,
) -> Result<(PotentialSpec, Vec<BasinSpec>, Vec<WedgeRun>)> {
    let u = PotentialSpec::wedge(d, cfg.get("stiffness")?, cfg.get("half_width")?)?;
    let basins = BasinSpec::for_potential(&u, cfg.get("margin")?)?;
    let temperature: f64 = cfg.get("temperature")?;
    let gamma: f64 = cfg.get("gamma")?;
    let mut runs = Vec::new();
    for (i, &(rule, scale, label)) in rules.iter().enumerate() {
        let dc = stationary(
            rule,
            gamma,
            temperature,
            batch,
            steps,
            cfg.get("burn_fraction")?,
            cfg.get("thinning")?,
            child_seed(cfg.seed, tag + i as u64),
        )?;
        let set = if rule.is_stochastic() {
            let examples: usize = cfg.get("examples")?;
            let dec =
                DecomposedPotential::new(u.clone(), examples, scale, child_seed(cfg.seed, 5))?;
            sample(&dec, &dc, chains)?
        } else {
            sample(&u, &dc, chains)?
        };
        runs.push(WedgeRun {
            label: label.to_string(),
            masses: occupancy(&set, u.domain(), &basins)?,
            samples: set,
        });
    }
    let oracle = rejection_sample(&u, temperature, oracle_n, child_seed(cfg.seed, tag + 50))?;
    runs.push(WedgeRun {
        label: "oracle".to_string(),
        masses: basin_mass(Source::Samples(&oracle.samples, u.domain()), &basins)?,
        samples: oracle.samples,
    });
    Ok((u, basins, runs))
}

pub(super) fn write_wedge_occupancy(
    w: &mut Vec<u8>,
    basins: &[BasinSpec],
    runs: &[WedgeRun],
    d: Option<usize>,
) -> Result<()> {
    if d.is_some() {
        write!(w, "d,")?;
    }
    write!(w, "method,samples")?;
    for b in basins {
        write!(w, ",{}", b.label)?;
    }
    writeln!(w)?;
    for r in runs {
        if let Some(d) = d {
            write!(w, "{d},")?;
        }
        write!(w, "{},{}", r.label, r.samples.len())?;
        for m in &r.masses {
            write!(w, ",{m}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub(super) fn wedge_2d(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let scale: f64 = cfg.get("offset_scale")?;
    let (u, basins, runs) = wedge_runs(
        cfg,
        2,
        &[(Rule::Gdl, 0.0, "gdl"), (Rule::Sgdl, scale, "sgdl")],
        cfg.get("steps")?,
        cfg.get("chains")?,
        cfg.get("batch")?,
        cfg.get("oracle_samples")?,
        300,
    )?;
    let deg = index_of(&basins, "degenerate");
    let sharp = index_of(&basins, "sharp");
    for r in &runs {
        art.metric(format!("degenerate_{}", r.label), r.masses[deg]);
        art.metric(format!("sharp_{}", r.label), r.masses[sharp]);
    }
    art.csv("occupancy.csv", |w| {
        write_wedge_occupancy(w, &basins, &runs, None)
    })?;

    let bins: usize = cfg.get("bins")?;
    let names: Vec<&str> = runs.iter().map(|r| r.label.as_str()).collect();
    let mut panels = Vec::new();
    for axis in 0..2 {
        let hists = runs
            .iter()
            .map(|r| marginal_1d(Source::Samples(&r.samples, u.domain()), axis, bins))
            .collect::<Result<Vec<_>>>()?;
        art.csv(&format!("marginal_axis{axis}.csv"), |w| {
            write_marginals(w, &names, &hists)
        })?;
        let mut p = Panel::new(
            format!("wedge d = 2: coordinate {axis}"),
            format!("w_{axis}"),
            "probability",
        );
        for (r, h) in runs.iter().zip(&hists) {
            p = p.with(marginal_series(&r.label, h));
        }
        panels.push(p);
    }
    let dom = u.domain();
    for r in &runs {
        let axes = (0..2)
            .map(|a| Axis::new(dom.lower()[a], dom.upper()[a], bins))
            .collect::<Result<Vec<_>>>()?;
        let h = Histogram::from_points(axes, &[0, 1], r.samples.iter())?;
        art.csv(&format!("density_{}.csv", r.label), |w| h.write_csv(w))?;
    }
    art.svg("wedge_2d.svg", &figure(art.header(), &panels, 1))
}

pub(super) fn wedge_5d(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let dims: Vec<usize> = cfg.get_list("dims")?;
    let bins: usize = cfg.get("bins")?;
    let mut table = Vec::new();
    let mut panels = Vec::new();
    let mut occupancy_rows = Vec::new();
    for &d in &dims {
        let (u, basins, runs) = wedge_runs(
            cfg,
            d,
            &[(Rule::Gdl, 0.0, "gdl")],
            cfg.get("steps")?,
            cfg.get("chains")?,
            1,
            cfg.get("oracle_samples")?,
            400 + 100 * d as u64,
        )?;
        let deg = index_of(&basins, "degenerate");
        art.metric(format!("degenerate_d{d}"), runs[0].masses[deg]);
        art.metric(format!("oracle_degenerate_d{d}"), runs[1].masses[deg]);
        table.push((d as f64, runs[0].masses[deg], runs[1].masses[deg]));
        let hists = runs
            .iter()
            .map(|r| marginal_1d(Source::Samples(&r.samples, u.domain()), 0, bins))
            .collect::<Result<Vec<_>>>()?;
        art.csv(&format!("marginal_d{d}.csv"), |w| {
            write_marginals(w, &["gdl", "oracle"], &hists)
        })?;
        panels.push(
            Panel::new(format!("wedge d = {d}: coordinate 0"), "w_0", "probability")
                .with(marginal_series("GDL", &hists[0]))
                .with(marginal_series("oracle", &hists[1])),
        );
        let mut buf = Vec::new();
        write_wedge_occupancy(&mut buf, &basins, &runs, Some(d))?;
        occupancy_rows.push(buf);
    }
    art.csv("occupancy.csv", |w| {
        for (i, rows) in occupancy_rows.iter().enumerate() {
            let text = std::str::from_utf8(rows).expect("written as utf-8");
            let skip = usize::from(i > 0);
            for line in text.lines().skip(skip) {
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    })?;
    panels.insert(
        0,
        Panel::new("degenerate-basin occupancy vs dimension", "d", "occupancy")
            .with(Series::line(
                "GDL",
                table.iter().map(|t| (t.0, t.1)).collect(),
            ))
            .with(Series::line(
                "rejection oracle",
                table.iter().map(|t| (t.0, t.2)).collect(),
            )),
    );
    art.svg("wedge_dims.svg", &figure(art.header(), &panels, 3))
}
