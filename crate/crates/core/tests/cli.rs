use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn flatmin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatmin"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = flatmin(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn unknown_experiment_exits_2_with_usage() {
    let out = flatmin(&["run", "fig-nope"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("usage:") && err.contains("fig-wedge-2d"),
        "{err}"
    );
}

#[test]
fn unknown_key_and_bad_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = flatmin(&[
        "run",
        "fig-wedge-2d",
        "--out",
        p(dir.path()),
        "--set",
        "stepz=10",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = flatmin(&[
        "oracle",
        "--potential",
        "quadratic:d=1,a=-1",
        "--temp",
        "1",
        "--out",
        p(&dir.path().join("o.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

const SMALL_WEDGE: [&str; 6] = [
    "--set",
    "steps=20000",
    "--set",
    "oracle_samples=20000",
    "--set",
    "chains=2",
];

#[test]
fn experiment_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = |sub: &str, threads: &str| {
        let out = dir.path().join(sub);
        let mut args = vec![
            "--threads",
            threads,
            "run",
            "fig-wedge-2d",
            "--seed",
            "7",
            "--out",
            p(&out),
        ];
        args.extend(SMALL_WEDGE);
        ok(&args);
        fs::read_to_string(out.join("manifest.txt")).unwrap()
    };
    let a = manifest("a", "1");
    assert!(a.lines().any(|l| l.ends_with("  occupancy.csv")));
    assert_eq!(a, manifest("b", "3"));
}

#[test]
fn set_overrides_config_file_and_artifacts_are_valid_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "seed = 5\nsteps = 30000\noracle_samples = 20000\nchains = 2\ntemperature = 0.7\n",
    )
    .unwrap();
    let first = dir.path().join("first");
    ok(&[
        "run",
        "fig-wedge-2d",
        "--out",
        p(&first),
        "--config",
        p(&cfg),
        "--set",
        "temperature=0.6",
    ]);
    let summary = fs::read_to_string(first.join("summary.csv")).unwrap();
    assert!(summary.contains("# seed = 5\n"));
    assert!(summary.contains("# steps = 30000\n"));
    assert!(summary.contains("# temperature = 0.6\n"));

    let again = dir.path().join("again");
    ok(&[
        "run",
        "fig-wedge-2d",
        "--out",
        p(&again),
        "--config",
        p(&first.join("summary.csv")),
    ]);
    assert_eq!(
        fs::read_to_string(first.join("manifest.txt")).unwrap(),
        fs::read_to_string(again.join("manifest.txt")).unwrap()
    );
}

#[test]
fn simulate_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (sim, orc) = (dir.path().join("sim.csv"), dir.path().join("orc.csv"));
    let u = "quadratic:d=1,a=1";
    ok(&[
        "simulate",
        "--potential",
        u,
        "--rule",
        "gdl",
        "--gamma",
        "0.01",
        "--noise-mode",
        "stationary:T=0.5",
        "--steps",
        "200000",
        "--burn-in",
        "20000",
        "--thin",
        "10",
        "--traj",
        "4",
        "--seed",
        "3",
        "--out",
        p(&sim),
    ]);
    ok(&[
        "oracle",
        "--potential",
        u,
        "--temp",
        "0.5",
        "--bins",
        "40",
        "--out",
        p(&orc),
    ]);
    let text = fs::read_to_string(&sim).unwrap();
    assert!(text.starts_with("# potential = "));
    let stdout = ok(&["compare", "--hist", p(&sim), "--oracle", p(&orc)]);
    let tv: f64 = stdout
        .trim()
        .strip_prefix("tv = ")
        .unwrap()
        .parse()
        .unwrap();
    assert!(tv < 0.05, "tv {tv}");
}

#[test]
fn train_then_measure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let mut ckpts = Vec::new();
    for seed in ["1", "2", "3"] {
        let ck = dir.path().join(format!("w{seed}.txt"));
        ok(&[
            "train",
            "--arch",
            "4-8-2",
            "--samples",
            "32",
            "--held-out",
            "16",
            "--max-steps",
            "3000",
            "--target-loss",
            "0.01",
            "--seed",
            seed,
            "--out",
            p(&ck),
            "--save-data",
            p(&data),
        ]);
        ckpts.push(ck);
    }
    let flat = ok(&[
        "flatness",
        "--checkpoint",
        p(&ckpts[0]),
        "--data",
        p(&data),
        "--dirs",
        "8",
    ]);
    assert!(flat.starts_with("subset,epsilon,directions,mean,std"));
    let row: Vec<&str> = flat.lines().nth(1).unwrap().split(',').collect();
    assert!(row[3].parse::<f64>().unwrap() > 0.0);

    let grid = dir.path().join("simplex.csv");
    let svg = dir.path().join("simplex.svg");
    ok(&[
        "interp",
        "--w1",
        p(&ckpts[0]),
        "--w2",
        p(&ckpts[1]),
        "--w3",
        p(&ckpts[2]),
        "--data",
        p(&data),
        "--m",
        "6",
        "--out",
        p(&grid),
        "--svg",
        p(&svg),
    ]);
    assert!(fs::read_to_string(&svg).unwrap().contains("<svg"));
    let rows = fs::read_to_string(&grid)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count();
    assert_eq!(rows, 1 + 28);

    let hist = dir.path().join("noise.csv");
    let stats = ok(&[
        "noise-hist",
        "--checkpoint",
        p(&ckpts[0]),
        "--data",
        p(&data),
        "--batch",
        "8",
        "--components",
        "4",
        "--draws",
        "500",
        "--out",
        p(&hist),
    ]);
    assert_eq!(stats.lines().count(), 5);
}
