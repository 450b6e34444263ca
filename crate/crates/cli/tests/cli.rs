//! The binary end to end on the synthetic fixture: exit codes, stage
//! failures, manifests and degenerate intervals.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agrotrend_cli::fixture::{write_fixture, FixtureOptions};
use agrotrend_cli::manifest::{read_manifest, MANIFEST, TIMINGS};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_agrotrend"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Fixture with a small bootstrap and ensemble so a full run stays quick.
fn fixture(dir: &Path, draws: usize, pairings: usize) -> PathBuf {
    let mut cfg = write_fixture(dir, &FixtureOptions::default()).unwrap();
    cfg.draws = draws;
    cfg.pairings = pairings;
    let path = dir.join("run.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn full_run_then_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path(), 40, 200);
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let m = read_manifest(&out).unwrap();
    assert!(m.failed_stage.is_none());
    for name in ["stock_grid.csv", "fig1e.csv", "fig2a.csv", "figs16.csv", "figs18.csv", "draws.csv"] {
        assert!(m.outputs.contains_key(name), "{name} missing from manifest");
    }
    for ssp in ["ssp126", "ssp245", "ssp370", "ssp585"] {
        for stem in ["impacts", "offset_stock", "growth", "cumulative"] {
            assert!(m.outputs.contains_key(&format!("{stem}_{ssp}.csv")));
        }
        assert!(m.outputs.contains_key(&format!("tfp_sim_{ssp}_2.csv")));
    }
    assert!(!m.outputs.contains_key(TIMINGS));
    assert!(!m.outputs.contains_key(MANIFEST));
    // nothing on disk that the manifest does not know about
    for entry in fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        assert!(name == MANIFEST || name == TIMINGS || m.outputs.contains_key(&name), "{name} not listed");
    }
    assert!(m.inputs.keys().any(|k| k.ends_with("tfp.csv")));

    let fig1e = csv_rows(&out.join("fig1e.csv"));
    assert_eq!(fig1e.len(), 5 * 50);
    assert_eq!(fig1e[0][2], "1");

    let o = run(&["verify", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    fs::write(out.join("fig1e.csv"), "lag,weight,rank\n").unwrap();
    let o = run(&["verify", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("fig1e.csv"));
}

#[test]
fn single_draw_and_pairing_give_degenerate_intervals() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path(), 1, 1);
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for (file, first) in [
        ("bootstrap_summary.csv", 4),
        ("sensitivity_T.csv", 1),
        ("sensitivity_P.csv", 1),
        ("impacts_ssp245.csv", 1),
        ("impacts_smoothed_ssp585.csv", 1),
        ("growth_ssp126.csv", 1),
        ("offset_stock_ssp370.csv", 1),
    ] {
        let rows = csv_rows(&out.join(file));
        assert!(!rows.is_empty());
        for r in rows {
            if r[first] == "NA" {
                continue;
            }
            let mu: f64 = r[first].parse().unwrap();
            let lo: f64 = r[first + 1].parse().unwrap();
            let hi: f64 = r[first + 2].parse().unwrap();
            assert!(mu == lo && lo == hi, "{file}: {r:?}");
        }
    }
}

#[test]
fn stage_failure_names_stage_and_keeps_upstream() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path(), 20, 50);
    let empty = tmp.path().join("no_scenarios");
    fs::create_dir(&empty).unwrap();
    let text = fs::read_to_string(&cfg).unwrap().replace("data/scenarios", "no_scenarios");
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("stage `project` failed"), "{}", stderr(&o));
    let m = read_manifest(&out).unwrap();
    assert_eq!(m.failed_stage.as_deref(), Some("project"));
    for name in ["stock_grid.csv", "weather_fit.json", "draws.csv", "sensitivity_T.csv"] {
        assert!(out.join(name).exists() && m.outputs.contains_key(name), "{name}");
    }
    assert!(!out.join("growth_ssp245.csv").exists());
    let o = run(&["verify", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "no_such_key = 1\n").unwrap();
    assert_eq!(code(&run(&["run", "--config", bad.to_str().unwrap()])), 2);

    fs::write(&bad, "grid = \"0:1:0.5\"\n").unwrap();
    assert_eq!(code(&run(&["print-config", "--config", bad.to_str().unwrap()])), 2);

    let missing = tmp.path().join("missing.toml");
    assert_eq!(code(&run(&["run", "--config", missing.to_str().unwrap()])), 4);

    let out = tmp.path().join("out");
    let nodata = tmp.path().join("nodata");
    let o = run(&["fit-stock", "--data", nodata.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("stage `load` failed"));

    // a one-year-long lag cannot be estimated beside the intercept
    let cfg = fixture(tmp.path(), 5, 5);
    let o = run(&["fit-stock", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--lags", "0"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn subcommands_take_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path(), 10, 20);
    let out = tmp.path().join("out");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());

    let r = run(&["fit-stock", "--config", c, "--out", o, "--grid", "0.7:0.8:0.05", "--lags", "40"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(csv_rows(&out.join("stock_grid.csv")).len(), 9);
    assert_eq!(csv_rows(&out.join("fig1e.csv")).len(), 5 * 40);
    assert!(!out.join("draws.csv").exists());

    let r = run(&["sensitivity", "--config", c, "--out", o, "--dt", "-1:2", "--dp", "-10:10:10"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let t: Vec<_> = csv_rows(&out.join("sensitivity_T.csv")).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(t, ["-1", "0", "1", "2"]);
    assert_eq!(csv_rows(&out.join("sensitivity_P.csv")).len(), 3);

    let r = run(&["solve-offset", "--config", c, "--out", o, "--ssp", "ssp585", "--targets", "2050,2075"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let g = csv_rows(&out.join("growth_ssp585.csv"));
    assert_eq!(g.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["2050", "2075"]);
    assert!(!out.join("growth_ssp126.csv").exists());

    let r = run(&["simulate-tfp", "--config", c, "--out", o, "--ssp", "ssp126", "--growth", "0,3"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(out.join("tfp_sim_ssp126_3.csv").exists());

    let r = run(&["figure", "figs18", "--config", c, "--out", o]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let r = run(&["figure", "fig9", "--config", c, "--out", o]);
    assert_eq!(code(&r), 2);
}

#[test]
fn draws_file_replaces_bootstrap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path(), 15, 40);
    let c = cfg.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let r = run(&["project", "--config", c, "--out", a.to_str().unwrap(), "--ssp", "ssp245"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let draws = a.join("draws.csv");
    // a different seed would change the bootstrap; the file pins it
    let r = run(&[
        "project",
        "--config",
        c,
        "--out",
        b.to_str().unwrap(),
        "--ssp",
        "ssp245",
        "--draws-file",
        draws.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(fs::read(a.join("impacts_ssp245.csv")).unwrap(), fs::read(b.join("impacts_ssp245.csv")).unwrap());
    assert!(!b.join("draws.csv").exists() || fs::read(b.join("draws.csv")).unwrap() == fs::read(&draws).unwrap());
    let m = read_manifest(&b).unwrap();
    assert!(m.inputs.keys().any(|k| k.ends_with("draws.csv")));
}

#[test]
fn make_fixture_and_print_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("fx");
    let r = run(&["make-fixture", dir.to_str().unwrap(), "--gcms", "1", "--cells", "2"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(dir.join("data/tfp.csv").exists());
    let r = run(&["print-config", "--config", dir.join("run.toml").to_str().unwrap(), "--seed", "99"]);
    assert_eq!(code(&r), 0);
    assert!(String::from_utf8_lossy(&r.stdout).contains("seed = 99"));
}
