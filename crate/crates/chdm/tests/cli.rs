//! End-to-end checks of the `chdm` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chdm::config::FileConfig;
use chdm_core::traffic::ScenarioKind;
use tempfile::TempDir;

fn chdm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chdm")).args(args).output().expect("spawn chdm")
}

fn config_path(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(config: &str, level: &str, seed: &str, steps: &str, out: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate", "--config", config, "--human-level", level, "--seed", seed, "--steps", steps, "--output", out,
    ];
    args.extend_from_slice(extra);
    chdm(&args)
}

/// Rows of a CSV as header-keyed lookups.
fn read_csv(p: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn shipped_configs_spell_out_the_defaults() {
    for kind in [ScenarioKind::Intersection, ScenarioKind::Overtaking, ScenarioKind::Merging] {
        let loaded = FileConfig::load(Path::new(&config_path(&format!("{}.toml", kind.name())))).unwrap();
        assert_eq!(loaded, FileConfig::defaults(kind), "{}", kind.name());
    }
}

#[test]
fn build_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = config_path("intersection.toml");
    let (a, b) = (path(&dir, "a.cache"), path(&dir, "b.cache"));
    let oa = chdm(&["build", "--config", &cfg, "--output", &a]);
    let ob = chdm(&["build", "--config", &cfg, "--output", &b]);
    assert!(oa.status.success(), "{}", stderr(&oa));
    assert!(ob.status.success(), "{}", stderr(&ob));
    let hash = |o: &Output| String::from_utf8_lossy(&o.stdout).split_whitespace().next().unwrap().to_string();
    assert_eq!(hash(&oa), hash(&ob));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn configuration_errors_exit_with_status_two() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "e.csv");
    let bad_eps = write(&dir, "eps.toml", "schema_version = 1\nscenario = \"intersection\"\nepsilon = 1.5\n");
    for o in [
        chdm(&["build", "--config", &bad_eps, "--output", &path(&dir, "c")]),
        simulate(&bad_eps, "1", "0", "3", &out, &[]),
    ] {
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains("epsilon out of [0,1]"), "{}", stderr(&o));
    }
    let unknown = write(&dir, "unknown.toml", "schema_version = 1\nscenario = \"intersection\"\nhorizn = 3\n");
    assert_eq!(simulate(&unknown, "1", "0", "3", &out, &[]).status.code(), Some(2));
    let o = chdm(&[
        "evaluate", "--config", &config_path("intersection.toml"), "--seeds", "1", "--human-level", "3", "--output", &out,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("exceeds k_max"), "{}", stderr(&o));
}

#[test]
fn simulation_logs_are_byte_identical_and_complete() {
    let dir = TempDir::new().unwrap();
    let cfg = config_path("intersection.toml");
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    let oa = simulate(&cfg, "2", "5", "4", &a, &[]);
    let ob = simulate(&cfg, "2", "5", "4", &b, &[]);
    assert!(oa.status.success(), "{}", stderr(&oa));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    // Summaries agree apart from wall-clock planning times.
    let strip = |o: &Output| {
        let mut v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        let m = v.as_object_mut().unwrap();
        m.remove("mean_planning_ms");
        m.remove("max_planning_ms");
        v
    };
    let summary = strip(&oa);
    assert_eq!(summary, strip(&ob));
    let (header, rows) = read_csv(&a);
    assert_eq!(rows.len(), summary["steps"].as_u64().unwrap() as usize + 1);
    assert!(rows.len() <= 5);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), header.len());
        assert_eq!(r[col(&header, "t")], i.to_string());
    }
    // The first row carries no actions or plan statistics.
    assert_eq!(rows[0][col(&header, "ego_action")], "");
    assert_eq!(rows[0][col(&header, "constraint_probability")], "");
}

/// Safe-set membership recomputed from the logged positions alone.
fn replayed_safe(kind: ScenarioKind, c: &FileConfig, row: &[String], header: &[String]) -> Option<bool> {
    let f = |name: &str| row[col(header, name)].parse::<f64>().unwrap();
    let (ex, ey, ev, hx, hy, hv) = (f("ego_x"), f("ego_y"), f("ego_v"), f("human_x"), f("human_y"), f("human_v"));
    match kind {
        ScenarioKind::Intersection => {
            // The human travels along world y, so its track position is a y coordinate.
            let gap = c.intersection_gap * c.car_length;
            let samples = if c.swept_separation { 20_000 } else { 0 };
            let min = (0..=samples)
                .map(|i| {
                    let back = c.dt * i as f64 / samples.max(1) as f64;
                    let (x1, y1) = (ex - back * ev, ey);
                    let (x2, y2) = (hy, hx - back * hv);
                    ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            // Sampling can only overestimate the minimum; skip borderline rows.
            ((min - gap).abs() > 1e-3).then_some(min >= gap)
        }
        ScenarioKind::Overtaking | ScenarioKind::Merging => {
            let apart = (ex - hx).abs() >= c.longitudinal_gap * c.car_length - 1e-9 || (ey - hy).abs() >= c.lane_width - 1e-9;
            if kind == ScenarioKind::Overtaking {
                return Some(apart);
            }
            let right = (ey - 0.5 * c.lane_width).abs() < 1e-6;
            let left = (ey - 1.5 * c.lane_width).abs() < 1e-6;
            let section = if ex <= c.merge_start {
                right
            } else if ex <= c.merge_end {
                true
            } else {
                left
            };
            Some(apart && section)
        }
    }
}

#[test]
fn logged_safety_flags_replay_from_positions() {
    let dir = TempDir::new().unwrap();
    let mut checked = 0;
    let mut unsafe_rows = 0;
    let cases: [(ScenarioKind, &[(&str, &str)]); 3] = [
        (ScenarioKind::Intersection, &[("2", "0"), ("2", "4"), ("2", "8"), ("1", "1")]),
        (ScenarioKind::Overtaking, &[("1", "0"), ("2", "3")]),
        (ScenarioKind::Merging, &[("1", "0"), ("2", "2")]),
    ];
    for (kind, runs) in cases {
        let cfg_path = config_path(&format!("{}.toml", kind.name()));
        let cfg = FileConfig::load(Path::new(&cfg_path)).unwrap();
        for (level, seed) in runs {
            let out = path(&dir, &format!("{}_{level}_{seed}.csv", kind.name()));
            let o = simulate(&cfg_path, level, seed, "20", &out, &[]);
            assert!(o.status.success(), "{}", stderr(&o));
            let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
            let (header, rows) = read_csv(&out);
            let mut any_unsafe = false;
            for row in &rows {
                let logged = row[col(&header, "safe")] == "1";
                any_unsafe |= !logged;
                if let Some(expected) = replayed_safe(kind, &cfg, row, &header) {
                    assert_eq!(logged, expected, "{} level {level} seed {seed} row {row:?}", kind.name());
                    checked += 1;
                    unsafe_rows += !expected as usize;
                }
            }
            assert_eq!(summary["violation"].as_bool().unwrap(), any_unsafe);
        }
    }
    assert!(checked > 50, "only {checked} rows checked ({unsafe_rows} unsafe)");
}

#[test]
fn zero_seeds_give_an_empty_report() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "summary.json");
    let o = chdm(&["evaluate", "--config", &config_path("intersection.toml"), "--seeds", "0", "--output", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for level in report["levels"].as_array().unwrap() {
        assert_eq!(level["episodes"], 0);
    }
}

#[test]
fn cached_and_on_demand_models_give_the_same_episode() {
    let dir = TempDir::new().unwrap();
    let cfg = config_path("intersection.toml");
    let cache = path(&dir, "h.cache");
    assert!(chdm(&["build", "--config", &cfg, "--output", &cache]).status.success());
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    let oa = simulate(&cfg, "1", "3", "6", &a, &["--cache", &cache]);
    let ob = simulate(&cfg, "1", "3", "6", &b, &[]);
    assert!(oa.status.success(), "{}", stderr(&oa));
    assert!(ob.status.success(), "{}", stderr(&ob));
    assert!(!stderr(&oa).contains("ignoring"), "{}", stderr(&oa));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    // A cache built for another configuration is ignored with a warning.
    let other = write(&dir, "other.toml", "schema_version = 1\nscenario = \"intersection\"\nepsilon = 0.05\n");
    let c = path(&dir, "c.csv");
    let oc = simulate(&other, "1", "3", "6", &c, &["--cache", &cache]);
    assert!(oc.status.success(), "{}", stderr(&oc));
    assert!(stderr(&oc).contains("warning"), "{}", stderr(&oc));
}

#[test]
fn infeasible_start_aborts_or_falls_back() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "tight.toml",
        "schema_version = 1\nscenario = \"intersection\"\n[ego]\ns0 = -8.0\n[human]\ns0 = -8.0\n",
    );
    let out = path(&dir, "t.csv");
    let o = simulate(&cfg, "1", "0", "3", &out, &["--on-infeasible", "abort"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = simulate(&cfg, "1", "0", "3", &out, &["--on-infeasible", "fallback"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("fallback"), "{}", stderr(&o));
    let (header, rows) = read_csv(&out);
    assert_eq!(rows[1][col(&header, "fallback")], "1");
    assert_eq!(rows[1][col(&header, "feasible")], "0");
}

#[test]
fn snapshots_are_written_per_record() {
    let dir = TempDir::new().unwrap();
    let snaps = dir.path().join("snaps");
    let out = path(&dir, "s.csv");
    let o = simulate(
        &config_path("merging.toml"),
        "1",
        "0",
        "3",
        &out,
        &["--snapshots", &snaps.to_string_lossy()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_csv(&out);
    for t in 0..rows.len() {
        let svg = std::fs::read_to_string(snaps.join(format!("step_{t:03}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
    assert_eq!(std::fs::read_dir(&snaps).unwrap().count(), rows.len());
}
