use std::path::PathBuf;
use std::process::{Command, Output};

fn corrqec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrqec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

fn temp_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("corrqec-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn every_subcommand_writes_csv_with_metadata() {
    let cases: &[&[&str]] = &[
        &["probabilities", "--steps", "3"],
        &["decay", "--steps", "3", "--tmax", "0.5"],
        &["scatter", "--samples", "4"],
        &["regime-map", "--grid", "0,1,2"],
        &[
            "optimize",
            "--restarts",
            "1",
            "--max-evals",
            "50",
            "--steps",
            "3",
            "--tmax",
            "0.5",
        ],
        &["recovery-check"],
        &["tables"],
    ];
    for args in cases {
        let out = corrqec(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let csv = stdout(&out);
        assert!(csv.starts_with("# tool=corrqec "), "{args:?}");
        assert!(csv.contains(&format!("# command={}\n", args[0])));
        assert!(csv.contains("# seed=1\n"));
        assert!(data_rows(&csv).len() >= 2, "{args:?}");
    }
}

#[test]
fn tables_match_layout() {
    let csv = stdout(&corrqec(&["tables", "--n", "4"]));
    let rows = data_rows(&csv);
    assert_eq!(rows[0], "quantity,t,value_2dp,value");
    assert_eq!(rows.len(), 1 + 5 * 6);
    assert!(rows.contains(&"6p2,0.1,0.24,0.24197957995732405"));
}

#[test]
fn same_seed_same_bytes() {
    let run = |seed: &str| corrqec(&["scatter", "--samples", "12", "--seed", seed]).stdout;
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
    let opt = || {
        corrqec(&[
            "optimize",
            "--restarts",
            "2",
            "--max-evals",
            "80",
            "--steps",
            "2",
            "--tmax",
            "0.5",
        ])
        .stdout
    };
    assert_eq!(opt(), opt());
}

#[test]
fn scatter_reports_correlation_summary() {
    let csv = stdout(&corrqec(&["scatter", "--samples", "30"]));
    let last = csv.lines().last().unwrap();
    let r: f64 = last
        .strip_prefix("# summary pearson_r=")
        .unwrap()
        .parse()
        .unwrap();
    assert!(r > 0.0);
    assert_eq!(data_rows(&csv)[0], "sample,d_delta_dt,d_negativity_dt");
}

#[test]
fn flags_override_config_file() {
    let cfg = temp_path("run.cfg");
    std::fs::write(
        &cfg,
        "# decay settings\nn = 4\ntmax = 0.2\nsteps = 5\nseed = 42\n",
    )
    .unwrap();
    let cfg_arg = cfg.to_str().unwrap();
    let csv = stdout(&corrqec(&["decay", "--config", cfg_arg, "--steps", "3"]));
    assert!(csv.contains("# n=4\n"));
    assert!(csv.contains("# seed=42\n"));
    assert!(csv.contains("# steps=3\n"));
    assert_eq!(data_rows(&csv).len(), 4);
}

#[test]
fn out_flag_writes_file() {
    let path = temp_path("tables.csv");
    let out = corrqec(&["tables", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("p3,0.1,0.13,"));
}

#[test]
fn bitflip_decay_matches_dephasing() {
    let rows = |kind: &str| {
        let csv = stdout(&corrqec(&[
            "decay", "--kind", kind, "--steps", "6", "--tmax", "1",
        ]));
        data_rows(&csv)
            .iter()
            .skip(1)
            .map(|r| {
                r.split(',')
                    .map(|x| x.parse::<f64>().unwrap())
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    for (a, b) in rows("dephasing").iter().zip(rows("bitflip")) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn config_errors_exit_with_2() {
    let bad: &[&[&str]] = &[
        &["decay", "--tmax", "0"],
        &["decay", "--steps", "1"],
        &["decay", "--n", "3", "--gamma", "0.1,0.2"],
        &["decay", "--kind", "amplitude"],
        &["decay", "--code", "anti4"],
        &["scatter", "--samples", "1"],
        &["decay", "--config", "/nonexistent/corrqec.cfg"],
        &["decay", "--bogus", "1"],
    ];
    for args in bad {
        let out = corrqec(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let err = String::from_utf8(corrqec(&["decay", "--tmax", "-1"]).stderr).unwrap();
    assert!(err.contains("'tmax'"), "{err}");
}

#[test]
fn unknown_config_key_names_the_key() {
    let cfg = temp_path("bad.cfg");
    std::fs::write(&cfg, "n = 3\nwidth = 2\n").unwrap();
    let out = corrqec(&["tables", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("'width'"));
}
