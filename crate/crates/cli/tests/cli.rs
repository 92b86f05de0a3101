use std::path::Path;
use std::process::{Command, Output};

fn citysim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_citysim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn citysim")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn generate_run_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = citysim(
        &[
            "gen-city",
            "--rows",
            "3",
            "--cols",
            "3",
            "--pois-per-area",
            "12",
            "--out",
            "city.json",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = citysim(
        &[
            "gen-personas",
            "--city",
            "city.json",
            "--n",
            "8",
            "--out",
            "personas.jsonl",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read_to_string(d.join("personas.jsonl"))
            .unwrap()
            .lines()
            .count(),
        8
    );

    std::fs::write(
        d.join("sim.toml"),
        "city = \"city.json\"\ndays = 2\nseed = 4\noutput_dir = \"out\"\n\n[population]\npath = \"personas.jsonl\"\n",
    )
    .unwrap();
    let out = citysim(&["run", "--config", "sim.toml"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["agents"], 8);
    assert_eq!(summary["days"], 2);
    assert!(d.join("out/events.jsonl").exists());

    let out = citysim(
        &[
            "analyze",
            "--log",
            "out/events.jsonl",
            "--metric",
            "timeuse",
            "--personas",
            "personas.jsonl",
            "--out",
            "tu.csv",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d.join("tu.csv")).unwrap();
    assert!(csv.lines().count() >= 2);

    for metric in ["travel", "density"] {
        let out = citysim(
            &[
                "analyze",
                "--log",
                "out/events.jsonl",
                "--metric",
                metric,
                "--out",
                "m.json",
                "--format",
                "json",
            ],
            d,
        );
        assert_eq!(
            code(&out),
            0,
            "{metric}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        serde_json::from_str::<serde_json::Value>(
            &std::fs::read_to_string(d.join("m.json")).unwrap(),
        )
        .unwrap();
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&citysim(&["--help"], d)), 0);
    assert_eq!(code(&citysim(&["no-such-command"], d)), 1);
    assert_eq!(code(&citysim(&["run", "--config", "missing.toml"], d)), 1);
    std::fs::write(d.join("bad.toml"), "days = 0\n").unwrap();
    assert_eq!(code(&citysim(&["run", "--config", "bad.toml"], d)), 1);
    std::fs::write(d.join("log.jsonl"), "").unwrap();
    let out = citysim(
        &[
            "analyze",
            "--log",
            "log.jsonl",
            "--metric",
            "travel",
            "--out",
            "x",
            "--format",
            "xml",
        ],
        d,
    );
    assert_eq!(code(&out), 1);
    let out = citysim(
        &[
            "analyze",
            "--log",
            "log.jsonl",
            "--metric",
            "nope",
            "--out",
            "x",
        ],
        d,
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = citysim(
        &[
            "analyze",
            "--log",
            "absent.jsonl",
            "--metric",
            "travel",
            "--out",
            "x",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bench_prints_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = citysim(
        &[
            "bench",
            "--agents",
            "200,400",
            "--reps",
            "2",
            "--out",
            "bench.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "agents,mean_s,sd_s,reps,agent_steps,status");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("200,") && lines[2].starts_with("400,"));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("bench.csv")).unwrap(),
        csv
    );
}
