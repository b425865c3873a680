use std::fs;
use std::path::Path;
use std::process::Command;

use abrsim::cli::{main_with_args, EXIT_INVALID, EXIT_IO, EXIT_OK, EXIT_USAGE};
use abrsim::scenario::{builtin, parse_scenario, BUILTIN_NAMES};

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("abrsim").chain(args.iter().copied());
    let code = main_with_args(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn run_writes_csvs_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let (code, stdout, err) = cli(&[
        "run",
        "--scenario",
        "three-source",
        "--variant",
        "neff-measured",
        "--duration",
        "60ms",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(stdout.contains("variant: neff-measured"));
    for name in ["acr.csv", "queue.csv", "neff.csv", "util.csv"] {
        let text = read(&out, name);
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("time_ms,"), "{name}");
        assert_eq!(lines.next().unwrap().split(',').next(), Some("0"));
        assert_eq!(text.lines().count(), 602, "{name}");
    }
    assert_eq!(
        read(&out, "acr.csv").lines().next(),
        Some("time_ms,S1,S2,S3")
    );
    assert!(read(&out, "report.txt").contains("SW1->SW2"));
}

#[test]
fn csvs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let (code, _, err) = cli(&[
                "run",
                "--scenario",
                "two-source",
                "--variant",
                "erica-fair",
                "--duration",
                "0.08s",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, EXIT_OK, "{err}");
            out
        })
        .collect();
    for name in ["acr.csv", "queue.csv", "neff.csv", "util.csv", "report.txt"] {
        assert_eq!(
            fs::read(runs[0].join(name)).unwrap(),
            fs::read(runs[1].join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn oracle_prints_the_upstream_allocation() {
    let (code, stdout, _) = cli(&[
        "oracle",
        "--scenario",
        "upstream",
        "--capacity-override",
        "150",
    ]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 17);
    assert_eq!(lines[0], "S1,10");
    assert!(lines.contains(&"S16,70"));
    assert!(lines.contains(&"S17,70"));
}

#[test]
fn validate_accepts_exports_and_rejects_broken_files() {
    let dir = tempfile::tempdir().unwrap();
    for name in BUILTIN_NAMES {
        let (code, text, _) = cli(&["export", name]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(parse_scenario(&text).unwrap(), builtin(name).unwrap());
        let path = dir.path().join(format!("{name}.toml"));
        fs::write(&path, &text).unwrap();
        let (code, stdout, _) = cli(&["validate", "--file", path.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK);
        assert!(stdout.ends_with(": ok\n"));
    }

    let broken = dir.path().join("broken.toml");
    let text = cli(&["export", "two-source"])
        .1
        .replace("\"sw1-sw2\", \"sw2-d1\"", "\"sw9-sw2\", \"sw2-d1\"");
    fs::write(&broken, text).unwrap();
    let (code, _, err) = cli(&["validate", "--file", broken.to_str().unwrap()]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("vcs[") && err.contains("sw9-sw2"), "{err}");

    fs::write(&broken, "name = \"x\"\nbogus = 1\n").unwrap();
    let (code, _, err) = cli(&["validate", "--file", broken.to_str().unwrap()]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn usage_and_io_errors_have_their_own_codes() {
    assert_eq!(cli(&["run", "--scenario", "nope"]).0, EXIT_USAGE);
    assert_eq!(
        cli(&["run", "--scenario", "two-source", "--variant", "magic"]).0,
        EXIT_USAGE
    );
    assert_eq!(
        cli(&["run", "--scenario", "two-source", "--duration", "soon"]).0,
        EXIT_USAGE
    );
    assert_eq!(cli(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(
        cli(&["validate", "--file", "/definitely/not/here.toml"]).0,
        EXIT_IO
    );
    let (code, _, err) = cli(&[
        "run",
        "--scenario",
        "two-source",
        "--target-util",
        "1.5",
        "--out",
        "/tmp/unused",
    ]);
    assert_eq!(code, EXIT_INVALID, "{err}");
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_abrsim");
    let status = Command::new(bin)
        .args(["oracle", "--scenario", "three-source"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_OK));
    assert_eq!(
        String::from_utf8_lossy(&status.stdout).lines().next(),
        Some("S1,10")
    );
    let status = Command::new(bin)
        .args(["run", "--variant", "x"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    assert!(!status.stderr.is_empty());
}

#[test]
fn documented_scenario_files_match_the_builders() {
    let docs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/scenarios");
    for name in BUILTIN_NAMES {
        let text = fs::read_to_string(docs.join(format!("{name}.toml"))).unwrap();
        assert!(text.starts_with('#'), "{name} should open with a comment");
        assert_eq!(
            parse_scenario(&text).unwrap(),
            builtin(name).unwrap(),
            "{name}"
        );
    }
}
