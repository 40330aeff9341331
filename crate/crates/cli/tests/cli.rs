use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const FRAME: &str =
    r#"{"n": 2, "factors": [{"c": 1, "rows": [[1, 0]]}, {"c": 1, "rows": [[0, 1]]}]}"#;
const YOUNG: &str = r#"{"n": 2, "factors": [{"c": 0.75, "rows": [[1, 0]]}, {"c": 0.75, "rows": [[0, 1]]}, {"c": 0.5, "rows": [[1, -1]]}]}"#;

fn blc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blc"))
        .args(args)
        .output()
        .expect("blc runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_on_a_frame_gives_one() {
    let dir = TempDir::new().unwrap();
    let datum = write(&dir, "frame.json", FRAME);
    let out = dir.path().join("r.json");
    let o = blc(&["solve", "--datum", &datum, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("C = 1.000000000000"));
    let r = report(&out);
    assert_eq!(r["command"], "solve");
    assert_eq!(r["passed"], true);
    assert_eq!(r["datum_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn young_four_thirds() {
    let o = blc(&[
        "young",
        "--p",
        "1.3333333333",
        "--q",
        "1.3333333333",
        "--r",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("C (solver)  = 0.877382"), "{text}");
    assert!(text.contains("C (Beckner) = 0.877382"), "{text}");
}

#[test]
fn young_rejects_unlinked_exponents() {
    let o = blc(&["young", "--p", "1.5", "--q", "1.5", "--r", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn too_small_constant_is_a_violation() {
    let dir = TempDir::new().unwrap();
    let datum = write(&dir, "frame.json", FRAME);
    let o = blc(&[
        "check-gaussian",
        "--datum",
        &datum,
        "--constant",
        "0.5",
        "--samples",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("VIOLATION"));
}

#[test]
fn malformed_input_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let bad = write(
        &dir,
        "bad.json",
        r#"{"n": 2, "factors": [{"c": 1, "rows": [[1, 0, 0]]}]}"#,
    );
    let truncated = write(&dir, "cut.json", r#"{"n": "#);
    for path in [bad.as_str(), truncated.as_str(), "/nonexistent/datum.json"] {
        let o = blc(&["validate", "--datum", path]);
        assert_eq!(o.status.code(), Some(2), "{path}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let datum = write(&dir, "young.json", YOUNG);
    let runs: Vec<Vec<u8>> = ["1", "4"]
        .iter()
        .enumerate()
        .map(|(k, threads)| {
            let out = dir.path().join(format!("r{k}.json"));
            let o = blc(&[
                "--threads",
                threads,
                "check-gaussian",
                "--datum",
                &datum,
                "--samples",
                "200",
                "--seed",
                "7",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(o.status.code(), Some(0));
            fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);

    let bd: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .map(|threads| {
            let csv = dir.path().join(format!("bd{threads}.csv"));
            let o = blc(&[
                "--threads",
                threads,
                "bd",
                "--samples",
                "3000",
                "--steps",
                "16",
                "--csv",
                csv.to_str().unwrap(),
            ]);
            assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
            fs::read(csv).unwrap()
        })
        .collect();
    assert_eq!(bd[0], bd[1]);
}

#[test]
fn digest_ignores_formatting() {
    let dir = TempDir::new().unwrap();
    let compact = write(&dir, "a.json", FRAME);
    let spaced = write(&dir, "b.json", &FRAME.replace(", ", ",\n    "));
    let digests: Vec<String> = [compact, spaced]
        .iter()
        .enumerate()
        .map(|(k, datum)| {
            let out = dir.path().join(format!("v{k}.json"));
            blc(&["validate", "--datum", datum, "--out", out.to_str().unwrap()]);
            report(&out)["datum_sha256"].as_str().unwrap().to_owned()
        })
        .collect();
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn split_reports_multiplicativity() {
    let dir = TempDir::new().unwrap();
    let sum = r#"{"n": 4, "factors": [
        {"c": 0.75, "rows": [[1, 0, 0, 0]]}, {"c": 0.75, "rows": [[0, 1, 0, 0]]}, {"c": 0.5, "rows": [[1, -1, 0, 0]]},
        {"c": 1, "rows": [[0, 0, 1, 0]]}, {"c": 1, "rows": [[0, 0, 0, 1]]}]}"#;
    let datum = write(&dir, "sum.json", sum);
    let o = blc(&["split", "--datum", &datum]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("[0, 1]: critical"));
}

#[test]
fn quadrature_on_grid_functions() {
    let dir = TempDir::new().unwrap();
    let datum = write(&dir, "frame.json", FRAME);
    let functions = write(
        &dir,
        "fs.json",
        r#"[{"family": "gaussian", "center": [0.3], "precision": [[2.0]], "grid": {"lo": [-6], "hi": [6], "points_per_axis": 241}},
            {"family": "bump", "center": [-0.2], "radius": 1.5, "grid": {"lo": [-2], "hi": [2], "points_per_axis": 241}}]"#,
    );
    let o = blc(&[
        "check-quadrature",
        "--datum",
        &datum,
        "--functions",
        &functions,
        "--resolution",
        "121",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
}
