use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use posobs_cli::commands::example_problem;
use posobs_cli::problem::ProblemFile;
use posobs_core::synth::Domain;

fn posobs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posobs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_problem(dir: &Path, name: &str, p: &ProblemFile) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, p.to_json()).unwrap();
    path
}

#[test]
fn bundled_files_match_core_fixtures() {
    for (file, domain) in [
        ("continuous_4_1.json", Domain::Continuous),
        ("discrete_4_2.json", Domain::Discrete),
    ] {
        let text = std::fs::read_to_string(example(file)).unwrap();
        let mut parsed = ProblemFile::parse(&text).unwrap();
        parsed.comment = None;
        assert_eq!(parsed, example_problem(domain), "{file}");
    }
}

#[test]
fn problem_file_round_trips() {
    let text = std::fs::read_to_string(example("discrete_4_2.json")).unwrap();
    let parsed = ProblemFile::parse(&text).unwrap();
    assert_eq!(parsed.to_json(), text);
    assert!(parsed.comment.unwrap().contains("order of appearance"));
}

#[test]
fn check_bundled_examples_pass() {
    for file in ["continuous_4_1.json", "discrete_4_2.json"] {
        let o = posobs(&["check", example(file).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        let text = stdout(&o);
        assert_eq!(
            text.lines()
                .filter(|l| l.starts_with("condition") && l.ends_with(" pass"))
                .count(),
            4,
            "{text}"
        );
        assert!(text.contains("overall: pass"));
    }
}

#[test]
fn check_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = example_problem(Domain::Continuous);
    p.observer = None;
    let path = write_problem(dir.path(), "noobs.json", &p);
    let o = posobs(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no observer block"));

    let mut p = example_problem(Domain::Continuous);
    p.p = 5;
    let path = write_problem(dir.path(), "partition.json", &p);
    let o = posobs(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invalid partition"), "{}", stderr(&o));

    let mut p = example_problem(Domain::Continuous);
    let mut m = p.a_lower[1].to_rows();
    m[2][0] = -1.0;
    p.a_lower[1] = posobs_core::matcore::Mat::from_rows(&m).unwrap();
    let path = write_problem(dir.path(), "metzler.json", &p);
    let o = posobs(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("A_lower[2] not Metzler at (3,1)"),
        "{}",
        stderr(&o)
    );

    let path = dir.path().join("garbage.json");
    std::fs::write(&path, "{\"domain\": \"continuous\"").unwrap();
    assert_eq!(
        posobs(&["check", path.to_str().unwrap()]).status.code(),
        Some(2)
    );
    assert_eq!(
        posobs(&["check", "/nonexistent/file.json"]).status.code(),
        Some(2)
    );
}

#[test]
fn check_failing_observer_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = example_problem(Domain::Continuous);
    p.observer.as_mut().unwrap().omega0_lower = vec![4.0, 4.0, 4.0];
    let path = write_problem(dir.path(), "bad.json", &p);
    let o = posobs(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("overall: FAIL"));
}

#[test]
fn synthesize_emits_checkable_observer_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = example_problem(Domain::Continuous);
    p.observer = None;
    let input = write_problem(dir.path(), "in.json", &p);
    let out1 = dir.path().join("out1.json");
    let out2 = dir.path().join("out2.json");
    for out in [&out1, &out2] {
        let o = posobs(&[
            "synthesize",
            input.to_str().unwrap(),
            "--seed",
            "9",
            "--budget",
            "500",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
        assert!(stdout(&o).contains("step 6"));
    }
    let (a, b) = (std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());
    assert_eq!(a, b);
    let emitted = ProblemFile::read(&out1).unwrap();
    assert!(emitted.observer.as_ref().unwrap().derived.is_some());
    let o = posobs(&["check", out1.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    // stdout variant is the same document
    let o = posobs(&[
        "synthesize",
        input.to_str().unwrap(),
        "--seed",
        "9",
        "--budget",
        "500",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(o.stdout, a);
}

#[test]
fn synthesize_infeasible_toy_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
  "domain": "discrete",
  "n": 2,
  "p": 1,
  "N": 1,
  "A_lower": [[[0.5, 0.0], [0.3, 2.0]]],
  "A_upper": [[[0.5, 0.0], [0.3, 2.0]]],
  "x0_lower": [0.0, 0.0],
  "x0_upper": [1.0, 1.0]
}"#;
    let path = dir.path().join("toy.json");
    std::fs::write(&path, text).unwrap();
    let o = posobs(&["synthesize", path.to_str().unwrap(), "--budget", "100"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no feasible gain"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn simulate_bundled_examples() {
    let dir = tempfile::tempdir().unwrap();
    for (file, rows) in [("continuous_4_1.json", 2002), ("discrete_4_2.json", 62)] {
        let csv = dir.path().join(format!("{file}.csv"));
        let o = posobs(&[
            "simulate",
            example(file).to_str().unwrap(),
            "--out",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        assert!(stdout(&o).contains("violations: 0"));
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("t,x1,"));
        // the grid may gain a few switch times
        assert!(
            text.lines().count() >= rows,
            "{file}: {}",
            text.lines().count()
        );
    }
}

#[test]
fn simulate_with_sampled_truth() {
    let o = posobs(&[
        "simulate",
        example("continuous_4_1.json").to_str().unwrap(),
        "--sample-truth",
        "7",
        "--horizon",
        "1.0",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("violations: 0"));
    let fixture = posobs(&[
        "simulate",
        example("continuous_4_1.json").to_str().unwrap(),
        "--horizon",
        "1.0",
    ]);
    assert_ne!(o.stdout, fixture.stdout);
}

#[test]
fn simulate_rejects_truth_outside_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = example_problem(Domain::Discrete);
    p.truth.as_mut().unwrap().x0[2] = 50.0;
    let path = write_problem(dir.path(), "truth.json", &p);
    let o = posobs(&["simulate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("x0[3]"), "{}", stderr(&o));
}

#[test]
fn simulate_is_deterministic() {
    let file = example("discrete_4_2.json");
    let args = ["simulate", file.to_str().unwrap(), "--sample-truth", "3"];
    let (a, b) = (posobs(&args), posobs(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn reproduce_examples() {
    for id in ["4.1", "4.2"] {
        let o = posobs(&["reproduce", id]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        assert!(stdout(&o).contains("reproduction: pass"));
    }
    assert_eq!(posobs(&["reproduce", "4.3"]).status.code(), Some(2));
}
