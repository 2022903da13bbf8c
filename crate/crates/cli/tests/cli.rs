use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use guiscout::dataset::{load_instructions, load_samples, DatasetManifest, INSTRUCTIONS_FILE};
use guiscout::explorer::read_run_log;
use guiscout::model::{state_fingerprint, ScreenParse};
use guiscout::sim::EnvDefinition;
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn office() -> String {
    fixtures().join("office_mini.json").display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_guiscout")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn explore_writes_dataset_and_run_log() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&["explore", "--env", &office(), "--strategy", "frontier_auto", "--seed", "7", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = read_run_log(&out.join("run_log.jsonl")).unwrap();
    assert_eq!((run.env_id.as_str(), run.seed), ("office_mini", 7));
    let manifest = DatasetManifest::load(&out).unwrap();
    assert_eq!(manifest.sample_count, 12);
    assert_eq!(load_samples(&out).unwrap().len(), 12);
    assert!(stdout(&o).contains("element_coverage 1.0000"));
}

#[test]
fn zero_budget_records_one_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["explore", "--env", &office(), "--budget", "0", "--out", p(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(DatasetManifest::load(tmp.path()).unwrap().sample_count, 1);
    assert_eq!(read_run_log(&tmp.path().join("run_log.jsonl")).unwrap().steps_used(), 0);
}

#[test]
fn explore_refuses_a_used_directory() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("keep.txt"), "x").unwrap();
    let o = run(&["explore", "--env", &office(), "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not empty"));
}

#[test]
fn usage_errors_exit_two() {
    let o = run(&["explore"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(run(&["bench", "--strategies", "frontier_auto,nope"]).status.code(), Some(2));
    assert_eq!(run(&["explore", "--env", &office(), "--dedup", "fuzzy"]).status.code(), Some(2));
    assert_eq!(run(&["bench", "--seeds", "9-2"]).status.code(), Some(2));
}

#[test]
fn bad_env_file_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let env = tmp.path().join("env.json");
    std::fs::write(&env, r#"{"env_id":"x","screen":{"w":10,"h":10},"initial_state":"S9","states":{}}"#).unwrap();
    let o = run(&["explore", "--env", p(&env), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("S9"));
}

#[test]
fn single_cell_bench() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("b");
    let o = run(&[
        "bench", "--env", &office(), "--strategies", "frontier_auto", "--seeds", "3", "--budget", "40", "--jobs", "1", "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 1);
    assert!(out.join("runs/office_mini/frontier_auto-seed3.jsonl").exists());
    assert!(std::fs::read_to_string(out.join("report.txt")).unwrap().contains("frontier_auto"));
}

#[test]
fn bench_is_byte_identical_and_uses_the_mock_selector() {
    let tmp = tempfile::tempdir().unwrap();
    let bench = |dir: &Path| {
        run(&[
            "bench", "--env", &office(), "--strategies", "llm_selector,random_walk_parser", "--seeds", "0-1", "--budget", "30",
            "--jobs", "2", "--out", p(dir),
        ])
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(bench(&a).status.success());
    assert!(bench(&b).status.success());
    let read = |d: &Path| std::fs::read(d.join("report.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    let run = read_run_log(&a.join("runs/office_mini/llm_selector-seed0.jsonl")).unwrap();
    assert!(run.fallbacks.is_empty(), "the bundled mock should answer every request");
}

#[test]
fn bench_flags_failed_cells_without_failing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("b");
    // a dropout of 1 is rejected per cell, not up front
    let o = run(&[
        "bench", "--env", &office(), "--strategies", "frontier_auto", "--seeds", "0", "--text-dropout", "1", "--out", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1), "every cell failed");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["cells"][0]["error"].as_str().unwrap().contains("dropout"));
}

#[test]
fn parse_fixture_state_matches_truth() {
    let o = run(&["parse", "--env", &office(), "--state", "open"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let parse: ScreenParse = serde_json::from_str(&stdout(&o)).unwrap();
    let def = EnvDefinition::load(Path::new(&office())).unwrap();
    let truth = def.state("open").unwrap().truth();
    assert_eq!(parse.elements.len(), truth.len());
    assert_eq!(parse.fingerprint, state_fingerprint(truth));
}

#[test]
fn parse_blank_and_broken_images() {
    let tmp = tempfile::tempdir().unwrap();
    let blank = tmp.path().join("blank.png");
    image::RgbImage::from_pixel(64, 48, image::Rgb([250, 250, 250])).save(&blank).unwrap();
    let templates = fixtures().join("templates/office_mini");
    let o = run(&["parse", "--image", p(&blank), "--templates", p(&templates)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let parse: ScreenParse = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(parse.elements.is_empty());

    let bad = tmp.path().join("bad.png");
    std::fs::write(&bad, b"not a png").unwrap();
    assert_eq!(run(&["parse", "--image", p(&bad)]).status.code(), Some(1));
}

#[test]
fn parse_screenshot_from_a_dataset_finds_icons() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert!(run(&["explore", "--env", &office(), "--budget", "0", "--out", p(&out)]).status.success());
    let shot = out.join("screens/s00000.png");
    let o = run(&["parse", "--image", p(&shot), "--templates", p(&fixtures().join("templates/office_mini"))]);
    let parse: ScreenParse = serde_json::from_str(&stdout(&o)).unwrap();
    let mut names: Vec<_> = parse.elements.iter().map(|e| e.name.as_str()).collect();
    names.sort_unstable();
    assert_eq!(names, ["New Doc", "Open File", "Print Doc", "Save File"]);
}

#[test]
fn gen_instructions_on_fixture_and_empty_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert!(run(&["explore", "--env", &office(), "--seed", "2", "--out", p(&out)]).status.success());
    let o = run(&["gen-instructions", "--dataset", p(&out), "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let instr = load_instructions(&out.join(INSTRUCTIONS_FILE)).unwrap();
    let manifest = DatasetManifest::load(&out).unwrap();
    assert_eq!(manifest.instruction_counts.values().sum::<usize>(), instr.len());
    assert!(manifest.instruction_counts.values().all(|n| *n > 0));
    assert_eq!(manifest.params.instruction_seed, Some(4));

    // empty dataset: a manifest with no samples
    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let m = DatasetManifest::new("x", "frontier_auto", 0, manifest.params.clone());
    std::fs::write(empty.join("manifest.json"), m.to_json()).unwrap();
    let o = run(&["gen-instructions", "--dataset", p(&empty)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(empty.join(INSTRUCTIONS_FILE)).unwrap(), "");

    let o = run(&["gen-instructions", "--dataset", p(&tmp.path().join("nowhere"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("manifest.json"));
}

fn write_case(dir: &Path, preds: &str) -> (PathBuf, PathBuf) {
    let gt = dir.join("gt.jsonl");
    std::fs::write(
        &gt,
        concat!(
            r#"{"query_id":"q0","sample_id":"s0","query_type":"name","query":"Find \"A\"","gt_bbox":{"x":0,"y":0,"w":10,"h":10},"element_name":"A","element_kind":"icon"}"#,
            "\n",
            r#"{"query_id":"q1","sample_id":"s0","query_type":"shape","query":"Find the element which has the following description: round","gt_bbox":{"x":20,"y":0,"w":10,"h":10},"element_name":"B","element_kind":"text"}"#,
            "\n"
        ),
    )
    .unwrap();
    let pred = dir.join("pred.jsonl");
    std::fs::write(&pred, preds).unwrap();
    (gt, pred)
}

#[test]
fn eval_grounding_perfect_disjoint_and_malformed() {
    let tmp = tempfile::tempdir().unwrap();
    let perfect = concat!(
        r#"{"sample_id":"s0","query_id":"q0","bbox":{"x":0,"y":0,"w":10,"h":10}}"#,
        "\n",
        r#"{"sample_id":"s0","query_id":"q1","bbox":{"x":20,"y":0,"w":10,"h":10}}"#,
        "\n"
    );
    let (gt, pred) = write_case(tmp.path(), perfect);
    let json = tmp.path().join("r.json");
    let o = run(&["eval-grounding", "--instructions", p(&gt), "--predictions", p(&pred), "--out", p(&json)]);
    assert!(stdout(&o).starts_with("accuracy 1.0000 (2/2)"), "{}", stdout(&o));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(r["overall"]["accuracy"], 1.0);

    let disjoint = perfect.replace("\"x\":0,", "\"x\":200,").replace("\"x\":20,", "\"x\":300,");
    let (gt, pred) = write_case(tmp.path(), &disjoint);
    let o = run(&["eval-grounding", "--instructions", p(&gt), "--predictions", p(&pred)]);
    assert!(stdout(&o).starts_with("accuracy 0.0000 (0/2)"), "{}", stdout(&o));

    let (gt, pred) = write_case(tmp.path(), &format!("{}\n{{broken\n", perfect.lines().next().unwrap()));
    let o = run(&["eval-grounding", "--instructions", p(&gt), "--predictions", p(&pred)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn help_documents_flags_and_defaults() {
    let expect: [(&str, &[&str]); 5] = [
        ("explore", &["--env", "--strategy", "--seed", "--budget", "[default: 500]", "--tau", "[default: 0.95]", "--dedup", "--error-pattern"]),
        ("bench", &["--jobs", "--seeds", "[default: 0-9]", "--strategies", "--suite", "--selector-endpoint"]),
        ("parse", &["--image", "--templates", "--state", "--nms-overlap", "[default: 0.5]"]),
        ("gen-instructions", &["--dataset", "--types", "--seed"]),
        ("eval-grounding", &["--instructions", "--predictions", "--out"]),
    ];
    for (cmd, flags) in expect {
        let o = run(&[cmd, "--help"]);
        assert!(o.status.success());
        let text = stdout(&o);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}
