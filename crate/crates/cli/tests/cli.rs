use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atlas")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn atlas_into(dir: &Path, extra: &[&str]) -> Output {
    let input = data("toy43.txt");
    let mut args = vec!["atlas", "--input", input.to_str().unwrap(), "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn sorted_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn roadmap_header(dir: &Path, key: &str) -> usize {
    let text = fs::read_to_string(dir.join("RoadMap.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse().unwrap()))
        .unwrap()
}

#[test]
fn atlas_writes_roadmap_and_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let out = atlas_into(dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let nodes = roadmap_header(dir.path(), "nodes ");
    assert!(nodes > 0);
    assert!(dir.path().join("problem.txt").exists());
    for id in 0..nodes {
        assert!(dir.path().join(format!("Node{id}.txt")).exists());
    }
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with(&format!("regions {nodes} ")));
}

#[test]
fn outputs_are_reproducible_across_runs_and_workers() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&atlas_into(a.path(), &[])), 0);
    assert_eq!(code(&atlas_into(b.path(), &["--workers", "3"])), 0);
    assert_eq!(sorted_files(a.path()), sorted_files(b.path()));
}

#[test]
fn interest_set_restricts_roots() {
    let dir = tempfile::tempdir().unwrap();
    let out = atlas_into(dir.path(), &["--interest", "a1:b1"]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(dir.path().join("RoadMap.txt")).unwrap();
    let roots = text.lines().filter(|l| l.starts_with("node ") && l.contains(" H=1 ")).count();
    assert_eq!(roots, 1);
}

#[test]
fn flags_override_the_problem_file() {
    let coarse = tempfile::tempdir().unwrap();
    let capped = tempfile::tempdir().unwrap();
    assert_eq!(code(&atlas_into(coarse.path(), &["--step", "1.0", "--variant", "prop"])), 0);
    assert_eq!(code(&atlas_into(capped.path(), &["--dim-floor", "4"])), 0);
    let text = fs::read_to_string(capped.path().join("RoadMap.txt")).unwrap();
    assert!(text.contains(" dim=4 "));
    assert!(!text.contains(" dim=3 "));
    let problem = fs::read_to_string(coarse.path().join("problem.txt")).unwrap();
    assert!(problem.lines().any(|l| l == "step 1"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let out = run(&["atlas", "--input", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());
    assert_eq!(code(&run(&["atlas", "--bogus"])), 2);
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&atlas_into(dir.path(), &["--interest", "a1-b1"])), 2);
    assert_eq!(code(&atlas_into(dir.path(), &["--interest", "a9:b1"])), 2);
    assert_eq!(code(&atlas_into(dir.path(), &["--step", "-1"])), 2);
    assert_eq!(code(&atlas_into(dir.path(), &["--variant", "sideways"])), 2);
    assert_eq!(code(&run(&["paths", "--out", dir.path().to_str().unwrap()])), 2);
}

#[test]
fn unwritable_output_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    assert_eq!(code(&atlas_into(&blocker.join("out"), &[])), 3);
}

#[test]
fn paths_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&atlas_into(dir.path(), &[])), 0);
    let d = dir.path().to_str().unwrap();
    let out = run(&["paths", "--out", d, "--pairs", "10", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read(dir.path().join("paths.txt")).unwrap();
    assert!(!first.is_empty());
    assert!(dir.path().join("path_matrix.txt").exists());
    assert_eq!(code(&run(&["paths", "--out", d, "--pairs", "10", "--seed", "7"])), 0);
    assert_eq!(fs::read(dir.path().join("paths.txt")).unwrap(), first);
    // node 0 is a root, not a vertex region
    assert_eq!(code(&run(&["paths", "--out", d, "--src", "0", "--dst", "0"])), 2);
    assert_eq!(code(&run(&["paths", "--out", d, "--src", "999999", "--dst", "0"])), 2);
}

#[test]
fn coverage_writes_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("toy43.txt");
    let out = run(&[
        "coverage",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--grid",
        "6",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    let methods: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["atlas-uniform", "atlas-inv", "atlas-prop", "mc"]);
    // the chain defaults to the first method's budget
    let samples: Vec<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(samples[0], samples[3]);
}

#[test]
fn empty_chain_gives_zero_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("toy43.txt");
    let out = run(&[
        "coverage",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--variant",
        "uniform",
        "--mc-iterations",
        "0",
        "--grid",
        "6",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mc = csv.lines().find(|l| l.starts_with("mc,")).unwrap();
    let cols: Vec<&str> = mc.split(',').collect();
    assert_eq!(cols[1], "0");
    assert_eq!(cols[4].parse::<f64>().unwrap(), 0.0);
    assert_eq!(cols[5].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn serve_reports_port_in_use() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port().to_string();
    let input = data("toy43.txt");
    let out = run(&["serve", "--input", input.to_str().unwrap(), "--port", &port]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains(&port));
}
