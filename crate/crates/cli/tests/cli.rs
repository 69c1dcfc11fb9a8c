use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sigcode_core::descriptor::{read_descriptor_file, write_descriptor_file};
use sigcode_core::index::load_index;
use sigcode_core::{Descriptor, Family};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus")
}

struct Workspace {
    dir: tempfile::TempDir,
    profile: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let out = sigcode(&["synth-model", "--preset", "tiny", "--seed", "3", "--dir"], &[dir.path().join("model")]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let profile = PathBuf::from(String::from_utf8(out.stdout).unwrap().trim());
        Self { dir, profile }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    /// Manifest of the first `n` corpus images.
    fn manifest(&self, name: &str, n: usize, extra: &str) -> PathBuf {
        let text = std::fs::read_to_string(fixtures().join("corpus.tsv")).unwrap();
        let mut lines: Vec<String> = text
            .lines()
            .take(n)
            .map(|l| {
                let (id, rel) = l.split_once('\t').unwrap();
                format!("{id}\t{}", fixtures().join(rel).display())
            })
            .collect();
        if !extra.is_empty() {
            lines.push(extra.to_string());
        }
        let path = self.path(name);
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        path
    }

    fn run(&self, args: &[&str], manifest: &Path, out: &str) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sigcode"));
        cmd.args(args)
            .arg("--model")
            .arg(&self.profile)
            .arg("--manifest")
            .arg(manifest)
            .arg("--out")
            .arg(self.path(out))
            .env("RUST_LOG", "warn");
        cmd.output().unwrap()
    }
}

fn sigcode(args: &[&str], paths: &[PathBuf]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigcode"))
        .args(args)
        .args(paths)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn extract_index_query_round() {
    let ws = Workspace::new();
    let manifest = ws.manifest("m.tsv", 10, "");
    let out = ws.run(&["extract", "--workers", "2"], &manifest, "out");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("images 10 succeeded 10 failed 0"));
    for f in ["fc", "conv", "combined"] {
        assert_eq!(files(&ws.path(&format!("out/descriptors/{f}"))).len(), 10);
    }
    assert!(!ws.path("out/descriptors/external").exists());

    // Rerun: identical bytes.
    let before: Vec<Vec<u8>> = files(&ws.path("out/descriptors/combined"))
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect();
    assert!(ws.run(&["extract", "--workers", "1"], &manifest, "out").status.success());
    let after: Vec<Vec<u8>> = files(&ws.path("out/descriptors/combined"))
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect();
    assert_eq!(before, after);

    let out = ws.run(&["index"], &manifest, "out");
    assert!(out.status.success(), "{}", stderr(&out));
    let combined = load_index(ws.path("out/index/combined.didx")).unwrap();
    assert_eq!((combined.family(), combined.len(), combined.dim()), (Family::Combined, 10, 64 + 60));
    assert_eq!(combined.ids()[0], "astronaut_00");

    let out = ws.run(&["query", "--id", "astronaut_03"], &manifest, "out");
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let first: Vec<&str> = text.lines().next().unwrap().split('\t').collect();
    assert_eq!(first, ["1", "astronaut_03", "0.000000"]);
    assert_eq!(text.lines().count(), 5);

    let image = fixtures().join("images/astronaut_03.jpg");
    let out = ws.run(
        &["query", "--family", "conv", "--k", "3", "--format", "csv", "--image", image.to_str().unwrap()],
        &manifest,
        "out",
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("rank,image_id,distance"));
    assert!(text.lines().nth(1).unwrap().starts_with("1,astronaut_03,0.000000"), "{text}");
    assert_eq!(text.lines().count(), 4);

    let out = ws.run(&["query", "--id", "astronaut_03", "--format", "html"], &manifest, "out");
    assert!(out.status.success());
    let html = std::fs::read_to_string(ws.path("out/query/astronaut_03-combined.html")).unwrap();
    assert!(html.contains("astronaut_03.jpg"));
}

#[test]
fn unreadable_image_is_a_partial_failure() {
    let ws = Workspace::new();
    std::fs::write(ws.path("broken.jpg"), b"not an image").unwrap();
    let manifest = ws.manifest("m.tsv", 9, &format!("broken\t{}", ws.path("broken.jpg").display()));
    let out = ws.run(&["extract"], &manifest, "out");
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stdout(&out).contains("succeeded 9 failed 1"));
    let log = std::fs::read_to_string(ws.path("out/extract.log")).unwrap();
    assert!(log.lines().any(|l| l.starts_with("failed\tbroken\t")), "{log}");
    assert_eq!(files(&ws.path("out/descriptors/fc")).len(), 9);

    // Indexing names the missing id.
    let out = ws.run(&["index"], &manifest, "out");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("broken"), "{}", stderr(&out));
}

#[test]
fn index_edge_cases() {
    let ws = Workspace::new();
    let empty = ws.path("empty.tsv");
    std::fs::write(&empty, "").unwrap();
    let out = ws.run(&["index", "--families", "combined"], &empty, "out");
    assert!(out.status.success(), "{}", stderr(&out));
    let idx = load_index(ws.path("out/index/combined.didx")).unwrap();
    assert_eq!((idx.len(), idx.dim()), (0, 124));

    let manifest = ws.manifest("m.tsv", 3, "");
    assert!(ws.run(&["extract", "--families", "fc"], &manifest, "out").status.success());
    let path = ws.path("out/descriptors/fc/astronaut_01.desc");
    let (id, _) = read_descriptor_file(&path).unwrap();
    write_descriptor_file(&path, &id, &Descriptor::new(Family::Fc, vec![0.5; 7])).unwrap();
    let out = ws.run(&["index", "--families", "fc"], &manifest, "out");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("astronaut_01"), "{}", stderr(&out));
}

#[test]
fn evaluate_with_external_family() {
    let ws = Workspace::new();
    let manifest = ws.manifest("m.tsv", 12, "");
    let qtext: String = std::fs::read_to_string(fixtures().join("queries.tsv"))
        .unwrap()
        .lines()
        .take(2)
        .map(|l| {
            let (id, rel) = l.split_once('\t').unwrap();
            format!("{id}\t{}\n", fixtures().join(rel).display())
        })
        .collect();
    let queries = ws.path("q.tsv");
    std::fs::write(&queries, &qtext).unwrap();
    assert!(ws.run(&["extract"], &manifest, "out").status.success());
    assert!(ws.run(&["index"], &manifest, "out").status.success());

    // Without an external index: three families and a warning.
    let q = queries.to_str().unwrap();
    let out = ws.run(&["evaluate", "--queries", q, "--format", "csv"], &manifest, "out");
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("external"), "{}", stderr(&out));
    let summary = stdout(&out);
    assert_eq!(summary.lines().next(), Some("query,h(x),eta~(x),eta(x)"));

    // External vectors: an index over the corpus, per-query descriptor files.
    let vector = |i: usize| vec![(i % 3) as f32, ((i * 7) % 5) as f32, i as f32 / 4.0];
    let mut csv = String::from("id,a,b,c\n");
    let corpus_ids: Vec<String> = std::fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect();
    for (i, id) in corpus_ids.iter().enumerate() {
        let v = vector(i);
        csv.push_str(&format!("{id},{},{},{}\n", v[0], v[1], v[2]));
    }
    std::fs::write(ws.path("ext.csv"), csv).unwrap();
    let out = ws.run(&["import-external", "--csv", ws.path("ext.csv").to_str().unwrap()], &manifest, "out");
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("external\t12\t3\t"), "{}", stdout(&out));
    std::fs::create_dir_all(ws.path("out/descriptors/external")).unwrap();
    for (i, line) in qtext.lines().enumerate() {
        let id = line.split('\t').next().unwrap();
        let d = Descriptor::new(Family::External, vector(i + 5));
        write_descriptor_file(ws.path(&format!("out/descriptors/external/{id}.desc")), id, &d).unwrap();
    }

    let out = ws.run(&["evaluate", "--queries", q, "--format", "html"], &manifest, "out");
    assert!(out.status.success(), "{}", stderr(&out));
    let hits = std::fs::read_to_string(ws.path("out/report/hits.csv")).unwrap();
    assert_eq!(hits.lines().count(), 1 + 2 * 4 * 5);
    assert_eq!(
        hits.lines().next(),
        Some("query_id,family,rank,image_id,descriptor_distance,histogram_distance")
    );
    let summary = std::fs::read_to_string(ws.path("out/report/summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = summary.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["query", "IM(x)", "h(x)", "eta~(x)", "eta(x)"]);
    assert_eq!(rows.last().unwrap()[0], "Average");
    for c in 1..5 {
        let per_query: Vec<f64> = rows[1..3].iter().map(|r| r[c].parse().unwrap()).collect();
        let avg: f64 = rows[3][c].parse().unwrap();
        assert!((per_query.iter().sum::<f64>() / 2.0 - avg).abs() <= 1e-6, "column {c}");
    }
    assert!(ws.path("out/report/montage.html").is_file());
    assert!(ws.path("out/report/summary.txt").is_file());
}

#[test]
fn inspect_significance_maps() {
    let ws = Workspace::new();
    let manifest = ws.manifest("m.tsv", 2, "");
    let out = ws.run(&["inspect-significance", "--id", "astronaut_01", "--channels", "0,5"], &manifest, "out");
    assert!(out.status.success(), "{}", stderr(&out));
    let dir = ws.path("out/significance/astronaut_01");
    let names: Vec<String> = files(&dir)
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["z1.pgm", "z2.pgm", "z3.pgm", "z4.pgm", "z5_c0.pgm", "z5_c5.pgm"]);
    let z1 = std::fs::read(dir.join("z1.pgm")).unwrap();
    assert!(z1.starts_with(b"P5\n32 32\n255\n"));
    let z4 = std::fs::read(dir.join("z4.pgm")).unwrap();
    assert!(z4.starts_with(b"P5\n4 4\n255\n"));

    // Nothing is significant at a huge threshold: black maps.
    let out = ws.run(&["inspect-significance", "--id", "astronaut_01", "--q", "1e30"], &manifest, "black");
    assert!(out.status.success());
    for p in files(&ws.path("black/significance/astronaut_01")) {
        let bytes = std::fs::read(&p).unwrap();
        let body_len = match p.file_name().unwrap().to_str().unwrap() {
            "z1.pgm" => 32 * 32,
            "z2.pgm" => 16 * 16,
            "z3.pgm" => 8 * 8,
            "z4.pgm" => 4 * 4,
            _ => 2 * 2,
        };
        assert!(bytes[bytes.len() - body_len..].iter().all(|&b| b == 0), "{}", p.display());
    }
}

#[test]
fn configuration_errors_exit_with_two() {
    let ws = Workspace::new();
    let manifest = ws.manifest("m.tsv", 1, "");
    let out = ws.run(&["extract", "--q", "0"], &manifest, "out");
    assert_eq!(out.status.code(), Some(2));
    let out = ws.run(&["extract"], &ws.path("missing.tsv"), "out");
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = sigcode(&["index", "--families", "bogus"], &[]);
    assert_eq!(out.status.code(), Some(2));

    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sigcode"));
    let out = cmd
        .args(["extract", "--manifest"])
        .arg(&manifest)
        .env("SIGCODE_MODEL", ws.path("nope.toml"))
        .env("SIGCODE_OUT", ws.path("env-out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("nope.toml"));
}

#[test]
fn environment_overrides_flags() {
    let ws = Workspace::new();
    let manifest = ws.manifest("m.tsv", 6, "");
    assert!(ws.run(&["extract", "--families", "fc"], &manifest, "out").status.success());
    assert!(ws.run(&["index", "--families", "fc"], &manifest, "out").status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_sigcode"))
        .args(["query", "--family", "fc", "--id", "astronaut_00"])
        .env("SIGCODE_OUT", ws.path("out"))
        .env("SIGCODE_K", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 2);
}

#[test]
fn missing_index_is_a_clear_error() {
    let ws = Workspace::new();
    let manifest = ws.manifest("m.tsv", 1, "");
    let out = ws.run(&["query", "--id", "x", "--index", "/nonexistent/fc.didx", "--family", "fc"], &manifest, "out");
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("/nonexistent/fc.didx") && err.contains("No such file"), "{err}");
}

#[test]
fn dumps_drive_the_pipeline_without_a_model() {
    let ws = Workspace::new();
    let manifest = ws.manifest("m.tsv", 4, "");
    assert!(ws.run(&["extract", "--write-dumps"], &manifest, "a").status.success());
    assert_eq!(files(&ws.path("a/dumps")).len(), 4);

    let out = Command::new(env!("CARGO_BIN_EXE_sigcode"))
        .args(["extract", "--dumps"])
        .arg(ws.path("a/dumps"))
        .arg("--model")
        .arg(&ws.profile)
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(ws.path("b"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["fc", "conv", "combined"] {
        let a: Vec<Vec<u8>> = files(&ws.path(&format!("a/descriptors/{f}"))).iter().map(|p| std::fs::read(p).unwrap()).collect();
        let b: Vec<Vec<u8>> = files(&ws.path(&format!("b/descriptors/{f}"))).iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(a, b);
    }
}
