use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn refinery(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refinery"))
        .args(args)
        .output()
        .expect("spawn refinery")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn doc(id: &str, lang: &str, text: &str) -> String {
    serde_json::json!({"id": id, "lang": lang, "source": "web", "text": text}).to_string()
}

fn write_lines(path: &Path, lines: &[String]) {
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn words(seed: usize, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("w{}", (seed * 7919 + k * 104_729) % 100_003)).collect()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn normalize_twice_modifies_nothing_the_second_time() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    write_lines(
        &input,
        &[
            doc("a", "id", "Halo\u{a0}dunia\u{2003}ini \u{201c}contoh\u{201d}."),
            doc("b", "id", r"Satu.\nDua. Tiga.\nEmpat"),
            doc("c", "th", "สวัสดี\u{a0}ครับ"),
        ],
    );
    let once = dir.path().join("once.jsonl");
    let twice = dir.path().join("twice.jsonl");
    let out = refinery(&["normalize", "--in", p(&input), "--out", p(&once)]);
    assert!(out.status.success(), "{out:?}");
    assert!(read_json(&dir.path().join("once.jsonl.stats.json"))["modified"].as_u64().unwrap() > 0);

    let out = refinery(&["normalize", "--in", p(&once), "--out", p(&twice)]);
    assert!(out.status.success());
    let stats = read_json(&dir.path().join("twice.jsonl.stats.json"));
    assert_eq!(stats["modified"], 0);
    assert_eq!(std::fs::read(&once).unwrap(), std::fs::read(&twice).unwrap());
}

#[test]
fn dedup_removes_exactly_the_planted_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let mut lines = Vec::new();
    let mut planted = Vec::new();
    for i in 0..40 {
        let base = words(i, 80);
        lines.push(doc(&format!("d{i:02}"), "id", &base.join(" ")));
        if i % 5 == 0 {
            let mut v = base.clone();
            v.push("tambahan".into());
            let id = format!("d{i:02}-dup");
            lines.push(doc(&id, "id", &v.join(" ")));
            planted.push((id, format!("d{i:02}")));
        }
    }
    write_lines(&input, &lines);
    let output = dir.path().join("out.jsonl");
    let out = refinery(&["dedup", "--in", p(&input), "--out", p(&output), "--seed", "3"]);
    assert!(out.status.success(), "{out:?}");

    let kept = std::fs::read_to_string(&output).unwrap().lines().count();
    assert_eq!(kept, 40);
    let clusters: Vec<(String, String)> = std::fs::read_to_string(dir.path().join("out.jsonl.clusters.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (v["removed"].as_str().unwrap().into(), v["representative"].as_str().unwrap().into())
        })
        .collect();
    assert_eq!(clusters, planted);
    let stats = read_json(&dir.path().join("out.jsonl.stats.json"));
    assert_eq!(stats["docs_in"], 48);
    assert_eq!(stats["docs_out"], 40);
}

fn write_records(path: &Path) {
    let mixes = [
        (0.2, 0.3, 0.5),
        (0.5, 0.25, 0.25),
        (0.1, 0.8, 0.1),
        (0.6, 0.1, 0.3),
        (0.3, 0.3, 0.4),
        (0.7, 0.2, 0.1),
    ];
    let lines: Vec<String> = mixes
        .iter()
        .map(|&(a, b, c)| {
            serde_json::json!({
                "mixture": {"a": a, "b": b, "c": c},
                "learning_rate": 1e-4,
                "losses": {"id": 1.0 + 2.0 * a + 3.0 * b},
            })
            .to_string()
        })
        .collect();
    write_lines(path, &lines);
}

#[test]
fn mixture_fit_reports_perfect_r_squared_and_simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("runs.jsonl");
    write_records(&records);
    let model = dir.path().join("model.json");
    let out = refinery(&["mixture", "fit", "--in", p(&records), "--out", p(&model)]);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("R² = 1.000"), "{}", stdout(&out));

    let (s1, s2) = (dir.path().join("s1.json"), dir.path().join("s2.json"));
    for s in [&s1, &s2] {
        let out = refinery(&[
            "mixture", "simulate", "--model", p(&model), "--out", p(s), "--n", "1000000", "--seed", "7",
        ]);
        assert!(out.status.success(), "{out:?}");
    }
    assert_eq!(std::fs::read(&s1).unwrap(), std::fs::read(&s2).unwrap());
    let best = read_json(&s1);
    assert!(best["mixture"]["c"].as_f64().unwrap() > 0.98);
}

#[test]
fn boundary_with_huge_delta_prints_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("runs.jsonl");
    let lines: Vec<String> = [0.1, 0.3, 0.5, 0.7, 0.9]
        .iter()
        .map(|&a: &f64| {
            serde_json::json!({
                "mixture": {"a": a, "b": 1.0 - a},
                "learning_rate": 1e-4,
                "losses": {"id": 2.0 + (a - 0.5).powi(2)},
            })
            .to_string()
        })
        .collect();
    write_lines(&records, &lines);
    let out = refinery(&[
        "mixture", "boundary", "--in", p(&records), "--key", "a", "--baseline", "2.0", "--delta", "1e9", "--out",
        p(&dir.path().join("b.json")),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(stdout(&out).starts_with("no boundary in fitted range"), "{}", stdout(&out));
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(refinery(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unknown_stage_in_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    write_lines(&input, &[doc("a", "id", "halo")]);
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "stages = [\"normalize\", \"polish\"]\n").unwrap();
    let out = refinery(&[
        "pipeline", "--config", p(&config), "--in", p(&input), "--out", p(&dir.path().join("w")),
    ]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    write_lines(&input, &[doc("a", "id", "halo")]);
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "[dedup]\nthreshold = 1.5\n").unwrap();
    let out = refinery(&[
        "dedup", "--config", p(&config), "--in", p(&input), "--out", p(&dir.path().join("o.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn missing_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = refinery(&[
        "normalize", "--in", p(&dir.path().join("absent.jsonl")), "--out", p(&dir.path().join("o.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn malformed_record_in_strict_mode_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    std::fs::write(&input, "{\"id\": \"a\"}\n").unwrap();
    let out = refinery(&[
        "normalize", "--strict", "--in", p(&input), "--out", p(&dir.path().join("o.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(4), "{out:?}");
}
