use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const MINIMAL_RQ36: &str = "rq36~lane.3-hard_shoulder.1~";

fn sceneforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sceneforge"))
        .args(args)
        .env("SCENEFORGE_NO_COLOR", "1")
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn catalog(dir: &Path) -> Vec<Value> {
    fs::read_to_string(dir.join("catalog.ndjson")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn stat(report: &str, label: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(label).filter(|rest| rest.starts_with("  ")).map(|v| v.trim().to_owned()))
        .unwrap_or_else(|| panic!("no `{label}` in\n{report}"))
}

fn sample_kb_json() -> Value {
    serde_json::from_str(sceneforge_sample()).unwrap()
}

fn sceneforge_sample() -> &'static str {
    include_str!("../../core/data/german_motorway.kb.json")
}

#[test]
fn stats_report_on_sample_without_participants() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = sceneforge(&["--stats", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    assert!(!report.contains('\x1b'));
    assert_eq!(stat(&report, "classes"), "43");
    assert_eq!(stat(&report, "logical axioms"), "117");
    assert_eq!(stat(&report, "rules"), "13 (10 inference, 3 constraint)");
    assert_eq!(stat(&report, "layouts"), "144");
    assert_eq!(stat(&report, "weather setups"), "4");
    // Infrastructure-only scenes: layouts times weather setups.
    assert_eq!(stat(&report, "emitted scenes"), "576");
    assert_eq!(stat(&report, "candidate scenes"), "576");
    assert_eq!(stat(&report, "eliminated scenes"), "0");
    assert_eq!(catalog(&out).len(), 576);
}

#[test]
fn stats_arithmetic_holds_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["comfort", "critical"] {
        let out = dir.path().join(mode);
        let o = sceneforge(&[
            "--stats",
            "--layouts",
            "rq36",
            "--participants",
            "car=1,truck=1",
            "--positions-per-lane",
            "1",
            "--weather",
            "sunny",
            "--mode",
            mode,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let r = stdout(&o);
        let n = |label: &str| stat(&r, label).parse::<usize>().unwrap();
        assert_eq!(n("emitted scenes") + n("eliminated scenes"), n("candidate scenes"), "{r}");
        assert_eq!(n("emitted scenes"), n(&format!("scenes ({mode} mode)")));
        assert_eq!(catalog(&out).len(), n("emitted scenes"));
        assert_eq!(n("placements (raw)"), 54 * 3 * 2);
        assert_eq!(n("placements (deduplicated)"), 54 * 3 * 2);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let code = |args: &[&str]| sceneforge(args).status.code().unwrap();

    assert_eq!(code(&["--kb", "/nonexistent/kb.json", "--out", out]), 4);

    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{ not json").unwrap();
    assert_eq!(code(&["--kb", broken.to_str().unwrap(), "--out", out]), 1);

    let mut kb = sample_kb_json();
    kb["classes"][0]["parent"] = Value::String("no_such_class".into());
    let invalid = dir.path().join("invalid.json");
    fs::write(&invalid, kb.to_string()).unwrap();
    assert_eq!(code(&["--kb", invalid.to_str().unwrap(), "--out", out]), 2);

    assert_eq!(code(&["--participants", "bus=1", "--out", out]), 2);
    assert_eq!(code(&["--layouts", "rq99", "--out", out]), 2);
    assert_eq!(code(&["--positions-per-lane", "0", "--out", out]), 2);
    assert_eq!(code(&["--no-such-flag"]), 2);
    assert_eq!(code(&["--explain", "rq36~~~sunny~", "--layouts", MINIMAL_RQ36]), 3);

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    assert_eq!(code(&["--layouts", MINIMAL_RQ36, "--out", blocker.join("sub").to_str().unwrap()]), 4);
}

#[test]
fn unknown_fields_need_lenient_mode() {
    let dir = tempfile::tempdir().unwrap();
    let mut kb = sample_kb_json();
    kb["classes"][0]["colour"] = Value::String("blue".into());
    let path = dir.path().join("extra.json");
    fs::write(&path, kb.to_string()).unwrap();
    let out = dir.path().join("out");
    let strict =
        sceneforge(&["--kb", path.to_str().unwrap(), "--layouts", MINIMAL_RQ36, "--out", out.to_str().unwrap()]);
    assert_eq!(strict.status.code(), Some(1));
    let lenient = sceneforge(&[
        "--kb",
        path.to_str().unwrap(),
        "--lenient",
        "--layouts",
        MINIMAL_RQ36,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(lenient.status.success(), "{}", stderr(&lenient));
    assert!(stderr(&lenient).contains("colour"));
}

fn first_signature_with(dir: &Path, args: &[&str], needle: &str) -> String {
    let out = dir.join("explain-src");
    let mut all = args.to_vec();
    all.extend(["--out", out.to_str().unwrap()]);
    let o = sceneforge(&all);
    assert!(o.status.success(), "{}", stderr(&o));
    catalog(&out)
        .iter()
        .map(|d| d["signature"].as_str().unwrap().to_owned())
        .find(|s| s.contains(needle))
        .unwrap_or_else(|| panic!("no scene containing {needle}"))
}

#[test]
fn explain_shows_lane_change_derivation() {
    let dir = tempfile::tempdir().unwrap();
    let args =
        ["--layouts", MINIMAL_RQ36, "--participants", "car=1", "--positions-per-lane", "1", "--weather", "sunny"];
    let sig = first_signature_with(dir.path(), &args, "=lane_change_left");
    let mut all = args.to_vec();
    all.extend(["--explain", &sig]);
    let o = sceneforge(&all);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with(&format!("scene {sig}\n")));
    let line =
        text.lines().find(|l| l.starts_with("derive maneuver_lane_change_left ")).expect("lane change derivation");
    assert!(
        line.contains("?v=") && line.contains("?p=") && line.contains("?q=") && line.contains("can_perform("),
        "{line}"
    );
    assert!(text.contains("assert performs("));
    assert!(text.contains("verdicts: none"));
}

#[test]
fn explain_infrastructure_only_scene_has_no_maneuvers() {
    let o = sceneforge(&[
        "--layouts",
        MINIMAL_RQ36,
        "--weather",
        "sunny",
        "--explain",
        "rq36~lane.3-hard_shoulder.1~~sunny~",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(!text.contains("maneuver_"));
    assert!(!text.contains("performs"));
    assert!(text.contains("derive inverse_of_in_front_of") || text.contains("derive downstream_step"));
}

#[test]
fn explain_lists_comfort_only_verdict_in_critical_mode() {
    let sig = format!("{MINIMAL_RQ36}~sunny~car@0.0=lane_change_right-car@2.0=lane_change_left");
    let o = sceneforge(&[
        "--layouts",
        MINIMAL_RQ36,
        "--participants",
        "car=2",
        "--positions-per-lane",
        "1",
        "--weather",
        "sunny",
        "--mode",
        "critical",
        "--explain",
        &sig,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let verdict = text.lines().find(|l| l.starts_with("verdict ")).expect("verdict line");
    assert!(
        verdict.contains("invalid_comfort_only shared_lane_change_target") && verdict.ends_with("annotates"),
        "{verdict}"
    );

    let comfort = sceneforge(&[
        "--layouts",
        MINIMAL_RQ36,
        "--participants",
        "car=2",
        "--positions-per-lane",
        "1",
        "--weather",
        "sunny",
        "--explain",
        &sig,
    ]);
    assert_eq!(comfort.status.code(), Some(3));
}

#[test]
fn metadata_echoes_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_sceneforge"))
        .args([
            "--layouts",
            MINIMAL_RQ36,
            "--participants",
            "truck=1,car=1",
            "--positions-per-lane",
            "2",
            "--weather",
            "rainy,foggy",
            "--mode",
            "critical",
            "--max-scenes",
            "7",
            "--jobs",
            "1",
            "--out",
            out.to_str().unwrap(),
        ])
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let docs = catalog(&out);
    assert_eq!(docs.len(), 7);
    let meta = &docs[0]["metadata"];
    assert_eq!(meta["generated_at"], 1_700_000_000);
    assert_eq!(meta["kb_name"], "german_motorway");
    let expected: Value = serde_json::json!({
        "kb": "<bundled>",
        "layouts": [MINIMAL_RQ36],
        "positions_per_lane": 2,
        "participants": {"car": 1, "truck": 1},
        "mode": "critical",
        "weather": ["rainy", "foggy"],
        "max_scenes": 7,
    });
    assert_eq!(meta["config"], expected);
    assert!(docs.iter().all(|d| d["mode"] == "critical"));
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn outputs_are_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |jobs: &str| {
        let out = dir.path().join(format!("jobs{jobs}"));
        let o = sceneforge(&[
            "--layouts",
            "rq31",
            "--participants",
            "car=1,motorcycle=1",
            "--weather",
            "sunny",
            "--format",
            "ndjson,html,text,dot",
            "--page-size",
            "100",
            "--jobs",
            jobs,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        tree(&out)
    };
    let a = run("1");
    let b = run("3");
    assert!(a.len() > 100);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(v == &b[k], "{k} differs");
    }
}

#[test]
fn html_catalog_is_paginated_and_linked() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = sceneforge(&[
        "--layouts",
        MINIMAL_RQ36,
        "--participants",
        "car=1",
        "--positions-per-lane",
        "2",
        "--format",
        "html",
        "--page-size",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!out.join("catalog.ndjson").exists());
    let html = out.join("catalog");
    let scenes = fs::read_dir(&html)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("scene-"))
        .count();
    let pages = fs::read_dir(&html)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("index"))
        .count();
    assert_eq!(pages, scenes.div_ceil(10));
    let index = fs::read_to_string(html.join("index.html")).unwrap();
    assert!(index.contains("href=\"index-2.html\""));
    let first_link = index.split("<a href=\"").nth(1).unwrap().split('"').next().unwrap();
    assert!(html.join(first_link).exists(), "{first_link}");
    let page = fs::read_to_string(html.join(first_link)).unwrap();
    assert!(page.contains("RQ 36") && page.contains("driving direction"));
}

#[test]
fn max_scenes_keeps_a_canonical_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let all = dir.path().join("all");
    let some = dir.path().join("some");
    let base = ["--layouts", "rq31", "--participants", "car=2", "--weather", "cloudy"];
    let mut a = base.to_vec();
    a.extend(["--out", all.to_str().unwrap()]);
    let mut b = base.to_vec();
    b.extend(["--max-scenes", "25", "--out", some.to_str().unwrap()]);
    assert!(sceneforge(&a).status.success());
    assert!(sceneforge(&b).status.success());
    let full: Vec<String> = catalog(&all).iter().map(|d| d["signature"].as_str().unwrap().to_owned()).collect();
    let prefix: Vec<String> = catalog(&some).iter().map(|d| d["signature"].as_str().unwrap().to_owned()).collect();
    assert_eq!(prefix.len(), 25);
    assert_eq!(&full[..25], &prefix[..]);
    let mut sorted = full.clone();
    sorted.sort();
    assert_eq!(full, sorted);
}

#[test]
fn list_layouts_and_filter_by_id() {
    let o = sceneforge(&["--list-layouts"]);
    assert!(o.status.success());
    let lines: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 144);
    let (id, sig) = lines[40].split_once('\t').unwrap();
    let by_id = sceneforge(&["--list-layouts", "--layouts", id]);
    assert_eq!(stdout(&by_id).trim(), lines[40]);
    let by_sig = sceneforge(&["--list-layouts", "--layouts", sig]);
    assert_eq!(stdout(&by_sig).trim(), lines[40]);
    let by_class = sceneforge(&["--list-layouts", "--layouts", "rq43_5"]);
    assert_eq!(stdout(&by_class).lines().count(), 54);
}

#[test]
fn trace_inference_goes_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let o = sceneforge(&[
        "--layouts",
        MINIMAL_RQ36,
        "--participants",
        "car=1",
        "--positions-per-lane",
        "1",
        "--weather",
        "sunny",
        "--trace-inference",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let err = stderr(&o);
    let scenes = err.lines().filter(|l| l.starts_with("scene ")).count();
    assert_eq!(scenes, catalog(dir.path()).len());
    assert!(err.lines().any(|l| l.trim_start().starts_with("derive maneuver_follow")));
    assert!(stdout(&o).is_empty());
}

#[test]
fn custom_templates_change_text_output() {
    let dir = tempfile::tempdir().unwrap();
    let templates =
        include_str!("../../core/data/templates/en.toml").replace("The weather is {weather}.", "Weather: {weather}.");
    let path = dir.path().join("t.toml");
    fs::write(&path, templates).unwrap();
    let out = dir.path().join("out");
    let o = sceneforge(&[
        "--layouts",
        MINIMAL_RQ36,
        "--weather",
        "foggy",
        "--format",
        "text",
        "--templates",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files: Vec<_> = fs::read_dir(out.join("text")).unwrap().collect();
    assert_eq!(files.len(), 1);
    let text = fs::read_to_string(files[0].as_ref().unwrap().path()).unwrap();
    assert!(text.contains("Weather: foggy.") && text.contains("There are no traffic participants."), "{text}");

    fs::write(&path, "[sentences]\nlayout = 3").unwrap();
    let bad =
        sceneforge(&["--layouts", MINIMAL_RQ36, "--templates", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}
