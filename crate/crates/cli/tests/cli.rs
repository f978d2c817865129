use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn toolweave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toolweave"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path) -> String {
    let corpus = dir.join("corpus");
    let o = toolweave(&["synth", "--out", corpus.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    corpus.join("toolweave.toml").to_str().unwrap().to_string()
}

#[test]
fn help_lists_subcommands_and_flags() {
    let o = toolweave(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for sub in [
        "ingest-tools",
        "extract-deps",
        "build-graph",
        "ingest-docs",
        "fuse",
        "index",
        "ppr",
        "generate",
        "evaluate",
        "ablate",
        "pipeline",
        "synth",
    ] {
        assert!(text.contains(sub), "missing {sub} in help");
    }
    let o = toolweave(&["ppr", "--help"]);
    let text = stdout(&o);
    for flag in [
        "--seeds",
        "--damping",
        "--top-n",
        "--direction",
        "--config",
        "--mode",
    ] {
        assert!(text.contains(flag), "missing {flag} in ppr help");
    }
}

#[test]
fn missing_input_exits_one_and_names_field() {
    let tmp = tempfile::tempdir().unwrap();
    let o = toolweave(&[
        "ingest-tools",
        "--tools",
        tmp.path().join("absent.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.starts_with("status=fail"), "{text}");
    assert!(text.contains("field=paths.tools"), "{text}");
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = toolweave(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("error=usage"));
}

#[test]
fn pipeline_then_ppr_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth(tmp.path());

    let o = toolweave(&["pipeline", "--config", &cfg]);
    assert!(
        o.status.success(),
        "{}{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    let last = stdout(&o).lines().last().unwrap().to_string();
    assert!(last.starts_with("status=ok stage=pipeline"), "{last}");
    assert!(last.contains("mode=stub"), "{last}");

    let graph = tmp.path().join("corpus/out/graph.jsonl");
    let first_tool = fs::read_to_string(&graph)
        .unwrap()
        .lines()
        .find_map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).ok()?;
            v["id"]
                .as_str()
                .filter(|id| id.starts_with("tool:"))
                .map(str::to_string)
        })
        .unwrap();

    // Config sets top_n; the flag wins.
    let o = toolweave(&[
        "ppr",
        "--config",
        &cfg,
        "--seeds",
        &first_tool,
        "--top-n",
        "3",
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    let rows: Vec<serde_json::Value> = stdout(&o)
        .lines()
        .filter_map(|l| serde_json::from_str(l).ok())
        .filter(|v: &serde_json::Value| v.get("rank").is_some())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["node"], first_tool.as_str());

    let o = toolweave(&["ppr", "--config", &cfg, "--seeds", "tool:not_a_real_tool"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("error=unknown_seed_node"));

    let o = toolweave(&[
        "ppr",
        "--config",
        &cfg,
        "--seeds",
        &first_tool,
        "--damping",
        "1.5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("ppr.damping"));
}

#[test]
fn replay_without_fixtures_is_gateway_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth(tmp.path());
    let o = toolweave(&["pipeline", "--config", &cfg]);
    assert!(o.status.success());

    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = toolweave(&[
        "generate",
        "--config",
        &cfg,
        "--mode",
        "replay",
        "--fixtures",
        empty.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("error=gateway"));
}
