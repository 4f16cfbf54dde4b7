mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::scenario;

fn lob(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lob"))
        .args(args)
        .output()
        .unwrap()
}

fn run_into(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(extra);
    lob(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn table1_writes_the_golden_dispatch() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(&scenario("table1.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dispatches = fs::read_to_string(dir.path().join("dispatches.csv")).unwrap();
    assert_eq!(
        dispatches,
        "round_id,transaction,seller_device,buyer_device,quantity,price,duration,seller_order,buyer_order,start_time\n\
         1,1,4,1,2,2.50,10,4,1,727\n\
         1,2,4,2,1,2.50,10,4,2,727\n\
         1,3,3,2,1,2.50,10,3,2,727\n"
    );
    let prices = fs::read_to_string(dir.path().join("prices.csv")).unwrap();
    assert_eq!(prices, "time,round_id,clearing_price\n727,1,2.50\n");
    let settlement = fs::read_to_string(dir.path().join("settlement.csv")).unwrap();
    assert_eq!(settlement.lines().count(), 1 + 6);
    assert!(settlement.starts_with(
        "round_id,device_id,role,quantity,duration,clearing_price,tariff,payment,surplus\n"
    ));
}

#[test]
fn empty_scenario_gives_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(&scenario("empty.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for (name, lines) in [
        ("dispatches.csv", 1),
        ("settlement.csv", 1),
        ("prices.csv", 1),
        ("events.jsonl", 2),
    ] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), lines, "{name}");
    }
}

#[test]
fn market_order_with_price_is_a_field_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        r#"version = 1
[[orders]]
"Device ID" = 1
"Order ID" = 9
"Timestamp" = 0
"Quantity" = 2
"Price" = "1.00"
"Type" = "market"
"isPowerFlexible" = true
"Duration" = 10
"#,
    )
    .unwrap();
    let o = run_into(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("orders[0] (Order ID 9).Price"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_field_and_missing_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.toml");
    fs::write(&cfg, "version = 1\n[market]\ntick = \"0.01\"\n").unwrap();
    let o = run_into(&cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("unknown field `tick`"),
        "{}",
        stderr(&o)
    );

    let o = run_into(&dir.path().join("nope.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replay_accepts_fresh_and_rejects_tampered_logs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_into(&scenario("table1.toml"), dir.path(), &[])
        .status
        .success());
    let log = dir.path().join("events.jsonl");
    let o = lob(&["replay", "--log", log.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("verified"));

    let text = fs::read_to_string(&log).unwrap();
    let tampered = text.replacen("\"clearing_price\":250", "\"clearing_price\":260", 1);
    assert_ne!(text, tampered);
    let bad = dir.path().join("tampered.jsonl");
    fs::write(&bad, tampered).unwrap();
    let o = lob(&["replay", "--log", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let idx = text
        .lines()
        .position(|l| l.contains("\"type\":\"matched\""))
        .unwrap();
    assert!(
        stderr(&o).contains(&format!("diverged at event {idx}")),
        "{}",
        stderr(&o)
    );

    let o = lob(&[
        "replay",
        "--log",
        dir.path().join("missing.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replay_reports_truncation() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_into(&scenario("table1.toml"), dir.path(), &[])
        .status
        .success());
    let log = dir.path().join("events.jsonl");
    let text = fs::read_to_string(&log).unwrap();
    let cut = &text[..text.len() - 20];
    fs::write(&log, cut).unwrap();
    let o = lob(&["replay", "--log", log.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("truncated"), "{}", stderr(&o));
}

#[test]
fn inspect_shows_the_book_before_order_4() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_into(&scenario("table1.toml"), dir.path(), &[])
        .status
        .success());
    let log = dir.path().join("events.jsonl");
    let o = lob(&["inspect", "--log", log.to_str().unwrap(), "--at", "726"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out
        .lines()
        .filter(|l| l.starts_with("|") && l.contains("  "))
        .collect();
    let buy = out.find("BUY").unwrap();
    let sell = out.find("SELL").unwrap();
    assert!(buy < sell);
    assert!(out[buy..sell].contains("|  4.00 |") && out[buy..sell].contains("|  3.00 |"));
    assert!(out[sell..].contains("|  2.50 |") && out[sell..].contains("TRUE"));
    assert!(!out.contains("1.00"));
    assert!(rows.len() >= 4);

    // After delivery the uncut unit of order 3 is back on the book.
    let o = lob(&["inspect", "--log", log.to_str().unwrap(), "--at", "738"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(
        out.lines()
            .filter(|l| l.contains("TRUE") || l.contains("FALSE"))
            .count(),
        1
    );
    assert!(out.contains("|       -1 |  2.50 |"), "{out}");

    // It expires before the log ends.
    let o = lob(&["inspect", "--log", log.to_str().unwrap(), "--at", "748"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!stdout(&o).contains("FALSE") && !stdout(&o).contains("TRUE"));
}

#[test]
fn inspect_rejects_bad_times() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_into(&scenario("table1.toml"), dir.path(), &[])
        .status
        .success());
    let log = dir.path().join("events.jsonl");
    let o = lob(&["inspect", "--log", log.to_str().unwrap(), "--at", "-5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = lob(&["inspect", "--log", log.to_str().unwrap(), "--at", "100000"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("after the end of the log"));
}

#[test]
fn inspect_before_any_order_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_into(&scenario("feeder_day.toml"), dir.path(), &[])
        .status
        .success());
    let log = dir.path().join("events.jsonl");
    let o = lob(&["inspect", "--log", log.to_str().unwrap(), "--at", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    // The feeder quotes at t=0; nothing else has arrived yet.
    assert_eq!(
        out.lines().filter(|l| l.contains("|       100 |")).count(),
        2,
        "{out}"
    );

    let dir2 = tempfile::tempdir().unwrap();
    let cfg = dir2.path().join("late.toml");
    fs::write(
        &cfg,
        "version = 1\n[[orders]]\n\"Device ID\" = 1\n\"Order ID\" = 1\n\"Timestamp\" = 50\n\"Quantity\" = 1\n\"Price\" = 1\n\"isPowerFlexible\" = true\n\"Duration\" = 5\n",
    )
    .unwrap();
    assert!(run_into(&cfg, dir2.path(), &[]).status.success());
    let o = lob(&[
        "inspect",
        "--log",
        dir2.path().join("events.jsonl").to_str().unwrap(),
        "--at",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains("TRUE"));
}

#[test]
fn runs_are_byte_identical_and_overrides_apply() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(run_into(&scenario("feeder_day.toml"), d.path(), &[])
            .status
            .success());
    }
    for name in [
        "events.jsonl",
        "dispatches.csv",
        "settlement.csv",
        "prices.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }

    let c = tempfile::tempdir().unwrap();
    let o = run_into(
        &scenario("convergence.toml"),
        c.path(),
        &[
            "--seed",
            "9",
            "--residual-mode",
            "immediate",
            "--tariff",
            "0.05",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let first = fs::read_to_string(c.path().join("events.jsonl")).unwrap();
    let first = first.lines().next().unwrap();
    assert!(
        first.contains("\"residual_mode\":\"immediate\"") && first.contains("\"tariff_per_kwh\":5"),
        "{first}"
    );
    let replayed = lob(&[
        "replay",
        "--log",
        c.path().join("events.jsonl").to_str().unwrap(),
    ]);
    assert!(replayed.status.success());

    let o = run_into(
        &scenario("convergence.toml"),
        c.path(),
        &["--tariff", "0.005"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn csv_rows_match_event_counts() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_into(&scenario("feeder_day.toml"), dir.path(), &[])
        .status
        .success());
    let events = fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    let matched: Vec<serde_json::Value> = events
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["type"] == "matched")
        .collect();
    let transactions: usize = matched
        .iter()
        .map(|v| {
            v["payload"]["dispatch"]["transactions"]
                .as_array()
                .unwrap()
                .len()
        })
        .sum();
    let rows = |name: &str| {
        fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .count()
            - 1
    };
    assert!(transactions > 0);
    assert_eq!(rows("prices.csv"), matched.len());
    assert_eq!(rows("dispatches.csv"), transactions);
    assert_eq!(rows("settlement.csv"), 2 * transactions);
}
