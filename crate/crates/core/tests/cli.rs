use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn windowtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_windowtrack"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&windowtrack(&["--help"])), 0);
    assert_eq!(code(&windowtrack(&["track", "--help"])), 0);
    assert_eq!(code(&windowtrack(&[])), 1);
    assert_eq!(code(&windowtrack(&["bogus"])), 1);
    let o = windowtrack(&[
        "track", "--det", "d", "--out", "o", "--l1", "sort", "--l2", "ocsort", "-k", "0",
    ]);
    assert_eq!(code(&o), 1);
    assert_eq!(
        code(&windowtrack(&["track", "--det", "d", "--out", "o", "--l1", "deepsort"])),
        1
    );
    // -k without an L2 tracker.
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("det.txt");
    fs::write(&det, "1,-1,1,1,10,10,0.9\n").unwrap();
    assert_eq!(
        code(&windowtrack(&[
            "track",
            "--det",
            p(&det),
            "--out",
            "o",
            "--l1",
            "sort",
            "-k",
            "3"
        ])),
        1
    );
}

#[test]
fn io_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let out = dir.path().join("out.txt");
    assert_eq!(
        code(&windowtrack(&[
            "track",
            "--det",
            p(&missing),
            "--out",
            p(&out),
            "--l1",
            "sort"
        ])),
        2
    );

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "1,-1,1,1,10,10,abc\n").unwrap();
    assert_eq!(
        code(&windowtrack(&[
            "track",
            "--det",
            p(&bad),
            "--out",
            p(&out),
            "--l1",
            "sort"
        ])),
        3
    );

    let gt = dir.path().join("gt.txt");
    fs::write(&gt, "1,1,1,1,10,10,1,1,1\n1,1,5,5,10,10,1,1,1\n").unwrap();
    let res = dir.path().join("res.txt");
    fs::write(&res, "1,1,1,1,10,10,1,-1,-1,-1\n").unwrap();
    assert_eq!(code(&windowtrack(&["eval", "--gt", p(&gt), "--res", p(&res)])), 3);

    let config = dir.path().join("c.toml");
    fs::write(&config, "[tracker]\nmax_agee = 4\n").unwrap();
    let det = dir.path().join("det.txt");
    fs::write(&det, "1,-1,1,1,10,10,0.9\n").unwrap();
    let o = windowtrack(&[
        "track",
        "--det",
        p(&det),
        "--out",
        p(&out),
        "--l1",
        "sort",
        "--config",
        p(&config),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("max_agee"));
}

#[test]
fn split_id_files_evaluate_to_hand_values() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.txt");
    let res = dir.path().join("res.txt");
    let mut g = String::new();
    let mut r = String::new();
    for f in 1..=10 {
        g += &format!("{f},1,{f},1,10,20,1,1,1\n");
        r += &format!("{f},{},{f},1,10,20,1,-1,-1,-1\n", if f <= 5 { 1 } else { 2 });
    }
    fs::write(&gt, g).unwrap();
    fs::write(&res, r).unwrap();
    let o = windowtrack(&["eval", "--gt", p(&gt), "--res", p(&res), "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let row = stdout.lines().nth(1).unwrap();
    assert!(row.starts_with("50.0,70.7,90.0,"), "{row}");
}

#[test]
fn synth_track_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    assert_eq!(
        code(&windowtrack(&["synth", "--bundled", "idswitch", "--out-dir", p(&seq)])),
        0
    );
    let (gt, det) = (seq.join("gt.txt"), seq.join("det.txt"));
    assert!(gt.exists() && det.exists());

    // Same scenario from a file gives the same bytes.
    let toml = dir.path().join("s.toml");
    fs::write(
        &toml,
        windowtrack::synth::BUNDLED
            .iter()
            .find(|(n, _)| *n == "idswitch")
            .unwrap()
            .1,
    )
    .unwrap();
    let again = dir.path().join("again");
    assert_eq!(
        code(&windowtrack(&["synth", "--scenario", p(&toml), "--out-dir", p(&again)])),
        0
    );
    assert_eq!(fs::read(&det).unwrap(), fs::read(again.join("det.txt")).unwrap());
    assert_eq!(fs::read(&gt).unwrap(), fs::read(again.join("gt.txt")).unwrap());

    let res = dir.path().join("res.txt");
    let o = windowtrack(&[
        "track",
        "--det",
        p(&det),
        "--out",
        p(&res),
        "--l1",
        "bytetrack",
        "--l2",
        "ocsort",
        "-k",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = windowtrack(&["eval", "--gt", p(&gt), "--res", p(&res)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("IDF1"));

    // Kind and window from the config file alone.
    let config = dir.path().join("c.toml");
    fs::write(&config, "[l1]\nkind = \"bytetrack\"\n[l2]\nkind = \"ocsort\"\n").unwrap();
    let res2 = dir.path().join("res2.txt");
    let o = windowtrack(&[
        "track",
        "--det",
        p(&det),
        "--out",
        p(&res2),
        "-k",
        "3",
        "--config",
        p(&config),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&res).unwrap(), fs::read(&res2).unwrap());
}

#[test]
fn eval_pools_repeated_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["eval".to_string()];
    for name in ["crossing", "occlusion"] {
        let seq = dir.path().join(name);
        assert_eq!(
            code(&windowtrack(&["synth", "--bundled", name, "--out-dir", p(&seq)])),
            0
        );
        let res = seq.join("res.txt");
        let (det, gt) = (seq.join("det.txt"), seq.join("gt.txt"));
        assert_eq!(
            code(&windowtrack(&[
                "track",
                "--det",
                p(&det),
                "--out",
                p(&res),
                "--l1",
                "sort"
            ])),
            0
        );
        args.extend(["--gt".into(), p(&gt).into(), "--res".into(), p(&res).into()]);
    }
    args.extend(["--format".into(), "csv".into()]);
    let o = Command::new(env!("CARGO_BIN_EXE_windowtrack"))
        .args(&args)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let cols: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
    // gtDet pools both sequences: crossing 120 rows, occlusion 100.
    assert_eq!(cols[6], "220");

    let mismatched = Command::new(env!("CARGO_BIN_EXE_windowtrack"))
        .args(&args[..3])
        .output()
        .unwrap();
    assert_eq!(code(&mismatched), 1);
}

#[test]
fn spec_examples() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    assert_eq!(
        code(&windowtrack(&["synth", "--scenario", "crossing", "--out-dir", p(&seq)])),
        0
    );
    let (gt, det) = (seq.join("gt.txt"), seq.join("det.txt"));

    let o = windowtrack(&["eval", "--gt", p(&gt), "--res", p(&gt), "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(
        stdout.lines().nth(1).unwrap().starts_with("100.0,100.0,100.0,100.0,"),
        "{stdout}"
    );

    let sweep = [
        "sweep",
        "--det",
        p(&det),
        "--gt",
        p(&gt),
        "--l1",
        "sort",
        "--l2",
        "bytetrack",
        "--format",
        "csv",
    ];
    let first = windowtrack(&sweep);
    assert_eq!(code(&first), 0);
    assert_eq!(first.stdout, windowtrack(&sweep).stdout);
    assert_eq!(String::from_utf8(first.stdout).unwrap().lines().count(), 6);

    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        "frames = 5
speed = 3
",
    )
    .unwrap();
    let o = windowtrack(&["synth", "--scenario", p(&bad), "--out-dir", p(&seq)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed"));
}
