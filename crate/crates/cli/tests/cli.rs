use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_casegen"));
    cmd.env_remove("CASEGEN_STORE")
        .env_remove("CASEGEN_PORT")
        .env("RUST_LOG", "warn");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn workbook(name: &str) -> String {
    fixtures()
        .join("workbooks")
        .join(name)
        .display()
        .to_string()
}

fn trace(name: &str) -> String {
    fixtures().join("traces").join(name).display().to_string()
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &to.join(e.file_name()));
        } else {
            fs::copy(e.path(), to.join(e.file_name())).unwrap();
        }
    }
}

fn json(o: &Output) -> Value {
    serde_json::from_str(&stdout(o))
        .unwrap_or_else(|e| panic!("stdout is not one JSON document ({e}): {}", stdout(o)))
}

#[test]
fn fixtures_compile() {
    let tmp = tempfile::tempdir().unwrap();
    for name in [
        "general_practitioner",
        "law",
        "mechanics",
        "medical_emergency",
    ] {
        let out = tmp.path().join(name);
        let o = run(&["compile", &workbook(name), out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(out.join("case.json").is_file());
    }
    let zip = tmp.path().join("med.zip");
    let o = run(&[
        "compile",
        &workbook("medical_emergency"),
        zip.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(&fs::read(&zip).unwrap()[..2], b"PK");
}

#[test]
fn broken_enum_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let wb = tmp.path().join("wb");
    copy_dir(Path::new(&workbook("mechanics")), &wb);
    let actions = wb.join("actions.csv");
    let text = fs::read_to_string(&actions).unwrap();
    fs::write(
        &actions,
        text.replace(
            ",disabled,required,,The piston",
            ",hiden,required,,The piston",
        ),
    )
    .unwrap();

    let out = tmp.path().join("out");
    let o = run(&["compile", wb.to_str().unwrap(), out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(
        stderr(&o).contains("error: actions.csv:4:initial_state:"),
        "{}",
        stderr(&o)
    );
    assert!(!out.exists());

    let o = run(&[
        "--format",
        "json",
        "compile",
        wb.to_str().unwrap(),
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let doc = json(&o);
    assert_eq!(doc["ok"], false);
    assert_eq!(doc["diagnostics"][0]["code"], "bad_enum");
    assert_eq!(doc["diagnostics"][0]["row"], 4);
}

#[test]
fn scaffold_then_compile() {
    let tmp = tempfile::tempdir().unwrap();
    let wb = tmp.path().join("press");
    let o = run(&["scaffold", "--skin", "mechanics", wb.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&[
        "compile",
        wb.to_str().unwrap(),
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // the target is no longer empty
    let o = run(&["scaffold", wb.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = run(&[
        "scaffold",
        "--skin",
        "astrology",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn validate_and_strict() {
    let o = run(&["validate", &workbook("law")]);
    assert_eq!(code(&o), 0);
    let lint = fixtures().join("workbooks_lint/unreachable_card");
    let o = run(&["validate", lint.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(
        stderr(&o).contains("warning: actions.csv:6:initial_state:"),
        "{}",
        stderr(&o)
    );
    let o = run(&["validate", "--strict", lint.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let o = run(&[
        "validate",
        "--format",
        "json",
        "--strict",
        lint.to_str().unwrap(),
    ]);
    assert_eq!(json(&o)["warnings"], 1);
    let o = run(&["validate", "/no/such/workbook"]);
    assert_eq!(code(&o), 2);
}

fn compiled_medical(tmp: &Path) -> String {
    let out = tmp.join("med");
    assert_eq!(
        code(&run(&[
            "compile",
            &workbook("medical_emergency"),
            out.to_str().unwrap()
        ])),
        0
    );
    out.display().to_string()
}

#[test]
fn simulate_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = compiled_medical(tmp.path());
    let perfect = run(&["simulate", &bundle, &trace("medical_perfect.trace")]);
    assert_eq!(code(&perfect), 0, "{}", stderr(&perfect));
    let report = json(&perfect);
    assert_eq!(report["grade"], 100.0);
    assert_eq!(report["elapsed_seconds"], 255.0);

    let again = run(&["simulate", &bundle, &trace("medical_perfect.trace")]);
    assert_eq!(perfect.stdout, again.stdout);

    let missed = run(&[
        "--format",
        "json",
        "simulate",
        &bundle,
        &trace("medical_missed.trace"),
    ]);
    assert_eq!(json(&missed)["grade"], 85.0);
    assert_eq!(
        json(&missed)["missed_required"],
        serde_json::json!(["coronarography"])
    );

    // policy flags change what is revealed during play, never the report
    let immediate = run(&[
        "--format",
        "json",
        "simulate",
        "--answers",
        "immediate",
        "--scores",
        "immediate",
        &bundle,
        &trace("medical_perfect.trace"),
    ]);
    assert_eq!(
        json(&immediate),
        json(&run(&[
            "--format",
            "json",
            "simulate",
            &bundle,
            &trace("medical_perfect.trace")
        ]))
    );

    // the start time shifts timestamps, not elapsed time
    let shifted = run(&[
        "--format",
        "json",
        "simulate",
        "--seed",
        "1700000000000",
        &bundle,
        &trace("medical_perfect.trace"),
    ]);
    assert_eq!(json(&shifted)["elapsed_seconds"], 255.0);
}

#[test]
fn simulate_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = compiled_medical(tmp.path());
    let script = tmp.path().join("bad.trace");
    fs::write(&script, "perform troponin\n").unwrap();
    let o = run(&[
        "--format",
        "json",
        "simulate",
        &bundle,
        script.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&o)["ok"], false);
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
    fs::write(&script, "jump\n").unwrap();
    assert_eq!(
        code(&run(&["simulate", &bundle, script.to_str().unwrap()])),
        1
    );
    assert_eq!(code(&run(&["simulate", &bundle, "/no/script"])), 2);
    assert_eq!(
        code(&run(&["simulate", "/no/bundle", script.to_str().unwrap()])),
        2
    );
}

#[test]
fn serve_rejects_a_file_as_store() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("f");
    fs::write(&file, "x").unwrap();
    let o = run(&["serve", "--store", file.to_str().unwrap(), "--port", "0"]);
    assert_eq!(code(&o), 2);
    let o = bin()
        .args(["serve", "--port", "0"])
        .env("CASEGEN_STORE", &file)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(code(&run(&["serve"])), 2);
}

fn http_get(port: u16, path: &str) -> (u16, String) {
    let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    write!(
        s,
        "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    let status = resp[9..12].parse().unwrap();
    let body = resp.split("\r\n\r\n").nth(1).unwrap_or("").to_string();
    (status, body)
}

#[test]
fn serve_answers_and_stops_on_sigterm() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("store");
    let env_store = tmp.path().join("ignored");
    let mut child = bin()
        .args([
            "--format",
            "json",
            "serve",
            "--store",
            store.to_str().unwrap(),
            "--port",
            "0",
        ])
        .env("CASEGEN_STORE", &env_store)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let ready: Value = serde_json::from_str(&line).unwrap();
    let port = ready["port"].as_u64().unwrap() as u16;

    let (status, body) = http_get(port, "/api/v1/cases");
    assert_eq!(status, 200);
    assert_eq!(body.trim(), "[]");
    // the flag wins over the environment
    assert!(store.join("sessions").is_dir());
    assert!(!env_store.exists());

    let killed = Command::new("kill")
        .args(["-TERM", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(killed.success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
}
