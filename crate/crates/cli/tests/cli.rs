use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

const BIN: &str = env!("CARGO_BIN_EXE_hcart");

fn hcart(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}\n{}", o.status, String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

/// Starts `emulate` on an ephemeral port and returns it with its address.
fn emulator(dir: &Path, extra: &[&str]) -> (Child, String) {
    let mut child = Command::new(BIN)
        .current_dir(dir)
        .args(["emulate", "--listen", "127.0.0.1:0"])
        .args(extra)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    (child, addr)
}

#[test]
fn help_exits_cleanly_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    for sub in [&[][..], &["emulate"], &["train"], &["run"], &["baseline"]] {
        let mut args: Vec<&str> = sub.to_vec();
        args.push("--help");
        let out = ok(hcart(dir.path(), &args));
        assert!(out.contains("Usage"), "{out}");
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn stdio_session_answers_a_bulk_read() {
    let mut child = Command::new(BIN)
        .args(["emulate", "--stdio", "--virtual-time"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"G0223;0222;0161;0160.i o f").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let line = text.lines().next().unwrap();
    let values: Vec<f64> = line.split(';').map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 4);
    assert_eq!(&values[..2], &[0.0, 0.0]);
}

#[test]
fn tcp_server_refuses_a_second_client_and_exits_after_the_first() {
    let dir = tempfile::tempdir().unwrap();
    let (mut child, addr) = emulator(dir.path(), &["--virtual-time"]);
    let mut first = TcpStream::connect(&addr).unwrap();
    first.write_all(b"g0161").unwrap();
    let mut reader = BufReader::new(first.try_clone().unwrap());
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    assert!(line.ends_with(" 0161\n"), "{line:?}");

    let mut second = TcpStream::connect(&addr).unwrap();
    second.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let mut busy = String::new();
    second.read_to_string(&mut busy).unwrap();
    assert_eq!(busy, "? busy\n");

    drop(reader);
    drop(first);
    assert!(child.wait().unwrap().success());
}

#[test]
fn bind_failure_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let (mut child, addr) = emulator(dir.path(), &["--virtual-time"]);
    let out = hcart(dir.path(), &["emulate", "--listen", &addr]);
    assert_eq!(out.status.code(), Some(1));
    drop(TcpStream::connect(&addr).unwrap());
    child.wait().unwrap();
}

#[test]
fn listen_address_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(BIN)
        .current_dir(dir.path())
        .args(["emulate", "--virtual-time"])
        .env("HCART_LISTEN", "127.0.0.1:0")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on 127.0.0.1:").expect("loopback address");
    assert_ne!(addr, "0");
    drop(TcpStream::connect(format!("127.0.0.1:{addr}")).unwrap());
    assert!(child.wait().unwrap().success());
}

#[test]
fn one_episode_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    ok(hcart(dir.path(), &["train", "--episodes", "1", "--virtual-time"]));
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines, ["episode,steps,reward,epsilon,eta", lines[1]]);
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn probe_schedule_writes_three_brains() {
    let dir = tempfile::tempdir().unwrap();
    ok(hcart(dir.path(), &["train", "--episodes", "25", "--probe", "10", "--virtual-time", "--in-process"]));
    let mut brains: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("brain"))
        .collect();
    brains.sort();
    assert_eq!(brains, ["brain.ep10.json", "brain.ep20.json", "brain.json"]);
}

#[test]
fn short_training_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = ok(hcart(
            dir.path(),
            &["train", "--episodes", "50", "--seed", "42", "--virtual-time", "--metrics", name, "--brain", &format!("{name}.json")],
        ));
        (fs::read(dir.path().join(name)).unwrap(), out.replace(name, ""))
    };
    let (a, out_a) = run("a.csv");
    let (b, out_b) = run("b.csv");
    assert_eq!(a, b);
    assert_eq!(out_a, out_b);
    assert!(out_a.contains("median steps over the last 50"), "{out_a}");
}

#[test]
fn wire_and_in_process_paths_agree() {
    let dir = tempfile::tempdir().unwrap();
    ok(hcart(dir.path(), &["train", "--episodes", "10", "--seed", "3", "--virtual-time", "--metrics", "tcp.csv"]));
    ok(hcart(dir.path(), &["train", "--episodes", "10", "--seed", "3", "--virtual-time", "--in-process", "--metrics", "mem.csv"]));
    let (mut child, addr) = emulator(dir.path(), &["--virtual-time", "--seed", "3"]);
    ok(hcart(dir.path(), &["train", "--episodes", "10", "--seed", "3", "--virtual-time", "--connect", &addr, "--metrics", "ext.csv"]));
    assert!(child.wait().unwrap().success());
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("tcp.csv"), read("mem.csv"));
    assert_eq!(read("tcp.csv"), read("ext.csv"));
}

#[test]
fn lost_connection_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    drop(listener);
    let out = hcart(dir.path(), &["train", "--episodes", "3", "--virtual-time", "--connect", &addr]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_replays_a_brain_and_reports_disturbances() {
    let dir = tempfile::tempdir().unwrap();
    ok(hcart(dir.path(), &["train", "--episodes", "5", "--virtual-time", "--in-process"]));
    let out = ok(hcart(
        dir.path(),
        &["run", "--brain", "brain.json", "--episodes", "2", "--virtual-time", "--disturb", "5.0:100@0.1"],
    ));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4, "{out}");
    assert!(lines[0].starts_with("episode 0 disturb 5 for 100 ms at step 5"), "{out}");
    assert!(lines[1].starts_with("episode 0 steps "));
    assert!(lines[3].starts_with("episode 1 steps "));
}

#[test]
fn bad_brains_and_settings_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("junk.json"), "{\"format\":").unwrap();
    for args in [
        &["run", "--brain", "junk.json", "--virtual-time"][..],
        &["run", "--brain", "missing.json", "--virtual-time"],
        &["train", "--set", "gamma=2", "--virtual-time"],
        &["train", "--set", "colour=blue", "--virtual-time"],
        &["baseline", "--config", "missing.conf"],
        &["run", "--disturb", "5:100", "--brain", "x.json"],
    ] {
        let out = hcart(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn baseline_is_deterministic_and_its_policy_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["baseline", "--tries", "1", "--seed", "7", "--virtual-time", "--save-theta", "theta.txt"];
    let a = ok(hcart(dir.path(), &args));
    let b = ok(hcart(dir.path(), &args));
    assert_eq!(a, b);
    let theta = a.lines().next().unwrap().strip_prefix("best theta ").unwrap().to_string();
    assert_eq!(fs::read_to_string(dir.path().join("theta.txt")).unwrap().trim(), theta);
    let steps = a.lines().nth(1).unwrap().split(' ').nth(2).unwrap().to_string();
    let run = ok(hcart(dir.path(), &["run", "--theta", "theta.txt", "--virtual-time", "--seed", "7"]));
    assert_eq!(run.trim(), format!("episode 0 steps {steps}"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.conf"), "max_steps = 5\nseed = 1\n").unwrap();
    let base = ["baseline", "--tries", "30", "--virtual-time", "--config", "cfg.conf"];
    let out = ok(hcart(dir.path(), &base));
    assert!(out.contains("best steps 5 "), "{out}");
    let mut args = base.to_vec();
    args.extend(["--set", "max_steps=3"]);
    let out = ok(hcart(dir.path(), &args));
    assert!(out.contains("best steps 3 "), "{out}");
}

#[test]
fn realtime_training_uses_the_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let start = std::time::Instant::now();
    ok(hcart(dir.path(), &["train", "--episodes", "1", "--set", "max_steps=5"]));
    // Five 20 ms impulses at least.
    assert!(start.elapsed() >= Duration::from_millis(100));
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}
