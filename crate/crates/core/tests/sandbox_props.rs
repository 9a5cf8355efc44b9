use std::time::Duration;

use maintainkit::sandbox::{self, Sandbox, SandboxJob, SandboxVerdict, VerdictStatus};
use proptest::prelude::*;
use serde_json::json;

fn run(source: &str, tests: &[&str]) -> SandboxVerdict {
    let job = SandboxJob::new(source, tests.iter().map(|t| t.to_string()).collect(), "f")
        .with_limits(Duration::from_secs(5), 256 * 1024 * 1024);
    Sandbox::shared().run(&job).expect("sandbox runs")
}

fn comparable(mut v: SandboxVerdict) -> SandboxVerdict {
    v.wall_time = Duration::ZERO;
    v
}

#[derive(Debug, Clone)]
enum Case {
    Holds(i64),
    Wrong(i64),
    Raises,
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn identical_jobs_give_identical_verdicts(a in -9i64..9, b in -9i64..9, cases in prop::collection::vec(
        prop_oneof![(-20i64..20).prop_map(Case::Holds), (-20i64..20).prop_map(Case::Wrong), Just(Case::Raises)], 1..6)
    ) {
        let source = format!("def f(x):\n    if x == 999:\n        raise KeyError(x)\n    return x * {a} + {b}\n");
        let tests: Vec<String> = cases
            .iter()
            .map(|c| match c {
                Case::Holds(x) => format!("assert f({x}) == {}", x * a + b),
                Case::Wrong(x) => format!("assert f({x}) == {}", x * a + b + 1),
                Case::Raises => "f(999)".to_string(),
            })
            .collect();
        let refs: Vec<&str> = tests.iter().map(String::as_str).collect();
        let first = comparable(run(&source, &refs));
        let second = comparable(run(&source, &refs));
        prop_assert_eq!(&first, &second);

        let expected = cases.iter().position(|c| !matches!(c, Case::Holds(_)));
        prop_assert_eq!(first.failed_index, expected);
        match expected.map(|i| &cases[i]) {
            None => prop_assert_eq!(first.status, VerdictStatus::Pass),
            Some(Case::Wrong(_)) => prop_assert_eq!(first.status, VerdictStatus::AssertionFail),
            Some(_) => {
                prop_assert_eq!(first.status, VerdictStatus::RuntimeError);
                prop_assert_eq!(first.error_class.as_deref(), Some("KeyError"));
            }
        }
    }
}

#[test]
fn crashing_candidates_are_contained() {
    let crashes = [
        ("import os\nos._exit(7)\n", "exit 7"),
        ("import os, signal\nos.kill(os.getpid(), signal.SIGSEGV)\n", "SIGSEGV"),
        ("import os, signal\nos.kill(os.getpid(), signal.SIGKILL)\n", "SIGKILL"),
    ];
    for (source, class) in crashes {
        let v = run(&format!("def f():\n    return 1\n\n{source}"), &["assert f() == 1"]);
        assert_eq!(v.status, VerdictStatus::RuntimeError, "{source}");
        assert_eq!(v.error_class.as_deref(), Some(class), "{source}");
    }
    let v = run("import sys\n\ndef f():\n    sys.exit(3)\n", &["assert True", "f()"]);
    assert_eq!((v.status, v.failed_index, v.error_class.as_deref()), (VerdictStatus::RuntimeError, Some(1), Some("SystemExit")));
    let v = run("def f(n):\n    return f(n + 1)\n", &["f(0)"]);
    assert_eq!(v.error_class.as_deref(), Some("RecursionError"));
    // the host keeps working after all of the above
    assert!(run("def f():\n    return 2\n", &["assert f() == 2"]).passed());
}

#[test]
fn grandchildren_do_not_outlive_the_job() {
    let source = "import subprocess, sys\n\ndef f():\n    subprocess.Popen([sys.executable, '-c', 'import time; time.sleep(60)'])\n    return 1\n";
    let started = std::time::Instant::now();
    let v = run(source, &["assert f() == 1"]);
    assert!(started.elapsed() < Duration::from_secs(5), "pipes held open by a grandchild");
    assert!(matches!(v.status, VerdictStatus::Pass | VerdictStatus::RuntimeError), "{v:?}");
}

#[test]
fn every_job_gets_a_fresh_namespace() {
    let polluter = "import builtins\nbuiltins.LEAK = 1\nLEFTOVER = 2\n\ndef f():\n    return 0\n";
    assert!(run(polluter, &["assert LEAK == 1 and LEFTOVER == 2"]).passed());
    let v = run("def f():\n    return 0\n", &["assert 'LEFTOVER' not in globals()", "assert not hasattr(__builtins__, 'LEAK') if not isinstance(__builtins__, dict) else 'LEAK' not in __builtins__"]);
    assert!(v.passed(), "{v:?}");
}

#[test]
fn network_is_refused() {
    let source = "import socket\n\ndef f():\n    socket.create_connection(('127.0.0.1', 9))\n";
    let v = run(source, &["f()"]);
    assert_eq!((v.status, v.error_class.as_deref()), (VerdictStatus::RuntimeError, Some("PermissionError")));
}

#[test]
fn syntax_errors_never_reach_tests() {
    let v = run("def f(:\n    return 1\n", &["assert f() == 1"]);
    assert_eq!(v.status, VerdictStatus::SyntaxError);
    assert_eq!(v.failed_index, None);
}

#[test]
fn runner_records_round_trip_through_classification() {
    // one record per verdict class, as the runner writes it
    let cases = [
        (json!({"ok": true}), VerdictStatus::Pass, None, None),
        (json!({"error": "AssertionError", "test": 2, "message": ""}), VerdictStatus::AssertionFail, Some(2), Some("AssertionError")),
        (json!({"error": "ZeroDivisionError", "test": 0, "message": "division by zero"}), VerdictStatus::RuntimeError, Some(0), Some("ZeroDivisionError")),
        (json!({"error": "NameError", "test": -1, "message": "x"}), VerdictStatus::RuntimeError, Some(0), Some("NameError")),
        (json!({"error": "AssertionError", "test": -1, "message": ""}), VerdictStatus::RuntimeError, Some(0), Some("AssertionError")),
        (json!({"error": "SyntaxError", "test": -1, "message": "bad"}), VerdictStatus::SyntaxError, None, Some("SyntaxError")),
        (json!({"error": "SyntaxError", "test": 1, "message": "bad test"}), VerdictStatus::RuntimeError, Some(1), Some("SyntaxError")),
    ];
    for (raw, status, index, class) in cases {
        let v = sandbox::classify_outcome(&raw).unwrap();
        assert_eq!((v.status, v.failed_index, v.error_class.as_deref()), (status, index, class), "{raw}");
        let back: SandboxVerdict = serde_json::from_value(serde_json::to_value(&v).unwrap()).unwrap();
        assert_eq!(back, v);
    }
    let with_lines = sandbox::classify_outcome(&json!({"ok": true, "lines": [1, 2, 4]})).unwrap();
    assert_eq!(with_lines.executed_lines, Some(vec![1, 2, 4]));
    for bad in [json!({}), json!({"error": "ValueError"}), json!({"ok": "yes"}), json!({"error": "ProtocolError", "test": -1}), json!([1])] {
        assert!(sandbox::classify_outcome(&bad).is_err(), "{bad}");
    }
}

#[test]
fn live_runner_produces_each_verdict_class() {
    let cases = [
        ("def f():\n    return 1\n", "assert f() == 1", VerdictStatus::Pass),
        ("def f():\n    return 1\n", "assert f() == 2", VerdictStatus::AssertionFail),
        ("def f():\n    return 1 / 0\n", "f()", VerdictStatus::RuntimeError),
        ("def f():\n    while True:\n        pass\n", "f()", VerdictStatus::Timeout),
        ("def f():\n    return 1\n", "assert f( == 1", VerdictStatus::RuntimeError),
    ];
    for (source, test, status) in cases {
        let job = SandboxJob::new(source, vec![test.into()], "f").with_limits(Duration::from_secs(1), 256 * 1024 * 1024);
        let v = Sandbox::shared().run(&job).unwrap();
        assert_eq!(v.status, status, "{source} / {test}");
    }
    let job = SandboxJob::new("def f():\n    return 1\n", vec!["assert f() == 1".into()], "f").instrumented();
    let v = Sandbox::shared().run(&job).unwrap();
    assert_eq!(v.executed_lines, Some(vec![1, 2]));
}

#[test]
fn invalid_jobs_are_rejected_before_spawning() {
    let no_tests = SandboxJob::new("def f():\n    return 1\n", Vec::new(), "f");
    assert!(Sandbox::shared().run(&no_tests).is_err());
    let zero = SandboxJob::new("def f():\n    return 1\n", vec!["f()".into()], "f").with_limits(Duration::ZERO, 1 << 28);
    assert!(Sandbox::shared().run(&zero).is_err());
}
