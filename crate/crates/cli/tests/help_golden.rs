mod common;

use common::{run, stdout};

const COMMANDS: [(&str, &[&str]); 7] = [
    (
        "train",
        &[
            "--system",
            "--train",
            "--dev",
            "--config",
            "--model",
            "--seed",
            "--workers",
            "--checkpoint-dir",
            "--dev-curve",
        ],
    ),
    ("predict", &["--model", "--input", "--output"]),
    (
        "evaluate",
        &["--model", "--test", "--report", "--confusion-csv", "--confusion-svg"],
    ),
    ("compare", &["--model-a", "--model-b", "--test", "--report"]),
    ("featurize", &["--input", "--kind", "--n", "--k", "--output"]),
    ("describe", &["--input", "--unlabelled"]),
    ("split", &["--input", "--fractions", "--output", "--seed"]),
];

fn golden(name: &str) -> String {
    let path = format!("{}/tests/golden/{name}.txt", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

#[test]
fn root_help_matches_golden() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), golden("cuneilid"));
    for (cmd, _) in COMMANDS {
        assert!(
            stdout(&out).contains(&format!("  {cmd} ")),
            "{cmd} missing from root help"
        );
    }
}

#[test]
fn every_subcommand_help_matches_golden_and_lists_its_flags() {
    for (cmd, flags) in COMMANDS {
        let out = run(&[cmd, "--help"]);
        assert!(out.status.success(), "{cmd}");
        let text = stdout(&out);
        assert_eq!(text, golden(cmd), "{cmd} help drifted from tests/golden/{cmd}.txt");
        for flag in flags {
            assert!(text.contains(&format!("{flag} ")), "{cmd} help lacks {flag}");
        }
        assert_eq!(stdout(&run(&["help", cmd])), text);
    }
}
