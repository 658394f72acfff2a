#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cuneilid::corpus::{format_corpus, LabelledCorpus};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cuneilid"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

pub fn write_corpus(dir: &Path, name: &str, corpus: &LabelledCorpus) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, format_corpus(corpus)).unwrap();
    path
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
