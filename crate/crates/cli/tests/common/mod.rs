#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn grail(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grail"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("grail binary runs")
}

/// Runs a subcommand against `config.ini` in `dir` and returns the exit code.
pub fn run(dir: &Path, command: &str, extra: &[&str]) -> i32 {
    let mut args = vec![command, "--config", "config.ini"];
    args.extend_from_slice(extra);
    let out = grail(dir, &args);
    if out.status.code() != Some(0) {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap_or(-1)
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.ini");
    fs::write(&path, text).unwrap();
    path
}

/// Small NER run: a few hundred sentences and a reduced encoder.
pub fn small_config(task: &str, method: &str, seeds: &str) -> String {
    format!(
        "[run]\ntask = {task}\nmethod = {method}\nseeds = {seeds}\nout = out\n\n\
         [synth]\nsentences = 240\nnoise = 0.1\nseed = 3\n\n\
         [split]\nfraction = 0.1\nunlabeled = 0.5\nsegments = 3\n\n\
         [encoder]\nemb_dim = 8\nwindow = 1\nhidden_dim = 12\nhead_hidden = 8\n\n\
         [girl]\npretrain_epochs = 4\nepisode_len = 8\nbatch_size = 8\n\n\
         [gradcheck]\ndraws = 10\n"
    )
}

/// Every file below `root`, keyed by relative path.
pub fn snapshot_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}
