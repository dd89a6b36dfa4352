use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gazfuse(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazfuse"))
        .args(args)
        .current_dir(cwd)
        .env("GAZFUSE_OUT", cwd.join("runs"))
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_synth(dir: &Path) {
    let o = gazfuse(
        &[
            "synth",
            "--quiet",
            "--out",
            "data",
            "--set",
            "sentences_train=80",
            "--set",
            "sentences_dev=20",
            "--set",
            "sentences_test=20",
            "--set",
            "names_per_type=10",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn train_predict_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_synth(d);
    let gaz = "data/gazetteers_full/manifest.txt";
    let o = gazfuse(
        &[
            "train",
            "--quiet",
            "--train",
            "data/train.txt",
            "--dev",
            "data/dev.txt",
            "--gazetteers",
            gaz,
            "--set",
            "max_epochs=2",
            "--set",
            "h=8",
            "--set",
            "ffn=8",
            "--set",
            "max_epochs=1",
            "--out",
            "m",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let conf = fs::read_to_string(d.join("m/effective.conf")).unwrap();
    assert!(conf.contains("max_epochs = 1"), "last --set wins: {conf}");
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("m/run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 1);
    assert_eq!(
        run["inputs"]
            .as_object()
            .unwrap()
            .values()
            .next()
            .unwrap()
            .as_str()
            .unwrap()
            .len(),
        64
    );
    assert!(!d.join("m/.lock").exists());

    let o = gazfuse(
        &[
            "predict",
            "--quiet",
            "--model",
            "m/model.ckpt",
            "--input",
            "data/test.txt",
            "--gazetteers",
            gaz,
            "--out",
            "p",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = gazfuse(
        &[
            "eval",
            "--out",
            "e",
            "--pred",
            "p/predictions.txt",
            "--gold",
            "data/test.txt",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("micro"));

    let o = gazfuse(
        &[
            "predict",
            "--quiet",
            "--unplug",
            "--model",
            "m/model.ckpt",
            "--input",
            "data/test.txt",
            "--out",
            "u",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn gazette_edits_are_visible_to_match() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_synth(d);
    let m = "data/gazetteers/manifest.txt";
    fs::write(d.join("s.txt"), "took Zorbalex twice\n").unwrap();
    let o = gazfuse(
        &[
            "gazette",
            "add",
            "--quiet",
            "--gazetteers",
            m,
            "--name",
            "medication",
            "zorbalex",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = gazfuse(
        &["match", "--quiet", "--gazetteers", m, "--input", "s.txt", "--out", "x"],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(d.join("x/matches.txt")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("Zorbalex\tS\t")), "{text}");
    let o = gazfuse(
        &[
            "gazette",
            "remove",
            "--quiet",
            "--gazetteers",
            m,
            "--name",
            "medication",
            "zorbalex",
        ],
        d,
    );
    assert!(o.status.success());
    let o = gazfuse(
        &["match", "--quiet", "--gazetteers", m, "--input", "s.txt", "--out", "y"],
        d,
    );
    assert!(o.status.success());
    assert!(fs::read_to_string(d.join("y/matches.txt"))
        .unwrap()
        .lines()
        .any(|l| l.starts_with("Zorbalex\tO\t")));
}

#[test]
fn errors_carry_category_and_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cases: &[(&[&str], &str, i32)] = &[
        (&["frobnicate"], "usage", 2),
        (&["train", "--train", "missing.txt", "--dev", "missing.txt"], "io", 3),
        (
            &["train", "--set", "bogus=1", "--train", "a", "--dev", "b"],
            "config",
            6,
        ),
        (
            &["train", "--set", "noequals", "--train", "a", "--dev", "b"],
            "config",
            6,
        ),
    ];
    for (args, category, code) in cases {
        let o = gazfuse(args, d);
        assert_eq!(o.status.code(), Some(*code), "{args:?}: {}", stderr(&o));
        assert!(
            stderr(&o).starts_with(&format!("error[{category}]: ")),
            "{}",
            stderr(&o)
        );
    }
    fs::write(d.join("bad.ckpt"), "not a checkpoint\n").unwrap();
    fs::write(d.join("s.txt"), "a b\n").unwrap();
    let o = gazfuse(&["predict", "--model", "bad.ckpt", "--input", "s.txt"], d);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn a_locked_run_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::create_dir_all(d.join("busy")).unwrap();
    fs::write(d.join("busy/.lock"), "1\n").unwrap();
    let o = gazfuse(&["synth", "--out", "busy"], d);
    assert_eq!(o.status.code(), Some(9));
    assert!(stderr(&o).starts_with("error[lock]: "));
    assert!(d.join("busy/.lock").exists());
}

#[test]
fn default_run_directory_follows_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = gazfuse(
        &[
            "synth",
            "--quiet",
            "--set",
            "sentences_train=10",
            "--set",
            "sentences_dev=5",
            "--set",
            "sentences_test=5",
            "--set",
            "names_per_type=4",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("runs/synth/train.txt").exists());
}
