use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY_TRAIN: &str = "\
pose_width = 16
pretrain_steps = 20
adv_steps = 12
batch_frames = 16
batch_clips = 2
disc_width = 4
label_fraction = 0.5
log_every = 4
";

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handmotion"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, seed: &str) -> PathBuf {
    let out = dir.join(name);
    ok(&[
        "gen-data",
        "--videos",
        "6",
        "--test-videos",
        "2",
        "--library-videos",
        "3",
        "--frames",
        "40",
        "--seed",
        seed,
        "--out",
        s(&out),
    ]);
    out
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, format!("[train]\n{TINY_TRAIN}{extra}")).unwrap();
    p
}

#[test]
fn gen_data_is_deterministic_and_summarized() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.bin", "7");
    let b = gen(dir.path(), "b.bin", "7");
    let c = gen(dir.path(), "c.bin", "8");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let manifest = fs::read_to_string(dir.path().join("a.bin.manifest.txt")).unwrap();
    assert!(!manifest.is_empty());
}

#[test]
fn too_short_videos_exit_with_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["gen-data", "--frames", "8", "--seq-len", "16", "--out", s(&dir.path().join("x.bin"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.bin", "1");
    let cfg = write_config(dir.path(), "no_such_key = 1\n");
    let out = bin(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = bin(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&dir.path().join("absent.bin")),
        "--out",
        s(&dir.path().join("r")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn train_writes_a_complete_run_directory_and_eval_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.bin", "2");
    let cfg = write_config(dir.path(), "seed = 3\n");
    let run = dir.path().join("run");
    // Flags override the file, which overrides the defaults.
    let stdout = ok(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--method",
        "motion_model",
        "--seed",
        "5",
        "--checkpoint-every",
        "6",
        "--out",
        s(&run),
    ]);
    assert!(stdout.contains("final: rootrel"));
    for f in [
        "config.toml",
        "split.txt",
        "pretrained.ckpt",
        "pretrain_curve.csv",
        "model.ckpt",
        "curves.csv",
        "pretrain_report.txt",
        "report.txt",
        "report.csv",
        "checkpoints/step_000006.ckpt",
        "checkpoints/step_000012.ckpt",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let saved = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(saved.contains("seed = 5"), "{saved}");
    assert!(saved.contains("adv_steps = 12"), "{saved}");
    assert!(saved.contains("lambda_mm = 3"), "{saved}");
    let curves = fs::read_to_string(run.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().next(), Some("step,l_j2d,l_zr,l_mm,l_d,d_acc"));

    let e1 = dir.path().join("e1");
    let e2 = dir.path().join("e2");
    ok(&["eval", "--ckpt", s(&run.join("model.ckpt")), "--data", s(&data), "--out", s(&e1)]);
    ok(&["eval", "--ckpt", s(&run.join("model.ckpt")), "--data", s(&data), "--out", s(&e2)]);
    let report = fs::read(run.join("report.csv")).unwrap();
    assert_eq!(fs::read(e1.join("report.csv")).unwrap(), report);
    assert_eq!(fs::read(e2.join("report.csv")).unwrap(), report);

    let cmp = dir.path().join("cmp");
    ok(&[
        "eval",
        "--ckpt",
        s(&run.join("pretrained.ckpt")),
        "--compare",
        s(&run.join("model.ckpt")),
        "--data",
        s(&data),
        "--out",
        s(&cmp),
    ]);
    let delta = fs::read_to_string(cmp.join("delta.csv")).unwrap();
    assert!(delta.starts_with("metric,ckpt_mm,compare_mm,improvement_mm,improvement_pct\n"));
    assert!(delta.lines().any(|l| l.starts_with("mpjpe_rootrel_mm,")));
}

#[test]
fn eval_rejects_an_unreadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.bin", "2");
    let cfg = write_config(dir.path(), "");
    let run = dir.path().join("run");
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--method", "none", "--out", s(&run)]);
    let junk = dir.path().join("junk.bin");
    fs::write(&junk, b"not a dataset").unwrap();
    let out = bin(&["eval", "--ckpt", s(&run.join("model.ckpt")), "--data", s(&junk), "--out", s(&dir.path().join("e"))]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn ablate_writes_a_table_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.bin", "4");
    let grid = dir.path().join("grid.toml");
    fs::write(
        &grid,
        format!(
            "methods = [\"motion_model\", \"temporal_smoother\"]\nseq_lens = [4]\nreprs = [\"25d\"]\naug = [true]\nsn = [false]\n\n[train]\n{TINY_TRAIN}"
        ),
    )
    .unwrap();
    let out = dir.path().join("abl");
    let args = ["ablate", "--data", s(&data), "--grid", s(&grid), "--out", s(&out)];
    ok(&args);
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "method,S,repr,aug,sn,mpjpe_abs_mm,mpjpe_rootrel_mm,seeds");
    assert_eq!(lines.len(), 3, "{table}");
    assert!(lines.iter().any(|l| l.starts_with("motion_model,4,25d,on,off,")));
    assert!(lines.iter().any(|l| l.starts_with("temporal_smoother,4,25d,n/a,n/a,")));

    // A finished cell is reused as is; a corrupted one is trained again.
    let mm = out.join("cells/motion_model_s4_25d_aug-on_sn-off/seed_0");
    let sm = out.join("cells/temporal_smoother_s4_25d_aug-na_sn-na/seed_0");
    let mm_model = fs::read(mm.join("model.ckpt")).unwrap();
    fs::write(mm.join("model.ckpt"), b"marker").unwrap();
    fs::write(sm.join("report.txt"), b"garbage").unwrap();
    ok(&args);
    assert_eq!(fs::read(mm.join("model.ckpt")).unwrap(), b"marker");
    assert!(fs::read_to_string(sm.join("report.txt")).unwrap().contains("mpjpe"));
    assert_eq!(fs::read_to_string(out.join("table.csv")).unwrap(), table);
    assert!(!mm_model.is_empty());
}
