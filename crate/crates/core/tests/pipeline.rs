use std::path::Path;

use ipcmap::pipeline::{cmd_animate, cmd_basemap, cmd_overlay, diversity, check_format, Config};
use ipcmap::synth::{generate, SynthConfig};
use ipcmap::{Error, Level};

fn write_corpus(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("corpus.tsv");
    generate(SynthConfig {
        patents: 3000,
        classes: 60,
        groups: 5,
        seed: 3,
        ..Default::default()
    })
    .write_canonical(&p)
    .unwrap();
    p
}

fn write_set(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("set.tsv");
    generate(SynthConfig {
        patents: 200,
        classes: 60,
        seed: 3,
        years: 3,
        ..Default::default()
    })
    .write_canonical(&p)
    .unwrap();
    p
}

fn quick() -> Config {
    let mut c = Config::default();
    c.layout.restarts = 1;
    c.layout.max_iters = 300;
    c.louvain_trials = 2;
    c
}

#[test]
fn basemap_then_overlay() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path());
    let base = tmp.path().join("base");
    let summary = cmd_basemap(&corpus, &Level::BOTH, &base, &quick(), false).unwrap();
    assert_eq!(summary.reports.len(), 2);
    for name in [
        "cos_ipc3.txt", "cos_ipc4.txt", "ipc3.txt", "ipc4.txt", "ipc3.paj", "ipc4.paj",
        "correction3.txt", "correction4.txt", "clusters3.txt", "clusters4.txt", "config.txt",
    ] {
        assert!(base.join(name).exists(), "{name}");
    }
    assert!(!base.join("matrix3.txt").exists());
    for name in ["ipc3.txt", "ipc4.paj", "cos_ipc3.txt"] {
        assert!(check_format(&base.join(name)).unwrap(), "{name}");
    }

    let set = write_set(tmp.path());
    let out = tmp.path().join("overlay");
    let o = cmd_overlay(&set, &base, &out, &quick()).unwrap();
    assert_eq!(o.overlays.len(), 2);
    for name in ["vos3.txt", "vos4.txt", "ipc3.vec", "ipc4.vec", "ipc3.cls", "ipc4.cls", "ipc_rao.txt", "vos.csv", "config.txt"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let rao = std::fs::read_to_string(out.join("ipc_rao.txt")).unwrap();
    let lines: Vec<&str> = rao.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("level3\t0."), "{rao}");
    let (d3, d4) = diversity(&set, &base).unwrap();
    assert_eq!(format!("level3\t{:.3}", d3.unwrap()), lines[0]);
    assert_eq!(format!("level4\t{:.3}", d4.unwrap()), lines[1]);

    let anim = tmp.path().join("anim");
    let a = cmd_animate(&set, &base, &anim, &quick(), None).unwrap();
    assert_eq!(a.years.iter().map(|y| y.0).collect::<Vec<_>>(), [2000, 2001, 2002]);
    assert_eq!(a.years.iter().map(|y| y.1).sum::<usize>(), 200);
    assert!(anim.join("2001").join("vos4.txt").exists());
}

#[test]
fn overlay_needs_basemap_files() {
    let tmp = tempfile::tempdir().unwrap();
    let set = write_set(tmp.path());
    let err = cmd_overlay(&set, &tmp.path().join("nowhere"), &tmp.path().join("o"), &quick()).unwrap_err();
    assert!(matches!(err.root(), Error::MissingBasemap(_)), "{err}");
}

#[test]
fn config_file_and_overrides() {
    let mut c = Config::default();
    c.parse_into("# comment\nseed = 99\nalgorithm=kamada_kawai\ntau=0.3\n").unwrap();
    assert_eq!(c.seed(), 99);
    assert_eq!(c.tau, 0.3);
    assert!(c.parse_into("bogus=1").is_err());
    assert!(c.parse_into("tau=1.5").is_err());
    assert!(c.parse_into("seed").is_err());
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("x.tsv");
    std::fs::write(&corpus, "abc").unwrap();
    let echo = c.echo(&[("corpus", &corpus)]).unwrap();
    // sha256 of "abc"
    let digest = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
    assert!(echo.starts_with(&format!("corpus=x.tsv sha256:{digest}\nseed=99\nalgorithm=kamada_kawai\n")), "{echo}");
    assert!(c.echo(&[("corpus", &dir.path().join("missing"))]).is_err());
}
