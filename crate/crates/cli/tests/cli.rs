use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use d2d_effcap_cli::{body, config_from_output};

const FAST: &str = "[harq]\nzeta_samples = 10000\ngrid_steps = 20\n\
                    [sweep]\nsteps = 4\nmc_paths = 100\nmc_blocks = 50\n\
                    [montecarlo]\nnum_paths = 300\nnum_blocks = 100\n\
                    [modeselect]\nmc_trials = 10000\n";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_d2d-effcap"));
    for (k, _) in std::env::vars() {
        if k.starts_with("D2D_EFFCAP_") {
            c.env_remove(k);
        }
    }
    c
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(cmd).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn mode_select_writes_schema_and_header() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", FAST);
    let o = run("mode-select", &cfg, d.path(), &["--seed", "77"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = read(d.path().join("mode_select.csv"));
    assert!(text.starts_with("# d2d-effcap mode-select\n# seed = 77\n"));
    assert!(text.contains("# seed = 77\n# resolved config:\n"));
    let b = body(&text);
    let mut lines = b.lines();
    assert_eq!(lines.next(), Some("hypothesis,pd_analytic,pe_analytic,pd_mc,pe_mc"));
    assert_eq!(lines.count(), 3);
    // the echoed config carries the seed override
    assert!(config_from_output(&text).unwrap().contains("seed = 77"));
}

#[test]
fn zero_sigma_gives_certain_detection() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &format!("{FAST}sigma = 0.0\n"));
    let o = run("mode-select", &cfg, d.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for line in body(&read(d.path().join("mode_select.csv"))).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1], "1");
        assert_eq!(f[3], "1");
    }
}

#[test]
fn unknown_key_and_parse_errors() {
    let d = tempfile::tempdir().unwrap();
    let bad = write_config(d.path(), "bad.toml", "[system]\nrates = 1.0\n");
    let o = run("ec", &bad, d.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rates"), "{}", stderr(&o));
    let broken = write_config(d.path(), "broken.toml", "[system]\nrate = 1.0\n\ntheta = \n");
    let o = run("ec", &broken, d.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn environment_overrides_reach_the_header() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", FAST);
    let o = bin()
        .args(["validate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(d.path())
        .env("D2D_EFFCAP_SYSTEM_RATE", "1.25")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read(d.path().join("validate.csv")).contains("# rate = 1.25\n"));
}

#[test]
fn ec_reruns_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", FAST);
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    assert!(run("ec", &cfg, &a, &[]).status.success());
    assert!(run("ec", &cfg, &b, &[]).status.success());
    assert_eq!(read(a.join("ec.csv")), read(b.join("ec.csv")));
    let other = d.path().join("c");
    assert!(run("ec", &cfg, &other, &["--seed", "5"]).status.success());
    assert_ne!(body(&read(a.join("ec.csv"))), body(&read(other.join("ec.csv"))));
}

#[test]
fn header_reproduces_its_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &format!("{FAST}[geometry]\nl_d_km = 0.12\n"));
    let first = d.path().join("first");
    assert!(run("sweep", &cfg, &first, &["--seed", "11"]).status.success());
    let text = read(first.join("sweep_r.csv"));
    let echoed = write_config(d.path(), "echo.toml", &config_from_output(&text).unwrap());
    let second = d.path().join("second");
    assert!(run("sweep", &echoed, &second, &[]).status.success());
    assert_eq!(text, read(second.join("sweep_r.csv")));
}

#[test]
fn sweep_file_name_and_schema() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        "c.toml",
        &FAST.replace("[sweep]\n", "[sweep]\nvariable = \"theta\"\nlo = 0.01\nhi = 1.0\nspacing = \"log\"\n"),
    );
    let o = run("sweep", &cfg, d.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let b = body(&read(d.path().join("sweep_theta.csv")));
    let lines: Vec<&str> = b.lines().collect();
    assert_eq!(lines[0], "variable,value,ec_n1,ec_n2,ci_n1,ci_n2");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("theta,0.01,"));
    assert!(lines[4].starts_with("theta,1,"));
    let ec: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(ec.windows(2).all(|w| w[1] < w[0]));
    // a strict QoS exponent leaves only a small fraction of the loose one
    assert!(ec[3] < 0.25 * ec[0]);
}

#[test]
fn empty_sweep_grid_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &FAST.replace("steps = 4", "steps = 0"));
    let o = run("sweep", &cfg, d.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty grid"), "{}", stderr(&o));
}

#[test]
fn strict_escalates_warnings() {
    let d = tempfile::tempdir().unwrap();
    // at a tiny rate the first attempt alone leaves no service leak
    let cfg = write_config(d.path(), "c.toml", &format!("{FAST}[system]\nrate = 0.05\n"));
    let loose = d.path().join("loose");
    let o = run("validate", &cfg, &loose, &[]);
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    let strict = d.path().join("strict");
    let o = run("ec", &cfg, &strict, &["--strict"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!strict.join("ec.csv").exists());
}

#[test]
fn perfect_channel_serves_l_times_r() {
    let d = tempfile::tempdir().unwrap();
    let text = format!(
        "{FAST}[geometry]\nl_d_db = 40.0\nl_micro_ul_db = 45.0\nl_micro_dl_db = 45.0\nl_macro_ul_db = 50.0\n\
         l_macro_dl_db = 50.0\nl_ut_dr_db = 300.0\nl_ut_micro_db = 300.0\nl_ut_macro_db = 300.0\n"
    );
    let cfg = write_config(d.path(), "c.toml", &text);
    let o = run("ec", &cfg, d.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for line in body(&read(d.path().join("ec.csv"))).lines().skip(1) {
        let f: Vec<f64> = line.split(',').skip(1).take(3).map(|x| x.parse().unwrap()).collect();
        for v in f {
            assert!((v - 25.0).abs() < 25.0 * 1e-6, "{line}");
        }
    }
}

#[test]
fn toy_objective_reaches_its_optimum() {
    let d = tempfile::tempdir().unwrap();
    for mode in ["numeric", "analytic-frozen"] {
        let text = format!(
            "[harq]\ntoy_optimum = 2.5\ngd_mode = \"{mode}\"\ngd_step = 0.2\ngd_grad_tol = 1e-9\n\
             grid_lo = 0.0\ngrid_hi = 5.0\ngrid_steps = 11\ngd_max_iters = 500\n"
        );
        let cfg = write_config(d.path(), "toy.toml", &text);
        let o = run("optimize", &cfg, d.path(), &[]);
        assert!(o.status.success(), "{mode}: {}", stderr(&o));
        for line in body(&read(d.path().join("optimize.csv"))).lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let r: f64 = f[1].parse().unwrap();
            assert!((r - 2.5).abs() < 1e-6, "{mode}: {line}");
            assert_eq!(f[5], "2.5");
            assert_eq!(f[8], "true");
        }
    }
}

#[test]
fn non_convergence_exits_nonzero_with_trace() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        "c.toml",
        "[harq]\ntoy_optimum = 3.0\ngd_max_iters = 1\ngd_step = 0.01\ngrid_lo = 0.0\ngrid_hi = 5.0\ngrid_steps = 6\n",
    );
    let o = run("optimize", &cfg, d.path(), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("did not converge"));
    assert!(body(&read(d.path().join("optimize_trace_n1.csv"))).starts_with("iteration,r,value,grad,step\n0,1,"));
}

#[test]
fn validate_passes_on_defaults() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", FAST);
    let o = run("validate", &cfg, d.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!body(&read(d.path().join("validate.csv"))).contains(",false"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        d2d_effcap_cli::ExperimentConfig::parse(&text, Vec::new()).unwrap_or_else(|e| panic!("{}: {e:#}", p.display()));
    }
}
