use cnc_core::csvfmt::parse_f64;
use cnc_core::harness::{parse_config, preset_config, run_experiment, trajectory_file_name, HALFSPACE_PRESET};
use cnc_core::optimizers::Method;
use cnc_core::Execution;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn short_preset() -> cnc_core::harness::ExperimentConfig {
    parse_config(&format!("preset = {HALFSPACE_PRESET:?}\nt_max = 300\nseeds = [0, 1, 2]\n")).unwrap()
}

#[test]
fn identical_configs_give_identical_files() {
    let cfg = short_preset();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, a.path(), Execution::Parallel).unwrap();
    run_experiment(&cfg, b.path(), Execution::Sequential).unwrap();
    let (fa, fb) = (read_dir(a.path()), read_dir(b.path()));
    assert_eq!(fa.len(), 4 * 3 + 2);
    assert_eq!(fa, fb);
}

#[test]
fn zero_horizon_files_hold_only_the_initial_row() {
    let mut cfg = short_preset();
    cfg.t_max = 0;
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir.path(), Execution::default()).unwrap();
    let text = fs::read_to_string(dir.path().join(trajectory_file_name(Method::Sgd, 1))).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 2);
    assert!(data[1].starts_with("0,"));
}

const DIVERGENT: &str = "seeds = [0, 1]\nt_max = 200\nrng_seed = 4\n\
[problem]\nkind = \"quadratic\"\neigenvalues = [1.0, -3.0]\nnoise_sigma = 0.1\n\
[init]\nmode = \"explicit\"\npoint = [0.5, 0.5]\n";

#[test]
fn a_failing_cell_does_not_change_other_cells() {
    let with_gd =
        parse_config(&format!("methods = [\"gd\", \"sgd\"]\n{DIVERGENT}[gd]\neta = 1.0\n[sgd]\neta = 0.01\n")).unwrap();
    let without = parse_config(&format!("methods = [\"sgd\"]\n{DIVERGENT}[sgd]\neta = 0.01\n")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_experiment(&with_gd, a.path(), Execution::default()).unwrap();
    let rb = run_experiment(&without, b.path(), Execution::default()).unwrap();

    let gd_rows: Vec<_> = ra.grid.rows_for(Method::Gd).collect();
    assert_eq!(gd_rows.len(), 2);
    for r in &gd_rows {
        assert!(r.status.starts_with("error"), "{}", r.status);
        assert!(r.final_f.is_none());
    }
    assert!(!a.path().join(trajectory_file_name(Method::Gd, 0)).exists());

    let sa: Vec<_> = ra.grid.rows_for(Method::Sgd).cloned().collect();
    let sb: Vec<_> = rb.grid.rows_for(Method::Sgd).cloned().collect();
    assert_eq!(sa, sb);
    for seed in [0, 1] {
        let name = trajectory_file_name(Method::Sgd, seed);
        let strip = |p: &Path| -> Vec<String> {
            fs::read_to_string(p.join(&name)).unwrap().lines().filter(|l| !l.starts_with('#')).map(String::from).collect()
        };
        assert_eq!(strip(a.path()), strip(b.path()));
    }
    let summary = fs::read_to_string(a.path().join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("gd,0,") && l.contains("error")));
}

/// Independent rescan of `summary.csv` and the trajectory files.
#[test]
fn summary_escape_iterations_match_trajectory_files() {
    let cfg = preset_config(HALFSPACE_PRESET).unwrap().with_seeds(vec![0, 1, 2, 3]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir.path(), Execution::default()).unwrap();
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let f_best = summary
        .lines()
        .find_map(|l| l.strip_prefix("# f_best = "))
        .and_then(parse_f64)
        .expect("f_best header");
    let mut lines = summary.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), "method,seed,escape_iteration,final_f,final_grad_norm,final_lambda_min,status");
    let mut n = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let file = dir.path().join(format!("traj_{}_seed{}.csv", cols[0], cols[1]));
        let traj = fs::read_to_string(file).unwrap();
        let fs: Vec<f64> = traj
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(fs.len(), cfg.t_max + 1);
        let f0 = fs[0];
        let threshold = f0 - 0.05 * (f0 - f_best);
        let mut escape = None;
        for (t, &f) in fs.iter().enumerate() {
            if f <= threshold {
                escape = Some(t);
                break;
            }
        }
        let recorded = if cols[2].is_empty() { None } else { Some(cols[2].parse::<usize>().unwrap()) };
        assert_eq!(escape, recorded, "{line}");
        assert_eq!(cols[3].parse::<f64>().unwrap(), *fs.last().unwrap());
        assert!(fs.iter().all(|&f| f >= f_best));
        n += 1;
    }
    assert_eq!(n, 16);
}

#[test]
fn measurement_output_is_deterministic() {
    let cfg = parse_config(
        "seeds = [0]\nmethods = [\"gd\"]\n[measure]\nfamily = \"mlp_depth\"\nvalues = [1, 2]\nm = 2\nn = 10\niso_draws = 5000\n",
    )
    .unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cnc_core::harness::run_cnc_measurement(&cfg, a.path(), Execution::Parallel).unwrap();
    cnc_core::harness::run_cnc_measurement(&cfg, b.path(), Execution::Sequential).unwrap();
    assert_eq!(read_dir(a.path()), read_dir(b.path()));
}
