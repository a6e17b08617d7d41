mod common;

use perturb_bench::audio::load_wav;
use perturb_bench::harness::{
    emit_report, load_report, parse_report_csv, run_scenario, AttackKind, BenchConfig, Condition, Removal, Scenario,
    ScenarioSpec, Workbench, CSV_COLUMNS,
};

fn tiny() -> BenchConfig {
    BenchConfig::load(&common::tiny_config_path()).unwrap()
}

fn spec(scenario: Scenario, attack: AttackKind, removal: Removal) -> ScenarioSpec {
    ScenarioSpec::new(scenario, attack, removal).unwrap()
}

#[test]
fn identity_removal_reproduces_the_adv_row() {
    let bench = Workbench::new(tiny(), None).unwrap();
    let rep = run_scenario(&spec(Scenario::Ignorant, AttackKind::Mifgsm, Removal::None), &bench, None).unwrap();
    let (a, p) = (rep.row(Condition::Adv), rep.row(Condition::Processed));
    for (x, y) in [(a.si_snr, p.si_snr), (a.mse, p.mse), (a.eer_white, p.eer_white), (a.eer_black, p.eer_black)] {
        assert!((x - y).abs() <= 1e-9);
    }
    assert_eq!(a.pitch_mean, p.pitch_mean);
    let o = rep.row(Condition::Ori);
    assert_eq!((o.method.as_str(), o.si_snr, o.mse), ("-", 100.0, 0.0));
    assert_eq!(a.method, "mifgsm");
    assert_eq!(p.method, "none");
}

#[test]
fn report_records_seeds_and_trials() {
    let cfg = tiny();
    let bench = Workbench::new(cfg.clone(), None).unwrap();
    let rep = run_scenario(&spec(Scenario::Ignorant, AttackKind::Mifgsm, Removal::Qt), &bench, None).unwrap();
    let m = &rep.metadata;
    for (name, seed) in cfg.seeds() {
        assert_eq!(m.seeds.get(name), Some(&seed), "{name}");
    }
    assert_eq!(m.target_trials, 6);
    assert_eq!(m.attacked_utterances, 6 * 2);
    assert_eq!(m.nontarget_trials, 6 * 4);
    assert_eq!(m.absent_methods, ["aac", "gan"]);
}

#[test]
fn rerun_is_bit_exact_and_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(Scenario::SemiInformed, AttackKind::Ssed, Removal::DenoisingG);
    let first = run_scenario(&s, &Workbench::new(tiny(), None).unwrap(), Some(dir.path())).unwrap();
    let second = run_scenario(&s, &Workbench::new(tiny(), None).unwrap(), None).unwrap();
    assert_eq!(first.without_timestamp(), second.without_timestamp());

    emit_report(&first, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_COLUMNS.join(","));
    assert_eq!(parse_report_csv(&csv).unwrap(), first.rows);
    assert_eq!(load_report(dir.path()).unwrap(), first);
    for f in ["report.json", "si_snr.svg", "eer.svg", "trials.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let adv: Vec<_> = std::fs::read_dir(dir.path().join("wav/adv")).unwrap().collect();
    assert_eq!(adv.len(), first.metadata.attacked_utterances);
    let processed = std::fs::read_dir(dir.path().join("wav/processed")).unwrap();
    for entry in processed {
        let w = load_wav(entry.unwrap().path()).unwrap();
        assert!(w.samples().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn cached_checkpoints_give_the_same_report() {
    let cache = tempfile::tempdir().unwrap();
    let s = spec(Scenario::WellInformed, AttackKind::Ssed, Removal::Joint);
    let cold = run_scenario(&s, &Workbench::new(tiny(), Some(cache.path().into())).unwrap(), None).unwrap();
    let files = std::fs::read_dir(cache.path()).unwrap().count();
    assert!(files >= 4, "expected encoder and SSED checkpoints, found {files}");
    let warm = run_scenario(&s, &Workbench::new(tiny(), Some(cache.path().into())).unwrap(), None).unwrap();
    assert_eq!(cold.without_timestamp(), warm.without_timestamp());
    assert_eq!(std::fs::read_dir(cache.path()).unwrap().count(), files);
}

#[test]
fn rejected_cells_fail_before_any_work() {
    let bench = Workbench::new(tiny(), None).unwrap();
    let bad = ScenarioSpec {
        scenario: Scenario::WellInformed,
        attack: AttackKind::Mifgsm,
        removal: Removal::Joint,
    };
    let e = run_scenario(&bad, &bench, None).unwrap_err();
    assert!(matches!(e, perturb_bench::Error::NotApplicable(_)), "{e}");
}
