use std::path::PathBuf;

use workbench::execute::Outcome;
use workbench::headless::{define_input, run_headless, PathScript, Units};
use workbench::telemetry::csv_header;
use workbench::{load_scenario, Phase, Scenario, Session};

fn scenario(name: &str) -> Scenario {
    load_scenario(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)).unwrap()
}

fn paired_line(scenario: Scenario) -> (Session, u64) {
    let mut s = Session::new(1, scenario).unwrap();
    let id = define_input(&mut s, Units::Meters, Some(&[[0.55, -0.15], [0.55, 0.15]]), None, None).unwrap();
    s.pair_path(id, "stripes").unwrap();
    (s, id)
}

#[test]
fn flat_line_keeps_contact_and_tracks() {
    let (mut s, id) = paired_line(scenario("flat.toml"));
    let mut streamed = 0;
    let report = s
        .execute(id, |_| {
            streamed += 1;
            true
        })
        .unwrap();
    assert_eq!(report.outcome, Outcome::Completed);
    assert_eq!(s.phase(), Phase::Done);
    assert!(report.first_contact.is_some());
    assert_eq!(report.contact_loss_ticks, 0);
    assert!(report.pressing_ticks > 0);
    assert!(report.tangential_rms < 2e-3, "rms {}", report.tangential_rms);
    assert!((report.mean_fn_meas - 10.0).abs() < 0.5, "mean f_n {}", report.mean_fn_meas);
    assert!((report.tracked_length - 0.3).abs() < 0.01);

    let frames = s.telemetry();
    assert_eq!(streamed, frames.len());
    assert_eq!(report.frames as usize, frames.len());
    for (i, f) in frames.iter().enumerate() {
        assert_eq!(f.seq, i as u64);
        assert!((f.t - 0.01 * i as f64).abs() < 1e-9, "frame {i} at {}", f.t);
        assert_eq!(f.q.len(), 7);
    }
    let touched = frames.iter().position(|f| f.contact).unwrap();
    let pressing: Vec<_> = frames[touched..].iter().filter(|f| f.fn_des > 0.0).collect();
    assert!(!pressing.is_empty());
    assert!(pressing.iter().all(|f| f.contact && f.fn_des == 10.0));
    assert_eq!(s.last_run(), Some(&report));
    assert_eq!(s.joint_state().q.as_slice(), report.final_q.as_slice());
    let last = s.transitions().last().unwrap();
    assert_eq!((last.from, last.to), (Phase::Executing, Phase::Done));
}

#[test]
fn sustained_saturation_faults() {
    let mut sc = scenario("flat.toml");
    sc.arm.torque_limits = Some(vec![1.0; 7]);
    let (mut s, id) = paired_line(sc);
    let report = s.execute(id, |_| true).unwrap();
    match &report.outcome {
        Outcome::Fault { reason, t } => {
            assert!(reason.contains("saturated"), "{reason}");
            assert!(*t >= 0.5 && *t < 0.51, "fault at {t}");
        }
        other => panic!("expected a fault, got {other:?}"),
    }
    assert_eq!(s.phase(), Phase::Fault);
    assert!(s.telemetry().iter().all(|f| f.saturated));
}

#[test]
fn lost_contact_faults() {
    let mut sc = scenario("flat.toml");
    sc.gains.f_n = 0.0;
    let (mut s, id) = paired_line(sc);
    let report = s.execute(id, |_| true).unwrap();
    match &report.outcome {
        Outcome::Fault { reason, t } => {
            assert!(reason.contains("contact lost"), "{reason}");
            assert!(*t > report.first_contact.unwrap() + 0.5, "fault at {t}");
        }
        other => panic!("expected a fault, got {other:?}"),
    }
    assert_eq!(s.phase(), Phase::Fault);
}

#[test]
fn aborting_stops_the_run() {
    let (mut s, id) = paired_line(scenario("flat.toml"));
    let report = s.execute(id, |f| f.seq < 5).unwrap();
    assert!(matches!(report.outcome, Outcome::Aborted { .. }));
    assert_eq!(s.telemetry().len(), 6);
    assert_eq!(s.phase(), Phase::Fault);
    s.transition(Phase::PathSpec, "retry").unwrap();
    assert_eq!(s.execute(id, |_| true).unwrap().outcome, Outcome::Completed);
}

#[test]
fn headless_csv_is_deterministic() {
    let script = PathScript::load(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/line.toml")).unwrap();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let mut out = Vec::new();
        let report = run_headless(scenario("flat.toml"), &script, &mut out).unwrap();
        assert_eq!(report.runs.len(), 1);
        assert_eq!(report.runs[0].outcome, Outcome::Completed);
        runs.push(String::from_utf8(out).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
    let mut lines = runs[0].lines();
    assert_eq!(lines.next().unwrap(), csv_header(7));
    assert_eq!(csv_header(7), "t,q0,q1,q2,q3,q4,q5,q6,px,py,pz,ex,ey,ez,erx,ery,erz,fn_meas,fn_des,contact,saturated");
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() > 100);
    assert!(rows.iter().all(|r| r.split(',').count() == 21));
}

#[test]
fn area_script_runs_every_stroke() {
    let script = PathScript::load(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/area.toml")).unwrap();
    let mut out = Vec::new();
    let report = run_headless(scenario("flat.toml"), &script, &mut out).unwrap();
    assert_eq!(report.runs.len(), 1);
    let run = &report.runs[0];
    assert_eq!(run.outcome, Outcome::Completed);
    assert_eq!(run.contact_loss_ticks, 0);
    assert!(run.tangential_rms < 2e-3);
    assert!(report.frames.windows(2).all(|w| w[1].seq == w[0].seq + 1));
}

#[test]
fn path_scripts_are_validated() {
    assert!(PathScript::from_toml("version = 2").is_err());
    let err = PathScript::from_toml("version = 1\n[[task]]\nobject = \"a\"\nstrok = [[1.0, 2.0]]\n").unwrap_err();
    assert!(err.to_string().contains("task"), "{err}");
    let script = PathScript::from_toml("version = 1\n[[task]]\nobject = \"a\"\nstroke = [[1.0, 2.0], [3.0, 4.0]]\n").unwrap();
    assert_eq!(script.task[0].units, Units::Pixels);
}
