mod common;

use robcomm::{run_command, Overrides, Scenario};

#[test]
fn every_scenario_meets_its_expectations() {
    let mut checked = 0;
    for path in common::scenario_paths() {
        let l = Scenario::load(&path).unwrap().validate().unwrap();
        for (cmd, exp) in &l.scenario.expect {
            let out = run_command(cmd, &l, Overrides::default()).unwrap();
            if let Err(e) = out.meets(exp) {
                panic!("{} {cmd}: {e}\n{}", path.display(), out.text());
            }
            checked += 1;
        }
    }
    assert!(checked >= 12, "only {checked} expectations");
}

#[test]
fn scenarios_round_trip_through_json() {
    for path in common::scenario_paths() {
        let s = Scenario::load(&path).unwrap();
        let again = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(again.to_json(), s.to_json(), "{}", path.display());
    }
}
