use std::path::PathBuf;

use robcomm::{Loaded, Scenario};

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[allow(dead_code)]
pub fn scenario_paths() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    v.sort();
    v
}

#[allow(dead_code)]
pub fn load(name: &str) -> Loaded {
    Scenario::load(&scenario_dir().join(name)).unwrap().validate().unwrap()
}
