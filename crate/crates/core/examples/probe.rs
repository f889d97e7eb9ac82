use tsa_core::powersim::{wscc9, ScenarioConfig};

fn main() {
    let case = wscc9();
    case.to_json_path("cases/wscc9.json").unwrap();
    let scenario = ScenarioConfig::default_for(&case);
    scenario.to_json_path("cases/wscc9_scenarios.json").unwrap();
    println!("written");
}
