use serde_json::Value;
use wsn_twin_demo::{crc16_of, frame_explorer, link_budget, paper_day};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn crc_check_value() {
    assert_eq!(crc16_of("123456789"), "0x29B1");
}

#[test]
fn every_flip_of_a_soil_frame_is_rejected() {
    let clean = parse(frame_explorer(76, "C2:C2:C2:C2:02", "soil", 293.0, 0.0, -1));
    assert_eq!(clean["length"], 14);
    assert!(clean.get("flipped").is_none());
    for bit in 0..14 * 8 {
        let v = parse(frame_explorer(76, "C2:C2:C2:C2:02", "soil", 293.0, 0.0, bit));
        let result = v["flipped"]["result"].as_str().unwrap();
        assert!(result.starts_with("rejected"), "bit {bit}: {result}");
    }
}

#[test]
fn explorer_reports_bad_input() {
    assert!(parse(frame_explorer(76, "nope", "soil", 1.0, 0.0, -1))["error"].is_string());
    assert!(parse(frame_explorer(76, "C2:C2:C2:C2:02", "soil", 2000.0, 0.0, -1))["error"].is_string());
    assert!(parse(frame_explorer(200, "C2:C2:C2:C2:02", "soil", 1.0, 0.0, -1))["error"].is_string());
    assert!(parse(frame_explorer(76, "C2:C2:C2:C2:02", "soil", 1.0, 0.0, 112))["error"].is_string());
}

#[test]
fn link_budget_matches_the_closed_form() {
    let v = parse(link_budget(0.5, 15, 32, "2mbps", 2_000, 1));
    assert_eq!(v["airtime_us"], 172);
    let analytic = v["analytic_delivery"].as_f64().unwrap();
    assert!((analytic - (1.0 - 0.5f64.powi(16))).abs() < 1e-12);
    assert!((v["simulated_delivery"].as_f64().unwrap() - analytic).abs() < 0.01);
    assert!((v["mean_attempts"].as_f64().unwrap() - 2.0).abs() < 0.1);
    let curve = v["curve"].as_array().unwrap();
    assert_eq!(curve.len(), 16);
    assert_eq!(curve[0], 0.5);

    let lossless = parse(link_budget(0.0, 0, 3, "1mbps", 10, 1));
    assert_eq!(lossless["simulated_delivery"], 1.0);
    assert_eq!(lossless["mean_energy_maus"], 12.0 * 112.0);
    assert!(parse(link_budget(0.5, 16, 3, "1mbps", 10, 1))["error"].is_string());
    assert!(parse(link_budget(0.5, 3, 3, "9mbps", 10, 1))["error"].is_string());
}

#[test]
fn paper_day_lcd_before_and_after_the_fire() {
    let before = parse(paper_day("11:45", 0.0));
    assert_eq!(before["samples"].as_array().unwrap().len(), 27);
    assert_eq!(before["alarms"], serde_json::json!(["12:00"]));
    assert_eq!(before["actuators"]["sprinkler_on"], false);
    assert_eq!(before["lcd"][2], "FLAME:   0      ");

    let after = parse(paper_day("12:10", 0.0));
    assert_eq!(after["actuators"]["power_cutoff"], true);
    assert_eq!(after["lcd"][3], "M:  0 STP       ");
    assert!(parse(paper_day("23:00", 0.0))["error"].is_string());
}

#[test]
fn paper_day_shows_the_sample_taken_at_that_time() {
    let at = parse(paper_day("12:00", 0.0));
    assert_eq!(at["lcd"][2], "FLAME:1023      ");
    assert_eq!(at["actuators"]["sprinkler_on"], true);
    assert_eq!(parse(paper_day("10:30", 0.0))["lcd"][1], "SOIL: 292       ");
}
