use serde_json::Value;

use latsep_demo::{allocation_sweep_json, conditional_histograms_json, separation_curve_json};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn curve_rises_with_offset() {
    let v = parse(separation_curve_json(2.0, 0.0, 5, 2000, 1).unwrap());
    let pts = v.as_array().unwrap();
    assert_eq!(pts.len(), 5);
    let first = pts[0]["tv"].as_f64().unwrap();
    let last = pts[4]["tv"].as_f64().unwrap();
    assert!(last > first + 0.2, "{first} → {last}");
    assert!(pts[4]["fd"].as_f64().unwrap() > pts[0]["fd"].as_f64().unwrap());
}

#[test]
fn curve_rejects_bad_steps() {
    assert!(separation_curve_json(1.0, 0.0, 1, 1000, 0).is_err());
    assert!(separation_curve_json(1.0, 0.0, 5, 1_000_000, 0).is_err());
}

#[test]
fn sweep_view_has_three_series() {
    let v = parse(allocation_sweep_json(0.0, 60.0, 400, 2, 3000, 2).unwrap());
    let curve = v["curve"].as_array().unwrap();
    assert_eq!(curve.len(), 3 * 11);
    assert!(v["accuracy_slope"].as_f64().unwrap() > 0.0);
    assert!(v["loss_slope"].as_f64().unwrap() < 0.0);
}

#[test]
fn histograms_normalize() {
    let v = parse(conditional_histograms_json(1.0, 0.0, 1, 20, 2000, 3).unwrap());
    let dims = v["dims"].as_array().unwrap();
    assert_eq!(dims.len(), 4);
    for d in dims {
        for g in ["group_0", "group_1"] {
            let total: f64 = d[g].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        assert_eq!(d["edges"].as_array().unwrap().len(), 21);
    }
    // the offset sits on dimension 1
    let tv = |i: usize| dims[i]["tv"].as_f64().unwrap();
    assert!(tv(1) > tv(3), "{} vs {}", tv(1), tv(3));
    assert!(conditional_histograms_json(1.0, 0.0, 0, 1, 2000, 3).is_err());
}
