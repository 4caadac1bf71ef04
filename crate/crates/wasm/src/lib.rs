//! Browser bindings for the otdp solver. Each operation takes and returns
//! JSON strings; the `*_json` functions hold the logic and run natively too.

use otdp::cli::InstanceDocument;
use otdp::dp_solver::{convolve_losses, loss_table, ot_exact, plan_descriptor};
use otdp::grid::detect_spanned_grid;
use otdp::knapsack_reduction::{count_dp, count_via_ot, ExactDpOracle, KnapsackInstance};
use otdp::model::{rational, rational_to_f64, render_rational};
use otdp::{ProductDistribution, Rational, TwoPointTarget};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Grid cap for the browser, small enough to keep the page responsive.
pub const DEMO_GRID_CAP: usize = 200_000;
pub const MAX_SAMPLES: u32 = 512;
pub const MAX_ITEMS: usize = 24;

fn load(instance: &str) -> Result<(ProductDistribution, TwoPointTarget), String> {
    let doc = InstanceDocument::from_json(instance).map_err(|e| e.to_string())?;
    if doc.exponent().map_err(|e| e.to_string())? != 2.0 {
        return Err("the demo solves the squared Euclidean cost only (p = 2)".into());
    }
    doc.to_instance().map_err(|e| e.to_string())
}

fn exact_w(mu: &ProductDistribution, target: &TwoPointTarget) -> Result<Rational, String> {
    let v = ot_exact(mu, target, DEMO_GRID_CAP).map_err(|e| e.to_string())?;
    Ok(v.value.as_exact().expect("dp value is exact").clone())
}

#[derive(Serialize)]
struct Curve {
    t: Vec<f64>,
    w: Vec<f64>,
    w_rational: Vec<String>,
    /// Mixing weight of the instance and its value.
    t_instance: f64,
    w_instance: String,
}

/// `W(μ, ν_t)` at `t = i / samples` for `i = 0..=samples`.
pub fn w_curve_json(instance: &str, samples: u32) -> Result<String, String> {
    let (mu, target) = load(instance)?;
    let samples = samples.clamp(1, MAX_SAMPLES);
    let mut curve = Curve {
        t: Vec::new(),
        w: Vec::new(),
        w_rational: Vec::new(),
        t_instance: rational_to_f64(&target.t),
        w_instance: render_rational(&exact_w(&mu, &target)?),
    };
    for i in 0..=samples {
        let t = rational(i64::from(i), i64::from(samples));
        let w = exact_w(&mu, &target.with_t(t.clone()))?;
        curve.t.push(rational_to_f64(&t));
        curve.w.push(rational_to_f64(&w));
        curve.w_rational.push(render_rational(&w));
    }
    Ok(serde_json::to_string(&curve).expect("serializable"))
}

#[derive(Serialize)]
struct LossLaw {
    /// Loss values carrying positive mass, ascending.
    support: Vec<f64>,
    probs: Vec<f64>,
    grid_n: usize,
    minkowski_size: usize,
    /// Plan data, present for 0 < t < 1.
    threshold: Option<f64>,
    threshold_rational: Option<String>,
    fraction: Option<String>,
    value_rational: String,
    value_decimal: f64,
}

/// The law of `ℓ(x) = xᵀ(y1 - y2)` under μ and the threshold of the plan.
pub fn loss_law_json(instance: &str) -> Result<String, String> {
    let (mu, target) = load(instance)?;
    if target.y1 == target.y2 {
        return Err("y1 equals y2, so every loss is zero".into());
    }
    let table = loss_table(&mu, &target);
    let values: Vec<Rational> = table.values().cloned().collect();
    let grid = detect_spanned_grid(&values, DEMO_GRID_CAP).map_err(|e| e.to_string())?;
    let pmf = convolve_losses(&table, &grid, DEMO_GRID_CAP).map_err(|e| e.to_string())?;
    let (support, probs) = pmf
        .iter()
        .filter(|(_, p)| **p != Rational::from_integer(0.into()))
        .map(|(s, p)| (rational_to_f64(&s), rational_to_f64(p)))
        .unzip();
    let plan = plan_descriptor(&mu, &target, DEMO_GRID_CAP).ok();
    let value = exact_w(&mu, &target)?;
    let law = LossLaw {
        support,
        probs,
        grid_n: grid.count,
        minkowski_size: pmf.grid.count,
        threshold: plan.as_ref().map(|d| rational_to_f64(&d.threshold)),
        threshold_rational: plan.as_ref().map(|d| render_rational(&d.threshold)),
        fraction: plan.as_ref().map(|d| render_rational(&d.fraction)),
        value_decimal: rational_to_f64(&value),
        value_rational: render_rational(&value),
    };
    Ok(serde_json::to_string(&law).expect("serializable"))
}

#[derive(Serialize)]
struct ProbeOut {
    index: String,
    slope: f64,
    slope_rational: String,
    feasible: bool,
}

#[derive(Serialize)]
struct KnapsackOut {
    count: String,
    dp_count: String,
    oracle_calls: usize,
    probes: Vec<ProbeOut>,
}

/// Counts knapsack solutions through the transport reduction and reports
/// every slope the bisection looked at.
pub fn knapsack_json(weights: &str, capacity: u64) -> Result<String, String> {
    let weights: Vec<u64> = weights
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("{s:?} is not a nonnegative integer")))
        .collect::<Result<_, _>>()?;
    if weights.len() > MAX_ITEMS {
        return Err(format!("at most {MAX_ITEMS} items"));
    }
    if weights.iter().chain([&capacity]).any(|&v| v > 1 << 40) {
        return Err("weights and capacity must be at most 2^40".into());
    }
    let inst = KnapsackInstance::new(weights, capacity);
    let out = count_via_ot(
        &inst,
        &mut ExactDpOracle {
            grid_cap: DEMO_GRID_CAP,
        },
    )
    .map_err(|e| e.to_string())?;
    let result = KnapsackOut {
        count: out.count.to_string(),
        dp_count: count_dp(&inst).to_string(),
        oracle_calls: out.oracle_calls,
        probes: out
            .probes
            .iter()
            .map(|p| ProbeOut {
                index: p.index.to_string(),
                slope: rational_to_f64(&p.slope),
                slope_rational: render_rational(&p.slope),
                feasible: p.slope <= Rational::from_integer(0.into()),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&result).expect("serializable"))
}

#[wasm_bindgen(js_name = wCurve)]
pub fn w_curve(instance: &str, samples: u32) -> Result<String, JsError> {
    w_curve_json(instance, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = lossLaw)]
pub fn loss_law(instance: &str) -> Result<String, JsError> {
    loss_law_json(instance).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = knapsackCount)]
pub fn knapsack_count(weights: &str, capacity: u64) -> Result<String, JsError> {
    knapsack_json(weights, capacity).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const TWO_ATOM: &str = r#"{"marginals":[{"support":["0","1"],"probs":["1/2","1/2"]}],
        "target":{"y1":["1"],"y2":["2"],"t":"1/2"}}"#;

    fn parse(s: Result<String, String>) -> Value {
        serde_json::from_str(&s.unwrap()).unwrap()
    }

    #[test]
    fn curve_endpoints() {
        let v = parse(w_curve_json(TWO_ATOM, 4));
        let w: Vec<&str> = v["w_rational"].as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect();
        assert_eq!(w, vec!["5/2", "7/4", "1", "3/4", "1/2"]);
        assert_eq!(v["w_instance"], "1");
        assert_eq!(v["t"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn curve_rejects_other_exponents() {
        let doc = TWO_ATOM.replace("\"t\":\"1/2\"}", "\"t\":\"1/2\"},\"p\":4");
        assert!(w_curve_json(&doc, 4).is_err());
        assert!(w_curve_json("not json", 4).is_err());
    }

    #[test]
    fn loss_law_of_two_atom_example() {
        let v = parse(loss_law_json(TWO_ATOM));
        assert_eq!(v["support"], serde_json::json!([-1.0, 0.0]));
        assert_eq!(v["probs"], serde_json::json!([0.5, 0.5]));
        assert_eq!(v["threshold_rational"], "-1");
        assert_eq!(v["fraction"], "0");
        assert_eq!(v["value_rational"], "1");
        let at_zero = parse(loss_law_json(&TWO_ATOM.replace("1/2\"}", "0\"}")));
        assert!(at_zero["threshold"].is_null());
    }

    #[test]
    fn knapsack_probes() {
        let v = parse(knapsack_json("1,2,3", 3));
        assert_eq!(v["count"], "5");
        assert_eq!(v["dp_count"], "5");
        assert!(v["oracle_calls"].as_u64().unwrap() <= 7);
        assert_eq!(v["probes"].as_array().unwrap().len(), 3);
        assert_eq!(parse(knapsack_json("", 0))["count"], "1");
        assert!(knapsack_json("1,x", 3).is_err());
    }
}
