//! WebAssembly bindings for the static demo page in `www/`.
//!
//! All operations use the bundled two-parameter problem. Errors surface in
//! JavaScript as thrown strings.

use std::cell::OnceCell;

use mlsmc::estimator::{run_mlsmc, Functional};
use mlsmc::problem::Charge;
use mlsmc::quadrature::posterior_mean_g;
use mlsmc::smc::{sample_rejection, MutationConfig};
use mlsmc::{ForwardModel, ProblemConfig, Seed};
use wasm_bindgen::prelude::*;

const CONFIG: &str = include_str!("../../../configs/k2.json");
/// Largest level the demo will solve on; keeps the page responsive.
const MAX_LEVEL: usize = 10;

thread_local! {
    static MODEL: OnceCell<(ForwardModel, Vec<f64>)> = const { OnceCell::new() };
}

fn to_js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn with_model<T>(f: impl FnOnce(&ForwardModel, &[f64]) -> Result<T, JsValue>) -> Result<T, JsValue> {
    MODEL.with(|cell| {
        if cell.get().is_none() {
            let config: ProblemConfig = serde_json::from_str(CONFIG).map_err(to_js)?;
            let model = config.build().map_err(to_js)?;
            let _ = cell.set((model, config.true_parameter()));
        }
        let (model, u) = cell.get().expect("initialized above");
        f(model, u)
    })
}

fn check_level(level: usize) -> Result<(), JsValue> {
    if level > MAX_LEVEL {
        return Err(JsValue::from_str(&format!("level must be at most {MAX_LEVEL}")));
    }
    Ok(())
}

/// Parameter that generated the synthetic data, `[u1, u2]`.
#[wasm_bindgen]
pub fn true_parameter() -> Result<Vec<f64>, JsValue> {
    with_model(|_, u| Ok(u.to_vec()))
}

/// Pressure at every mesh node (boundary zeros included) for parameter
/// `(u1, u2)` on the level-`level` mesh.
#[wasm_bindgen]
pub fn solve_pressure(u1: f64, u2: f64, level: usize) -> Result<Vec<f64>, JsValue> {
    check_level(level)?;
    with_model(|model, _| {
        let sol = model.operator(level).map_err(to_js)?.solve(&[u1, u2]).map_err(to_js)?;
        let mut p = Vec::with_capacity(sol.coeffs.len() + 2);
        p.push(0.0);
        p.extend_from_slice(&sol.coeffs);
        p.push(0.0);
        Ok(p)
    })
}

/// Unnormalized level-`level` posterior density `exp(-Φ_l)` on a
/// `grid × grid` lattice of cell centres over `[-1, 1]²`, row-major with
/// `u2` varying slowest.
#[wasm_bindgen]
pub fn posterior_density(level: usize, grid: usize) -> Result<Vec<f64>, JsValue> {
    check_level(level)?;
    if !(2..=200).contains(&grid) {
        return Err(JsValue::from_str("grid must be in 2..=200"));
    }
    with_model(|model, _| {
        let at = |i: usize| -1.0 + (2 * i + 1) as f64 / grid as f64;
        let mut out = Vec::with_capacity(grid * grid);
        for j in 0..grid {
            for i in 0..grid {
                let e = model.evaluate(&[at(i), at(j)], level, Charge::Diagnostic).map_err(to_js)?;
                out.push((-e.phi).exp());
            }
        }
        Ok(out)
    })
}

/// Exact draws from the level-`level` posterior by prior rejection,
/// flattened as `[u1, u2, u1, u2, ...]`.
#[wasm_bindgen]
pub fn posterior_samples(level: usize, n: usize, seed: u64) -> Result<Vec<f64>, JsValue> {
    check_level(level)?;
    if n == 0 || n > 5000 {
        return Err(JsValue::from_str("n must be in 1..=5000"));
    }
    with_model(|model, _| {
        let (cloud, _) = sample_rejection(&model.fresh(), level, n, Seed::new(seed)).map_err(to_js)?;
        Ok(cloud.particles.iter().flat_map(|p| p.u.iter().copied()).collect())
    })
}

/// One multilevel estimate of the posterior mean pressure at the midpoint
/// with `N_l = base_n · 2^{L-1-l}`, alongside a quadrature reference.
/// Returns the estimate record as JSON with an added `reference` field.
#[wasm_bindgen]
pub fn run_estimate(level: usize, base_n: usize, seed: u64) -> Result<String, JsValue> {
    check_level(level)?;
    if !(1..=6).contains(&level) || !(10..=4000).contains(&base_n) {
        return Err(JsValue::from_str("need 1 <= L <= 6 and 10 <= base N <= 4000"));
    }
    with_model(|model, _| {
        let sizes: Vec<usize> = (0..level).map(|l| base_n << (level - 1 - l)).collect();
        let est = run_mlsmc(
            &model.fresh(),
            level,
            &sizes,
            MutationConfig::default(),
            &Functional::PointValue,
            Seed::new(seed),
        )
        .map_err(to_js)?;
        let reference = posterior_mean_g(model, level, 32).map_err(to_js)?;
        let mut json: serde_json::Value = serde_json::from_str(&est.to_json_line()).map_err(to_js)?;
        json["reference"] = reference.into();
        Ok(json.to_string())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pressure_has_boundary_zeros_and_node_count() {
        let p = solve_pressure(0.0, 0.0, 0).unwrap();
        assert_eq!(p.len(), 9);
        assert_eq!((p[0], p[8]), (0.0, 0.0));
        assert!(p[4] > 0.0);
    }

    #[test]
    fn density_and_samples_have_requested_shapes() {
        assert_eq!(posterior_density(0, 5).unwrap().len(), 25);
        let s = posterior_samples(0, 10, 3).unwrap();
        assert_eq!(s.len(), 20);
        assert!(s.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn estimate_json_carries_the_reference() {
        let v: serde_json::Value = serde_json::from_str(&run_estimate(2, 50, 1).unwrap()).unwrap();
        assert_eq!(v["L"], 2);
        assert!(v["reference"].as_f64().unwrap() > 0.0);
    }
}
