//! Browser bindings for the demo page in `www/`.
//!
//! Three operations: soften a score into a bin distribution, read the CORAL
//! levels of a score back out as a decoded score, and compare two score lists
//! with the rank metrics. Everything returns plain numbers or `Float64Array`s
//! so the page needs no glue beyond the generated module.

use ordinal_mos::labels::{
    coral_targets, decode_coral, decode_expected, gaussian_soften, make_bins, SofteningConfig,
};
use ordinal_mos::metrics::{kendall_tau_b, pearson, spearman};
use wasm_bindgen::prelude::*;

fn js_err(e: ordinal_mos::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Bin centers of `k` equal-width bins over `[lo, hi]`.
#[wasm_bindgen]
pub fn bin_centers(k: usize, lo: f64, hi: f64) -> Result<Vec<f64>, JsError> {
    Ok(make_bins(k, lo, hi).map_err(js_err)?.centers().to_vec())
}

/// Gaussian-softened label of `score`. The last entry is the decoded
/// expectation, so the result has `k + 1` values.
#[wasm_bindgen]
pub fn soften(score: f64, sigma: f64, k: usize, lo: f64, hi: f64) -> Result<Vec<f64>, JsError> {
    let bins = make_bins(k, lo, hi).map_err(js_err)?;
    let cfg = SofteningConfig::new(sigma).map_err(js_err)?;
    let mut out = gaussian_soften(score, &bins, cfg).map_err(js_err)?.probs;
    let decoded = decode_expected(&out, &bins).map_err(js_err)?;
    out.push(decoded);
    Ok(out)
}

/// CORAL indicators `P(Y > k)` of `score` as 0/1 values, `k − 1` of them.
#[wasm_bindgen]
pub fn coral_levels(score: f64, k: usize, lo: f64, hi: f64) -> Result<Vec<f64>, JsError> {
    let bins = make_bins(k, lo, hi).map_err(js_err)?;
    let t = coral_targets(score, &bins).map_err(js_err)?;
    Ok(t.levels.iter().map(|&l| f64::from(l)).collect())
}

/// Score decoded from cumulative probabilities (one per boundary).
#[wasm_bindgen]
pub fn coral_decode(cumprobs: &[f64], lo: f64, hi: f64) -> Result<f64, JsError> {
    let bins = make_bins(cumprobs.len() + 1, lo, hi).map_err(js_err)?;
    Ok(decode_coral(cumprobs, &bins))
}

/// `[pearson, spearman, kendall_tau_b]` of two equal-length lists.
#[wasm_bindgen]
pub fn correlations(x: &[f64], y: &[f64]) -> Result<Vec<f64>, JsError> {
    Ok(vec![
        pearson(x, y).map_err(js_err)?,
        spearman(x, y).map_err(js_err)?,
        kendall_tau_b(x, y).map_err(js_err)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    // JsError can only be built on wasm32, so native tests stay on the Ok path.

    #[test]
    fn soften_appends_decoded_score() {
        let v = soften(3.0, 0.2, 20, 1.0, 5.0).unwrap();
        assert_eq!(v.len(), 21);
        let total: f64 = v[..20].iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((v[20] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn coral_round_trip_lands_in_the_score_bin() {
        let levels = coral_levels(2.33, 20, 1.0, 5.0).unwrap();
        assert_eq!(levels.len(), 19);
        let centers = bin_centers(20, 1.0, 5.0).unwrap();
        let decoded = coral_decode(&levels, 1.0, 5.0).unwrap();
        assert!((decoded - 2.33).abs() <= (centers[1] - centers[0]) / 2.0);
    }

    #[test]
    fn correlations_of_hand_case() {
        let c = correlations(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((c[0] - 0.8).abs() < 1e-12);
        assert!((c[1] - 0.8).abs() < 1e-12);
        assert!((c[2] - 2.0 / 3.0).abs() < 1e-12);
    }
}
