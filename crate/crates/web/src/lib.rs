//! WebAssembly bindings for the demo page in `www/`. Inputs and outputs are in Hz and ns so
//! the page never has to think about angular units.

use slowlight::flux::{self, ModulationPoint, SidebandWindow, TransmonSpec};
use slowlight::units::{hz, to_hz, NS};
use slowlight::waveguide::{self, WaveguideSpec};
use slowlight::Result;
use wasm_bindgen::prelude::*;

fn js(e: slowlight::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = roundTripDelay)]
pub fn round_trip_delay_js(
    n_cells: usize,
    hop_j_hz: f64,
    points: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    round_trip_delay(n_cells, hop_j_hz, points).map_err(js)
}

#[wasm_bindgen(js_name = sidebandWeights)]
pub fn sideband_weights_js(
    phi_b: f64,
    phi_ac: f64,
    f_mod_hz: f64,
    orders: i32,
) -> std::result::Result<Vec<f64>, JsError> {
    sideband_weights(phi_b, phi_ac, f_mod_hz, orders).map_err(js)
}

#[wasm_bindgen(js_name = erfEnvelope)]
pub fn erf_envelope_js(
    rise_ns: f64,
    delta: f64,
    xi_max: f64,
    window_ns: f64,
    dt_ns: f64,
) -> std::result::Result<Vec<f64>, JsError> {
    erf_envelope(rise_ns, delta, xi_max, window_ns, dt_ns).map_err(js)
}

/// Round-trip group delay (ns) across the passband, sampled at `points` frequencies strictly
/// inside the band. Returns interleaved `[f_hz, delay_ns, …]`.
pub fn round_trip_delay(n_cells: usize, hop_j_hz: f64, points: usize) -> Result<Vec<f64>> {
    let spec = WaveguideSpec {
        n_cells,
        hop_j: hz(hop_j_hz),
        ..WaveguideSpec::design()
    };
    spec.validate()?;
    let (lo, hi) = spec.passband();
    let mut out = Vec::with_capacity(2 * points);
    for i in 0..points {
        // Stay 2% away from the band edges, where the delay diverges.
        let x = -0.98 + 1.96 * (i as f64 + 0.5) / points as f64;
        let w = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x;
        let tau = 2.0 * n_cells as f64 * waveguide::group_delay(&spec, w)?;
        out.push(to_hz(w));
        out.push(tau / NS);
    }
    Ok(out)
}

/// Sideband weights |ξ_s|² of the emitter's ef transition for orders `-orders..=orders`,
/// flux in units of Φ₀.
pub fn sideband_weights(phi_b: f64, phi_ac: f64, f_mod_hz: f64, orders: i32) -> Result<Vec<f64>> {
    let s = flux::sideband_spectrum(
        &TransmonSpec::emitter(),
        &ModulationPoint::new(phi_b, phi_ac, hz(f_mod_hz)),
        SidebandWindow::default(),
    )?;
    Ok((-orders..=orders).map(|k| s.xi(k).norm_sqr()).collect())
}

/// Erf-shaped coupling envelope ξ(t), all times in ns.
pub fn erf_envelope(
    rise_ns: f64,
    delta: f64,
    xi_max: f64,
    window_ns: f64,
    dt_ns: f64,
) -> Result<Vec<f64>> {
    flux::erf_envelope(rise_ns * NS, delta, xi_max, window_ns * NS, dt_ns * NS).map(|e| e.values)
}
