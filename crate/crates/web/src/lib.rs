//! Browser bindings for the demo page in `www/`. Each export returns a JSON
//! string; the plain functions underneath are what the native tests call.

use serde_json::{json, Value};
use tanbound::bound::{self, BoundInstance};
use tanbound::field::AnalyzeOptions;
use tanbound::polytope::Polytope;
use tanbound::relax::{self, Ansatz, RelaxConfig};
use tanbound::sphergeo::{self, UnitVec};
use wasm_bindgen::prelude::*;

fn boxed(lx: f64, ly: f64, lz: f64) -> Result<Polytope, String> {
    Polytope::cuboid(lx, ly, lz).map_err(|e| e.to_string())
}

/// Bound for trapped areas on the corners of an `lx × ly × lz` box. The mean
/// is subtracted first so any slider setting is admissible.
pub fn box_bound_json(lx: f64, ly: f64, lz: f64, omega: &[f64]) -> Result<Value, String> {
    let p = boxed(lx, ly, lz)?;
    if omega.len() != p.num_vertices() {
        return Err(format!("need {} trapped areas, got {}", p.num_vertices(), omega.len()));
    }
    let mean = omega.iter().sum::<f64>() / omega.len() as f64;
    let balanced: Vec<f64> = omega.iter().map(|w| w - mean).collect();
    let inst = BoundInstance::from_polytope(&p, balanced.clone()).map_err(|e| e.to_string())?;
    let r = bound::bound_for_instance(&inst).map_err(|e| e.to_string())?;
    Ok(json!({
        "omega": balanced,
        "shift": mean,
        "vertices": p.vertices().iter().map(|v| [v.x, v.y, v.z]).collect::<Vec<_>>(),
        "bound": r.value,
        "xi": r.xi,
        "plan": r.plan,
        "gap": r.gap,
    }))
}

fn unit(xs: &[f64]) -> Result<UnitVec, String> {
    UnitVec::from_xyz(xs[0], xs[1], xs[2]).map_err(|e| e.to_string())
}

/// Signed area of the triangle with corners `abc[0..3]`, `abc[3..6]`,
/// `abc[6..9]`, and whether it covers `s`.
pub fn triangle_json(abc: &[f64], s: &[f64]) -> Result<Value, String> {
    if abc.len() != 9 || s.len() != 3 {
        return Err("expected nine corner coordinates and three for s".into());
    }
    let (a, b, c, s) = (unit(&abc[0..3])?, unit(&abc[3..6])?, unit(&abc[6..9])?, unit(s)?);
    let area = sphergeo::oriented_area(&a, &b, &c).map_err(|e| e.to_string())?;
    let sigma = sphergeo::sigma(&a, &b, &c, &s).map_err(|e| e.to_string())?;
    Ok(json!({ "area": area, "fraction": area / (4.0 * std::f64::consts::PI), "sigma": sigma }))
}

/// Relax a seeded field on a box and return the energy trace, the sandwich
/// check and the field on the middle z-slice.
pub fn relax_json(lx: f64, ly: f64, lz: f64, ansatz: &str, cells: usize, max_iter: usize) -> Result<Value, String> {
    let p = boxed(lx, ly, lz)?;
    let ansatz: Ansatz = ansatz.parse().map_err(|e: relax::RelaxError| e.to_string())?;
    let seed = relax::seed_field(&p, &ansatz, cells.clamp(6, 24)).map_err(|e| e.to_string())?;
    let cfg = RelaxConfig { max_iter, ..Default::default() };
    let out = relax::relax(&seed, &p, &cfg).map_err(|e| e.to_string())?;
    let sandwich = relax::sandwich(&p, &seed, &out.field, &AnalyzeOptions::default()).map_err(|e| e.to_string())?;
    let g = out.field.grid();
    let k = g.dims[2] / 2;
    let slice: Vec<[f64; 3]> = (0..g.dims[1])
        .flat_map(|j| (0..g.dims[0]).map(move |i| (i, j)))
        .map(|(i, j)| {
            let n = out.field.values()[g.index(i, j, k)];
            [n.x, n.y, n.z]
        })
        .collect();
    Ok(json!({
        "trace": out.trace.iter().map(|r| [r.iter as f64, r.energy, r.residual]).collect::<Vec<_>>(),
        "stop": out.stop,
        "halvings": out.halvings,
        "sandwich": sandwich,
        "slice": { "nx": g.dims[0], "ny": g.dims[1], "z": g.point(g.index(0, 0, k)).z, "extent": [lx, ly], "n": slice },
    }))
}

fn export(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn box_bound(lx: f64, ly: f64, lz: f64, omega: Vec<f64>) -> Result<String, JsError> {
    export(box_bound_json(lx, ly, lz, &omega))
}

#[wasm_bindgen]
pub fn spherical_triangle(abc: Vec<f64>, s: Vec<f64>) -> Result<String, JsError> {
    export(triangle_json(&abc, &s))
}

#[wasm_bindgen]
pub fn relax_box(lx: f64, ly: f64, lz: f64, ansatz: &str, cells: usize, max_iter: usize) -> Result<String, JsError> {
    export(relax_json(lx, ly, lz, ansatz, cells, max_iter))
}
