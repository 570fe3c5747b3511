use super::UnitVector3;
use crate::error::{Error, Result};

/// Thin a dense vertex set towards the grid: repeatedly drop the vertex whose
/// minimum geodesic distance to the grid is largest (lowest index on ties)
/// until `target` vertices remain. Survivors keep their input order.
pub fn prune_vertices(
    initial: &[UnitVector3],
    grid: &[UnitVector3],
    target: usize,
) -> Result<Vec<UnitVector3>> {
    if target < 4 {
        return Err(Error::arg(format!(
            "pruning target must be at least 4, got {target}"
        )));
    }
    if target > initial.len() {
        return Err(Error::arg(format!(
            "pruning target {target} exceeds the {} initial vertices",
            initial.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::arg("pruning needs a non-empty grid"));
    }
    let dist: Vec<f64> = initial
        .iter()
        .map(|v| {
            grid.iter()
                .map(|g| v.geodesic_distance(g))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut keep = vec![true; initial.len()];
    for _ in 0..initial.len() - target {
        let mut worst: Option<usize> = None;
        for i in (0..initial.len()).filter(|&i| keep[i]) {
            match worst {
                Some(w) if dist[i] <= dist[w] => {}
                _ => worst = Some(i),
            }
        }
        keep[worst.expect("at least one vertex remains")] = false;
    }
    Ok(initial
        .iter()
        .zip(keep)
        .filter_map(|(v, k)| k.then_some(*v))
        .collect())
}
