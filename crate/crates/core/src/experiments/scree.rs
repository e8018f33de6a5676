//! Scree values of `sum_l A_l^2 / n`, an advisory aid for choosing `K`.

use serde::Serialize;

use crate::embedding::{aggregate_squares, spectrum_by_magnitude};
use crate::error::{Result, ScceError};
use crate::model::MultiLayerNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScreeRow {
    /// 1-based rank by magnitude.
    pub index: usize,
    pub eigenvalue: f64,
}

/// The `max_index` eigenvalues of `sum_l A_l^2 / n` largest in magnitude.
pub fn scree_values(net: &MultiLayerNetwork, max_index: usize) -> Result<Vec<ScreeRow>> {
    let n = net.n();
    if max_index == 0 || max_index > n {
        return Err(ScceError::InvalidArgument(format!(
            "max_index = {max_index} must be in 1..={n}"
        )));
    }
    let spectrum = spectrum_by_magnitude(&aggregate_squares(net))?;
    Ok(spectrum
        .into_iter()
        .take(max_index)
        .enumerate()
        .map(|(i, v)| ScreeRow {
            index: i + 1,
            eigenvalue: v / n as f64,
        })
        .collect())
}
