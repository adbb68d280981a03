//! Sliding-window dataset construction and on/off status derivation.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::series::AlignedTable;

/// Window geometry: input length `T`, context margin `w` on each side, step
/// `s`, and the ordered set of target appliances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSpec {
    pub input_len: usize,
    pub margin: usize,
    pub step: usize,
    pub appliance_order: Vec<String>,
}

impl WindowSpec {
    pub fn new(
        input_len: usize,
        output_len: usize,
        step: usize,
        appliance_order: Vec<String>,
    ) -> Result<Self> {
        if output_len == 0 || input_len <= output_len {
            return Err(Error::InvalidConfig(format!(
                "input length {input_len} must exceed output length {output_len}"
            )));
        }
        if (input_len - output_len) % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "input length {input_len} minus output length {output_len} must be even"
            )));
        }
        if step == 0 {
            return Err(Error::NonPositive {
                what: "window step",
                value: 0.0,
            });
        }
        if appliance_order.is_empty() {
            return Err(Error::InvalidConfig("appliance order is empty".into()));
        }
        Ok(Self {
            input_len,
            margin: (input_len - output_len) / 2,
            step,
            appliance_order,
        })
    }

    pub fn output_len(&self) -> usize {
        self.input_len - 2 * self.margin
    }

    pub fn n_appliances(&self) -> usize {
        self.appliance_order.len()
    }

    /// Number of windows a table of `table_len` rows yields.
    pub fn n_windows(&self, table_len: usize) -> usize {
        if table_len < self.input_len {
            0
        } else {
            (table_len - self.input_len) / self.step + 1
        }
    }
}

/// Per-appliance on-power thresholds in raw watts. Thresholds are divided by
/// the table's normalization constant before being compared to stored values.
#[derive(Debug, Clone)]
pub struct StatusRule {
    thresholds_w: BTreeMap<String, f64>,
    default_w: f64,
}

impl Default for StatusRule {
    fn default() -> Self {
        Self {
            thresholds_w: BTreeMap::new(),
            default_w: 15.0,
        }
    }
}

impl StatusRule {
    pub fn new(default_w: f64) -> Result<Self> {
        if default_w < 0.0 {
            return Err(Error::NonPositive {
                what: "status threshold",
                value: default_w,
            });
        }
        Ok(Self {
            thresholds_w: BTreeMap::new(),
            default_w,
        })
    }

    pub fn with_threshold(mut self, appliance_id: impl Into<String>, watts: f64) -> Self {
        self.thresholds_w.insert(appliance_id.into(), watts);
        self
    }

    /// Threshold in raw watts for the given appliance.
    pub fn threshold_w(&self, appliance_id: &str) -> f64 {
        self.thresholds_w
            .get(appliance_id)
            .copied()
            .unwrap_or(self.default_w)
    }
}

/// One training instance. `x` spans the full input window; `y`/`y_c` cover
/// the centered output span; `y_full` keeps the appliance signals over the
/// whole input span so augmentation can subtract them exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Array1<f64>,
    pub y: Array2<f64>,
    pub y_c: Array2<f64>,
    pub y_full: Array2<f64>,
    pub t0: usize,
}

/// `1.0` wherever the signal strictly exceeds the threshold.
pub fn derive_status(row: &[f64], threshold: f64) -> Vec<f64> {
    row.iter()
        .map(|&v| if v > threshold { 1.0 } else { 0.0 })
        .collect()
}

/// Build the ordered sliding-window dataset from an aligned table. Windows
/// start at multiples of the step; targets are taken from the centered
/// output span; status targets come from [`derive_status`].
pub fn build_windows(
    table: &AlignedTable,
    spec: &WindowSpec,
    rule: &StatusRule,
) -> Result<Vec<Sample>> {
    let len = table.len();
    if len < spec.input_len {
        return Err(Error::TableTooShort {
            len,
            need: spec.input_len,
        });
    }
    let n_app = spec.n_appliances();
    let out_len = spec.output_len();
    let t_len = spec.input_len;
    let w = spec.margin;

    let mut columns = Vec::with_capacity(n_app);
    let mut thresholds = Vec::with_capacity(n_app);
    for id in &spec.appliance_order {
        columns.push(table.appliance(id)?);
        thresholds.push(rule.threshold_w(id) / table.norm_constant);
    }

    let n = spec.n_windows(len);
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t0 = k * spec.step;
        let x = Array1::from_iter(table.aggregate[t0..t0 + t_len].iter().copied());
        let mut y = Array2::zeros((n_app, out_len));
        let mut y_c = Array2::zeros((n_app, out_len));
        let mut y_full = Array2::zeros((n_app, t_len));
        for (i, col) in columns.iter().enumerate() {
            let full = &col[t0..t0 + t_len];
            y_full
                .row_mut(i)
                .iter_mut()
                .zip(full)
                .for_each(|(dst, src)| *dst = *src);
            let output = &full[w..t_len - w];
            y.row_mut(i)
                .iter_mut()
                .zip(output)
                .for_each(|(dst, src)| *dst = *src);
            let status = derive_status(output, thresholds[i]);
            y_c.row_mut(i)
                .iter_mut()
                .zip(&status)
                .for_each(|(dst, src)| *dst = *src);
        }
        samples.push(Sample {
            x,
            y,
            y_c,
            y_full,
            t0,
        });
    }
    Ok(samples)
}
