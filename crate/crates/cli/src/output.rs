//! CSV formats owned by the harness (fit results, gait metrics), with
//! readers so every file the CLI writes can be consumed again.

use plg_core::actuator::ElongationModel;
use plg_core::locomotion::GaitMetrics;

pub fn metrics_csv(metrics: &GaitMetrics) -> String {
    format!(
        "mean_velocity_mm_s,stride_per_cycle_mm,body_lengths_per_s\n{:.6},{:.6},{:.6}\n",
        metrics.mean_velocity_mm_s, metrics.stride_per_cycle_mm, metrics.body_lengths_per_s
    )
}

pub fn read_metrics_csv(text: &str) -> Result<GaitMetrics, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty metrics file")?;
    if header != "mean_velocity_mm_s,stride_per_cycle_mm,body_lengths_per_s" {
        return Err(format!("unexpected metrics header {header:?}"));
    }
    let row = lines.next().ok_or("missing metrics row")?;
    let values: Vec<f64> = row
        .split(',')
        .map(|v| v.parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    if values.len() != 3 {
        return Err("expected 3 metric values".to_string());
    }
    Ok(GaitMetrics {
        mean_velocity_mm_s: values[0],
        stride_per_cycle_mm: values[1],
        body_lengths_per_s: values[2],
    })
}

pub fn fit_csv(models: &[ElongationModel]) -> String {
    let mut out = String::from("pressure_bar,thickness_mm,x_sat_mm,amplitude_mm,tau_ms,rmse_mm\n");
    for m in models {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            m.pressure_bar,
            m.wall_thickness_mm,
            m.x_sat_mm,
            m.amplitude_mm,
            m.tau_ms,
            m.fit_rmse_mm
        ));
    }
    out
}

/// Rows of (pressure, thickness, x_sat, amplitude, tau, rmse).
pub fn read_fit_csv(text: &str) -> Result<Vec<[f64; 6]>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty fit file")?;
    if header != "pressure_bar,thickness_mm,x_sat_mm,amplitude_mm,tau_ms,rmse_mm" {
        return Err(format!("unexpected fit header {header:?}"));
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        let row: [f64; 6] = values
            .try_into()
            .map_err(|_| "expected 6 fit values".to_string())?;
        rows.push(row);
    }
    Ok(rows)
}
