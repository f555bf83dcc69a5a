//! Plot-ready data files built from a sweep's cell sidecars: one tidy CSV
//! per figure family with `k` as the x column, and per-width CAM
//! similarity grids.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sweep::{load_sidecars, summarize, CellSidecar, SummaryRow};

type Column = (&'static str, fn(&SummaryRow) -> Option<f64>);

const FAMILIES: [(&str, &[Column]); 5] = [
    (
        "double_descent",
        &[
            ("train_loss", |r| r.train_loss),
            ("train_error", |r| r.train_error),
            ("test_loss", |r| r.test_loss),
            ("test_error", |r| r.test_error),
            ("test_error_std", |r| r.test_error_std),
        ],
    ),
    (
        "cam",
        &[
            ("cam_sim_input_hidden", |r| r.cam_sim_input_hidden),
            ("cam_sim_hidden_output", |r| r.cam_sim_hidden_output),
            ("train_error", |r| r.train_error),
        ],
    ),
    (
        "richness",
        &[("richness", |r| r.richness), ("test_error", |r| r.test_error)],
    ),
    (
        "knn",
        &[
            ("knn_P", |r| r.knn_p),
            ("knn_P_star", |r| r.knn_p_star),
            ("test_accuracy", |r| r.test_error.map(|e| 1.0 - e)),
        ],
    ),
    (
        "sparsity",
        &[
            ("activation_sparsity", |r| r.activation_sparsity),
            ("weight_sparsity@0.1", |r| r.weight_sparsity_0_1),
            ("weight_sparsity@0.01", |r| r.weight_sparsity_0_01),
            ("ndcg", |r| r.ndcg),
        ],
    ),
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Tidy CSV of one figure family.
pub fn family_csv(summary: &[SummaryRow], columns: &[Column]) -> String {
    let mut out = String::from("k,params");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for row in summary {
        out.push_str(&format!("{},{}", row.k, row.params));
        for (_, get) in columns {
            out.push(',');
            out.push_str(&cell(get(row)));
        }
        out.push('\n');
    }
    out
}

/// Replicate-mean CAM similarity grid for one width: rows and columns are
/// class ids, the lower triangle is blank and the diagonal is 1 for every
/// class with a non-zero CAM.
pub fn heatmap_csv(cells: &[&CellSidecar], pair: fn(&CellSidecar) -> Option<&crate::diagnostics::CamSimilarity>, classes: usize) -> Option<String> {
    let grids: Vec<Vec<Vec<Option<f64>>>> = cells
        .iter()
        .filter_map(|c| pair(c))
        .map(|s| s.upper_triangle(classes))
        .collect();
    if grids.is_empty() {
        return None;
    }
    let mut out = String::from("class");
    for j in 0..classes {
        out.push_str(&format!(",{j}"));
    }
    out.push('\n');
    for i in 0..classes {
        out.push_str(&i.to_string());
        for j in 0..classes {
            out.push(',');
            if j < i {
                continue;
            }
            let vals: Vec<f64> = grids.iter().filter_map(|g| g[i][j]).collect();
            if i == j {
                if !vals.is_empty() {
                    out.push('1');
                }
            } else if !vals.is_empty() {
                out.push_str(&(vals.iter().sum::<f64>() / vals.len() as f64).to_string());
            }
        }
        out.push('\n');
    }
    Some(out)
}

/// Writes the report into `sweep_dir/report` and returns the files written,
/// in a fixed order.
pub fn write_report(sweep_dir: &Path) -> Result<Vec<PathBuf>> {
    let sidecars = load_sidecars(sweep_dir)?;
    if sidecars.is_empty() {
        return Err(Error::Empty(format!("no sweep records under {}", sweep_dir.display())));
    }
    let records: Vec<_> = sidecars.iter().map(|s| s.record.clone()).collect();
    let summary = summarize(&records);
    let out = sweep_dir.join("report");
    let heat = out.join("heatmaps");
    std::fs::create_dir_all(&heat).map_err(|e| Error::io(&heat, e))?;

    let mut written = Vec::new();
    let mut write = |path: PathBuf, text: String| -> Result<()> {
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for (name, columns) in FAMILIES {
        write(out.join(format!("{name}.csv")), family_csv(&summary, columns))?;
    }

    let classes = 10;
    type Pair = fn(&CellSidecar) -> Option<&crate::diagnostics::CamSimilarity>;
    let pairs: [(&str, Pair); 2] = [
        ("input_hidden", |c| c.cam_input_hidden.as_ref()),
        ("hidden_output", |c| c.cam_hidden_output.as_ref()),
    ];
    for row in &summary {
        let cells: Vec<&CellSidecar> = sidecars.iter().filter(|s| s.record.k == row.k && s.record.is_ok()).collect();
        for (name, pair) in pairs {
            if let Some(csv) = heatmap_csv(&cells, pair, classes) {
                write(heat.join(format!("k{}_{name}.csv", row.k)), csv)?;
            }
        }
    }
    Ok(written)
}
