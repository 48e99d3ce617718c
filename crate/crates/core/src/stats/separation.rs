use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{pca_fit_transform, silhouette_score, standardize_columns, PcaModel};
use crate::data::{format_num, Domain, TimeSeries};
use crate::error::{Error, Result};
use crate::features::file_summary_vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub trial_id: String,
    pub domain: Domain,
    pub pc1: f64,
    pub pc2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Separation {
    pub pca: PcaModel,
    pub points: Vec<ScatterPoint>,
    /// Silhouette of the 2-D scores labelled by domain.
    pub silhouette: f64,
}

/// Summary vector per file, standardized per column, projected to two
/// principal components and scored by how well domains separate.
pub fn separation_analysis(series: &[&TimeSeries]) -> Result<Separation> {
    let summaries = series
        .iter()
        .map(|s| file_summary_vector(s).map(|v| v.values.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let z = standardize_columns(&summaries)?;
    let (pca, scores) = pca_fit_transform(&z, 2)?;

    let mut domains: Vec<Domain> = series.iter().map(|s| s.domain()).collect();
    domains.sort();
    domains.dedup();
    let labels: Vec<usize> = series
        .iter()
        .map(|s| domains.iter().position(|&d| d == s.domain()).unwrap_or(0))
        .collect();
    let silhouette = silhouette_score(&scores, &labels)?;

    let points = series
        .iter()
        .zip(&scores)
        .map(|(s, p)| ScatterPoint {
            trial_id: s.trial_id().to_string(),
            domain: s.domain(),
            pc1: p[0],
            pc2: p[1],
        })
        .collect();
    Ok(Separation {
        pca,
        points,
        silhouette,
    })
}

pub fn write_scatter_csv(points: &[ScatterPoint], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "TrialId,Domain,PC1,PC2").map_err(io)?;
    for p in points {
        writeln!(w, "{},{},{},{}", p.trial_id, p.domain, format_num(p.pc1), format_num(p.pc2)).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Minimal standalone SVG scatter, one colour per domain.
pub fn write_scatter_svg(points: &[ScatterPoint], path: &Path) -> Result<()> {
    const SIZE: f64 = 480.0;
    const MARGIN: f64 = 40.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.pc1);
        x1 = x1.max(p.pc1);
        y0 = y0.min(p.pc2);
        y1 = y1.max(p.pc2);
    }
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let sx = (SIZE - 2.0 * MARGIN) / span(x0, x1);
    let sy = (SIZE - 2.0 * MARGIN) / span(y0, y1);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"{}\" font-size=\"12\">PC1</text>\n\
         <text x=\"8\" y=\"{MARGIN}\" font-size=\"12\">PC2</text>\n",
        SIZE - 10.0
    );
    for p in points {
        let colour = match p.domain {
            Domain::Defog => "#1f77b4",
            Domain::Tdcsfog => "#d62728",
            Domain::Notype => "#2ca02c",
        };
        let cx = MARGIN + (p.pc1 - x0) * sx;
        let cy = SIZE - MARGIN - (p.pc2 - y0) * sy;
        svg.push_str(&format!(
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"4\" fill=\"{colour}\" fill-opacity=\"0.7\"><title>{} ({})</title></circle>\n",
            p.trial_id, p.domain
        ));
    }
    for (i, (name, colour)) in [("defog", "#1f77b4"), ("tdcsfog", "#d62728"), ("notype", "#2ca02c")]
        .iter()
        .enumerate()
    {
        let y = 16.0 + 16.0 * i as f64;
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{y}\" r=\"4\" fill=\"{colour}\"/><text x=\"{}\" y=\"{}\" font-size=\"12\">{name}</text>\n",
            SIZE - 90.0,
            SIZE - 80.0,
            y + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
