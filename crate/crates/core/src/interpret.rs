//! Cumulative impact and kernel matrices, impact curves, embedding rankings,
//! and their CSV / JSON / SVG exports.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, EnhpModel};
use crate::nn::KernelTape;

fn check_grid(horizon: f64, steps: usize) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be > 0, got {horizon}")));
    }
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("steps must be >= 2, got {steps}")));
    }
    Ok(())
}

/// ∫_0^H K(t) dt by trapezoid on `steps + 1` equally spaced samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub horizon: f64,
    pub steps: usize,
    /// D×D.
    pub matrix: Vec<Vec<f64>>,
}

/// ∫_0^H φ_ij(t) dt for every pair, on the same grid as [`KernelSummary`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactSummary {
    pub horizon: f64,
    pub steps: usize,
    /// M×M; row is the source type, column the target.
    pub matrix: Vec<Vec<f64>>,
}

pub fn cumulative_kernel(model: &EnhpModel, horizon: f64, steps: usize) -> Result<KernelSummary> {
    check_grid(horizon, steps)?;
    let d = model.embed_dim();
    let h = horizon / steps as f64;
    let mut acc = vec![0.0; d * d];
    let mut tape = KernelTape::new(&model.kernel);
    for s in 0..=steps {
        let t = if s == steps { horizon } else { s as f64 * h };
        let w = if s == 0 || s == steps { 0.5 * h } else { h };
        model.kernel.forward_into(t, &mut tape);
        for (a, k) in acc.iter_mut().zip(tape.output()) {
            *a += w * k;
        }
    }
    Ok(KernelSummary {
        horizon,
        steps,
        matrix: acc.chunks(d).map(|r| r.to_vec()).collect(),
    })
}

/// Contracts the cumulative kernel with the effective embeddings, which by
/// linearity equals the trapezoid integral of each impact function.
pub fn cumulative_impact(model: &EnhpModel, horizon: f64, steps: usize) -> Result<ImpactSummary> {
    let kernel = cumulative_kernel(model, horizon, steps)?;
    Ok(ImpactSummary {
        horizon,
        steps,
        matrix: contract(model, &kernel.matrix),
    })
}

/// `w1_iᵀ · A · w2_j` for every pair of types.
pub fn contract(model: &EnhpModel, a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (m, d) = (model.num_types(), model.embed_dim());
    let w1 = model.input_embedding();
    let w2 = model.output_embedding();
    let col = |w: &[f64], k: usize| (0..d).map(|r| w[r * m + k]).collect::<Vec<f64>>();
    (0..m)
        .map(|i| {
            let u = col(&w1, i);
            let left: Vec<f64> = (0..d).map(|b| (0..d).map(|r| u[r] * a[r][b]).sum()).collect();
            (0..m).map(|j| dot(&left, &col(&w2, j))).collect()
        })
        .collect()
}

/// `steps + 1` samples `(t, φ_ij(t))` on `[0, H]`.
pub fn impact_curve(
    model: &EnhpModel,
    i: usize,
    j: usize,
    horizon: f64,
    steps: usize,
) -> Result<Vec<(f64, f64)>> {
    check_grid(horizon, steps)?;
    let h = horizon / steps as f64;
    (0..=steps)
        .map(|s| {
            let t = if s == steps { horizon } else { s as f64 * h };
            Ok((t, model.impact(i, j, t)?))
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(curve: &[(f64, f64)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "phi"])?;
    for (t, v) in curve {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<curve>", e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Loading {
    pub label: String,
    pub value: f64,
}

/// Types ranked by effective loading on each embedding dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTopics {
    pub top_n: usize,
    /// One ranking per dimension.
    pub input: Vec<Vec<Loading>>,
    pub output: Vec<Vec<Loading>>,
}

fn rank(emb: &[f64], m: usize, d: usize, vocab: &[String], top_n: usize) -> Vec<Vec<Loading>> {
    (0..d)
        .map(|r| {
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&a, &b| emb[r * m + b].total_cmp(&emb[r * m + a]).then(a.cmp(&b)));
            idx.into_iter()
                .take(top_n)
                .map(|k| Loading {
                    label: vocab.get(k).cloned().unwrap_or_else(|| k.to_string()),
                    value: emb[r * m + k],
                })
                .collect()
        })
        .collect()
}

pub fn embedding_topics(model: &EnhpModel, vocab: &[String], top_n: usize) -> EmbeddingTopics {
    let (m, d) = (model.num_types(), model.embed_dim());
    EmbeddingTopics {
        top_n,
        input: rank(&model.input_embedding(), m, d, vocab, top_n),
        output: rank(&model.output_embedding(), m, d, vocab, top_n),
    }
}

pub fn write_topics_csv<W: Write>(topics: &EmbeddingTopics, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["embedding", "dimension", "rank", "label", "loading"])?;
    for (name, table) in [("input", &topics.input), ("output", &topics.output)] {
        for (dim, list) in table.iter().enumerate() {
            for (r, l) in list.iter().enumerate() {
                w.write_record([
                    name.to_string(),
                    dim.to_string(),
                    (r + 1).to_string(),
                    l.label.clone(),
                    l.value.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<topics>", e))?;
    Ok(())
}

/// A labeled matrix as exported to CSV and JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl LabeledMatrix {
    pub fn new(values: Vec<Vec<f64>>, row_labels: Vec<String>, col_labels: Vec<String>) -> Result<Self> {
        if values.len() != row_labels.len() || values.iter().any(|r| r.len() != col_labels.len()) {
            return Err(Error::ShapeMismatch {
                name: "labeled matrix".into(),
                expected: vec![row_labels.len(), col_labels.len()],
                found: vec![values.len(), values.first().map_or(0, |r| r.len())],
            });
        }
        Ok(Self {
            row_labels,
            col_labels,
            values,
        })
    }

    /// Header row of column labels; first column holds the row labels.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.col_labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<matrix>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut records = r.records();
        let header = records
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "empty matrix CSV".into(),
            })??;
        let col_labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut row_labels = Vec::new();
        let mut values = Vec::new();
        for (n, rec) in records.enumerate() {
            let rec = rec?;
            row_labels.push(rec.get(0).unwrap_or_default().to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: n + 2,
                        message: format!("{s:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            values.push(row);
        }
        Self::new(values, row_labels, col_labels)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        Self::new(m.values, m.row_labels, m.col_labels)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }
}

const RAMP_LOW: (f64, f64, f64) = (247.0, 251.0, 255.0);
const RAMP_HIGH: (f64, f64, f64) = (8.0, 48.0, 107.0);

/// Linear single-hue ramp from near-white (`#f7fbff`) to dark blue (`#08306b`).
pub fn ramp_color(fraction: f64) -> String {
    let f = if fraction.is_finite() { fraction.clamp(0.0, 1.0) } else { 0.0 };
    let mix = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(RAMP_LOW.0, RAMP_HIGH.0),
        mix(RAMP_LOW.1, RAMP_HIGH.1),
        mix(RAMP_LOW.2, RAMP_HIGH.2)
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Heatmap with one annotated cell per entry and the value range in the
/// footer. The output depends only on the inputs.
pub fn render_heatmap_svg(matrix: &LabeledMatrix, title: &str) -> String {
    const CELL: usize = 64;
    const LEFT: usize = 120;
    const TOP: usize = 70;
    let rows = matrix.values.len();
    let cols = matrix.col_labels.len();
    let (lo, hi) = matrix
        .values
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let width = LEFT + cols * CELL + 20;
    let height = TOP + rows * CELL + 50;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<text x="{}" y="20" font-size="14">{}</text>"#, LEFT, xml_escape(title));
    for (c, label) in matrix.col_labels.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + c * CELL + CELL / 2,
            TOP - 8,
            xml_escape(label)
        );
    }
    for (r, row) in matrix.values.iter().enumerate() {
        let y = TOP + r * CELL;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 8,
            y + CELL / 2 + 4,
            xml_escape(&matrix.row_labels[r])
        );
        for (c, &v) in row.iter().enumerate() {
            let f = if span > 0.0 { (v - lo) / span } else { 0.0 };
            let x = LEFT + c * CELL;
            let text_color = if f > 0.5 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                out,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#ffffff"/>"##,
                ramp_color(f)
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{text_color}">{v:.4}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 4
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}">min {lo:.6}  max {hi:.6}</text>"#,
        LEFT,
        TOP + rows * CELL + 30
    );
    out.push_str("</svg>\n");
    out
}

pub fn save_heatmap_svg(matrix: &LabeledMatrix, title: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_heatmap_svg(matrix, title)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::nn::{softplus_inverse, InputTransform, KernelNet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_model(m: usize, d: usize) -> EnhpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut cfg = ModelConfig::new(m, d);
        cfg.hidden_dim = 8;
        EnhpModel::init(cfg, &mut rng).unwrap()
    }

    #[test]
    fn zero_net_kernel_is_h_ln2() {
        let model = EnhpModel::zeros(ModelConfig::new(2, 2)).unwrap();
        let s = cumulative_kernel(&model, 3.0, 10).unwrap();
        for v in s.matrix.iter().flatten() {
            assert!((v - 3.0 * std::f64::consts::LN_2).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_impact_integrates_exactly() {
        let mut cfg = ModelConfig::new(3, 1);
        cfg.hidden_dim = 2;
        let mut model = EnhpModel::zeros(cfg).unwrap();
        model.w1_raw.fill(softplus_inverse(1.0));
        model.w2_raw.fill(softplus_inverse(1.0));
        model.kernel.out_b[0] = softplus_inverse(0.3);
        let s = cumulative_impact(&model, 10.0, 7).unwrap();
        for v in s.matrix.iter().flatten() {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn contraction_matches_direct_quadrature() {
        let model = random_model(3, 2);
        let (h, q) = (5.0, 200);
        let s = cumulative_impact(&model, h, q).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let curve = impact_curve(&model, i, j, h, q).unwrap();
                let step = h / q as f64;
                let direct: f64 = curve.windows(2).map(|w| 0.5 * step * (w[0].1 + w[1].1)).sum();
                assert!((direct - s.matrix[i][j]).abs() <= 1e-12 * direct.max(1.0));
                assert_eq!(curve[0].1, model.impact(i, j, 0.0).unwrap());
            }
        }
    }

    #[test]
    fn refinement_and_monotone_horizon() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = random_model(2, 3);
        model.kernel = KernelNet::init(3, 16, InputTransform::Log1p, &mut rng);
        let coarse = cumulative_kernel(&model, 10.0, 1000).unwrap();
        let fine = cumulative_kernel(&model, 10.0, 100_000).unwrap();
        for (a, b) in coarse.matrix.iter().flatten().zip(fine.matrix.iter().flatten()) {
            assert!((a - b).abs() / b < 1e-3);
        }
        let short = cumulative_kernel(&model, 2.0, 1000).unwrap();
        let long = cumulative_kernel(&model, 100.0, 1000).unwrap();
        for (a, b) in short.matrix.iter().flatten().zip(long.matrix.iter().flatten()) {
            assert!(b >= a);
        }
    }

    #[test]
    fn topics_rank_descending() {
        let mut cfg = ModelConfig::new(2, 1);
        cfg.hidden_dim = 2;
        let mut model = EnhpModel::zeros(cfg).unwrap();
        model.w1_raw = vec![softplus_inverse(5.0), softplus_inverse(1.0)];
        let vocab = vec!["a".to_string(), "b".to_string()];
        let t = embedding_topics(&model, &vocab, 10);
        assert_eq!(t.input[0][0].label, "a");
        assert_eq!(t.input[0].len(), 2);
        assert!((t.input[0][0].value - 5.0).abs() < 1e-12);
        // equal loadings keep index order
        assert_eq!(t.output[0][0].label, "a");
    }

    #[test]
    fn csv_and_json_round_trip() {
        let m = LabeledMatrix::new(
            vec![vec![0.1, 1.0 / 3.0], vec![2e-17, 12345.678]],
            vec!["x".into(), "y,z".into()],
            vec!["p".into(), "q".into()],
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(LabeledMatrix::read_csv(buf.as_slice()).unwrap(), m);
        assert_eq!(LabeledMatrix::from_json_str(&m.to_json_string().unwrap()).unwrap(), m);
    }

    #[test]
    fn svg_is_deterministic_and_ordered() {
        let m = LabeledMatrix::new(vec![vec![0.5]], vec!["a".into()], vec!["b".into()]).unwrap();
        let svg = render_heatmap_svg(&m, "one");
        assert_eq!(svg, render_heatmap_svg(&m, "one"));
        assert!(svg.contains("0.5000"));
        assert_eq!(svg.matches("<rect").count(), 1);
        assert_eq!(ramp_color(0.0), "#f7fbff");
        assert_eq!(ramp_color(1.0), "#08306b");
    }
}
