//! PNG heatmaps and EPI strips, SVG line charts.

use std::fmt::Write as _;
use std::path::Path;

use super::{MetricReport, SweepTable};
use crate::error::{Error, Result};
use crate::lfcore::dataset::write_png;
use crate::lfcore::Image;

const STOPS: [[f64; 3]; 5] = [
    [0.267, 0.005, 0.329],
    [0.231, 0.322, 0.545],
    [0.129, 0.569, 0.553],
    [0.369, 0.788, 0.384],
    [0.993, 0.906, 0.144],
];

/// Viridis-like color for `t` in `[0, 1]`.
pub fn colormap(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    [0, 1, 2].map(|k| a[k] + (b[k] - a[k]) * f)
}

/// Each grid entry becomes a `cell x cell` block; values are scaled to
/// the finite range and `+inf` maps to the top color.
pub fn heatmap(grid: &[Vec<f64>], cell: usize) -> Result<Image> {
    let rows = grid.len();
    let cols = grid.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || grid.iter().any(|r| r.len() != cols) || cell == 0 {
        return Err(Error::Invalid(
            "heatmap needs a non-empty rectangular grid".into(),
        ));
    }
    let finite: Vec<f64> = grid
        .iter()
        .flatten()
        .copied()
        .filter(|x| x.is_finite())
        .collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut img = Image::zeros(rows * cell, cols * cell, 3);
    for (r, row) in grid.iter().enumerate() {
        for (c, &x) in row.iter().enumerate() {
            let t = if !x.is_finite() {
                1.0
            } else if hi > lo {
                (x - lo) / (hi - lo)
            } else {
                0.5
            };
            let rgb = colormap(t);
            for y in r * cell..(r + 1) * cell {
                for xx in c * cell..(c + 1) * cell {
                    for (k, v) in rgb.iter().enumerate() {
                        *img.at_mut(y, xx, k) = *v;
                    }
                }
            }
        }
    }
    Ok(img)
}

pub fn write_heatmap_png(grid: &[Vec<f64>], path: &Path, cell: usize) -> Result<()> {
    write_png(path, &heatmap(grid, cell)?)
}

/// One PSNR heatmap per scene, `heatmap_{scene}.png`.
pub fn write_report_heatmaps(report: &MetricReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    report
        .per_scene
        .iter()
        .map(|s| {
            let p = dir.join(format!("heatmap_{}.png", s.name));
            write_heatmap_png(&s.psnr_grid(), &p, 32)?;
            Ok(p)
        })
        .collect()
}

/// Writes an EPI with every row repeated `row_scale` times.
pub fn write_epi_png(epi: &Image, path: &Path, row_scale: usize) -> Result<()> {
    let s = row_scale.max(1);
    let row = epi.w * epi.c;
    let mut data = Vec::with_capacity(epi.data.len() * s);
    for y in 0..epi.h {
        for _ in 0..s {
            data.extend_from_slice(&epi.data[y * row..(y + 1) * row]);
        }
    }
    write_png(path, &Image::new(epi.h * s, epi.w, epi.c, data)?)
}

/// PSNR against `k_d`, one polyline per model.
pub fn sweep_svg(table: &SweepTable) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const M: f64 = 48.0;
    const COLORS: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
    ];
    let finite: Vec<f64> = table
        .psnr
        .iter()
        .flatten()
        .copied()
        .filter(|x| x.is_finite())
        .collect();
    let mut lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        lo = if lo.is_finite() { lo - 1.0 } else { 0.0 };
        hi = lo + 2.0;
    }
    let kmin = table.k_d.iter().copied().min().unwrap_or(0) as f64;
    let kmax = (table.k_d.iter().copied().max().unwrap_or(1) as f64).max(kmin + 1.0);
    let px = |k: f64| M + (k - kmin) / (kmax - kmin) * (W - 2.0 * M);
    let py = |p: f64| H - M - (p.min(hi) - lo) / (hi - lo) * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{M} {M} V{} H{}" stroke="black" fill="none"/>"#,
        H - M,
        W - M
    );
    for &k in &table.k_d {
        let x = px(k as f64);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{k}</text>"#,
            H - M + 16.0
        );
    }
    for t in 0..=4 {
        let p = lo + (hi - lo) * t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{p:.2}</text>"#,
            M - 4.0,
            py(p) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">baseline multiplier k_d</text>"#,
        W / 2.0,
        H - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{:.1}" transform="rotate(-90 12 {:.1})" text-anchor="middle">PSNR (dB)</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (name, row)) in table.models.iter().zip(&table.psnr).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = table
            .k_d
            .iter()
            .zip(row)
            .map(|(&k, &p)| format!("{:.1},{:.1}", px(k as f64), py(p)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#,
            pts.join(" ")
        );
        let ly = M + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}" text-anchor="end">{name}</text>"#,
            W - M
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_sweep_svg(table: &SweepTable, path: &Path) -> Result<()> {
    std::fs::write(path, sweep_svg(table)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), STOPS[0]);
        assert_eq!(colormap(1.0), STOPS[4]);
        assert_eq!(colormap(-3.0), STOPS[0]);
    }

    #[test]
    fn heatmap_blocks_and_infinity() {
        let img = heatmap(&[vec![1.0, 2.0], vec![f64::INFINITY, 1.5]], 3).unwrap();
        assert_eq!((img.h, img.w, img.c), (6, 6, 3));
        assert_eq!(img.at(0, 0, 0), STOPS[0][0]);
        assert_eq!(img.at(2, 5, 1), STOPS[4][1]);
        assert_eq!(img.at(5, 0, 2), STOPS[4][2]);
        assert!(heatmap(&[vec![1.0], vec![]], 2).is_err());
    }

    #[test]
    fn sweep_svg_has_one_line_per_model() {
        let t = SweepTable {
            models: vec!["a".into(), "b".into()],
            k_d: vec![0, 1, 2],
            disparity_ranges: vec![[0.0, 0.0]; 3],
            psnr: vec![vec![30.0, 29.0, 28.0], vec![31.0, f64::INFINITY, 27.0]],
            ssim: vec![vec![0.9; 3]; 2],
            reports: vec![Vec::new(), Vec::new()],
        };
        let s = sweep_svg(&t);
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
    }
}
