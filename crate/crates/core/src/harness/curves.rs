use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::read_records;
use crate::error::Result;
use crate::information::Metric;

/// Mean coverage per metric of one world on a common cost grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveSet {
    pub world: String,
    pub grid: Vec<f64>,
    pub series: Vec<(Metric, Vec<f64>)>,
}

/// Previous-value interpolation: coverage of the last point at or before
/// `x`, 0 before the first point.
pub fn step_value(curve: &[(f64, f64)], x: f64) -> f64 {
    let k = curve.partition_point(|p| p.0 <= x);
    if k == 0 {
        0.0
    } else {
        curve[k - 1].1
    }
}

/// Pointwise mean of the step-interpolated curves.
pub fn mean_curve(curves: &[&[(f64, f64)]], grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&x| {
            let sum: f64 = curves.iter().map(|c| step_value(c, x)).sum();
            sum / curves.len().max(1) as f64
        })
        .collect()
}

/// Reads the per-trial artifacts under `out` and writes
/// `curves/<world>.csv` and `curves/<world>.svg`.
pub fn render_curves(
    out: &Path,
    worlds: &[String],
    metrics: &[Metric],
    trials: usize,
    points: usize,
) -> Result<Vec<CurveSet>> {
    let records = read_records(out, worlds, metrics, trials)?;
    let dir = out.join("curves");
    std::fs::create_dir_all(&dir)?;
    let mut sets = Vec::new();
    for w in worlds {
        let of_world: Vec<_> = records.iter().filter(|r| &r.world == w).collect();
        let max_cost = of_world
            .iter()
            .filter_map(|r| r.result.as_ref())
            .map(|t| t.total_path_length)
            .fold(0.0, f64::max);
        let grid: Vec<f64> = (0..points).map(|i| max_cost * i as f64 / (points - 1) as f64).collect();
        let series = metrics
            .iter()
            .map(|&m| {
                let curves: Vec<&[(f64, f64)]> = of_world
                    .iter()
                    .filter(|r| r.metric == m)
                    .filter_map(|r| r.result.as_ref().map(|t| t.coverage_curve.as_slice()))
                    .collect();
                (m, mean_curve(&curves, &grid))
            })
            .collect();
        let set = CurveSet {
            world: w.clone(),
            grid,
            series,
        };
        std::fs::write(dir.join(format!("{w}.csv")), curve_csv(&set))?;
        std::fs::write(dir.join(format!("{w}.svg")), curve_svg(&set))?;
        sets.push(set);
    }
    Ok(sets)
}

fn curve_csv(set: &CurveSet) -> String {
    let mut s = String::from("cost");
    for (m, _) in &set.series {
        write!(s, ",{m}").unwrap();
    }
    s.push('\n');
    for (i, x) in set.grid.iter().enumerate() {
        write!(s, "{x}").unwrap();
        for (_, ys) in &set.series {
            write!(s, ",{}", ys[i]).unwrap();
        }
        s.push('\n');
    }
    s
}

const COLORS: [&str; 7] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
];

fn curve_svg(set: &CurveSet) -> String {
    let (w, h, left, bottom, top, right) = (640.0, 400.0, 60.0, 50.0, 30.0, 110.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let xmax = set.grid.last().copied().filter(|&x| x > 0.0).unwrap_or(1.0);
    let px = |x: f64| left + pw * x / xmax;
    let py = |y: f64| top + ph * (1.0 - y);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{left}" y="18">{}: coverage vs path length</text>"#,
        set.world
    )
    .unwrap();
    writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    )
    .unwrap();
    for k in 0..=4 {
        let y = k as f64 / 4.0;
        writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.2}</text>"#,
            left - 6.0,
            py(y) + 4.0
        )
        .unwrap();
        let x = xmax * k as f64 / 4.0;
        writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{x:.1}</text>"#,
            px(x),
            top + ph + 18.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">path length [m]</text>"#,
        left + pw / 2.0,
        h - 8.0
    )
    .unwrap();
    for (k, (m, ys)) in set.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = String::new();
        let mut prev: Option<f64> = None;
        for (x, y) in set.grid.iter().zip(ys) {
            match prev {
                None => write!(d, "M{:.2} {:.2}", px(*x), py(*y)).unwrap(),
                Some(_) => write!(d, " H{:.2} V{:.2}", px(*x), py(*y)).unwrap(),
            }
            prev = Some(*y);
        }
        writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#).unwrap();
        let ly = top + 14.0 * k as f64 + 6.0;
        writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{m}</text>"#,
            w - right + 10.0,
            w - right + 30.0,
            w - right + 34.0,
            ly + 4.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
