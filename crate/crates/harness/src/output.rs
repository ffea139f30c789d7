//! CSV and SVG artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::experiment::ErrorRecord;
use crate::summary::CellSummary;
use crate::HarnessError;

pub const RECORD_HEADER: &str = "scenario,n,J,rep,seed,shift_err,pattern_err,criterion,converged,ms";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_parent(path: &Path) -> Result<(), HarnessError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

/// Writes one row per record under [`RECORD_HEADER`]. Floats are written in
/// shortest round-trip form.
pub fn emit_csv(records: &[ErrorRecord], path: &Path) -> Result<(), HarnessError> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_csv(records, file).map_err(csv_err(path))
}

pub fn write_csv<W: std::io::Write>(records: &[ErrorRecord], sink: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record(RECORD_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ErrorRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

/// Per-cell summary table. `bounds` maps `n` to the lower bound on the shift
/// risk, written in the last column when present.
pub fn emit_summary_csv(
    summaries: &[CellSummary],
    bounds: &BTreeMap<usize, f64>,
    path: &Path,
) -> Result<(), HarnessError> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["scenario".to_string(), "n".into(), "J".into(), "count".into(), "converged".into()];
    for m in ["shift", "pattern"] {
        for s in ["min", "q1", "median", "q3", "max", "mean"] {
            header.push(format!("{m}_{s}"));
        }
    }
    header.push("shift_bound".into());
    w.write_record(&header).map_err(csv_err(path))?;
    for c in summaries {
        let mut row = vec![
            c.scenario.to_string(),
            c.n.to_string(),
            c.j.to_string(),
            c.count.to_string(),
            c.converged.to_string(),
        ];
        for s in [&c.shift, &c.pattern] {
            row.extend([s.min, s.q1, s.median, s.q3, s.max, s.mean].iter().map(|v| v.to_string()));
        }
        row.push(bounds.get(&c.n).map(|b| b.to_string()).unwrap_or_default());
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Series colors by rank of `n`: the smallest grid size is gray, the next
/// black, any further ones cycle through a fixed palette.
fn series_color(rank: usize) -> &'static str {
    const PALETTE: [&str; 5] = ["#8c8c8c", "#000000", "#1f77b4", "#d62728", "#2ca02c"];
    PALETTE[rank % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Box plot of one metric: one box per `(n, J)` cell with the box spanning
/// the quartiles, a median bar and whiskers at min/max. `bounds` (per `n`) are
/// drawn as dashed reference lines.
pub fn render_boxplot_svg(
    summaries: &[CellSummary],
    metric: &str,
    bounds: &BTreeMap<usize, f64>,
) -> Result<String, HarnessError> {
    if summaries.is_empty() {
        return Err(HarnessError::EmptyGroup);
    }
    let stats = summaries.iter().map(|c| c.metric(metric).map(|s| (c, *s))).collect::<Result<Vec<_>, _>>()?;
    let mut ns: Vec<usize> = summaries.iter().map(|c| c.n).collect();
    let mut js: Vec<usize> = summaries.iter().map(|c| c.j).collect();
    ns.sort_unstable();
    ns.dedup();
    js.sort_unstable();
    js.dedup();

    let (width, height) = (860.0, 480.0);
    let (left, right, top, bottom) = (90.0, 200.0, 50.0, 60.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let draw_bounds = metric.starts_with("shift") && !bounds.is_empty();
    let mut y_max = stats.iter().map(|(_, s)| s.max).fold(0.0, f64::max);
    if draw_bounds {
        y_max = bounds.values().cloned().fold(y_max, f64::max);
    }
    if !(y_max > 0.0 && y_max.is_finite()) {
        y_max = 1.0;
    }
    y_max *= 1.05;
    let y = |v: f64| top + plot_h * (1.0 - v.clamp(0.0, y_max) / y_max);
    let slot = plot_w / js.len() as f64;
    let box_w = 0.7 * slot / ns.len() as f64;
    let x_center = |ji: usize, ni: usize| left + slot * (ji as f64 + 0.15) + box_w * (ni as f64 + 0.5);

    let title = match metric {
        m if m.starts_with("shift") => "shift error (1/J)‖θ̂ − θ*‖²",
        _ => "pattern error ‖f̂ − f‖²",
    };
    let scenario = summaries[0].scenario;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="25" text-anchor="middle" font-size="15">{} — {}</text>"#,
        left + plot_w / 2.0,
        escape(title),
        scenario
    );
    // axes and ticks
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        top + plot_h,
        left + plot_w
    );
    for i in 0..=5 {
        let v = y_max * i as f64 / 5.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{yy:.2}" x2="{left}" y2="{yy:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{v:.3e}</text><line x1="{left}" y1="{yy:.2}" x2="{}" y2="{yy:.2}" stroke="#e5e5e5"/>"##,
            left - 5.0,
            left - 8.0,
            yy + 4.0,
            left + plot_w
        );
    }
    for (ji, j) in js.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{j}</text>"#,
            left + slot * (ji as f64 + 0.5),
            top + plot_h + 20.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">J (number of curves)</text>"#,
        left + plot_w / 2.0,
        height - 15.0
    );

    for (c, st) in &stats {
        let ni = ns.binary_search(&c.n).unwrap_or(0);
        let ji = js.binary_search(&c.j).unwrap_or(0);
        let color = series_color(ni);
        let xc = x_center(ji, ni);
        let half = 0.4 * box_w;
        let _ = writeln!(s, r#"<g class="box" data-n="{}" data-j="{}">"#, c.n, c.j);
        let _ = writeln!(
            s,
            r#"  <line x1="{xc:.2}" y1="{:.2}" x2="{xc:.2}" y2="{:.2}" stroke="{color}"/>"#,
            y(st.max),
            y(st.min)
        );
        for v in [st.min, st.max] {
            let _ = writeln!(
                s,
                r#"  <line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}"/>"#,
                xc - 0.5 * half,
                y(v),
                xc + 0.5 * half,
                y(v)
            );
        }
        let _ = writeln!(
            s,
            r#"  <rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#,
            xc - half,
            y(st.q3),
            2.0 * half,
            (y(st.q1) - y(st.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"  <line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2.5"/>"#,
            xc - half,
            y(st.median),
            xc + half,
            y(st.median)
        );
        let _ = writeln!(s, "</g>");
    }
    if draw_bounds {
        for (ni, n) in ns.iter().enumerate() {
            if let Some(&b) = bounds.get(n) {
                let _ = writeln!(
                    s,
                    r#"<line class="bound" data-n="{n}" x1="{left}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="{}" stroke-dasharray="6 4"/>"#,
                    y(b),
                    left + plot_w,
                    y(b),
                    series_color(ni)
                );
            }
        }
    }

    // legend
    let lx = left + plot_w + 20.0;
    let mut ly = top + 10.0;
    for (ni, n) in ns.iter().enumerate() {
        let color = series_color(ni);
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{}" width="14" height="14" fill="{color}" fill-opacity="0.35" stroke="{color}"/><text x="{}" y="{}">n = {n}</text>"#,
            ly - 11.0,
            lx + 20.0,
            ly
        );
        ly += 20.0;
    }
    let _ = writeln!(s, r#"<text x="{lx}" y="{}">box: quartiles, bar: median</text>"#, ly + 5.0);
    let _ = writeln!(s, r#"<text x="{lx}" y="{}">whiskers: min / max</text>"#, ly + 22.0);
    if draw_bounds {
        let _ = writeln!(s, r#"<text x="{lx}" y="{}">dashed: lower bound,</text>"#, ly + 39.0);
        let _ = writeln!(s, r#"<text x="{lx}" y="{}">raised-cosine prior</text>"#, ly + 56.0);
        let _ = writeln!(s, r#"<text x="{lx}" y="{}">on the same support</text>"#, ly + 73.0);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_boxplot_svg(
    summaries: &[CellSummary],
    metric: &str,
    bounds: &BTreeMap<usize, f64>,
    path: &Path,
) -> Result<(), HarnessError> {
    let svg = render_boxplot_svg(summaries, metric, bounds)?;
    ensure_parent(path)?;
    fs::write(path, svg).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Scenario;
    use crate::summary::summarize;

    fn record(n: usize, j: usize, rep: usize) -> ErrorRecord {
        let x = (rep as f64 + 1.0) / (n * j) as f64;
        ErrorRecord {
            scenario: Scenario::Sim,
            n,
            j,
            rep,
            seed: u64::MAX - rep as u64,
            shift_error: x * std::f64::consts::PI,
            pattern_error: x / 3.0 + 1e-300,
            criterion: 0.1 + 0.2,
            converged: rep % 2 == 0,
            ms: 0,
        }
    }

    fn grid() -> Vec<ErrorRecord> {
        let mut v = Vec::new();
        for n in [512, 1024] {
            for j in [20, 40, 60, 80, 100] {
                for rep in 0..3 {
                    v.push(record(n, j, rep));
                }
            }
        }
        v
    }

    #[test]
    fn empty_list_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        emit_csv(&[], &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), format!("{RECORD_HEADER}\n"));
        assert!(read_csv(&p).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/records.csv");
        let records = grid();
        emit_csv(&records, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), records.len() + 1);
        assert_eq!(text.lines().next().unwrap(), RECORD_HEADER);
        let back = read_csv(&p).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in back.iter().zip(&records) {
            assert_eq!(a, b);
            assert_eq!(a.shift_error.to_bits(), b.shift_error.to_bits());
            assert_eq!(a.pattern_error.to_bits(), b.pattern_error.to_bits());
        }
    }

    #[test]
    fn io_errors_carry_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_csv(&[], &blocker.join("a.csv")).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
    }

    #[test]
    fn svg_is_well_formed_with_one_box_per_cell() {
        let summaries = summarize(&grid()).unwrap();
        let mut bounds = BTreeMap::new();
        bounds.insert(512, 1e-6);
        bounds.insert(1024, 5e-7);
        for metric in ["shift", "pattern"] {
            let svg = render_boxplot_svg(&summaries, metric, &bounds).unwrap();
            let doc = roxmltree::Document::parse(&svg).unwrap();
            let boxes: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("box")).collect();
            assert_eq!(boxes.len(), 10);
            let colors: std::collections::BTreeSet<_> = boxes
                .iter()
                .flat_map(|b| b.descendants().filter_map(|c| c.attribute("stroke")))
                .collect();
            assert_eq!(colors.len(), 2);
            let gray = boxes.iter().filter(|b| b.attribute("data-n") == Some("512")).all(|b| {
                b.descendants().filter_map(|c| c.attribute("stroke")).all(|c| c == "#8c8c8c")
            });
            assert!(gray);
            assert!(svg.contains("whiskers: min / max"));
        }
        let one = summarize(&[record(512, 20, 0)]).unwrap();
        let svg = render_boxplot_svg(&one, "pattern", &BTreeMap::new()).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("box")).count(), 1);
        assert!(matches!(
            render_boxplot_svg(&one, "bogus", &BTreeMap::new()),
            Err(HarnessError::UnknownMetric(_))
        ));
    }
}
