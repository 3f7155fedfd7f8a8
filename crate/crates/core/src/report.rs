//! CSV schemas and the accuracy-versus-size SVG plot.
//!
//! All CSVs are UTF-8, comma separated, LF terminated, with a header row.
//! Reals use Rust's shortest round-trip formatting so reruns are
//! byte-identical.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mlp::EpochMetrics;
use crate::pruning::{AggregateCurve, SweepCurve, SweepPoint};
use crate::synthetic::DemoReport;

pub const METRICS_HEADER: &str = "epoch,train_loss,test_accuracy,sparsity_loss";
pub const SWEEP_HEADER: &str = "percentile,threshold,surviving_params,test_accuracy";
pub const AGGREGATE_HEADER: &str = "bucket_param_count,acc_min,acc_median,acc_max,condition";
pub const DEMO_HEADER: &str = "pair_seed,l1_dense,l1_sparse,l2_dense,l2_sparse,hc_dense,hc_sparse,margin";

pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for m in log {
        writeln!(s, "{},{},{},{}", m.epoch, m.train_loss, m.test_accuracy, m.sparsity_loss).unwrap();
    }
    s
}

pub fn sweep_csv(curve: &SweepCurve) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for p in curve.all_points() {
        writeln!(
            s,
            "{:.1},{},{},{}",
            p.percentile(),
            p.threshold,
            p.surviving_params,
            p.test_accuracy
        )
        .unwrap();
    }
    s
}

/// Rows for one condition; concatenate conditions under a single header.
pub fn aggregate_rows(curve: &AggregateCurve, condition: &str) -> String {
    let mut s = String::new();
    for b in &curve.buckets {
        writeln!(
            s,
            "{:.1},{},{},{},{}",
            b.param_count(),
            b.acc_min,
            b.acc_median,
            b.acc_max,
            condition
        )
        .unwrap();
    }
    s
}

pub fn aggregate_csv<'a>(curves: impl IntoIterator<Item = (&'a str, &'a AggregateCurve)>) -> String {
    let mut s = format!("{AGGREGATE_HEADER}\n");
    for (name, c) in curves {
        s.push_str(&aggregate_rows(c, name));
    }
    s
}

pub fn demo_csv(report: &DemoReport) -> String {
    let mut s = format!("{DEMO_HEADER}\n");
    for r in &report.rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.pair_seed, r.l1_dense, r.l1_sparse, r.l2_dense, r.l2_sparse, r.hc_dense, r.hc_sparse, r.margin
        )
        .unwrap();
    }
    s
}

fn rows<'a>(text: &'a str, header: &str, what: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        other => {
            return Err(Error::InvalidArgument(format!(
                "{what}: expected header {header:?}, found {other:?}"
            )))
        }
    }
    let width = header.split(',').count();
    let fields: Vec<(usize, Vec<&str>)> = lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 2, l.split(',').collect::<Vec<_>>()))
        .collect();
    if let Some((line, f)) = fields.iter().find(|(_, f)| f.len() != width) {
        return Err(Error::InvalidArgument(format!(
            "{what} line {line}: expected {width} fields, found {}",
            f.len()
        )));
    }
    Ok(fields.into_iter())
}

fn field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::InvalidArgument(format!("{what} line {line}: cannot parse {s:?}")))
}

pub fn parse_sweep_csv(text: &str) -> Result<SweepCurve> {
    let mut points = Vec::new();
    for (line, f) in rows(text, SWEEP_HEADER, "sweep csv")? {
        let percentile: f64 = field(f[0], line, "sweep csv")?;
        points.push(SweepPoint {
            tenths: (percentile * 10.0).round() as u32,
            threshold: field(f[1], line, "sweep csv")?,
            surviving_params: field(f[2], line, "sweep csv")?,
            test_accuracy: field(f[3], line, "sweep csv")?,
        });
    }
    if points.first().map(|p| p.tenths) != Some(0) {
        return Err(Error::InvalidArgument("sweep csv: first row must be percentile 0".into()));
    }
    let unpruned = points.remove(0);
    Ok(SweepCurve { unpruned, points })
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<EpochMetrics>> {
    rows(text, METRICS_HEADER, "metrics csv")?
        .map(|(line, f)| {
            Ok(EpochMetrics {
                epoch: field(f[0], line, "metrics csv")?,
                train_loss: field(f[1], line, "metrics csv")?,
                test_accuracy: field(f[2], line, "metrics csv")?,
                sparsity_loss: field(f[3], line, "metrics csv")?,
            })
        })
        .collect()
}

/// One row of an aggregate CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub bucket_param_count: f64,
    pub acc_min: f64,
    pub acc_median: f64,
    pub acc_max: f64,
    pub condition: String,
}

pub fn parse_aggregate_csv(text: &str) -> Result<Vec<AggregateRow>> {
    rows(text, AGGREGATE_HEADER, "aggregate csv")?
        .map(|(line, f)| {
            Ok(AggregateRow {
                bucket_param_count: field(f[0], line, "aggregate csv")?,
                acc_min: field(f[1], line, "aggregate csv")?,
                acc_median: field(f[2], line, "aggregate csv")?,
                acc_max: field(f[3], line, "aggregate csv")?,
                condition: f[4].to_owned(),
            })
        })
        .collect()
}

/// One line-and-band series of the plot.
pub struct PlotSeries<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub curve: &'a AggregateCurve,
}

const PLOT_W: f64 = 820.0;
const PLOT_H: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 60.0;
/// Decades shown on the x axis.
pub const X_DECADES: std::ops::RangeInclusive<i32> = 2..=6;

/// Accuracy versus surviving parameters, log-scale x axis from 10^2 to 10^6.
pub fn accuracy_plot_svg(series: &[PlotSeries<'_>]) -> String {
    let (x0, x1) = (*X_DECADES.start() as f64, *X_DECADES.end() as f64);
    let (y0, y1) = (0.0, 1.0);
    let iw = PLOT_W - MARGIN_L - MARGIN_R;
    let ih = PLOT_H - MARGIN_T - MARGIN_B;
    let sx = |count: f64| MARGIN_L + (count.log10() - x0) / (x1 - x0) * iw;
    let sy = |acc: f64| MARGIN_T + (1.0 - (acc - y0) / (y1 - y0)) * ih;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_W}" height="{PLOT_H}" viewBox="0 0 {PLOT_W} {PLOT_H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{PLOT_W}" height="{PLOT_H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{iw}" height="{ih}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    s.push_str("<g class=\"x-axis\">\n");
    for d in X_DECADES {
        let x = sx(10f64.powi(d));
        writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{MARGIN_T}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">10^{d}</text>"##,
            MARGIN_T + ih,
            MARGIN_T + ih + 18.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">surviving parameters</text>"#,
        MARGIN_L + iw / 2.0,
        PLOT_H - 15.0
    )
    .unwrap();
    s.push_str("</g>\n<g class=\"y-axis\">\n");
    for k in 0..=10 {
        let acc = f64::from(k) / 10.0;
        let y = sy(acc);
        writeln!(
            s,
            r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#eee"/><text x="{:.2}" y="{:.2}" text-anchor="end">{acc:.1}</text>"##,
            MARGIN_L + iw,
            MARGIN_L - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">test accuracy</text>"#,
        MARGIN_T + ih / 2.0,
        MARGIN_T + ih / 2.0
    )
    .unwrap();
    s.push_str("</g>\n");

    let lo = 10f64.powf(x0);
    let hi = 10f64.powf(x1);
    for (k, ser) in series.iter().enumerate() {
        let visible: Vec<_> = ser
            .curve
            .buckets
            .iter()
            .filter(|b| (lo..=hi).contains(&b.param_count()))
            .collect();
        writeln!(s, r#"<g class="condition" id="{}">"#, ser.name.replace('+', "-")).unwrap();
        if !visible.is_empty() {
            let mut band = String::new();
            for b in &visible {
                write!(band, "{:.2},{:.2} ", sx(b.param_count()), sy(b.acc_max)).unwrap();
            }
            for b in visible.iter().rev() {
                write!(band, "{:.2},{:.2} ", sx(b.param_count()), sy(b.acc_min)).unwrap();
            }
            writeln!(
                s,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
                band.trim_end(),
                ser.color
            )
            .unwrap();
        }
        let mut line = String::new();
        for b in &visible {
            write!(line, "{:.2},{:.2} ", sx(b.param_count()), sy(b.acc_median)).unwrap();
        }
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            line.trim_end(),
            ser.color
        )
        .unwrap();
        let ly = MARGIN_T + 20.0 + 20.0 * k as f64;
        let lx = MARGIN_L + iw + 12.0;
        writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="3"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            ser.color,
            lx + 26.0,
            ly + 4.0,
            ser.name
        )
        .unwrap();
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pruning::aggregate;

    fn curve() -> SweepCurve {
        let pt = |tenths, n, acc| SweepPoint {
            tenths,
            threshold: if tenths == 0 { f64::NEG_INFINITY } else { tenths as f64 * 1e-7 },
            surviving_params: n,
            test_accuracy: acc,
        };
        SweepCurve {
            unpruned: pt(0, 266_200, 0.981),
            points: vec![pt(1, 265_934, 0.9811), pt(2, 265_668, 0.98)],
        }
    }

    #[test]
    fn sweep_csv_round_trip_and_schema() {
        let text = sweep_csv(&curve());
        assert!(text.starts_with("percentile,threshold,surviving_params,test_accuracy\n0.0,-inf,266200,0.981\n0.1,"));
        assert!(!text.contains('\r'));
        assert_eq!(parse_sweep_csv(&text).unwrap(), curve());
    }

    #[test]
    fn metrics_round_trip() {
        let log = vec![EpochMetrics { epoch: 1, train_loss: 0.5, test_accuracy: 0.9, sparsity_loss: -12.25 }];
        let text = metrics_csv(&log);
        assert_eq!(text, "epoch,train_loss,test_accuracy,sparsity_loss\n1,0.5,0.9,-12.25\n");
        assert_eq!(parse_metrics_csv(&text).unwrap(), log);
    }

    #[test]
    fn rejects_wrong_header_and_width() {
        assert!(parse_sweep_csv("a,b\n").is_err());
        assert!(parse_metrics_csv("epoch,train_loss,test_accuracy,sparsity_loss\n1,2\n").is_err());
    }

    #[test]
    fn aggregate_rows_carry_condition() {
        let agg = aggregate(&[curve()]);
        let text = aggregate_csv([("sparse+wd", &agg)]);
        let rows = parse_aggregate_csv(&text).unwrap();
        assert_eq!(rows.len(), agg.buckets.len());
        assert!(rows.iter().all(|r| r.condition == "sparse+wd" && r.acc_min == r.acc_max));
    }

    #[test]
    fn svg_structure() {
        let agg = aggregate(&[curve()]);
        let series: Vec<PlotSeries> = ["a", "b", "c", "d"]
            .iter()
            .map(|n| PlotSeries { name: n, color: "red", curve: &agg })
            .collect();
        let svg = accuracy_plot_svg(&series);
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches("<g class=\"condition\"").count(), 4);
        for d in 2..=6 {
            assert!(svg.contains(&format!(">10^{d}</text>")));
        }
        assert!(!svg.contains(">10^1<") && !svg.contains(">10^7<"));
    }
}
